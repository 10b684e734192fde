"""Boundary-map rendering: agent trajectories on the (start, end) unit square.

Each agent's per-step output interval is one point (x = start, y = end); the
polyline through them is the agent's route. Only the upper-left half
(end >= start) holds well-formed intervals, so it is shaded. The legend
reports the dispersion of the final points — the largest pairwise Manhattan
distance, i.e. the same eta the OOS detector thresholds.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from momentrl.timeline import Interval, eta as max_conflict

_SIZE = 520
_MARGIN = 64
_STYLES = (
    ("#1f77b4", None),
    ("#d62728", "7 4"),
    ("#2ca02c", "2 4"),
    ("#9467bd", "10 3 2 3"),
    ("#8c564b", "1 3"),
)


def _sx(x: float) -> float:
    return _MARGIN + x * _SIZE


def _sy(y: float) -> float:
    # SVG y grows downward; the end axis grows upward
    return _MARGIN + (1.0 - y) * _SIZE


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _star(cx: float, cy: float, r: float) -> str:
    import math

    pts = []
    for i in range(10):
        rad = r if i % 2 == 0 else r * 0.4
        ang = -math.pi / 2 + i * math.pi / 5
        pts.append(f"{cx + rad * math.cos(ang):.2f},{cy + rad * math.sin(ang):.2f}")
    return " ".join(pts)


def render_boundary_map(trace_docs: list[dict], gt: Interval | None = None) -> str:
    """SVG markup for a set of trace dicts ({agent, steps:[{output...}], final}).

    Accepts the trace-dump schema; ground truth, when given, is drawn as a
    star marker.
    """
    total = _SIZE + 2 * _MARGIN
    parts: list[str] = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" '
        f'viewBox="0 0 {total} {total}" font-family="sans-serif" font-size="12">'
    )
    parts.append(f'<rect width="{total}" height="{total}" fill="white"/>')
    # feasible half: end >= start
    tri = f"{_sx(0):.1f},{_sy(0):.1f} {_sx(0):.1f},{_sy(1):.1f} {_sx(1):.1f},{_sy(1):.1f}"
    parts.append(f'<polygon points="{tri}" fill="#eef3f8"/>')
    parts.append(
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_SIZE}" height="{_SIZE}" '
        f'fill="none" stroke="#444" stroke-width="1"/>'
    )
    for i in range(6):
        v = i / 5
        parts.append(
            f'<line x1="{_sx(v):.1f}" y1="{_sy(0):.1f}" x2="{_sx(v):.1f}" y2="{_sy(0) + 5:.1f}" stroke="#444"/>'
        )
        parts.append(
            f'<text x="{_sx(v):.1f}" y="{_sy(0) + 20:.1f}" text-anchor="middle">{_fmt(v)}</text>'
        )
        parts.append(
            f'<line x1="{_sx(0):.1f}" y1="{_sy(v):.1f}" x2="{_sx(0) - 5:.1f}" y2="{_sy(v):.1f}" stroke="#444"/>'
        )
        parts.append(
            f'<text x="{_sx(0) - 9:.1f}" y="{_sy(v) + 4:.1f}" text-anchor="end">{_fmt(v)}</text>'
        )
    parts.append(
        f'<text x="{_sx(0.5):.1f}" y="{_sy(0) + 42:.1f}" text-anchor="middle">start boundary</text>'
    )
    parts.append(
        f'<text x="{_sx(0) - 44:.1f}" y="{_sy(0.5):.1f}" text-anchor="middle" '
        f'transform="rotate(-90 {_sx(0) - 44:.1f} {_sy(0.5):.1f})">end boundary</text>'
    )

    finals: list[Interval] = []
    for i, doc in enumerate(trace_docs):
        color, dash = _STYLES[i % len(_STYLES)]
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        pts = [(float(s["output"][0]), float(s["output"][1])) for s in doc["steps"]]
        path = " ".join(f"{_sx(x):.2f},{_sy(y):.2f}" for x, y in pts)
        parts.append(
            f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.6"{dash_attr}/>'
        )
        for t, (x, y) in enumerate(pts):
            parts.append(f'<circle cx="{_sx(x):.2f}" cy="{_sy(y):.2f}" r="3" fill="{color}"/>')
            parts.append(
                f'<text x="{_sx(x) + 5:.2f}" y="{_sy(y) - 5:.2f}" fill="{color}">{t}</text>'
            )
        fx, fy = float(doc["final"][0]), float(doc["final"][1])
        finals.append(Interval(fx, fy))
        parts.append(
            f'<circle cx="{_sx(fx):.2f}" cy="{_sy(fy):.2f}" r="6" fill="none" '
            f'stroke="{color}" stroke-width="2"/>'
        )

    if gt is not None:
        parts.append(
            f'<polygon points="{_star(_sx(gt.start), _sy(gt.end), 11)}" '
            f'fill="#ffb000" stroke="#7a5200" stroke-width="1"/>'
        )

    # legend
    lx, ly = _MARGIN + 10, _MARGIN + 16
    for i, doc in enumerate(trace_docs):
        color, dash = _STYLES[i % len(_STYLES)]
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        parts.append(
            f'<line x1="{lx}" y1="{ly + 16 * i}" x2="{lx + 26}" y2="{ly + 16 * i}" '
            f'stroke="{color}" stroke-width="2"{dash_attr}/>'
        )
        parts.append(
            f'<text x="{lx + 32}" y="{ly + 16 * i + 4}">{escape(str(doc["agent"]))}</text>'
        )
    n = len(trace_docs)
    if gt is not None:
        parts.append(
            f'<polygon points="{_star(lx + 13, ly + 16 * n, 7)}" fill="#ffb000" '
            f'stroke="#7a5200" stroke-width="1"/>'
        )
        parts.append(f'<text x="{lx + 32}" y="{ly + 16 * n + 4}">ground truth</text>')
        n += 1
    if len(finals) >= 2:
        disp = max_conflict(finals)
        parts.append(
            f'<text x="{lx}" y="{ly + 16 * n + 4}">final dispersion (max pairwise L1): '
            f"{disp:.3f}</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def save_boundary_map(path: str | Path, trace_docs: list[dict], gt: Interval | None = None) -> None:
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    tmp.write_text(render_boundary_map(trace_docs, gt))
    tmp.replace(path)
