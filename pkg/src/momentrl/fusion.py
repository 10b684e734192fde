"""The multi-agent layer: trusted IoU scoring, competition, and conflict.

One fusion network, shared by every agent so the scores are comparable,
encodes an agent's per-step evidence / predicted-IoU / boundary streams with
a GRU and regresses how much the agent's final interval can be trusted. The
agent with the highest trusted IoU wins the competition. Separately, the
largest pairwise L1 disagreement between final intervals (eta) flags
out-of-scope queries: no ground truth ever pulled the agents together on
those, so they scatter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from momentrl.agents import AgentTrace
from momentrl.autodiff import engine as eng
from momentrl.autodiff.engine import Act, Var
from momentrl.autodiff.store import StoreView, add_dense, add_gru, gru_params
from momentrl.config import ModelConfig
from momentrl.timeline import Interval, Verdict, eta as max_conflict, tiou


@dataclass
class FusionInput:
    """One agent's streams as the fusion network sees them."""

    evidence_seq: Var
    p_iou_seq: Var
    boundary_seq: np.ndarray
    final: Interval


@dataclass(frozen=True)
class TrustedIoU:
    u: float


@dataclass(frozen=True)
class OosDecision:
    eta: float
    threshold: float
    verdict: Verdict


@dataclass(frozen=True)
class ThresholdCalibration:
    h: float
    score: float
    degenerate: bool = False


def register_fusion_params(view: StoreView, mcfg: ModelConfig) -> None:
    from momentrl.timeline import N_JOINT_CLASSES

    add_dense(view, "ffn_evi", mcfg.fusion_evi_dim, N_JOINT_CLASSES)
    add_dense(view, "ffn_iou", mcfg.fusion_iou_dim, 1)
    add_dense(view, "ffn_loc", mcfg.fusion_loc_dim, 2)
    seq_dim = mcfg.fusion_evi_dim + mcfg.fusion_iou_dim + mcfg.fusion_loc_dim
    add_gru(view, "gru", mcfg.fusion_hidden, seq_dim)
    add_dense(view, "tr", 1, mcfg.fusion_hidden + mcfg.fusion_loc_dim)


def fusion_input_from_trace(
    trace: AgentTrace, detach: bool = True, zero_evidence: bool = False
) -> FusionInput:
    """Extract the fusion streams from a rollout.

    ``detach`` cuts the graph so the trust loss trains only the fusion
    network; ``zero_evidence`` blanks the evidence stream (ablation).
    """
    ev = trace.evi_seq.detach() if detach else trace.evi_seq
    if zero_evidence:
        ev = eng.const(np.zeros_like(ev.data))
    pi = trace.p_iou_seq.detach() if detach else trace.p_iou_seq
    bounds = np.array([[r.start, r.end] for r in trace.regions])
    return FusionInput(evidence_seq=ev, p_iou_seq=pi, boundary_seq=bounds, final=trace.final)


def encode_trace(inp: FusionInput, view: StoreView, mcfg: ModelConfig) -> Var:
    """Last hidden state of the fusion GRU over the encoded streams."""
    t_steps = inp.boundary_seq.shape[0]
    if inp.evidence_seq.data.shape[0] != t_steps or inp.p_iou_seq.data.shape[0] != t_steps:
        raise ValueError("fusion streams disagree on the number of steps")
    e = eng.dense_forward(inp.evidence_seq, view["ffn_evi.w"], view["ffn_evi.b"], Act.RELU)
    i = eng.dense_forward(inp.p_iou_seq, view["ffn_iou.w"], view["ffn_iou.b"], Act.RELU)
    b = eng.dense_forward(eng.const(inp.boundary_seq), view["ffn_loc.w"], view["ffn_loc.b"], Act.RELU)
    seq = eng.concat_cols([e, i, b])
    params = gru_params(view, "gru")
    h = eng.const(np.zeros(mcfg.fusion_hidden))
    for t in range(t_steps):
        h = eng.gru_step(h, eng.row(seq, t), params)
    return h


def trusted_iou(theta_t: Var, final: Interval, view: StoreView) -> Var:
    """Squashed trust score from the trace encoding and the final interval.

    The final boundary pair goes through the same dense encoder as the
    per-step boundary stream.
    """
    loc = eng.const(np.array([final.start, final.end]))
    lf = eng.dense_forward(loc, view["ffn_loc.w"], view["ffn_loc.b"], Act.RELU)
    u = eng.dense_forward(eng.concat([theta_t, lf]), view["tr.w"], view["tr.b"], Act.SIGMOID)
    return eng.pick(u, 0)


def score_trace(
    trace: AgentTrace,
    view: StoreView,
    mcfg: ModelConfig,
    detach: bool = True,
    zero_evidence: bool = False,
) -> Var:
    inp = fusion_input_from_trace(trace, detach=detach, zero_evidence=zero_evidence)
    theta = encode_trace(inp, view, mcfg)
    return trusted_iou(theta, inp.final, view)


def trust_loss(u: Var, final: Interval, gt: Interval | None) -> Var:
    """Squared error between the trust score and the real final IoU."""
    if gt is None:
        raise ValueError("trust loss needs a ground-truth interval")
    return eng.square(eng.sub(u, eng.const(tiou(final, gt))))


def pick_winner(u_values: Sequence[float]) -> int:
    """Argmax with ties broken toward the lowest index."""
    if len(u_values) == 0:
        raise ValueError("cannot pick a winner from no scores")
    return int(np.argmax(u_values))


def select_winner(
    traces: Sequence[AgentTrace],
    view: StoreView,
    mcfg: ModelConfig,
    zero_evidence: bool = False,
) -> tuple[int, Interval, list[float]]:
    """Score every trace with the shared fusion network and return the
    winning index, its final interval, and all scores."""
    if not traces:
        raise ValueError("cannot select a winner from no traces")
    scores = [
        float(score_trace(tr, view, mcfg, detach=True, zero_evidence=zero_evidence).data)
        for tr in traces
    ]
    idx = pick_winner(scores)
    return idx, traces[idx].final, scores


def detect_oos(finals: Sequence[Interval], h: float) -> OosDecision:
    """Flag the episode as out-of-scope when the worst pairwise disagreement
    exceeds the threshold (strictly)."""
    e = max_conflict(finals)
    return OosDecision(eta=e, threshold=h, verdict=Verdict.OOS if e > h else Verdict.MATCH)


def _classifier_score(etas: np.ndarray, labels: np.ndarray, h: float, objective: str) -> float:
    pred = etas > h
    if objective == "accuracy":
        return float((pred == labels).mean())
    tp = float(np.sum(pred & labels))
    fp = float(np.sum(pred & ~labels))
    fn = float(np.sum(~pred & labels))
    denom = 2.0 * tp + fp + fn
    return 0.0 if denom == 0.0 else 2.0 * tp / denom


def calibrate_threshold(
    etas: Sequence[float], oos_labels: Sequence[bool], objective: str = "f1"
) -> ThresholdCalibration:
    """Sweep the midpoints between sorted observed eta values and keep the
    best-scoring threshold (ties go to the smaller h).

    With a single distinct eta the sweep is degenerate: the threshold is set
    to that value (everything reads as a match) and flagged.
    """
    if objective not in ("f1", "accuracy"):
        raise ValueError(f"objective must be 'f1' or 'accuracy', got {objective!r}")
    etas_arr = np.asarray(etas, dtype=np.float64)
    labels = np.asarray(oos_labels, dtype=bool)
    if etas_arr.size != labels.size or etas_arr.size == 0:
        raise ValueError("etas and labels must be nonempty and aligned")
    if labels.all() or (~labels).all():
        raise ValueError("calibration needs both matched and out-of-scope examples")
    uniq = np.unique(etas_arr)
    if uniq.size == 1:
        h = float(uniq[0])
        return ThresholdCalibration(
            h=h, score=_classifier_score(etas_arr, labels, h, objective), degenerate=True
        )
    midpoints = (uniq[:-1] + uniq[1:]) / 2.0
    best_h, best_score = None, -1.0
    for h in midpoints:
        score = _classifier_score(etas_arr, labels, float(h), objective)
        if score > best_score:
            best_h, best_score = float(h), score
    return ThresholdCalibration(h=best_h, score=best_score)
