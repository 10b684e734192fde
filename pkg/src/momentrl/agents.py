"""The three localization agents.

* scanner — watches a fixed-width window slide left to right one step per
  tick and may pin the output start/end to one of six offsets inside the
  current window (or hold). The window path never depends on actions.
* mover — starts from the whole timeline and shifts each boundary by a
  small or large amount per step, observing the frames inside its current
  interval.
* dark_mover — the same mover, but it observes the frames *outside* its
  current interval instead.

Each agent owns its parameters outright; nothing is shared between agents,
which is what makes their disagreement informative downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from momentrl.autodiff import engine as eng
from momentrl.autodiff.engine import Act, Var
from momentrl.autodiff.store import StoreView, add_dense, add_gru, gru_params
from momentrl.config import RunConfig
from momentrl.evidential import Evidence
from momentrl.features import (
    FeatureMode,
    assemble_observation,
    pooled_video_feature,
    project_query,
    register_feature_params,
)
from momentrl.rewards import boundary_reward, step_reward
from momentrl.synth import Episode
from momentrl.timeline import N_JOINT_CLASSES, Boundary, Interval, is_valid

N_SCANNER_ACTIONS = 7  # hold + 6 add offsets
N_MOVER_ACTIONS = 5  # large/small left, hold, small/large right
HOLD = 0
MOVER_HOLD = 2


class AgentKind(str, Enum):
    SCANNER = "scanner"
    MOVER = "mover"
    DARK_MOVER = "dark_mover"

    @property
    def feature_mode(self) -> FeatureMode:
        return FeatureMode.EXCLUDED if self is AgentKind.DARK_MOVER else FeatureMode.INCLUDED

    @property
    def n_actions(self) -> int:
        return N_SCANNER_ACTIONS if self is AgentKind.SCANNER else N_MOVER_ACTIONS


AGENT_KINDS = (AgentKind.SCANNER, AgentKind.MOVER, AgentKind.DARK_MOVER)


@dataclass
class StepRecord:
    """What one agent did and predicted at one step."""

    t: int
    region: Interval
    output: Interval
    evidence: Evidence
    p_iou: float
    p_dist: tuple[float, float]
    p_loc: np.ndarray
    actions: tuple[int, int]
    log_probs: tuple[Var, Var]
    value: float
    reward: float


@dataclass
class AgentTrace:
    """A full rollout: per-step records plus the batched graph nodes the
    losses and the fusion network consume."""

    kind: AgentKind
    episode_id: str
    steps: list[StepRecord]
    final: Interval
    regions: list[Interval] = field(default_factory=list)
    obs_seq: Var | None = None
    evi_seq: Var | None = None
    p_iou_seq: Var | None = None
    p_dist_seq: Var | None = None
    p_loc_seq: Var | None = None
    value_seq: Var | None = None


def register_agent_params(view: StoreView, cfg: RunConfig, kind: AgentKind) -> None:
    mcfg = cfg.model
    register_feature_params(view, mcfg, cfg.dataset)
    add_gru(view, "pol", mcfg.policy_hidden, mcfg.obs_dim)
    n_act = kind.n_actions
    add_dense(view, "head_s", n_act, mcfg.policy_hidden)
    add_dense(view, "head_e", n_act, mcfg.policy_hidden)
    add_dense(view, "value", 1, mcfg.policy_hidden)
    add_dense(view, "evi", N_JOINT_CLASSES, mcfg.obs_dim)
    add_dense(view, "iou", 1, mcfg.obs_dim)
    add_dense(view, "dist", 2, mcfg.obs_dim)
    add_dense(view, "loc", N_JOINT_CLASSES, mcfg.obs_dim)


# ---------------------------------------------------------------------------
# pure environment dynamics (shared with the random-policy baseline)


def scanner_window(t: int, step_size: float, f0: float) -> Interval:
    """The fixed-width window at step t; the end clamps to the video end."""
    start = t * step_size
    return Interval(start, min(start + f0, 1.0))


def apply_add(region: Interval, offset_index: int, offsets) -> float:
    """Boundary position for an add: window start plus the table offset,
    kept inside the window."""
    raw = region.start + offsets[offset_index]
    return min(max(raw, region.start), region.end)


def mover_shift_table(shift_small: float, shift_large: float) -> tuple[float, ...]:
    return (-shift_large, -shift_small, 0.0, shift_small, shift_large)


@dataclass(frozen=True)
class BoundaryMove:
    """Outcome of one boundary's action: the persisted value plus the raw
    attempt the reward is judged on (None for holds)."""

    value: float
    attempt: float | None


def scanner_boundary_move(
    action: int, current: float, other: float, which: Boundary, window: Interval, offsets
) -> BoundaryMove:
    """Apply one scanner action. Adds that would leave the boundary pair
    inadmissible are rejected so the running output stays well-formed."""
    if action == HOLD:
        return BoundaryMove(current, None)
    raw = window.start + offsets[action - 1]
    applied = apply_add(window, action - 1, offsets)
    if is_valid(raw, which, other) and is_valid(applied, which, other):
        return BoundaryMove(applied, raw)
    return BoundaryMove(current, raw)


def mover_boundary_move(
    action: int, current: float, other: float, which: Boundary, shifts, min_gap: float
) -> BoundaryMove:
    """Apply one mover action; shifts always land, clamped into the timeline
    and away from the other boundary by ``min_gap``."""
    if action == MOVER_HOLD:
        return BoundaryMove(current, None)
    raw = current + shifts[action]
    if which is Boundary.START:
        applied = min(max(raw, 0.0), other - min_gap)
    else:
        applied = max(min(raw, 1.0), other + min_gap)
    return BoundaryMove(applied, raw)


# ---------------------------------------------------------------------------
# rollout


def _boundary_step(
    kind: AgentKind,
    action: int,
    current: float,
    other: float,
    which: Boundary,
    window: Interval | None,
    ep: Episode,
    cfg: RunConfig,
) -> tuple[float, float]:
    """Move one boundary and score it; returns (new value, reward)."""
    if kind is AgentKind.SCANNER:
        move = scanner_boundary_move(
            action, current, other, which, window, cfg.agent.offsets
        )
    else:
        shifts = mover_shift_table(cfg.agent.shift_small, cfg.agent.shift_large)
        move = mover_boundary_move(action, current, other, which, shifts, cfg.min_gap)
    if ep.gt is None:
        return move.value, 0.0
    gt_b = ep.gt.start if which is Boundary.START else ep.gt.end
    reward = boundary_reward(
        moved=move.attempt is not None,
        prev_boundary=current,
        next_boundary=current if move.attempt is None else move.attempt,
        gt_boundary=gt_b,
        other_boundary=other,
        which=which,
        cfg=cfg.reward,
    )
    return move.value, reward


def run_episode(
    kind: AgentKind,
    ep: Episode,
    view: StoreView,
    cfg: RunConfig,
    rng: np.random.Generator | None = None,
    greedy: bool = False,
    forced_actions: list[tuple[int, int]] | None = None,
) -> AgentTrace:
    """Roll the agent for the configured number of steps.

    Actions are sampled from the policy unless ``greedy``; greedy rollouts
    are fully deterministic given the parameters. ``forced_actions`` replays
    a fixed action sequence instead of choosing one.
    """
    if forced_actions is not None and len(forced_actions) != cfg.agent.steps:
        raise ValueError("forced_actions must cover every step")
    if forced_actions is None and not greedy and rng is None:
        raise ValueError("sampling rollouts need an rng; pass greedy=True otherwise")
    acfg, mcfg = cfg.agent, cfg.model
    mode = kind.feature_mode
    pol = gru_params(view, "pol")
    pooled_v = pooled_video_feature(ep, view, mcfg)
    query_proj = project_query(ep, view)
    h = eng.const(np.zeros(mcfg.policy_hidden))

    l_s, l_e = 0.0, 1.0
    obs_vars: list[Var] = []
    h_vars: list[Var] = []
    regions: list[Interval] = []
    outputs: list[Interval] = []
    actions: list[tuple[int, int]] = []
    log_probs: list[tuple[Var, Var]] = []
    rewards: list[float] = []

    for t in range(acfg.steps):
        if kind is AgentKind.SCANNER:
            region = scanner_window(t, acfg.step_size, acfg.f0)
            window = region
        else:
            region = Interval(l_s, l_e)
            window = None
        o = assemble_observation(
            ep, region, view, mcfg, mode, pooled_v=pooled_v, query_proj=query_proj
        )
        h = eng.gru_step(h, o, pol)

        pair: list[int] = []
        lps: list[Var] = []
        for b_idx, head in enumerate(("head_s", "head_e")):
            logits = eng.dense_forward(h, view[f"{head}.w"], view[f"{head}.b"], Act.IDENTITY)
            ls = eng.log_softmax(logits)
            if forced_actions is not None:
                a = forced_actions[t][b_idx]
            elif greedy:
                a = eng.argmax_index(np.exp(ls.data))
            else:
                a = eng.sample_categorical(np.exp(ls.data), rng)
            pair.append(a)
            lps.append(eng.pick(ls, a))
        a_s, a_e = pair

        l_s, r_s = _boundary_step(kind, a_s, l_s, l_e, Boundary.START, window, ep, cfg)
        l_e, r_e = _boundary_step(kind, a_e, l_e, l_s, Boundary.END, window, ep, cfg)

        obs_vars.append(o)
        h_vars.append(h)
        regions.append(region)
        outputs.append(Interval(l_s, l_e))
        actions.append((a_s, a_e))
        log_probs.append((lps[0], lps[1]))
        rewards.append(step_reward(r_s, r_e))

    obs_seq = eng.stack_rows(obs_vars)
    h_seq = eng.stack_rows(h_vars)
    evi_seq = eng.dense_forward(obs_seq, view["evi.w"], view["evi.b"], Act.SOFTPLUS)
    p_iou_seq = eng.dense_forward(obs_seq, view["iou.w"], view["iou.b"], Act.SIGMOID)
    p_dist_seq = eng.dense_forward(obs_seq, view["dist.w"], view["dist.b"], Act.IDENTITY)
    p_loc_seq = eng.dense_forward(obs_seq, view["loc.w"], view["loc.b"], Act.IDENTITY)
    value_seq = eng.dense_forward(h_seq, view["value.w"], view["value.b"], Act.IDENTITY)

    steps = []
    for t in range(acfg.steps):
        steps.append(
            StepRecord(
                t=t,
                region=regions[t],
                output=outputs[t],
                evidence=Evidence(e=evi_seq.data[t].copy()),
                p_iou=float(p_iou_seq.data[t, 0]),
                p_dist=(float(p_dist_seq.data[t, 0]), float(p_dist_seq.data[t, 1])),
                p_loc=p_loc_seq.data[t].copy(),
                actions=actions[t],
                log_probs=log_probs[t],
                value=float(value_seq.data[t, 0]),
                reward=rewards[t],
            )
        )
    return AgentTrace(
        kind=kind,
        episode_id=ep.id,
        steps=steps,
        final=outputs[-1],
        regions=regions,
        obs_seq=obs_seq,
        evi_seq=evi_seq,
        p_iou_seq=p_iou_seq,
        p_dist_seq=p_dist_seq,
        p_loc_seq=p_loc_seq,
        value_seq=value_seq,
    )


def run_episode_random(
    kind: AgentKind, ep: Episode, cfg: RunConfig, rng: np.random.Generator
) -> Interval:
    """Environment-only rollout with uniformly random actions; the baseline
    the trained policies are measured against."""
    acfg = cfg.agent
    l_s, l_e = 0.0, 1.0
    for t in range(acfg.steps):
        window = scanner_window(t, acfg.step_size, acfg.f0) if kind is AgentKind.SCANNER else None
        a_s = int(rng.integers(0, kind.n_actions))
        a_e = int(rng.integers(0, kind.n_actions))
        l_s, _ = _boundary_step(kind, a_s, l_s, l_e, Boundary.START, window, ep, cfg)
        l_e, _ = _boundary_step(kind, a_e, l_e, l_s, Boundary.END, window, ep, cfg)
    return Interval(l_s, l_e)


# ---------------------------------------------------------------------------
# trace persistence (consumed by the boundary-map plotter)


def trace_to_doc(trace: AgentTrace) -> dict:
    return {
        "episode_id": trace.episode_id,
        "agent": trace.kind.value,
        "steps": [
            {
                "t": s.t,
                "region": [s.region.start, s.region.end],
                "output": [s.output.start, s.output.end],
                "u": s.evidence.uncertainty,
                "p_iou": s.p_iou,
            }
            for s in trace.steps
        ],
        "final": [trace.final.start, trace.final.end],
    }


def save_traces(path: str | Path, traces: list[AgentTrace]) -> None:
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    with tmp.open("w") as f:
        for tr in traces:
            f.write(json.dumps(trace_to_doc(tr)))
            f.write("\n")
    tmp.replace(path)


def load_trace_docs(path: str | Path) -> list[dict]:
    docs = []
    with Path(path).open() as f:
        for line in f:
            line = line.strip()
            if line:
                docs.append(json.loads(line))
    for doc in docs:
        missing = {"episode_id", "agent", "steps", "final"} - set(doc)
        if missing:
            raise ValueError(f"trace record is missing keys {sorted(missing)}")
    return docs
