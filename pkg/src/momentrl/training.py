"""Losses and the end-to-end training loop.

Every matched training episode: roll all three agents with sampled actions,
build each agent's combined loss (evidential + three prediction heads +
actor-critic terms), add the fusion network's trust losses, backprop the
sum, and take one clipped adaptive-moment step. Out-of-scope episodes never
enter training; detecting them stays zero-shot.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from momentrl.agents import AGENT_KINDS, AgentTrace, run_episode
from momentrl.autodiff import engine as eng
from momentrl.autodiff.engine import Var
from momentrl.autodiff.store import adam_update
from momentrl.config import RunConfig
from momentrl.evidential import evidential_loss_rows
from momentrl.fusion import fusion_input_from_trace, encode_trace, trust_loss, trusted_iou
from momentrl.synth import Episode
from momentrl.system import System
from momentrl.timeline import Interval, rel_loc_class, tiou

LOG_COLUMNS = (
    "epoch", "split", "loss_total", "loss_evi", "loss_iou", "loss_dist",
    "loss_loc", "loss_policy", "loss_value", "loss_trust", "acc50", "acc70",
)


@dataclass(frozen=True)
class LossBreakdown:
    """Weighted per-term contributions; total is their plain sum."""

    evi: float
    iou: float
    dist: float
    loc: float
    policy: float
    value: float

    @property
    def total(self) -> float:
        return self.evi + self.iou + self.dist + self.loc + self.policy + self.value


def discounted_returns(rewards: list[float], discount: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + discount * acc
        out[t] = acc
    return out


def policy_value_loss(trace: AgentTrace, gamma_discount: float) -> tuple[Var, Var]:
    """Monte-Carlo actor-critic terms.

    The policy term is -sum_t log pi(a_t) * A_t with the advantage
    A_t = R_t - s_t held constant; the value term is the mean squared error
    between returns and value estimates.
    """
    rewards = [s.reward for s in trace.steps]
    returns = discounted_returns(rewards, gamma_discount)
    policy_terms = None
    for t, step in enumerate(trace.steps):
        advantage = returns[t] - step.value
        logp = eng.add(step.log_probs[0], step.log_probs[1])
        term = eng.scale(logp, -advantage)
        policy_terms = term if policy_terms is None else eng.add(policy_terms, term)
    value = eng.mse_const(trace.value_seq, returns.reshape(-1, 1))
    return policy_terms, value


def auxiliary_losses(trace: AgentTrace, ep: Episode, f0: float) -> tuple[Var, Var, Var]:
    """Supervised heads: region IoU, boundary distances, location class."""
    if ep.gt is None:
        raise ValueError("auxiliary losses need a matched episode")
    t_steps = len(trace.regions)
    iou_targets = np.array([[tiou(r, ep.gt)] for r in trace.regions])
    dist_targets = np.array(
        [[abs(r.start - ep.gt.start), abs(r.end - ep.gt.end)] for r in trace.regions]
    )
    loc_labels = np.array(
        [rel_loc_class(r, ep.gt, f0).joint_index for r in trace.regions], dtype=np.int64
    )
    iou = eng.mse_const(trace.p_iou_seq, iou_targets)
    dist = eng.mse_const(trace.p_dist_seq, dist_targets)
    loc = eng.cross_entropy_rows(trace.p_loc_seq, loc_labels)
    assert t_steps == iou_targets.shape[0]
    return iou, dist, loc


def agent_loss(trace: AgentTrace, ep: Episode, cfg: RunConfig) -> tuple[Var, LossBreakdown]:
    """The combined per-agent objective, each term scaled by its config weight.

    Supervised terms are skipped for episodes without ground truth.
    """
    tc = cfg.training
    policy, value = policy_value_loss(trace, tc.discount)
    zero = eng.const(0.0)
    if ep.gt is not None:
        loc_labels = np.array(
            [rel_loc_class(r, ep.gt, cfg.agent.f0).joint_index for r in trace.regions],
            dtype=np.int64,
        )
        evi = evidential_loss_rows(trace.evi_seq, loc_labels)
        iou, dist, loc = auxiliary_losses(trace, ep, cfg.agent.f0)
    else:
        evi = iou = dist = loc = zero
    terms = (
        eng.scale(evi, tc.w_evi),
        eng.scale(iou, tc.w_iou),
        eng.scale(dist, tc.w_dist),
        eng.scale(loc, tc.w_loc),
        eng.scale(policy, tc.w_policy),
        eng.scale(value, tc.w_value),
    )
    total = terms[0]
    for term in terms[1:]:
        total = eng.add(total, term)
    breakdown = LossBreakdown(*(float(t.data) for t in terms))
    return total, breakdown


@dataclass
class EpisodeUpdate:
    loss_var: Var
    breakdowns: dict
    trust: float
    traces: dict


def episode_losses(system: System, ep: Episode, rng: np.random.Generator) -> EpisodeUpdate:
    """Sampled rollouts for all agents plus the summed training objective."""
    cfg = system.cfg
    total = None
    breakdowns = {}
    trust_total = 0.0
    traces = {}
    for kind in AGENT_KINDS:
        view = system.agent_view(kind)
        trace = run_episode(kind, ep, view, cfg, rng=rng, greedy=False)
        traces[kind] = trace
        loss_var, breakdown = agent_loss(trace, ep, cfg)
        breakdowns[kind] = breakdown
        total = loss_var if total is None else eng.add(total, loss_var)
        if ep.gt is not None:
            inp = fusion_input_from_trace(trace, detach=not cfg.training.fusion_update_agents)
            theta = encode_trace(inp, system.fusion_view, cfg.model)
            u = trusted_iou(theta, trace.final, system.fusion_view)
            tl = eng.scale(trust_loss(u, trace.final, ep.gt), cfg.training.w_trust)
            trust_total += float(tl.data)
            total = eng.add(total, tl)
    return EpisodeUpdate(loss_var=total, breakdowns=breakdowns, trust=trust_total, traces=traces)


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else 0.0


def train(
    system: System,
    train_episodes: list[Episode],
    val_episodes: list[Episode] | None = None,
    log_path: str | Path | None = None,
    progress: bool = False,
) -> list[dict]:
    """Optimize every network jointly; returns the per-epoch log rows.

    Deterministic for a fixed config seed: action sampling and epoch
    shuffling stream from generators derived from it.
    """
    from momentrl import evaluation as ev  # local import to avoid a cycle

    cfg = system.cfg
    tc = cfg.training
    matched = [e for e in train_episodes if e.gt is not None]
    action_rng = np.random.default_rng([cfg.seed, 1])
    shuffle_rng = np.random.default_rng([cfg.seed, 2])
    rows: list[dict] = []

    for epoch in range(1, tc.epochs + 1):
        order = shuffle_rng.permutation(len(matched))
        sums = {k: [] for k in ("total", "evi", "iou", "dist", "loc", "policy", "value", "trust")}
        pending = 0
        for pos, idx in enumerate(order):
            ep = matched[int(idx)]
            update = episode_losses(system, ep, action_rng)
            loss = update.loss_var
            if tc.batch_size > 1:
                loss = eng.scale(loss, 1.0 / tc.batch_size)
            eng.backward(loss)
            pending += 1
            if pending == tc.batch_size or pos == len(order) - 1:
                adam_update(
                    system.store,
                    lr=cfg.optim.lr,
                    beta1=cfg.optim.beta1,
                    beta2=cfg.optim.beta2,
                    eps=cfg.optim.eps,
                    clip_norm=cfg.optim.clip_norm,
                )
                pending = 0
            agg = [update.breakdowns[k] for k in AGENT_KINDS]
            sums["total"].append(sum(b.total for b in agg) + update.trust)
            for name in ("evi", "iou", "dist", "loc", "policy", "value"):
                sums[name].append(sum(getattr(b, name) for b in agg))
            sums["trust"].append(update.trust)
        row = {
            "epoch": epoch,
            "split": "train",
            "loss_total": _mean(sums["total"]),
            "loss_evi": _mean(sums["evi"]),
            "loss_iou": _mean(sums["iou"]),
            "loss_dist": _mean(sums["dist"]),
            "loss_loc": _mean(sums["loc"]),
            "loss_policy": _mean(sums["policy"]),
            "loss_value": _mean(sums["value"]),
            "loss_trust": _mean(sums["trust"]),
            "acc50": None,
            "acc70": None,
        }
        rows.append(row)
        if progress:
            print(f"epoch {epoch}: train loss {row['loss_total']:.4f}", flush=True)
        if val_episodes and tc.eval_every and epoch % tc.eval_every == 0:
            matched_val = [e for e in val_episodes if e.gt is not None]
            evals = ev.evaluate_episodes(system, matched_val)
            acc50 = ev.winner_accuracy(evals, 0.5)
            acc70 = ev.winner_accuracy(evals, 0.7)
            rows.append(
                {
                    "epoch": epoch,
                    "split": "val",
                    "loss_total": None, "loss_evi": None, "loss_iou": None,
                    "loss_dist": None, "loss_loc": None, "loss_policy": None,
                    "loss_value": None, "loss_trust": None,
                    "acc50": acc50,
                    "acc70": acc70,
                }
            )
            if progress:
                print(f"epoch {epoch}: val acc50 {acc50:.2f} acc70 {acc70:.2f}", flush=True)
    if log_path is not None:
        write_training_log(log_path, rows)
    return rows


def write_training_log(path: str | Path, rows: list[dict]) -> None:
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    with tmp.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(LOG_COLUMNS)
        for row in rows:
            writer.writerow(
                ["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else row[c])
                 for c in LOG_COLUMNS]
            )
    tmp.replace(path)
