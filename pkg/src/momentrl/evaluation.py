"""Greedy evaluation: per-agent accuracy, competition, conflict, retrieval."""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from momentrl.agents import AGENT_KINDS, AgentKind, AgentTrace, run_episode, run_episode_random
from momentrl.autodiff.engine import no_grad
from momentrl.fusion import detect_oos, pick_winner, score_trace
from momentrl.metrics import acc_at, oos_metrics
from momentrl.synth import Episode
from momentrl.system import System
from momentrl.timeline import Interval, Verdict, eta as max_conflict, tiou

OOS_REPORT_COLUMNS = ("episode_id", "eta", "h", "verdict", "label", "correct")
RETRIEVAL_REPORT_COLUMNS = ("query_id", "rank", "video_id", "eta")


@dataclass
class EpisodeEval:
    """Everything the metrics need from one test episode."""

    episode_id: str
    oos_label: bool
    gt: Interval | None
    finals: dict[AgentKind, Interval]
    scores: dict[AgentKind, float]
    winner: AgentKind
    winner_final: Interval
    eta: float


def greedy_traces(system: System, ep: Episode) -> dict[AgentKind, AgentTrace]:
    with no_grad():
        return {
            kind: run_episode(kind, ep, system.agent_view(kind), system.cfg, greedy=True)
            for kind in AGENT_KINDS
        }


def evaluate_episode(system: System, ep: Episode, zero_evidence: bool = False) -> EpisodeEval:
    traces = greedy_traces(system, ep)
    kinds = list(traces)
    with no_grad():
        scores = {
            kind: float(
                score_trace(
                    traces[kind], system.fusion_view, system.cfg.model,
                    zero_evidence=zero_evidence,
                ).data
            )
            for kind in kinds
        }
    finals = {kind: traces[kind].final for kind in kinds}
    widx = pick_winner([scores[k] for k in kinds])
    winner = kinds[widx]
    return EpisodeEval(
        episode_id=ep.id,
        oos_label=ep.oos,
        gt=ep.gt,
        finals=finals,
        scores=scores,
        winner=winner,
        winner_final=finals[winner],
        eta=max_conflict([finals[k] for k in kinds]),
    )


def evaluate_episodes(
    system: System, episodes: list[Episode], zero_evidence: bool = False
) -> list[EpisodeEval]:
    return [evaluate_episode(system, ep, zero_evidence=zero_evidence) for ep in episodes]


# ---------------------------------------------------------------------------
# accuracy summaries (matched episodes only)


def _matched(evals: list[EpisodeEval]) -> list[EpisodeEval]:
    return [e for e in evals if e.gt is not None]


def agent_accuracy(evals: list[EpisodeEval], kind: AgentKind, threshold: float) -> float:
    pairs = [(e.finals[kind], e.gt) for e in _matched(evals)]
    return acc_at(pairs, threshold)


def winner_accuracy(evals: list[EpisodeEval], threshold: float) -> float:
    pairs = [(e.winner_final, e.gt) for e in _matched(evals)]
    return acc_at(pairs, threshold)


def oracle_accuracy(evals: list[EpisodeEval], threshold: float) -> float:
    """Upper bound: per episode, the final with the best true IoU wins."""
    pairs = []
    for e in _matched(evals):
        best = max(e.finals.values(), key=lambda f: tiou(f, e.gt))
        pairs.append((best, e.gt))
    return acc_at(pairs, threshold)


def random_policy_accuracy(
    system: System, episodes: list[Episode], kind: AgentKind, threshold: float, seed: int = 0
) -> float:
    """Acc@threshold of uniformly random actions through the same dynamics."""
    rng = np.random.default_rng([system.cfg.seed, 77, seed])
    pairs = []
    for ep in episodes:
        if ep.gt is None:
            continue
        final = run_episode_random(kind, ep, system.cfg, rng)
        pairs.append((final, ep.gt))
    return acc_at(pairs, threshold)


def trust_correlation(system: System, evals: list[EpisodeEval], kind: AgentKind) -> float:
    """Pearson correlation between the trust score and the true final IoU."""
    matched = _matched(evals)
    u = np.array([e.scores[kind] for e in matched])
    t = np.array([tiou(e.finals[kind], e.gt) for e in matched])
    if u.size < 2 or np.std(u) == 0.0 or np.std(t) == 0.0:
        return 0.0
    return float(np.corrcoef(u, t)[0, 1])


# ---------------------------------------------------------------------------
# OOS detection reporting


def eta_summary(evals: list[EpisodeEval]) -> dict[str, float]:
    matched = [e.eta for e in evals if not e.oos_label]
    oos = [e.eta for e in evals if e.oos_label]
    out = {}
    if matched:
        out["eta_mean_matched"] = float(np.mean(matched))
    if oos:
        out["eta_mean_oos"] = float(np.mean(oos))
    return out


def oos_decisions(evals: list[EpisodeEval], h: float) -> list[tuple[Verdict, Verdict]]:
    out = []
    for e in evals:
        verdict = detect_oos(list(e.finals.values()), h).verdict
        label = Verdict.OOS if e.oos_label else Verdict.MATCH
        out.append((verdict, label))
    return out


def write_oos_report(path: str | Path, evals: list[EpisodeEval], h: float) -> None:
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    with tmp.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(OOS_REPORT_COLUMNS)
        for e in evals:
            verdict = Verdict.OOS if e.eta > h else Verdict.MATCH
            label = Verdict.OOS if e.oos_label else Verdict.MATCH
            writer.writerow(
                [e.episode_id, repr(e.eta), repr(float(h)), verdict.value, label.value,
                 int(verdict == label)]
            )
    tmp.replace(path)


# ---------------------------------------------------------------------------
# zero-shot retrieval: rank candidate videos for a query by ascending eta


def candidate_eta(system: System, query_ep: Episode, candidate: Episode) -> float:
    probe = Episode(
        id=candidate.id,
        video_feats=candidate.video_feats,
        query_feat=query_ep.query_feat,
        gt=None,
    )
    traces = greedy_traces(system, probe)
    return max_conflict([traces[k].final for k in traces])


def rank_videos(
    system: System, query_ep: Episode, candidates: list[Episode]
) -> list[tuple[str, float]]:
    """Stable sort of candidate videos by ascending disagreement."""
    scored = [(c.id, candidate_eta(system, query_ep, c)) for c in candidates]
    return sorted(scored, key=lambda pair: pair[1])


def retrieval_run(
    system: System,
    queries: list[Episode],
    candidates: list[Episode],
    pool_size: int,
    seed: int = 0,
) -> dict[str, list[tuple[str, float]]]:
    """Per query: rank a deterministic pool containing the query's own video.

    Queries must be matched episodes drawn from the candidate set.
    """
    by_id = {c.id: c for c in candidates}
    rankings: dict[str, list[tuple[str, float]]] = {}
    for q in queries:
        if q.id not in by_id:
            raise ValueError(f"query {q.id} has no candidate video with the same id")
        others = [c for c in candidates if c.id != q.id]
        rng = np.random.default_rng([system.cfg.seed, 55, seed, zlib.crc32(q.id.encode())])
        n_extra = min(max(pool_size - 1, 0), len(others))
        chosen = [others[int(i)] for i in rng.permutation(len(others))[:n_extra]]
        pool = [by_id[q.id]] + chosen
        rankings[q.id] = rank_videos(system, q, pool)
    return rankings


def write_retrieval_report(path: str | Path, rankings: dict[str, list[tuple[str, float]]]) -> None:
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    with tmp.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RETRIEVAL_REPORT_COLUMNS)
        for query_id in rankings:
            for rank, (video_id, e) in enumerate(rankings[query_id], start=1):
                writer.writerow([query_id, rank, video_id, repr(e)])
    tmp.replace(path)


# ---------------------------------------------------------------------------
# one-stop metrics summary for the CLI


def metrics_summary(
    system: System,
    evals: list[EpisodeEval],
    h: float | None = None,
) -> dict[str, float]:
    out: dict[str, float] = {}
    for thr, tag in ((0.5, "acc50"), (0.7, "acc70")):
        for kind in AGENT_KINDS:
            out[f"{tag}/{kind.value}"] = agent_accuracy(evals, kind, thr)
        out[f"{tag}/winner"] = winner_accuracy(evals, thr)
        out[f"{tag}/oracle"] = oracle_accuracy(evals, thr)
    for kind in AGENT_KINDS:
        out[f"trust_pearson/{kind.value}"] = trust_correlation(system, evals, kind)
    out.update(eta_summary(evals))
    if h is not None and any(e.oos_label for e in evals) and any(not e.oos_label for e in evals):
        accuracy, f1 = oos_metrics(oos_decisions(evals, h))
        out["oos_threshold"] = float(h)
        out["oos_accuracy"] = accuracy
        out["oos_f1"] = f1
    return out


def write_metrics_csv(path: str | Path, summary: dict[str, float]) -> None:
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    with tmp.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["key", "value"])
        for key, value in summary.items():
            writer.writerow([key, repr(float(value))])
    tmp.replace(path)
