"""Command-line surface: data generation, training, evaluation, OOS
calibration, retrieval, and boundary-map plotting.

Every subcommand exits 0 on success and nonzero with a diagnostic on stderr
otherwise; outputs are written atomically (temp file + rename) so failures
never leave partial reports behind.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from momentrl import evaluation as ev
from momentrl import synth
from momentrl.agents import load_trace_docs, save_traces
from momentrl.autodiff.checkpoint import CheckpointError
from momentrl.boundary_map import save_boundary_map
from momentrl.config import ConfigError, default_config, load_config
from momentrl.fusion import calibrate_threshold
from momentrl.metrics import recall_at_k
from momentrl.synth import DatasetSchemaError
from momentrl.system import build_system, load_system, save_system
from momentrl.timeline import Interval
from momentrl.training import train


def _load_cfg(path: str | None):
    return load_config(path) if path else default_config()


def _cmd_gen_data(args) -> int:
    cfg = _load_cfg(args.config)
    splits = synth.generate_dataset(cfg.dataset)
    synth.save_dataset(args.out, splits)
    counts = {name: len(splits.split(name)) for name in synth.SPLIT_NAMES}
    print(f"wrote {counts} episodes to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_cfg(args.config)
    train_eps = synth.load_split_dir(args.data, "train")
    val_eps = None
    if (Path(args.data) / "val.jsonl").exists():
        val_eps = synth.load_split_dir(args.data, "val")
    system = build_system(cfg)
    train(system, train_eps, val_episodes=val_eps, log_path=args.log, progress=not args.quiet)
    save_system(args.out, system)
    print(f"wrote checkpoint to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    system = load_system(args.ckpt)
    episodes = synth.load_split_dir(args.data, args.split)
    h = None
    if args.threshold is not None:
        h = float(args.threshold)
    elif args.calibration is not None:
        h = float(json.loads(Path(args.calibration).read_text())["h"])
    evals = ev.evaluate_episodes(system, episodes, zero_evidence=args.zero_evidence)
    summary = ev.metrics_summary(system, evals, h=h)
    ev.write_metrics_csv(args.report, summary)
    if args.oos_report:
        if h is None:
            raise ConfigError("--oos-report needs --threshold or --calibration")
        ev.write_oos_report(args.oos_report, evals, h)
    if args.traces_out:
        traces = []
        for ep in episodes:
            traces.extend(ev.greedy_traces(system, ep).values())
        save_traces(args.traces_out, traces)
    print(f"wrote metrics for {len(episodes)} episodes to {args.report}")
    return 0


def _cmd_oos_calibrate(args) -> int:
    system = load_system(args.ckpt)
    episodes = synth.load_split_dir(args.val, "val")
    evals = ev.evaluate_episodes(system, episodes)
    cal = calibrate_threshold(
        [e.eta for e in evals], [e.oos_label for e in evals], objective=args.objective
    )
    doc = {
        "h": cal.h,
        "objective": args.objective,
        "score": cal.score,
        "degenerate": cal.degenerate,
        "n_val": len(evals),
    }
    tmp = Path(args.out).with_name(Path(args.out).name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2) + "\n")
    tmp.replace(args.out)
    print(f"calibrated h={cal.h} ({args.objective}={cal.score:.4f})")
    return 0


def _cmd_retrieve(args) -> int:
    system = load_system(args.ckpt)
    queries = [ep for ep in synth.load_split(args.queries) if ep.gt is not None]
    if args.n_queries is not None:
        queries = queries[: args.n_queries]
    candidates = synth.load_split_dir(args.candidates, args.split)
    rankings = ev.retrieval_run(system, queries, candidates, pool_size=args.pool_size)
    ev.write_retrieval_report(args.report, rankings)
    truth = {q.id: q.id for q in queries}
    ranked_ids = {q: [vid for vid, _ in ranking] for q, ranking in rankings.items()}
    for k in system.cfg.oos.recall_ks:
        print(f"R@{k}: {recall_at_k(ranked_ids, truth, k):.2f}")
    return 0


def _cmd_plot(args) -> int:
    docs = [d for d in load_trace_docs(args.traces) if d["episode_id"] == args.episode]
    if not docs:
        raise ValueError(f"no traces for episode {args.episode!r} in {args.traces}")
    gt = None
    if args.data:
        for name in synth.SPLIT_NAMES:
            path = Path(args.data) / f"{name}.jsonl"
            if not path.exists():
                continue
            for ep in synth.load_split(path):
                if ep.id == args.episode and ep.gt is not None:
                    gt = Interval(ep.gt.start, ep.gt.end)
    save_boundary_map(args.out, docs, gt)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="momentrl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate the synthetic dataset splits")
    g.add_argument("--config", help="run-config JSON (defaults apply when omitted)")
    g.add_argument("--out", required=True, help="output directory for the JSONL splits")
    g.set_defaults(fn=_cmd_gen_data)

    t = sub.add_parser("train", help="train all agents plus the fusion network")
    t.add_argument("--config", help="run-config JSON")
    t.add_argument("--data", required=True, help="dataset directory from gen-data")
    t.add_argument("--out", required=True, help="checkpoint output path")
    t.add_argument("--log", required=True, help="training-log CSV path")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", required=True, help="metrics CSV output")
    e.add_argument("--split", default="test", choices=synth.SPLIT_NAMES)
    e.add_argument("--threshold", type=float, help="OOS decision threshold h")
    e.add_argument("--calibration", help="calibration JSON from oos-calibrate")
    e.add_argument("--oos-report", help="per-episode OOS decision CSV")
    e.add_argument("--traces-out", help="greedy trace dump (JSONL)")
    e.add_argument("--zero-evidence", action="store_true",
                   help="blank the evidence stream at the fusion input (ablation)")
    e.set_defaults(fn=_cmd_eval)

    c = sub.add_parser("oos-calibrate", help="pick the OOS threshold on validation data")
    c.add_argument("--ckpt", required=True)
    c.add_argument("--val", required=True, help="dataset directory holding val.jsonl")
    c.add_argument("--objective", default="f1", choices=("f1", "accuracy"))
    c.add_argument("--out", required=True, help="calibration JSON output")
    c.set_defaults(fn=_cmd_oos_calibrate)

    r = sub.add_parser("retrieve", help="rank candidate videos per query by conflict")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--queries", required=True, help="JSONL of query episodes")
    r.add_argument("--candidates", required=True, help="dataset directory for the pool")
    r.add_argument("--report", required=True, help="ranking CSV output")
    r.add_argument("--split", default="test", choices=synth.SPLIT_NAMES)
    r.add_argument("--pool-size", type=int, default=50)
    r.add_argument("--n-queries", type=int, help="cap the number of queries")
    r.set_defaults(fn=_cmd_retrieve)

    m = sub.add_parser("plot-2dstb", help="render one episode's boundary map to SVG")
    m.add_argument("--traces", required=True, help="trace JSONL from eval --traces-out")
    m.add_argument("--episode", required=True)
    m.add_argument("--out", required=True, help="SVG output path")
    m.add_argument("--data", help="dataset directory, to draw the ground-truth star")
    m.set_defaults(fn=_cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CheckpointError, DatasetSchemaError, ValueError, OSError) as exc:
        print(f"momentrl: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
