"""Seeded synthetic episodes: feature sequences with a planted query-correlated segment.

A matched episode hides a contiguous block of frames equal to a fixed linear
image of its query vector plus Gaussian noise; everything else, and every
frame of an out-of-scope episode, is pure unit Gaussian noise. Generation is
deterministic per seed, and each episode draws from its own substream so
splits can be produced in parallel.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from momentrl.config import DatasetConfig
from momentrl.timeline import Interval

SPLIT_NAMES = ("train", "val", "test")
_SPLIT_CODE = {"train": 1, "val": 2, "test": 3}
_MAP_STREAM = 7
_LAYOUT_STREAM = 999_983


class DatasetSchemaError(ValueError):
    """An episode file does not match the JSON-lines schema."""


@dataclass
class Episode:
    """One (video features, query vector, optional ground truth) sample."""

    id: str
    video_feats: np.ndarray
    query_feat: np.ndarray
    gt: Interval | None

    @property
    def oos(self) -> bool:
        return self.gt is None

    @property
    def n_frames(self) -> int:
        return self.video_feats.shape[0]


@dataclass
class DatasetSplits:
    config: DatasetConfig
    train: list[Episode]
    val: list[Episode]
    test: list[Episode]
    signal_map: np.ndarray

    def split(self, name: str) -> list[Episode]:
        if name not in SPLIT_NAMES:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)


def frame_centers(n_frames: int) -> np.ndarray:
    return (np.arange(n_frames) + 0.5) / n_frames


def frames_in_region(n_frames: int, region: Interval) -> np.ndarray:
    """Mask of frames whose center falls inside [start, end)."""
    c = frame_centers(n_frames)
    return (c >= region.start) & (c < region.end)


def signal_map_for(cfg: DatasetConfig) -> np.ndarray:
    """The dataset-wide linear map from query space to frame-feature space."""
    rng = np.random.default_rng([cfg.seed, _MAP_STREAM])
    return rng.normal(0.0, 1.0 / np.sqrt(cfg.d_q), size=(cfg.d_v, cfg.d_q))


def _oos_indices(cfg: DatasetConfig, split: str, count: int) -> set[int]:
    if split == "train":
        return set()
    n_oos = round(count * cfg.oos_fraction)
    rng = np.random.default_rng([cfg.seed, _SPLIT_CODE[split], _LAYOUT_STREAM])
    return set(int(i) for i in rng.permutation(count)[:n_oos])


def _make_episode(cfg: DatasetConfig, signal_map: np.ndarray, split: str, index: int, oos: bool) -> Episode:
    rng = np.random.default_rng([cfg.seed, _SPLIT_CODE[split], index])
    query = rng.standard_normal(cfg.d_q)
    frames = rng.standard_normal((cfg.n_frames, cfg.d_v))
    gt = None
    if not oos:
        lo, hi = cfg.moment_len_range
        length = rng.uniform(lo, hi)
        n_mom = min(cfg.n_frames, max(1, round(length * cfg.n_frames)))
        i0 = int(rng.integers(0, cfg.n_frames - n_mom + 1))
        template = signal_map @ query
        noise = rng.standard_normal((n_mom, cfg.d_v))
        frames[i0 : i0 + n_mom] = template + cfg.signal_noise_sigma * noise
        gt = Interval(i0 / cfg.n_frames, (i0 + n_mom) / cfg.n_frames)
    return Episode(id=f"{split}-{index:05d}", video_feats=frames, query_feat=query, gt=gt)


def generate_dataset(cfg: DatasetConfig) -> DatasetSplits:
    cfg.validate()
    signal_map = signal_map_for(cfg)
    splits = {}
    for split, count in (("train", cfg.n_train), ("val", cfg.n_val), ("test", cfg.n_test)):
        oos = _oos_indices(cfg, split, count)
        splits[split] = [
            _make_episode(cfg, signal_map, split, i, i in oos) for i in range(count)
        ]
    return DatasetSplits(config=cfg, signal_map=signal_map, **splits)


# ---------------------------------------------------------------------------
# JSON-lines persistence: {id, oos, gt, query, frames}, one episode per line


def episode_to_json(ep: Episode) -> str:
    doc = {
        "id": ep.id,
        "oos": ep.oos,
        "gt": None if ep.gt is None else [ep.gt.start, ep.gt.end],
        "query": ep.query_feat.tolist(),
        "frames": ep.video_feats.tolist(),
    }
    return json.dumps(doc)


def episode_from_json(line: str) -> Episode:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetSchemaError(f"bad JSON line: {exc}") from exc
    missing = {"id", "oos", "gt", "query", "frames"} - set(doc)
    if missing:
        raise DatasetSchemaError(f"episode record is missing keys {sorted(missing)}")
    gt_raw = doc["gt"]
    if doc["oos"] != (gt_raw is None):
        raise DatasetSchemaError(f"episode {doc['id']}: oos flag contradicts gt")
    gt = None if gt_raw is None else Interval(float(gt_raw[0]), float(gt_raw[1]))
    frames = np.asarray(doc["frames"], dtype=np.float64)
    query = np.asarray(doc["query"], dtype=np.float64)
    if frames.ndim != 2 or query.ndim != 1:
        raise DatasetSchemaError(f"episode {doc['id']}: malformed feature arrays")
    return Episode(id=str(doc["id"]), video_feats=frames, query_feat=query, gt=gt)


def save_split(path: str | Path, episodes: list[Episode]) -> None:
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    with tmp.open("w") as f:
        for ep in episodes:
            f.write(episode_to_json(ep))
            f.write("\n")
    tmp.replace(path)


def load_split(path: str | Path) -> list[Episode]:
    out = []
    with Path(path).open() as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(episode_from_json(line))
    return out


def save_dataset(out_dir: str | Path, splits: DatasetSplits) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in SPLIT_NAMES:
        save_split(out / f"{name}.jsonl", splits.split(name))
    meta = {"format": 1, "dataset": dataclasses.asdict(splits.config)}
    tmp = out / "meta.json.tmp"
    tmp.write_text(json.dumps(meta, indent=2) + "\n")
    tmp.replace(out / "meta.json")


def load_split_dir(data_dir: str | Path, split: str) -> list[Episode]:
    path = Path(data_dir) / f"{split}.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"no {split}.jsonl under {data_dir}")
    return load_split(path)
