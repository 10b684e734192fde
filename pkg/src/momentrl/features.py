"""Per-step observation assembly.

The observation an agent acts on fuses four pieces: a recurrent encoding of
the whole frame sequence (global context), the raw query vector, a local
feature built from the frames the current region selects, and a dense
embedding of the region's boundary pair.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from momentrl.autodiff import engine as eng
from momentrl.autodiff.engine import Act, Var
from momentrl.autodiff.store import StoreView, add_dense, add_gru, gru_params
from momentrl.config import DatasetConfig, ModelConfig
from momentrl.synth import Episode, frames_in_region
from momentrl.timeline import Interval


class FeatureMode(Enum):
    INCLUDED = "included"
    EXCLUDED = "excluded"


def register_feature_params(view: StoreView, mcfg: ModelConfig, dcfg: DatasetConfig) -> None:
    add_gru(view, "enc", mcfg.encoder_hidden, dcfg.d_v)
    add_dense(view, "qproj", dcfg.d_v, dcfg.d_q)
    add_dense(view, "afuse", mcfg.local_dim, dcfg.d_v)
    add_dense(view, "lenc", mcfg.loc_dim, 2)
    obs_in = mcfg.encoder_hidden + dcfg.d_q + mcfg.local_dim + mcfg.loc_dim
    add_dense(view, "obs", mcfg.obs_dim, obs_in)


def pool_frames(frames: np.ndarray, pool: int) -> np.ndarray:
    """Mean-pool the frame sequence in non-overlapping chunks of ``pool``."""
    if pool <= 1:
        return frames
    n = frames.shape[0]
    idx = np.arange(0, n, pool)
    sums = np.add.reduceat(frames, idx, axis=0)
    counts = np.diff(np.append(idx, n))[:, None]
    return sums / counts


def pooled_video_feature(ep: Episode, view: StoreView, mcfg: ModelConfig) -> Var:
    """Global video context: chunk-mean the frames, then run the encoder GRU
    over the pooled sequence and keep its final hidden state."""
    pooled = pool_frames(ep.video_feats, mcfg.encoder_pool)
    params = gru_params(view, "enc")
    h = eng.const(np.zeros(mcfg.encoder_hidden))
    for t in range(pooled.shape[0]):
        h = eng.gru_step(h, eng.const(pooled[t]), params)
    return h


def region_mean(frames: np.ndarray, region: Interval, mode: FeatureMode) -> np.ndarray:
    """Mean of the frames selected by the region (or its complement).

    An empty selection yields the zero vector.
    """
    mask = frames_in_region(frames.shape[0], region)
    if mode is FeatureMode.EXCLUDED:
        mask = ~mask
    if not mask.any():
        return np.zeros(frames.shape[1])
    return frames[mask].mean(axis=0)


def project_query(ep: Episode, view: StoreView) -> Var:
    """Query vector projected into frame-feature space for the fusion product."""
    return eng.dense_forward(
        eng.const(ep.query_feat), view["qproj.w"], view["qproj.b"], Act.IDENTITY
    )


def local_feature(
    ep: Episode,
    region: Interval,
    mode: FeatureMode,
    view: StoreView,
    query_proj: Var | None = None,
) -> Var:
    """Region feature fused with the query: elementwise product of the region
    mean with a projected query, then a dense layer.

    ``query_proj`` lets a rollout reuse the episode-constant projection.
    """
    base = eng.const(region_mean(ep.video_feats, region, mode))
    qp = query_proj if query_proj is not None else project_query(ep, view)
    return eng.dense_forward(eng.mul(base, qp), view["afuse.w"], view["afuse.b"], Act.RELU)


def encode_region(region: Interval, view: StoreView) -> Var:
    loc = eng.const(np.array([region.start, region.end]))
    return eng.dense_forward(loc, view["lenc.w"], view["lenc.b"], Act.IDENTITY)


def assemble_observation(
    ep: Episode,
    region: Interval,
    view: StoreView,
    mcfg: ModelConfig,
    mode: FeatureMode = FeatureMode.INCLUDED,
    pooled_v: Var | None = None,
    query_proj: Var | None = None,
) -> Var:
    """The fused per-step state vector.

    ``pooled_v`` and ``query_proj`` let a rollout reuse the episode-constant
    pieces across steps instead of recomputing them.
    """
    v = pooled_v if pooled_v is not None else pooled_video_feature(ep, view, mcfg)
    q = eng.const(ep.query_feat)
    a = local_feature(ep, region, mode, view, query_proj=query_proj)
    l = encode_region(region, view)
    fused = eng.concat([v, q, a, l])
    return eng.dense_forward(fused, view["obs.w"], view["obs.b"], Act.RELU)
