import dataclasses

import numpy as np
import pytest

from momentrl.config import DatasetConfig
from momentrl.synth import (
    DatasetSchemaError,
    episode_from_json,
    episode_to_json,
    frames_in_region,
    generate_dataset,
    load_split,
    save_split,
    signal_map_for,
)
from momentrl.timeline import Interval, tiou

from oracles import correlation_scan

SMALL = DatasetConfig(
    n_train=12, n_val=10, n_test=10, oos_fraction=0.5, n_frames=32,
    d_v=8, d_q=5, signal_noise_sigma=0.4, seed=21,
)


@pytest.fixture(scope="module")
def small_splits():
    return generate_dataset(SMALL)


class TestGeneration:
    def test_counts(self, small_splits):
        assert len(small_splits.train) == 12
        assert len(small_splits.val) == 10
        assert len(small_splits.test) == 10

    def test_train_all_matched(self, small_splits):
        assert all(not ep.oos for ep in small_splits.train)

    def test_oos_fraction_within_one(self, small_splits):
        for split in (small_splits.val, small_splits.test):
            n_oos = sum(ep.oos for ep in split)
            assert abs(n_oos - 0.5 * len(split)) <= 1.0

    def test_no_oos_when_fraction_zero(self):
        cfg = dataclasses.replace(SMALL, oos_fraction=0.0)
        splits = generate_dataset(cfg)
        for name in ("train", "val", "test"):
            assert all(ep.gt is not None for ep in splits.split(name))

    def test_deterministic(self):
        a = generate_dataset(SMALL)
        b = generate_dataset(SMALL)
        for sa, sb in zip((a.train, a.val, a.test), (b.train, b.val, b.test)):
            for ea, eb in zip(sa, sb):
                assert ea.id == eb.id
                assert np.array_equal(ea.video_feats, eb.video_feats)
                assert np.array_equal(ea.query_feat, eb.query_feat)
                assert ea.gt == eb.gt

    def test_ids_unique_across_splits(self, small_splits):
        ids = [ep.id for s in (small_splits.train, small_splits.val, small_splits.test) for ep in s]
        assert len(ids) == len(set(ids))

    def test_gt_frame_aligned_and_in_range(self, small_splits):
        for ep in small_splits.train:
            assert ep.gt.is_proper
            assert (ep.gt.start * SMALL.n_frames) == pytest.approx(
                round(ep.gt.start * SMALL.n_frames), abs=1e-9
            )

    def test_moment_length_in_range(self, small_splits):
        lo, hi = SMALL.moment_len_range
        slack = 1.0 / SMALL.n_frames
        for ep in small_splits.train:
            assert lo - slack <= ep.gt.length <= hi + slack

    def test_noiseless_frames_equal_template_exactly(self):
        cfg = dataclasses.replace(SMALL, signal_noise_sigma=0.0)
        splits = generate_dataset(cfg)
        template_map = signal_map_for(cfg)
        ep = splits.train[0]
        mask = frames_in_region(cfg.n_frames, ep.gt)
        expected = template_map @ ep.query_feat
        assert np.allclose(ep.video_feats[mask], expected, atol=1e-12)
        assert not np.allclose(ep.video_feats[~mask][0], expected, atol=1e-6)


class TestCorrelationOracle:
    def test_noiseless_recovery_within_one_frame(self):
        cfg = dataclasses.replace(SMALL, signal_noise_sigma=0.0)
        splits = generate_dataset(cfg)
        for ep in splits.train:
            template = splits.signal_map @ ep.query_feat
            found = correlation_scan(ep.video_feats, template)
            assert abs(found.start - ep.gt.start) <= 1.0 / cfg.n_frames + 1e-12
            assert abs(found.end - ep.gt.end) <= 1.0 / cfg.n_frames + 1e-12

    def test_noisy_default_config_is_learnable(self, small_splits):
        hits = 0
        matched = [ep for ep in small_splits.test if ep.gt is not None]
        for ep in matched:
            template = small_splits.signal_map @ ep.query_feat
            found = correlation_scan(ep.video_feats, template)
            hits += int(tiou(found, ep.gt) > 0.5)
        assert hits / len(matched) >= 0.9


class TestRoundTrip:
    def test_bit_exact(self, small_splits, tmp_path):
        path = tmp_path / "train.jsonl"
        save_split(path, small_splits.train)
        loaded = load_split(path)
        assert len(loaded) == len(small_splits.train)
        for a, b in zip(small_splits.train, loaded):
            assert a.id == b.id
            assert np.array_equal(a.video_feats, b.video_feats)
            assert np.array_equal(a.query_feat, b.query_feat)
            assert a.gt == b.gt

    def test_double_round_trip_identical_text(self, small_splits):
        line = episode_to_json(small_splits.val[0])
        again = episode_to_json(episode_from_json(line))
        assert line == again

    def test_missing_key_rejected(self):
        with pytest.raises(DatasetSchemaError):
            episode_from_json('{"id": "x", "oos": false, "gt": [0, 1], "query": [0]}')

    def test_oos_gt_contradiction_rejected(self):
        with pytest.raises(DatasetSchemaError):
            episode_from_json(
                '{"id": "x", "oos": true, "gt": [0, 1], "query": [0], "frames": [[0]]}'
            )

    def test_bad_json_rejected(self):
        with pytest.raises(DatasetSchemaError):
            episode_from_json("{nope")


class TestFrameGeometry:
    def test_full_region_includes_all(self):
        assert frames_in_region(16, Interval(0.0, 1.0)).all()

    def test_empty_region(self):
        assert not frames_in_region(16, Interval(0.0, 0.0)).any()

    def test_half_open_boundary(self):
        # frame centers at (i + 0.5)/4: region [0, 0.5) holds frames 0 and 1
        mask = frames_in_region(4, Interval(0.0, 0.5))
        assert mask.tolist() == [True, True, False, False]
