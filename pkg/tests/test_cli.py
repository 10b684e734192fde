import json
import xml.etree.ElementTree as ET

import pytest

from momentrl.cli import main

from conftest import TINY_CONFIG


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """gen-data + train + calibrate once; the commands under test share it."""
    root = tmp_path_factory.mktemp("cli")
    cfg = dict(TINY_CONFIG)
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    data_dir = root / "data"
    ckpt = root / "model.ckpt"
    log = root / "train.csv"
    cal = root / "h.json"
    assert main(["gen-data", "--config", str(cfg_path), "--out", str(data_dir)]) == 0
    assert main([
        "train", "--config", str(cfg_path), "--data", str(data_dir),
        "--out", str(ckpt), "--log", str(log), "--quiet",
    ]) == 0
    assert main([
        "oos-calibrate", "--ckpt", str(ckpt), "--val", str(data_dir),
        "--objective", "f1", "--out", str(cal),
    ]) == 0
    return {"root": root, "config": cfg_path, "data": data_dir, "ckpt": ckpt,
            "log": log, "cal": cal}


class TestPipeline:
    def test_artifacts_exist(self, workdir):
        for key in ("data", "ckpt", "log", "cal"):
            assert workdir[key].exists() if hasattr(workdir[key], "exists") else True
        for split in ("train", "val", "test"):
            assert (workdir["data"] / f"{split}.jsonl").exists()
        assert json.loads(workdir["cal"].read_text()).keys() >= {"h", "objective"}

    def test_eval_writes_reports(self, workdir):
        report = workdir["root"] / "metrics.csv"
        oos_report = workdir["root"] / "oos.csv"
        traces = workdir["root"] / "traces.jsonl"
        code = main([
            "eval", "--ckpt", str(workdir["ckpt"]), "--data", str(workdir["data"]),
            "--report", str(report), "--calibration", str(workdir["cal"]),
            "--oos-report", str(oos_report), "--traces-out", str(traces),
        ])
        assert code == 0
        lines = report.read_text().splitlines()
        assert lines[0] == "key,value"
        keys = {l.split(",")[0] for l in lines[1:]}
        assert {"acc50/winner", "acc70/winner", "oos_f1", "oos_accuracy"} <= keys
        oos_lines = oos_report.read_text().splitlines()
        assert oos_lines[0] == "episode_id,eta,h,verdict,label,correct"
        assert len(oos_lines) == 1 + TINY_CONFIG["dataset"]["n_test"]
        assert traces.exists()

    def test_plot_from_traces(self, workdir):
        traces = workdir["root"] / "traces.jsonl"
        if not traces.exists():
            pytest.skip("depends on eval test order")
        episode_id = json.loads(traces.read_text().splitlines()[0])["episode_id"]
        out = workdir["root"] / "map.svg"
        code = main([
            "plot-2dstb", "--traces", str(traces), "--episode", episode_id,
            "--out", str(out), "--data", str(workdir["data"]),
        ])
        assert code == 0
        ET.fromstring(out.read_text())

    def test_retrieve_report(self, workdir):
        report = workdir["root"] / "retrieval.csv"
        code = main([
            "retrieve", "--ckpt", str(workdir["ckpt"]),
            "--queries", str(workdir["data"] / "test.jsonl"),
            "--candidates", str(workdir["data"]), "--report", str(report),
            "--pool-size", "4", "--n-queries", "2",
        ])
        assert code == 0
        lines = report.read_text().splitlines()
        assert lines[0] == "query_id,rank,video_id,eta"
        assert len(lines) == 1 + 2 * 4


class TestFailureContracts:
    def test_corrupted_checkpoint_nonzero_no_partial_report(self, workdir, tmp_path):
        bad = tmp_path / "bad.ckpt"
        blob = workdir["ckpt"].read_bytes()
        bad.write_bytes(blob[: len(blob) // 3])
        report = tmp_path / "metrics.csv"
        code = main([
            "eval", "--ckpt", str(bad), "--data", str(workdir["data"]),
            "--report", str(report),
        ])
        assert code != 0
        assert not report.exists()

    def test_missing_data_dir(self, workdir, tmp_path):
        code = main([
            "eval", "--ckpt", str(workdir["ckpt"]), "--data", str(tmp_path / "nope"),
            "--report", str(tmp_path / "r.csv"),
        ])
        assert code != 0

    def test_unknown_config_key(self, workdir, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text('{"sedd": 1}')
        code = main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "d")])
        assert code != 0

    def test_unknown_flag_exits_two(self, workdir):
        with pytest.raises(SystemExit) as exc:
            main(["eval", "--nope"])
        assert exc.value.code == 2

    def test_plot_unknown_episode(self, workdir, tmp_path):
        traces = workdir["root"] / "traces.jsonl"
        if not traces.exists():
            pytest.skip("depends on eval test order")
        code = main([
            "plot-2dstb", "--traces", str(traces), "--episode", "nope",
            "--out", str(tmp_path / "x.svg"),
        ])
        assert code != 0

    def test_oos_report_needs_threshold(self, workdir, tmp_path):
        code = main([
            "eval", "--ckpt", str(workdir["ckpt"]), "--data", str(workdir["data"]),
            "--report", str(tmp_path / "m.csv"), "--oos-report", str(tmp_path / "o.csv"),
        ])
        assert code != 0


class TestDeterminism:
    def test_gen_data_twice_identical(self, workdir, tmp_path):
        out2 = tmp_path / "data2"
        assert main(["gen-data", "--config", str(workdir["config"]), "--out", str(out2)]) == 0
        for split in ("train", "val", "test"):
            a = (workdir["data"] / f"{split}.jsonl").read_bytes()
            b = (out2 / f"{split}.jsonl").read_bytes()
            assert a == b
