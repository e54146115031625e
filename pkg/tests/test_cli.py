"""End-to-end CLI workflow, exit codes and output determinism."""

import json

import pytest
from click.testing import CliRunner

from regionmem.cli import EXIT_CONFIG, EXIT_DATA, load_events, main


@pytest.fixture
def runner():
    return CliRunner()


def run(runner, args, **kw):
    result = runner.invoke(main, args, catch_exceptions=False, **kw)
    return result


def gen(runner, tmp_path, n=120, layout="loop", extra=()):
    seq = tmp_path / "seq.jsonl"
    labels = tmp_path / "labels.csv"
    res = run(runner, [*extra, "gen-synthetic", "--layout", layout,
                       "--frames", str(n), "--zones", "4",
                       "--out", str(seq), "--labels", str(labels)])
    assert res.exit_code == 0, res.output
    return seq, labels


class TestWorkflow:
    def test_full_pipeline(self, runner, tmp_path):
        seq, labels = gen(runner, tmp_path)
        assert labels.exists()

        out = tmp_path / "map"
        res = run(runner, ["explore", "--sequence", str(seq), "--out", str(out)])
        assert res.exit_code == 0, res.output
        for name in ("clusters.csv", "events.jsonl", "latency.csv"):
            assert (out / name).exists()

        model = tmp_path / "model.bin"
        res = run(runner, ["--set", "train.epochs=5", "train",
                           "--sequence", str(seq), "--model-out", str(model),
                           "--history", str(tmp_path / "loss.csv")])
        assert res.exit_code == 0, res.output
        assert model.read_bytes()[:4] == b"RGNP"
        history = (tmp_path / "loss.csv").read_text().splitlines()
        assert history[0] == "epoch,loss"
        assert len(history) == 6

        rerun = tmp_path / "rerun"
        res = run(runner, ["replay", "--sequence", str(seq), "--model",
                           str(model), "--policy", "region", "--out", str(rerun)])
        assert res.exit_code == 0, res.output

        report = tmp_path / "report.json"
        res = run(runner, ["eval", "--sequence", str(seq), "--events",
                           str(rerun / "events.jsonl"), "--report", str(report)])
        assert res.exit_code == 0, res.output
        doc = json.loads(report.read_text())
        assert set(doc) >= {"policy", "frames", "events_total",
                            "events_detected", "false_positives"}
        assert doc["frames"] == 120

        res = run(runner, ["plot-data", "--run", str(rerun)])
        assert res.exit_code == 0, res.output
        assert (rerun / "clusters.png").exists()
        assert (rerun / "latency.png").exists()

    def test_oracle_replay(self, runner, tmp_path):
        seq, _ = gen(runner, tmp_path, n=80)
        out = tmp_path / "oracle"
        res = run(runner, ["replay", "--sequence", str(seq), "--oracle",
                           "--out", str(out)])
        assert res.exit_code == 0, res.output
        events = load_events(out / "events.jsonl")
        assert any(e.top_regions for e in events)

    def test_plot_data_renders_detection_chart_from_reports(self, runner, tmp_path):
        seq, _ = gen(runner, tmp_path, n=80)
        out = tmp_path / "m"
        run(runner, ["explore", "--sequence", str(seq), "--out", str(out)])
        run(runner, ["eval", "--sequence", str(seq), "--events",
                     str(out / "events.jsonl"), "--policy", "region",
                     "--report", str(out / "report_region.json")])
        res = run(runner, ["plot-data", "--run", str(out)])
        assert res.exit_code == 0, res.output
        assert (out / "detections.png").exists()


class TestDeterminism:
    def test_repeated_runs_are_byte_identical(self, runner, tmp_path):
        seq, _ = gen(runner, tmp_path, n=100)
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            res = run(runner, ["explore", "--sequence", str(seq),
                               "--out", str(out)])
            assert res.exit_code == 0, res.output
        assert (a / "clusters.csv").read_bytes() == (b / "clusters.csv").read_bytes()
        assert (a / "events.jsonl").read_bytes() == (b / "events.jsonl").read_bytes()
        # latency.csv is timing data and is expected to differ between runs.

    def test_gen_synthetic_deterministic_per_seed(self, runner, tmp_path):
        for sub in ("1", "2", "3"):
            (tmp_path / sub).mkdir()
        s1, _ = gen(runner, tmp_path / "1", extra=["--seed", "9"])
        s2, _ = gen(runner, tmp_path / "2", extra=["--seed", "9"])
        s3, _ = gen(runner, tmp_path / "3", extra=["--seed", "10"])
        assert s1.read_bytes() == s2.read_bytes()
        assert s1.read_bytes() != s3.read_bytes()

    def test_report_is_byte_identical(self, runner, tmp_path):
        seq, _ = gen(runner, tmp_path, n=100)
        out = tmp_path / "m"
        run(runner, ["explore", "--sequence", str(seq), "--out", str(out)])
        r1, r2 = tmp_path / "r1.json", tmp_path / "r2.json"
        for rp in (r1, r2):
            res = run(runner, ["eval", "--sequence", str(seq), "--events",
                               str(out / "events.jsonl"), "--report", str(rp)])
            assert res.exit_code == 0, res.output
        assert r1.read_bytes() == r2.read_bytes()


class TestConfig:
    def test_config_file_and_set_overrides(self, runner, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# tuned run\nmemory.n_wm = 30\ncluster.r_max = 4.0\n")
        seq, _ = gen(runner, tmp_path, n=60)
        out = tmp_path / "m"
        res = run(runner, ["--config", str(cfg), "--set", "memory.n_wm=25",
                           "explore", "--sequence", str(seq), "--out", str(out)])
        assert res.exit_code == 0, res.output

    def test_unknown_config_key_exits_2(self, runner, tmp_path):
        seq, _ = gen(runner, tmp_path, n=30)
        res = runner.invoke(main, ["--set", "memory.bogus=1", "explore",
                                   "--sequence", str(seq),
                                   "--out", str(tmp_path / "m")])
        assert res.exit_code == EXIT_CONFIG
        assert "configuration error" in res.output

    def test_bad_config_value_exits_2(self, runner, tmp_path):
        seq, _ = gen(runner, tmp_path, n=30)
        res = runner.invoke(main, ["--set", "memory.n_wm=zero", "explore",
                                   "--sequence", str(seq),
                                   "--out", str(tmp_path / "m")])
        assert res.exit_code == EXIT_CONFIG

    def test_model_and_oracle_are_exclusive(self, runner, tmp_path):
        seq, _ = gen(runner, tmp_path, n=30)
        model = tmp_path / "m.bin"
        model.write_bytes(b"RGNP" + b"\x00" * 14)
        res = runner.invoke(main, ["replay", "--sequence", str(seq),
                                   "--model", str(model), "--oracle",
                                   "--out", str(tmp_path / "o")])
        assert res.exit_code == EXIT_CONFIG
        assert "mutually exclusive" in res.output


class TestDataErrors:
    def test_corrupt_sequence_exits_3(self, runner, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{broken\n")
        res = runner.invoke(main, ["explore", "--sequence", str(bad),
                                   "--out", str(tmp_path / "m")])
        assert res.exit_code == EXIT_DATA
        assert "data error" in res.output

    def test_corrupt_model_exits_3(self, runner, tmp_path):
        seq, _ = gen(runner, tmp_path, n=30)
        model = tmp_path / "m.bin"
        model.write_bytes(b"NOPE" + b"\x00" * 20)
        res = runner.invoke(main, ["replay", "--sequence", str(seq),
                                   "--model", str(model),
                                   "--out", str(tmp_path / "o")])
        assert res.exit_code == EXIT_DATA

    def test_empty_run_dir_has_nothing_to_plot(self, runner, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        res = runner.invoke(main, ["plot-data", "--run", str(empty)])
        assert res.exit_code == EXIT_DATA
        assert "nothing to plot" in res.output

    def test_corrupt_events_exits_3(self, runner, tmp_path):
        seq, _ = gen(runner, tmp_path, n=30)
        ev = tmp_path / "events.jsonl"
        ev.write_text('{"step": 1}\n')
        res = runner.invoke(main, ["eval", "--sequence", str(seq),
                                   "--events", str(ev),
                                   "--report", str(tmp_path / "r.json")])
        assert res.exit_code == EXIT_DATA
        assert "bad event record" in res.output


class TestEventsRoundTrip:
    def test_written_events_load_back(self, runner, tmp_path):
        seq, _ = gen(runner, tmp_path, n=60)
        out = tmp_path / "m"
        run(runner, ["explore", "--sequence", str(seq), "--out", str(out)])
        events = load_events(out / "events.jsonl")
        assert len(events) == 60
        assert [e.step for e in events] == list(range(1, 61))
        assert all(e.wm_size >= 0 for e in events)
