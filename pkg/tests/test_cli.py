import json
import shutil
import subprocess
import sys

import pytest

from logsim import read_embedding_file
from logsim.cli import main

from oracles import auroc_by_pairs, best_f1_exhaustive


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A generated corpus split into known-normal and test files."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus.jsonl"
    assert main(["gen", "--out", str(corpus), "--seed", "7"]) == 0

    records = [json.loads(line) for line in corpus.read_text().splitlines()]
    known = [r for r in records if r["label"] == 0][:400]
    (root / "known.jsonl").write_text(
        "".join(json.dumps(r) + "\n" for r in known))
    (root / "test.jsonl").write_text(
        "".join(json.dumps(r) + "\n" for r in records))

    assert main(["build-db", "--input", str(root / "known.jsonl"),
                 "--out", str(root / "known.rpdb")]) == 0
    assert main(["embed", "--db", str(root / "known.rpdb"),
                 "--out", str(root / "known.rpde")]) == 0
    return root


def detect_args(root, out, *extra):
    # Known normals score ~0 under mean aggregation while the injected
    # anomalies land above 0.18, so a fixed 0.1 threshold separates them.
    return ["detect", "--db", str(root / "known.rpdb"),
            "--test", str(root / "test.jsonl"), "--aggregation", "mean",
            "--threshold-policy", "fixed", "--threshold-value", "0.1",
            "--out", str(out), *extra]


def read_rows(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


class TestPipeline:
    def test_gen_writes_labeled_jsonl(self, tmp_path):
        out = tmp_path / "c.jsonl"
        assert main(["gen", "--types", "3", "--logs-per-type", "10",
                     "--anomaly-rate", "0.1", "--out", str(out)]) == 0
        rows = read_rows(out)
        assert len(rows) == 30
        assert all(set(r) == {"text", "label"} for r in rows)
        assert {r["label"] for r in rows} == {0, 1}

    def test_detect_writes_decisions(self, workspace, tmp_path):
        out = tmp_path / "results.jsonl"
        assert main(detect_args(workspace, out)) == 0
        rows = read_rows(out)
        labels = [r["label"] for r in read_rows(workspace / "test.jsonl")]
        assert len(rows) == len(labels)
        assert set(rows[0]) == {"index", "seq_id", "score", "pred",
                                "threshold", "nearest_doc"}
        assert [r["index"] for r in rows] == list(range(len(rows)))
        # The corpus is separable at this threshold: flags exactly the
        # injected anomalies.
        assert [r["pred"] for r in rows] == labels

    def test_quantile_calibration_flags_anomalies_only(self, workspace, tmp_path):
        out = tmp_path / "cal.jsonl"
        assert main(["detect", "--db", str(workspace / "known.rpdb"),
                     "--test", str(workspace / "test.jsonl"),
                     "--threshold-value", "0.999",
                     "--out", str(out)]) == 0
        rows = read_rows(out)
        labels = [r["label"] for r in read_rows(workspace / "test.jsonl")]
        flagged = {r["index"] for r in rows if r["pred"] == 1}
        anomalies = {i for i, l in enumerate(labels) if l == 1}
        assert anomalies <= flagged
        assert len(flagged - anomalies) <= len(labels) // 20

    def test_eval_from_results_matches_oracles(self, workspace, tmp_path, capsys):
        out = tmp_path / "results.jsonl"
        assert main(detect_args(workspace, out)) == 0
        capsys.readouterr()
        assert main(["eval", "--results", str(out),
                     "--labels", str(workspace / "test.jsonl"),
                     "--best-f1", "--auroc"]) == 0
        printed = dict(line.split() for line in
                       capsys.readouterr().out.strip().splitlines())
        rows = read_rows(out)
        labels = [r["label"] for r in read_rows(workspace / "test.jsonl")]
        pairs = [(row["score"], labels[row["index"]]) for row in rows]
        assert float(printed["best_f1"]) == pytest.approx(
            best_f1_exhaustive(pairs)[0], abs=1e-9)
        assert float(printed["auroc"]) == pytest.approx(
            auroc_by_pairs(pairs), abs=1e-9)

    def test_eval_end_to_end_report(self, workspace, capsys):
        assert main(["eval", "--db", str(workspace / "known.rpdb"),
                     "--test", str(workspace / "test.jsonl")]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["n"] == 500
        assert report["positives"] > 0
        assert report["best_f1"] == 1.0
        assert report["auroc"] == 1.0

    def test_coverage_report(self, workspace, capsys):
        assert main(["coverage", "--db", str(workspace / "known.rpdb"),
                     "--test", str(workspace / "test.jsonl")]) == 0
        report = json.loads(capsys.readouterr().out)
        assert 0.0 < report["seq_coverage"] <= 1.0
        assert 0.0 < report["token_coverage"] <= 1.0
        assert report["n_test_records"] == 500

    def test_ablate_renders_cells(self, workspace, capsys):
        assert main(["ablate", "--input", str(workspace / "corpus.jsonl"),
                     "--axis", "core_ratio", "--values", "1.0,0.1",
                     "--dim", "16"]) == 0
        cells = json.loads(capsys.readouterr().out)["cells"]
        assert [c["value"] for c in cells] == [1.0, 0.1]
        assert all(0.0 <= c["best_f1"] <= 1.0 for c in cells)

    def test_block_mode_round_trip(self, workspace, tmp_path, capsys):
        records = read_rows(workspace / "test.jsonl")[:30]
        blocks = tmp_path / "blocks.jsonl"
        blocks.write_text("".join(
            json.dumps({**r, "block_id": f"b{i % 6}"}) + "\n"
            for i, r in enumerate(records)))
        db = tmp_path / "blocks.rpdb"
        assert main(["build-db", "--input", str(blocks), "--block-mode",
                     "--out", str(db)]) == 0
        out = tmp_path / "block-results.jsonl"
        assert main(["detect", "--db", str(db), "--test", str(blocks),
                     "--block-mode", "--threshold-policy", "fixed",
                     "--threshold-value", "0.5", "--out", str(out)]) == 0
        rows = read_rows(out)
        assert len(rows) == 30
        assert all("block_id" in r for r in rows)
        by_block = {}
        for row in rows:
            by_block.setdefault(row["block_id"], set()).add(row["score"])
        assert all(len(scores) == 1 for scores in by_block.values())


class TestDeterminism:
    def test_replay_from_config_echo(self, workspace, tmp_path, capsys):
        first = tmp_path / "first.jsonl"
        assert main(detect_args(workspace, first, "--dim", "32",
                                "--core-ratio", "0.5")) == 0
        echoed = json.loads(capsys.readouterr().err.splitlines()[0])
        assert echoed["subcommand"] == "detect"

        replay = tmp_path / "replay.jsonl"
        echoed.pop("subcommand")
        echoed["out"] = str(replay)
        config = tmp_path / "detect.json"
        config.write_text(json.dumps(echoed))
        assert main(["detect", "--config", str(config)]) == 0
        assert replay.read_bytes() == first.read_bytes()

    def test_worker_count_does_not_change_output(self, workspace, tmp_path):
        a = tmp_path / "w1.jsonl"
        b = tmp_path / "w8.jsonl"
        assert main(detect_args(workspace, a, "--workers", "1")) == 0
        assert main(detect_args(workspace, b, "--workers", "8")) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_repeated_runs_identical(self, workspace, tmp_path):
        a = tmp_path / "r1.jsonl"
        b = tmp_path / "r2.jsonl"
        assert main(detect_args(workspace, a)) == 0
        assert main(detect_args(workspace, b)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_env_overrides_default_but_not_flag(self, workspace, tmp_path,
                                                monkeypatch):
        monkeypatch.setenv("LOGSIM_DIM", "48")
        out_env = tmp_path / "env.rpde"
        assert main(["embed", "--db", str(workspace / "known.rpdb"),
                     "--out", str(out_env)]) == 0
        assert read_embedding_file(str(out_env))[0] == 48

        out_flag = tmp_path / "flag.rpde"
        assert main(["embed", "--db", str(workspace / "known.rpdb"),
                     "--dim", "32", "--out", str(out_flag)]) == 0
        assert read_embedding_file(str(out_flag))[0] == 32


class TestExitCodes:
    def test_usage_errors_exit_one(self, workspace, tmp_path):
        assert main([]) == 1
        assert main(["frobnicate"]) == 1
        assert main(["build-db", "--out", str(tmp_path / "x.rpdb")]) == 1
        assert main(detect_args(workspace, tmp_path / "x.jsonl",
                                "--core-ratio", "0")) == 1
        results = tmp_path / "some.jsonl"
        results.write_text('{"index": 0, "score": 0.5}\n')
        assert main(["eval", "--results", str(results)]) == 1
        assert main(["eval", "--results", str(tmp_path / "nope.jsonl"),
                     "--labels", str(tmp_path / "nope.jsonl")]) == 2

    def test_unknown_flag_exits_one(self, workspace, tmp_path, capsys):
        assert main(detect_args(workspace, tmp_path / "x.jsonl",
                                "--learning-rate", "3")) == 1

    def test_missing_file_exits_two(self, workspace, tmp_path):
        assert main(["detect", "--db", str(tmp_path / "absent.rpdb"),
                     "--test", str(workspace / "test.jsonl"),
                     "--threshold-policy", "fixed",
                     "--threshold-value", "0.5"]) == 2

    def test_corrupt_store_exits_two(self, workspace, tmp_path):
        bad = tmp_path / "bad.rpdb"
        data = bytearray((workspace / "known.rpdb").read_bytes())
        data[0:4] = b"NOPE"
        bad.write_bytes(bytes(data))
        assert main(["detect", "--db", str(bad),
                     "--test", str(workspace / "test.jsonl"),
                     "--threshold-policy", "fixed",
                     "--threshold-value", "0.5"]) == 2

    def test_malformed_input_exits_two(self, workspace, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"text": "ok", "label": 0}\n{oops\n')
        assert main(["build-db", "--input", str(bad),
                     "--out", str(tmp_path / "x.rpdb")]) == 2

    def test_calibration_requires_hash_provider(self, workspace, tmp_path):
        assert main(["detect", "--db", str(workspace / "known.rpdb"),
                     "--test", str(workspace / "test.jsonl"),
                     "--provider", "file",
                     "--embeddings", str(workspace / "known.rpde"),
                     "--out", str(tmp_path / "x.jsonl")]) == 1


class TestConfigEcho:
    def test_stderr_first_line_is_json(self, workspace, tmp_path, capsys):
        assert main(detect_args(workspace, tmp_path / "o.jsonl")) == 0
        first = capsys.readouterr().err.splitlines()[0]
        echoed = json.loads(first)
        assert echoed["subcommand"] == "detect"
        assert echoed["threshold_policy"] == "fixed"
        assert echoed["workers"] == 1


@pytest.mark.skipif(shutil.which("logsim") is None,
                    reason="console script not installed")
class TestConsoleScript:
    def test_version_runs(self):
        proc = subprocess.run(["logsim", "--version"], capture_output=True,
                              text=True)
        assert proc.returncode == 0
        assert "logsim" in proc.stdout

    def test_module_invocation(self):
        proc = subprocess.run([sys.executable, "-m", "logsim.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "subcommand" in proc.stdout or "usage" in proc.stdout
