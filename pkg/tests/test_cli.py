import json
import shutil
from pathlib import Path

import pytest

from stap.cli import main
from stap.fixtures import generate_fixtures
from stap.temporal import load_score_trace

DATA = Path(__file__).parent / "data"


@pytest.fixture
def fx(tmp_path, fixtures_dir, monkeypatch):
    """A private copy of the fixture set, used as the working directory."""
    d = tmp_path / "fx"
    shutil.copytree(fixtures_dir, d)
    monkeypatch.chdir(d)
    return d


def report(out):
    return json.loads((Path(out) / "report.json").read_text())


def timing_free(doc):
    doc = dict(doc)
    doc.pop("stats")
    doc["predictions"] = [{k: v for k, v in p.items() if k != "latency_ms"} for p in doc["predictions"]]
    return doc


def write_scores(path, table):
    path.write_text("".join(json.dumps({"window": w, "scores": s}) + "\n" for w, s in table.items()))
    return path


# -- run ----------------------------------------------------------------------

def test_run_fixture30_parallel_two_predictions(fx):
    rc = main(["run", "--mode", "parallel", "--window-size", "15", "--frame-interval", "1",
               "--source", "fixture30.stap", "--spatial-backend", "trace:empty_spatial.jsonl",
               "--temporal-backend", "trace:fixture30_temporal.jsonl", "--out", "out"])
    assert rc == 0
    doc = report(fx / "out")
    assert len(doc["predictions"]) == 2
    assert [p["label"] for p in doc["predictions"]] == ["fight", "normal"]
    assert (fx / "out" / "report.csv").exists()
    assert (fx / "out" / "latency.png").stat().st_size > 0
    assert (fx / "out" / "config.ini").exists()


def test_run_temporal_only_passes_trace_argmax(fx):
    rc = main(["run", "--mode", "temporal-only", "--source", "fusion.stap",
               "--temporal-backend", "trace:fusion_temporal.jsonl", "--out", "out", "--no-figures"])
    assert rc == 0
    table = load_score_trace(fx / "fusion_temporal.jsonl")
    got = [(p["window_index"], p["label"]) for p in report(fx / "out")["predictions"]]
    assert got == [(w, table[w].argmax_class.value) for w in sorted(table)]


def test_run_serial_mask_black_empty_trace(fx):
    rc = main(["run", "--mode", "serial", "--preprocess", "mask-black", "--source", "fixture30.stap",
               "--spatial-backend", "trace:empty_spatial.jsonl",
               "--temporal-backend", "trace:fixture30_temporal.jsonl", "--out", "out", "--no-figures"])
    assert rc == 0
    preds = report(fx / "out")["predictions"]
    assert len(preds) == 2
    assert {p["source"] for p in preds} == {"temporal-on-serial"}


def test_run_from_config_file_with_flag_override(fx):
    assert main(["run", "--config", "parallel.ini", "--source", "fusion.stap", "--out", "a", "--no-figures"]) == 0
    assert report(fx / "a")["config"]["pipeline"]["mode"] == "parallel"
    assert main(["run", "--config", "parallel.ini", "--mode", "temporal-only", "--source", "fusion.stap",
                 "--out", "b", "--no-figures"]) == 0
    doc = report(fx / "b")
    assert doc["config"]["pipeline"]["mode"] == "temporal-only" and doc["spatial_calls"] == 0


def test_config_echo_reproduces_report(fx, tmp_path):
    assert main(["run", "--config", "serial.ini", "--source", "fusion.stap", "--out", "first", "--no-figures"]) == 0
    echo = fx / "first" / "config.ini"
    # the echo carries absolute backend paths, so it works from anywhere
    moved = tmp_path / "elsewhere"
    moved.mkdir()
    shutil.copy(echo, moved / "config.ini")
    assert main(["run", "--config", str(moved / "config.ini"), "--source", str(fx / "fusion.stap"),
                 "--out", str(moved / "second"), "--no-figures"]) == 0
    assert timing_free(report(fx / "first")) == timing_free(report(moved / "second"))


def test_run_repeated_is_identical(fx):
    args = ["run", "--config", "parallel.ini", "--source", "fusion.stap", "--no-figures"]
    assert main(args + ["--out", "a"]) == 0 and main(args + ["--out", "b"]) == 0
    assert timing_free(report(fx / "a")) == timing_free(report(fx / "b"))


@pytest.mark.parametrize("argv", [
    ["run", "--source", "fusion.stap", "--out", "o", "--bogus"],
    ["run", "--source", "missing.stap", "--out", "o"],
    ["run", "--source", "fusion.stap", "--out", "o", "--spatial-backend", "onnx:model.onnx"],
    ["run", "--source", "fusion.stap", "--out", "o", "--temporal-backend", "trace:nope.jsonl"],
    ["run", "--source", "fusion.stap", "--out", "o", "--mode", "serial"],
    ["run", "--source", "fusion.stap", "--out", "o", "--window-size", "0"],
    ["run", "--source", "fusion.stap", "--out", "o", "--config", "absent.ini"],
    ["frobnicate"],
])
def test_run_config_errors_exit_2(fx, argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err


def test_run_partial_exit_3(fx):
    write_scores(fx / "one.jsonl", {0: {"fight": 0.7, "normal": 0.3}})
    rc = main(["run", "--mode", "temporal-only", "--source", "fixture30.stap",
               "--temporal-backend", "trace:one.jsonl", "--out", "out", "--no-figures"])
    assert rc == 3
    doc = report(fx / "out")
    assert doc["skipped_windows"] == 1 and len(doc["predictions"]) == 1
    assert doc["gaps"][0]["window_index"] == 1


def test_run_total_failure_exit_4(fx):
    write_scores(fx / "other.jsonl", {99: {"normal": 1.0}})
    rc = main(["run", "--mode", "temporal-only", "--source", "fixture30.stap",
               "--temporal-backend", "trace:other.jsonl", "--out", "out", "--no-figures"])
    assert rc == 4
    assert report(fx / "out")["skipped_windows"] == 2


def test_run_truncated_source_exit_3(fx):
    data = (fx / "fixture30.stap").read_bytes()
    (fx / "cut.stap").write_bytes(data[:-10])
    rc = main(["run", "--mode", "temporal-only", "--source", "cut.stap",
               "--temporal-backend", "trace:fixture30_temporal.jsonl", "--out", "out", "--no-figures"])
    assert rc == 3
    doc = report(fx / "out")
    assert len(doc["predictions"]) == 1 and "frame 29" in doc["source_error"]


# -- eval -----------------------------------------------------------------------

def test_eval_golden_report_is_byte_identical(tmp_path, capsys):
    g = DATA / "golden_eval"
    rc = main(["eval", "--predictions", str(g / "predictions.csv"), "--truth", str(g / "truth.csv"),
               "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "eval.txt").read_bytes() == (g / "expected.txt").read_bytes()
    assert (tmp_path / "eval.csv").read_bytes() == (g / "expected.csv").read_bytes()
    assert capsys.readouterr().out == (g / "expected.txt").read_text()
    assert (tmp_path / "confusion.png").stat().st_size > 0


def test_eval_perfect_match(fx, tmp_path):
    assert main(["run", "--config", "parallel.ini", "--source", "fusion.stap", "--out", "run", "--no-figures"]) == 0
    rc = main(["eval", "--predictions", "run/report.json", "--truth", "fusion_truth.csv",
               "--out", str(tmp_path), "--no-figures"])
    assert rc == 0
    doc = json.loads((tmp_path / "eval.json").read_text())
    assert doc["metrics"] == {"accuracy": 100.0, "precision": 100.0, "recall": 100.0, "f1": 100.0}


def test_eval_profile_violation_exit_2(tmp_path, capsys):
    (tmp_path / "t.csv").write_text("window_index,label\n0,fire\n1,fight\n")
    (tmp_path / "p.csv").write_text("window_index,label\n0,normal\n1,fight\n")
    rc = main(["eval", "--predictions", str(tmp_path / "p.csv"), "--truth", str(tmp_path / "t.csv"),
               "--profile", "3"])
    assert rc == 2
    assert "(0, 'fire', 'normal')" in capsys.readouterr().err


def test_eval_missing_label_exit_2(tmp_path, capsys):
    (tmp_path / "t.csv").write_text("window_index,label\n0,fight\n")
    (tmp_path / "p.csv").write_text("window_index,label\n0,fight\n4,normal\n")
    assert main(["eval", "--predictions", str(tmp_path / "p.csv"), "--truth", str(tmp_path / "t.csv")]) == 2
    assert "[4]" in capsys.readouterr().err


def test_eval_empty_predictions_exit_2(tmp_path):
    (tmp_path / "t.csv").write_text("window_index,label\n0,fight\n")
    (tmp_path / "p.csv").write_text("window_index,label\n")
    assert main(["eval", "--predictions", str(tmp_path / "p.csv"), "--truth", str(tmp_path / "t.csv")]) == 2


# -- bench --------------------------------------------------------------------

def test_bench_small(tmp_path, capsys):
    rc = main(["bench", "--spatial-latency", "2", "--temporal-latency", "4", "--windows", "3",
               "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "parallel" in out and "serial" in out
    doc = json.loads((tmp_path / "bench.json").read_text())
    assert {r["mode"] for r in doc["rows"]} == {"parallel", "serial"}
    assert (tmp_path / "bench.png").stat().st_size > 0


@pytest.mark.parametrize("flag", ["--spatial-backend", "--temporal-backend"])
def test_bench_rejects_trace_backends(fx, flag, capsys):
    assert main(["bench", flag, "trace:fusion_spatial.jsonl"]) == 2
    assert "synthetic" in capsys.readouterr().err


def test_bench_unknown_mode_exit_2():
    assert main(["bench", "--modes", "sideways", "--windows", "1"]) == 2


# -- inspect ------------------------------------------------------------------

def test_inspect_source(fx, capsys):
    assert main(["inspect", "fixture30.stap"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["frame_count"] == 30 and info["windows"] == 2
    assert info["duration_ms"] == pytest.approx(1000.0)


def test_inspect_traces_and_report(fx, capsys):
    assert main(["inspect", "red_quadrant_spatial.jsonl"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["kind"] == "spatial-trace" and info["detections_by_class"]["flame"] > 0
    assert main(["inspect", "fixture30_temporal.jsonl"]) == 0
    assert json.loads(capsys.readouterr().out)["argmax"] == {"0": "fight", "1": "normal"}
    main(["run", "--config", "parallel.ini", "--source", "fusion.stap", "--out", "r", "--no-figures"])
    capsys.readouterr()
    assert main(["inspect", "r/report.json"]) == 0
    assert json.loads(capsys.readouterr().out)["predictions"] == 40


def test_inspect_missing_exit_2(tmp_path):
    assert main(["inspect", str(tmp_path / "nothing")]) == 2


# -- gen-fixtures ---------------------------------------------------------------

def test_gen_fixtures_is_byte_deterministic(tmp_path):
    assert main(["gen-fixtures", "--out", str(tmp_path / "a")]) == 0
    assert main(["gen-fixtures", "--out", str(tmp_path / "b"), "--seed", "0"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_gen_fixtures_seed_changes_content(tmp_path):
    generate_fixtures(tmp_path / "a", 0)
    generate_fixtures(tmp_path / "b", 1)
    assert (tmp_path / "a" / "checkerboard.stap").read_bytes() == (tmp_path / "b" / "checkerboard.stap").read_bytes()
    assert (tmp_path / "a" / "fusion_spatial.jsonl").read_bytes() != (tmp_path / "b" / "fusion_spatial.jsonl").read_bytes()


def test_gen_fixtures_unwritable_exit_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["gen-fixtures", "--out", str(blocker / "sub")]) == 2


def test_fixture_traces_cover_gate_false_and_flame(fixtures_dir):
    cells = [json.loads(line) for line in (fixtures_dir / "fusion_cells.jsonl").read_text().splitlines()]
    assert any(c["objects"] == ["firearm"] and not c["gate"] and not c["flag"] for c in cells)
    records = [json.loads(line) for line in (fixtures_dir / "red_quadrant_spatial.jsonl").read_text().splitlines()]
    assert any(d["class"] == "flame" for r in records for d in r["detections"])
