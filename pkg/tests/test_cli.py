from importlib import resources

import pytest

from bamsim.cli import main

GOLDEN_TEXT = resources.files("bamsim.data").joinpath("golden.scn").read_text(encoding="utf-8")
DRIFT_TEXT = resources.files("bamsim.data").joinpath("drift.scn").read_text(encoding="utf-8")


@pytest.fixture
def golden_file(tmp_path):
    path = tmp_path / "golden.scn"
    path.write_text(GOLDEN_TEXT)
    return path


@pytest.fixture
def drift_file(tmp_path):
    path = tmp_path / "drift.scn"
    path.write_text(DRIFT_TEXT)
    return path


def grants_in(trace_path):
    out = []
    for line in trace_path.read_text().splitlines():
        cols = line.split("\t")
        if cols[1] == "grant":
            out.append(cols[2])
    return out


def test_validate_ok(golden_file, capsys):
    assert main(["validate", "--scenario", str(golden_file)]) == 0
    assert "ok" in capsys.readouterr().out


def test_validate_semantic_error_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text(GOLDEN_TEXT.replace("constraint 50", "constraint 60"))
    assert main(["validate", "--scenario", str(bad)]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_scenario_file_exits_2(tmp_path):
    assert main(["run", "--scenario", str(tmp_path / "absent.scn")]) == 2


def test_bad_flags_exit_1(capsys):
    assert main(["run"]) == 1
    assert main(["frobnicate"]) == 1


def test_run_writes_trace_and_metrics(golden_file, tmp_path):
    trace = tmp_path / "t.txt"
    metrics = tmp_path / "m.csv"
    code = main(
        [
            "run",
            "--scenario",
            str(golden_file),
            "--policy",
            "atcs",
            "--preemption",
            "on",
            "--trace-out",
            str(trace),
            "--metrics-out",
            str(metrics),
        ]
    )
    assert code == 0
    assert grants_in(trace) == ["req1", "req2", "req3", "req4", "req6", "req7", "req8"]
    header = metrics.read_text().splitlines()[0]
    assert header.startswith("scope,class,arrivals")


def test_run_mam_override(golden_file, tmp_path):
    trace = tmp_path / "t.txt"
    code = main(
        ["run", "--scenario", str(golden_file), "--policy", "mam", "--trace-out", str(trace), "--metrics-out", str(tmp_path / "m.csv")]
    )
    assert code == 0
    assert grants_in(trace) == ["req1", "req2", "req3", "req6", "req7", "req8"]


def test_golden_command_passes_on_clean_tree(capsys):
    assert main(["golden"]) == 0
    out = capsys.readouterr().out
    assert "golden ok: preemption" in out
    assert "golden ok: nopreemption" in out


def test_golden_variant_flag():
    assert main(["golden", "--variant", "preemption"]) == 0


def test_compare_writes_one_row_per_policy(golden_file, tmp_path):
    out = tmp_path / "c.csv"
    assert main(["compare", "--scenario", str(golden_file), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 4
    assert [row.split(",")[0] for row in lines] == ["policy", "mam", "rdm", "atcs"]
    grants = [int(row.split(",")[2]) for row in lines[1:]]
    assert grants[0] <= grants[1] <= grants[2]


def test_compare_empty_scenario_gives_zero_rows(tmp_path):
    text = GOLDEN_TEXT.split("[events]")[0] + "[events]\n"
    scn = tmp_path / "empty.scn"
    scn.write_text(text)
    out = tmp_path / "c.csv"
    assert main(["compare", "--scenario", str(scn), "--out", str(out)]) == 0
    for row in out.read_text().splitlines()[1:]:
        cols = row.split(",")
        assert cols[1] == "0" and cols[2] == "0" and cols[3] == "0"


def test_train_twice_same_seed_identical_qtable(drift_file, tmp_path):
    paths = []
    for tag in ("first", "second"):
        q = tmp_path / f"q_{tag}.txt"
        c = tmp_path / f"c_{tag}.csv"
        code = main(
            [
                "train",
                "--scenario",
                str(drift_file),
                "--episodes",
                "5",
                "--seed",
                "7",
                "--qtable-out",
                str(q),
                "--curve-out",
                str(c),
            ]
        )
        assert code == 0
        paths.append((q, c))
    assert paths[0][0].read_bytes() == paths[1][0].read_bytes()
    assert paths[0][1].read_bytes() == paths[1][1].read_bytes()


def test_train_rejects_non_generator_scenario(golden_file, tmp_path):
    code = main(
        [
            "train",
            "--scenario",
            str(golden_file),
            "--episodes",
            "2",
            "--qtable-out",
            str(tmp_path / "q.txt"),
            "--curve-out",
            str(tmp_path / "c.csv"),
        ]
    )
    assert code == 1


def test_train_curve_has_one_row_per_episode(drift_file, tmp_path):
    curve = tmp_path / "curve.csv"
    main(
        [
            "train",
            "--scenario",
            str(drift_file),
            "--episodes",
            "4",
            "--qtable-out",
            str(tmp_path / "q.txt"),
            "--curve-out",
            str(curve),
        ]
    )
    lines = curve.read_text().splitlines()
    assert lines[0] == "episode,blocking_ratio"
    assert len(lines) == 5


def test_run_with_trained_qtable(drift_file, tmp_path):
    qpath = tmp_path / "q.txt"
    main(
        [
            "train",
            "--scenario",
            str(drift_file),
            "--episodes",
            "10",
            "--qtable-out",
            str(qpath),
            "--curve-out",
            str(tmp_path / "c.csv"),
        ]
    )
    code = main(
        [
            "run",
            "--scenario",
            str(drift_file),
            "--manager",
            "rl",
            "--qtable",
            str(qpath),
            "--seed",
            "3",
            "--trace-out",
            str(tmp_path / "t.txt"),
            "--metrics-out",
            str(tmp_path / "m.csv"),
        ]
    )
    assert code == 0
