import csv
import subprocess
import sys

import pytest

from chanagg.cli import EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, main
from chanagg.policy import PolicyKind
from chanagg.runner import CSV_COLUMNS, result_rows, run_replications, sweep, to_csv
from chanagg.scenario import with_value

SMALL = """
[spectrum]
channels = 2
slots_per_channel = 2
[traffic]
pu_arrival_rate = 0.3
[class i]
arrival_rate = 1.0
service_rate = 0.8
theta = 2
theta_min = 1
[policy]
kind = RBS_Q
q1_max = 1
q2_max = 1
deadline = 3
[sim]
horizon = 300
replications = 2
seed = 5
"""


@pytest.fixture
def scn(tmp_path):
    p = tmp_path / "small.scn"
    p.write_text(SMALL)
    return str(p)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_writes_csv_and_is_repeatable(scn, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", scn, "--out", str(a)]) == EXIT_OK
    assert main(["run", scn, "--out", str(b)]) == EXIT_OK
    for name in ("replications.csv", "summary.csv", "trace.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert b"\r" not in (a / "replications.csv").read_bytes()
    assert [r["replication"] for r in rows(a / "replications.csv")] == ["0", "1"]


def test_single_replication_has_empty_ci(scn, tmp_path):
    assert main(["run", scn, "--reps", "1", "--out", str(tmp_path)]) == EXIT_OK
    for r in rows(tmp_path / "summary.csv"):
        assert r["n"] == "1"
        assert r["half_width"] == "" and r["ci_low"] == ""


def test_out_dir_from_environment(scn, tmp_path, monkeypatch):
    monkeypatch.setenv("CHANAGG_OUT", str(tmp_path / "env"))
    assert main(["run", scn, "--reps", "1"]) == EXIT_OK
    assert (tmp_path / "env" / "replications.csv").exists()


def test_sweep_cardinality(scn, tmp_path):
    code = main(["sweep", scn, "--param", "traffic.pu_arrival_rate", "--values", "0.1,0.2,0.3,0.4,0.5",
                 "--policy", "IBS_Q,RBS_Q", "--reps", "3", "--out", str(tmp_path)])
    assert code == EXIT_OK
    out = rows(tmp_path / "sweep.csv")
    assert len(out) == 30
    assert {(r["policy"], r["swept_value"]) for r in out} == {
        (p, v) for p in ("IBS_Q", "RBS_Q") for v in ("0.1", "0.2", "0.3", "0.4", "0.5")}


def test_sweep_with_one_value_equals_run(scn):
    from chanagg.scenario import load_scenario
    sc = load_scenario(scn)
    a = sweep(sc, "traffic.pu_arrival_rate", ["0.3"], [PolicyKind.RBS_Q])
    b = run_replications(sc, swept_value="0.3")
    assert to_csv(CSV_COLUMNS, result_rows(a)) == to_csv(CSV_COLUMNS, result_rows(b))


def test_queue_size_zero_matches_baselines(scn):
    from chanagg.scenario import load_scenario
    sc = with_value(load_scenario(scn), "policy.queue_size", "0")
    for q, base in ((PolicyKind.IBS_Q, PolicyKind.IBS), (PolicyKind.RBS_Q, PolicyKind.RBS)):
        a = run_replications(sc, q)
        b = run_replications(sc, base)
        assert [r.counters.as_dict() for r in a] == [r.counters.as_dict() for r in b]
        assert [r.trace_hash for r in a] == [r.trace_hash for r in b]


def test_validate_passes_and_refuses(tmp_path):
    mm11 = tmp_path / "mm11.scn"
    mm11.write_text(SMALL.replace("pu_arrival_rate = 0.3", "pu_arrival_rate = 0")
                    .replace("channels = 2", "channels = 1").replace("slots_per_channel = 2", "slots_per_channel = 1")
                    .replace("theta = 2\ntheta_min = 1", "theta = 1").replace("service_rate = 0.8", "service_rate = 1")
                    .replace("kind = RBS_Q", "kind = IBS").replace("horizon = 300", "horizon = 20000"))
    assert main(["validate", str(mm11), "--reps", "4", "--out", str(tmp_path)]) == EXIT_OK
    table = {r["metric"]: r for r in rows(tmp_path / "validate.csv")}
    assert float(table["P_b"]["abs_diff"]) < 0.01
    assert table["P_f"]["sim_mean"] == "0.0" and table["P_f"]["oracle"] == "0.0"

    det = tmp_path / "det.scn"
    det.write_text(SMALL.replace("slots_per_channel = 2", "slots_per_channel = 1")
                   .replace("theta = 2\ntheta_min = 1", "theta = 1"))
    assert main(["validate", str(det), "--out", str(tmp_path)]) == EXIT_VALIDATION


def test_parse_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text(SMALL.replace("kind = RBS_Q", "kind = NOPE"))
    assert main(["run", str(bad), "--out", str(tmp_path)]) == EXIT_PARSE
    assert "NOPE" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.scn")]) == EXIT_PARSE
    with pytest.raises(SystemExit) as info:
        main(["sweep"])
    assert info.value.code == 2


def test_console_entry_point(scn, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "chanagg.cli", "run", scn, "--reps", "1",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "replications.csv" in proc.stdout
