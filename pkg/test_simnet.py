import pytest

import simnet
from config import CSV_COLUMNS, EXIT_OK, EXIT_SCENARIO, EXIT_USAGE
from conftest import SCENARIOS_DIR

SMALL = SCENARIOS_DIR / "mdns_small.ini"


def run_cli(tmp_path, *args):
    return simnet.main(["--log-dir", str(tmp_path / "logs"), "--log-level", "ERROR", *args])


def test_validate_ok(tmp_path, capsys):
    assert run_cli(tmp_path, "validate", str(SMALL)) == EXIT_OK
    assert "4 generated hosts, 1 explicit hosts" in capsys.readouterr().out


def test_run_writes_csv_and_trace(tmp_path):
    csv_path = tmp_path / "run.csv"
    trace_path = tmp_path / "trace.log"
    assert run_cli(tmp_path, "run", str(SMALL), "--csv", str(csv_path), "--trace", str(trace_path)) == EXIT_OK
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 6
    assert trace_path.read_text(encoding="utf-8").count("\n") > 0
    assert (tmp_path / "logs" / "simnet.jsonl").exists()


def test_run_prints_a_summary(tmp_path, capsys):
    assert run_cli(tmp_path, "run", str(SMALL), "--seed", "3") == EXIT_OK
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("node_id")
    assert "seed 3" in out


def test_sweep_writes_one_block_per_value(tmp_path):
    csv_path = tmp_path / "sweep.csv"
    code = run_cli(tmp_path, "sweep", str(SMALL), "--vary", "mdns.max_services", "--values", "2,3",
                   "--csv", str(csv_path))
    assert code == EXIT_OK
    rows = csv_path.read_text(encoding="utf-8").splitlines()[1:]
    assert [row.split(",")[0] for row in rows] == ["2"] * 6 + ["3"] * 6


@pytest.mark.parametrize("args", [
    [],
    ["run"],
    ["explode", "x.ini"],
    ["sweep", str(SMALL), "--vary", "warp_factor", "--values", "1", "--csv", "out.csv"],
    ["sweep", str(SMALL), "--vary", "duration", "--values", ",", "--csv", "out.csv"],
])
def test_usage_errors_exit_with_one(tmp_path, args):
    with pytest.raises(SystemExit) as excinfo:
        run_cli(tmp_path, *args)
    assert excinfo.value.code == EXIT_USAGE


def test_bad_scenarios_exit_with_two(tmp_path, capsys):
    broken = tmp_path / "broken.ini"
    broken.write_text("[experiment]\nseed = 1\n[nonsense]\n", encoding="utf-8")
    assert run_cli(tmp_path, "validate", str(broken)) == EXIT_SCENARIO
    assert "broken.ini:3:" in capsys.readouterr().err
    assert run_cli(tmp_path, "run", str(tmp_path / "missing.ini")) == EXIT_SCENARIO


def test_missing_query_file_is_a_scenario_error(tmp_path):
    hierarchy = SCENARIOS_DIR / "dns_hierarchy.ini"
    code = run_cli(tmp_path, "run", str(hierarchy), "--queries", str(tmp_path / "none.txt"))
    assert code == EXIT_SCENARIO
