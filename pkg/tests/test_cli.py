import csv
import json
import subprocess
import sys
import time
from pathlib import Path

import pytest

from ghp.cli import main
from ghp.model import FreeEveryPeriod, NoStorage, base_case, config_to_dict, load_config, reduced_case, save_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
TINY = CONFIGS / "tiny.json"


def write_json(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path


def tiny_dict(**system):
    d = config_to_dict(load_config(TINY))
    d["system"].update(system)
    return d


# --- validate ----------------------------------------------------------------------


def test_validate_shipped_configs(capsys):
    for name in ("base_case.json", "reduced_case.json", "tiny.json"):
        assert main(["validate", "--config", str(CONFIGS / name)]) == 0
    assert "ok" in capsys.readouterr().out


def test_shipped_base_config_encodes_benchmark():
    assert load_config(CONFIGS / "base_case.json") == base_case()


def test_nonstationary_config_rejected(tmp_path, capsys):
    d = tiny_dict()
    d["electricity"]["theta"] = 1.2
    assert main(["validate", "--config", str(write_json(tmp_path / "c.json", d))]) == 1
    assert "stationarity violated" in capsys.readouterr().err


def test_schema_errors_carry_json_paths(tmp_path, capsys):
    d = tiny_dict()
    d["system"]["horizon_days"] = "many"
    d["wind"]["bogus"] = 1
    assert main(["validate", "--config", str(write_json(tmp_path / "c.json", d))]) == 1
    err = capsys.readouterr().err
    assert "$.system.horizon_days" in err
    assert "$.wind" in err


def test_unreadable_config(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "missing.json")]) == 1
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["validate", "--config", str(tmp_path / "bad.json")]) == 1


def test_unknown_subcommand():
    assert main(["frobnicate"]) == 1


# --- solve / simulate ------------------------------------------------------------------


def test_tiny_solve_is_fast(tmp_path):
    main(["solve", "--config", str(TINY), "--out-dir", str(tmp_path / "warm")])  # compile once
    start = time.perf_counter()
    assert main(["solve", "--config", str(TINY), "--out-dir", str(tmp_path)]) == 0
    assert time.perf_counter() - start < 1.0
    summary = json.loads((tmp_path / "solve_summary.json").read_text())
    assert summary["initial_value"] > 0
    assert summary["shape"][0] == 4
    assert (tmp_path / "value_table.bin").exists()
    assert summary["config_hash"] and summary["tool_version"]


def test_reference_kernel_gives_same_value(tmp_path):
    main(["solve", "--config", str(TINY), "--out-dir", str(tmp_path / "a")])
    main(["solve", "--config", str(TINY), "--out-dir", str(tmp_path / "b"), "--reference"])
    a = json.loads((tmp_path / "a" / "solve_summary.json").read_text())["initial_value"]
    b = json.loads((tmp_path / "b" / "solve_summary.json").read_text())["initial_value"]
    assert a == pytest.approx(b, rel=1e-12)


def test_reduced_setting_a_has_positive_value(tmp_path):
    cfg = tmp_path / "a.json"
    save_config(reduced_case(FreeEveryPeriod(), horizon_days=28, price_levels=3), cfg)
    assert main(["solve", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "solve_summary.json").read_text())["initial_value"] > 0


def test_simulate_twice_identical_files(tmp_path):
    assert main(["solve", "--config", str(TINY), "--out-dir", str(tmp_path)]) == 0
    table = str(tmp_path / "value_table.bin")
    for run in ("r1", "r2"):
        args = ["simulate", "--config", str(TINY), "--table", table, "--reps", "200", "--seed", "4",
                "--traces", "2", "--out-dir", str(tmp_path / run)]
        assert main(args) == 0
    for name in ("kpi.json", "heatmap.csv", "traces.csv"):
        a = (tmp_path / "r1" / name).read_bytes()
        assert a == (tmp_path / "r2" / name).read_bytes()
    kpi = json.loads((tmp_path / "r1" / "kpi.json").read_text())
    assert kpi["replications"] == 200 and kpi["seed"] == 4


def test_simulate_without_table_solves_on_the_fly(tmp_path):
    assert main(["simulate", "--config", str(TINY), "--reps", "10", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "kpi.json").exists()
    assert not (tmp_path / "traces.csv").exists()


@pytest.mark.parametrize("flag, value", [("--reps", "0"), ("--years", "0"), ("--workers", "0")])
def test_simulate_usage_errors(tmp_path, flag, value):
    args = ["simulate", "--config", str(TINY), "--out-dir", str(tmp_path), flag, value]
    assert main(args) == 1


def test_workers_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("GHP_WORKERS", "0")
    assert main(["solve", "--config", str(TINY), "--out-dir", str(tmp_path)]) == 1
    monkeypatch.setenv("GHP_WORKERS", "1")
    assert main(["solve", "--config", str(TINY), "--out-dir", str(tmp_path)]) == 0


def test_table_for_other_config_is_fatal(tmp_path, capsys):
    assert main(["solve", "--config", str(TINY), "--out-dir", str(tmp_path)]) == 0
    other = write_json(tmp_path / "other.json", tiny_dict(ppa_price=40.0))
    args = ["simulate", "--config", str(other), "--table", str(tmp_path / "value_table.bin"), "--out-dir", str(tmp_path)]
    assert main(args) == 2
    assert "different configuration" in capsys.readouterr().err


def test_base_case_without_storage_loses_nothing(tmp_path):
    cfg = tmp_path / "e.json"
    save_config(base_case(NoStorage()), cfg)
    assert main(["simulate", "--config", str(cfg), "--reps", "50", "--out-dir", str(tmp_path)]) == 0
    kpi = json.loads((tmp_path / "kpi.json").read_text())
    assert kpi["energy_lost_mwh"] == 0.0


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "ghp", "--version"], capture_output=True, text=True, check=True)
    assert out.stdout.startswith("ghp ")


# --- sweep --------------------------------------------------------------------------------


def read_sweep(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# tool_version")
    return list(csv.DictReader(lines[1:]))


def run_sweep_cli(tmp_path, spec, *extra):
    path = write_json(tmp_path / "exp.json", spec)
    return main(["sweep", "--config", str(path), "--out-dir", str(tmp_path / "out"), *extra])


def test_efficiency_sweep_rows(tmp_path):
    spec = {"base": str(TINY), "settings": ["A", "B(7)", "C(1,35,4)", "D(H2)"], "axis": "round_trip_eff",
            "grid": [0.5, 0.6, 0.7, 0.8, 0.9], "replications": 20}
    assert run_sweep_cli(tmp_path, spec) == 0
    rows = read_sweep(tmp_path / "out" / "sweep.csv")
    assert len(rows) == 4 * 5
    for s in spec["settings"]:
        assert [r["value"] for r in rows if r["setting"] == s] == ["0.5", "0.6", "0.7", "0.8", "0.9"]
    assert all(r["config_hash"] for r in rows)
    assert len(list((tmp_path / "out").glob("kpi_*.json"))) == 20
    p = rows[0]["p_h2"]
    assert len(p.split(".")[1]) == 4


def test_ppa_sweep_rows(tmp_path):
    spec = {"base": str(TINY), "settings": ["E"], "axis": "ppa_target", "grid": list(range(1, 21)), "replications": 5}
    assert run_sweep_cli(tmp_path, spec) == 0
    assert len(read_sweep(tmp_path / "out" / "sweep.csv")) == 20


def test_sweep_reproducible(tmp_path):
    spec = {"base": str(TINY), "settings": ["A", "E"], "replications": 30, "seed": 2}
    for run in ("a", "b"):
        (tmp_path / run).mkdir()
        assert run_sweep_cli(tmp_path / run, spec) == 0
    a = (tmp_path / "a" / "out" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "out" / "sweep.csv").read_bytes()


def test_failed_points_are_recorded_and_skipped(tmp_path):
    # a contract the tank can never hold makes one point invalid
    spec = {"base": str(TINY), "settings": ["A"], "axis": "ppa_target", "grid": [1, 500], "replications": 5}
    assert run_sweep_cli(tmp_path, spec) == 0
    rows = read_sweep(tmp_path / "out" / "sweep.csv")
    assert [r["value"] for r in rows] == ["1"]
    assert list((tmp_path / "out").glob("error_*.txt"))


def test_sweep_with_all_points_failing_exits_2(tmp_path):
    spec = {"base": str(TINY), "settings": ["A"], "axis": "ppa_target", "grid": [500], "replications": 5}
    assert run_sweep_cli(tmp_path, spec) == 2


def test_empty_grid_is_a_schema_error(tmp_path, capsys):
    spec = {"base": str(TINY), "settings": ["A"], "axis": "ppa_target", "grid": []}
    assert run_sweep_cli(tmp_path, spec) == 1
    assert "$.grid" in capsys.readouterr().err


def test_unsorted_grid_rejected(tmp_path):
    spec = {"base": str(TINY), "settings": ["A"], "axis": "ppa_target", "grid": [3, 1]}
    assert run_sweep_cli(tmp_path, spec) == 1


def test_unknown_setting_rejected(tmp_path):
    assert run_sweep_cli(tmp_path, {"settings": ["Z"]}) == 1


# --- fit-wind -----------------------------------------------------------------------------


def test_fit_wind(tmp_path):
    import datetime as dt

    import numpy as np

    rng = np.random.default_rng(0)
    path = tmp_path / "wind.csv"
    day = dt.date(2020, 1, 1)
    lines = ["date,speed"]
    for _ in range(730):
        lines.append(f"{day.isoformat()},{6.5 * rng.weibull(2.3):.3f}")
        day += dt.timedelta(days=1)
    path.write_text("\n".join(lines) + "\n")
    assert main(["fit-wind", str(path), "--out-dir", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "weibull_monthly.csv")))
    assert len(rows) == 12
    assert all(abs(float(r["scale"]) - 6.5) < 1.0 for r in rows)


def test_fit_wind_bad_file(tmp_path):
    assert main(["fit-wind", str(tmp_path / "nope.csv")]) == 1
    (tmp_path / "w.csv").write_text("date,speed\n2020-01-01,5\n")
    assert main(["fit-wind", str(tmp_path / "w.csv"), "--out-dir", str(tmp_path)]) == 2
