import json

import numpy as np
import pytest

from aerograsp import checks as C
from aerograsp.config import load_config
from aerograsp.scenarios import setup
from aerograsp.sim import run_config
from aerograsp.telemetry import FORMAT_VERSION, WORLD_COLUMNS, Recorder, Table, am_columns, read_table


@pytest.fixture(scope="module")
def short_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = load_config(preset="free_flight", overrides={"duration": 0.5, "log_every": 7})
    return cfg, run_config(cfg, out_dir=str(out)), out


def test_files_and_headers(short_run):
    cfg, rep, out = short_run
    assert sorted(p.name for p in out.iterdir()) == ["am_00.csv", "am_01.csv", "config.yaml",
                                                     "summary.json", "world.csv"]
    lines = (out / "am_00.csv").read_text().splitlines()
    assert lines[0] == f"# aerograsp telemetry {FORMAT_VERSION}"
    assert lines[1].split(",") == am_columns(3)
    assert (out / "world.csv").read_text().splitlines()[1].split(",") == WORLD_COLUMNS


def test_am_columns_order():
    cols = am_columns(2)
    assert cols[:4] == ["t", "r_c_x", "r_c_y", "r_c_z"]
    assert cols[-3:] == ["S_AM", "residual", "power"]
    assert "y_1" in cols and "u3_1" in cols and "y_2" not in cols
    assert len(cols) == 1 + 12 + 2 + 2 + 6 + 1 + 3 + 2 + 3


def test_decimation_keeps_phase_starts_and_last_tick(short_run):
    cfg, rep, _ = short_run
    t = rep.recorder.world_table()["t"]
    ticks = np.rint(t / cfg.dt).astype(int)
    assert ticks[0] == 0 and ticks[-1] == 500
    assert all(k % 7 == 0 or k == 500 for k in ticks)
    assert len(np.unique(ticks)) == len(ticks)


def test_csv_round_trip_is_exact(short_run):
    _, rep, out = short_run
    for i, tab in enumerate(rep.recorder.am_tables()):
        back = read_table(out / f"am_{i:02d}.csv")
        assert back.columns == tab.columns
        assert np.array_equal(back.data, tab.data)
    w = read_table(out / "world.csv")
    ref = rep.recorder.world_table()
    assert np.array_equal(w.data, ref.data) and w.phases == ref.phases


def test_summary_is_rederivable_from_files(short_run):
    cfg, rep, out = short_run
    scenario, gains = setup(cfg)
    ams = [read_table(out / f"am_{i:02d}.csv") for i in range(2)]
    world = read_table(out / "world.csv")
    res = C.evaluate(cfg, scenario, ams, world, gains.lambda_min_Dy)
    again = C.summarize(cfg, scenario, gains, ams, world, res)
    stored = json.loads((out / "summary.json").read_text())
    assert again == stored


def test_summary_fields(short_run):
    cfg, rep, _ = short_run
    s = rep.summary
    assert s["completed"] and s["diverged"] is None and s["n_ams"] == 2
    assert s["t_final"] == pytest.approx(0.5)
    assert "chosen value" in s["speed_threshold_note"]
    assert len(s["ams"]) == 2 and len(s["ams"][0]["final_y_err"]) == 3
    assert s["object_final_position"] is None


def test_version_mismatch_rejected(tmp_path, short_run):
    _, _, out = short_run
    text = (out / "world.csv").read_text().replace("telemetry 1", "telemetry 99", 1)
    p = tmp_path / "w.csv"
    p.write_text(text)
    with pytest.raises(ValueError, match="unsupported telemetry version"):
        read_table(p)
    p.write_text("t,x\n0,1\n")
    with pytest.raises(ValueError, match="not a telemetry file"):
        read_table(p)


def test_recorder_rejects_bad_decimation():
    scn, _ = setup(load_config(preset="free_flight"))
    with pytest.raises(ValueError):
        Recorder(scn, 1e-3, 0)


# -- checks on synthetic tables -------------------------------------------------

def _world(t, speed, S_tot, phases, dS=None):
    dt = t[1] - t[0]
    integ = np.concatenate([[0.0], np.cumsum(0.5 * dt * (speed[1:] ** 2 + speed[:-1] ** 2))])
    dS = np.zeros_like(t) if dS is None else dS
    cols = [c for c in WORLD_COLUMNS if c != "phase"]
    rows = np.zeros((len(t), len(cols)))
    for name, v in (("t", t), ("ybar_speed", speed), ("S_tot", S_tot), ("ybar_sq_int", integ), ("dS_max", dS)):
        rows[:, cols.index(name)] = v
    return Table(cols, rows.tolist(), list(phases))


def test_convergence_check_settling():
    t = np.linspace(0, 10, 1001)
    speed = 0.1 * np.exp(-t)
    w = _world(t, speed, np.full_like(t, 1.0), ["hover"] * len(t))
    sp, en = C.convergence(w, lam_min=0.1, threshold=1e-3, window=5.0)
    assert sp.passed and sp.value == pytest.approx(np.log(100), abs=0.02)
    assert en.passed and en.value == pytest.approx(0.005, rel=1e-3)
    sp, _ = C.convergence(w, lam_min=0.1, threshold=1e-3, window=4.0)
    assert not sp.passed


def test_convergence_never_settles():
    t = np.linspace(0, 1, 11)
    w = _world(t, np.full_like(t, 1.0), np.ones_like(t), ["hover"] * len(t))
    sp, en = C.convergence(w, 1.0, 1e-3, 5.0)
    assert sp.value == np.inf and not sp.passed
    assert not C.convergence(_world(t, t, t, ["grasp"] * 11), 1.0, 1e-3, 5.0)[0].passed


def test_free_flight_storage_check_uses_free_phases_only():
    scn, _ = setup(load_config(preset="two_am_grasp"))
    t = np.arange(4.0)
    dS = np.array([0.0, 1e-9, 5.0, 1.0])
    w = _world(t, 0 * t, 0 * t, ["approach", "approach", "grasp", "hover"], dS)
    r = C.free_flight_storage(w, scn, 1e-6)
    assert r.passed and r.value == 1e-9
    w = _world(t, 0 * t, 0 * t, ["approach"] * 4, dS)
    assert not C.free_flight_storage(w, scn, 1e-6).passed


def test_passivity_check_is_relative():
    cols = am_columns(3)
    rows = np.zeros((3, len(cols)))
    rows[:, cols.index("residual")] = [0.0, 0.5e-3, 0.01]
    rows[:, cols.index("power")] = [0.0, 0.0, 99.0]
    r = C.passivity([Table(cols, rows.tolist())], 1e-3)
    assert r.passed and r.value == pytest.approx(0.5e-3)


def test_check_result_line():
    assert C.CheckResult("x", True, 0.5, 1.0, "d").line() == "[PASS] x: 0.5 (limit 1) d"
    assert C.CheckResult("x", False, 2.0, 1.0).line().startswith("[FAIL]")


def test_json_safe():
    out = C._json_safe({"a": [np.float64(np.inf), np.int64(3), np.bool_(True)], "b": (1.5,)})
    assert out == {"a": [None, 3, True], "b": [1.5]}
