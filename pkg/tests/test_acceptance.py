"""The ten acceptance criteria at their stated tolerances.

Each test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary.  Closed-loop runs are shared between criteria through
module-scoped fixtures and timed where a runtime bound applies.
"""

import filecmp
import time

import numpy as np
import pytest

import oracles
from aerograsp import checks as C
from aerograsp import dynamics as dyn
from aerograsp import properties as P
from aerograsp.config import load_config
from aerograsp.scenarios import setup
from aerograsp.sim import run_config
from conftest import spatial_arm

N_RANDOM = 1000


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def _by_name(results):
    return {r.name: r for r in results}


def _run(preset, out_dir, **overrides):
    cfg = load_config(preset=preset, overrides=overrides or None)
    return _timed(run_config, cfg, out_dir=str(out_dir))


@pytest.fixture(scope="module")
def free_flight(tmp_path_factory):
    return _run("free_flight", tmp_path_factory.mktemp("free_flight"))


@pytest.fixture(scope="module")
def two_am(tmp_path_factory):
    out = tmp_path_factory.mktemp("two_am")
    (rep, elapsed) = _run("two_am_grasp", out)
    return rep, elapsed, out


@pytest.fixture(scope="module")
def nocomp(tmp_path_factory):
    return _run("two_am_grasp_nocomp", tmp_path_factory.mktemp("nocomp"))


@pytest.fixture(scope="module")
def ten_am(tmp_path_factory):
    return _run("ten_am_grasp", tmp_path_factory.mktemp("ten_am"))


def _steady_rows(tab):
    t = tab["t"]
    return np.flatnonzero(t >= t[-1] - C.STEADY_WINDOW)


def test_block_diagonal_inertia(acceptance_line):
    (res, elapsed) = _timed(lambda: [P.decoupling_suite(m, seed=1, n_states=N_RANDOM)
                                     for m in (dyn.default_model(), spatial_arm())])
    worst_off = max(_by_name(r)["block_diagonal"].value for r in res)
    worst_top = max(_by_name(r)["com_block"].value for r in res)
    ok = worst_off < 1e-8 and worst_top < 1e-9 and elapsed < 10.0
    acceptance_line(1, ok, f"block-diagonal inertia over {N_RANDOM} states x 2 arms: off-block "
                           f"{worst_off:.2e} (< 1e-8 rel), CoM block {worst_top:.2e} (< 1e-9 rel), "
                           f"{elapsed:.1f} s (< 10 s)")
    assert ok


def test_structural_identities(acceptance_line):
    res = [_by_name(P.structure_suite(m, seed=2, n_states=N_RANDOM))
           for m in (dyn.default_model(), spatial_arm())]
    vals = {k: max(r[k].value for r in res) for k in res[0]}
    ok = all(v < 1e-9 for v in vals.values())
    acceptance_line(2, ok, "structural identities over 1000 states x 2 arms: "
                    + ", ".join(f"{k} {v:.2e}" for k, v in vals.items()) + " (each < 1e-9)")
    assert ok


def test_dynamics_oracles(acceptance_line):
    rng = np.random.default_rng(3)
    ke = 0.0
    for model in (dyn.default_model(), spatial_arm()):
        for _ in range(200):
            st = oracles.random_state(model, rng)
            ref = oracles.kinetic_energy(model, st)
            ke = max(ke, abs(dyn.kinetic_energy(model, st) - ref) / ref)
    skew = max(_by_name(P.dynamics_suite(m, seed=3))["skew_symmetry"].value
               for m in (dyn.default_model(), spatial_arm()))
    (drift,) = P.energy_suite(seed=3, dt=1e-4, T=5.0)
    (order,) = P.integrator_suite(seed=3)
    ok = ke < 1e-10 and skew < 1e-5 and drift.value < 1e-4 and 12 <= order.value <= 20
    acceptance_line(3, ok, f"dynamics oracles: kinetic energy {ke:.2e} (< 1e-10 rel), skew "
                           f"{skew:.2e} (< 1e-5), energy drift {drift.value:.2e} over 5 s at "
                           f"dt 1e-4 (< 1e-4 rel), RK order ratio {order.value:.2f} (in [12, 20])")
    assert ok


def test_free_flight_convergence(free_flight, acceptance_line):
    rep, elapsed = free_flight
    scn = rep.recorder.scenario
    ams, world = rep.recorder.am_tables(), rep.recorder.world_table()
    track = C.tracking_errors(ams, world, scn, t_from=5.0, tol=1e-2)
    storage = C.free_flight_storage(world, scn, 1e-6)
    ok = rep.summary["completed"] and track.passed and storage.passed and elapsed < 30.0
    acceptance_line(4, ok, f"free flight: worst |r_c err|, |e_R|, |y err| after 5 s {track.value:.2e} "
                           f"(< 1e-2), max per-step storage increase {storage.value:.2e} (<= 1e-6), "
                           f"{elapsed:.1f} s (< 30 s)")
    assert ok


def test_two_am_grasp_reproduction(two_am, acceptance_line):
    rep, elapsed, _ = two_am
    s = rep.summary
    ams = rep.recorder.am_tables()
    lines, ok = [], s["completed"] and elapsed < 60.0
    for am, tab in zip(s["ams"], ams):
        f_z = am["steady_f_e"][2]
        y_x, pred = am["final_y_err"][0], am["predicted_y_err"][0]
        rows = _steady_rows(tab)
        spread = np.ptp(tab["y_err_0"][rows])
        am_ok = (abs(f_z + 4.9) <= 0.5 and am["final_r_c_err_norm"] < 1e-2 and am["final_e_R_norm"] < 1e-2
                 and abs(y_x) > 1e-3 and abs(y_x - pred) <= 0.02 * abs(pred) and spread <= 0.02 * abs(pred))
        ok &= am_ok
        lines.append(f"AM{am['index']} f_ez {f_z:.3f} N, |r_c err| {am['final_r_c_err_norm']:.1e}, "
                     f"|e_R| {am['final_e_R_norm']:.1e}, y_x err {y_x:.4f} vs predicted {pred:.4f}")
    acceptance_line(5, ok, "two-AM grasp: " + "; ".join(lines)
                    + f"; {elapsed:.1f} s (< 60 s) [f_ez -4.9 +- 0.5, errors < 1e-2, y_x within 2%]")
    assert ok


def test_discrete_passivity(two_am, acceptance_line):
    rep, _, _ = two_am
    r = C.passivity(rep.recorder.am_tables(), 1e-3)
    n_rows = len(rep.recorder.world_table())
    acceptance_line(6, r.passed, f"passivity residual over {n_rows} logged steps of the two-AM grasp: "
                                 f"worst residual / (1 + |power|) {r.value:.2e} (<= 1e-3)")
    assert r.passed


def test_hover_convergence(two_am, acceptance_line):
    rep, _, _ = two_am
    world = rep.recorder.world_table()
    cfg = rep.result.cfg
    lam = setup(cfg)[1].lambda_min_Dy
    speed, energy = C.convergence(world, lam, 1e-3, 5.0)
    ok = speed.passed and energy.passed
    acceptance_line(7, ok, f"hover convergence: settles below 1e-3 m/s after {speed.value:.2f} s (<= 5 s), "
                           f"integral {energy.value:.3e} <= bound {energy.limit:.3e} (dt {cfg.dt:g})")
    assert ok


def test_grasp_without_compensation(nocomp, acceptance_line):
    rep, _ = nocomp
    s = rep.summary
    world = rep.recorder.world_table()
    z = float(world["obj_p_z"][-1])
    t_end = float(world["t"][-1])
    lifted = abs(z - s["lift_target"]) <= 0.05 and abs(t_end - 20.0) < 1e-9
    ok, parts = s["completed"] and lifted, []
    for tab in rep.recorder.am_tables():
        rows = _steady_rows(tab)
        rc = np.linalg.norm(tab.block("r_c_err", "xyz")[rows], axis=1)
        eR = np.linalg.norm(tab.block("e_R", "xyz")[rows], axis=1)
        ok &= bool(np.all((rc > 1e-3) & (rc < 0.3)) and np.all((eR > 1e-3) & (eR < 0.3)))
        parts.append(f"|r_c err| in [{rc.min():.3g}, {rc.max():.3g}], |e_R| in [{eR.min():.3g}, {eR.max():.3g}]")
    acceptance_line(8, ok, f"grasp without compensation: object at {z:.4f} m vs target "
                           f"{s['lift_target']:.4f} at t = {t_end:g} s (+- 0.05); steady "
                           + "; ".join(parts) + " (each in (1e-3, 0.3))")
    assert ok


def test_ten_am_scalability(ten_am, acceptance_line):
    rep, elapsed = ten_am
    s = rep.summary
    res = _by_name(rep.checks)
    need = ("passivity", "convergence_speed", "convergence_energy", "lift")
    ok = (s["completed"] and s["n_ams"] == 10 and all(res[k].passed for k in need)
          and elapsed < 600.0)
    acceptance_line(9, ok, f"ten AMs, 5 kg object: completed {s['completed']}, object at "
                           f"{s['object_final_position'][2]:.4f} m (target {s['lift_target']:.2f} +- 0.05), "
                           f"passivity {res['passivity'].value:.2e}, settle {res['convergence_speed'].value:.2f} s, "
                           f"{elapsed:.0f} s (< 600 s)")
    assert ok


def test_determinism(two_am, tmp_path, acceptance_line):
    rep, _, out_a = two_am
    out_b = tmp_path / "again"
    run_config(rep.result.cfg, out_dir=str(out_b))
    names = sorted(p.name for p in out_a.iterdir())
    match, mismatch, errors = filecmp.cmpfiles(out_a, out_b, names, shallow=False)
    ok = not mismatch and not errors and len(match) == len(names)
    acceptance_line(10, ok, f"determinism: {len(match)}/{len(names)} output files of two identical "
                            f"two-AM grasp runs are byte-identical")
    assert ok
