"""Property suites behind ``aerograsp check``.

Each suite returns a list of :class:`aerograsp.checks.CheckResult` with the
measured worst case.  States are drawn from a seeded generator, so reports
are reproducible.
"""

import contextlib
import logging

import numpy as np

from . import decoupling as dc
from . import dynamics as dyn
from .checks import CheckResult
from .so3 import E3, expm

N_STATES = 100


def random_state(model, rng, qscale=1.2, vscale=1.0, p_b=None):
    R = expm(rng.normal(size=3))
    p = rng.normal(size=3) if p_b is None else np.asarray(p_b, dtype=float)
    return dyn.AmState(p, R, rng.uniform(-qscale, qscale, size=model.n),
                       vscale * rng.normal(size=model.nv))


def _states(model, seed, k):
    rng = np.random.default_rng(seed)
    return [random_state(model, rng) for _ in range(k)]


def dynamics_suite(model=None, seed=0, n_states=N_STATES):
    model = model or dyn.default_model()
    sym = skew = cv = 0.0
    spd = np.inf
    rng = np.random.default_rng(seed + 1)
    for st in _states(model, seed, n_states):
        M = dyn.mass_matrix(model, st.q)
        sym = max(sym, np.abs(M - M.T).max() / np.abs(M).max())
        spd = min(spd, np.linalg.eigvalsh(0.5 * (M + M.T)).min())
        # Mdot along the flow by central differences of the mass matrix
        h = 1e-6
        Md = (dyn.mass_matrix(model, st.q + h * st.V[6:]) - dyn.mass_matrix(model, st.q - h * st.V[6:])) / (2 * h)
        C = dyn.coriolis_matrix(model, st.q, st.V)
        x = rng.normal(size=model.nv)
        skew = max(skew, abs(x @ (Md - 2 * C) @ x))
        cv = max(cv, np.abs(C @ st.V - dyn.bias(model, st.q, st.V)).max())
    return [
        CheckResult("mass_matrix_symmetry", sym < 1e-12, sym, 1e-12, "relative max asymmetry"),
        CheckResult("mass_matrix_positive", spd > 0, spd, 0.0, "smallest eigenvalue"),
        CheckResult("skew_symmetry", skew < 1e-5, skew, 1e-5, "max |x^T (Mdot - 2C) x|"),
        CheckResult("coriolis_factorization", cv < 1e-10, cv, 1e-10, "max |C V - bias|"),
    ]


def decoupling_suite(model=None, seed=0, n_states=N_STATES):
    model = model or dyn.default_model()
    off = top = 0.0
    n = model.n
    for st in _states(model, seed, n_states):
        Lam = dc.decoupled_terms(model, st).Lambda_xi
        off = max(off, dc.off_block_norm(Lam, n) / np.linalg.norm(Lam))
        m = model.total_mass
        top = max(top, np.abs(Lam[:3, :3] - m * np.eye(3)).max() / m)
    return [
        CheckResult("block_diagonal", off < 1e-8, off, 1e-8,
                    f"worst off-block Frobenius norm / |Lambda| over {n_states} states"),
        CheckResult("com_block", top < 1e-9, top, 1e-9, "max |Lambda_cc - m I| / m"),
    ]


def structure_suite(model=None, seed=0, n_states=N_STATES):
    model = model or dyn.default_model()
    rng = np.random.default_rng(seed + 2)
    top = thrust = force = 0.0
    for st in _states(model, seed, n_states):
        terms = dc.decoupled_terms(model, st)
        R = st.R_b
        expect = np.zeros((3, model.nv))
        expect[:, :3] = R
        top = max(top, np.abs(terms.T_invT[:3] - expect).max())
        u1 = rng.normal()
        u = np.concatenate([u1 * (R @ E3), rng.normal(size=3 + model.n)])
        tau = terms.T.T @ u
        thrust = max(thrust, abs(tau[2] - u1), np.abs(tau[:2]).max())
        F_e = rng.normal(size=6)
        J_e = dyn.ee_jacobian(model, st.q)
        R_e, _ = dyn.ee_pose(model, st)
        F_xi = dc.transform_wrench(terms, J_e, F_e)
        force = max(force, np.abs(F_xi[:3] - R_e @ F_e[:3]).max())
    return [
        CheckResult("inverse_transpose_top_rows", top < 1e-9, top, 1e-9, "max |T^-T[:3] - [R_b 0 0]|"),
        CheckResult("thrust_is_u1", thrust < 1e-9, thrust, 1e-9, "max |tau_f - u1| under tau = T^T u"),
        CheckResult("com_wrench_is_world_force", force < 1e-9, force, 1e-9, "max |F_rc - R_e f_e|"),
    ]


@contextlib.contextmanager
def _quiet_joint_limits():
    """Unactuated joints swing past the soft limit; the warning is expected here."""
    lg = logging.getLogger(dyn.__name__)
    level = lg.level
    lg.setLevel(logging.ERROR)
    try:
        yield
    finally:
        lg.setLevel(level)


def _free_motion(model, st, dt, T):
    from .sim import Simulation

    sim = Simulation(model, [st], dt=dt, table=False)
    zero = [np.zeros(model.nv)]
    with _quiet_joint_limits():
        for _ in range(int(round(T / dt))):
            sim.advance(zero)
    return sim.states[0]


def energy_suite(model=None, seed=0, dt=1e-4, T=5.0):
    """Unactuated flight with gravity: total energy drift relative to the initial kinetic energy."""
    model = model or dyn.default_model()
    rng = np.random.default_rng(seed)
    st = random_state(model, rng, vscale=0.5, p_b=np.zeros(3))
    from .sim import Simulation

    E0 = dyn.total_energy(model, st)
    K0 = dyn.kinetic_energy(model, st)
    sim = Simulation(model, [st], dt=dt, table=False)
    zero = [np.zeros(model.nv)]
    worst = 0.0
    n = int(round(T / dt))
    with _quiet_joint_limits():
        for k in range(n):
            sim.advance(zero)
            if k % 100 == 99 or k == n - 1:
                worst = max(worst, abs(dyn.total_energy(model, sim.states[0]) - E0))
    rel = worst / K0
    return [CheckResult("energy_drift", rel < 1e-4, rel, 1e-4,
                        f"max |E - E0| / K0 over {T:g} s at dt = {dt:g}")]


def _state_error(a, b):
    return max(np.abs(a.p_b - b.p_b).max(), np.abs(a.R_b - b.R_b).max(),
               np.abs(a.q - b.q).max(), np.abs(a.V - b.V).max())


def integrator_suite(model=None, seed=0, dt=0.01, T=1.0):
    """Error ratio on halving dt against a dt/16 reference (4th order gives 16)."""
    model = model or dyn.default_model()
    rng = np.random.default_rng(seed)
    st = random_state(model, rng, vscale=1.0, p_b=np.zeros(3))
    ref = _free_motion(model, st, dt / 16, T)
    e1 = _state_error(_free_motion(model, st, dt, T), ref)
    e2 = _state_error(_free_motion(model, st, dt / 2, T), ref)
    ratio = e1 / e2
    return [CheckResult("integrator_order", 12 <= ratio <= 20, ratio, 16.0,
                        f"error ratio on halving dt = {dt:g} (accepted range [12, 20])")]


PASSIVITY_SCENARIO = {"scenario": {"t_approach": 2.0, "t_grasp": 3.0, "t_lift": 2.0, "t_hover": 3.0}}


def passivity_suite(seed=0):
    """Monitors of a shortened two-AM grasp."""
    from .config import load_config
    from .sim import run_config

    cfg = load_config(preset="two_am_grasp", overrides={**PASSIVITY_SCENARIO, "seed": seed})
    report = run_config(cfg)
    out = list(report.checks)
    if report.result.diverged is not None:
        out.append(CheckResult("completed", False, report.result.diverged.t, cfg.duration or 0.0,
                               str(report.result.diverged)))
    return out


SUITES = {
    "dynamics": dynamics_suite,
    "decoupling": decoupling_suite,
    "structure": structure_suite,
    "energy": energy_suite,
    "integrator": integrator_suite,
    "passivity": passivity_suite,
}
