import numpy as np
import pytest

import oracles
from aerograsp import decoupling as dc
from aerograsp import dynamics as dyn
from aerograsp.so3 import E3


def _states(model, rng, k):
    return [oracles.random_state(model, rng) for _ in range(k)]


def test_decoupled_invariants_sweep(model, rng):
    m = model.total_mass
    n = model.n
    for st in _states(model, rng, 100):
        t = dc.decoupled_terms(model, st)
        Lam = t.Lambda_xi
        ref = t.T_invT @ t.M @ t.T_inv
        assert np.linalg.norm(Lam - ref) <= 1e-9 * np.linalg.norm(ref)
        assert dc.off_block_norm(Lam, n) < 1e-8 * np.linalg.norm(Lam)
        np.testing.assert_allclose(Lam[:3, :3], m * np.eye(3), rtol=0, atol=1e-9 * m)
        zeta = np.zeros(n + 6)
        zeta[:3] = m * model.gravity * E3
        np.testing.assert_allclose(t.zeta_xi, zeta, atol=1e-9)
        top = np.hstack([st.R_b, np.zeros((3, n + 3))])
        np.testing.assert_allclose(t.T_invT[:3], top, atol=1e-10)


def test_nullspace_basis_annihilates_com_and_attitude_rows(model, rng):
    st = oracles.random_state(model, rng)
    _, r_bc, dr_bc, J_c = dyn.com_quantities(model, st)
    n = model.n
    Z = np.hstack([-dr_bc.T @ st.R_b, np.zeros((n, 3)), np.eye(n)])
    J_w = np.hstack([np.zeros((3, 3)), np.eye(3), np.zeros((3, n))])
    np.testing.assert_allclose(Z @ np.hstack([J_c.T, J_w.T]), 0, atol=1e-12)


def test_projector_structure(model, rng):
    for st in _states(model, rng, 20):
        T, N = dc.build_transform(model, st)
        assert np.abs(N[:, :3]).max() < 1e-10
        np.testing.assert_allclose(N[:, 6:], np.eye(model.n), atol=1e-10)
        assert np.isfinite(np.linalg.cond(T))


def test_energy_identity(model, rng):
    for st in _states(model, rng, 20):
        t = dc.decoupled_terms(model, st)
        e_xi = 0.5 * t.xi @ t.Lambda_xi @ t.xi
        assert e_xi == pytest.approx(0.5 * st.V @ t.M @ st.V, rel=1e-10)


def _lambda_dot(model, st):
    h = 1e-6
    Lp = dc.decoupled_terms(model, st.flowed(h)).Lambda_xi
    Lm = dc.decoupled_terms(model, st.flowed(-h)).Lambda_xi
    return (Lp - Lm) / (2 * h)


def test_transformed_skew_symmetry(model, rng):
    for st in _states(model, rng, 20):
        t = dc.decoupled_terms(model, st)
        Ld = _lambda_dot(model, st)
        x = rng.normal(size=model.nv)
        assert abs(x @ (Ld - 2 * t.Gamma_xi) @ x) < 1e-4


def test_gamma_times_xi_is_factorization_free(model, rng):
    """Gamma_xi xi must equal the unique T^-T (C V - M T^-1 Tdot V)."""
    h = 1e-6
    for st in _states(model, rng, 20):
        t = dc.decoupled_terms(model, st)
        Tp = dc.build_transform(model, st.flowed(h))[0]
        Tm = dc.build_transform(model, st.flowed(-h))[0]
        Td = (Tp - Tm) / (2 * h)
        ref = t.T_invT @ (dyn.bias(model, st.q, st.V) - t.M @ t.T_inv @ Td @ st.V)
        np.testing.assert_allclose(t.Gamma_xi @ t.xi, ref, atol=1e-9 * (1 + np.abs(ref).max()))


def test_gamma_block_pattern(model, rng):
    for st in _states(model, rng, 20):
        G = dc.decoupled_terms(model, st).Gamma_xi
        assert np.abs(G[:3]).max() < 1e-6
        assert np.abs(G[:, :3]).max() < 1e-6
        np.testing.assert_allclose(G[6:, 3:6], -G[3:6, 6:].T, atol=1e-6)


def test_zero_wrench_maps_to_zero(model, rng):
    st = oracles.random_state(model, rng)
    t = dc.decoupled_terms(model, st)
    J_e = dyn.ee_jacobian(model, st.q)
    np.testing.assert_array_equal(dc.transform_wrench(t, J_e, dyn.Wrench.zero()), 0)


def test_wrench_com_block_is_world_force(model, rng):
    for st in _states(model, rng, 20):
        t = dc.decoupled_terms(model, st)
        J_e = dyn.ee_jacobian(model, st.q)
        F_e = rng.normal(size=6)
        F_xi = dc.transform_wrench(t, J_e, F_e)
        R_e, _ = dyn.ee_pose(model, st)
        np.testing.assert_allclose(F_xi[:3], R_e @ F_e[:3], atol=1e-9)
        assert t.xi @ F_xi == pytest.approx(st.V @ J_e.T @ F_e, abs=1e-10)


def test_wrench_rejects_world_frame(model, rng):
    st = oracles.random_state(model, rng)
    t = dc.decoupled_terms(model, st)
    w = dyn.Wrench(np.ones(3), np.zeros(3), frame="world")
    with pytest.raises(ValueError):
        dc.transform_wrench(t, dyn.ee_jacobian(model, st.q), w)


def test_thrust_maps_to_com_force(model, rng):
    for st in _states(model, rng, 10):
        t = dc.decoupled_terms(model, st)
        f = rng.uniform(5, 30)
        tau = np.concatenate([[0, 0, f], rng.normal(size=3), rng.normal(size=model.n)])
        np.testing.assert_allclose((t.T_invT @ tau)[:3], f * st.R_b @ E3, atol=1e-10)


# -- task output (planar 3-link arm only) -----------------------------------

@pytest.fixture
def arm():
    return dyn.default_model()


def test_task_rate_zero_when_frozen(arm, rng):
    st = oracles.random_state(arm, rng)
    st.V[:] = 0.0
    _, J, _ = dc.task_output(arm, st)
    np.testing.assert_allclose(J @ dc.decoupled_terms(arm, st).xi, 0, atol=1e-15)


@pytest.mark.parametrize("yaw", [0.0, 1.1, -2.5])
def test_task_jacobian_matches_differences(arm, rng, yaw):
    h = 1e-6
    for _ in range(20):
        st = oracles.random_state(arm, rng)
        t = dc.decoupled_terms(arm, st)
        _, J, _ = dc.task_output(arm, st, yaw, terms=t)
        yp = dc.task_value(arm, st.flowed(h), yaw)
        ym = dc.task_value(arm, st.flowed(-h), yaw)
        np.testing.assert_allclose(J @ t.xi, (yp - ym) / (2 * h), atol=1e-6)


@pytest.mark.parametrize("yaw", [0.0, 2.0])
def test_compiled_task_output_matches_reference(arm, rng, yaw):
    for _ in range(10):
        st = oracles.random_state(arm, rng)
        y, J, _ = dc.task_output(arm, st, yaw)
        t = dc.decoupled_terms(arm, st)
        np.testing.assert_allclose(y, dc.task_value(arm, st, yaw), atol=1e-14)
        np.testing.assert_allclose(J, dc.task_jacobian_V(arm, st, yaw) @ t.T_inv, atol=1e-12)


def test_task_jacobian_rate_matches_differences(arm, rng):
    h = 1e-5
    for _ in range(10):
        st = oracles.random_state(arm, rng)
        _, J, Jd = dc.task_output(arm, st)
        Jp = dc.task_output(arm, st.flowed(h))[1]
        Jm = dc.task_output(arm, st.flowed(-h))[1]
        np.testing.assert_allclose(Jd, (Jp - Jm) / (2 * h), atol=1e-4)


def test_dynamically_consistent_inverse_is_right_inverse(arm, rng):
    for _ in range(20):
        st = oracles.random_state(arm, rng)
        t = dc.decoupled_terms(arm, st)
        _, J, _ = dc.task_output(arm, st, terms=t)
        Jp, Lambda_y = dc.dynamically_consistent_inverse(J, t.Lambda_xi)
        np.testing.assert_allclose(J @ Jp, np.eye(3), atol=1e-10)
        assert np.linalg.eigvalsh(Lambda_y).min() > 0


def test_task_value_at_level_pose(arm):
    q = dyn.nominal_joint_angles(arm, reach=(0.27, -0.16), pitch=0.0)
    st = dyn.AmState(np.array([1.0, 2.0, 3.0]), np.eye(3), q, np.zeros(9))
    y = dc.task_value(arm, st)
    shoulder = np.array([0.0, 0.0, -0.05])
    np.testing.assert_allclose(y, [1.0 + 0.27 + shoulder[0], 3.0 - 0.16 + shoulder[2], 0.0],
                               atol=1e-12)


def test_task_output_requires_three_joints(model, rng):
    if model.n == 3:
        pytest.skip("planar arm")
    with pytest.raises(ValueError):
        dc.task_output(model, oracles.random_state(model, rng))
