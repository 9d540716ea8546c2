import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aerograsp import world as W
from aerograsp.so3 import E3, expm, is_rotation

finite = st.floats(-1.0, 1.0, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


def test_box_inertia_formula():
    I = W.Box((0.1, 0.2, 0.3)).inertia(2.0)
    a, b, c = 0.2, 0.4, 0.6
    assert np.allclose(np.diag(I), [2 / 12 * (b * b + c * c), 2 / 12 * (a * a + c * c), 2 / 12 * (a * a + b * b)])


def test_cylinder_inertia_formula():
    I = W.Cylinder(0.15, 0.1).inertia(5.0)
    assert I[2, 2] == pytest.approx(0.5 * 5 * 0.15**2)
    assert I[0, 0] == pytest.approx(5 * (3 * 0.15**2 + 0.2**2) / 12)


def test_box_penetration_picks_nearest_face():
    box = W.Box((0.1, 0.1, 0.1))
    assert box.penetration(np.array([0.2, 0, 0])) is None
    depth, n = box.penetration(np.array([0.08, 0.01, -0.02]))
    assert depth == pytest.approx(0.02)
    assert np.allclose(n, [1, 0, 0])
    depth, n = box.penetration(np.array([0.0, 0.0, -0.095]))
    assert depth == pytest.approx(0.005)
    assert np.allclose(n, [0, 0, -1])


def test_cylinder_penetration_side_and_cap():
    cyl = W.Cylinder(0.15, 0.1)
    assert cyl.penetration(np.array([0.16, 0, 0])) is None
    depth, n = cyl.penetration(np.array([0, 0.14, 0]))
    assert depth == pytest.approx(0.01)
    assert np.allclose(n, [0, 1, 0])
    depth, n = cyl.penetration(np.array([0, 0, 0.095]))
    assert depth == pytest.approx(0.005)
    assert np.allclose(n, E3)


@pytest.mark.parametrize("shape", [W.Box((0.1, 0.2, 0.1)), W.Cylinder(0.15, 0.1)])
def test_surface_point_on_boundary(shape):
    for h in np.linspace(0, 2 * np.pi, 7):
        p = shape.surface_point(h)
        assert shape.penetration(p * 0.999) is not None
        assert shape.penetration(p * 1.001) is None


@settings(max_examples=200, deadline=None)
@given(depth=st.floats(0, 0.05), rate=st.floats(-2, 2), s=vec3, v=vec3, n=vec3)
def test_penalty_force_in_friction_cone(depth, rate, s, v, n):
    if np.linalg.norm(n) < 1e-3:
        n = E3
    n = n / np.linalg.norm(n)
    prm = W.ContactParams()
    N, F_t, stick, keep = W.penalty_force(depth, rate, n, 0.05 * s, v, prm)
    assert N >= 0
    assert abs(F_t @ n) < 1e-12
    assert np.linalg.norm(F_t) <= prm.mu * N + 1e-12
    assert abs(keep @ n) < 1e-12
    # a kept spring never stores more than the cone allows
    assert prm.k_t * np.linalg.norm(keep) <= prm.mu * N + 1e-9 or stick


def test_penalty_force_normal_law():
    prm = W.ContactParams(k_n=1000, d_n=10)
    N, _, _, _ = W.penalty_force(0.01, 0.5, E3, np.zeros(3), np.zeros(3), prm)
    assert N == pytest.approx(1000 * 0.01 + 10 * 0.5)
    N, _, _, _ = W.penalty_force(0.01, -5.0, E3, np.zeros(3), np.zeros(3), prm)
    assert N == 0.0


def test_contact_params_reject_negative():
    with pytest.raises(ValueError):
        W.ContactParams(mu=-0.1)


def _pushed_box(rng):
    obj = W.ObjectState(np.array([0, 0, 0.5]), expm(rng.normal(size=3)), rng.normal(size=3),
                        rng.normal(size=3), 1.0, W.Box((0.1, 0.1, 0.1)))
    tips = [obj.p + obj.R @ np.array([0.095, 0.01, 0.0]), obj.p + obj.R @ np.array([-0.09, 0, 0.02])]
    vels = [rng.normal(size=3), rng.normal(size=3)]
    return obj, tips, vels


def test_contact_forces_action_reaction(rng):
    obj, tips, vels = _pushed_box(rng)
    anchors = W.ContactSet()
    anchors.anchors[("am", 0)] = np.array([0.1, 0.0, 0.0])
    tipF, f_obj, m_obj, recs = W.contact_forces(obj, tips, vels, W.ContactParams(), anchors, table=False)
    assert len(recs) == 2
    assert np.allclose(f_obj, -(tipF[0] + tipF[1]), atol=1e-12)
    m = -sum(np.cross(x - obj.p, F) for x, F in zip(tips, tipF))
    assert np.allclose(m_obj, m, atol=1e-12)
    for r, F in zip(recs, tipF):
        assert np.allclose(F, r.normal_force * r.normal + r.tangential_force)


def test_no_contact_outside_object(rng):
    obj, _, _ = _pushed_box(rng)
    tipF, f_obj, m_obj, recs = W.contact_forces(obj, [obj.p + np.array([1.0, 0, 0])], [np.zeros(3)],
                                                W.ContactParams(), W.ContactSet(), table=False)
    assert np.all(tipF[0] == 0) and np.all(f_obj == 0) and recs == []


def test_update_anchors_lifecycle(rng):
    obj, tips, vels = _pushed_box(rng)
    prm = W.ContactParams()
    empty = W.ContactSet()
    _, _, _, recs = W.contact_forces(obj, tips, vels, prm, empty, table=False)
    a1 = W.update_anchors(obj, recs, empty)
    # new contacts anchor at the touching point
    for r in recs:
        assert np.allclose(obj.p + obj.R @ a1.anchors[r.key], r.point)
    # contacts that vanish drop their anchor
    a2 = W.update_anchors(obj, recs[:1], a1)
    assert set(a2.anchors) == {recs[0].key}


def test_resting_object_settles_on_table():
    obj = W.resting_object(W.Box((0.1, 0.1, 0.1)), 1.0)
    prm = W.ContactParams()
    anchors = W.ContactSet()
    dt = 1e-3
    for _ in range(3000):
        _, f, m, recs = W.contact_forces(obj, [], [], prm, anchors)
        obj = W.object_step(obj, f, m, 9.81, dt)
        anchors = W.update_anchors(obj, recs, anchors)
    _, f, _, recs = W.contact_forces(obj, [], [], prm, anchors)
    assert f[2] == pytest.approx(9.81, rel=1e-3)
    assert np.linalg.norm(obj.v) < 1e-4
    assert obj.p[2] == pytest.approx(0.1 - 9.81 / 4 / prm.k_n, abs=1e-5)


def test_object_free_fall_is_exact():
    obj = W.ObjectState(np.zeros(3), np.eye(3), np.array([1.0, 0, 2.0]), np.zeros(3), 1.0, W.Box((0.1, 0.1, 0.1)))
    for _ in range(100):
        obj = W.object_step(obj, np.zeros(3), np.zeros(3), 9.81, 0.01)
    assert np.allclose(obj.p, [1.0, 0, 2.0 - 0.5 * 9.81], atol=1e-12)
    assert np.allclose(obj.v, [1.0, 0, 2.0 - 9.81], atol=1e-12)


def test_torque_free_object_conserves_energy_and_momentum(rng):
    obj = W.ObjectState(np.zeros(3), expm(rng.normal(size=3)), np.zeros(3), rng.normal(size=3) * 3,
                        1.0, W.Box((0.1, 0.2, 0.3)))
    E0 = obj.kinetic_energy()
    L0 = obj.R @ obj.inertia @ obj.R.T @ obj.w
    for _ in range(2000):
        obj = W.object_step(obj, np.zeros(3), np.zeros(3), 0.0, 1e-3)
    assert is_rotation(obj.R)
    assert obj.kinetic_energy() == pytest.approx(E0, rel=1e-8)
    assert np.allclose(obj.R @ obj.inertia @ obj.R.T @ obj.w, L0, rtol=1e-7, atol=1e-9)


def test_ee_wrench_body_rotates_force():
    R = expm(np.array([0.3, -0.2, 0.5]))
    f = np.array([1.0, 2.0, 3.0])
    F = W.ee_wrench_body(R, f)
    assert np.allclose(R @ F[:3], f) and np.all(F[3:] == 0)


def test_object_validation():
    with pytest.raises(ValueError):
        W.ObjectState(np.zeros(3), np.eye(3), np.zeros(3), np.zeros(3), 0.0, W.Box((0.1, 0.1, 0.1)))
    with pytest.raises(ValueError):
        W.ObjectState(np.zeros(3), 2 * np.eye(3), np.zeros(3), np.zeros(3), 1.0, W.Box((0.1, 0.1, 0.1)))
