"""Independent reference computations used only by the tests.

Forward kinematics here is written with plain homogeneous transforms and
supports complex inputs, so velocities come out of a complex-step
derivative instead of any Jacobian the package builds.
"""

import numpy as np

H = 1e-30


def _hat(w):
    return np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]], dtype=w.dtype)


def _rod(axis, ang):
    K = _hat(np.asarray(axis, dtype=complex))
    return np.eye(3, dtype=complex) + np.sin(ang) * K + (1 - np.cos(ang)) * K @ K


def body_poses(model, p_b, R_b, q):
    """World (R, p_origin, p_com) of every body, complex-safe."""
    out = [(R_b, p_b, p_b)]
    R, p = R_b, p_b
    for ln, qi in zip(model.links, q):
        p = p + R @ ln.origin_pos
        R = R @ ln.origin_rot @ _rod(ln.axis, qi)
        out.append((R, p, p + R @ ln.com))
    return out


def ee_world(model, p_b, R_b, q):
    R, p, _ = body_poses(model, p_b, R_b, q)[-1]
    return R @ model.ee_rot, p + R @ model.ee_pos


def _perturbed(state, V, h):
    """Complex-step configuration along V (first-order exact)."""
    R_b = state.R_b.astype(complex)
    p_b = state.p_b + 1j * h * (state.R_b @ V[0:3])
    R_b = R_b @ (np.eye(3) + 1j * h * _hat(V[3:6].astype(complex)))
    q = state.q + 1j * h * V[6:]
    return p_b, R_b, q


def body_velocities(model, state, V=None):
    """World CoM velocity and world angular velocity of each body."""
    V = state.V if V is None else V
    p_b, R_b, q = _perturbed(state, V, H)
    out = []
    for R, _, c in body_poses(model, p_b, R_b, q):
        Rd = R.imag / H
        w = Rd @ R.real.T
        out.append((c.imag / H, np.array([w[2, 1], w[0, 2], w[1, 0]])))
    return out


def kinetic_energy(model, state):
    T = 0.0
    poses = body_poses(model, state.p_b, state.R_b, state.q)
    for (m, _, Ic), (R, _, _), (v, w) in zip(model.body_inertias(), poses,
                                             body_velocities(model, state)):
        R = R.real
        T += 0.5 * m * v @ v + 0.5 * w @ (R @ Ic @ R.T) @ w
    return T


def com_world(model, p_b, R_b, q):
    poses = body_poses(model, p_b, R_b, q)
    masses = [b[0] for b in model.body_inertias()]
    return sum(m * c for m, (_, _, c) in zip(masses, poses)) / sum(masses)


def potential_energy(model, p_b, R_b, q):
    masses = [b[0] for b in model.body_inertias()]
    poses = body_poses(model, p_b, R_b, q)
    return sum(m * model.gravity * c[2] for m, (_, _, c) in zip(masses, poses))


def ee_body_twist_cs(model, state, V):
    """End-effector body twist by complex step."""
    p_b, R_b, q = _perturbed(state, V, H)
    R, p = ee_world(model, p_b, R_b, q)
    Rr = R.real
    v = Rr.T @ (p.imag / H)
    W = Rr.T @ (R.imag / H)
    return np.concatenate([v, [W[2, 1], W[0, 2], W[1, 0]]])


def random_state(model, rng, qscale=1.2, vscale=1.0):
    from scipy.spatial.transform import Rotation

    from aerograsp.dynamics import AmState

    R = Rotation.random(random_state=rng).as_matrix()
    return AmState(
        rng.normal(size=3),
        R,
        rng.uniform(-qscale, qscale, size=model.n),
        vscale * rng.normal(size=model.n + 6),
    )
