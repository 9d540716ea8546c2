"""Floating-base dynamics of one aerial manipulator.

The generalized velocity is ``V = [v_b, w_b, qdot]`` with the base linear
and angular velocity expressed in the base frame, so the equations of
motion read ``M(q) Vdot + C(q, V) V + g(R_b, q) = tau + J_e^T F_e``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .so3 import E3, hat, is_rotation, rot_y

log = logging.getLogger(__name__)

JOINT_LIMIT = np.deg2rad(150.0)


@dataclass(frozen=True)
class Link:
    """One revolute link of the serial arm.

    ``axis`` is expressed in the joint-origin frame, which is placed in the
    parent frame by ``origin_rot`` / ``origin_pos``.
    """

    mass: float
    com: np.ndarray
    inertia: np.ndarray
    axis: np.ndarray
    origin_pos: np.ndarray
    origin_rot: np.ndarray = field(default_factory=lambda: np.eye(3))


def _spd(A):
    A = np.asarray(A, dtype=float)
    return A.shape == (3, 3) and np.allclose(A, A.T) and np.all(np.linalg.eigvalsh(A) > 0)


class MultibodyModel:
    """Kinematic and inertial description of a base plus an n-joint arm."""

    def __init__(self, base_mass, base_inertia, links, ee_pos=(0.0, 0.0, 0.0),
                 ee_rot=None, gravity=9.81):
        if base_mass <= 0:
            raise ValueError("base_mass must be positive")
        if not _spd(base_inertia):
            raise ValueError("base_inertia must be symmetric positive definite")
        for i, ln in enumerate(links):
            if ln.mass <= 0:
                raise ValueError(f"link {i}: mass must be positive")
            if not _spd(ln.inertia):
                raise ValueError(f"link {i}: inertia must be symmetric positive definite")
            if abs(np.linalg.norm(ln.axis) - 1.0) > 1e-12:
                raise ValueError(f"link {i}: joint axis must be a unit vector")
            if not is_rotation(ln.origin_rot):
                raise ValueError(f"link {i}: origin_rot is not a rotation")
        self.base_mass = float(base_mass)
        self.base_inertia = np.array(base_inertia, dtype=float)
        self.links = tuple(links)
        self.n = len(self.links)
        self.ee_pos = np.array(ee_pos, dtype=float)
        self.ee_rot = np.eye(3) if ee_rot is None else np.array(ee_rot, dtype=float)
        self.gravity = float(gravity)
        self.total_mass = self.base_mass + sum(ln.mass for ln in self.links)

        # packed arrays for the compiled kernels
        n = self.n
        self._masses = np.array([self.base_mass] + [ln.mass for ln in self.links])
        self._coms = np.zeros((n + 1, 3))
        self._inertias_o = np.zeros((n + 1, 3, 3))
        self._inertias_o[0] = self.base_inertia
        for i, ln in enumerate(self.links):
            c = np.asarray(ln.com, dtype=float)
            self._coms[i + 1] = c
            C = hat(c)
            self._inertias_o[i + 1] = np.asarray(ln.inertia, dtype=float) - ln.mass * C @ C
        self._axes = np.array([ln.axis for ln in self.links], dtype=float).reshape(n, 3)
        self._joint_R0 = np.array([ln.origin_rot for ln in self.links], dtype=float).reshape(n, 3, 3)
        self._joint_p0 = np.array([ln.origin_pos for ln in self.links], dtype=float).reshape(n, 3)

    @property
    def nv(self):
        return self.n + 6

    def body_inertias(self):
        """(mass, com in body frame, inertia about com in body frame) per body."""
        out = [(self.base_mass, np.zeros(3), self.base_inertia)]
        out += [(ln.mass, np.asarray(ln.com, float), np.asarray(ln.inertia, float)) for ln in self.links]
        return out

    def g_body(self, R_b):
        return R_b.T @ np.array([0.0, 0.0, -self.gravity])

    def _chain(self, q):
        return K.chain_kinematics(self._joint_R0, self._joint_p0, self._axes, q)

    def bundle(self, q, V, R_b):
        """M, C V + g, J_e and the base-frame end-effector pose in one pass."""
        return K.dynamics_bundle(
            self._joint_R0, self._joint_p0, self._axes, self._masses, self._coms,
            self._inertias_o, self.ee_rot, self.ee_pos, q, V, self.g_body(R_b),
        )


def default_model(n_links=3, link_length=0.15, link_mass=0.1, base_mass=1.5,
                  base_inertia=(0.02, 0.02, 0.04), shoulder=(0.0, 0.0, -0.05), gravity=9.81):
    """Quadrotor with a planar arm whose joints all rotate about base y.

    With every joint at zero the arm points along base +x.  Positive joint
    angles bend it downward.
    """
    L = link_length
    r2 = link_mass * L**2 / 12.0
    links = []
    for i in range(n_links):
        links.append(
            Link(
                mass=link_mass,
                com=np.array([L / 2, 0.0, 0.0]),
                inertia=np.diag([1e-5, r2 + 1e-6, r2 + 1e-6]),
                axis=np.array([0.0, 1.0, 0.0]),
                origin_pos=np.array(shoulder, dtype=float) if i == 0 else np.array([L, 0.0, 0.0]),
            )
        )
    return MultibodyModel(base_mass, np.diag(base_inertia), links,
                          ee_pos=(L, 0.0, 0.0), gravity=gravity)


@dataclass
class AmState:
    """Base pose, joint angles and the quasi-velocity [v_b, w_b, qdot]."""

    p_b: np.ndarray
    R_b: np.ndarray
    q: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        self.p_b = np.asarray(self.p_b, dtype=float)
        self.R_b = np.asarray(self.R_b, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        if self.V.shape != (self.q.size + 6,):
            raise ValueError("V must have n + 6 entries")

    @property
    def v_b(self):
        return self.V[0:3]

    @property
    def w_b(self):
        return self.V[3:6]

    @property
    def qd(self):
        return self.V[6:]

    def copy(self):
        return AmState(self.p_b.copy(), self.R_b.copy(), self.q.copy(), self.V.copy())

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in (self.p_b, self.R_b, self.q, self.V))

    def flowed(self, h, V=None):
        """Configuration advanced by h along velocity V (first order, exact on SO(3))."""
        from .so3 import expm

        V = self.V if V is None else V
        return AmState(
            self.p_b + h * self.R_b @ V[0:3],
            self.R_b @ expm(h * V[3:6]),
            self.q + h * V[6:],
            self.V,
        )


@dataclass
class Wrench:
    force: np.ndarray
    moment: np.ndarray
    frame: str = "ee"

    def __post_init__(self):
        if self.frame not in ("world", "ee"):
            raise ValueError(f"unknown wrench frame {self.frame!r}")
        self.force = np.asarray(self.force, dtype=float)
        self.moment = np.asarray(self.moment, dtype=float)

    @classmethod
    def zero(cls, frame="ee"):
        return cls(np.zeros(3), np.zeros(3), frame)

    def as_vector(self):
        return np.concatenate([self.force, self.moment])


def _check_q(model, q):
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n,):
        raise ValueError(f"joint vector must be {model.n} finite values, got {q!r}")
    big = np.abs(q).max() if q.size else 0.0
    if not big <= JOINT_LIMIT:
        if not np.isfinite(big):
            raise ValueError(f"joint vector must be {model.n} finite values, got {q!r}")
        log.warning("joint configuration outside +-150 deg: %s", q)
    return q


def mass_matrix(model, q):
    q = _check_q(model, q)
    Rj, _, _ = model._chain(q)
    return K.mass_matrix(Rj, model._joint_p0, model._axes, model._masses, model._coms, model._inertias_o)


def bias(model, q, V):
    """Zero-gravity, zero-acceleration inverse dynamics, i.e. C(q, V) V."""
    q = _check_q(model, q)
    V = np.asarray(V, dtype=float)
    Rj, _, _ = model._chain(q)
    return K.rnea(Rj, model._joint_p0, model._axes, model._masses, model._coms,
                  model._inertias_o, V, np.zeros_like(V), np.zeros(3))


def coriolis_matrix(model, q, V):
    q = _check_q(model, q)
    V = np.asarray(V, dtype=float)
    if not np.all(np.isfinite(V)):
        raise ValueError("non-finite velocity")
    Rj, _, _ = model._chain(q)
    return K.coriolis_matrix(Rj, model._joint_p0, model._axes, model._masses,
                             model._coms, model._inertias_o, V)


def coriolis_product(model, q, V, u):
    """C(q, V) u for the skew-consistent factorization (dM/dt = C + C^T).

    Bilinear in (V, u) and equal to the inverse-dynamics bias when u = V.
    """
    q = _check_q(model, q)
    V = np.asarray(V, dtype=float)
    u = np.asarray(u, dtype=float)
    if not (np.all(np.isfinite(V)) and np.all(np.isfinite(u))):
        raise ValueError("non-finite velocity")
    Rj, _, _ = model._chain(q)
    return K.coriolis_rnea(Rj, model._joint_p0, model._axes, model._masses,
                           model._coms, model._inertias_o, V, u)


def gravity_vector(model, q, R_b):
    q = _check_q(model, q)
    Rj, _, _ = model._chain(q)
    nv = model.nv
    return K.rnea(Rj, model._joint_p0, model._axes, model._masses, model._coms,
                  model._inertias_o, np.zeros(nv), np.zeros(nv), model.g_body(R_b))


def ee_jacobian(model, q):
    """6 x (n+6) body Jacobian of the end-effector frame {e}."""
    q = _check_q(model, q)
    _, Rrel, prel = model._chain(q)
    J, _, _ = K.ee_jacobian(Rrel, prel, model._axes, model.ee_rot, model.ee_pos)
    return J


def ee_pose(model, state):
    """World pose (R_e, p_e) of the end-effector frame."""
    return ee_kinematics(model, state)[1:]


def ee_kinematics(model, state):
    """(J_e, R_e, p_e) from a single pass over the chain."""
    q = _check_q(model, state.q)
    _, Rrel, prel = model._chain(q)
    J, R_be, p_be = K.ee_jacobian(Rrel, prel, model._axes, model.ee_rot, model.ee_pos)
    return J, state.R_b @ R_be, state.p_b + state.R_b @ p_be


def com_quantities(model, state):
    """CoM position r_c, offset r_bc (world), dr_bc/dq (world) and J_c."""
    q = _check_q(model, state.q)
    _, Rrel, prel = model._chain(q)
    r_base, dr_base = K.com_base(Rrel, prel, model._axes, model._masses, model._coms)
    R = state.R_b
    r_bc = R @ r_base
    dr_bc = R @ dr_base
    J_c = np.hstack([R, -hat(r_bc) @ R, dr_bc])
    return state.p_b + r_bc, r_bc, dr_bc, J_c


def kinetic_energy(model, state):
    return 0.5 * state.V @ mass_matrix(model, state.q) @ state.V


def potential_energy(model, state):
    r_c = com_quantities(model, state)[0]
    return model.total_mass * model.gravity * r_c[2]


def total_energy(model, state):
    return kinetic_energy(model, state) + potential_energy(model, state)


def forward_dynamics(model, state, tau, F_e=None):
    """Quasi-acceleration Vdot for generalized force tau and body wrench F_e."""
    M, h, Je, _, _ = model.bundle(state.q, state.V, state.R_b)
    rhs = np.asarray(tau, dtype=float) - h
    if F_e is not None:
        rhs = rhs + Je.T @ F_e
    return np.linalg.solve(M, rhs)


def nominal_joint_angles(model, reach=(0.22, -0.12), pitch=0.0):
    """Elbow-up IK for a 3-link planar arm of the default family.

    ``reach`` is the end-effector position (forward, up) relative to the
    shoulder, in the base x-z plane; ``pitch`` the end-effector angle about
    base y.
    """
    if model.n != 3:
        raise ValueError("closed-form IK is only available for 3 links")
    L1 = model.links[1].origin_pos[0]
    L2 = model.links[2].origin_pos[0]
    L3 = model.ee_pos[0]
    # planar angle phi measured from +x toward -z equals the y-rotation angle
    x, z = reach
    wx = x - L3 * np.cos(pitch)
    wz = z + L3 * np.sin(pitch)
    d2 = wx * wx + wz * wz
    c2 = (d2 - L1**2 - L2**2) / (2 * L1 * L2)
    if abs(c2) > 1.0:
        raise ValueError("target out of reach")
    q2 = -np.arccos(c2)
    # angle of the wrist point measured downward from +x
    phi_w = np.arctan2(-wz, wx)
    q1 = phi_w - np.arctan2(L2 * np.sin(q2), L1 + L2 * np.cos(q2))
    q3 = pitch - q1 - q2
    q = np.array([q1, q2, q3])
    # sanity: forward kinematics reproduces the target
    st = AmState(np.zeros(3), np.eye(3), q, np.zeros(9))
    _, p = ee_pose(model, st)
    shoulder = model.links[0].origin_pos
    assert np.allclose(p - shoulder, [x, 0.0, z], atol=1e-9), (p, x, z)
    return q


def planar_pitch(R):
    """Rotation angle about y of the x-z projection of R."""
    return np.arctan2(-R[2, 0], R[0, 0])


__all__ = [
    "AmState", "Link", "MultibodyModel", "Wrench", "com_quantities", "coriolis_matrix",
    "coriolis_product", "default_model", "ee_jacobian", "ee_pose", "forward_dynamics",
    "gravity_vector", "kinetic_energy", "mass_matrix", "potential_energy", "total_energy",
    "bias", "nominal_joint_angles", "rot_y", "E3",
]
