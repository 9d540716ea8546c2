"""Inertially decoupling coordinates xi = T V = [rdot_c, w_b, rho].

In these coordinates the inertia matrix is block-diagonal
``diag(m I, Lambda_wb, Lambda_rho)`` and gravity only acts on the CoM row.
Time derivatives of T and of the task Jacobian are taken by central
differences along the current flow.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import dynamics as dyn
from .so3 import rot_z

log = logging.getLogger(__name__)

COND_WARN = 1e8
COND_ERROR = 1e12
FD_STEP = 1e-6


class NumericalError(RuntimeError):
    """A matrix that must be invertible is (numerically) singular."""


def _guarded_inv(A, what, state=None, Ai=None):
    # 1-norm condition number: within a factor n of the 2-norm one and
    # free once the inverse is known
    if Ai is None:
        try:
            Ai = np.linalg.inv(A)
        except np.linalg.LinAlgError:
            raise NumericalError(f"{what} is singular; state={state}") from None
    c = np.abs(A).sum(axis=0).max() * np.abs(Ai).sum(axis=0).max()
    if not np.isfinite(c) or c > COND_ERROR:
        raise NumericalError(f"{what} is singular (cond={c:.3g}); state={state}")
    if c > COND_WARN:
        log.warning("%s is ill-conditioned (cond=%.3g)", what, c)
    return Ai


@dataclass
class DecoupledTerms:
    T: np.ndarray
    T_inv: np.ndarray
    T_invT: np.ndarray
    xi: np.ndarray
    Lambda_xi: np.ndarray
    Gamma_xi: np.ndarray
    zeta_xi: np.ndarray
    N: np.ndarray
    N1: np.ndarray
    J_c: np.ndarray
    r_c: np.ndarray
    M: np.ndarray
    # transforms at the +-h flowed states, reused for the task Jacobian rate
    _flow: tuple = None

    @property
    def m(self):
        return self.Lambda_xi[0, 0]

    @property
    def Lambda_wb(self):
        return self.Lambda_xi[3:6, 3:6]

    @property
    def Lambda_rho(self):
        return self.Lambda_xi[6:, 6:]

    @property
    def rc_dot(self):
        return self.xi[0:3]

    @property
    def w_b(self):
        return self.xi[3:6]

    @property
    def rho(self):
        return self.xi[6:]


def _transform(model, state):
    q = dyn._check_q(model, state.q)
    try:
        T, M, r_bc, J_c, ZMZ, ZMZ_inv = K.decoupling_transform(
            model._joint_R0, model._joint_p0, model._axes, model._masses, model._coms,
            model._inertias_o, q, np.ascontiguousarray(state.R_b, dtype=float))
    except Exception as exc:  # LAPACK failure inside the kernel
        raise NumericalError(f"Z M Z^T is singular; state={state}") from exc
    _guarded_inv(ZMZ, "Z M Z^T", state, ZMZ_inv)
    return T, T[6:], M, state.p_b + r_bc, J_c


def build_transform(model, state):
    """The decoupling transform T (rows J_c, J_wb, N) and the projector N."""
    T, N, _, _, _ = _transform(model, state)
    return T, N


def _flow_step(state):
    return FD_STEP / max(1.0, np.linalg.norm(state.V))


def decoupled_terms(model, state):
    q = dyn._check_q(model, state.q)
    V = np.asarray(state.V, dtype=float)
    if not np.all(np.isfinite(V)):
        raise ValueError("non-finite velocity")
    R_b = np.ascontiguousarray(state.R_b, dtype=float)
    h = _flow_step(state)
    try:
        (T, T_inv, xi, Lam, Gam, zeta, M, r_bc, J_c, ZMZ, ZMZ_inv,
         Rp, Rm, qp, qm, Tp, Tm) = K.decoupled(
            model._joint_R0, model._joint_p0, model._axes, model._masses, model._coms,
            model._inertias_o, q, R_b, V, model.g_body(R_b), h)
    except Exception as exc:  # LAPACK failure inside the kernel
        raise NumericalError(f"decoupling transform is singular; state={state}") from exc
    _guarded_inv(ZMZ, "Z M Z^T", state, ZMZ_inv)
    _guarded_inv(T, "T", state, T_inv)
    # The CoM momentum is conserved apart from external forces, so Gamma_xi
    # can be chosen with a zero CoM row and column.  The kernel builds the
    # Coriolis factorization from the velocity with the CoM part removed (a
    # pure base translation, which leaves T unchanged) and keeps the
    # (w_b, rho) block.
    dp = h * (R_b @ V[0:3])
    sp = dyn.AmState(state.p_b + dp, Rp, qp, V)
    sm = dyn.AmState(state.p_b - dp, Rm, qm, V)
    return DecoupledTerms(
        T=T, T_inv=T_inv, T_invT=T_inv.T, xi=xi, Lambda_xi=Lam,
        Gamma_xi=Gam, zeta_xi=zeta, N=T[6:], N1=T[6:, 3:6], J_c=J_c,
        r_c=state.p_b + r_bc, M=M, _flow=(h, sp, sm, Tp, Tm),
    )


def off_block_norm(Lam, n):
    """Frobenius norm of everything outside the (3, 3, n) diagonal blocks."""
    mask = np.ones_like(Lam, dtype=bool)
    for a, b in ((0, 3), (3, 6), (6, 6 + n)):
        mask[a:b, a:b] = False
    return np.linalg.norm(Lam[mask])


def transform_wrench(terms, J_e, F_e):
    """F_xi = T^-T J_e^T F_e for a body wrench F_e of {e}."""
    if isinstance(F_e, dyn.Wrench):
        if F_e.frame != "ee":
            raise ValueError("F_e must be expressed in the end-effector frame")
        F_e = F_e.as_vector()
    return terms.T_invT @ (J_e.T @ np.asarray(F_e, dtype=float))


# -- task output -------------------------------------------------------------

def task_value(model, state, yaw=0.0):
    """y = (forward position, height, pitch) of {e} in the task frame.

    The task frame is the world frame turned by ``yaw`` about world z, so an
    AM approaching along heading ``yaw`` sees its arm plane as the task x-z
    plane.
    """
    R_e, p_e = dyn.ee_pose(model, state)
    Rt = rot_z(yaw)
    p = Rt.T @ p_e
    R = Rt.T @ R_e
    return np.array([p[0], p[2], dyn.planar_pitch(R)])


def task_jacobian_V(model, state, yaw=0.0):
    """J_task with ydot = J_task V."""
    J_e, R_e, _ = dyn.ee_kinematics(model, state)
    Rt = rot_z(yaw)
    R = Rt.T @ R_e
    Jp = R @ J_e[:3]
    a, b = -R[2, 0], R[0, 0]
    d = a * a + b * b
    gw = np.array([0.0, b * R[2, 2] + a * R[0, 2], -b * R[2, 1] - a * R[0, 1]]) / d
    return np.vstack([Jp[0], Jp[2], gw @ J_e[3:]])


def task_output(model, state, yaw=0.0, terms=None):
    """(y, J, Jdot) with ydot = J xi.

    J is only defined for a non-redundant arm (task dimension equal to n).
    """
    if model.n != 3:
        raise ValueError("the planar task output needs a 3-joint arm")
    if terms is None:
        terms = decoupled_terms(model, state)
    h, sp, sm, Tp, Tm = terms._flow
    c = np.ascontiguousarray
    return K.task_terms(
        model._joint_R0, model._joint_p0, model._axes, model.ee_rot, model.ee_pos,
        rot_z(yaw), h, dyn._check_q(model, state.q), c(state.R_b, dtype=float),
        c(state.p_b, dtype=float), terms.T_inv, sp.q, sp.R_b, sp.p_b, Tp,
        sm.q, sm.R_b, sm.p_b, Tm)


def dynamically_consistent_inverse(J, Lambda_xi):
    """J^{Lambda+} = Lambda^-1 J^T (J Lambda^-1 J^T)^-1 and Lambda_y."""
    LiJt = np.linalg.solve(Lambda_xi, J.T)
    Lambda_y = np.linalg.inv(J @ LiJt)
    Lambda_y = 0.5 * (Lambda_y + Lambda_y.T)
    return LiJt @ Lambda_y, Lambda_y
