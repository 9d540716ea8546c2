"""Decentralized controller for one aerial manipulator.

Three laws act on the decoupled coordinates: a CoM force projected on the
thrust axis, a geometric attitude law on SO(3) and an end-effector impedance
law.  Only the AM's own state and its own measured end-effector wrench are
used, so controllers of different AMs never exchange information.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _laws as L
from . import decoupling as dc
from . import dynamics as dyn
from .so3 import E3, cross, hat, logm, vee

log = logging.getLogger(__name__)

J3_COND_MAX = 1e8
_EYE3 = np.eye(3)
_ZERO3 = np.zeros(3)


class DegenerateThrustError(RuntimeError):
    """The desired force vanishes or is parallel to the desired heading."""


class SingularConfigurationError(RuntimeError):
    """The joint block of the task map cannot be inverted."""


def _spd(name, A, size):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape == (1, 1) and size > 1:
        A = A[0, 0] * np.eye(size)
    elif A.ndim == 2 and A.shape == (1, size):
        A = np.diag(A[0])
    if A.shape != (size, size):
        raise ValueError(f"{name} must be {size}x{size}, got {A.shape}")
    if not np.allclose(A, A.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(A).min() <= 0:
        raise ValueError(f"{name} must be positive definite")
    return A


@dataclass
class ControlGains:
    K_t: np.ndarray
    D_t: np.ndarray
    k_R: float
    k_w: float
    Lambda_wb_d: np.ndarray
    K_y: np.ndarray
    D_y: np.ndarray
    b1d: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    compensate_forces: bool = True

    def __post_init__(self):
        self.K_t = _spd("K_t", self.K_t, 3)
        self.D_t = _spd("D_t", self.D_t, 3)
        self.Lambda_wb_d = _spd("Lambda_wb_d", self.Lambda_wb_d, 3)
        n = np.atleast_2d(self.K_y).shape[-1]
        self.K_y = _spd("K_y", self.K_y, n)
        self.D_y = _spd("D_y", self.D_y, n)
        if not (self.k_R > 0 and self.k_w > 0):
            raise ValueError("k_R and k_w must be positive")
        self.b1d = np.asarray(self.b1d, dtype=float)
        if abs(np.linalg.norm(self.b1d) - 1.0) > 1e-9:
            raise ValueError("b1d must be a unit vector")
        self.lambda_min_Dy = float(np.linalg.eigvalsh(self.D_y).min())

    def with_heading(self, b1d):
        return ControlGains(self.K_t, self.D_t, self.k_R, self.k_w, self.Lambda_wb_d,
                            self.K_y, self.D_y, b1d, self.compensate_forces)


def default_gains(model, q_nominal, *, K_t=64.0, D_t=16.0, k_R=25.0, k_w=2.5,
                  K_y=(200.0, 200.0, 20.0), D_y=(20.0, 20.0, 0.1), compensate_forces=True):
    """Gain set used by the shipped scenarios.

    Translational gains are given per unit of total mass.  The desired
    attitude inertia is the decoupled base inertia at ``q_nominal``.
    """
    m = model.total_mass
    st = dyn.AmState(np.zeros(3), np.eye(3), q_nominal, np.zeros(model.nv))
    Lam_w = dc.decoupled_terms(model, st).Lambda_wb
    return ControlGains(
        K_t=K_t * m * np.eye(3), D_t=D_t * m * np.eye(3), k_R=k_R, k_w=k_w,
        Lambda_wb_d=0.5 * (Lam_w + Lam_w.T), K_y=np.diag(K_y), D_y=np.diag(D_y),
        compensate_forces=compensate_forces,
    )


@dataclass
class Setpoint:
    r_c_d: np.ndarray
    rd_c_d: np.ndarray
    rdd_c_d: np.ndarray
    y_d: np.ndarray
    yd_d: np.ndarray
    ydd_d: np.ndarray

    @classmethod
    def hold(cls, r_c_d, y_d):
        z3, zy = np.zeros(3), np.zeros(len(y_d))
        return cls(np.asarray(r_c_d, float), z3, z3, np.asarray(y_d, float), zy, zy)

    def is_finite(self):
        return all(np.all(np.isfinite(v)) for v in vars(self).values())


@dataclass
class ControlOutput:
    u1: float
    u2: np.ndarray
    u3: np.ndarray
    tau: np.ndarray
    f_d: np.ndarray
    R_b_d: np.ndarray
    r_c: np.ndarray
    r_c_err: np.ndarray
    rc_dot_err: np.ndarray
    e_R: np.ndarray
    e_w: np.ndarray
    y: np.ndarray
    y_err: np.ndarray
    y_dot_err: np.ndarray
    F_y: np.ndarray
    storage: float
    event: str = ""


# -- individual laws -------------------------------------------------------

def com_control(gains, setpoint, state, terms, F_rc):
    m = terms.m
    weight = terms.zeta_xi[:3]  # m g e3
    if not gains.compensate_forces:
        F_rc = np.zeros(3)
    r_err = terms.r_c - setpoint.r_c_d
    v_err = terms.rc_dot - setpoint.rd_c_d
    f_d = m * setpoint.rdd_c_d + weight - gains.K_t @ r_err - gains.D_t @ v_err - F_rc
    if np.linalg.norm(f_d) < 1e-6:
        raise DegenerateThrustError(f"desired force vanishes: f_d={f_d}")
    return f_d, float(f_d @ (state.R_b @ E3))


def desired_attitude(f_d, b1d):
    nf = np.linalg.norm(f_d)
    if nf < 1e-6:
        raise DegenerateThrustError(f"desired force vanishes: f_d={f_d}")
    b3 = f_d / nf
    c = cross(b3, b1d)
    nc = np.linalg.norm(c)
    if nc < 1e-6:
        raise DegenerateThrustError("desired thrust is parallel to the desired heading")
    b2 = c / nc
    return np.column_stack([cross(b2, b3), b2, b3])


def attitude_errors(R_b, R_b_d, w_b, Omega_d):
    """(e_R, e_w, w_b_d) with Omega_d the desired body rate of R_b_d."""
    e_R = 0.5 * vee(R_b_d.T @ R_b - R_b.T @ R_b_d)
    w_b_d = R_b.T @ R_b_d @ Omega_d
    return e_R, w_b - w_b_d, w_b_d


def attitude_control(gains, state, terms, R_b_d, Omega_d, Omega_d_dot, F_wb):
    if not gains.compensate_forces:
        F_wb = np.zeros(3)
    w = terms.w_b
    e_R, e_w, w_b_d = attitude_errors(state.R_b, R_b_d, w, Omega_d)
    wd_b_d = -hat(w) @ w_b_d + state.R_b.T @ R_b_d @ Omega_d_dot
    Gw = terms.Gamma_xi[3:6, 3:] @ terms.xi[3:]
    acc = wd_b_d - np.linalg.solve(gains.Lambda_wb_d, gains.k_R * e_R + gains.k_w * e_w)
    u2 = terms.Lambda_wb @ acc + Gw - F_wb
    return u2, e_R, e_w


def impedance_control(gains, setpoint, terms, u1, u2, R_b, J, Jdot, y):
    """Joint-block input u3 making the task error a mass-spring-damper.

    Returns (u3, Lambda_y, J_lambda_plus).
    """
    n = len(y)
    Jp, Lambda_y = dc.dynamically_consistent_inverse(J, terms.Lambda_xi)
    JbT = Jp.T
    J3 = JbT[:, 6:]
    c = np.linalg.cond(J3)
    if not np.isfinite(c) or c > J3_COND_MAX:
        raise SingularConfigurationError(f"joint block of the task map is singular (cond={c:.3g})")
    y_err = y - setpoint.y_d
    yd_err = J @ terms.xi - setpoint.yd_d
    bias = terms.Gamma_xi @ terms.xi + terms.zeta_xi
    u12 = np.concatenate([u1 * (R_b @ E3), u2])
    rhs = -(JbT[:, :6] @ (u12 - bias[:6])
            + Lambda_y @ (Jdot @ terms.xi - setpoint.ydd_d)
            + gains.D_y @ yd_err + gains.K_y @ y_err)
    u3 = np.linalg.solve(J3, rhs) + bias[6:6 + n]
    return u3, Lambda_y, Jp


def to_actuator_space(terms, u1, u2, u3, R_b):
    u = np.concatenate([u1 * (R_b @ E3), u2, u3])
    return terms.T.T @ u


def storage(gains, m, r_err, v_err, e_w, R_b, R_b_d, y_err, yd_err, Lambda_y):
    """Storage of one AM with the Lyapunov cross terms set to zero."""
    return float(
        0.5 * m * v_err @ v_err + 0.5 * r_err @ gains.K_t @ r_err
        + 0.5 * e_w @ gains.Lambda_wb_d @ e_w
        + 0.5 * gains.k_R * np.trace(np.eye(3) - R_b_d.T @ R_b)
        + 0.5 * yd_err @ Lambda_y @ yd_err + 0.5 * y_err @ gains.K_y @ y_err
    )


# -- stateful per-AM controller --------------------------------------------

class AmController:
    """One AM's controller.

    Keeps the only memory the laws need: the previous desired attitude and
    rate (for the backward differences giving the desired body rate and
    acceleration), the filtered compensation wrench and the last valid
    actuator command.

    ``force_filter`` is the time constant (s) of a first-order low-pass on
    the wrench fed to the CoM and attitude laws.  The desired attitude
    depends on that wrench and is differentiated twice across ticks, so an
    unfiltered contact onset turns into an impulsive attitude command.  The
    impedance port always sees the raw wrench.  Zero disables the filter.
    ``compiled=False`` evaluates the laws with the Python reference code.
    """

    def __init__(self, model, gains, dt, task_yaw=0.0, force_filter=0.05, compiled=True):
        if dt <= 0:
            raise ValueError("dt must be positive")
        if force_filter < 0:
            raise ValueError("force_filter must be non-negative")
        self.model = model
        self.gains = gains
        self.dt = dt
        self.task_yaw = task_yaw
        self.force_filter = force_filter
        self.compiled = compiled
        self.reset()

    def reset(self):
        self._R_d_prev = None
        self._Omega_prev = None
        self._last_tau = None
        self._F_comp = None

    def _compensation_wrench(self, F_base):
        if self._F_comp is None or self.force_filter == 0:
            # the first tick starts from the measurement itself
            self._F_comp = F_base.copy()
        else:
            a = self.dt / (self.force_filter + self.dt)
            self._F_comp = self._F_comp + a * (F_base - self._F_comp)
        return self._F_comp

    def _desired_rates(self, R_d):
        if self._R_d_prev is None:
            Om = np.zeros(3)
            Omd = np.zeros(3)
        else:
            Om = logm(self._R_d_prev.T @ R_d) / self.dt
            Omd = np.zeros(3) if self._Omega_prev is None else (Om - self._Omega_prev) / self.dt
        return Om, Omd

    def _laws_reference(self, setpoint, state, terms, J, Jdot, y, F_comp):
        gains = self.gains
        f_d, u1 = com_control(gains, setpoint, state, terms, F_comp[:3])
        R_d = desired_attitude(f_d, gains.b1d)
        Om, Omd = self._desired_rates(R_d)
        u2, e_R, e_w = attitude_control(gains, state, terms, R_d, Om, Omd, F_comp[3:6])
        u3, Lambda_y, Jp = impedance_control(gains, setpoint, terms, u1, u2, state.R_b, J, Jdot, y)
        tau = to_actuator_space(terms, u1, u2, u3, state.R_b)
        return tau, u1, u2, u3, f_d, R_d, Om, e_R, e_w, Lambda_y, Jp

    def _laws_compiled(self, setpoint, state, terms, J, Jdot, y, F_comp):
        g, sp = self.gains, setpoint
        has_R = self._R_d_prev is not None
        has_Om = self._Omega_prev is not None
        status, tau, u1, u2, u3, f_d, R_d, Om, e_R, e_w, Lambda_y, Jp = L.control_laws(
            terms.T, terms.Lambda_xi, terms.Gamma_xi, terms.zeta_xi, terms.xi, terms.r_c,
            np.ascontiguousarray(state.R_b, dtype=float), J, Jdot, y, F_comp,
            sp.r_c_d, sp.rd_c_d, sp.rdd_c_d, sp.y_d, sp.yd_d, sp.ydd_d,
            g.K_t, g.D_t, float(g.k_R), float(g.k_w), g.Lambda_wb_d, g.K_y, g.D_y, g.b1d,
            bool(g.compensate_forces), self._R_d_prev if has_R else _EYE3, has_R,
            self._Omega_prev if has_Om else _ZERO3, has_Om, float(self.dt), J3_COND_MAX)
        if status == L.ZERO_THRUST:
            raise DegenerateThrustError(f"desired force vanishes: f_d={f_d}")
        if status == L.PARALLEL_HEADING:
            raise DegenerateThrustError("desired thrust is parallel to the desired heading")
        if status == L.SINGULAR_J3:
            raise SingularConfigurationError("joint block of the task map is singular")
        return tau, float(u1), u2, u3, f_d, R_d, Om, e_R, e_w, Lambda_y, Jp

    def step(self, setpoint, state, F_e=None):
        """ControlOutput for this tick; F_e is the measured body wrench of {e}."""
        model, gains = self.model, self.gains
        if F_e is None:
            F_e = np.zeros(6)
        elif isinstance(F_e, dyn.Wrench):
            F_e = F_e.as_vector()
        terms = dc.decoupled_terms(model, state)
        J_e = dyn.ee_jacobian(model, state.q)
        F_xi = dc.transform_wrench(terms, J_e, F_e)
        y, J, Jdot = dc.task_output(model, state, self.task_yaw, terms=terms)
        F_comp = self._compensation_wrench(F_xi[:6])
        laws = self._laws_compiled if self.compiled else self._laws_reference
        event = ""
        try:
            tau, u1, u2, u3, f_d, R_d, Om, e_R, e_w, Lambda_y, Jp = laws(
                setpoint, state, terms, J, Jdot, y, F_comp)
            self._R_d_prev, self._Omega_prev = R_d, Om
            self._last_tau = tau
        except (DegenerateThrustError, SingularConfigurationError) as exc:
            if self._last_tau is None:
                raise
            log.warning("controller fault, holding last command: %s", exc)
            event = type(exc).__name__
            tau = self._last_tau
            R_d = self._R_d_prev
            f_d = np.full(3, np.nan)
            u1, u2, u3 = tau[2], np.full(3, np.nan), np.full(model.n, np.nan)
            e_R, e_w, _ = attitude_errors(state.R_b, R_d, terms.w_b, np.zeros(3))
            Jp, Lambda_y = dc.dynamically_consistent_inverse(J, terms.Lambda_xi)

        r_err = terms.r_c - setpoint.r_c_d
        v_err = terms.rc_dot - setpoint.rd_c_d
        y_err = y - setpoint.y_d
        yd_err = J @ terms.xi - setpoint.yd_d
        S = storage(gains, terms.m, r_err, v_err, e_w, state.R_b, R_d, y_err, yd_err, Lambda_y)
        return ControlOutput(
            u1=u1, u2=u2, u3=u3, tau=tau, f_d=f_d, R_b_d=R_d, r_c=terms.r_c,
            r_c_err=r_err, rc_dot_err=v_err, e_R=e_R, e_w=e_w, y=y, y_err=y_err,
            y_dot_err=yd_err, F_y=Jp.T @ F_xi, storage=S, event=event,
        )
