"""Compiled form of the per-AM control laws.

Same arithmetic as the Python laws in :mod:`aerograsp.control`, which stay
the reference.  Faults are reported by a status code and raised by the
caller.
"""

import numpy as np
from numba import njit

_CACHE = True

OK, ZERO_THRUST, PARALLEL_HEADING, SINGULAR_J3 = 0, 1, 2, 3


@njit(cache=_CACHE)
def _vee_skew(A):
    return np.array([A[2, 1], A[0, 2], A[1, 0]])


@njit(cache=_CACHE)
def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


@njit(cache=_CACHE)
def _logm(R):
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    c = min(max(c, -1.0), 1.0)
    th = np.arccos(c)
    if th < 1e-6:
        return _vee_skew(R - R.T) * 0.5
    if np.pi - th < 1e-6:
        B = 0.5 * (R + np.eye(3))
        k = np.argmax(np.diag(B))
        return th * (B[:, k] / np.sqrt(B[k, k]))
    return th / (2.0 * np.sin(th)) * _vee_skew(R - R.T)


@njit(cache=_CACHE)
def control_laws(T, Lam, Gam, zeta, xi, r_c, R_b, J, Jdot, y, F_comp,
                 r_c_d, rd_c_d, rdd_c_d, y_d, yd_d, ydd_d,
                 K_t, D_t, k_R, k_w, Lam_wb_d, K_y, D_y, b1d, compensate,
                 R_d_prev, has_R_prev, Om_prev, has_Om_prev, dt, cond_max):
    """Returns (status, tau, u1, u2, u3, f_d, R_d, Om, e_R, e_w, Lambda_y, Jp)."""
    n = y.shape[0]
    nv = xi.shape[0]
    z3 = np.zeros(3)
    tau = np.zeros(nv)
    u2 = np.zeros(3)
    u3 = np.zeros(n)
    R_d = np.eye(3)
    Om = np.zeros(3)
    e_R = np.zeros(3)
    e_w = np.zeros(3)
    Lambda_y = np.zeros((n, n))
    Jp = np.zeros((nv, n))
    b3 = R_b[:, 2].copy()

    # CoM law
    m = Lam[0, 0]
    F_rc = F_comp[0:3] if compensate else z3
    f_d = (m * rdd_c_d + zeta[0:3] - K_t @ (r_c - r_c_d) - D_t @ (xi[0:3] - rd_c_d) - F_rc)
    nf = np.sqrt(f_d @ f_d)
    if nf < 1e-6:
        return ZERO_THRUST, tau, 0.0, u2, u3, f_d, R_d, Om, e_R, e_w, Lambda_y, Jp
    u1 = f_d @ b3

    # desired attitude and its backward-differenced rates
    d3 = f_d / nf
    c = _cross(d3, b1d)
    nc = np.sqrt(c @ c)
    if nc < 1e-6:
        return PARALLEL_HEADING, tau, u1, u2, u3, f_d, R_d, Om, e_R, e_w, Lambda_y, Jp
    d2 = c / nc
    d1 = _cross(d2, d3)
    for k in range(3):
        R_d[k, 0] = d1[k]
        R_d[k, 1] = d2[k]
        R_d[k, 2] = d3[k]
    Omd = np.zeros(3)
    if has_R_prev:
        Om = _logm(R_d_prev.T @ R_d) / dt
        if has_Om_prev:
            Omd = (Om - Om_prev) / dt

    # attitude law
    F_wb = F_comp[3:6] if compensate else z3
    w = xi[3:6]
    RtRd = R_b.T @ R_d
    e_R = 0.5 * _vee_skew(R_d.T @ R_b - R_b.T @ R_d)
    w_b_d = RtRd @ Om
    e_w = w - w_b_d
    wd_b_d = -_cross(w, w_b_d) + RtRd @ Omd
    Gw = Gam[3:6, 3:] @ xi[3:]
    acc = wd_b_d - np.linalg.solve(Lam_wb_d, k_R * e_R + k_w * e_w)
    u2 = np.ascontiguousarray(Lam[3:6, 3:6]) @ acc + Gw - F_wb

    # impedance law
    LiJt = np.linalg.solve(Lam, np.ascontiguousarray(J.T))
    Ly = np.linalg.inv(J @ LiJt)
    Lambda_y = 0.5 * (Ly + Ly.T)
    Jp = LiJt @ Lambda_y
    JbT = np.ascontiguousarray(Jp.T)
    J3 = np.ascontiguousarray(JbT[:, 6:])
    cnd = np.linalg.cond(J3)
    if not np.isfinite(cnd) or cnd > cond_max:
        return SINGULAR_J3, tau, u1, u2, u3, f_d, R_d, Om, e_R, e_w, Lambda_y, Jp
    y_err = y - y_d
    yd_err = J @ xi - yd_d
    bias = Gam @ xi + zeta
    u12 = np.empty(6)
    for k in range(3):
        u12[k] = u1 * b3[k] - bias[k]
        u12[3 + k] = u2[k] - bias[3 + k]
    rhs = -(np.ascontiguousarray(JbT[:, :6]) @ u12 + Lambda_y @ (Jdot @ xi - ydd_d)
            + D_y @ yd_err + K_y @ y_err)
    u3 = np.linalg.solve(J3, rhs) + bias[6:6 + n]

    u = np.empty(nv)
    for k in range(3):
        u[k] = u1 * b3[k]
        u[3 + k] = u2[k]
    u[6:] = u3
    tau = T.T @ u
    return OK, tau, u1, u2, u3, f_d, R_d, Om, e_R, e_w, Lambda_y, Jp
