"""Compiled RK4 step of several AMs, one object and their penalty contacts.

Mirrors :meth:`aerograsp.sim.Simulation` stage by stage: the AM equations
come from the same dynamics bundle, the contact law is the one of
:func:`aerograsp.world.penalty_force`, and friction anchors stay fixed over
the step.  Shapes are encoded as 0 = none, 1 = box (dims = half extents),
2 = upright cylinder (dims = radius, half height, unused).
"""

import numpy as np
from numba import njit

from ._kernels import _cross, chain_kinematics, dynamics_bundle, ee_jacobian, rigid_rates

_CACHE = True

SHAPE_NONE, SHAPE_BOX, SHAPE_CYLINDER = 0, 1, 2


@njit(cache=_CACHE)
def _penetration(shape, dims, x0, x1, x2):
    """(hit, depth, n0, n1, n2) for a body-frame point."""
    if shape == SHAPE_BOX:
        g0 = dims[0] - abs(x0)
        g1 = dims[1] - abs(x1)
        g2 = dims[2] - abs(x2)
        if g0 <= 0.0 or g1 <= 0.0 or g2 <= 0.0:
            return False, 0.0, 0.0, 0.0, 0.0
        if g0 <= g1 and g0 <= g2:
            return True, g0, 1.0 if x0 >= 0 else -1.0, 0.0, 0.0
        if g1 <= g2:
            return True, g1, 0.0, 1.0 if x1 >= 0 else -1.0, 0.0
        return True, g2, 0.0, 0.0, 1.0 if x2 >= 0 else -1.0
    if shape == SHAPE_CYLINDER:
        rho = np.sqrt(x0 * x0 + x1 * x1)
        g_side = dims[0] - rho
        g_cap = dims[1] - abs(x2)
        if g_side <= 0.0 or g_cap <= 0.0:
            return False, 0.0, 0.0, 0.0, 0.0
        if g_side < g_cap and rho > 1e-12:
            return True, g_side, x0 / rho, x1 / rho, 0.0
        return True, g_cap, 0.0, 0.0, 1.0 if x2 >= 0 else -1.0
    return False, 0.0, 0.0, 0.0, 0.0


@njit(cache=_CACHE)
def _penalty_full(depth, n, s, v_rel, prm):
    """(N, F_t, sticking, kept spring, energy); prm = (k_n, d_n, mu, k_t, d_t)."""
    k_n, d_n, mu, k_t, d_t = prm[0], prm[1], prm[2], prm[3], prm[4]
    vn = v_rel[0] * n[0] + v_rel[1] * n[1] + v_rel[2] * n[2]
    N = k_n * depth - d_n * vn
    if N < 0.0:
        N = 0.0
    sn = s[0] * n[0] + s[1] * n[1] + s[2] * n[2]
    s_t = np.empty(3)
    F = np.empty(3)
    for k in range(3):
        s_t[k] = s[k] - sn * n[k]
        F[k] = -k_t * s_t[k] - d_t * (v_rel[k] - vn * n[k])
    ns2 = s_t[0] * s_t[0] + s_t[1] * s_t[1] + s_t[2] * s_t[2]
    energy = 0.5 * k_n * depth * depth + 0.5 * k_t * ns2
    limit = mu * N
    nt = np.sqrt(F[0] * F[0] + F[1] * F[1] + F[2] * F[2])
    if nt <= limit:
        return N, F, True, s_t, energy
    F *= limit / nt
    ns = np.sqrt(ns2)
    keep = s_t.copy()
    if k_t * ns > limit:
        keep *= limit / (k_t * ns)
    return N, F, False, keep, energy


@njit(cache=_CACHE)
def _penalty(depth, n, s, v_rel, prm):
    N, F, _, _, _ = _penalty_full(depth, n, s, v_rel, prm)
    for k in range(3):
        F[k] += N * n[k]
    return F


@njit(cache=_CACHE)
def _stage(jR0, jp0, axes, masses, coms, inertias_o, ee_R, ee_p, gravity,
           P, R, Q, V, taus, has_obj, op, oR, ov, ow, o_mass, o_Ib, o_Ib_inv,
           shape, dims, support, am_prm, tab_prm, table,
           am_anchor, am_has, tab_anchor, tab_has):
    A = P.shape[0]
    dP = np.empty_like(P)
    dR = np.empty_like(R)
    dQ = np.empty_like(Q)
    dV = np.empty_like(V)
    f_obj = np.zeros(3)
    m_obj = np.zeros(3)
    for i in range(A):
        Rb = np.ascontiguousarray(R[i])
        g_body = Rb.T @ np.array([0.0, 0.0, -gravity])
        M, h, Je, R_be, p_be = dynamics_bundle(jR0, jp0, axes, masses, coms, inertias_o,
                                               ee_R, ee_p, Q[i], V[i], g_body)
        f = np.zeros(3)
        if has_obj:
            R_e = Rb @ R_be
            tip = P[i] + Rb @ p_be
            tip_v = R_e @ (Je[0:3] @ V[i])
            d = tip - op
            loc = oR.T @ d
            hit, depth, n0, n1, n2 = _penetration(shape, dims, loc[0], loc[1], loc[2])
            if hit:
                n = oR @ np.array([n0, n1, n2])
                c = _cross(ow[0], ow[1], ow[2], d[0], d[1], d[2])
                v_rel = tip_v - (ov + np.array([c[0], c[1], c[2]]))
                s = np.zeros(3)
                if am_has[i]:
                    s = tip - (op + oR @ am_anchor[i])
                f = _penalty(depth, n, s, v_rel, am_prm)
                mm = _cross(d[0], d[1], d[2], f[0], f[1], f[2])
                for k in range(3):
                    f_obj[k] -= f[k]
                    m_obj[k] -= mm[k]
        pd, Rd, qd, Vd = rigid_rates(M, h, Je, R_be, Rb, V[i], taus[i], f)
        dP[i] = pd
        dR[i] = Rd
        dQ[i] = qd
        dV[i] = Vd
    dop = np.zeros(3)
    doR = np.zeros((3, 3))
    dov = np.zeros(3)
    dow = np.zeros(3)
    if has_obj:
        if table:
            n = np.array([0.0, 0.0, 1.0])
            for j in range(support.shape[0]):
                x = op + oR @ support[j]
                if x[2] >= 0.0:
                    continue
                d = x - op
                c = _cross(ow[0], ow[1], ow[2], d[0], d[1], d[2])
                xd = ov + np.array([c[0], c[1], c[2]])
                s = np.zeros(3)
                if tab_has[j]:
                    s = x - tab_anchor[j]
                f = _penalty(-x[2], n, s, xd, tab_prm)
                mm = _cross(d[0], d[1], d[2], f[0], f[1], f[2])
                for k in range(3):
                    f_obj[k] += f[k]
                    m_obj[k] += mm[k]
        wb = oR.T @ ow
        Iw = o_Ib @ wb
        c = _cross(wb[0], wb[1], wb[2], Iw[0], Iw[1], Iw[2])
        rhs = oR.T @ m_obj - np.array([c[0], c[1], c[2]])
        dow = oR @ (o_Ib_inv @ rhs)
        dop = ov.copy()
        W = np.zeros((3, 3))
        W[0, 1], W[0, 2] = -ow[2], ow[1]
        W[1, 0], W[1, 2] = ow[2], -ow[0]
        W[2, 0], W[2, 1] = -ow[1], ow[0]
        doR = W @ oR
        dov = f_obj / o_mass
        dov[2] -= gravity
    return dP, dR, dQ, dV, dop, doR, dov, dow


@njit(cache=_CACHE)
def _project(R):
    U, _, Vt = np.linalg.svd(R)
    Qm = U @ Vt
    if np.linalg.det(Qm) < 0:
        U[:, 2] *= -1.0
        Qm = U @ Vt
    return Qm


@njit(cache=_CACHE)
def rk4_step(jR0, jp0, axes, masses, coms, inertias_o, ee_R, ee_p, gravity, dt,
             P, R, Q, V, taus, has_obj, op, oR, ov, ow, o_mass, o_Ib, o_Ib_inv,
             shape, dims, support, am_prm, tab_prm, table,
             am_anchor, am_has, tab_anchor, tab_has):
    """One RK4 step.  Returns (ok, P, R, Q, V, op, oR, ov, ow); ok is False
    when the raw update is not finite (nothing is projected then)."""
    kP = np.zeros_like(P)
    kR = np.zeros_like(R)
    kQ = np.zeros_like(Q)
    kV = np.zeros_like(V)
    kop = np.zeros(3)
    koR = np.zeros((3, 3))
    kov = np.zeros(3)
    kow = np.zeros(3)
    sP, sR, sQ, sV = P, R, Q, V
    sop, soR, sov, sow = op, oR, ov, ow
    coefs = (0.5, 0.5, 1.0, 0.0)
    wts = (1.0, 2.0, 2.0, 1.0)
    for st in range(4):
        dP, dR, dQ, dV, dop, doR, dov, dow = _stage(
            jR0, jp0, axes, masses, coms, inertias_o, ee_R, ee_p, gravity,
            sP, sR, sQ, sV, taus, has_obj, sop, soR, sov, sow, o_mass, o_Ib, o_Ib_inv,
            shape, dims, support, am_prm, tab_prm, table,
            am_anchor, am_has, tab_anchor, tab_has)
        w = wts[st]
        kP += w * dP
        kR += w * dR
        kQ += w * dQ
        kV += w * dV
        kop += w * dop
        koR += w * doR
        kov += w * dov
        kow += w * dow
        c = coefs[st] * dt
        sP = P + c * dP
        sR = R + c * dR
        sQ = Q + c * dQ
        sV = V + c * dV
        sop = op + c * dop
        soR = oR + c * doR
        sov = ov + c * dov
        sow = ow + c * dow
    h = dt / 6.0
    nP = P + h * kP
    nR = R + h * kR
    nQ = Q + h * kQ
    nV = V + h * kV
    nop = op + h * kop
    noR = oR + h * koR
    nov = ov + h * kov
    now = ow + h * kow
    ok = (np.all(np.isfinite(nP)) and np.all(np.isfinite(nR)) and np.all(np.isfinite(nQ))
          and np.all(np.isfinite(nV)) and np.all(np.isfinite(nop)) and np.all(np.isfinite(noR))
          and np.all(np.isfinite(nov)) and np.all(np.isfinite(now)))
    if ok:
        for i in range(P.shape[0]):
            nR[i] = _project(np.ascontiguousarray(nR[i]))
        if has_obj:
            noR = _project(noR)
    return ok, nP, nR, nQ, nV, nop, noR, nov, now


@njit(cache=_CACHE)
def snapshot(jR0, jp0, axes, masses, coms, inertias_o, ee_R, ee_p, gravity,
             P, R, Q, V, has_obj, op, oR, ov, ow, shape, dims, support,
             am_prm, tab_prm, table, am_anchor, am_has, tab_anchor, tab_has):
    """Contact state at the current configuration.

    Returns per-AM (tip force, end-effector rotation, tip, hit, depth,
    normal, N, F_t, sticking, kept spring, energy) and per support point
    (point, hit, N, F_t, sticking, kept spring, energy).
    """
    A = P.shape[0]
    tipF = np.zeros((A, 3))
    R_e = np.zeros((A, 3, 3))
    tips = np.zeros((A, 3))
    hit = np.zeros(A, dtype=np.bool_)
    depth = np.zeros(A)
    nrm = np.zeros((A, 3))
    Nn = np.zeros(A)
    Ft = np.zeros((A, 3))
    stick = np.zeros(A, dtype=np.bool_)
    keep = np.zeros((A, 3))
    energy = np.zeros(A)
    for i in range(A):
        Rb = np.ascontiguousarray(R[i])
        _, Rrel, prel = chain_kinematics(jR0, jp0, axes, Q[i])
        Je, R_be, p_be = ee_jacobian(Rrel, prel, axes, ee_R, ee_p)
        Re = Rb @ R_be
        R_e[i] = Re
        tip = P[i] + Rb @ p_be
        tips[i] = tip
        if not has_obj:
            continue
        tip_v = Re @ (Je[0:3] @ V[i])
        d = tip - op
        loc = oR.T @ d
        h, dep, n0, n1, n2 = _penetration(shape, dims, loc[0], loc[1], loc[2])
        if not h:
            continue
        n = oR @ np.array([n0, n1, n2])
        c = _cross(ow[0], ow[1], ow[2], d[0], d[1], d[2])
        v_rel = tip_v - (ov + np.array([c[0], c[1], c[2]]))
        s = np.zeros(3)
        if am_has[i]:
            s = tip - (op + oR @ am_anchor[i])
        N, F, st, kp, en = _penalty_full(dep, n, s, v_rel, am_prm)
        hit[i] = True
        depth[i] = dep
        nrm[i] = n
        Nn[i] = N
        Ft[i] = F
        stick[i] = st
        keep[i] = kp
        energy[i] = en
        tipF[i] = F + N * n
    m = support.shape[0]
    pts = np.zeros((m, 3))
    t_hit = np.zeros(m, dtype=np.bool_)
    t_N = np.zeros(m)
    t_Ft = np.zeros((m, 3))
    t_stick = np.zeros(m, dtype=np.bool_)
    t_keep = np.zeros((m, 3))
    t_energy = np.zeros(m)
    if has_obj and table:
        n = np.array([0.0, 0.0, 1.0])
        for j in range(m):
            x = op + oR @ support[j]
            pts[j] = x
            if x[2] >= 0.0:
                continue
            d = x - op
            c = _cross(ow[0], ow[1], ow[2], d[0], d[1], d[2])
            xd = ov + np.array([c[0], c[1], c[2]])
            s = np.zeros(3)
            if tab_has[j]:
                s = x - tab_anchor[j]
            N, F, st, kp, en = _penalty_full(-x[2], n, s, xd, tab_prm)
            t_hit[j] = True
            t_N[j] = N
            t_Ft[j] = F
            t_stick[j] = st
            t_keep[j] = kp
            t_energy[j] = en
    return (tipF, R_e, tips, hit, depth, nrm, Nn, Ft, stick, keep, energy,
            pts, t_hit, t_N, t_Ft, t_stick, t_keep, t_energy)
