"""Compiled inner loops for the serial-chain floating-base model.

Conventions: body 0 is the floating base, body i+1 is link i.  All
quantities of a body are expressed in that body's own frame.  Generalized
velocities are ordered [v_b, w_b, qdot] with base quantities in the base
frame.  3-vectors inside loops are tuples to keep the loops allocation-free.
"""

import numpy as np
from numba import njit

_CACHE = True


@njit(cache=_CACHE, inline="always")
def _cross(a0, a1, a2, b0, b1, b2):
    return a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0


@njit(cache=_CACHE, inline="always")
def _mv(A, x0, x1, x2):
    return (
        A[0, 0] * x0 + A[0, 1] * x1 + A[0, 2] * x2,
        A[1, 0] * x0 + A[1, 1] * x1 + A[1, 2] * x2,
        A[2, 0] * x0 + A[2, 1] * x1 + A[2, 2] * x2,
    )


@njit(cache=_CACHE, inline="always")
def _mtv(A, x0, x1, x2):
    return (
        A[0, 0] * x0 + A[1, 0] * x1 + A[2, 0] * x2,
        A[0, 1] * x0 + A[1, 1] * x1 + A[2, 1] * x2,
        A[0, 2] * x0 + A[1, 2] * x1 + A[2, 2] * x2,
    )


@njit(cache=_CACHE)
def _mm(A, B, out):
    for i in range(3):
        for j in range(3):
            out[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] + A[i, 2] * B[2, j]


@njit(cache=_CACHE)
def _axis_rot(axis, angle, R):
    c = np.cos(angle)
    s = np.sin(angle)
    x, y, z = axis[0], axis[1], axis[2]
    C = 1.0 - c
    R[0, 0] = c + x * x * C
    R[0, 1] = x * y * C - z * s
    R[0, 2] = x * z * C + y * s
    R[1, 0] = y * x * C + z * s
    R[1, 1] = c + y * y * C
    R[1, 2] = y * z * C - x * s
    R[2, 0] = z * x * C - y * s
    R[2, 1] = z * y * C + x * s
    R[2, 2] = c + z * z * C


@njit(cache=_CACHE)
def chain_kinematics(joint_R0, joint_p0, axes, q):
    """Relative rotations and body poses in the base frame.

    Returns (Rj, Rrel, prel): Rj[i] is the orientation of link i in its
    parent frame, Rrel[b]/prel[b] the pose of body b in the base frame.
    """
    n = q.shape[0]
    Rj = np.empty((n, 3, 3))
    Rrel = np.zeros((n + 1, 3, 3))
    prel = np.zeros((n + 1, 3))
    tmp = np.empty((3, 3))
    for a in range(3):
        Rrel[0, a, a] = 1.0
    for i in range(n):
        _axis_rot(axes[i], q[i], tmp)
        _mm(joint_R0[i], tmp, Rj[i])
        _mm(Rrel[i], Rj[i], Rrel[i + 1])
        p = _mv(Rrel[i], joint_p0[i, 0], joint_p0[i, 1], joint_p0[i, 2])
        for k in range(3):
            prel[i + 1, k] = prel[i, k] + p[k]
    return Rj, Rrel, prel


@njit(cache=_CACHE)
def rnea(Rj, joint_p0, axes, masses, coms, inertias_o, V, Vd, g_body):
    """Floating-base recursive Newton-Euler.

    Returns the generalized force that produces quasi-acceleration Vd at
    velocity V with gravitational acceleration g_body (base frame).
    """
    n = axes.shape[0]
    nb = n + 1
    w = np.empty((nb, 3))
    v = np.empty((nb, 3))
    al = np.empty((nb, 3))
    a = np.empty((nb, 3))
    for k in range(3):
        v[0, k] = V[k]
        w[0, k] = V[3 + k]
        a[0, k] = Vd[k] - g_body[k]
        al[0, k] = Vd[3 + k]
    for i in range(n):
        b = i + 1
        R = Rj[i]
        ax0, ax1, ax2 = axes[i, 0], axes[i, 1], axes[i, 2]
        qd = V[6 + i]
        qdd = Vd[6 + i]
        r0, r1, r2 = joint_p0[i, 0], joint_p0[i, 1], joint_p0[i, 2]
        s0, s1, s2 = ax0 * qd, ax1 * qd, ax2 * qd

        wp = _mtv(R, w[i, 0], w[i, 1], w[i, 2])
        wb0, wb1, wb2 = wp[0] + s0, wp[1] + s1, wp[2] + s2
        c = _cross(w[i, 0], w[i, 1], w[i, 2], r0, r1, r2)
        vp = _mtv(R, v[i, 0] + c[0], v[i, 1] + c[1], v[i, 2] + c[2])
        alp = _mtv(R, al[i, 0], al[i, 1], al[i, 2])
        cws = _cross(wb0, wb1, wb2, s0, s1, s2)
        c = _cross(al[i, 0], al[i, 1], al[i, 2], r0, r1, r2)
        ap = _mtv(R, a[i, 0] + c[0], a[i, 1] + c[1], a[i, 2] + c[2])
        cvs = _cross(vp[0], vp[1], vp[2], s0, s1, s2)

        w[b, 0], w[b, 1], w[b, 2] = wb0, wb1, wb2
        v[b, 0], v[b, 1], v[b, 2] = vp[0], vp[1], vp[2]
        al[b, 0] = alp[0] + ax0 * qdd + cws[0]
        al[b, 1] = alp[1] + ax1 * qdd + cws[1]
        al[b, 2] = alp[2] + ax2 * qdd + cws[2]
        a[b, 0] = ap[0] + cvs[0]
        a[b, 1] = ap[1] + cvs[1]
        a[b, 2] = ap[2] + cvs[2]

    f_ang = np.empty((nb, 3))
    f_lin = np.empty((nb, 3))
    for b in range(nb):
        m = masses[b]
        c0, c1, c2 = coms[b, 0], coms[b, 1], coms[b, 2]
        Io = inertias_o[b]
        w0, w1, w2 = w[b, 0], w[b, 1], w[b, 2]
        v0, v1, v2 = v[b, 0], v[b, 1], v[b, 2]
        l0, l1, l2 = al[b, 0], al[b, 1], al[b, 2]
        a0, a1, a2 = a[b, 0], a[b, 1], a[b, 2]

        Iw = _mv(Io, w0, w1, w2)
        cv = _cross(c0, c1, c2, v0, v1, v2)
        h_ang = (Iw[0] + m * cv[0], Iw[1] + m * cv[1], Iw[2] + m * cv[2])
        wc = _cross(w0, w1, w2, c0, c1, c2)
        h_lin = (m * (v0 + wc[0]), m * (v1 + wc[1]), m * (v2 + wc[2]))

        Ia = _mv(Io, l0, l1, l2)
        ca = _cross(c0, c1, c2, a0, a1, a2)
        wh = _cross(w0, w1, w2, h_ang[0], h_ang[1], h_ang[2])
        vh = _cross(v0, v1, v2, h_lin[0], h_lin[1], h_lin[2])
        f_ang[b, 0] = Ia[0] + m * ca[0] + wh[0] + vh[0]
        f_ang[b, 1] = Ia[1] + m * ca[1] + wh[1] + vh[1]
        f_ang[b, 2] = Ia[2] + m * ca[2] + wh[2] + vh[2]
        lc = _cross(l0, l1, l2, c0, c1, c2)
        whl = _cross(w0, w1, w2, h_lin[0], h_lin[1], h_lin[2])
        f_lin[b, 0] = m * (a0 + lc[0]) + whl[0]
        f_lin[b, 1] = m * (a1 + lc[1]) + whl[1]
        f_lin[b, 2] = m * (a2 + lc[2]) + whl[2]

    tau = np.empty(n + 6)
    for i in range(n - 1, -1, -1):
        b = i + 1
        R = Rj[i]
        tau[6 + i] = axes[i, 0] * f_ang[b, 0] + axes[i, 1] * f_ang[b, 1] + axes[i, 2] * f_ang[b, 2]
        fl = _mv(R, f_lin[b, 0], f_lin[b, 1], f_lin[b, 2])
        fa = _mv(R, f_ang[b, 0], f_ang[b, 1], f_ang[b, 2])
        rf = _cross(joint_p0[i, 0], joint_p0[i, 1], joint_p0[i, 2], fl[0], fl[1], fl[2])
        for k in range(3):
            f_ang[i, k] += fa[k] + rf[k]
            f_lin[i, k] += fl[k]
    for k in range(3):
        tau[k] = f_lin[0, k]
        tau[3 + k] = f_ang[0, k]
    return tau


@njit(cache=_CACHE)
def body_jacobians(Rj, joint_p0, axes):
    """Spatial Jacobians [angular; linear-of-origin] of every body, in body coordinates."""
    n = axes.shape[0]
    nv = n + 6
    J = np.zeros((n + 1, 6, nv))
    for k in range(3):
        J[0, 3 + k, k] = 1.0
        J[0, k, 3 + k] = 1.0
    for i in range(n):
        b = i + 1
        R = Rj[i]
        r0, r1, r2 = joint_p0[i, 0], joint_p0[i, 1], joint_p0[i, 2]
        for c in range(nv):
            wp = _mtv(R, J[i, 0, c], J[i, 1, c], J[i, 2, c])
            cr = _cross(J[i, 0, c], J[i, 1, c], J[i, 2, c], r0, r1, r2)
            vp = _mtv(R, J[i, 3, c] + cr[0], J[i, 4, c] + cr[1], J[i, 5, c] + cr[2])
            J[b, 0, c], J[b, 1, c], J[b, 2, c] = wp[0], wp[1], wp[2]
            J[b, 3, c], J[b, 4, c], J[b, 5, c] = vp[0], vp[1], vp[2]
        for k in range(3):
            J[b, k, 6 + i] += axes[i, k]
    return J


@njit(cache=_CACHE)
def mass_matrix(Rj, joint_p0, axes, masses, coms, inertias_o):
    """Composite sum of J_b^T I_b J_b over bodies (spatial inertias about body origins)."""
    n = axes.shape[0]
    nv = n + 6
    J = body_jacobians(Rj, joint_p0, axes)
    M = np.zeros((nv, nv))
    IJ = np.empty((6, nv))
    for b in range(n + 1):
        m = masses[b]
        c0, c1, c2 = coms[b, 0], coms[b, 1], coms[b, 2]
        Io = inertias_o[b]
        for col in range(nv):
            w0, w1, w2 = J[b, 0, col], J[b, 1, col], J[b, 2, col]
            v0, v1, v2 = J[b, 3, col], J[b, 4, col], J[b, 5, col]
            Iw = _mv(Io, w0, w1, w2)
            cv = _cross(c0, c1, c2, v0, v1, v2)
            wc = _cross(w0, w1, w2, c0, c1, c2)
            IJ[0, col] = Iw[0] + m * cv[0]
            IJ[1, col] = Iw[1] + m * cv[1]
            IJ[2, col] = Iw[2] + m * cv[2]
            IJ[3, col] = m * (v0 + wc[0])
            IJ[4, col] = m * (v1 + wc[1])
            IJ[5, col] = m * (v2 + wc[2])
        for r in range(nv):
            for col in range(r, nv):
                s = 0.0
                for k in range(6):
                    s += J[b, k, r] * IJ[k, col]
                M[r, col] += s
    for r in range(nv):
        for col in range(r + 1, nv):
            M[col, r] = M[r, col]
    return M


@njit(cache=_CACHE)
def coriolis_rnea(Rj, joint_p0, axes, masses, coms, inertias_o, V, U):
    """C(q, V) U for the factorization C = sum_b J_b^T [I_b dJ_b + (I_b v_b) xbar*] J_b.

    Forward pass carries v_b = J_b V, u_b = J_b U and c_b = dJ_b/dt U; the
    body force is I_b c_b + u_b x* (I_b v_b).  With U = V this is the
    velocity-product bias, and C + C^T = dM/dt holds exactly.
    """
    n = axes.shape[0]
    nb = n + 1
    w = np.empty((nb, 3))
    v = np.empty((nb, 3))
    uw = np.empty((nb, 3))
    uv = np.empty((nb, 3))
    cw = np.zeros((nb, 3))
    cv = np.zeros((nb, 3))
    for k in range(3):
        v[0, k] = V[k]
        w[0, k] = V[3 + k]
        uv[0, k] = U[k]
        uw[0, k] = U[3 + k]
    for i in range(n):
        b = i + 1
        R = Rj[i]
        ax0, ax1, ax2 = axes[i, 0], axes[i, 1], axes[i, 2]
        r0, r1, r2 = joint_p0[i, 0], joint_p0[i, 1], joint_p0[i, 2]
        qd = V[6 + i]
        s0, s1, s2 = ax0 * qd, ax1 * qd, ax2 * qd
        uq = U[6 + i]

        wp = _mtv(R, w[i, 0], w[i, 1], w[i, 2])
        c = _cross(w[i, 0], w[i, 1], w[i, 2], r0, r1, r2)
        vp = _mtv(R, v[i, 0] + c[0], v[i, 1] + c[1], v[i, 2] + c[2])
        w[b, 0], w[b, 1], w[b, 2] = wp[0] + s0, wp[1] + s1, wp[2] + s2
        v[b, 0], v[b, 1], v[b, 2] = vp[0], vp[1], vp[2]

        up = _mtv(R, uw[i, 0], uw[i, 1], uw[i, 2])
        c = _cross(uw[i, 0], uw[i, 1], uw[i, 2], r0, r1, r2)
        upl = _mtv(R, uv[i, 0] + c[0], uv[i, 1] + c[1], uv[i, 2] + c[2])
        uw[b, 0], uw[b, 1], uw[b, 2] = up[0] + ax0 * uq, up[1] + ax1 * uq, up[2] + ax2 * uq
        uv[b, 0], uv[b, 1], uv[b, 2] = upl[0], upl[1], upl[2]

        # c_b = X c_p + u_b x (S qd)
        cp = _mtv(R, cw[i, 0], cw[i, 1], cw[i, 2])
        c = _cross(cw[i, 0], cw[i, 1], cw[i, 2], r0, r1, r2)
        cpl = _mtv(R, cv[i, 0] + c[0], cv[i, 1] + c[1], cv[i, 2] + c[2])
        x1 = _cross(uw[b, 0], uw[b, 1], uw[b, 2], s0, s1, s2)
        x2 = _cross(uv[b, 0], uv[b, 1], uv[b, 2], s0, s1, s2)
        for k in range(3):
            cw[b, k] = cp[k] + x1[k]
            cv[b, k] = cpl[k] + x2[k]

    f_ang = np.empty((nb, 3))
    f_lin = np.empty((nb, 3))
    for b in range(nb):
        m = masses[b]
        c0, c1, c2 = coms[b, 0], coms[b, 1], coms[b, 2]
        Io = inertias_o[b]
        # momentum I v
        Iw = _mv(Io, w[b, 0], w[b, 1], w[b, 2])
        t = _cross(c0, c1, c2, v[b, 0], v[b, 1], v[b, 2])
        h0, h1, h2 = Iw[0] + m * t[0], Iw[1] + m * t[1], Iw[2] + m * t[2]
        t = _cross(w[b, 0], w[b, 1], w[b, 2], c0, c1, c2)
        g0, g1, g2 = m * (v[b, 0] + t[0]), m * (v[b, 1] + t[1]), m * (v[b, 2] + t[2])
        # I c
        Ic = _mv(Io, cw[b, 0], cw[b, 1], cw[b, 2])
        t = _cross(c0, c1, c2, cv[b, 0], cv[b, 1], cv[b, 2])
        t2 = _cross(cw[b, 0], cw[b, 1], cw[b, 2], c0, c1, c2)
        # u x* h = [uw x h_ang + uv x h_lin; uw x h_lin]
        a1 = _cross(uw[b, 0], uw[b, 1], uw[b, 2], h0, h1, h2)
        a2 = _cross(uv[b, 0], uv[b, 1], uv[b, 2], g0, g1, g2)
        a3 = _cross(uw[b, 0], uw[b, 1], uw[b, 2], g0, g1, g2)
        for k in range(3):
            f_ang[b, k] = Ic[k] + m * t[k] + a1[k] + a2[k]
            f_lin[b, k] = m * (cv[b, k] + t2[k]) + a3[k]

    tau = np.empty(n + 6)
    for i in range(n - 1, -1, -1):
        b = i + 1
        R = Rj[i]
        tau[6 + i] = axes[i, 0] * f_ang[b, 0] + axes[i, 1] * f_ang[b, 1] + axes[i, 2] * f_ang[b, 2]
        fl = _mv(R, f_lin[b, 0], f_lin[b, 1], f_lin[b, 2])
        fa = _mv(R, f_ang[b, 0], f_ang[b, 1], f_ang[b, 2])
        rf = _cross(joint_p0[i, 0], joint_p0[i, 1], joint_p0[i, 2], fl[0], fl[1], fl[2])
        for k in range(3):
            f_ang[i, k] += fa[k] + rf[k]
            f_lin[i, k] += fl[k]
    for k in range(3):
        tau[k] = f_lin[0, k]
        tau[3 + k] = f_ang[0, k]
    return tau


@njit(cache=_CACHE)
def coriolis_matrix(Rj, joint_p0, axes, masses, coms, inertias_o, V):
    nv = V.shape[0]
    C = np.empty((nv, nv))
    e = np.zeros(nv)
    for k in range(nv):
        e[k] = 1.0
        C[:, k] = coriolis_rnea(Rj, joint_p0, axes, masses, coms, inertias_o, V, e)
        e[k] = 0.0
    return C


@njit(cache=_CACHE)
def ee_jacobian(Rrel, prel, axes, ee_R, ee_p):
    """Body Jacobian of the end-effector frame and its pose in the base frame."""
    n = axes.shape[0]
    R_be = np.empty((3, 3))
    _mm(Rrel[n], ee_R, R_be)
    pe = _mv(Rrel[n], ee_p[0], ee_p[1], ee_p[2])
    p_be = np.empty(3)
    for k in range(3):
        p_be[k] = prel[n, k] + pe[k]
    J = np.zeros((6, n + 6))
    for k in range(3):
        J[k, k] = 1.0
        J[3 + k, 3 + k] = 1.0
    # w_b x p_be = -hat(p_be) w_b
    J[0, 4] = p_be[2]
    J[0, 5] = -p_be[1]
    J[1, 3] = -p_be[2]
    J[1, 5] = p_be[0]
    J[2, 3] = p_be[1]
    J[2, 4] = -p_be[0]
    for i in range(n):
        z = _mv(Rrel[i + 1], axes[i, 0], axes[i, 1], axes[i, 2])
        lin = _cross(z[0], z[1], z[2], p_be[0] - prel[i + 1, 0],
                     p_be[1] - prel[i + 1, 1], p_be[2] - prel[i + 1, 2])
        for k in range(3):
            J[k, 6 + i] = lin[k]
            J[3 + k, 6 + i] = z[k]
    out = np.empty((6, n + 6))
    for c in range(n + 6):
        t = _mtv(R_be, J[0, c], J[1, c], J[2, c])
        u = _mtv(R_be, J[3, c], J[4, c], J[5, c])
        for k in range(3):
            out[k, c] = t[k]
            out[3 + k, c] = u[k]
    return out, R_be, p_be


@njit(cache=_CACHE)
def com_base(Rrel, prel, axes, masses, coms):
    """Whole-body CoM offset from the base origin and its joint derivative,
    both in base-frame coordinates."""
    n = axes.shape[0]
    mtot = 0.0
    r = np.zeros(3)
    dr = np.zeros((3, n))
    for b in range(n + 1):
        mtot += masses[b]
    for b in range(1, n + 1):
        cc = _mv(Rrel[b], coms[b, 0], coms[b, 1], coms[b, 2])
        c0, c1, c2 = prel[b, 0] + cc[0], prel[b, 1] + cc[1], prel[b, 2] + cc[2]
        r[0] += masses[b] * c0
        r[1] += masses[b] * c1
        r[2] += masses[b] * c2
        for j in range(b):
            z = _mv(Rrel[j + 1], axes[j, 0], axes[j, 1], axes[j, 2])
            d = _cross(z[0], z[1], z[2], c0 - prel[j + 1, 0], c1 - prel[j + 1, 1], c2 - prel[j + 1, 2])
            for k in range(3):
                dr[k, j] += masses[b] * d[k]
    # the base CoM sits at the base origin
    return r / mtot, dr / mtot


@njit(cache=_CACHE)
def dynamics_bundle(joint_R0, joint_p0, axes, masses, coms, inertias_o, ee_R, ee_p, q, V, g_body):
    """Everything forward dynamics needs in one call."""
    Rj, Rrel, prel = chain_kinematics(joint_R0, joint_p0, axes, q)
    M = mass_matrix(Rj, joint_p0, axes, masses, coms, inertias_o)
    h = rnea(Rj, joint_p0, axes, masses, coms, inertias_o, V, np.zeros(V.shape[0]), g_body)
    Je, R_be, p_be = ee_jacobian(Rrel, prel, axes, ee_R, ee_p)
    return M, h, Je, R_be, p_be


@njit(cache=_CACHE)
def decoupling_transform(joint_R0, joint_p0, axes, masses, coms, inertias_o, q, R_b):
    """Rows [J_c; J_w; N] of the decoupling transform and the pieces it needs.

    Returns (T, M, r_bc, J_c, ZMZ, ZMZ^-1) with r_bc in world coordinates.
    """
    n = q.shape[0]
    nv = n + 6
    Rj, Rrel, prel = chain_kinematics(joint_R0, joint_p0, axes, q)
    M = mass_matrix(Rj, joint_p0, axes, masses, coms, inertias_o)
    r_base, dr_base = com_base(Rrel, prel, axes, masses, coms)
    r_bc = R_b @ r_base
    dr_bc = R_b @ dr_base
    J_c = np.zeros((3, nv))
    hr = np.zeros((3, 3))
    hr[0, 1], hr[0, 2] = -r_bc[2], r_bc[1]
    hr[1, 0], hr[1, 2] = r_bc[2], -r_bc[0]
    hr[2, 0], hr[2, 1] = -r_bc[1], r_bc[0]
    J_c[:, 0:3] = R_b
    J_c[:, 3:6] = -(hr @ R_b)
    J_c[:, 6:] = dr_bc
    Z = np.zeros((n, nv))
    Z[:, 0:3] = -(dr_bc.T @ R_b)
    for i in range(n):
        Z[i, 6 + i] = 1.0
    ZM = Z @ M
    ZMZ = ZM @ Z.T
    ZMZ_inv = np.linalg.inv(ZMZ)
    T = np.zeros((nv, nv))
    T[0:3] = J_c
    for a in range(3):
        T[3 + a, 3 + a] = 1.0
    T[6:] = ZMZ_inv @ ZM
    return T, M, r_bc, J_c, ZMZ, ZMZ_inv


@njit(cache=_CACHE)
def plane_contacts(pts, p, v, w, anchors, has_anchor, k_n, d_n, mu, k_t, d_t):
    """Penalty contact of points against z = 0 (normal +z).

    ``anchors`` holds the friction anchor of each point, used where
    ``has_anchor`` is set.  Returns per-point (force, normal force, sticking,
    kept spring displacement, spring energy) and the total force and moment
    about p; points above the plane get zeros.
    """
    m = pts.shape[0]
    F = np.zeros((m, 3))
    N = np.zeros(m)
    stick = np.ones(m, dtype=np.bool_)
    keep = np.zeros((m, 3))
    energy = np.zeros(m)
    f_sum = np.zeros(3)
    m_sum = np.zeros(3)
    for j in range(m):
        z = pts[j, 2]
        if z >= 0.0:
            continue
        a0, a1, a2 = pts[j, 0] - p[0], pts[j, 1] - p[1], pts[j, 2] - p[2]
        c = _cross(w[0], w[1], w[2], a0, a1, a2)
        vx, vy, vz = v[0] + c[0], v[1] + c[1], v[2] + c[2]
        sx, sy = 0.0, 0.0
        if has_anchor[j]:
            sx, sy = pts[j, 0] - anchors[j, 0], pts[j, 1] - anchors[j, 1]
        depth = -z
        n_f = k_n * depth - d_n * vz
        if n_f < 0.0:
            n_f = 0.0
        fx = -k_t * sx - d_t * vx
        fy = -k_t * sy - d_t * vy
        limit = mu * n_f
        nt = np.sqrt(fx * fx + fy * fy)
        kx, ky = sx, sy
        if nt > limit:
            stick[j] = False
            fx *= limit / nt
            fy *= limit / nt
            ns = k_t * np.sqrt(sx * sx + sy * sy)
            if ns > limit:
                kx *= limit / ns
                ky *= limit / ns
        F[j, 0], F[j, 1], F[j, 2] = fx, fy, n_f
        N[j] = n_f
        keep[j, 0], keep[j, 1] = kx, ky
        energy[j] = 0.5 * k_n * depth * depth + 0.5 * k_t * (sx * sx + sy * sy)
        mj = _cross(a0, a1, a2, fx, fy, n_f)
        for k in range(3):
            f_sum[k] += F[j, k]
            m_sum[k] += mj[k]
    return F, N, stick, keep, energy, f_sum, m_sum


@njit(cache=_CACHE)
def rodrigues(w0, w1, w2):
    th = np.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
    W = np.zeros((3, 3))
    W[0, 1], W[0, 2] = -w2, w1
    W[1, 0], W[1, 2] = w2, -w0
    W[2, 0], W[2, 1] = -w1, w0
    if th < 1e-8:
        a, b = 1.0, 0.5
    else:
        a, b = np.sin(th) / th, (1.0 - np.cos(th)) / (th * th)
    return np.eye(3) + a * W + b * (W @ W)


@njit(cache=_CACHE)
def decoupled(joint_R0, joint_p0, axes, masses, coms, inertias_o, q, R_b, V, g_body, h):
    """Inertia, Coriolis and gravity terms in decoupled coordinates.

    The transform rate comes from central differences over +-h along the
    flow of V.  Returns the transform at the current and the two flowed
    configurations together with everything the caller needs for
    conditioning checks.
    """
    n = q.shape[0]
    T, M, r_bc, J_c, ZMZ, ZMZ_inv = decoupling_transform(
        joint_R0, joint_p0, axes, masses, coms, inertias_o, q, R_b)
    T_inv = np.linalg.inv(T)
    Rp = R_b @ rodrigues(h * V[3], h * V[4], h * V[5])
    Rm = R_b @ rodrigues(-h * V[3], -h * V[4], -h * V[5])
    qp = q + h * V[6:]
    qm = q - h * V[6:]
    Tp = decoupling_transform(joint_R0, joint_p0, axes, masses, coms, inertias_o, qp, Rp)[0]
    Tm = decoupling_transform(joint_R0, joint_p0, axes, masses, coms, inertias_o, qm, Rm)[0]
    T_dot = (Tp - Tm) / (2.0 * h)

    xi = T @ V
    xi0 = xi.copy()
    xi0[0:3] = 0.0
    V0 = T_inv @ xi0
    Rj, _, _ = chain_kinematics(joint_R0, joint_p0, axes, q)
    C0 = coriolis_matrix(Rj, joint_p0, axes, masses, coms, inertias_o, V0)
    g = rnea(Rj, joint_p0, axes, masses, coms, inertias_o, np.zeros(n + 6), np.zeros(n + 6), g_body)

    T_invT = np.ascontiguousarray(T_inv.T)
    Lam = T_invT @ M @ T_inv
    Lam = 0.5 * (Lam + Lam.T)
    Gfull = T_invT @ (C0 - M @ T_inv @ T_dot) @ T_inv
    Gam = np.zeros_like(Lam)
    Gam[3:, 3:] = Gfull[3:, 3:]
    zeta = T_invT @ g
    return (T, T_inv, xi, Lam, Gam, zeta, M, r_bc, J_c, ZMZ, ZMZ_inv,
            Rp, Rm, qp, qm, Tp, Tm)


@njit(cache=_CACHE)
def rigid_rates(M, bias, Je, R_be, R_b, V, tau, f_world):
    """(pdot, Rdot, qdot, Vdot) of one AM under tau and a world force at {e}."""
    rhs = tau - bias
    if f_world[0] != 0.0 or f_world[1] != 0.0 or f_world[2] != 0.0:
        R_e = R_b @ R_be
        f_e = R_e.T @ f_world
        rhs = rhs + Je[0:3].T @ f_e
    Vd = np.linalg.solve(M, rhs)
    W = np.zeros((3, 3))
    W[0, 1], W[0, 2] = -V[5], V[4]
    W[1, 0], W[1, 2] = V[5], -V[3]
    W[2, 0], W[2, 1] = -V[4], V[3]
    return R_b @ V[0:3], R_b @ W, V[6:].copy(), Vd


@njit(cache=_CACHE)
def planar_task(joint_R0, joint_p0, axes, ee_R, ee_p, q, R_b, p_b, Rt):
    """Task value (forward, height, pitch) of {e} in frame Rt and its V-Jacobian."""
    _, Rrel, prel = chain_kinematics(joint_R0, joint_p0, axes, q)
    J_e, R_be, p_be = ee_jacobian(Rrel, prel, axes, ee_R, ee_p)
    R = Rt.T @ (R_b @ R_be)
    p = Rt.T @ (p_b + R_b @ p_be)
    Jp = R @ J_e[0:3]
    a, b = -R[2, 0], R[0, 0]
    d = a * a + b * b
    g1 = (b * R[2, 2] + a * R[0, 2]) / d
    g2 = (-b * R[2, 1] - a * R[0, 1]) / d
    J = np.empty((3, J_e.shape[1]))
    J[0] = Jp[0]
    J[1] = Jp[2]
    J[2] = g1 * J_e[4] + g2 * J_e[5]
    y = np.array([p[0], p[2], np.arctan2(a, b)])
    return y, J


@njit(cache=_CACHE)
def task_terms(joint_R0, joint_p0, axes, ee_R, ee_p, Rt, h,
               q, R_b, p_b, T_inv, qp, Rp, pp, Tp, qm, Rm, pm, Tm):
    """(y, J, Jdot) with J = J_task T^-1 and Jdot by central differences."""
    y, Jt = planar_task(joint_R0, joint_p0, axes, ee_R, ee_p, q, R_b, p_b, Rt)
    _, Jtp = planar_task(joint_R0, joint_p0, axes, ee_R, ee_p, qp, Rp, pp, Rt)
    _, Jtm = planar_task(joint_R0, joint_p0, axes, ee_R, ee_p, qm, Rm, pm, Rt)
    J = Jt @ T_inv
    Jdot = (Jtp @ np.linalg.inv(Tp) - Jtm @ np.linalg.inv(Tm)) / (2.0 * h)
    return y, J, Jdot
