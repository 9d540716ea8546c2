"""Grasped object, table support and penalty contact with Coulomb friction.

Contacts are point contacts: each end-effector tip against the object's
surface, and the object's support points against the plane z = 0.  Normal
forces come from a spring-damper on the penetration depth; friction from a
tangential anchor spring projected onto the Coulomb cone.  Anchors are held
fixed while a step is integrated and updated afterwards.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels as K
from .so3 import E3, cross, hat, is_rotation, project_to_so3


@dataclass(frozen=True)
class Box:
    half_extents: tuple

    def inertia(self, mass):
        a, b, c = 2 * np.asarray(self.half_extents, dtype=float)
        return mass / 12.0 * np.diag([b * b + c * c, a * a + c * c, a * a + b * b])

    def penetration(self, p):
        """(depth, outward normal) of a body-frame point, or None when outside."""
        h = np.asarray(self.half_extents, dtype=float)
        gaps = h - np.abs(p)
        if np.any(gaps <= 0):
            return None
        k = int(np.argmin(gaps))
        nrm = np.zeros(3)
        nrm[k] = 1.0 if p[k] >= 0 else -1.0
        return gaps[k], nrm

    def support_points(self):
        return self._corners

    @cached_property
    def _corners(self):
        h = np.asarray(self.half_extents, dtype=float)
        pts = np.array([[sx * h[0], sy * h[1], sz * h[2]]
                        for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
        pts.flags.writeable = False
        return pts

    @property
    def bottom(self):
        return self.half_extents[2]

    def surface_point(self, heading, height=0.0):
        """Outermost surface point along a horizontal heading, body frame."""
        d = np.array([np.cos(heading), np.sin(heading), 0.0])
        h = np.asarray(self.half_extents, dtype=float)
        s = min(h[0] / abs(d[0]) if abs(d[0]) > 1e-12 else np.inf,
                h[1] / abs(d[1]) if abs(d[1]) > 1e-12 else np.inf)
        return s * d + height * E3


@dataclass(frozen=True)
class Cylinder:
    """Upright cylinder with its axis along body z."""

    radius: float
    half_height: float
    rim_points: int = 8

    def inertia(self, mass):
        r, l = self.radius, 2 * self.half_height
        ixx = mass * (3 * r * r + l * l) / 12.0
        return np.diag([ixx, ixx, 0.5 * mass * r * r])

    def penetration(self, p):
        rho = np.hypot(p[0], p[1])
        g_side = self.radius - rho
        g_cap = self.half_height - abs(p[2])
        if g_side <= 0 or g_cap <= 0:
            return None
        if g_side < g_cap and rho > 1e-12:
            return g_side, np.array([p[0] / rho, p[1] / rho, 0.0])
        return g_cap, np.array([0.0, 0.0, 1.0 if p[2] >= 0 else -1.0])

    def support_points(self):
        return self._rims

    @cached_property
    def _rims(self):
        a = np.linspace(0, 2 * np.pi, self.rim_points, endpoint=False)
        pts = []
        for z in (-self.half_height, self.half_height):
            pts += [[self.radius * np.cos(t), self.radius * np.sin(t), z] for t in a]
        pts = np.array(pts)
        pts.flags.writeable = False
        return pts

    @property
    def bottom(self):
        return self.half_height

    def surface_point(self, heading, height=0.0):
        return np.array([self.radius * np.cos(heading), self.radius * np.sin(heading), height])


@dataclass
class ObjectState:
    p: np.ndarray
    R: np.ndarray
    v: np.ndarray
    w: np.ndarray
    mass: float
    shape: object
    inertia: np.ndarray = None

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        if not self.mass > 0:
            raise ValueError("object mass must be positive")
        if self.inertia is None:
            self.inertia = self.shape.inertia(self.mass)
        self.inertia = np.asarray(self.inertia, dtype=float)
        if np.linalg.eigvalsh(self.inertia).min() <= 0:
            raise ValueError("object inertia must be positive definite")
        if not is_rotation(self.R):
            raise ValueError("object rotation is not orthonormal")

    def copy(self):
        return ObjectState(self.p.copy(), self.R.copy(), self.v.copy(), self.w.copy(),
                           self.mass, self.shape, self.inertia)

    def point_velocity(self, x):
        return self.v + cross(self.w, x - self.p)

    def kinetic_energy(self):
        Iw = self.R @ self.inertia @ self.R.T
        return 0.5 * self.mass * self.v @ self.v + 0.5 * self.w @ Iw @ self.w

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in (self.p, self.R, self.v, self.w))


def resting_object(shape, mass, xy=(0.0, 0.0), inertia=None):
    p = np.array([xy[0], xy[1], shape.bottom])
    return ObjectState(p, np.eye(3), np.zeros(3), np.zeros(3), mass, shape, inertia)


@dataclass(frozen=True)
class ContactParams:
    k_n: float = 5000.0
    d_n: float = 50.0
    mu: float = 0.8
    k_t: float = 2000.0
    d_t: float = 2.0

    def __post_init__(self):
        for name in ("k_n", "d_n", "mu", "k_t", "d_t"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class ContactRecord:
    key: tuple
    point: np.ndarray
    depth: float
    normal: np.ndarray
    normal_force: float
    tangential_force: np.ndarray
    sticking: bool
    spring_energy: float
    # tangential spring displacement to keep after this evaluation
    slip_offset: np.ndarray = field(default=None, repr=False)


def penalty_force(depth, depth_rate, normal, s, v_rel, params):
    """Force on the penetrating point.

    ``s`` is the displacement of the point from its friction anchor and
    ``v_rel`` its velocity relative to the other surface.  Returns
    (normal force, tangential force, sticking, spring displacement kept).
    """
    N = max(0.0, params.k_n * depth + params.d_n * depth_rate)
    s_t = s - (s @ normal) * normal
    v_t = v_rel - (v_rel @ normal) * normal
    F_t = -params.k_t * s_t - params.d_t * v_t
    limit = params.mu * N
    nt = np.linalg.norm(F_t)
    if nt <= limit:
        return N, F_t, True, s_t
    F_t = F_t * (limit / nt)
    ns = np.linalg.norm(s_t)
    keep = s_t if params.k_t * ns <= limit else s_t * (limit / (params.k_t * ns))
    return N, F_t, False, keep


def _spring_energy(depth, s_t, params):
    return 0.5 * params.k_n * depth * depth + 0.5 * params.k_t * s_t @ s_t


class ContactSet:
    """Friction anchors of the active contacts.

    End-effector anchors are stored in the object frame, table anchors in
    the world frame.
    """

    def __init__(self):
        self.anchors = {}

    def copy(self):
        c = ContactSet()
        c.anchors = dict(self.anchors)
        return c


def contact_forces(obj, tips, tip_vels, params, anchors, table=True, table_params=None,
                   with_records=True):
    """Contact wrenches for a snapshot.

    ``tips``/``tip_vels`` are the world positions and velocities of the
    end-effector origins.  Returns (per-tip world forces, object force,
    object moment about its CoM, records).  Anchors are read, not changed.
    ``with_records=False`` skips building the records (returns an empty list).
    """
    table_params = table_params or params
    tip_forces = [np.zeros(3) for _ in tips]
    f_obj = np.zeros(3)
    m_obj = np.zeros(3)
    records = []
    for i, (x, xd) in enumerate(zip(tips, tip_vels)):
        local = obj.R.T @ (x - obj.p)
        hit = obj.shape.penetration(local)
        if hit is None:
            continue
        depth, n_loc = hit
        n = obj.R @ n_loc
        v_rel = xd - obj.point_velocity(x)
        key = ("am", i)
        a = anchors.anchors.get(key)
        s = np.zeros(3) if a is None else x - (obj.p + obj.R @ a)
        N, F_t, stick, keep = penalty_force(depth, -(v_rel @ n), n, s, v_rel, params)
        F = N * n + F_t
        tip_forces[i] = F
        f_obj -= F
        m_obj -= cross(x - obj.p, F)
        if with_records:
            records.append(ContactRecord(key, x, depth, n, N, F_t, stick,
                                         _spring_energy(depth, s - (s @ n) * n, params), keep))
    if table:
        f_tab, m_tab, recs = _table_contacts(obj, table_params, anchors, with_records)
        f_obj += f_tab
        m_obj += m_tab
        records += recs
    return tip_forces, f_obj, m_obj, records


def _table_contacts(obj, params, anchors, with_records=True):
    """Support points against the plane z = 0, same law as :func:`penalty_force`."""
    pts = obj.p + obj.shape.support_points() @ obj.R.T
    below = np.flatnonzero(pts[:, 2] < 0)
    if below.size == 0:
        return np.zeros(3), np.zeros(3), []
    m = pts.shape[0]
    anc = np.zeros((m, 3))
    has = np.zeros(m, dtype=bool)
    table_anchors = anchors.anchors
    for j in below:
        a = table_anchors.get(("table", int(j)))
        if a is not None:
            anc[j] = a
            has[j] = True
    F, N, stick, keep, energy, f, mom = K.plane_contacts(
        pts, obj.p, obj.v, obj.w, anc, has,
        params.k_n, params.d_n, params.mu, params.k_t, params.d_t)
    recs = []
    if with_records:
        for j in below:
            j = int(j)
            F_t = F[j].copy()
            F_t[2] = 0.0
            recs.append(ContactRecord(("table", j), pts[j], -pts[j, 2], E3.copy(), N[j], F_t,
                                      bool(stick[j]), energy[j], keep[j]))
    return f, mom, recs


def update_anchors(obj, records, anchors):
    """New anchor set after a step: create, keep, reset on slip, drop."""
    out = ContactSet()
    for r in records:
        keep = r.slip_offset if r.key in anchors.anchors else np.zeros(3)
        x_anchor = r.point - keep
        if r.key[0] == "am":
            out.anchors[r.key] = obj.R.T @ (x_anchor - obj.p)
        else:
            out.anchors[r.key] = x_anchor
    return out


def ee_wrench_body(R_e, f_world):
    """Body wrench of {e} for a pure force applied at its origin."""
    return np.concatenate([R_e.T @ f_world, np.zeros(3)])


def object_rates(obj, force, moment, gravity):
    """(pdot, Rdot, vdot, wdot) of the Newton-Euler equations in world frame."""
    R = obj.R
    wb = R.T @ obj.w
    Ib = obj.inertia
    vd = force / obj.mass - gravity * E3
    wd = R @ np.linalg.solve(Ib, R.T @ moment - cross(wb, Ib @ wb))
    return obj.v, hat(obj.w) @ obj.R, vd, wd


def object_step(obj, force, moment, gravity, dt):
    """One RK4 step of the free object under a constant wrench.

    The coupled simulator integrates the object together with the AMs; this
    function is the stand-alone form used when nothing touches the object.
    """
    def f(o):
        return object_rates(o, force, moment, gravity)

    k1 = f(obj)
    k2 = f(_raw(obj, k1, dt / 2))
    k3 = f(_raw(obj, k2, dt / 2))
    k4 = f(_raw(obj, k3, dt))
    ks = [sum(w * k[i] for w, k in zip((1, 2, 2, 1), (k1, k2, k3, k4))) / 6 for i in range(4)]
    out = _raw(obj, ks, dt)
    out.R = project_to_so3(out.R)
    return out


def _raw(o, k, h):
    """Euler-increment an object without re-validating the rotation."""
    n = object.__new__(ObjectState)
    n.p = o.p + h * k[0]
    n.R = o.R + h * k[1]
    n.v = o.v + h * k[2]
    n.w = o.w + h * k[3]
    n.mass, n.shape, n.inertia = o.mass, o.shape, o.inertia
    return n
