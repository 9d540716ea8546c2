"""Scenario geometry and phase-wise setpoint generation.

AMs start on a ring around the object with their arms pointing at it.  Each
phase moves the desired base position and the desired task value from their
values at the phase start to the phase targets along a degree-7 blend.  Rate,
acceleration and jerk vanish at the phase boundaries: the desired attitude
follows the jerk of the CoM setpoint and is differentiated twice across
ticks, so a jerk step would become an impulsive attitude acceleration.
"""

from dataclasses import dataclass, field

import numpy as np

from . import decoupling as dc
from . import dynamics as dyn
from . import world as W
from .control import Setpoint
from .so3 import rot_z


def smooth_blend(s):
    """Blend, first and second derivative of 35s^4 - 84s^5 + 70s^6 - 20s^7 on [0, 1]."""
    s = min(max(s, 0.0), 1.0)
    b = s ** 4 * (35 - 84 * s + 70 * s * s - 20 * s ** 3)
    db = 140 * s ** 3 * (1 - s) ** 3
    ddb = 420 * s * s * (1 - s) ** 2 * (1 - 2 * s)
    return b, db, ddb


@dataclass
class Phase:
    name: str
    t_start: float
    t_end: float
    base_targets: np.ndarray     # (n_ams, 3) desired base positions at t_end
    task_targets: np.ndarray     # (n_ams, n) desired task values at t_end
    free_flight: bool = False

    @property
    def duration(self):
        return self.t_end - self.t_start


@dataclass
class Scenario:
    name: str
    model: dyn.MultibodyModel
    q_nominal: np.ndarray
    yaws: np.ndarray
    initial_states: list
    phases: list
    obj: W.ObjectState = None
    contact: W.ContactParams = field(default_factory=W.ContactParams)
    lift_target: float = None

    def __post_init__(self):
        if not self.phases or self.phases[0].t_start != 0.0:
            raise ValueError("phases must start at t = 0")
        for a, b in zip(self.phases, self.phases[1:]):
            if abs(a.t_end - b.t_start) > 1e-12:
                raise ValueError(f"phases {a.name!r} and {b.name!r} are not contiguous")
        for p in self.phases:
            if p.t_end <= p.t_start:
                raise ValueError(f"phase {p.name!r} has non-positive duration")
        n_ams = len(self.initial_states)
        # CoM offset of the nominal arm, in each AM's heading frame
        st0 = dyn.AmState(np.zeros(3), np.eye(3), self.q_nominal, np.zeros(self.model.nv))
        self._rbc = dyn.com_quantities(self.model, st0)[1]
        base0 = np.array([s.p_b for s in self.initial_states])
        task0 = np.array([self.nominal_task(i, base0[i]) for i in range(n_ams)])
        self._starts = []
        for p in self.phases:
            self._starts.append((base0, task0))
            base0, task0 = p.base_targets, p.task_targets

    @property
    def n_ams(self):
        return len(self.initial_states)

    @property
    def duration(self):
        return self.phases[-1].t_end

    def nominal_task(self, i, base_pos):
        return nominal_task(self.model, self.q_nominal, self.yaws[i], base_pos)

    def com_offset(self, i):
        return rot_z(self.yaws[i]) @ self._rbc

    def phase_at(self, t):
        for k, p in enumerate(self.phases):
            if t < p.t_end or k == len(self.phases) - 1:
                return k, p
        raise AssertionError

    def setpoint(self, i, t):
        k, p = self.phase_at(t)
        b0, y0 = self._starts[k]
        b, db, ddb = smooth_blend((t - p.t_start) / p.duration)
        T = p.duration
        dbase = p.base_targets[i] - b0[i]
        dtask = p.task_targets[i] - y0[i]
        off = self.com_offset(i)
        return Setpoint(
            r_c_d=b0[i] + b * dbase + off, rd_c_d=db / T * dbase, rdd_c_d=ddb / T**2 * dbase,
            y_d=y0[i] + b * dtask, yd_d=db / T * dtask, ydd_d=ddb / T**2 * dtask,
        )


def nominal_task(model, q_nominal, yaw, base_pos):
    """Task value with the base level at ``base_pos``, heading ``yaw`` and the nominal arm."""
    st = dyn.AmState(np.asarray(base_pos, dtype=float), rot_z(yaw), q_nominal, np.zeros(model.nv))
    return dc.task_value(model, st, yaw)


# -- presets -----------------------------------------------------------------

def ring_headings(n_ams):
    """Ring angles of the AMs and the headings that face the centre."""
    phi = 2 * np.pi * np.arange(n_ams) / n_ams
    return phi, phi + np.pi


def _object_shape(cfg):
    if cfg.shape == "box":
        return W.Box(tuple(cfg.half_extents))
    if cfg.shape == "cylinder":
        return W.Cylinder(cfg.radius, cfg.half_height)
    raise ValueError(f"unknown object shape {cfg.shape!r}")


def build_scenario(cfg, model):
    """Scenario from a RunConfig (see :mod:`aerograsp.config`)."""
    sc = cfg.scenario
    q_nom = dyn.nominal_joint_angles(model, reach=tuple(sc.reach), pitch=0.0)
    st0 = dyn.AmState(np.zeros(3), np.eye(3), q_nom, np.zeros(model.nv))
    _, p_e0 = dyn.ee_pose(model, st0)   # tip relative to the base, heading frame
    phi, yaws = ring_headings(sc.n_ams)
    rng = np.random.default_rng(cfg.seed)

    shape = _object_shape(cfg.object)
    contact_z = shape.bottom + sc.contact_height
    if sc.with_object:
        obj = W.resting_object(shape, cfg.object.mass)
        contact = W.ContactParams(**vars(cfg.contact))
    else:
        obj, contact = None, W.ContactParams()

    def base_for_tip(i, radial, z):
        d = np.array([np.cos(phi[i]), np.sin(phi[i]), 0.0])
        tip = radial * d + z * np.array([0, 0, 1.0])
        return tip - rot_z(yaws[i]) @ p_e0

    states, pre = [], []
    for i in range(sc.n_ams):
        surf = np.linalg.norm(shape.surface_point(phi[i])[:2])
        pre.append(base_for_tip(i, surf + sc.pregrasp_gap, contact_z))
        start = np.array([sc.ring_radius * np.cos(phi[i]), sc.ring_radius * np.sin(phi[i]),
                          sc.start_height])
        start = start + sc.initial_jitter * rng.standard_normal(3)
        states.append(dyn.AmState(start, rot_z(yaws[i]), q_nom.copy(), np.zeros(model.nv)))
    pre = np.array(pre)

    task_pre = np.array([nominal_task(model, q_nom, yaws[i], pre[i]) for i in range(sc.n_ams)])
    phases = [Phase("approach", 0.0, sc.t_approach, pre, task_pre, free_flight=True)]
    t = sc.t_approach
    if sc.with_object:
        squeeze = task_pre.copy()
        squeeze[:, 0] += sc.pregrasp_gap + sc.grasp_depth
        lifted = squeeze.copy()
        lifted[:, 1] += sc.lift_height
        phases += [
            Phase("grasp", t, t + sc.t_grasp, pre, squeeze),
            Phase("lift", t + sc.t_grasp, t + sc.t_grasp + sc.t_lift, pre, lifted),
            Phase("hover", t + sc.t_grasp + sc.t_lift,
                  t + sc.t_grasp + sc.t_lift + sc.t_hover, pre, lifted),
        ]
        lift_target = obj.p[2] + sc.lift_height
    else:
        phases.append(Phase("hover", t, t + sc.t_hover, pre, task_pre, free_flight=True))
        lift_target = None
    return Scenario(sc.name, model, q_nom, yaws, states, phases, obj=obj, contact=contact,
                    lift_target=lift_target)


def model_from_config(cfg):
    mc = cfg.model
    return dyn.default_model(mc.n_links, mc.link_length, mc.link_mass, mc.base_mass,
                             tuple(mc.base_inertia), tuple(mc.shoulder), mc.gravity)


def setup(cfg):
    """(scenario, gains) for a RunConfig."""
    from .control import default_gains

    model = model_from_config(cfg)
    scn = build_scenario(cfg, model)
    g = cfg.gains
    gains = default_gains(model, scn.q_nominal, K_t=g.K_t, D_t=g.D_t, k_R=g.k_R, k_w=g.k_w,
                          K_y=tuple(g.K_y), D_y=tuple(g.D_y),
                          compensate_forces=g.compensate_forces)
    return scn, gains
