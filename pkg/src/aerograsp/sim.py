"""Fixed-step simulation of several AMs and one object.

All bodies are integrated together by a classical 4th-order Runge-Kutta
step.  Actuator commands are held over the step; contact forces are
re-evaluated at every stage with the friction anchors held fixed.
Rotations are integrated in the matrix embedding and projected back onto
SO(3) after each step.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import _stepper as ST
from . import world as W
from .dynamics import AmState
from .so3 import project_to_so3

log = logging.getLogger(__name__)


class SimulationDiverged(RuntimeError):
    def __init__(self, msg, t=None, last_good=None):
        super().__init__(msg)
        self.t = t
        self.last_good = last_good


@dataclass
class _Am:
    p: np.ndarray
    R: np.ndarray
    q: np.ndarray
    V: np.ndarray


def _am_from_state(s):
    return _Am(s.p_b, s.R_b, s.q, s.V)


def _am_add(a, k, h):
    return _Am(a.p + h * k[0], a.R + h * k[1], a.q + h * k[2], a.V + h * k[3])


class Simulation:
    """Owns the AM states, the object and the contact anchors."""

    def __init__(self, model, states, obj=None, contact=None, dt=1e-3, table=True):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.model = model
        self.states = [s.copy() for s in states]
        self.obj = obj.copy() if obj is not None else None
        self.contact = contact or W.ContactParams()
        self.dt = dt
        self.table = table
        self.anchors = W.ContactSet()
        self.t = 0.0
        self.records = []
        self._sensed = None

    @property
    def gravity(self):
        return self.model.gravity

    # -- rates ---------------------------------------------------------------

    def _contacts(self, ams, obj, bundles, with_records=True):
        """Per-AM world contact forces, end-effector rotations and records."""
        Rs, tips, tip_vels = [], [], []
        for a, (_, _, Je, R_be, p_be) in zip(ams, bundles):
            R_e = a.R @ R_be
            Rs.append(R_e)
            tips.append(a.p + a.R @ p_be)
            tip_vels.append(R_e @ (Je[:3] @ a.V))
        if obj is None:
            return [np.zeros(3)] * len(ams), Rs, [], np.zeros(3), np.zeros(3)
        forces, f_obj, m_obj, records = W.contact_forces(
            obj, tips, tip_vels, self.contact, self.anchors, table=self.table,
            with_records=with_records)
        return forces, Rs, records, f_obj, m_obj

    def _rates(self, ams, obj, taus):
        model = self.model
        bundles = [model.bundle(a.q, a.V, a.R) for a in ams]
        forces, Rs, _, f_obj, m_obj = self._contacts(ams, obj, bundles, with_records=False)
        out = [K.rigid_rates(M, h, Je, R_be, a.R, a.V, tau, f)
               for a, tau, (M, h, Je, R_be, _), f in zip(ams, taus, bundles, forces)]
        obj_rates = W.object_rates(obj, f_obj, m_obj, self.gravity) if obj is not None else None
        return out, obj_rates

    def _snapshot_reference(self):
        ams = [_am_from_state(s) for s in self.states]
        bundles = [self.model.bundle(a.q, a.V, a.R) for a in ams]
        return self._contacts(ams, self.obj, bundles)[:3]

    def _snapshot(self):
        """(world tip forces, end-effector rotations, contact records)."""
        model_args, ams, obj_args, contact_args = self._packed()
        obj_args = obj_args[:5] + obj_args[8:]
        (tipF, R_e, tips, hit, depth, nrm, N, Ft, stick, keep, energy,
         pts, t_hit, t_N, t_Ft, t_stick, t_keep, t_energy) = ST.snapshot(
            *model_args, *ams, *obj_args, *contact_args)
        records = []
        for i in np.flatnonzero(hit):
            i = int(i)
            records.append(W.ContactRecord(("am", i), tips[i], float(depth[i]), nrm[i],
                                           float(N[i]), Ft[i], bool(stick[i]),
                                           float(energy[i]), keep[i]))
        for j in np.flatnonzero(t_hit):
            j = int(j)
            records.append(W.ContactRecord(("table", j), pts[j], float(-pts[j, 2]),
                                           np.array([0.0, 0.0, 1.0]), float(t_N[j]), t_Ft[j],
                                           bool(t_stick[j]), float(t_energy[j]), t_keep[j]))
        return list(tipF), list(R_e), records

    # -- public API ------------------------------------------------------------

    def sense(self):
        """Measured end-effector body wrenches, world tip forces and contact records."""
        if self._sensed is None:
            self._sensed = self._snapshot()
        forces, Rs, records = self._sensed
        wrenches = [W.ee_wrench_body(R, f) for R, f in zip(Rs, forces)]
        return wrenches, forces, records

    def _pack_anchors(self):
        n_am = len(self.states)
        am_anchor = np.zeros((n_am, 3))
        am_has = np.zeros(n_am, dtype=np.bool_)
        m = len(self.obj.shape.support_points()) if self.obj is not None else 0
        tab_anchor = np.zeros((m, 3))
        tab_has = np.zeros(m, dtype=np.bool_)
        for (kind, i), a in self.anchors.anchors.items():
            if kind == "am":
                am_anchor[i], am_has[i] = a, True
            else:
                tab_anchor[i], tab_has[i] = a, True
        return am_anchor, am_has, tab_anchor, tab_has

    def _packed(self):
        """(model arrays, AM arrays, object arrays, contact arrays) for the kernels."""
        m, o, c = self.model, self.obj, self.contact
        model_args = (m._joint_R0, m._joint_p0, m._axes, m._masses, m._coms,
                      m._inertias_o, m.ee_rot, m.ee_pos, float(m.gravity))
        n = len(self.states)
        P = np.array([s.p_b for s in self.states])
        R = np.array([s.R_b for s in self.states])
        Q = np.array([s.q for s in self.states]).reshape(n, -1)
        V = np.array([s.V for s in self.states])
        if o is None:
            z3, z33 = np.zeros(3), np.eye(3)
            obj_args = (False, z3, z33, z3, z3, 1.0, z33, z33, ST.SHAPE_NONE, z3,
                        np.zeros((0, 3)))
        else:
            if isinstance(o.shape, W.Box):
                code, dims = ST.SHAPE_BOX, np.asarray(o.shape.half_extents, dtype=float)
            else:
                code, dims = ST.SHAPE_CYLINDER, np.array([o.shape.radius, o.shape.half_height, 0.0])
            obj_args = (True, o.p, o.R, o.v, o.w, float(o.mass), o.inertia,
                        self._inertia_inv(o.inertia), code, dims,
                        np.ascontiguousarray(o.shape.support_points()))
        prm = np.array([c.k_n, c.d_n, c.mu, c.k_t, c.d_t])
        contact_args = (prm, prm, bool(self.table)) + self._pack_anchors()
        return model_args, (P, R, Q, V), obj_args, contact_args

    def _inertia_inv(self, inertia):
        key = inertia.tobytes()
        if getattr(self, "_Ib_key", None) != key:
            self._Ib_key, self._Ib_inv = key, np.linalg.inv(inertia)
        return self._Ib_inv

    def _step_compiled(self, taus):
        model_args, (P, R, Q, V), obj_args, contact_args = self._packed()
        T = np.array(taus, dtype=float).reshape(V.shape)
        return ST.rk4_step(*model_args, self.dt, P, R, Q, V, T, *obj_args, *contact_args)

    def advance(self, taus):
        """One RK4 step under zero-order-hold actuator commands."""
        try:
            ok, P, R, Q, V, op, oR, ov, ow = self._step_compiled(taus)
        except np.linalg.LinAlgError:
            # a non-finite intermediate stage reaches a compiled solve
            ok = False
        if not ok:
            raise SimulationDiverged(f"non-finite state at t={self.t + self.dt:.6f}", self.t,
                                     (self.states, self.obj))
        self.states = [AmState(P[i], R[i], Q[i], V[i]) for i in range(len(self.states))]
        if self.obj is not None:
            o = W._raw(self.obj, (0.0, 0.0, 0.0, 0.0), 0.0)
            o.p, o.R, o.v, o.w = op, oR, ov, ow
            self.obj = o
        return self._finish_step()

    def advance_reference(self, taus):
        """Uncompiled RK4 step, kept as the reference for :meth:`advance`."""
        dt = self.dt
        taus = [np.asarray(t, dtype=float) for t in taus]
        a0 = [_am_from_state(s) for s in self.states]
        o0 = self.obj
        ks, ko = [], []
        a, o = a0, o0
        for c in (0.5, 0.5, 1.0, None):
            k, kobj = self._rates(a, o, taus)
            ks.append(k)
            ko.append(kobj)
            if c is None:
                break
            a = [_am_add(x, kk, c * dt) for x, kk in zip(a0, k)]
            o = W._raw(o0, kobj, c * dt) if o0 is not None else None
        wts = (1.0, 2.0, 2.0, 1.0)
        raw = []
        for i, x in enumerate(a0):
            inc = [sum(w * ks[s][i][j] for s, w in enumerate(wts)) / 6.0 for j in range(4)]
            raw.append(_am_add(x, inc, dt))
        o = None
        if o0 is not None:
            inc = [sum(w * ko[s][j] for s, w in enumerate(wts)) / 6.0 for j in range(4)]
            o = W._raw(o0, inc, dt)
        arrays = [v for y in raw for v in (y.p, y.R, y.q, y.V)]
        if o is not None:
            arrays += [o.p, o.R, o.v, o.w]
        if not all(np.all(np.isfinite(v)) for v in arrays):
            raise SimulationDiverged(f"non-finite state at t={self.t + dt:.6f}", self.t,
                                     (self.states, self.obj))
        self.states = [AmState(y.p, project_to_so3(y.R), y.q, y.V) for y in raw]
        self.obj = None
        if o is not None:
            o.R = project_to_so3(o.R)
            self.obj = o
        return self._finish_step()

    def _finish_step(self):
        self.t += self.dt
        self._sensed = None
        if self.obj is not None:
            snap = self._snapshot()
            records = snap[2]
            self.anchors = W.update_anchors(self.obj, records, self.anchors)
            self.records = records
            # sticking contacts keep their spring, so the snapshot is still
            # valid under the new anchors; a slip shortens the spring
            if all(r.sticking for r in records):
                self._sensed = snap
        return self.states

    def _contact_snapshot(self):
        return self._snapshot()[2]

    def contact_spring_energy(self):
        if self.obj is None:
            return 0.0
        return sum(r.spring_energy for r in self._contact_snapshot())


# -- scenario execution and monitors -------------------------------------------

@dataclass
class MonitorRecord:
    t: float
    phase: str
    S_am: np.ndarray          # per-AM storage at t
    S_obj: float
    S_tot: float
    residual: np.ndarray      # per-AM passivity residual over [t - dt, t]
    power: np.ndarray         # per-AM mean port power over [t - dt, t]
    ybar_speed: float         # norm of all AMs' task-error rates stacked
    err_rc: np.ndarray
    err_R: np.ndarray
    err_y: np.ndarray


def passivity_residual(S_prev, S_now, dt, lam_min, yd_prev, yd_now, Fy_prev, Fy_now):
    """Discrete form of dS/dt + lam_min |ydot|^2 - ydot^T F_y.

    The storage rate is a forward difference; the power terms are averaged
    over the interval so both sides are second-order accurate at its middle.
    Returns (residual, mean port power).
    """
    diss = 0.5 * lam_min * (yd_prev @ yd_prev + yd_now @ yd_now)
    power = 0.5 * (yd_prev @ Fy_prev + yd_now @ Fy_now)
    return (S_now - S_prev) / dt + diss - power, power


class RunResult:
    def __init__(self, scenario, cfg):
        self.scenario = scenario
        self.cfg = cfg
        self.monitors = []
        self.events = []
        self.sim = None
        self.diverged = None


def run_scenario(scenario, cfg, gains, sink=None, duration=None):
    """Run a scenario; ``sink(k, t, outputs, sim, monitor)`` sees every tick."""
    from .control import AmController

    dt = cfg.dt
    model = scenario.model
    sim = Simulation(model, scenario.initial_states, scenario.obj, scenario.contact, dt)
    ctrls = [AmController(model, gains.with_heading(np.array([np.cos(y), np.sin(y), 0.0])), dt,
                          task_yaw=y, force_filter=cfg.gains.force_filter)
             for y in scenario.yaws]
    lam = gains.lambda_min_Dy
    if duration is None:
        duration = cfg.duration
    T_end = scenario.duration if duration is None else duration
    n_steps = int(round(T_end / dt))
    res = RunResult(scenario, cfg)
    res.sim = sim
    prev = None
    for k in range(n_steps + 1):
        t = k * dt
        wrenches, forces, _ = sim.sense()
        outs = [c.step(scenario.setpoint(i, t), s, F)
                for i, (c, s, F) in enumerate(zip(ctrls, sim.states, wrenches))]
        for i, o in enumerate(outs):
            o.f_world = forces[i]
            o.F_e = wrenches[i]
            if o.event:
                res.events.append((t, i, o.event))
        S = np.array([o.storage for o in outs])
        S_obj = sim.obj.kinetic_energy() if sim.obj is not None else 0.0
        if prev is None:
            resid = np.zeros(len(outs))
            power = np.zeros(len(outs))
        else:
            rp = [passivity_residual(po.storage, o.storage, dt, lam, po.y_dot_err, o.y_dot_err,
                                     po.F_y, o.F_y) for po, o in zip(prev, outs)]
            resid = np.array([r[0] for r in rp])
            power = np.array([r[1] for r in rp])
        mon = MonitorRecord(
            t=t, phase=scenario.phase_at(t)[1].name, S_am=S, S_obj=S_obj,
            S_tot=float(S.sum() + S_obj), residual=resid, power=power,
            ybar_speed=float(np.sqrt(sum(o.y_dot_err @ o.y_dot_err for o in outs))),
            err_rc=np.array([np.linalg.norm(o.r_c_err) for o in outs]),
            err_R=np.array([np.linalg.norm(o.e_R) for o in outs]),
            err_y=np.array([np.linalg.norm(o.y_err) for o in outs]),
        )
        res.monitors.append(mon)
        if sink is not None:
            sink(k, t, outs, sim, mon)
        if k == n_steps:
            break
        try:
            sim.advance([o.tau for o in outs])
        except SimulationDiverged as exc:
            res.diverged = exc
            log.error("%s", exc)
            break
        prev = outs
    return res


@dataclass
class RunReport:
    result: RunResult
    recorder: object
    checks: list
    summary: dict

    @property
    def ok(self):
        return self.result.diverged is None and self.summary["completed"] and self.summary["checks_passed"]


def run_config(cfg, out_dir=None, progress=None):
    """Build, run and check the scenario of ``cfg``; write telemetry when ``out_dir`` is set."""
    import json
    import os

    from . import checks as C
    from .scenarios import setup
    from .telemetry import Recorder

    scenario, gains = setup(cfg)
    rec = Recorder(scenario, cfg.dt, cfg.log_every)
    sink = rec
    if progress is not None:
        def sink(k, t, outs, sim, mon):
            rec(k, t, outs, sim, mon)
            progress(k, t, mon)
    res = run_scenario(scenario, cfg, gains, sink=sink)
    rec.finish()
    am_tables, world = rec.am_tables(), rec.world_table()
    results = C.evaluate(cfg, scenario, am_tables, world, gains.lambda_min_Dy)
    summary = C.summarize(cfg, scenario, gains, am_tables, world, results,
                          diverged=res.diverged, events=res.events)
    if out_dir is not None:
        rec.write(out_dir)
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, allow_nan=False)
            fh.write("\n")
        with open(os.path.join(out_dir, "config.yaml"), "w") as fh:
            import yaml
            yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
    return RunReport(res, rec, results, summary)
