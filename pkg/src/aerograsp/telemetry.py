"""Decimated telemetry: per-AM and world time series plus CSV round trip.

Rows are logged every ``log_every`` ticks, at every phase start and at the
last tick.  Quantities that the checks need between logged rows are carried
in the world table: the largest per-step storage increase since the previous
row and the running integral of the squared aggregate task speed.

CSV files start with a ``# aerograsp telemetry <version>`` line followed by
the header.  Floats are written with ``repr`` so a file reproduces the run
bit for bit.
"""

import csv
import os

import numpy as np

FORMAT_VERSION = "1"
_MAGIC = "# aerograsp telemetry "

_XYZ = ("x", "y", "z")


def am_columns(n):
    idx = [str(k) for k in range(n)]
    cols = ["t"]
    for name in ("r_c", "r_c_err", "e_R", "e_w"):
        cols += [f"{name}_{a}" for a in _XYZ]
    cols += [f"y_{k}" for k in idx] + [f"y_err_{k}" for k in idx]
    cols += [f"f_e_{a}" for a in _XYZ] + [f"tau_e_{a}" for a in _XYZ]
    cols += ["u1"] + [f"u2_{a}" for a in _XYZ] + [f"u3_{k}" for k in idx]
    cols += ["S_AM", "residual", "power"]
    return cols


WORLD_COLUMNS = (["t", "phase"] + [f"obj_p_{a}" for a in _XYZ] + [f"obj_v_{a}" for a in _XYZ]
                 + ["S_obj", "S_tot", "ybar_speed", "ybar_sq_int", "dS_max"])


class Table:
    """Column-addressable float table; ``phase`` is kept as a string list."""

    def __init__(self, columns, rows, phases=None):
        self.columns = list(columns)
        self.index = {c: i for i, c in enumerate(self.columns)}
        self.data = np.array(rows, dtype=float).reshape(len(rows), -1)
        self.phases = phases

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, name):
        return self.data[:, self.index[name]]

    def block(self, prefix, names):
        return np.column_stack([self[f"{prefix}_{a}"] for a in names])


class Recorder:
    """Run sink collecting telemetry rows in memory."""

    def __init__(self, scenario, dt, log_every=10):
        if log_every < 1:
            raise ValueError("log_every must be >= 1")
        self.scenario = scenario
        self.dt = dt
        self.log_every = log_every
        self.n = scenario.model.n
        self.n_ams = scenario.n_ams
        self.phase_ticks = {int(round(p.t_start / dt)) for p in scenario.phases}
        self.am_rows = [[] for _ in range(self.n_ams)]
        self.world_rows = []
        self.phases = []
        self._S_prev = None
        self._dS_max = 0.0
        self._int = 0.0
        self._speed_prev = None
        self._pending = None
        self._last_logged = -1

    def __call__(self, k, t, outs, sim, mon):
        if self._S_prev is not None:
            self._dS_max = max(self._dS_max, float(np.max(mon.S_am - self._S_prev)))
            self._int += 0.5 * self.dt * (self._speed_prev ** 2 + mon.ybar_speed ** 2)
        self._S_prev = mon.S_am.copy()
        self._speed_prev = mon.ybar_speed
        rows = (k, [self._am_row(t, o, mon, i) for i, o in enumerate(outs)],
                self._world_row(t, sim, mon), mon.phase)
        if k % self.log_every == 0 or k in self.phase_ticks:
            self._log(*rows)
        else:
            self._pending = rows

    def finish(self):
        """Log the last tick if decimation skipped it."""
        if self._pending is not None and self._pending[0] > self._last_logged:
            self._log(*self._pending)
        self._pending = None

    def _log(self, k, am_rows, world_row, phase):
        for i, r in enumerate(am_rows):
            self.am_rows[i].append(r)
        world_row[-1] = self._dS_max
        self.world_rows.append(world_row)
        self.phases.append(phase)
        self._dS_max = 0.0
        self._last_logged = k

    def _am_row(self, t, o, mon, i):
        F_e = getattr(o, "F_e", None)
        F_e = np.zeros(6) if F_e is None else F_e
        return ([t, *o.r_c, *o.r_c_err, *o.e_R, *o.e_w, *o.y, *o.y_err, *F_e[:3], *F_e[3:6],
                 float(o.u1), *o.u2, *o.u3, o.storage, mon.residual[i], mon.power[i]])

    def _world_row(self, t, sim, mon):
        obj = sim.obj
        p = obj.p if obj is not None else np.zeros(3)
        v = obj.v if obj is not None else np.zeros(3)
        return [t, *p, *v, mon.S_obj, mon.S_tot, mon.ybar_speed, self._int, 0.0]

    # -- tables and files ---------------------------------------------------

    def am_tables(self):
        cols = am_columns(self.n)
        return [Table(cols, [[float(x) for x in r] for r in rows]) for rows in self.am_rows]

    def world_table(self):
        cols = [c for c in WORLD_COLUMNS if c != "phase"]
        return Table(cols, [[float(x) for x in r] for r in self.world_rows], list(self.phases))

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        for i, rows in enumerate(self.am_rows):
            path = os.path.join(out_dir, f"am_{i:02d}.csv")
            _write_csv(path, am_columns(self.n), rows)
            paths.append(path)
        path = os.path.join(out_dir, "world.csv")
        rows = [[r[0], ph, *r[1:]] for r, ph in zip(self.world_rows, self.phases)]
        _write_csv(path, WORLD_COLUMNS, rows)
        paths.append(path)
        return paths


def _fmt(x):
    return x if isinstance(x, str) else repr(float(x))


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"{_MAGIC}{FORMAT_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def read_table(path):
    """Table from a telemetry CSV; checks the format version."""
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith(_MAGIC):
            raise ValueError(f"{path}: not a telemetry file")
        version = first[len(_MAGIC):]
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported telemetry version {version!r}")
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    phases = None
    if "phase" in header:
        k = header.index("phase")
        phases = [r[k] for r in rows]
        header = header[:k] + header[k + 1:]
        rows = [r[:k] + r[k + 1:] for r in rows]
    return Table(header, [[float(x) for x in r] for r in rows], phases)
