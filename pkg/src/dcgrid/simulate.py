"""Nonlinear time-domain simulation of the closed-loop averaged model.

State is (i_L, u_S): converter inductor currents behind the droop controller
(virtual inductance X = b*K) and the source bus voltages,

    X d(i_L)/dt = u_ref*1 - K i_L - u_S
    C d(u_S)/dt = i_L - i_S,          i_S = Y_SS u_S + Y_SL u_L,

with the load voltages u_L an algebraic variable pinned each evaluation by
the exact constant-power constraint u_i (Y_LS u_S + Y_LL u_L)_i = -P_i
(index-1 DAE; warm-started Newton per Runge-Kutta stage, no fictitious load
capacitance). A scenario that schedules an activate-cpl event starts with the
loads open (P = 0, linear solve) until the event fires; otherwise loads draw
power from t = 0. A source with k_i = 0 runs undamped with X_i = b * 1 ohm:
the droop term vanishes and only the virtual inductor remains.

Collapse is detected by Newton failure (the power balance lost its real
root), any load voltage at or below 1 V, or a >= 20% step-to-step drop
sustained for 100 consecutive steps.

Scenario files extend the grid document with::

    "scenario": {"horizon": 0.12, "dt": 1e-5, "events": [
        {"t": 0.001, "action": "activate-cpl"},
        {"t": 0.05,  "action": "set-loads", "P": [1000, ...]},
        {"t": 0.2,   "action": "set-controller", "k": [1, 1, 1, 1], "b": 3e-3}
    ]}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, SpecError
from .network import AdmittancePartition, NetworkSpec, build_admittance, parse_network

__all__ = [
    "Event",
    "Scenario",
    "SimulationTrace",
    "parse_scenario",
    "load_scenario",
    "solve_load_voltages",
    "simulate",
]

_DEFAULT_DT = 1e-6
_MAX_SAMPLES = 100_000
_COLLAPSE_FLOOR = 1.0          # volts
_COLLAPSE_DROP = 0.8           # >= 20% per-step drop ...
_COLLAPSE_STREAK = 100         # ... sustained this many steps
_LOAD_NEWTON_CAP = 50


@dataclass(frozen=True)
class Event:
    t: float
    action: str                      # set-loads | set-controller | activate-cpl
    P: np.ndarray | None = None      # set-loads payload
    k: np.ndarray | None = None      # set-controller payload (zeros allowed)
    b: float | None = None           # set-controller payload

    def describe(self) -> str:
        if self.action == "set-loads":
            return f"set-loads P={self.P.tolist()}"
        if self.action == "set-controller":
            return f"set-controller k={self.k.tolist()} b={self.b:g}"
        return self.action


@dataclass(frozen=True)
class Scenario:
    spec: NetworkSpec
    horizon: float
    dt: float = _DEFAULT_DT
    events: tuple[Event, ...] = ()
    # optional explicit initial state; defaults are u_S = u_ref*1, i_L = 0
    u_source0: np.ndarray | None = None
    i_inductor0: np.ndarray | None = None


@dataclass(frozen=True)
class SimulationTrace:
    t: np.ndarray
    u_load: np.ndarray          # samples x m
    u_source: np.ndarray        # samples x n
    i_inductor: np.ndarray      # samples x n
    i_source: np.ndarray        # samples x n
    events: tuple               # (time, description) pairs as applied
    termination: str            # completed | collapsed
    collapse_time: float | None = None
    collapse_node: object = None  # load id whose voltage broke first
    load_ids: tuple = ()
    source_ids: tuple = ()

    def __post_init__(self):
        for arr in (self.t, self.u_load, self.u_source, self.i_inductor, self.i_source):
            arr.setflags(write=False)

    def to_csv(self, fh) -> None:
        """Write the trace in the plot-ready column layout.

        Columns are positional: u_<n+1>..u_<n+m> load voltages,
        us_1..us_n source voltages, il_1..il_n inductor currents. Events and
        the termination status follow as trailing comment lines.
        """
        n = self.u_source.shape[1]
        m = self.u_load.shape[1]
        header = (["t"]
                  + [f"u_{n + i + 1}" for i in range(m)]
                  + [f"us_{i + 1}" for i in range(n)]
                  + [f"il_{i + 1}" for i in range(n)])
        fh.write(",".join(header) + "\n")
        for row in range(self.t.shape[0]):
            vals = np.concatenate(([self.t[row]], self.u_load[row],
                                   self.u_source[row], self.i_inductor[row]))
            fh.write(",".join(f"{v:.10g}" for v in vals) + "\n")
        for when, what in self.events:
            fh.write(f"# event t={when:g} {what}\n")
        if self.termination == "collapsed":
            fh.write(f"# terminated collapsed t={self.collapse_time:g} "
                     f"node={self.collapse_node}\n")
        else:
            fh.write("# terminated completed\n")


def _vector(obj, key, path, length, minimum=None):
    if key not in obj:
        raise SpecError("missing required key", field=f"{path}.{key}")
    val = obj[key]
    if not isinstance(val, list) or len(val) != length:
        raise SpecError(f"expected a list of {length} numbers", field=f"{path}.{key}")
    arr = np.array([float(v) for v in val])
    if not np.all(np.isfinite(arr)):
        raise SpecError("entries must be finite", field=f"{path}.{key}")
    if minimum is not None and np.any(arr < minimum):
        raise SpecError(f"entries must be >= {minimum}", field=f"{path}.{key}")
    return arr


def parse_scenario(document: dict) -> Scenario:
    """Validate a scenario document (grid document + "scenario" block)."""
    spec = parse_network(document)
    if "scenario" not in document:
        raise SpecError("missing required key", field="$.scenario")
    sc = document["scenario"]
    if not isinstance(sc, dict):
        raise SpecError("expected an object", field="scenario")
    horizon = sc.get("horizon")
    if not isinstance(horizon, (int, float)) or horizon <= 0:
        raise SpecError("must be a positive number", field="scenario.horizon")
    dt = sc.get("dt", _DEFAULT_DT)
    if not isinstance(dt, (int, float)) or dt <= 0:
        raise SpecError("must be a positive number", field="scenario.dt")
    events = []
    last_t = -np.inf
    for i, ev in enumerate(sc.get("events", [])):
        path = f"scenario.events[{i}]"
        if not isinstance(ev, dict):
            raise SpecError("expected an object", field=path)
        t = ev.get("t")
        if not isinstance(t, (int, float)) or t < 0:
            raise SpecError("must be a number >= 0", field=f"{path}.t")
        if t < last_t:
            raise SpecError("events must be sorted by time", field=f"{path}.t")
        last_t = float(t)
        action = ev.get("action")
        if action == "set-loads":
            events.append(Event(t=float(t), action=action,
                                P=_vector(ev, "P", path, spec.m, minimum=0.0)))
        elif action == "set-controller":
            k = _vector(ev, "k", path, spec.n, minimum=0.0)
            b = ev.get("b")
            if not isinstance(b, (int, float)) or b <= 0:
                raise SpecError("must be a positive number", field=f"{path}.b")
            events.append(Event(t=float(t), action=action, k=k, b=float(b)))
        elif action == "activate-cpl":
            events.append(Event(t=float(t), action=action))
        else:
            raise SpecError("unknown action", field=f"{path}.action")
    if events and horizon < events[-1].t:
        raise SpecError("horizon must cover the last event", field="scenario.horizon")
    return Scenario(spec=spec, horizon=float(horizon), dt=float(dt), events=tuple(events))


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        try:
            document = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError(f"invalid JSON: {exc}", field="$") from exc
    return parse_scenario(document)


def _load_flow(u_S, P, partition, warm):
    """Newton solve of the load power balance; returns (u_L, converged)."""
    Y_LL = partition.Y_LL
    c = partition.Y_LS @ u_S
    if np.all(P == 0):
        return np.linalg.solve(Y_LL, -c), True
    u = warm.copy()
    tol = 1e-9 * np.maximum(P, 1.0)
    for _ in range(_LOAD_NEWTON_CAP):
        i_L = c + Y_LL @ u
        r = u * i_L + P
        if np.all(np.abs(r) <= tol):
            return u, True
        J = np.diag(i_L) + u[:, None] * Y_LL
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            return u, False
        u = u - step
        if np.any(u <= 0):  # crossed through zero: no physical root nearby
            return u, False
    return u, False


def solve_load_voltages(u_S: np.ndarray, P: np.ndarray,
                        partition: AdmittancePartition,
                        warm_start: np.ndarray) -> np.ndarray:
    """Load voltages satisfying u_i (Y_LS u_S + Y_LL u_L)_i = -P_i.

    Warm-started Newton; raises NumericalError when the balance has no root
    near the warm start (the integrator treats that as voltage collapse).
    """
    u_S = np.asarray(u_S, dtype=float)
    P = np.asarray(P, dtype=float)
    warm = np.asarray(warm_start, dtype=float)
    u, ok = _load_flow(u_S, P, partition, warm)
    if not ok:
        raise NumericalError("load power balance has no solution near the warm start")
    return u


class _Phase:
    """Mutable controller/load configuration between events."""

    def __init__(self, spec: NetworkSpec, active: bool = True):
        self.P_set = spec.p_vector()
        self.k = spec.k_diag()
        self.b = spec.control.b
        self.active = active

    @property
    def P(self):
        return self.P_set if self.active else np.zeros_like(self.P_set)

    def apply(self, ev: Event):
        if ev.action == "set-loads":
            self.P_set = ev.P.copy()
        elif ev.action == "set-controller":
            self.k = ev.k.copy()
            self.b = ev.b
        elif ev.action == "activate-cpl":
            self.active = True


def _deriv(i_L, u_S, warm, phase, u_ref, C, partition):
    """Stage derivative; None signals a failed load solve (collapse)."""
    u_L, ok = _load_flow(u_S, phase.P, partition, warm)
    if not ok:
        return None
    i_S = partition.Y_SS @ u_S + partition.Y_SL @ u_L
    X = np.where(phase.k > 0, phase.b * phase.k, phase.b)
    di = (u_ref - phase.k * i_L - u_S) / X
    du = (i_L - i_S) / C
    return di, du, u_L, i_S


def simulate(scenario: Scenario, decimation: int | None = None) -> SimulationTrace:
    """Integrate the scenario with classical fixed-step Runge-Kutta.

    Events are applied exactly at their timestamps (the step is shortened to
    land on them). Samples are stored every `decimation` steps (default keeps
    at most 1e5 samples). On collapse the trace ends early with the offending
    load recorded; collapse is a result, not an error.
    """
    spec = scenario.spec
    partition = build_admittance(spec)
    u_ref = spec.control.u_ref
    C = spec.c_diag()
    n, m = spec.n, spec.m
    load_ids = tuple(l.id for l in spec.loads)
    # scheduling an activate-cpl event means the run starts with loads open
    starts_open = any(ev.action == "activate-cpl" for ev in scenario.events)
    phase = _Phase(spec, active=not starts_open)

    total_steps = max(1, math.ceil(scenario.horizon / scenario.dt))
    if decimation is None:
        # +2 covers the t=0 sample and a possible off-grid final sample
        decimation = max(1, math.ceil((total_steps + 2) / _MAX_SAMPLES))

    events = list(scenario.events)
    applied = []
    tiny = scenario.dt * 1e-9

    t = 0.0
    while events and events[0].t <= tiny:
        ev = events.pop(0)
        phase.apply(ev)
        applied.append((ev.t, ev.describe()))

    u_S = (np.asarray(scenario.u_source0, dtype=float) if scenario.u_source0 is not None
           else u_ref * np.ones(n))
    i_L = (np.asarray(scenario.i_inductor0, dtype=float) if scenario.i_inductor0 is not None
           else np.zeros(n))
    u_L, ok = _load_flow(u_S, phase.P, partition, u_ref * np.ones(m))
    if not ok:
        raise SpecError("initial state admits no load-flow solution", field="scenario")

    samples = []

    def record(time):
        i_S = partition.Y_SS @ u_S + partition.Y_SL @ u_L
        samples.append((time, u_L.copy(), u_S.copy(), i_L.copy(), i_S))

    def finish(termination, collapse_time=None, node=None):
        ts = np.array([s[0] for s in samples])
        return SimulationTrace(
            t=ts,
            u_load=np.array([s[1] for s in samples]).reshape(len(samples), m),
            u_source=np.array([s[2] for s in samples]).reshape(len(samples), n),
            i_inductor=np.array([s[3] for s in samples]).reshape(len(samples), n),
            i_source=np.array([s[4] for s in samples]).reshape(len(samples), n),
            events=tuple(applied), termination=termination,
            collapse_time=collapse_time, collapse_node=node,
            load_ids=load_ids, source_ids=tuple(s.id for s in spec.sources))

    record(0.0)
    steps = 0
    drop_streak = 0

    while t < scenario.horizon - tiny:
        t_stop = min(events[0].t, scenario.horizon) if events else scenario.horizon
        while t < t_stop - tiny:
            h = min(scenario.dt, t_stop - t)
            k1 = _deriv(i_L, u_S, u_L, phase, u_ref, C, partition)
            if k1 is None:
                return finish("collapsed", t, load_ids[int(np.argmin(u_L))])
            k2 = _deriv(i_L + 0.5 * h * k1[0], u_S + 0.5 * h * k1[1], k1[2],
                        phase, u_ref, C, partition)
            if k2 is None:
                return finish("collapsed", t, load_ids[int(np.argmin(k1[2]))])
            k3 = _deriv(i_L + 0.5 * h * k2[0], u_S + 0.5 * h * k2[1], k2[2],
                        phase, u_ref, C, partition)
            if k3 is None:
                return finish("collapsed", t, load_ids[int(np.argmin(k2[2]))])
            k4 = _deriv(i_L + h * k3[0], u_S + h * k3[1], k3[2],
                        phase, u_ref, C, partition)
            if k4 is None:
                return finish("collapsed", t, load_ids[int(np.argmin(k3[2]))])
            i_L = i_L + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            u_S = u_S + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            u_next, ok = _load_flow(u_S, phase.P, partition, k4[2])
            t += h
            steps += 1
            if not ok or np.any(u_next <= _COLLAPSE_FLOOR):
                node = load_ids[int(np.argmin(u_next if ok else k4[2]))]
                return finish("collapsed", t, node)
            drop_streak = drop_streak + 1 if np.min(u_next / u_L) <= _COLLAPSE_DROP else 0
            u_L = u_next
            if drop_streak >= _COLLAPSE_STREAK:
                return finish("collapsed", t, load_ids[int(np.argmin(u_L))])
            if steps % decimation == 0:
                record(t)
        t = t_stop
        while events and events[0].t <= t + tiny:
            ev = events.pop(0)
            phase.apply(ev)
            applied.append((ev.t, ev.describe()))
            # re-pin the algebraic variable under the new load constraint
            u_L, ok = _load_flow(u_S, phase.P, partition, u_L)
            if not ok:
                return finish("collapsed", t, load_ids[int(np.argmin(u_L))])

    if samples[-1][0] < t - tiny:
        record(t)
    return finish("completed")
