"""Trajectory integration: fixed-step RK4 and embedded RK45 with PI control.

Failures mid-trajectory (degenerate dynamics, domain errors, non-finite
states, step underflow) abort the run instead of raising: partial
trajectories are first-class results and carry the abort reason and time.
Diagnostics are evaluated at retained samples only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .expr import ExprError
from .frame import BundlePoint
from .lagrangian import DegenerateLagrangian

__all__ = ["IntegratorConfig", "Trajectory", "integrate", "sweep", "flow"]

Rhs = Callable[[BundlePoint], np.ndarray]
Diagnostics = Mapping[str, Callable[[BundlePoint], float]]

# Exceptions that turn into an aborted trajectory rather than propagating.
_ABORTABLE = (ExprError, DegenerateLagrangian, np.linalg.LinAlgError,
              ZeroDivisionError, OverflowError)

_MIN_STEP = 1e-14


@dataclass
class IntegratorConfig:
    t0: float = 0.0
    t1: float = 1.0
    method: str = "rk4"          # rk4 | rk45
    step: float = 1e-3           # rk4 step size
    rtol: float = 1e-10          # rk45 tolerances
    atol: float = 1e-10
    initial_step: float | None = None
    sample_stride: int = 1

    def validate(self) -> None:
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.t1 < self.t0:
            raise ValueError("t1 must not precede t0")
        if self.method == "rk4" and self.step <= 0:
            raise ValueError("step must be positive")
        if self.method == "rk45" and (self.rtol <= 0 or self.atol <= 0):
            raise ValueError("tolerances must be positive")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")


@dataclass
class Trajectory:
    times: np.ndarray                      # strictly increasing
    states: np.ndarray                     # shape (len(times), 2n)
    diagnostics: dict[str, np.ndarray] = field(default_factory=dict)
    status: str = "completed"              # completed | aborted
    abort_reason: str | None = None
    abort_time: float | None = None

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def point(self, i: int) -> BundlePoint:
        return BundlePoint.from_coords(self.states[i])

    def final_point(self) -> BundlePoint:
        return self.point(len(self.times) - 1)


def _rk4_step(f: Callable[[np.ndarray], np.ndarray], s: np.ndarray, h: float) -> np.ndarray:
    k1 = f(s)
    k2 = f(s + 0.5 * h * k1)
    k3 = f(s + 0.5 * h * k2)
    k4 = f(s + h * k3)
    return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# Dormand-Prince 5(4) tableau; the solution advances with the 5th-order row.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_ERR = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
                    -17253 / 339200, 22 / 525, -1 / 40])


class _Recorder:
    def __init__(self, dim: int, diagnostics: Diagnostics):
        self.times: list[float] = []
        self.states: list[np.ndarray] = []
        self.diag_names = list(diagnostics.keys())
        self.diag_fns = diagnostics
        self.diag_values: dict[str, list[float]] = {k: [] for k in self.diag_names}

    def record(self, t: float, s: np.ndarray) -> None:
        point = BundlePoint.from_coords(s)
        values = {k: float(self.diag_fns[k](point)) for k in self.diag_names}
        self.times.append(t)
        self.states.append(s.copy())
        for k, v in values.items():
            self.diag_values[k].append(v)

    def build(self, status: str, reason: str | None, at: float | None) -> Trajectory:
        times = np.asarray(self.times)
        states = (np.vstack(self.states) if self.states
                  else np.empty((0, 0)))
        diags = {k: np.asarray(v) for k, v in self.diag_values.items()}
        return Trajectory(times, states, diags, status, reason, at)


def integrate(rhs: Rhs, p0: BundlePoint, cfg: IntegratorConfig,
              diagnostics: Diagnostics | None = None) -> Trajectory:
    """Integrate ``d(state)/dt = rhs(state)`` from ``p0`` over ``[t0, t1]``."""
    cfg.validate()
    diagnostics = diagnostics or {}
    rec = _Recorder(2 * p0.n, diagnostics)

    def f(arr: np.ndarray) -> np.ndarray:
        return np.asarray(rhs(BundlePoint.from_coords(arr)), dtype=float)

    state = p0.coords
    t = cfg.t0
    try:
        rec.record(t, state)
    except _ABORTABLE as e:
        return rec.build("aborted", str(e), t)

    span = cfg.t1 - cfg.t0
    if span == 0.0:
        return rec.build("completed", None, None)

    if cfg.method == "rk4":
        return _run_rk4(f, state, cfg, rec)
    return _run_rk45(f, state, cfg, rec)


def _run_rk4(f, state: np.ndarray, cfg: IntegratorConfig, rec: _Recorder) -> Trajectory:
    span = cfg.t1 - cfg.t0
    nsteps = max(1, round(span / cfg.step))
    h = span / nsteps
    t = cfg.t0
    for k in range(1, nsteps + 1):
        try:
            state = _rk4_step(f, state, h)
        except _ABORTABLE as e:
            return rec.build("aborted", str(e), t)
        t = cfg.t0 + k * h
        if not np.isfinite(state).all():
            return rec.build("aborted", "non-finite state", t)
        if k % cfg.sample_stride == 0 or k == nsteps:
            try:
                rec.record(t, state)
            except _ABORTABLE as e:
                return rec.build("aborted", str(e), t)
    return rec.build("completed", None, None)


def _run_rk45(f, state: np.ndarray, cfg: IntegratorConfig, rec: _Recorder) -> Trajectory:
    t = cfg.t0
    span = cfg.t1 - cfg.t0
    h = cfg.initial_step if cfg.initial_step else min(span, max(span * 1e-3, 1e-6))
    err_prev = 1.0
    accepted = 0
    while t < cfg.t1:
        h = min(h, cfg.t1 - t)
        if h < _MIN_STEP:
            return rec.build("aborted", "step size underflow", t)
        reaches_end = h == cfg.t1 - t
        try:
            ks = np.empty((7, state.size))
            ks[0] = f(state)
            for i in range(1, 7):
                ks[i] = f(state + h * (_DP_A[i] @ ks[:i]))
            new = state + h * (_DP_B5 @ ks)
            err_vec = h * (_DP_ERR @ ks)
        except _ABORTABLE as e:
            return rec.build("aborted", str(e), t)
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(state), np.abs(new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if err <= 1.0:
            # land on t1 exactly instead of an ulp short of it
            t = cfg.t1 if reaches_end else t + h
            state = new
            if not np.isfinite(state).all():
                return rec.build("aborted", "non-finite state", t)
            accepted += 1
            if accepted % cfg.sample_stride == 0 or t >= cfg.t1:
                try:
                    rec.record(t, state)
                except _ABORTABLE as e:
                    return rec.build("aborted", str(e), t)
            # PI controller on the error history
            factor = 0.9 * (err or 1e-10) ** (-0.7 / 5.0) * err_prev ** (0.4 / 5.0)
            err_prev = max(err, 1e-10)
            h *= min(5.0, max(0.2, factor))
        else:
            h *= max(0.2, 0.9 * err ** (-0.2))
    return rec.build("completed", None, None)


def flow(rhs: Rhs, p0: BundlePoint, dt: float, substeps: int = 16) -> BundlePoint:
    """Advance ``p0`` by ``dt`` (either sign) with fixed RK4 substeps.

    A small utility for finite-difference probes along integral curves.
    """
    def f(arr: np.ndarray) -> np.ndarray:
        return np.asarray(rhs(BundlePoint.from_coords(arr)), dtype=float)

    state = p0.coords
    h = dt / substeps
    for _ in range(substeps):
        state = _rk4_step(f, state, h)
    return BundlePoint.from_coords(state)


def sweep(rhs_factory: Callable[[Mapping[str, float]],
                                tuple[Rhs, Diagnostics]],
          items: Sequence[tuple[BundlePoint, Mapping[str, float]]],
          cfg: IntegratorConfig) -> list[Trajectory]:
    """Run one trajectory per (initial point, overrides) item.

    Results are ordered as the inputs; a failing item yields an aborted
    trajectory without affecting its neighbours.
    """
    out: list[Trajectory] = []
    for p0, overrides in items:
        try:
            rule, diags = rhs_factory(overrides)
            out.append(integrate(rule, p0, cfg, diags))
        except _ABORTABLE as e:
            out.append(Trajectory(np.empty(0), np.empty((0, 0)), {},
                                  "aborted", str(e), cfg.t0))
    return out
