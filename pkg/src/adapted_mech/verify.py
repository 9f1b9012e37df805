"""Randomized invariant suite over random points, scalars and connections.

Pass-type checks pin the identities the construction guarantees: frame and
coframe duality, the projector/structure operator algebra, jet-vs-finite
difference agreement, nilpotency of d, the fundamental-form cross-check,
the Hamiltonian dynamics residual, semispray back-substitution, and the
energy drift laws of both Hamiltonian modes.

Report-only checks record quantities whose values the construction does
not constrain (they are findings, not assertions): the Lagrangian dynamics
residual, the gap between the two Lagrangian extraction routes, and the
closedness defect of the canonical 2-form for coordinate-dependent
connections.  These carry no tolerance and no pass flag.

Every check is deterministic per seed; random draws use points uniform in
[-2, 2]^(2n) and connection entries that are polynomials of total degree
at most 2 with coefficients in [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import forms, frame, hamiltonian, lagrangian
from .expr import Expression, eval_jet, eval_value, eval_value_grad, parse
from .frame import BundlePoint, Connection
from .integrate import IntegratorConfig, flow, integrate

__all__ = [
    "CheckResult", "run_suite", "CHECK_NAMES", "REPORT_ONLY_NAMES",
    "random_point", "random_polynomial", "random_connection",
    "random_expression", "random_lagrangian", "harmonic_hamiltonian",
]

FD_STEP = 1e-5


@dataclass
class CheckResult:
    name: str
    n: int
    seed: int
    samples: int
    max_error: float
    tolerance: float | None
    passed: bool | None        # None for report-only checks
    notes: str = ""

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "n": self.n,
            "seed": self.seed,
            "samples": self.samples,
            "max_error": self.max_error,
            "tolerance": self.tolerance,
        }
        if self.passed is not None:
            out["pass"] = self.passed
        if self.notes:
            out["notes"] = self.notes
        return out


# --- random draws ------------------------------------------------------------

def random_point(rng: np.random.Generator, n: int, scale: float = 2.0) -> BundlePoint:
    coords = rng.uniform(-scale, scale, size=2 * n)
    return BundlePoint(coords[:n], coords[n:])


def _coord_name(rng: np.random.Generator, n: int) -> str:
    axis = "x" if rng.uniform() < 0.5 else "y"
    return f"{axis}{rng.integers(1, n + 1)}"


def random_polynomial(rng: np.random.Generator, n: int) -> str:
    """Total degree <= 2, coefficients in [-1, 1], at least one linear term."""
    terms = [f"{rng.uniform(-1.0, 1.0)!r}"]
    for _ in range(int(rng.integers(1, 3))):
        terms.append(f"{rng.uniform(-1.0, 1.0)!r}*{_coord_name(rng, n)}")
    for _ in range(int(rng.integers(0, 3))):
        terms.append(f"{rng.uniform(-1.0, 1.0)!r}*{_coord_name(rng, n)}"
                     f"*{_coord_name(rng, n)}")
    return " + ".join(terms)


def random_connection(rng: np.random.Generator, n: int) -> Connection:
    texts = [[random_polynomial(rng, n) for _ in range(n)] for _ in range(n)]
    return Connection.from_texts(texts, n)


def random_expression(rng: np.random.Generator, n: int, depth: int = 3) -> Expression:
    """Random polynomial/trig expression tree, smooth everywhere.

    Trig factors take damped affine arguments so higher-order derivatives
    stay comparable to the value; pure powers and products may grow, but
    they grow together with their derivatives.  That keeps second-order
    finite differences a trustworthy oracle for the exact jets.
    """
    def trig_argument() -> str:
        return (f"({rng.uniform(-1.0, 1.0)!r}*{_coord_name(rng, n)}"
                f" + {rng.uniform(-1.0, 1.0)!r})")

    def build(d: int) -> str:
        if d == 0 or rng.uniform() < 0.25:
            if rng.uniform() < 0.35:
                return f"{rng.uniform(-1.0, 1.0)!r}"
            return _coord_name(rng, n)
        op = rng.choice(["add", "sub", "mul", "neg", "sin", "cos", "pow2", "pow3"])
        if op in ("add", "sub", "mul"):
            sym = {"add": "+", "sub": "-", "mul": "*"}[op]
            return f"({build(d - 1)} {sym} {build(d - 1)})"
        if op == "neg":
            return f"(-{build(d - 1)})"
        if op in ("sin", "cos"):
            return f"{op}({trig_argument()})"
        return f"({build(d - 1)})^{2 if op == 'pow2' else 3}"

    return parse(build(depth), n)


def random_lagrangian(rng: np.random.Generator, n: int) -> Expression:
    """Regular kinetic term plus potential and mild base-fiber coupling."""
    terms = []
    for i in range(1, n + 1):
        terms.append(f"{0.75 + 0.5 * rng.uniform()!r}*y{i}^2")
    for i in range(1, n + 1):
        terms.append(f"-{0.75 + 0.5 * rng.uniform()!r}*x{i}^2")
    for _ in range(int(rng.integers(1, n + 2))):
        i, j = rng.integers(1, n + 1), rng.integers(1, n + 1)
        terms.append(f"{0.3 * rng.uniform(-1.0, 1.0)!r}*x{i}*y{j}")
    if rng.uniform() < 0.5:
        i = rng.integers(1, n + 1)
        terms.append(f"{0.2 * rng.uniform(-1.0, 1.0)!r}*x{i}^3")
    return parse(" + ".join(terms), n)


def harmonic_hamiltonian(n: int) -> Expression:
    text = " + ".join(f"0.5*(x{i}^2 + y{i}^2)" for i in range(1, n + 1))
    return parse(text, n)


# --- pass-type checks ---------------------------------------------------------

def _check_duality(rng, n):
    worst = 0.0
    samples = 100
    conn = random_connection(rng, n)
    for i in range(samples):
        if i % 10 == 0:
            conn = random_connection(rng, n)
        p = random_point(rng, n)
        nval = frame.eval_frame(conn, p).nval
        vecs = frame.adapted_frame_vectors(nval)
        covs = frame.adapted_coframe_covectors(nval)
        pairing = covs @ vecs.T
        worst = max(worst, float(np.max(np.abs(pairing - np.eye(2 * n)))))
    return worst, samples


def _check_operator_identities(rng, n):
    worst = 0.0
    samples = 100
    conn = random_connection(rng, n)
    eye = np.eye(2 * n)
    for i in range(samples):
        if i % 10 == 0:
            conn = random_connection(rng, n)
        p = random_point(rng, n)
        nval = frame.eval_frame(conn, p).nval
        h = frame.operator_matrix("h", nval)
        v = frame.operator_matrix("v", nval)
        pm = frame.operator_matrix("P", nval)
        jm = frame.operator_matrix("J", nval)
        ps = frame.dual_operator_matrix("P*", nval)
        js = frame.dual_operator_matrix("J*", nval)
        w = rng.uniform(-1.0, 1.0, size=2 * n)
        c = rng.uniform(-1.0, 1.0, size=2 * n)
        deviations = [
            (h + v) @ w - w,
            (2 * h - eye) @ w - pm @ w,
            (h - v) @ w - pm @ w,
            (eye - 2 * v) @ w - pm @ w,
            pm @ (pm @ w) - w,
            h @ (h @ w) - h @ w,
            v @ (v @ w) - v @ w,
            h @ (v @ w),
            v @ (h @ w),
            jm @ (jm @ w),
            jm @ (pm @ w) - jm @ w,
            pm @ (jm @ w) + jm @ w,
            ps @ (ps @ c) - c,
            js @ (ps @ c) - js @ c,
            ps @ (js @ c) + js @ c,
        ]
        for d in deviations:
            worst = max(worst, float(np.max(np.abs(d))))
    return worst, samples


def _relative_gap(a: np.ndarray, b: np.ndarray) -> float:
    # relative to the magnitude of the compared object, floored at unit
    # scale: entrywise division would demand more of the finite-difference
    # oracle near an entry's zero than second-order differencing can give
    scale = max(1.0, float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b)) / scale)


def _check_ad_vs_fd(rng, n):
    worst = 0.0
    samples = 200
    for _ in range(samples):
        e = random_expression(rng, n)
        p = random_point(rng, n)
        jet = eval_jet(e, p)
        m = 2 * n
        fd_grad = np.empty(m)
        fd_hess = np.empty((m, m))
        for k in range(m):
            plus, minus = p.shifted(k, FD_STEP), p.shifted(k, -FD_STEP)
            fd_grad[k] = (eval_value(e, plus) - eval_value(e, minus)) / (2 * FD_STEP)
            gp = eval_value_grad(e, plus)[1]
            gm = eval_value_grad(e, minus)[1]
            fd_hess[k, :] = (gp - gm) / (2 * FD_STEP)
        worst = max(worst, _relative_gap(jet.gradient, fd_grad))
        worst = max(worst, _relative_gap(jet.hessian, fd_hess))
    return worst, samples


def _check_dd_zero(rng, n):
    worst = 0.0
    samples = 50
    for _ in range(samples):
        # depth 2 keeps the gradient field O(100) so the absolute 1e-6
        # bound measures nilpotency of d, not finite-difference round-off
        e = random_expression(rng, n, depth=2)
        p = random_point(rng, n)
        w = forms.d_field(forms.ScalarField.from_expression(e))
        ddm = forms.d_oneform(w, p)
        worst = max(worst, float(np.max(np.abs(ddm.comps))))
    return worst, samples


def _check_ddp_vs_fundamental_form(rng, n):
    worst = 0.0
    samples = 50
    for _ in range(samples):
        # depth 2 keeps component magnitudes O(10), so the comparison sits
        # well above the finite-difference round-off floor
        scalar = random_expression(rng, n, depth=2)
        conn = random_connection(rng, n)
        p = random_point(rng, n)
        sys = lagrangian.LagrangianSystem(n, scalar, conn)
        lhs = forms.d_oneform(forms.d_P_field(scalar, conn), p).comps
        phi = lagrangian.fundamental_form(sys, p).to_natural().comps
        worst = max(worst, float(np.max(np.abs(lhs + phi))))
    return worst, samples


def _check_hamiltonian_residual(rng, n):
    worst = 0.0
    samples = 100
    for _ in range(samples):
        scalar = random_expression(rng, n)
        conn = random_connection(rng, n)
        p = random_point(rng, n)
        sys = hamiltonian.HamiltonianSystem(n, scalar, conn)
        worst = max(worst, hamiltonian.dynamics_residual(sys, p))
    return worst, samples


def _solvable_system(rng, n, attempts: int = 60) -> tuple[lagrangian.LagrangianSystem, BundlePoint]:
    for _ in range(attempts):
        sys = lagrangian.LagrangianSystem(n, random_lagrangian(rng, n),
                                          random_connection(rng, n))
        p = random_point(rng, n)
        try:
            lagrangian.semispray_solve(sys, p)
            lagrangian.rhs_euler_lagrange(sys)(p)
        except lagrangian.DegenerateLagrangian:
            continue
        return sys, p
    raise RuntimeError("could not draw a nondegenerate Lagrangian system")


def _check_semispray_residual(rng, n):
    worst = 0.0
    samples = 25
    for _ in range(samples):
        sys, p = _solvable_system(rng, n)
        worst = max(worst, lagrangian.semispray_solve(sys, p).residual)
    return worst, samples


def _fd_energy_slope(rule, sys: hamiltonian.HamiltonianSystem,
                     point: BundlePoint, delta: float = 1e-3) -> float:
    """Fourth-order central difference of H along the flow through a point."""
    def h_at(dt: float) -> float:
        return sys.energy(flow(rule, point, dt, substeps=24))

    return (8.0 * (h_at(delta) - h_at(-delta))
            - (h_at(2 * delta) - h_at(-2 * delta))) / (12.0 * delta)


def _check_drift_law(rng, n):
    worst = 0.0
    trajectories = 2
    for _ in range(trajectories):
        conn = random_connection(rng, n)
        sys = hamiltonian.HamiltonianSystem(n, harmonic_hamiltonian(n), conn,
                                            mode="paper")
        rule = hamiltonian.rhs(sys)
        p0 = random_point(rng, n, scale=0.4)
        cfg = IntegratorConfig(t0=0.0, t1=0.75, method="rk45",
                               rtol=1e-10, atol=1e-10, sample_stride=4)
        traj = integrate(rule, p0, cfg)
        if not traj.completed:
            return float("inf"), trajectories
        take = np.linspace(0, len(traj.times) - 1, min(8, len(traj.times))).astype(int)
        for i in take:
            point = traj.point(int(i))
            fd = _fd_energy_slope(rule, sys, point)
            analytic = hamiltonian.energy_drift_rate(sys, point)
            worst = max(worst, abs(fd - analytic))
    return worst, trajectories


def _check_frame_consistent_conservation(rng, n):
    worst = 0.0
    trajectories = 2
    for _ in range(trajectories):
        conn = random_connection(rng, n)
        sys = hamiltonian.HamiltonianSystem(n, harmonic_hamiltonian(n), conn,
                                            mode="frame-consistent")
        rule = hamiltonian.rhs(sys)
        p0 = random_point(rng, n, scale=0.6)
        cfg = IntegratorConfig(t0=0.0, t1=10.0, method="rk45",
                               rtol=1e-10, atol=1e-10, sample_stride=16)
        traj = integrate(rule, p0, cfg)
        if not traj.completed:
            return float("inf"), trajectories
        h0 = sys.energy(traj.point(0))
        for i in range(len(traj.times)):
            worst = max(worst, abs(sys.energy(traj.point(i)) - h0))
    return worst, trajectories


# --- report-only checks --------------------------------------------------------

def _report_el_form_residual(rng, n):
    worst = 0.0
    samples = 10
    for _ in range(samples):
        sys, p = _solvable_system(rng, n)
        worst = max(worst, lagrangian.el_form_residual(sys, p))
    return worst, samples


def _report_mode_gap(rng, n):
    worst = 0.0
    samples = 10
    for _ in range(samples):
        sys, p = _solvable_system(rng, n)
        cm = lagrangian.rhs_coefficient_matching(sys)(p)
        el = lagrangian.rhs_euler_lagrange(sys)(p)
        worst = max(worst, float(np.max(np.abs(cm - el))))
    return worst, samples


def _report_dphi_h(rng, n):
    worst = 0.0
    samples = 10
    for _ in range(samples):
        conn = random_connection(rng, n)
        sys = hamiltonian.HamiltonianSystem(n, harmonic_hamiltonian(n), conn)
        p = random_point(rng, n)
        worst = max(worst, _closedness_defect(sys, p))
    return worst, samples


def _closedness_defect(sys: hamiltonian.HamiltonianSystem, point: BundlePoint,
                       step: float = FD_STEP) -> float:
    """Max component of d(canonical 2-form) by central differences.

    The only 3-form the suite ever needs, so it is computed in place
    instead of growing the forms module an r-form algebra.
    """
    m = 2 * sys.n

    def comps_at(q: BundlePoint) -> np.ndarray:
        return hamiltonian.canonical_twoform(sys, q).to_natural().comps

    grad = np.empty((m, m, m))
    for r in range(m):
        grad[r] = (comps_at(point.shifted(r, step))
                   - comps_at(point.shifted(r, -step))) / (2 * step)
    worst = 0.0
    for r in range(m):
        for s in range(r + 1, m):
            for t in range(s + 1, m):
                cyc = grad[r, s, t] + grad[s, t, r] + grad[t, r, s]
                worst = max(worst, abs(cyc))
    return worst


# --- suite -----------------------------------------------------------------

_CHECKS: list[tuple[str, float | None, Callable]] = [
    ("duality_pairing", 1e-12, _check_duality),
    ("operator_identities", 1e-12, _check_operator_identities),
    ("ad_vs_fd", 1e-6, _check_ad_vs_fd),
    ("dd_zero", 1e-6, _check_dd_zero),
    ("ddp_vs_fundamental_form", 1e-6, _check_ddp_vs_fundamental_form),
    ("hamiltonian_residual", 1e-12, _check_hamiltonian_residual),
    ("semispray_backsubstitution", 1e-10, _check_semispray_residual),
    ("drift_law_paper_mode", 1e-6, _check_drift_law),
    ("frame_consistent_conservation", 1e-8, _check_frame_consistent_conservation),
    ("report_el_form_residual", None, _report_el_form_residual),
    ("report_mode_gap", None, _report_mode_gap),
    ("report_dphi_h", None, _report_dphi_h),
]

CHECK_NAMES = [name for name, _, _ in _CHECKS]
REPORT_ONLY_NAMES = [name for name, tol, _ in _CHECKS if tol is None]


def run_suite(seed: int = 42, dims=(1, 2, 3),
              include_report_only: bool = True) -> list[CheckResult]:
    """Run every check once per dimension; failures are results, not errors."""
    results: list[CheckResult] = []
    for n in sorted(dims):
        for index, (name, tol, fn) in enumerate(_CHECKS):
            if tol is None and not include_report_only:
                continue
            rng = np.random.default_rng([seed, n, index])
            max_error, samples = fn(rng, n)
            passed = None if tol is None else bool(max_error <= tol)
            results.append(CheckResult(name, n, seed, samples,
                                       float(max_error), tol, passed))
    results.sort(key=lambda r: (r.name, r.n))
    return results


def all_passed(results: list[CheckResult]) -> bool:
    return all(r.passed for r in results if r.passed is not None)
