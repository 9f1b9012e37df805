"""Adapted frames from a nonlinear connection, realized as point-wise linear maps.

Conventions, fixed once for the whole package (they are the unique pair that
makes the frame and coframe dual):

    delta/delta x^i = d/dx^i - sum_j N[i][j] d/dy^j
    delta y^i       = dy^i   + sum_j N[j][i] dx^j

A vector with *adapted* components ``(a, b)`` means
``sum_i a_i delta/delta x^i + sum_i b_i d/dy^i``; *natural* components refer
to ``d/dx^i, d/dy^i``.  Covector components are tagged the same way against
``(dx^i, delta y^i)`` vs ``(dx^i, dy^i)``.

The projectors and structure operators act on the adapted decomposition:

    h: (a, b) -> (a, 0)      v: (a, b) -> (0, b)
    P: (a, b) -> (a, -b)     J: (a, b) -> (0, a)
    P*: (c, d) -> (c, -d)    J*: (c, d) -> (0, c)

``J*`` on the adapted coframe coincides with the natural-coframe action
(dx -> dy, dy -> 0) exactly when N = 0; acting through the adapted
decomposition is what makes the duals satisfy J*P* = J* and P*J* = -J*
for every connection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import expr
from .expr import Expression, eval_jet, eval_value, eval_value_grad, parse

__all__ = [
    "BundlePoint", "Connection", "FrameEval", "AdaptedDerivatives",
    "eval_frame", "adapted_derivatives",
    "operator_matrix", "dual_operator_matrix",
    "apply_operator", "apply_dual_operator",
    "vector_to_natural", "vector_to_adapted",
    "covector_to_natural", "covector_to_adapted",
    "OPERATOR_KINDS", "DUAL_OPERATOR_KINDS",
]

OPERATOR_KINDS = ("h", "v", "P", "J")
DUAL_OPERATOR_KINDS = ("P*", "J*")


@dataclass(eq=False)
class BundlePoint:
    """A point (x^1..x^n, y^1..y^n) of the 2n-dimensional chart."""

    x: np.ndarray
    y: np.ndarray

    def __init__(self, x: Sequence[float], y: Sequence[float]):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError("x and y must be 1-d arrays of equal length")

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def coords(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])

    @classmethod
    def from_coords(cls, coords: Sequence[float]) -> "BundlePoint":
        arr = np.asarray(coords, dtype=float).ravel()
        if arr.size % 2 != 0:
            raise ValueError("coordinate array must have even length")
        n = arr.size // 2
        return cls(arr[:n], arr[n:])

    def shifted(self, k: int, h: float) -> "BundlePoint":
        coords = self.coords
        coords[k] += h
        return BundlePoint.from_coords(coords)

    def __repr__(self) -> str:
        return f"BundlePoint(x={self.x.tolist()}, y={self.y.tolist()})"


@dataclass(frozen=True)
class Connection:
    """n x n matrix of expressions N[i][j] defining the horizontal split."""

    n: int
    entries: tuple[tuple[Expression, ...], ...]

    @classmethod
    def from_texts(cls, texts: Sequence[Sequence[str]], n: int,
                   params: Iterable[str] = ()) -> "Connection":
        if len(texts) != n or any(len(row) != n for row in texts):
            raise ValueError(f"connection must be {n}x{n}")
        rows = tuple(
            tuple(parse(cell, n, params) for cell in row) for row in texts
        )
        return cls(n, rows)

    @classmethod
    def zero(cls, n: int) -> "Connection":
        zero = expr.Const(0.0)
        return cls(n, tuple(tuple(zero for _ in range(n)) for _ in range(n)))

    def values(self, point: BundlePoint, params: Mapping[str, float] | None = None) -> np.ndarray:
        """Only N at the point; the cheap path for dynamics right-hand sides."""
        nval = np.empty((self.n, self.n))
        for i in range(self.n):
            for j in range(self.n):
                nval[i, j] = eval_value(self.entries[i][j], point, params)
        return nval


@dataclass
class FrameEval:
    """Connection values and first partials at one point.

    ``nx[i, j, k] = dN[i][j]/dx^k`` and ``ny[i, j, k] = dN[i][j]/dy^k``.
    """

    nval: np.ndarray
    nx: np.ndarray
    ny: np.ndarray

    def horizontal_derivative(self) -> np.ndarray:
        """dnh[k, i, j] = delta N[i][j] / delta x^k."""
        # delta/delta x^k = d/dx^k - sum_l N[k][l] d/dy^l applied entrywise
        return (np.transpose(self.nx, (2, 0, 1))
                - np.einsum("kl,ijl->kij", self.nval, self.ny))


def eval_frame(connection: Connection, point: BundlePoint,
               params: Mapping[str, float] | None = None) -> FrameEval:
    n = connection.n
    nval = np.empty((n, n))
    nx = np.empty((n, n, n))
    ny = np.empty((n, n, n))
    for i in range(n):
        for j in range(n):
            value, grad = eval_value_grad(connection.entries[i][j], point, params)
            nval[i, j] = value
            nx[i, j, :] = grad[:n]
            ny[i, j, :] = grad[n:]
    return FrameEval(nval, nx, ny)


@dataclass
class AdaptedDerivatives:
    """First and second adapted derivatives of a scalar at one point.

    Index order follows outer-then-inner application:
    ``dd[j, i] = delta_{x^j} delta_{x^i} f``,
    ``dv[j, i] = delta_{x^j} d_{y^i} f``,
    ``vd[j, i] = d_{y^j} delta_{x^i} f``,
    ``vv[j, i] = d^2 f / dy^j dy^i``.
    """

    dx_adapted: np.ndarray
    dy: np.ndarray
    dd: np.ndarray
    dv: np.ndarray
    vd: np.ndarray
    vv: np.ndarray
    value: float = 0.0


def adapted_derivatives(f: Expression, connection: Connection, point: BundlePoint,
                        params: Mapping[str, float] | None = None,
                        frame: FrameEval | None = None) -> AdaptedDerivatives:
    """Adapted first/second derivatives assembled from one second-order jet.

    All mixed blocks are exact (jet hessian plus connection first partials);
    no finite differencing happens here.
    """
    n = connection.n
    if frame is None:
        frame = eval_frame(connection, point, params)
    jet = eval_jet(f, point, params)
    fx, fy = jet.gradient[:n], jet.gradient[n:]
    fxx = jet.hessian[:n, :n]
    fxy = jet.hessian[:n, n:]
    fyy = jet.hessian[n:, n:]
    nval, nx, ny = frame.nval, frame.nx, frame.ny

    dxa = fx - nval @ fy
    # dv[j, i] = fxy[j, i] - sum_k N[j, k] fyy[k, i]
    dv = fxy - nval @ fyy
    # vd[j, i] = fxy[i, j] - sum_k ny[i, k, j] fy[k] - sum_k N[i, k] fyy[j, k]
    vd = fxy.T - np.einsum("ikj,k->ji", ny, fy) - np.einsum("ik,jk->ji", nval, fyy)
    # dd[j, i] = fxx[j, i] - sum_k nx[i, k, j] fy[k]
    #            - sum_k N[i, k] fxy[j, k] - sum_l N[j, l] vd[l, i]
    dd = (fxx
          - np.einsum("ikj,k->ji", nx, fy)
          - np.einsum("ik,jk->ji", nval, fxy)
          - nval @ vd)
    return AdaptedDerivatives(dx_adapted=dxa, dy=fy.copy(), dd=dd, dv=dv,
                              vd=vd, vv=fyy.copy(), value=jet.value)


# --- change of basis ---------------------------------------------------------

def _vec_to_natural_matrix(nval: np.ndarray) -> np.ndarray:
    n = nval.shape[0]
    t = np.eye(2 * n)
    t[n:, :n] = -nval.T
    return t


def _vec_to_adapted_matrix(nval: np.ndarray) -> np.ndarray:
    n = nval.shape[0]
    t = np.eye(2 * n)
    t[n:, :n] = nval.T
    return t


def vector_to_natural(adapted: np.ndarray, nval: np.ndarray) -> np.ndarray:
    """(a, b) on the adapted frame -> components on (d/dx, d/dy)."""
    adapted = np.asarray(adapted, dtype=float)
    n = nval.shape[0]
    out = adapted.copy()
    out[n:] = adapted[n:] - nval.T @ adapted[:n]
    return out


def vector_to_adapted(natural: np.ndarray, nval: np.ndarray) -> np.ndarray:
    natural = np.asarray(natural, dtype=float)
    n = nval.shape[0]
    out = natural.copy()
    out[n:] = natural[n:] + nval.T @ natural[:n]
    return out


def covector_to_natural(adapted: np.ndarray, nval: np.ndarray) -> np.ndarray:
    """(c, d) on (dx, delta y) -> components on (dx, dy)."""
    adapted = np.asarray(adapted, dtype=float)
    n = nval.shape[0]
    out = adapted.copy()
    out[:n] = adapted[:n] + nval @ adapted[n:]
    return out


def covector_to_adapted(natural: np.ndarray, nval: np.ndarray) -> np.ndarray:
    natural = np.asarray(natural, dtype=float)
    n = nval.shape[0]
    out = natural.copy()
    out[:n] = natural[:n] - nval @ natural[n:]
    return out


# --- operators ---------------------------------------------------------------

def _adapted_block_matrix(kind: str, n: int) -> np.ndarray:
    m = np.zeros((2 * n, 2 * n))
    eye = np.eye(n)
    if kind == "h":
        m[:n, :n] = eye
    elif kind == "v":
        m[n:, n:] = eye
    elif kind in ("P", "P*"):
        m[:n, :n] = eye
        m[n:, n:] = -eye
    elif kind in ("J", "J*"):
        m[n:, :n] = eye
    else:
        raise ValueError(f"unknown operator kind {kind!r}")
    return m


def operator_matrix(kind: str, nval: np.ndarray) -> np.ndarray:
    """2n x 2n matrix of h, v, P or J acting on natural vector components."""
    if kind not in OPERATOR_KINDS:
        raise ValueError(f"unknown operator kind {kind!r}")
    block = _adapted_block_matrix(kind, nval.shape[0])
    return _vec_to_natural_matrix(nval) @ block @ _vec_to_adapted_matrix(nval)


def dual_operator_matrix(kind: str, nval: np.ndarray) -> np.ndarray:
    """2n x 2n matrix of P* or J* acting on natural covector components."""
    if kind not in DUAL_OPERATOR_KINDS:
        raise ValueError(f"unknown dual operator kind {kind!r}")
    n = nval.shape[0]
    block = _adapted_block_matrix(kind, n)
    to_nat = np.eye(2 * n)
    to_nat[:n, n:] = nval
    to_ad = np.eye(2 * n)
    to_ad[:n, n:] = -nval
    return to_nat @ block @ to_ad


def apply_operator(kind: str, vec: np.ndarray, nval: np.ndarray) -> np.ndarray:
    """Apply h/v/P/J to natural vector components at a point."""
    if kind not in OPERATOR_KINDS:
        raise ValueError(f"unknown operator kind {kind!r}")
    vec = np.asarray(vec, dtype=float)
    adapted = vector_to_adapted(vec, nval)
    out = _adapted_block_matrix(kind, nval.shape[0]) @ adapted
    return vector_to_natural(out, nval)


def apply_dual_operator(kind: str, cov: np.ndarray, nval: np.ndarray) -> np.ndarray:
    """Apply P*/J* to natural covector components at a point."""
    if kind not in DUAL_OPERATOR_KINDS:
        raise ValueError(f"unknown dual operator kind {kind!r}")
    cov = np.asarray(cov, dtype=float)
    adapted = covector_to_adapted(cov, nval)
    out = _adapted_block_matrix(kind, nval.shape[0]) @ adapted
    return covector_to_natural(out, nval)


def adapted_frame_vectors(nval: np.ndarray) -> np.ndarray:
    """Rows 0..n-1: delta/delta x^i; rows n..2n-1: d/dy^i (natural components)."""
    n = nval.shape[0]
    out = np.eye(2 * n)
    out[:n, n:] = -nval
    return out


def adapted_coframe_covectors(nval: np.ndarray) -> np.ndarray:
    """Rows 0..n-1: dx^i; rows n..2n-1: delta y^i (natural components)."""
    n = nval.shape[0]
    out = np.eye(2 * n)
    out[n:, :n] = nval.T
    return out
