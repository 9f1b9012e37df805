"""Pointwise exterior calculus on the 2n-dimensional chart.

One- and two-form values carry their component basis as a tag: ``natural``
components sit on ``(dx^i, dy^i)``, ``adapted`` components on
``(dx^i, delta y^i)``.  Two-forms are stored as antisymmetric 2n x 2n
matrices with ``comps[r, s] = w(e_r, e_s)`` over the tagged frame.

Exterior derivatives are always taken in the natural coframe, where
``d(dx) = d(dy) = 0``; adapted representations are conversions only.  The
adapted coframe is anholonomic (``d(delta y)`` carries derivatives of the
connection), so differentiating adapted components directly would drop
those terms.  ``d_oneform`` differentiates the natural components of a
field by central differences (default step 1e-5) because those components
may already contain second derivatives of a scalar; everything else is
exact.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Mapping

import numpy as np

from .expr import Expression, eval_value_grad
from .frame import (
    BundlePoint, Connection,
    covector_to_adapted, covector_to_natural,
)

__all__ = [
    "NATURAL", "ADAPTED", "BasisMismatchError",
    "OneFormValue", "TwoFormValue", "ScalarField", "OneFormField",
    "wedge", "interior", "d_scalar", "d_field", "d_oneform",
    "i_P_oneform", "i_P_twoform", "d_P_scalar", "d_P_field",
]

NATURAL = "natural"
ADAPTED = "adapted"
FD_STEP = 1e-5


class BasisMismatchError(ValueError):
    pass


def _check_compatible(a, b, what: str):
    if a.basis != b.basis:
        raise BasisMismatchError(f"{what}: mixed bases {a.basis!r} and {b.basis!r}")
    if not np.array_equal(a.point.coords, b.point.coords):
        raise BasisMismatchError(f"{what}: operands evaluated at different points")


@dataclass
class OneFormValue:
    comps: np.ndarray            # length 2n
    basis: str                   # NATURAL or ADAPTED
    point: BundlePoint
    nval: np.ndarray | None = None   # connection matrix at the point

    def _require_nval(self) -> np.ndarray:
        if self.nval is None:
            raise ValueError("basis conversion needs the connection at the point")
        return self.nval

    def to_natural(self) -> "OneFormValue":
        if self.basis == NATURAL:
            return self
        comps = covector_to_natural(self.comps, self._require_nval())
        return replace(self, comps=comps, basis=NATURAL)

    def to_adapted(self) -> "OneFormValue":
        if self.basis == ADAPTED:
            return self
        comps = covector_to_adapted(self.comps, self._require_nval())
        return replace(self, comps=comps, basis=ADAPTED)

    def pair(self, vec: np.ndarray) -> float:
        """Pair against vector components given in the same basis."""
        return float(np.dot(self.comps, np.asarray(vec, dtype=float)))


@dataclass
class TwoFormValue:
    comps: np.ndarray            # 2n x 2n, antisymmetric
    basis: str
    point: BundlePoint
    nval: np.ndarray | None = None

    def _require_nval(self) -> np.ndarray:
        if self.nval is None:
            raise ValueError("basis conversion needs the connection at the point")
        return self.nval

    def _congruence(self, t: np.ndarray, basis: str) -> "TwoFormValue":
        m = t.T @ self.comps @ t
        m = (m - m.T) / 2.0   # keep the stored matrix exactly antisymmetric
        return replace(self, comps=m, basis=basis)

    def to_natural(self) -> "TwoFormValue":
        if self.basis == NATURAL:
            return self
        nval = self._require_nval()
        n = nval.shape[0]
        t = np.eye(2 * n)     # natural -> adapted vector components
        t[n:, :n] = nval.T
        return self._congruence(t, NATURAL)

    def to_adapted(self) -> "TwoFormValue":
        if self.basis == ADAPTED:
            return self
        nval = self._require_nval()
        n = nval.shape[0]
        t = np.eye(2 * n)     # adapted -> natural vector components
        t[n:, :n] = -nval.T
        return self._congruence(t, ADAPTED)

    def __call__(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.asarray(u) @ self.comps @ np.asarray(v))


def wedge(a: OneFormValue, b: OneFormValue) -> TwoFormValue:
    _check_compatible(a, b, "wedge")
    comps = np.outer(a.comps, b.comps) - np.outer(b.comps, a.comps)
    nval = a.nval if a.nval is not None else b.nval
    return TwoFormValue(comps, a.basis, a.point, nval)


def interior(vec: np.ndarray, w: TwoFormValue) -> OneFormValue:
    """i_X w for vector components given in w's basis."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (w.comps.shape[0],):
        raise ValueError("vector length does not match the form")
    return OneFormValue(vec @ w.comps, w.basis, w.point, w.nval)


# --- fields ------------------------------------------------------------------

class ScalarField:
    """Evaluation rule giving a value and its natural gradient at any point."""

    def __init__(self, fn: Callable[[BundlePoint], tuple[float, np.ndarray]]):
        self._fn = fn

    @classmethod
    def from_expression(cls, e: Expression,
                        params: Mapping[str, float] | None = None) -> "ScalarField":
        return cls(lambda p: eval_value_grad(e, p, params))

    def value(self, point: BundlePoint) -> float:
        return self._fn(point)[0]

    def gradient(self, point: BundlePoint) -> np.ndarray:
        return np.asarray(self._fn(point)[1], dtype=float)


class OneFormField:
    """Evaluation rule giving a OneFormValue at any point."""

    def __init__(self, fn: Callable[[BundlePoint], OneFormValue]):
        self._fn = fn

    def at(self, point: BundlePoint) -> OneFormValue:
        return self._fn(point)


def d_scalar(f: ScalarField, point: BundlePoint,
             nval: np.ndarray | None = None) -> OneFormValue:
    """df at a point, natural components (the plain gradient)."""
    return OneFormValue(f.gradient(point), NATURAL, point, nval)


def d_field(f: ScalarField, nval_at: Callable[[BundlePoint], np.ndarray] | None = None
            ) -> OneFormField:
    def at(p: BundlePoint) -> OneFormValue:
        return d_scalar(f, p, nval_at(p) if nval_at else None)
    return OneFormField(at)


def d_oneform(w: OneFormField, point: BundlePoint, step: float = FD_STEP) -> TwoFormValue:
    """Exterior derivative of a 1-form field, natural basis.

    comps[r, s] = d_r w_s - d_s w_r, with the natural partials taken by
    central differences of the field's natural components.
    """
    here = w.at(point).to_natural()
    m = here.comps.size
    jac = np.empty((m, m))
    coords = point.coords
    for r in range(m):
        plus = coords.copy()
        plus[r] += step
        minus = coords.copy()
        minus[r] -= step
        wp = w.at(BundlePoint.from_coords(plus)).to_natural().comps
        wm = w.at(BundlePoint.from_coords(minus)).to_natural().comps
        jac[r, :] = (wp - wm) / (2.0 * step)
    comps = jac - jac.T
    return TwoFormValue(comps, NATURAL, point, here.nval)


# --- the vertical derivation and differential --------------------------------

def i_P_oneform(w: OneFormValue) -> OneFormValue:
    """(i_P w)(X) = w(PX): flips the sign of the delta-y components."""
    adapted = w.to_adapted()
    n = adapted.comps.size // 2
    comps = adapted.comps.copy()
    comps[n:] = -comps[n:]
    out = replace(adapted, comps=comps)
    return out.to_natural() if w.basis == NATURAL else out


def i_P_twoform(w: TwoFormValue) -> TwoFormValue:
    """(i_P w)(X, Y) = w(PX, Y) + w(X, PY).

    Doubles the horizontal-horizontal block, negates twice the
    vertical-vertical block, and kills the mixed blocks.
    """
    adapted = w.to_adapted()
    n = adapted.comps.shape[0] // 2
    comps = np.zeros_like(adapted.comps)
    comps[:n, :n] = 2.0 * adapted.comps[:n, :n]
    comps[n:, n:] = -2.0 * adapted.comps[n:, n:]
    out = replace(adapted, comps=comps)
    return out.to_natural() if w.basis == NATURAL else out


def d_P_scalar(f: Expression, connection: Connection, point: BundlePoint,
               params: Mapping[str, float] | None = None) -> OneFormValue:
    """The P-twisted differential of a scalar, adapted components.

    For a scalar ``i_P f`` vanishes, so this is ``i_P(df)`` with components
    ``(delta f / delta x^i, -df/dy^i)`` on ``(dx^i, delta y^i)``.
    """
    n = connection.n
    _, grad = eval_value_grad(f, point, params)
    nval = connection.values(point, params)
    comps = np.concatenate([grad[:n] - nval @ grad[n:], -grad[n:]])
    return OneFormValue(comps, ADAPTED, point, nval)


def d_P_field(f: Expression, connection: Connection,
              params: Mapping[str, float] | None = None) -> OneFormField:
    return OneFormField(lambda p: d_P_scalar(f, connection, p, params))
