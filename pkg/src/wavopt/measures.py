"""Weighted atom clouds and one-dimensional slice projections.

The optimal-transport layer works on empirical (discrete) probability
measures: finitely many support points with non-negative weights summing
to one.  Two representations are used:

* ``DiscreteMeasure`` holds points in R^d and is the input format for
  every sliced distance.
* ``OneDMeasure`` is the canonical one-dimensional form (sorted support,
  near-duplicate atoms merged, zero weights dropped) produced by
  projecting a ``DiscreteMeasure`` onto a slice.  Quantile-based
  Wasserstein computations are exact on this form.

A slice is described by a ``DefiningFunction``: either a linear
functional ``x -> <x, theta>`` with a unit direction, or an odd-degree
homogeneous polynomial ``x -> sum_{|alpha|=m} theta_alpha x^alpha`` with
unit-norm coefficient vector.  Odd degree keeps the family of level sets
well behaved (the map is sign-equivariant, ``beta(-x) = -beta(x)``), the
condition under which slicing of this kind yields a genuine distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

__all__ = [
    "DiscreteMeasure",
    "OneDMeasure",
    "DefiningFunction",
    "SliceParameterSet",
    "monomial_exponents",
    "num_monomials",
    "one_d_measure",
    "project",
]

# Atoms closer than this (absolute) are merged during canonicalization.
MERGE_TOL = 1e-12
# Weight vectors must sum to one within this tolerance.
WEIGHT_SUM_TOL = 1e-12


def _as_weights(weights, n: int) -> np.ndarray:
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"weights must have shape ({n},), got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if np.any(w < 0.0):
        raise ValueError("weights must be non-negative")
    if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise ValueError(f"weights must sum to 1 within {WEIGHT_SUM_TOL}, got {w.sum()!r}")
    return w


@dataclass(eq=False)
class DiscreteMeasure:
    """Empirical probability measure on R^d: atoms (n, d) and weights (n,)."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        self.atoms = np.asarray(self.atoms, dtype=float)
        if self.atoms.ndim == 1:
            self.atoms = self.atoms[:, None]
        if self.atoms.ndim != 2 or self.atoms.shape[0] == 0:
            raise ValueError("atoms must be a non-empty (n, d) array")
        if not np.all(np.isfinite(self.atoms)):
            raise ValueError("atoms must be finite")
        self.weights = _as_weights(self.weights, self.atoms.shape[0])

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @staticmethod
    def from_points(points, weights=None) -> "DiscreteMeasure":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        n = pts.shape[0]
        w = _as_weights(weights, n)
        return DiscreteMeasure(pts, w)


@dataclass(eq=False)
class OneDMeasure:
    """Canonical measure on R: sorted positions, merged atoms, positive weights."""

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.positions.ndim != 1 or self.positions.shape[0] == 0:
            raise ValueError("positions must be a non-empty 1-D array")
        if self.weights.shape != self.positions.shape:
            raise ValueError("positions and weights must have matching shape")
        if np.any(np.diff(self.positions) < 0):
            raise ValueError("positions must be sorted ascending (use one_d_measure)")
        if np.any(self.weights <= 0):
            raise ValueError("canonical weights must be strictly positive")
        if abs(self.weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError("weights must sum to 1")

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    def cumulative(self) -> np.ndarray:
        """Cumulative weights with the final entry pinned to exactly 1."""
        c = np.cumsum(self.weights)
        c[-1] = 1.0
        return c

    def quantile(self, u) -> np.ndarray:
        """Left-continuous generalized inverse CDF, F^{-1}(u) = inf{x : F(x) >= u}."""
        u = np.asarray(u, dtype=float)
        if np.any(u <= 0.0) or np.any(u > 1.0):
            raise ValueError("quantile levels must lie in (0, 1]")
        idx = np.searchsorted(self.cumulative(), u, side="left")
        return self.positions[idx]

    def mean(self) -> float:
        return float(self.positions @ self.weights)


def one_d_measure(positions, weights=None) -> OneDMeasure:
    """Canonicalize raw 1-D support: sort, merge within ``MERGE_TOL``, drop zeros.

    Merging accumulates weight onto the first atom of each near-duplicate
    run (positions within the run differ by at most ``MERGE_TOL``).
    """
    pos = np.asarray(positions, dtype=float).ravel()
    if pos.size == 0:
        raise ValueError("measure needs at least one atom")
    if not np.all(np.isfinite(pos)):
        raise ValueError("positions must be finite")
    w = _as_weights(weights, pos.size)

    order = np.argsort(pos, kind="stable")
    pos, w = pos[order], w[order]

    keep_pos: list[float] = [pos[0]]
    keep_w: list[float] = [w[0]]
    for p, wt in zip(pos[1:], w[1:]):
        if p - keep_pos[-1] <= MERGE_TOL:
            keep_w[-1] += wt
        else:
            keep_pos.append(p)
            keep_w.append(wt)
    out_p = np.asarray(keep_pos)
    out_w = np.asarray(keep_w)
    mask = out_w > 0.0
    if not mask.any():
        raise ValueError("all atoms have zero weight")
    out_p, out_w = out_p[mask], out_w[mask]
    out_w = out_w / out_w.sum()  # renormalize away the dropped mass (<= sum tol)
    return OneDMeasure(out_p, out_w)


# ---------------------------------------------------------------------------
# Defining functions (slices)
# ---------------------------------------------------------------------------


def monomial_exponents(degree: int, dim: int) -> np.ndarray:
    """Exponent rows alpha with |alpha| = degree, in a fixed deterministic order.

    Order: lexicographic over the sorted dimension multisets produced by
    ``itertools.combinations_with_replacement``; e.g. for dim=2, degree=3:
    x^3, x^2 y, x y^2, y^3.
    """
    if degree < 1 or dim < 1:
        raise ValueError("degree and dim must be positive")
    rows = []
    for combo in combinations_with_replacement(range(dim), degree):
        alpha = np.zeros(dim, dtype=int)
        for d in combo:
            alpha[d] += 1
        rows.append(alpha)
    return np.asarray(rows, dtype=int)


def num_monomials(degree: int, dim: int) -> int:
    """Number of monomials of total degree ``degree`` in ``dim`` variables."""
    return math.comb(degree + dim - 1, dim - 1)


@dataclass(eq=False)
class DefiningFunction:
    """A slice beta: R^d -> R, linear or odd-degree homogeneous polynomial.

    ``kind`` is "linear" (``coefficients`` is a unit direction of length d)
    or "poly" (``coefficients`` has unit norm, indexed by
    ``monomial_exponents(degree, dim)``).
    """

    kind: str
    dim: int
    coefficients: np.ndarray
    degree: int = 1
    _exponents: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self) -> None:
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("coefficients must be finite")
        if self.kind == "linear":
            if self.degree != 1:
                raise ValueError("linear defining function has degree 1")
            if self.coefficients.shape != (self.dim,):
                raise ValueError("linear slice needs a direction of length dim")
            self._exponents = np.eye(self.dim, dtype=int)
        elif self.kind == "poly":
            if self.degree % 2 == 0 or self.degree < 1:
                raise ValueError("polynomial slice degree must be odd and positive")
            expected = num_monomials(self.degree, self.dim)
            if self.coefficients.shape != (expected,):
                raise ValueError(
                    f"degree-{self.degree} slice in dim {self.dim} needs "
                    f"{expected} coefficients, got {self.coefficients.shape}"
                )
            self._exponents = monomial_exponents(self.degree, self.dim)
        else:
            raise ValueError(f"unknown defining-function kind {self.kind!r}")
        norm = float(np.linalg.norm(self.coefficients))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"coefficient vector must have unit norm, got {norm!r}")

    @staticmethod
    def linear(direction) -> "DefiningFunction":
        d = np.asarray(direction, dtype=float).ravel()
        return DefiningFunction("linear", d.size, d, degree=1)

    @staticmethod
    def polynomial(degree: int, coefficients, dim: int) -> "DefiningFunction":
        return DefiningFunction("poly", dim, np.asarray(coefficients, dtype=float).ravel(), degree=degree)

    @staticmethod
    def normalized(kind: str, dim: int, coefficients, degree: int = 1) -> "DefiningFunction":
        """Build a slice from raw coefficients, normalizing to unit norm.

        A numerically degenerate vector (norm < 1e-8) falls back to the
        canonical first basis vector so the result is always valid.
        """
        c = np.asarray(coefficients, dtype=float).ravel()
        norm = float(np.linalg.norm(c))
        if not np.all(np.isfinite(c)) or norm < 1e-8:
            c = np.zeros(c.shape)
            c[0] = 1.0
        else:
            c = c / norm
        # renormalize once more: x/||x|| can miss unit norm by ~1 ulp
        c = c / float(np.linalg.norm(c))
        if kind == "linear":
            return DefiningFunction.linear(c)
        return DefiningFunction.polynomial(degree, c, dim)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """beta(points): (n, d) -> (n,)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[1] != self.dim:
            raise ValueError(f"points have dim {pts.shape[1]}, slice expects {self.dim}")
        if self.kind == "linear":
            return pts @ self.coefficients
        monoms = np.prod(pts[:, None, :] ** self._exponents[None, :, :], axis=2)
        return monoms @ self.coefficients

    def gradient(self, points: np.ndarray) -> np.ndarray:
        """grad beta(points): (n, d) -> (n, d)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if self.kind == "linear":
            return np.broadcast_to(self.coefficients, pts.shape).copy()
        n = pts.shape[0]
        grad = np.zeros((n, self.dim))
        exps = self._exponents
        for j in range(self.dim):
            ej = exps[:, j]
            active = ej > 0
            if not active.any():
                continue
            lowered = exps[active].copy()
            lowered[:, j] -= 1
            monoms = np.prod(pts[:, None, :] ** lowered[None, :, :], axis=2)
            grad[:, j] = monoms @ (self.coefficients[active] * ej[active])
        return grad


@dataclass(eq=False)
class SliceParameterSet:
    """A finite family of slices with per-slice scalar offsets."""

    functions: list
    offsets: np.ndarray = None

    def __post_init__(self) -> None:
        if not self.functions:
            raise ValueError("slice set must be non-empty")
        for f in self.functions:
            if not isinstance(f, DefiningFunction):
                raise ValueError("functions must be DefiningFunction instances")
        if self.offsets is None:
            self.offsets = np.zeros(len(self.functions))
        else:
            self.offsets = np.asarray(self.offsets, dtype=float).ravel()
            if self.offsets.shape != (len(self.functions),):
                raise ValueError("need exactly one offset per slice")
            if not np.all(np.isfinite(self.offsets)):
                raise ValueError("offsets must be finite")

    def __len__(self) -> int:
        return len(self.functions)

    def __iter__(self):
        return iter(zip(self.functions, self.offsets))


def project(measure: DiscreteMeasure, f: DefiningFunction, offset: float = 0.0) -> OneDMeasure:
    """Push ``measure`` through the slice: positions beta(x) - offset, weights kept.

    The result is canonicalized (sorted, duplicates within ``MERGE_TOL``
    merged), so projecting is positively homogeneous in the atoms for
    homogeneous slices and exactly weight-preserving.
    """
    if measure.dim != f.dim:
        raise ValueError(f"measure dim {measure.dim} != slice dim {f.dim}")
    vals = f.evaluate(measure.atoms) - float(offset)
    return one_d_measure(vals, measure.weights)
