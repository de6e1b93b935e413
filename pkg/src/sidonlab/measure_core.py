"""Finite probability spaces, sampled functions, exact norms and the FWHT.

Point ordering on ``cube(m)``: point index ``p`` in ``[0, 2**m)`` has bit
``k`` equal to the k-th coordinate, and the k-th Rademacher function is
``r_{k+1}(p) = (-1)**bit_k(p)``.  In a product space the right factor's
index varies fastest: ``p = i_left * |right| + i_right``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

ENUMERATION_CAP = 2**24
MASS_TOL = 1e-10


class EnumerationCapError(ValueError):
    """Raised when a dense operation would enumerate too many points."""

    def __init__(self, point_count: int, cap: int = ENUMERATION_CAP):
        self.point_count = point_count
        self.cap = cap
        super().__init__(
            f"dense enumeration of {point_count} points exceeds the cap of {cap}; "
            "use the structured backend (systems.build_counterexample(..., "
            "backend='structured') and systems.ce_sup_norm) instead"
        )


class SpaceMismatchError(ValueError):
    pass


def ksum(values) -> float:
    """Compensated (exactly rounded) sum of a real array."""
    return math.fsum(np.asarray(values, dtype=float).ravel())


def ksum_complex(values) -> complex:
    v = np.asarray(values)
    if np.iscomplexobj(v):
        return complex(ksum(v.real), ksum(v.imag))
    return ksum(v)


@dataclass(frozen=True, eq=False)
class ProbSpace:
    """Finite weighted sample space.

    ``structure`` is ``("cube", m)``, ``("product", left, right)`` or
    ``("generic",)``; ``reweighted`` marks spaces whose weights were changed
    by a density after construction.
    """

    weights: np.ndarray
    structure: tuple = ("generic",)
    reweighted: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if abs(ksum(w) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {ksum(w)!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def point_count(self) -> int:
        return int(self.weights.size)

    @property
    def is_uniform_cube(self) -> bool:
        return self.structure[0] == "cube" and not self.reweighted

    @property
    def cube_dim(self) -> int | None:
        return self.structure[1] if self.structure[0] == "cube" else None

    @property
    def support(self) -> np.ndarray:
        """Boolean mask of positive-weight points."""
        return self.weights > 0

    def decompose(self, index):
        """Split a product-space index into ``(i_left, i_right)``."""
        if self.structure[0] != "product":
            raise ValueError("not a product space")
        right = self.structure[2]
        return divmod(index, right.point_count)

    def same_as(self, other: "ProbSpace") -> bool:
        return self is other or (
            self.point_count == other.point_count
            and np.array_equal(self.weights, other.weights)
        )


def cube(m: int) -> ProbSpace:
    if m < 0:
        raise ValueError("cube dimension must be non-negative")
    if 2**m > ENUMERATION_CAP:
        raise EnumerationCapError(2**m)
    n = 2**m
    return ProbSpace(np.full(n, 1.0 / n), ("cube", m))


def uniform_space(point_count: int) -> ProbSpace:
    return ProbSpace(np.full(point_count, 1.0 / point_count), ("generic",))


def product_space(a: ProbSpace, b: ProbSpace, cap: int = ENUMERATION_CAP) -> ProbSpace:
    count = a.point_count * b.point_count
    if count > cap:
        raise EnumerationCapError(count, cap)
    w = np.outer(a.weights, b.weights).ravel()
    # renormalising by fsum only absorbs rounding; both factors already sum to 1
    w = w / ksum(w)
    return ProbSpace(w, ("product", a, b), reweighted=a.reweighted or b.reweighted)


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """A function on a finite space, stored as one value per point."""

    space: ProbSpace
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.dtype.kind not in "fc":
            v = v.astype(float)
        if v.shape != (self.space.point_count,):
            raise ValueError(
                f"expected {self.space.point_count} values, got shape {v.shape}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)

    def __mul__(self, c):
        if isinstance(c, SampledFunction):
            _check_same(self, c)
            return SampledFunction(self.space, self.values * c.values)
        return SampledFunction(self.space, self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "SampledFunction"):
        _check_same(self, other)
        return SampledFunction(self.space, self.values + other.values)

    def __sub__(self, other: "SampledFunction"):
        _check_same(self, other)
        return SampledFunction(self.space, self.values - other.values)

    def integral(self) -> complex | float:
        return ksum_complex(self.values * self.space.weights)


@dataclass(frozen=True)
class NormReport:
    p: float
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("norm must be non-negative")

    def __float__(self):
        return float(self.value)


def _check_same(f: SampledFunction, g: SampledFunction):
    if not f.space.same_as(g.space):
        raise SpaceMismatchError("functions live on different spaces")


def reweight(space: ProbSpace, density: SampledFunction, tol: float = MASS_TOL) -> ProbSpace:
    """Return the space with weights ``w * density``; the density must have mass 1."""
    if not density.space.same_as(space):
        raise SpaceMismatchError("density lives on a different space")
    d = np.asarray(density.values)
    if np.iscomplexobj(d):
        if np.any(np.abs(d.imag) > 0):
            raise ValueError("density must be real")
        d = d.real
    if np.any(d < 0):
        raise ValueError("density has negative values")
    w = space.weights * d
    mass = ksum(w)
    if abs(mass - 1.0) > tol:
        raise ValueError(f"density has mass {mass!r}, not 1 within {tol}")
    # only rounding residue is removed here; the mass check above is the contract
    w = w / mass
    return ProbSpace(w, space.structure, reweighted=True)


def inner(f: SampledFunction, g: SampledFunction) -> complex | float:
    """Weighted inner product ``sum f * conj(g) * w``."""
    _check_same(f, g)
    return ksum_complex(f.values * np.conj(g.values) * f.space.weights)


def lp_norm(f: SampledFunction, p: float) -> NormReport:
    if p < 1:
        raise ValueError("p must be >= 1")
    a = np.abs(f.values)
    w = f.space.weights
    if math.isinf(p):
        return NormReport(p, float(a[w > 0].max()))
    scale = a.max()
    if scale == 0:
        return NormReport(p, 0.0)
    # scaling avoids overflow of |f|**p for large p
    return NormReport(p, float(scale * ksum((a / scale) ** p * w) ** (1.0 / p)))


def psi2_norm(f: SampledFunction, tol: float = 1e-12) -> float:
    """Orlicz norm for ``psi2(x) = exp(x**2) - 1``: ``inf{t: E psi2(|f|/t) <= 1}``.

    The root lies in ``[||f||_2, ||f||_inf] / sqrt(ln 2)`` (Jensen at the lower
    end), and ``t -> E exp(|f|^2/t^2)`` is strictly decreasing, so bisection on
    the log-moment converges.
    """
    a = np.abs(f.values)
    w = f.space.weights
    keep = w > 0
    a, w = a[keep], w[keep]
    if a.size == 0:
        raise ValueError("empty support")
    if not np.any(a > 0):
        return 0.0
    logw = np.log(w)
    ln2 = math.log(2.0)

    def excess(t):
        return logsumexp((a / t) ** 2 + logw) - ln2

    lo = math.sqrt(ksum(a**2 * w) / ln2)
    hi = float(a.max()) / math.sqrt(ln2)
    if excess(lo) <= 0:
        return lo
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


def _butterfly(values: np.ndarray) -> np.ndarray:
    n = values.shape[-1]
    m = n.bit_length() - 1
    if n != 1 << m:
        raise ValueError("length must be a power of two")
    lead = values.shape[:-1]
    out = np.array(values, dtype=np.result_type(values, float), copy=True)
    h = 1
    while h < n:
        out = out.reshape(*lead, n // (2 * h), 2, h)
        a = out[..., 0, :].copy()
        b = out[..., 1, :]
        out[..., 0, :] += b
        out[..., 1, :] = a - b
        h *= 2
    return out.reshape(*lead, n)


def walsh_synthesis(coeffs) -> np.ndarray:
    """Evaluate ``sum_i c_i W_i`` at every point of the cube (unnormalised FWHT).

    Works along the last axis, so a stack of coefficient vectors is fine.
    """
    return _butterfly(np.asarray(coeffs))


def fwht(f: SampledFunction) -> np.ndarray:
    """Walsh coefficients ``c_i = <f, W_i>`` on a uniform cube (Paley indexing)."""
    if not f.space.is_uniform_cube:
        raise ValueError("fwht needs a uniformly weighted cube space")
    return _butterfly(f.values) / f.space.point_count


def ifwht(coeffs, space: ProbSpace | None = None) -> SampledFunction:
    c = np.asarray(coeffs)
    if space is None:
        space = cube(c.size.bit_length() - 1)
    return SampledFunction(space, walsh_synthesis(c))


def popcount(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    count = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        count += (x & np.uint64(1)).astype(np.int64)
        x = x >> np.uint64(1)
    return count
