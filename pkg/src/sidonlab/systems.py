"""Walsh, Rademacher, tensor and counterexample orthonormal systems.

The counterexample (CE) system lives on ``cube(m1) x cube(n)`` weighted by

    Psi = (1 + L/n)^-1 (1 + (L/n^2) S^2),   S = r_1 + ... + r_n,   L = ln n

with ``phi_i = P (r_i - sqrt(L/n) sigma_i W_i)`` for ``i >= 1`` and
``phi_0 = P ((sqrt(L)/n) S + n^-1/2 sum sigma_i W_i)``, where
``P = (Psi (1 + L/n))^-1/2 = (1 + L S^2/n^2)^-1/2`` depends on ``S`` only.
The Walsh factor carries the first coordinate, the Rademacher factor the
second (fastest varying).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .measure_core import (
    ENUMERATION_CAP,
    EnumerationCapError,
    ProbSpace,
    SampledFunction,
    cube,
    inner,
    ksum,
    popcount,
    product_space,
    reweight,
    walsh_synthesis,
)

FLATNESS_LIMIT = 6.0


@dataclass(frozen=True, eq=False)
class OrthoSystem:
    """Ordered family of functions stored as an ``(n, point_count)`` array."""

    space: ProbSpace
    values: np.ndarray
    uniform_bound_M: float | None = None
    psi2_C: float | None = None
    label: str = ""
    orthonormal: bool = True

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.dtype.kind not in "fc":
            v = v.astype(float)
        if v.ndim != 2 or v.shape[1] != self.space.point_count:
            raise ValueError("values must have shape (n, point_count)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.uniform_bound_M is not None and self.sup_norms().max() > self.uniform_bound_M + 1e-9:
            raise ValueError("declared uniform bound M is exceeded")

    def __len__(self):
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)

    @property
    def functions(self) -> list[SampledFunction]:
        return [SampledFunction(self.space, row) for row in self.values]

    def __getitem__(self, j) -> SampledFunction:
        return SampledFunction(self.space, self.values[j])

    def sup_norms(self) -> np.ndarray:
        return np.abs(self.values[:, self.space.support]).max(axis=1)

    def combination(self, a) -> SampledFunction:
        return SampledFunction(self.space, np.asarray(a) @ self.values)

    def gram(self) -> np.ndarray:
        w = self.space.weights
        return (self.values * w) @ np.conj(self.values).T

    def subsystem(self, indices, label: str | None = None) -> "OrthoSystem":
        idx = list(indices)
        return replace(self, values=self.values[idx], label=label or f"{self.label}[sub]")

    def real_part(self) -> "OrthoSystem":
        return replace(self, values=self.values.real.copy(), orthonormal=False,
                       label=f"Re {self.label}")

    def imag_part(self) -> "OrthoSystem":
        return replace(self, values=self.values.imag.copy(), orthonormal=False,
                       label=f"Im {self.label}")


def walsh_values(m: int, indices) -> np.ndarray:
    """Rows ``W_i`` for the given Paley indices on ``cube(m)``."""
    idx = np.asarray(indices, dtype=np.uint64)
    pts = np.arange(2**m, dtype=np.uint64)
    parity = popcount(np.bitwise_and.outer(idx, pts)) & 1
    return 1.0 - 2.0 * parity


def walsh_function(m: int, i: int) -> SampledFunction:
    return SampledFunction(cube(m), walsh_values(m, [i])[0])


def walsh_system(m: int, n: int) -> OrthoSystem:
    """``W_1 ... W_n`` on ``cube(m)``; ``W_0 = 1`` is available via walsh_function."""
    if not 1 <= n < 2**m:
        raise ValueError(f"need 1 <= n < 2**m, got n={n}, m={m}")
    return OrthoSystem(cube(m), walsh_values(m, range(1, n + 1)), 1.0, None, f"walsh(m={m},n={n})")


def rademacher_system(n: int) -> OrthoSystem:
    if n < 1:
        raise ValueError("n must be >= 1")
    return OrthoSystem(cube(n), walsh_values(n, [1 << k for k in range(n)]), 1.0, None,
                       f"rademacher({n})")


# --- flat sign sequences -----------------------------------------------------


@dataclass(frozen=True)
class SignSequence:
    """Signs ``sigma_{first_index}, ...`` with the measured sup of the signed
    Walsh sum on ``cube(m)`` divided by ``sqrt(len(signs))``."""

    signs: np.ndarray
    first_index: int
    m: int
    flatness_bound: float
    source: str = ""

    def __post_init__(self):
        s = np.asarray(self.signs, dtype=float)
        if not np.all(np.abs(s) == 1):
            raise ValueError("signs must be +-1")
        object.__setattr__(self, "signs", s)

    @property
    def qualifies(self) -> bool:
        return self.flatness_bound <= FLATNESS_LIMIT

    def coefficient_vector(self) -> np.ndarray:
        c = np.zeros(2**self.m)
        c[self.first_index:self.first_index + len(self.signs)] = self.signs
        return c

    def slice(self, n: int, m: int | None = None, source: str | None = None) -> "SignSequence":
        """Signs for Walsh indices ``1..n`` (re-measured on ``cube(m)``)."""
        lo = 1 - self.first_index
        if lo < 0 or lo + n > len(self.signs):
            raise ValueError("sign sequence does not cover indices 1..n")
        return signs_for(self.signs[lo:lo + n], 1, m if m is not None else self.m,
                         source or self.source)


def signed_walsh_sup(signs, first_index: int, m: int) -> float:
    c = np.zeros(2**m)
    c[first_index:first_index + len(signs)] = signs
    return float(np.abs(walsh_synthesis(c)).max())


def signs_for(signs, first_index: int, m: int, source: str) -> SignSequence:
    signs = np.asarray(signs, dtype=float)
    sup = signed_walsh_sup(signs, first_index, m)
    return SignSequence(signs, first_index, m, sup / math.sqrt(len(signs)), source)


def bent_signs(m: int) -> SignSequence:
    """Signs of the Walsh spectrum of ``(-1)^(x1 x2 + x3 x4 + ...)``.

    The spectrum of this bent function is flat with modulus ``2^(-m/2)``, so
    ``sum_i sigma_i W_i = 2^(m/2) g`` has constant modulus ``2^(m/2)``.
    """
    if m < 2 or m % 2:
        raise ValueError("bent_signs needs an even m >= 2")
    pts = np.arange(2**m, dtype=np.uint64)
    quad = np.zeros(pts.shape, dtype=np.int64)
    for k in range(0, m, 2):
        quad += ((pts >> np.uint64(k)) & np.uint64(1)).astype(np.int64) * \
                ((pts >> np.uint64(k + 1)) & np.uint64(1)).astype(np.int64)
    g = 1.0 - 2.0 * (quad & 1)
    spectrum = walsh_synthesis(g)
    return signs_for(np.sign(spectrum), 0, m, f"bent(m={m})")


class SignSearchError(RuntimeError):
    def __init__(self, best_flatness: float, budget: int):
        self.best_flatness = best_flatness
        self.budget = budget
        super().__init__(f"no sign vector with flatness <= {FLATNESS_LIMIT} in {budget} draws; "
                         f"best flatness {best_flatness:.4f}")


def random_sign_search(m: int, n: int, budget: int, seed) -> SignSequence:
    if not 1 <= n < 2**m:
        raise ValueError("need 1 <= n < 2**m")
    rng = np.random.default_rng(seed)
    best = math.inf
    for _ in range(budget):
        s = rng.choice([-1.0, 1.0], size=n)
        seq = signs_for(s, 1, m, f"random(seed={seed})")
        if seq.qualifies:
            return seq
        best = min(best, seq.flatness_bound)
    raise SignSearchError(best, budget)


def smallest_cube_dim(n: int) -> int:
    """Smallest ``m1`` with ``2**m1 > n``."""
    return n.bit_length()


def rudin_shapiro_signs(k: int) -> SignSequence:
    """Walsh Rudin-Shapiro signs on all ``2^k`` indices.

    ``P_j = P_{j-1} + r_j Q_{j-1}``, ``Q_j = P_{j-1} - r_j Q_{j-1}`` keeps
    ``|P_j|^2 + |Q_j|^2 = 2^(j+1)`` pointwise, so ``sup |P_k| <= sqrt(2 * 2^k)``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    p = np.ones(1)
    q = np.ones(1)
    for _ in range(k):
        p, q = np.concatenate([p, q]), np.concatenate([p, -q])
    return signs_for(p, 0, k, f"rudin-shapiro(k={k})")


def _flat_full_signs(k: int) -> SignSequence:
    return bent_signs(k) if k % 2 == 0 and k >= 2 else rudin_shapiro_signs(k)


def _power_of_two(x: int) -> int | None:
    if x >= 2 and x & (x - 1) == 0:
        return x.bit_length() - 1
    return None


def ce_signs(n: int, seed=0, budget: int = 10_000) -> SignSequence:
    """Default flat signs for ``W_1..W_n`` on ``cube(smallest_cube_dim(n))``.

    ``n + 1 = 2^k``: a flat sequence on all ``2^k`` indices (bent for even k,
    Rudin-Shapiro for odd k) restricted to ``1..n``.
    ``n = 2^k``: the same on indices ``1..n-1`` plus ``sigma_n = +1`` on the
    extra coordinate ``W_n = r_{k+1}``; the sup grows by at most 2.
    Otherwise: seeded random search.
    """
    m1 = smallest_cube_dim(n)
    k = _power_of_two(n + 1)
    if k is not None:
        full = _flat_full_signs(k)
        return full.slice(n, m1, full.source)
    k = _power_of_two(n)
    if k is not None and k >= 2:
        full = _flat_full_signs(k)
        signs = np.concatenate([full.signs[1:], [1.0]])
        return signs_for(signs, 1, m1, f"{full.source}+1")
    return random_sign_search(m1, n, budget, seed)


# --- counterexample system ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class CESystem:
    """Counterexample system; ``backend`` is ``dense`` or ``structured``.

    The dense backend carries the reweighted product space and the value table
    of ``phi_0..phi_n``; the structured one keeps only ``(n, sigma, m1)``.
    """

    n: int
    m1: int
    L: float
    sigma: SignSequence
    backend: str
    space: ProbSpace | None = None
    values: np.ndarray | None = field(default=None, repr=False)

    @property
    def log_convention(self) -> str:
        return "natural"

    def system(self) -> OrthoSystem:
        if self.backend != "dense":
            raise ValueError("a value table needs the dense backend")
        return OrthoSystem(self.space, self.values, None, None, f"CE(n={self.n})")

    def prefactor(self, S) -> np.ndarray:
        S = np.asarray(S, dtype=float)
        return 1.0 / np.sqrt(1.0 + self.L * S**2 / self.n**2)

    def psi(self, S) -> np.ndarray:
        S = np.asarray(S, dtype=float)
        return (1.0 + self.L * S**2 / self.n**2) / (1.0 + self.L / self.n)

    def walsh_sum(self) -> np.ndarray:
        """``sum_i sigma_i W_i`` on the Walsh factor."""
        return walsh_synthesis(self.sigma.coefficient_vector())


def _psi_density_values(n: int, L: float, m1: int) -> tuple[np.ndarray, np.ndarray]:
    x2 = np.arange(2**n, dtype=np.uint64)
    S = (n - 2 * popcount(x2)).astype(float)
    psi = (1.0 + L * S**2 / n**2) / (1.0 + L / n)
    return S, psi


def build_counterexample(n: int, signs: SignSequence | None = None, backend: str = "dense",
                         seed=0, cap: int = ENUMERATION_CAP) -> CESystem:
    if n < 2:
        raise ValueError("n must be >= 2 (log n must be positive)")
    if backend not in ("dense", "structured"):
        raise ValueError(f"unknown backend {backend!r}")
    m1 = smallest_cube_dim(n)
    if signs is None:
        signs = ce_signs(n, seed)
    if signs.first_index != 1 or len(signs.signs) != n or signs.m != m1:
        signs = signs.slice(n, m1)
    if not signs.qualifies:
        raise ValueError(f"sign sequence flatness {signs.flatness_bound:.4f} exceeds {FLATNESS_LIMIT}")
    L = math.log(n)
    if backend == "structured":
        return CESystem(n, m1, L, signs, backend)

    if 2 ** (m1 + n) > cap:
        raise EnumerationCapError(2 ** (m1 + n), cap)
    S, psi = _psi_density_values(n, L, m1)
    omega2 = cube(n)
    base = product_space(cube(m1), omega2, cap)
    density = SampledFunction(base, np.tile(psi, 2**m1))
    space = reweight(base, density)

    W = walsh_values(m1, range(1, n + 1))                       # (n, 2^m1)
    R = walsh_values(n, [1 << k for k in range(n)])             # (n, 2^n)
    P = 1.0 / np.sqrt(1.0 + L * S**2 / n**2)                   # (2^n,)
    sw = signs.signs[:, None] * W
    coef = math.sqrt(L / n)
    vals = np.empty((n + 1, 2**m1, 2**n))
    vals[1:] = P * (R[:, None, :] - coef * sw[:, :, None])
    flat = walsh_synthesis(signs.coefficient_vector())         # (2^m1,)
    vals[0] = P * (math.sqrt(L) / n * S[None, :] + flat[:, None] / math.sqrt(n))
    return CESystem(n, m1, L, signs, backend, space, vals.reshape(n + 1, -1))


def ce_sup_norm(ce: CESystem, a) -> float:
    """Exact ``sup |sum_{i=0}^n a_i phi_i|`` over the CE space.

    For fixed ``S`` the prefactor is constant and the expression is
    ``c1 S + sum a_i r_i + beta(x1)``; with ``q`` coordinates equal to +1 the
    extremes of ``sum a_i r_i`` are sorted prefix sums, and ``beta`` is
    evaluated on the whole Walsh factor by one fast transform.
    """
    a = np.asarray(a)
    if a.shape != (ce.n + 1,):
        raise ValueError(f"expected {ce.n + 1} coefficients, got {a.shape}")
    if np.iscomplexobj(a):
        if np.any(a.imag != 0):
            raise ValueError("ce_sup_norm takes real coefficients")
        a = a.real
    a = a.astype(float)
    if ce.backend == "dense":
        return float(np.abs(a @ ce.values)[ce.space.support].max())
    return _structured_sup(ce, a)


def _structured_sup(ce: CESystem, a: np.ndarray) -> float:
    n, L = ce.n, ce.L
    a0, b = a[0], a[1:]
    c1 = a0 * math.sqrt(L) / n
    coeffs = np.zeros(2**ce.m1)
    coeffs[1:n + 1] = (a0 - math.sqrt(L) * b) * ce.sigma.signs / math.sqrt(n)
    beta = walsh_synthesis(coeffs)
    bmax, bmin = beta.max(), beta.min()

    desc = np.sort(b)[::-1]
    top = np.concatenate([[0.0], np.cumsum(desc)])              # top[k] = sum of k largest
    total = top[-1]
    q = np.arange(n + 1)
    tmax = 2.0 * top[q] - total
    tmin = total - 2.0 * top[n - q]
    S = 2.0 * q - n
    hi = c1 * S + tmax + bmax
    lo = c1 * S + tmin + bmin
    pref = 1.0 / np.sqrt(1.0 + L * S**2 / n**2)
    return float((pref * np.maximum(np.abs(hi), np.abs(lo))).max())


def ce_phi_sup_norms(ce: CESystem) -> np.ndarray:
    """``||phi_i||_inf`` for ``i = 0..n``; ``i >= 1`` in closed form.

    For ``i >= 1`` the Walsh and Rademacher factors are independent, so the
    two terms align and the sup is ``max_S P(S) (1 + sqrt(L/n))`` over sums
    ``S`` that leave ``r_i`` free, i.e. ``|S| < n``.
    """
    n, L = ce.n, ce.L
    out = np.empty(n + 1)
    e0 = np.zeros(n + 1)
    e0[0] = 1.0
    out[0] = ce_sup_norm(ce, e0)
    S = np.arange(-n + 2, n - 1, 2, dtype=float)
    best_inner = (1.0 / np.sqrt(1.0 + L * S**2 / n**2)).max() * (1 + math.sqrt(L / n))
    # |S| = n forces every r_i, still with the Walsh sign free
    edge = (1.0 / math.sqrt(1.0 + L)) * (1 + math.sqrt(L / n))
    out[1:] = max(best_inner, edge)
    return out


def decay_coefficients(n: int) -> np.ndarray:
    a = np.full(n + 1, 1.0 / n)
    a[0] = -1.0 / math.sqrt(math.log(n))
    return a


@dataclass(frozen=True)
class DecayRow:
    n: int
    log_n: float
    sup_norm: float
    l1_mass: float
    d_n: float
    backend: str
    sign_source: str
    flatness: float

    @property
    def ratio(self) -> float:
        return self.sup_norm / self.l1_mass


def ce_decay_row(ce: CESystem) -> DecayRow:
    a = decay_coefficients(ce.n)
    sup = ce_sup_norm(ce, a)
    return DecayRow(ce.n, ce.L, sup, ksum(np.abs(a)), math.sqrt(ce.L) * sup, ce.backend,
                    ce.sigma.source, ce.sigma.flatness_bound)


def ce_decay_curve(n_list, signs=None, backend: str = "structured", seed=0) -> list[DecayRow]:
    """``d(n) = sqrt(log n) * sup|sum a*_i phi_i|`` for each n.

    ``signs`` maps n to a SignSequence; missing entries use ce_signs.
    """
    signs = signs or {}
    rows = []
    for n in n_list:
        ce = build_counterexample(int(n), signs.get(n), backend, seed=seed)
        rows.append(ce_decay_row(ce))
    return rows


# --- tensor systems ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TensorSystem:
    """Lazy k-fold tensor ``Phi_j(x_1..x_k) = prod_s phi_j(x_s)``.

    Tuples are indexed with ``x_1`` slowest, matching repeated product_space.
    """

    base: OrthoSystem
    k: int

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def point_count(self) -> int:
        return self.base.space.point_count ** self.k

    @property
    def uniform_bound_M(self) -> float | None:
        M = self.base.uniform_bound_M
        return None if M is None else M**self.k

    def evaluate(self, j: int, tuples) -> np.ndarray:
        """Values of ``Phi_j`` at an ``(m, k)`` array of base point indices."""
        t = np.asarray(tuples, dtype=np.int64)
        return np.prod(self.base.values[j][t], axis=-1)

    def evaluate_combination(self, a, tuples) -> np.ndarray:
        t = np.asarray(tuples, dtype=np.int64)
        vals = self.base.values[:, t]                           # (n, m, k)
        return np.asarray(a) @ np.prod(vals, axis=-1)

    def inner(self, i: int, j: int) -> complex | float:
        return inner(self.base[i], self.base[j]) ** self.k

    def weights(self) -> np.ndarray:
        w = self.base.space.weights
        out = w
        for _ in range(self.k - 1):
            out = np.outer(out, w).ravel()
        return out

    def space(self, cap: int = ENUMERATION_CAP) -> ProbSpace:
        sp = self.base.space
        out = sp
        for _ in range(self.k - 1):
            out = product_space(out, sp, cap)
        return out

    def combination_values(self, a, cap: int = ENUMERATION_CAP) -> np.ndarray:
        """Dense values of ``sum_j a_j Phi_j`` over all tuples."""
        if self.point_count > cap:
            raise EnumerationCapError(self.point_count, cap)
        a = np.asarray(a)
        acc = None
        for j in range(self.n):
            if a[j] == 0:
                continue
            row = self.base.values[j]
            t = row
            for _ in range(self.k - 1):
                t = np.multiply.outer(t, row).ravel()
            acc = a[j] * t if acc is None else acc + a[j] * t
        if acc is None:
            acc = np.zeros(self.point_count)
        return acc

    def materialize(self, cap: int = ENUMERATION_CAP) -> OrthoSystem:
        if self.point_count > cap:
            raise EnumerationCapError(self.point_count, cap)
        rows = np.stack([self.combination_values(np.eye(self.n)[j], cap) for j in range(self.n)])
        M = self.uniform_bound_M
        return OrthoSystem(self.space(cap), rows, M, None, f"{self.base.label}^{self.k}",
                           self.base.orthonormal)


def tensor_system(sys: OrthoSystem, k: int) -> TensorSystem:
    return TensorSystem(sys, k)
