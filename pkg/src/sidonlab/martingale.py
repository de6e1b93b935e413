"""Greedy martingale-difference approximation of bounded real systems.

Each step picks the unselected function whose conditional expectation on the
current partition has the smallest L1 norm, subtracts that expectation,
snaps the result to a grid of spacing at most ``epsilon``, re-centres it on
every atom and refines the partition by its level sets.  The re-centring
makes the atom-wise means vanish to rounding, so Riesz products built from
the output integrate to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .measure_core import SampledFunction, ksum
from .systems import OrthoSystem


@dataclass(frozen=True, eq=False)
class PartitionAlgebra:
    """Labelled partition of the sample points into atoms ``0..atom_count-1``."""

    labels: np.ndarray
    atom_count: int

    @classmethod
    def trivial(cls, point_count: int) -> "PartitionAlgebra":
        return cls(np.zeros(point_count, dtype=np.int64), 1)

    @classmethod
    def discrete(cls, point_count: int) -> "PartitionAlgebra":
        return cls(np.arange(point_count, dtype=np.int64), point_count)

    @classmethod
    def from_labels(cls, labels) -> "PartitionAlgebra":
        _, inv = np.unique(np.asarray(labels), return_inverse=True)
        inv = inv.astype(np.int64).ravel()
        return cls(inv, int(inv.max()) + 1 if inv.size else 0)

    def refine(self, key) -> "PartitionAlgebra":
        """Split every atom by the values of ``key`` (integer level labels)."""
        key = np.asarray(key, dtype=np.int64)
        key = key - key.min()
        return PartitionAlgebra.from_labels(self.labels * (int(key.max()) + 1) + key)

    def atom_masses(self, weights) -> np.ndarray:
        return np.bincount(self.labels, weights=weights, minlength=self.atom_count)

    def atom_integrals(self, values, weights) -> np.ndarray:
        """``int_A f dmu`` for each atom; ``values`` may be a stack of rows."""
        v = np.atleast_2d(values)
        out = np.stack([np.bincount(self.labels, weights=row * weights, minlength=self.atom_count)
                        for row in v])
        return out if np.ndim(values) == 2 else out[0]

    def is_refined_by(self, finer: "PartitionAlgebra") -> bool:
        """True when every atom of ``finer`` sits inside one atom of ``self``."""
        pairs = np.unique(np.stack([finer.labels, self.labels]), axis=1)
        return pairs.shape[1] == finer.atom_count


def cond_expect(f: SampledFunction, g: PartitionAlgebra) -> SampledFunction:
    if g.labels.shape != (f.space.point_count,):
        raise ValueError("partition and function live on different spaces")
    w = f.space.weights
    return SampledFunction(f.space, _cond_expect_values(f.values, g, w))


def _cond_expect_values(values, g: PartitionAlgebra, w) -> np.ndarray:
    mass = g.atom_masses(w)
    sums = g.atom_integrals(values, w)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(mass > 0, sums / np.where(mass > 0, mass, 1.0), 0.0)
    return means[..., g.labels]


def cond_expect_l1(values, g: PartitionAlgebra, w) -> np.ndarray:
    """``||E[f | g]||_1 = sum_atoms |int_A f|`` for each row of ``values``."""
    return np.abs(g.atom_integrals(values, w)).sum(axis=-1)


def grid_size(epsilon: float, bound_C: float) -> int:
    """Number of grid values ``V = ceil(C/eps) + 1``."""
    return int(math.ceil(bound_C / epsilon - 1e-12)) + 1


def quantize_indices(values, epsilon: float, bound_C: float) -> tuple[np.ndarray, np.ndarray]:
    """Grid indices and grid of the nearest point of ``{-C, ..., C}``.

    The grid has ``V = ceil(C/eps) + 1`` equally spaced values, spacing at most
    ``2 eps``; ties go to the grid value of smaller modulus.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    v = np.asarray(values, dtype=float)
    if np.abs(v).max(initial=0.0) > bound_C + epsilon + 1e-12:
        raise ValueError("function exceeds bound_C + epsilon")
    K = grid_size(epsilon, bound_C) - 1
    step = 2.0 * bound_C / K
    grid = -bound_C + step * np.arange(K + 1)
    grid[K // 2] = 0.0 if K % 2 == 0 else grid[K // 2]
    pos = (v + bound_C) / step
    lo = np.clip(np.floor(pos), 0, K).astype(np.int64)
    hi = np.clip(lo + 1, 0, K)
    dlo = np.abs(v - grid[lo])
    dhi = np.abs(v - grid[hi])
    tie = np.isclose(dlo, dhi, rtol=0, atol=1e-12)
    pick_hi = np.where(tie, np.abs(grid[hi]) < np.abs(grid[lo]), dhi < dlo)
    return np.where(pick_hi, hi, lo), grid


def quantize(f: SampledFunction, epsilon: float, bound_C: float) -> SampledFunction:
    idx, grid = quantize_indices(f.values, epsilon, bound_C)
    return SampledFunction(f.space, grid[idx])


def lemma_delta(epsilon: float, C: float) -> float:
    """Proportion ``C^-2 eps^2 / log(C/eps)`` with the universal constant set to 1."""
    return C**-2 * epsilon**2 / max(math.log(C / epsilon), 1.0)


@dataclass
class MdsApprox:
    """Selected indices, their martingale differences and step records."""

    selected_order: list[int]
    thetas: np.ndarray
    epsilon: float
    achieved_errors: list[float]
    level_count_V: int
    delta_achieved: float
    bound_C: float
    atom_counts: list[int]
    pre_step_labels: list[np.ndarray] = field(repr=False)
    stopping_cause: str = ""
    lemma_budget: int = 0
    block_sizes: list[int] | None = None
    block_targets: list[float] | None = None
    space: object = field(default=None, repr=False)

    @property
    def theta_sup(self) -> float:
        if not len(self.selected_order):
            return 0.0
        return float(np.abs(self.thetas[:, self.space.support]).max())

    def theta(self, j: int) -> SampledFunction:
        return SampledFunction(self.space, self.thetas[self.selected_order.index(j)])

    def to_dict(self) -> dict:
        d = {
            "selected_order": [int(j) for j in self.selected_order],
            "achieved_errors": [float(e) for e in self.achieved_errors],
            "atom_counts": [int(c) for c in self.atom_counts],
            "epsilon": self.epsilon,
            "bound_C": self.bound_C,
            "level_count_V": self.level_count_V,
            "delta_achieved": self.delta_achieved,
            "stopping_cause": self.stopping_cause,
            "lemma_budget": self.lemma_budget,
            "theta_sup": self.theta_sup,
        }
        if self.block_sizes is not None:
            d["block_sizes"] = self.block_sizes
            d["block_targets"] = self.block_targets
        return d


class _Greedy:
    """Shared state of one extraction: the algebra and the selections so far."""

    def __init__(self, sys: OrthoSystem, epsilon: float, C: float):
        self.values = sys.values
        self.w = sys.space.weights
        self.support = sys.space.support
        self.eps = epsilon
        self.C = C
        self.V = grid_size(epsilon / 2, C)
        self.algebra = PartitionAlgebra.trivial(sys.space.point_count)
        self.selected: list[int] = []
        self.thetas: list[np.ndarray] = []
        self.errors: list[float] = []
        self.atom_counts: list[int] = []
        self.pre_labels: list[np.ndarray] = []

    def _recentre(self, q: np.ndarray) -> np.ndarray:
        theta = q - _cond_expect_values(q, self.algebra, self.w)
        # second pass removes the rounding left by the first
        return theta - _cond_expect_values(theta, self.algebra, self.w)

    def step(self, candidates: list[int]) -> str | None:
        """Try to add one index from ``candidates``; return a stop cause or None."""
        if not candidates:
            return "exhausted"
        l1 = cond_expect_l1(self.values[candidates], self.algebra, self.w)
        best = int(np.argmin(l1))               # argmin returns the first, i.e. lowest index
        j = candidates[best]
        phi = self.values[j]
        raw = phi - _cond_expect_values(phi, self.algebra, self.w)
        raw = np.clip(raw, -self.C, self.C)
        idx, grid = quantize_indices(raw, self.eps / 2, self.C)
        theta = self._recentre(grid[idx])
        err = ksum(np.abs(phi - theta) * self.w)
        if err > self.eps:
            return "error_exceeds_epsilon"
        self.pre_labels.append(self.algebra.labels)
        self.algebra = self.algebra.refine(idx)
        self.selected.append(j)
        self.thetas.append(theta)
        self.errors.append(err)
        self.atom_counts.append(self.algebra.atom_count)
        return None

    def result(self, sys: OrthoSystem, cause: str, budget: int, **extra) -> MdsApprox:
        thetas = np.array(self.thetas) if self.thetas else np.zeros((0, sys.space.point_count))
        return MdsApprox(list(self.selected), thetas, self.eps, list(self.errors), self.V,
                         len(self.selected) / sys.n, self.C, list(self.atom_counts),
                         list(self.pre_labels), cause, budget, space=sys.space, **extra)


def _check_input(sys: OrthoSystem, epsilon: float, C: float | None) -> float:
    if not sys.is_real:
        raise ValueError("complex-valued system: split into real and imaginary parts first")
    if C is None:
        C = sys.uniform_bound_M if sys.uniform_bound_M is not None else float(sys.sup_norms().max())
    if sys.sup_norms().max() > C + 1e-9:
        raise ValueError("system exceeds the declared bound C")
    if not 0 < epsilon < C:
        raise ValueError("epsilon must lie in (0, C)")
    return float(C)


def _resolve_steps(max_steps, n: int, epsilon: float, C: float) -> tuple[int, int]:
    budget = int(math.floor(lemma_delta(epsilon, C) * n))
    if max_steps in (None, "auto"):
        return n, budget
    if max_steps == "lemma":
        return max(1, budget), budget
    return int(max_steps), budget


def mds_extract(sys: OrthoSystem, epsilon: float, max_steps="auto", C: float | None = None) -> MdsApprox:
    """Greedy martingale-difference approximation of a bounded real system.

    ``max_steps`` is an integer, ``"auto"`` (no cap beyond n) or ``"lemma"``
    (the proportional budget ``floor(lemma_delta(eps, C) * n)``, at least 1).
    The stopping cause is recorded on the result.
    """
    C = _check_input(sys, epsilon, C)
    steps, budget = _resolve_steps(max_steps, sys.n, epsilon, C)
    g = _Greedy(sys, epsilon, C)
    cause = "max_steps"
    while len(g.selected) < steps:
        remaining = [j for j in range(sys.n) if j not in g.selected]
        stop = g.step(remaining)
        if stop:
            cause = stop
            break
    if len(g.selected) == sys.n:
        cause = "exhausted"
    return g.result(sys, cause, budget)


@dataclass(frozen=True)
class BlockSpec:
    blocks: tuple[tuple[int, ...], ...]
    growth_R: float = 12.0

    def __post_init__(self):
        if self.growth_R <= 10:
            raise ValueError("growth_R must exceed 10")
        flat = [j for b in self.blocks for j in b]
        if len(flat) != len(set(flat)):
            raise ValueError("blocks overlap")
        for small, big in zip(self.blocks, self.blocks[1:]):
            if len(big) < self.growth_R * len(small):
                raise ValueError(f"growth condition violated: {len(big)} < {self.growth_R} * {len(small)}")


def mds_extract_blocked(sys: OrthoSystem, blocks: BlockSpec, epsilon: float,
                        C: float | None = None, max_steps="auto") -> MdsApprox:
    """Run the greedy selection block by block on one shared partition."""
    C = _check_input(sys, epsilon, C)
    delta = lemma_delta(epsilon, C)
    g = _Greedy(sys, epsilon, C)
    sizes, targets, causes = [], [], []
    for block in blocks.blocks:
        block = [int(j) for j in block]
        steps, _ = _resolve_steps(max_steps, len(block), epsilon, C)
        start = len(g.selected)
        cause = "max_steps"
        while len(g.selected) - start < steps:
            remaining = [j for j in block if j not in g.selected]
            stop = g.step(remaining)
            if stop:
                cause = stop
                break
        if len(g.selected) - start == len(block):
            cause = "exhausted"
        sizes.append(len(g.selected) - start)
        targets.append(delta * len(block))
        causes.append(cause)
    budget = int(math.floor(delta * sys.n))
    return g.result(sys, ";".join(causes), budget, block_sizes=sizes, block_targets=targets)


def mds_invariants(mds: MdsApprox, sys: OrthoSystem) -> dict:
    """Largest violations of the zero-mean, L1, bound and atom-growth properties."""
    w = sys.space.weights
    worst_mean = 0.0
    for labels, theta in zip(mds.pre_step_labels, mds.thetas):
        g = PartitionAlgebra(labels, int(labels.max()) + 1)
        worst_mean = max(worst_mean, float(np.abs(g.atom_integrals(theta, w)).max()))
    l1 = [ksum(np.abs(sys.values[j] - th) * w) for j, th in zip(mds.selected_order, mds.thetas)]
    growth_ok = all(c <= mds.level_count_V ** (t + 1) for t, c in enumerate(mds.atom_counts))
    return {
        "max_atom_mean": worst_mean,
        "max_l1_error": max(l1, default=0.0),
        "theta_sup": mds.theta_sup,
        "atom_growth_ok": growth_ok,
    }


# --- coefficient bucketing ---------------------------------------------------


@dataclass
class CoefficientSelection:
    parity: str
    buckets: dict[int, list[int]]
    chain: list[int]
    retained: list[int]
    retained_mass: float
    parity_mass: float
    growth_R: float

    @property
    def mass_floor(self) -> float:
        """Guaranteed retained mass ``(1 - R^-2) / (2 (2 - R^-2))``.

        Skipped buckets between chain members are smaller than ``R`` times the
        previous member and lie at least two levels lower, so their mass is
        below the member's mass divided by ``1 - R^-2``.
        """
        r2 = self.growth_R**-2
        return (1 - r2) / (2 * (2 - r2))

    def blocks(self) -> BlockSpec:
        return BlockSpec(tuple(tuple(self.buckets[k]) for k in self.chain), self.growth_R)


def _bucket_index(x: float, R: float) -> int:
    k = int(math.floor(-math.log(x) / math.log(R)))
    while R**-k < x:
        k -= 1
    while x <= R ** (-k - 1):
        k += 1
    return k


def coefficient_select(lambdas, growth_R: float = 12.0) -> CoefficientSelection:
    """Bucket coefficients by magnitude scale and keep a growing chain of buckets.

    Coefficients are normalised to unit l1 mass first.  Buckets are
    ``U_k = {j : R^-k >= |lambda_j| > R^-(k+1)}``; the parity class (even or
    odd k) carrying at least half the mass is kept, and from its smallest
    non-empty bucket on, the next bucket joins the chain only when it is at
    least ``R`` times larger than the last one.
    """
    if growth_R <= 10:
        raise ValueError("growth_R must exceed 10")
    mags = np.abs(np.asarray(lambdas))
    total = ksum(mags)
    if total == 0:
        raise ValueError("zero total mass")
    mags = mags / total
    buckets: dict[int, list[int]] = {}
    for j, x in enumerate(mags):
        if x > 0:
            buckets.setdefault(_bucket_index(float(x), growth_R), []).append(j)
    mass = {k: ksum(mags[idx]) for k, idx in buckets.items()}
    even = ksum([m for k, m in mass.items() if k % 2 == 0])
    odd = ksum([m for k, m in mass.items() if k % 2 == 1])
    parity = "even" if even >= odd else "odd"
    want = 0 if parity == "even" else 1
    ks = sorted(k for k in buckets if k % 2 == want)
    chain = [ks[0]]
    for k in ks[1:]:
        if len(buckets[k]) >= growth_R * len(buckets[chain[-1]]):
            chain.append(k)
    retained = sorted(j for k in chain for j in buckets[k])
    return CoefficientSelection(parity, {k: sorted(v) for k, v in sorted(buckets.items())}, chain,
                                retained, ksum(mags[retained]), max(even, odd), growth_R)


# --- Riesz products ----------------------------------------------------------


def riesz_mass_check(mds: MdsApprox, C: float, trials: int, seed, tol: float = 1e-9) -> dict:
    """Integrate ``prod_j (1 + eps_j theta_j / C)`` for random sign vectors."""
    if mds.theta_sup > C + 1e-12:
        raise ValueError(f"theta sup {mds.theta_sup} exceeds C = {C}")
    rng = np.random.default_rng(seed)
    w = mds.space.weights
    integrals, min_integrand = [], math.inf
    for _ in range(trials):
        signs = rng.choice([-1.0, 1.0], size=len(mds.selected_order))
        prod = np.ones(w.size)
        for s, th in zip(signs, mds.thetas):
            prod *= 1.0 + s * th / C
        integrals.append(ksum(prod * w))
        min_integrand = min(min_integrand, float(prod[w > 0].min()))
    worst = max((abs(x - 1.0) for x in integrals), default=0.0)
    return {
        "integrals": integrals,
        "max_deviation": worst,
        "min_integrand": min_integrand,
        "tolerance": tol,
        "passed": worst <= tol and min_integrand >= 0.0,
    }
