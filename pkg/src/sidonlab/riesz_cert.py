"""Riesz-product certificates and average-comparison estimators.

Subset conventions: subsets of the selected index list ``A`` are bit masks,
bit ``p`` standing for ``A[p]``; ``nu_S = prod_{p in S} theta_{A[p]}`` and
``nu_0 = 1``.

Five-fold certificate.  With ``Theta_j(x_1..x_5) = prod_s theta_j(x_s)`` the
measure ``mu = prod_{j in A} (1 + delta alpha_j Theta_j)`` is non-negative once
``delta * max|theta|^5 <= 1`` and has total mass one because every ``nu_S``
with ``S`` non-empty integrates to zero (martingale differences).  Expanding
the product,

    int sum_i a_i Phi_i dmu = sum_i a_i sum_S delta^|S| alpha_S <nu_S, phi_i>^5,

and this pairing is at most ``||sum a_i Phi_i||_inf``.

Tail control.  For ``s * max|theta| <= 1`` and any signs ``e`` the product
``prod (1 + s e_j theta_j)`` is a probability density, so
``|sum_S s^|S| e_S <nu_S, f>| <= ||f||_inf``; averaging the square over ``e``
gives ``sum_S s^(2|S|) |<nu_S, f>|^2 <= ||f||_inf^2``.  Together with
``|<nu_S, phi>| <= T^|S| ||phi||_1`` (``T = max|theta|``) this bounds the
``|S| >= 2`` part of the pairing by ``(delta T^5)^2 sum_i |a_i| ||phi_i||_1^3
||phi_i||_inf^2``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .martingale import (
    MdsApprox,
    coefficient_select,
    mds_extract,
    mds_extract_blocked,
)
from .measure_core import ENUMERATION_CAP, EnumerationCapError, SampledFunction, ksum, psi2_norm
from .systems import OrthoSystem

FULL_EXPANSION_LIMIT = 20
_BLOCK_ELEMENTS = 2**21


# --- subset products -----------------------------------------------------------


@dataclass
class NuTable:
    """``values[r, i] = <nu_{masks[r]}, f_i>`` for subsets of ``positions``."""

    positions: list[int]
    masks: np.ndarray
    sizes: np.ndarray
    values: np.ndarray
    exact: bool

    def lookup(self, subset) -> np.ndarray:
        """Row for a subset given as system indices (members of ``positions``)."""
        mask = 0
        for j in subset:
            mask |= 1 << self.positions.index(j)
        hit = np.nonzero(self.masks == mask)[0]
        if hit.size == 0:
            raise KeyError(f"subset {sorted(subset)} not enumerated")
        return self.values[hit[0]]


def _as_rows(x) -> np.ndarray:
    x = np.asarray(x)
    return x[None, :] if x.ndim == 1 else x


def nu_inner_products(thetas, phis, weights, subset_limit: int | None = None,
                      positions=None) -> NuTable:
    """Weighted inner products of every subset product of ``thetas`` with each ``phi``.

    All ``2^|A|`` subsets are enumerated when ``|A| <= 20``; otherwise only
    subsets of size at most ``subset_limit``.
    """
    T = _as_rows(thetas)
    F = _as_rows(phis)
    w = np.asarray(weights, dtype=float)
    a = T.shape[0]
    if positions is None:
        positions = list(range(a))
    Fw = np.conj(F) * w                                         # (k, N)
    N = w.size

    if a <= FULL_EXPANSION_LIMIT and (subset_limit is None or subset_limit >= a):
        b = 0
        while b < a and 2 ** (b + 1) * N <= _BLOCK_ELEMENTS:
            b += 1
        low = np.ones((1, N), dtype=T.dtype)
        for p in range(b):
            low = np.concatenate([low, low * T[p]])
        out = np.empty((2**a, F.shape[0]), dtype=np.result_type(T, F))
        for high in range(2 ** (a - b)):
            h = np.ones(N, dtype=T.dtype)
            for q in range(a - b):
                if high >> q & 1:
                    h = h * T[b + q]
            start = high << b
            out[start:start + 2**b] = (low * h) @ Fw.T
        masks = np.arange(2**a, dtype=np.int64)
        sizes = np.array([bin(int(m)).count("1") for m in masks], dtype=np.int64)
        return NuTable(list(positions), masks, sizes, out, True)

    if subset_limit is None:
        raise EnumerationCapError(2**a, 2**FULL_EXPANSION_LIMIT)
    masks, rows = [], []
    for size in range(subset_limit + 1):
        for combo in itertools.combinations(range(a), size):
            prod = np.ones(N, dtype=T.dtype)
            for p in combo:
                prod = prod * T[p]
            masks.append(sum(1 << p for p in combo))
            rows.append(Fw @ prod)
    sizes = np.array([bin(m).count("1") for m in masks], dtype=np.int64)
    return NuTable(list(positions), np.array(masks, dtype=np.int64), sizes, np.array(rows), False)


@dataclass(frozen=True)
class BesselReport:
    value: float
    sup_sq: float
    passed_unit: bool
    passed_rigorous: bool


def bessel_check(thetas, f, C: float, weights=None, tol: float = 1e-10) -> BesselReport:
    """``sum_S C^(-4|S|) |<nu_S, f>|^2`` over all subsets.

    The sign-averaged Riesz product argument bounds this by ``||f||_inf^2``
    (``passed_rigorous``); ``passed_unit`` records the comparison with 1.
    """
    if isinstance(f, SampledFunction):
        weights = f.space.weights
        f = f.values
    T = _as_rows(thetas)
    f = np.asarray(f)
    if weights is None:
        raise ValueError("weights are required for raw arrays")
    w = np.asarray(weights, dtype=float)
    supp = w > 0
    if T.size and np.abs(T[:, supp]).max() > C + 1e-12:
        raise ValueError("theta exceeds the bound C")
    fsup = float(np.abs(f[supp]).max())
    if fsup > C + 1e-12:
        raise ValueError("f exceeds the bound C")
    if T.shape[0] > FULL_EXPANSION_LIMIT:
        raise EnumerationCapError(2 ** T.shape[0], 2**FULL_EXPANSION_LIMIT)
    table = nu_inner_products(T, f, w)
    terms = C ** (-4.0 * table.sizes) * np.abs(table.values[:, 0]) ** 2
    value = ksum(terms)
    return BesselReport(value, fsup**2, value <= 1 + tol, value <= fsup**2 + tol)


# --- five-fold certificate -------------------------------------------------------


@dataclass
class RieszCertificate:
    index_set_A: list[int]
    alpha: list[int]
    delta: float
    epsilon: float
    bound_C: float
    linear_terms: list[float]
    pairing: float
    tail_bound: float
    certified_lower: float
    exact_expansion: bool
    mu_mass: float
    theta_sup: float
    coefficients: list[float]
    seed: int | None = None
    mds: MdsApprox | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "A": [int(j) for j in self.index_set_A],
            "alpha": [int(s) for s in self.alpha],
            "delta": self.delta,
            "epsilon": self.epsilon,
            "C": self.bound_C,
            "linear_terms": [float(x) for x in self.linear_terms],
            "pairing": self.pairing,
            "tail_bound": self.tail_bound,
            "certified_lower": self.certified_lower,
            "exact_expansion": self.exact_expansion,
            "mu_mass": self.mu_mass,
            "theta_sup": self.theta_sup,
            "coefficients": [float(x) for x in self.coefficients],
            "seed": self.seed,
        }


def default_delta(C: float, theta_sup: float) -> float:
    """Largest admissible product parameter: ``min(C^-8 / 2, theta_sup^-5)``."""
    d = 0.5 * C**-8
    if theta_sup > 0:
        d = min(d, theta_sup**-5)
    return d


def five_fold_lower_bound(sys: OrthoSystem, a, epsilon: float, delta: float | None = None,
                          C: float | None = None, seed: int | None = None,
                          max_steps="auto") -> RieszCertificate:
    """Certified lower bound for ``||sum a_i Phi_i||_inf`` on the 5-fold tensor."""
    if not sys.is_real:
        raise ValueError("the five-fold certificate handles real systems only")
    a = np.asarray(a, dtype=float)
    if a.shape != (sys.n,):
        raise ValueError("one coefficient per function is required")
    if C is None:
        C = float(sys.uniform_bound_M or sys.sup_norms().max())
    mds = mds_extract(sys, epsilon, max_steps=max_steps, C=C)
    A = list(mds.selected_order)
    T = mds.theta_sup
    if delta is None:
        delta = default_delta(C, T)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if delta > 0.5 * C**-8 * (1 + 1e-12):
        raise ValueError(f"delta {delta} too large: need delta <= C^-8/2 = {0.5 * C**-8}")
    if delta * T**5 > 1 + 1e-12:
        raise ValueError(f"delta {delta} too large: delta * theta_sup^5 = {delta * T**5} > 1")
    alpha = [1 if a[j] >= 0 else -1 for j in A]

    w = sys.space.weights
    F = np.vstack([np.ones(w.size), sys.values])               # row 0 gives int nu_S
    exact = len(A) <= FULL_EXPANSION_LIMIT
    table = nu_inner_products(mds.thetas, F, w, None if exact else 1, positions=A)
    sign = np.ones(table.masks.size)
    for p, s in enumerate(alpha):
        if s < 0:
            sign[(table.masks >> p) & 1 == 1] *= -1
    coef = sign * delta ** table.sizes.astype(float)
    per_subset = (table.values[:, 1:].real ** 5) @ a           # sum_i a_i <nu_S, phi_i>^5
    pairing = ksum(coef * per_subset)
    mu_mass = ksum(coef * table.values[:, 0].real ** 5)

    single = table.sizes == 1
    linear = [0.0] * len(A)
    for r in np.nonzero(single)[0]:
        p = int(table.masks[r]).bit_length() - 1
        linear[p] = float(coef[r] * per_subset[r])

    if exact:
        tail = 0.0
    else:
        l1 = np.abs(sys.values) @ w
        sup = sys.sup_norms()
        tail = (delta * T**5) ** 2 * ksum(np.abs(a) * l1**3 * sup**2)
    return RieszCertificate(A, alpha, float(delta), epsilon, float(C), linear, pairing, tail,
                            pairing - tail, exact, mu_mass, T, a.tolist(), seed, mds)


def riesz_density_values(mds: MdsApprox, alpha, delta: float, k: int = 5,
                         cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Dense values of ``prod_j (1 + delta alpha_j Theta_j)`` on the k-fold product (oracle use)."""
    N = mds.thetas.shape[1] if len(mds.selected_order) else mds.space.point_count
    if N**k > cap:
        raise EnumerationCapError(N**k, cap)
    out = np.ones(N**k)
    for s, th in zip(alpha, mds.thetas):
        t = th
        for _ in range(k - 1):
            t = np.multiply.outer(t, th).ravel()
        out *= 1.0 + delta * s * t
    return out


def verify_certificate(sys: OrthoSystem, cert: dict, tol: float = 1e-9) -> dict:
    """Rebuild a certificate from its stored parameters and compare."""
    redo = five_fold_lower_bound(sys, cert["coefficients"], cert["epsilon"], cert["delta"],
                                 cert["C"], cert.get("seed"))
    same_A = redo.index_set_A == list(cert["A"])
    same_alpha = redo.alpha == list(cert["alpha"])
    diff = abs(redo.certified_lower - cert["certified_lower"])
    return {
        "A_matches": same_A,
        "alpha_matches": same_alpha,
        "certified_lower": redo.certified_lower,
        "stored_certified_lower": cert["certified_lower"],
        "abs_diff": diff,
        "tolerance": tol,
        "passed": same_A and same_alpha and diff <= tol,
    }


# --- L2 / L-infinity bridge -----------------------------------------------------------


def l2_linfty_bridge(sys: OrthoSystem, lambdas, norm_tol: float = 1e-9) -> tuple[float, float]:
    """``(sum |lambda_j|, int sup_y |sum |lambda_j| conj(phi_j(x)) phi_j(y)| dx)``."""
    lam = np.abs(np.asarray(lambdas))
    w = sys.space.weights
    norms = np.sqrt(np.abs(sys.values) ** 2 @ w)
    if np.any(np.abs(norms - 1) > norm_tol):
        raise ValueError("functions must have unit L2 norm")
    supp = np.nonzero(w > 0)[0]
    right = sys.values[:, supp]                                 # (n, |supp|)
    left = np.conj(sys.values[:, supp]) * lam[:, None]
    chunk = max(1, _BLOCK_ELEMENTS // max(1, supp.size))
    inner_sup = np.empty(supp.size)
    for s in range(0, supp.size, chunk):
        block = left[:, s:s + chunk].T @ right                  # rows x, columns y
        inner_sup[s:s + chunk] = np.abs(block).max(axis=1)
    lhs = ksum(lam)
    rhs = ksum(inner_sup * w[supp])
    if lhs > rhs + 1e-10:
        raise AssertionError(f"bridge inequality fails: {lhs} > {rhs}")
    return lhs, rhs


# --- truncation ------------------------------------------------------------------


@dataclass
class Truncation:
    system: OrthoSystem
    level_y: float
    truncated_mass: list[float]
    truncated_probability: list[float]
    mass_bound: float
    probability_bound: float


def truncation_level(gamma_guess: float, C: float, constant: float = 1.0) -> float:
    if not 0 < gamma_guess < 1:
        raise ValueError("gamma_guess must lie in (0, 1)")
    return constant * C * math.sqrt(math.log(1 / gamma_guess))


def psi2_tail_bounds(y: float, C: float) -> tuple[float, float]:
    """Tail bounds implied by ``||phi||_psi2 <= C``.

    Markov on ``exp(phi^2/C^2)`` gives ``P[|phi| > y] <= 2 exp(-y^2/C^2)``;
    since ``t exp(-t^2/C^2)`` decreases for ``t >= C/sqrt 2`` the truncated L1
    mass is at most ``2 max_{t >= y} t exp(-t^2/C^2)``.
    """
    prob = 2 * math.exp(-(y / C) ** 2)
    t = max(y, C / math.sqrt(2))
    return 2 * t * math.exp(-(t / C) ** 2), prob


def truncate_system(sys: OrthoSystem, gamma_guess: float, C: float, constant: float = 1.0,
                    check_psi2: bool = True) -> Truncation:
    """Cut every function at ``y = constant * C * sqrt(log(1/gamma_guess))``."""
    y = truncation_level(gamma_guess, C, constant)
    if check_psi2:
        for j, f in enumerate(sys.functions):
            c = psi2_norm(f)
            if c > C * (1 + 1e-9):
                raise ValueError(f"function {j} has psi2 norm {c} > declared C = {C}")
    w = sys.space.weights
    a = np.abs(sys.values)
    over = a > y
    mass = [ksum(row * w) for row in np.where(over, a, 0.0)]
    prob = [ksum(row * w) for row in over.astype(float)]
    if not over.any():
        out = sys
    else:
        out = OrthoSystem(sys.space, np.where(over, 0.0, sys.values), y, sys.psi2_C,
                          f"{sys.label}|trunc", orthonormal=False)
    mb, pb = psi2_tail_bounds(y, C)
    return Truncation(out, y, mass, prob, mb, pb)


# --- Monte Carlo averages -------------------------------------------------------------


@dataclass
class AverageReport:
    system_average: float
    rademacher_average: float
    gaussian_average: float | None
    standard_errors: dict
    sample_count: int
    seed: int
    ratio: float | None = None
    ratio_se: float | None = None
    batches: int = 0
    exact: bool = False

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "system_average", "rademacher_average", "gaussian_average", "standard_errors",
            "sample_count", "seed", "ratio", "ratio_se", "batches", "exact")}


def _streams(seed: int, batches: int) -> list[np.random.Generator]:
    """Independent counter-based generators, one per batch."""
    return [np.random.Generator(np.random.Philox(s))
            for s in np.random.SeedSequence(seed).spawn(batches)]


def _batch_sizes(samples: int, batches: int) -> list[int]:
    base, extra = divmod(samples, batches)
    return [base + (b < extra) for b in range(batches)]


def _mean_se(batch_means, sizes) -> tuple[float, float]:
    m = np.asarray(batch_means)
    s = np.asarray(sizes, dtype=float)
    mean = ksum(m * s) / ksum(s)
    if m.size < 2:
        return mean, 0.0
    return mean, float(np.std(m, ddof=1) / math.sqrt(m.size))


def _sup_abs_rows(mat: np.ndarray) -> np.ndarray:
    return np.abs(mat).max(axis=1)


def rademacher_sidon_estimate(sys: OrthoSystem, lambdas, samples: int, seed: int,
                              batches: int = 20) -> AverageReport:
    """Monte-Carlo mean of ``sup_x |sum r_j lambda_j phi_j(x)| / sum |lambda_j|``."""
    if samples < 100:
        raise ValueError("samples must be >= 100")
    lam = np.asarray(lambdas)
    total = ksum(np.abs(lam))
    if total == 0:
        raise ValueError("zero coefficient vector")
    vals = sys.values[:, sys.space.support] * lam[:, None]
    means, sizes = [], _batch_sizes(samples, batches)
    for rng, size in zip(_streams(seed, batches), sizes):
        r = rng.choice(np.array([-1.0, 1.0]), size=(size, sys.n))
        means.append(ksum(_sup_abs_rows(r @ vals)) / size / total)
    mean, se = _mean_se(means, sizes)
    return AverageReport(mean, mean, None, {"system": se, "rademacher": se}, samples, seed,
                         batches=batches)


def rademacher_sidon_exhaustive(sys: OrthoSystem, lambdas) -> float:
    """Exact average over all ``2^n`` sign vectors (global sign symmetry halves the work)."""
    n = sys.n
    if n > 20:
        raise EnumerationCapError(2**n, 2**20)
    lam = np.asarray(lambdas)
    vals = sys.values[:, sys.space.support] * lam[:, None]
    idx = np.arange(2 ** (n - 1), dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n - 1)) & 1
    r = np.hstack([1.0 - 2.0 * bits, np.ones((idx.size, 1))])
    return ksum(_sup_abs_rows(r @ vals)) / idx.size / ksum(np.abs(lam))


def compare_averages(sys: OrthoSystem, vectors, samples: int, seed: int, gaussian: bool = True,
                     batches: int = 20) -> AverageReport:
    """Averages of ``||sum c_j x_j||_inf`` for ``c = phi(omega)``, Rademacher and complex Gaussian.

    ``vectors`` is an ``(n, K)`` array: ``x_j`` sampled on an auxiliary
    K-point space with the sup norm.
    """
    X = np.asarray(vectors)
    if X.ndim != 2 or X.shape[0] != sys.n:
        raise ValueError(f"vectors must have shape ({sys.n}, K)")
    w = sys.space.weights
    sizes = _batch_sizes(samples, batches)
    sys_m, rad_m, gau_m = [], [], []
    for rng, size in zip(_streams(seed, batches), sizes):
        omega = rng.choice(w.size, size=size, p=w)
        sys_m.append(ksum(_sup_abs_rows(sys.values[:, omega].T @ X)) / size)
        r = rng.choice(np.array([-1.0, 1.0]), size=(size, sys.n))
        rad_m.append(ksum(_sup_abs_rows(r @ X)) / size)
        if gaussian:
            g = (rng.standard_normal((size, sys.n)) + 1j * rng.standard_normal((size, sys.n)))
            gau_m.append(ksum(_sup_abs_rows((g / math.sqrt(2)) @ X)) / size)
    s, s_se = _mean_se(sys_m, sizes)
    r, r_se = _mean_se(rad_m, sizes)
    ses = {"system": s_se, "rademacher": r_se}
    g_mean = None
    if gaussian:
        g_mean, ses["gaussian"] = _mean_se(gau_m, sizes)
    ratio = s / r if r > 0 else None
    ratio_se = None
    if ratio is not None:
        ratio_se = ratio * math.sqrt((s_se / s) ** 2 + (r_se / r) ** 2) if s > 0 else 0.0
    return AverageReport(s, r, g_mean, ses, samples, seed, ratio, ratio_se, batches)


# --- tensor metric --------------------------------------------------------------------


def tensor_metric_check(sys: OrthoSystem, k: int, sample_pairs: int, seed: int,
                        M: float | None = None, include_equal: bool = True) -> dict:
    """Sampled check of the k-fold product Lipschitz estimate.

    Squared form: ``sum_i |a_i|^2 |prod phi_i(x_s) - prod phi_i(x'_s)|^2
    <= M^(2(k-1)) k sum_s sum_i |a_i|^2 |phi_i(x_s) - phi_i(x'_s)|^2``
    (telescoping, then Cauchy-Schwarz over the k terms).  ``display_ratio``
    measures the same pairs against ``sqrt(k)`` alone.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if M is None:
        M = sys.uniform_bound_M if sys.uniform_bound_M is not None else float(sys.sup_norms().max())
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    w = sys.space.weights
    x = rng.choice(w.size, size=(sample_pairs, k), p=w)
    xp = rng.choice(w.size, size=(sample_pairs, k), p=w)
    if include_equal and sample_pairs:
        xp[0] = x[0]
    a = rng.standard_normal((sample_pairs, sys.n))
    a2 = a**2
    V = sys.values
    px = np.prod(V[:, x], axis=-1).T                            # (P, n)
    pxp = np.prod(V[:, xp], axis=-1).T
    lhs = np.sqrt(np.sum(a2 * np.abs(px - pxp) ** 2, axis=1))
    diff = np.abs(V[:, x] - V[:, xp]) ** 2                      # (n, P, k)
    base = np.sqrt(np.sum(a2 * diff.sum(axis=-1).T, axis=1))
    const = M ** (k - 1) * math.sqrt(k)
    rhs = const * base
    tol = 1e-12 * np.maximum(1.0, rhs)
    violations = int(np.sum(lhs > rhs + tol))
    nz = base > 0
    ratio = float((lhs[nz] / rhs[nz]).max()) if nz.any() else 0.0
    display = float((lhs[nz] / (math.sqrt(k) * base[nz])).max()) if nz.any() else 0.0
    zero_ok = bool(np.all(lhs[~nz] <= 1e-12))
    return {
        "k": k,
        "M": float(M),
        "constant": const,
        "sample_pairs": sample_pairs,
        "violations": violations,
        "max_ratio": ratio,
        "display_ratio": display,
        "display_constant_exceeded": display > 1 + 1e-12,
        "zero_pairs_ok": zero_ok,
        "passed": violations == 0 and zero_ok,
    }


# --- end-to-end pipeline ------------------------------------------------------------


def _norm_average(values: np.ndarray, coeffs: np.ndarray, X: np.ndarray, w: np.ndarray) -> float:
    """``int ||sum_j coeffs_j f_j(x) X_j||_inf dx`` evaluated exactly over the space."""
    Y = (values * coeffs[:, None]).T                            # (N, n)
    supp = np.nonzero(w > 0)[0]
    chunk = max(1, _BLOCK_ELEMENTS // max(1, X.shape[1]))
    parts = []
    for s in range(0, supp.size, chunk):
        rows = supp[s:s + chunk]
        parts.append(_sup_abs_rows(Y[rows] @ X) * w[rows])
    acc = ksum(np.concatenate(parts)) if parts else 0.0
    return acc


def _rademacher_norm_average(coeffs: np.ndarray, X: np.ndarray, samples: int, seed: int,
                             exhaustive_limit: int = 16) -> tuple[float, bool]:
    n = coeffs.size
    Y = X * coeffs[:, None]
    if n <= exhaustive_limit:
        idx = np.arange(2 ** max(n - 1, 0), dtype=np.int64)
        bits = (idx[:, None] >> np.arange(max(n - 1, 0))) & 1
        r = np.hstack([1.0 - 2.0 * bits, np.ones((idx.size, 1))])
        return ksum(_sup_abs_rows(r @ Y)) / idx.size, True
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    r = rng.choice(np.array([-1.0, 1.0]), size=(samples, n))
    return ksum(_sup_abs_rows(r @ Y)) / samples, False


def prop_main_pipeline(sys: OrthoSystem, lambdas, vectors, epsilon: float, C: float | None = None,
                       growth_R: float = 12.0, gamma_guess: float | None = None,
                       samples: int = 4096, seed: int = 0) -> dict:
    """Bucket, extract a blocked MDS and evaluate the three averages it links.

    Phases of complex coefficients are moved into the vectors, so the
    coefficients become ``|lambda_j|``.  A complex system is split into real
    and imaginary halves and the half with the larger average is kept.
    """
    lam = np.asarray(lambdas)
    X = np.asarray(vectors)
    if X.ndim != 2 or X.shape[0] != sys.n:
        raise ValueError(f"vectors must have shape ({sys.n}, K)")
    phase = np.where(np.abs(lam) > 0, lam / np.where(lam == 0, 1, np.abs(lam)), 1)
    X = X * phase[:, None]
    lam = np.abs(lam)
    w = sys.space.weights

    half = "real"
    work = sys
    if not sys.is_real:
        re, im = sys.real_part(), sys.imag_part()
        a_re = _norm_average(re.values, lam, X, w)
        a_im = _norm_average(im.values, lam, X, w)
        work, half = (re, "real") if a_re >= a_im else (im, "imag")

    if C is None:
        C = float(work.uniform_bound_M or work.sup_norms().max())
    trunc = None
    if work.sup_norms().max() > C + 1e-12:
        if gamma_guess is None:
            raise ValueError("system exceeds C; give gamma_guess to truncate")
        t = truncate_system(work, gamma_guess, C, check_psi2=False)
        trunc = {"level_y": t.level_y, "max_truncated_mass": max(t.truncated_mass)}
        work = t.system
        C = max(C, t.level_y)

    selection = coefficient_select(lam, growth_R)
    mds = mds_extract_blocked(work, selection.blocks(), epsilon, C=C)
    chosen = np.array(mds.selected_order, dtype=int)
    Cm = max(C, mds.theta_sup)

    rad, rad_exact = _rademacher_norm_average(lam, X, samples, seed)
    xnorm = np.abs(X).max(axis=1)
    if chosen.size:
        riesz = _norm_average(mds.thetas, lam[chosen], X[chosen], w) / Cm
        slack = ksum(np.asarray(mds.achieved_errors) * lam[chosen] * xnorm[chosen])
        phi = (_norm_average(work.values[chosen], lam[chosen], X[chosen], w) - slack) / Cm
    else:
        riesz = phi = 0.0
    total = ksum(lam)
    return {
        "half": half,
        "bound_C": Cm,
        "theta_sup": mds.theta_sup,
        "truncation": trunc,
        "selection": {"parity": selection.parity, "chain": selection.chain,
                      "retained": selection.retained, "retained_mass": selection.retained_mass,
                      "mass_floor": selection.mass_floor},
        "mds": mds.to_dict(),
        "beta": _norm_average(work.values, lam, X, w) / total,
        "rademacher_side": rad,
        "rademacher_exact": rad_exact,
        "riesz_side": riesz,
        "phi_side": phi,
        "gamma": rad / total,
        "chain_holds": bool(rad >= riesz - 1e-9 and riesz >= phi - 1e-9),
    }
