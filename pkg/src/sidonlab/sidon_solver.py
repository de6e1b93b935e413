"""Sidon constants, Lambda(p) and psi2 probes, proportional subsystems.

The Sidon constant of ``phi_1..phi_n`` is
``gamma = min_a ||sum a_j phi_j||_inf / ||a||_1``.  Writing ``B`` for the
matrix of values (rows = support points), ``1/gamma`` is the largest l1 norm
in the polytope ``{a : |B a| <= 1}``, i.e. the maximum over sign patterns
``e`` of the linear program ``max e.a`` on that polytope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from ._simplex import UnboundedLP, vertex_max
from .measure_core import SampledFunction, ksum, lp_norm, psi2_norm
from .systems import OrthoSystem

EXACT_MAX_N = 15
EXACT_MAX_POINTS = 4096
BRUTE_MAX_N_REAL = 6
BRUTE_MAX_N_COMPLEX = 4
LP_TOL = 1e-9


@dataclass
class SidonReport:
    gamma_upper: float
    gamma_exact: float | None
    method: str
    witness: list
    grid_modulus: float | None = None
    null_vector: list | None = None
    lp_count: int = 0
    indices: list[int] | None = None

    def to_dict(self) -> dict:
        return {
            "gamma_upper": self.gamma_upper,
            "gamma_exact": self.gamma_exact,
            "method": self.method,
            "witness": [_jsonable(x) for x in self.witness],
            "grid_modulus": self.grid_modulus,
            "null_vector": None if self.null_vector is None else [_jsonable(x) for x in self.null_vector],
            "lp_count": self.lp_count,
            "indices": self.indices,
        }


def _jsonable(x):
    x = complex(x)
    return x.real if x.imag == 0 else [x.real, x.imag]


def witness_ratio(sys: OrthoSystem, a) -> float:
    """``||sum a_j phi_j||_inf / ||a||_1`` evaluated on the support."""
    a = np.asarray(a)
    vals = a @ sys.values[:, sys.space.support]
    return float(np.abs(vals).max() / ksum(np.abs(a)))


def _value_rows(sys: OrthoSystem) -> np.ndarray:
    """Distinct support rows ``(phi_1(x), ..., phi_n(x))`` up to a global sign."""
    B = sys.values[:, sys.space.support].T
    if np.iscomplexobj(B):
        return np.unique(B, axis=0)
    # flip each row so its first non-zero entry is positive; |B a| <= 1 is unchanged
    nz = B != 0
    first = np.where(nz.any(axis=1), nz.argmax(axis=1), 0)
    sgn = np.sign(B[np.arange(B.shape[0]), first])
    sgn[sgn == 0] = 1
    return np.unique(B * sgn[:, None], axis=0)


# --- brute force over the l1 sphere ---------------------------------------------


def _bounded_tuples(total: int, parts: int) -> np.ndarray:
    """All non-negative integer vectors of length ``parts`` with sum ``<= total``."""
    out = np.zeros((1, 0), dtype=np.int16)
    sums = np.zeros(1, dtype=np.int64)
    for _ in range(parts):
        reps = total - sums + 1
        base = np.repeat(np.arange(out.shape[0]), reps)
        offs = np.arange(base.size) - np.repeat(np.cumsum(reps) - reps, reps)
        out = np.hstack([out[base], offs[:, None].astype(np.int16)])
        sums = sums[base] + offs
    return out


def _composition_chunks(total: int, parts: int, target: int = 200_000):
    """Integer vectors of length ``parts`` summing to ``total``, in chunks."""
    head = _bounded_tuples(total, parts - 1)
    last = total - head.sum(axis=1, dtype=np.int64)
    for s in range(0, head.shape[0], target):
        yield np.hstack([head[s:s + target], last[s:s + target, None].astype(np.int16)])


def sidon_constant_bruteforce(sys: OrthoSystem, grid_resolution: float = 0.01,
                              phase_count: int = 8) -> SidonReport:
    """Minimum of ``||B a||_inf`` over a grid on the l1 sphere.

    Magnitudes run over ``{k h : sum k = 1/h}`` and signs (or ``phase_count``
    phases) over every pattern with the last coordinate fixed.  Any point of
    the sphere is within l1 distance ``n h`` of a grid magnitude (plus
    ``pi / phase_count`` per coordinate for phases), so the grid value exceeds
    gamma by at most ``M n h`` (plus ``M n pi / phase_count``).
    """
    n = sys.n
    complex_case = not sys.is_real
    cap = BRUTE_MAX_N_COMPLEX if complex_case else BRUTE_MAX_N_REAL
    if n > cap:
        raise ValueError(f"brute force handles n <= {cap} here, got {n}")
    K = int(round(1 / grid_resolution))
    if K < 1 or abs(K * grid_resolution - 1) > 1e-9:
        raise ValueError("grid_resolution must be 1/K for an integer K")
    B = _value_rows(sys)                                        # (P, n)
    M = float(np.abs(B).max())
    if complex_case:
        ph = np.exp(2j * np.pi * np.arange(phase_count) / phase_count)
        units = ph
    else:
        units = np.array([1.0, -1.0])
    pats = np.array(np.meshgrid(*([units] * (n - 1) + [units[:1]]), indexing="ij")).reshape(n, -1).T
    # column (x, pattern) holds pattern * B[x]; point-major so the sup over x
    # is a running elementwise maximum over contiguous slices
    P, npat = B.shape[0], pats.shape[0]
    stacked = (B[:, None, :] * pats[None, :, :]).reshape(P * npat, n).T
    # the scan runs in single precision; the winner is re-evaluated in double below
    stacked = stacked.astype(np.complex64 if complex_case else np.float32)
    best, best_a = math.inf, None
    for chunk in _composition_chunks(K, n):
        Y = np.abs(chunk.astype(np.float32) @ stacked)
        vals = Y[:, :npat].copy()
        for x in range(1, P):
            np.maximum(vals, Y[:, x * npat:(x + 1) * npat], out=vals)
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        if vals[i, j] * (1.0 / K) < best:
            best = float(vals[i, j]) / K
            best_a = chunk[i].astype(float) / K * pats[j]
    modulus = M * n * grid_resolution
    if complex_case:
        modulus += M * n * math.pi / phase_count
    return SidonReport(witness_ratio(sys, best_a), None, "brute", list(best_a), modulus)


# --- exact LP -----------------------------------------------------------------------


def _pattern_lp(B: np.ndarray, eps: np.ndarray) -> tuple[float, np.ndarray]:
    """``max eps.a`` subject to ``|B a| <= 1``."""
    G = np.vstack([B, -B])
    res = vertex_max(eps, G, np.ones(G.shape[0]))
    return res.value, res.x


def _null_vector(B: np.ndarray, tol: float = 1e-10) -> np.ndarray | None:
    _, s, vt = np.linalg.svd(B, full_matrices=B.shape[0] < B.shape[1])
    rank = int(np.sum(s > tol * max(1.0, s[0] if s.size else 0.0)))
    if rank < B.shape[1]:
        v = vt[-1]
        return v / ksum(np.abs(v))
    return None


def _sign_patterns(n: int) -> np.ndarray:
    idx = np.arange(2 ** (n - 1), dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n - 1)) & 1
    return np.hstack([1.0 - 2.0 * bits, np.ones((idx.size, 1))])


def sidon_constant_exact(sys: OrthoSystem) -> SidonReport:
    """Exact Sidon constant of a real system by sign-pattern linear programs."""
    if not sys.is_real:
        raise ValueError("the exact solver handles real systems only")
    n = sys.n
    if n > EXACT_MAX_N:
        raise ValueError(f"exact solver needs n <= {EXACT_MAX_N}, got {n}")
    B = _value_rows(sys)
    if B.shape[0] > EXACT_MAX_POINTS:
        raise ValueError(f"{B.shape[0]} distinct points exceed {EXACT_MAX_POINTS}")
    null = _null_vector(B)
    if null is not None:
        return SidonReport(witness_ratio(sys, null), 0.0, "lp_exact", list(null),
                           null_vector=list(null))
    best, best_a, count = -math.inf, None, 0
    for eps in _sign_patterns(n):
        try:
            val, a = _pattern_lp(B, eps)
        except UnboundedLP:
            # cannot happen for full column rank; keep the report honest if it does
            null = _null_vector(B, 1e-6)
            return SidonReport(0.0, 0.0, "lp_exact", list(null if null is not None else []),
                               null_vector=None if null is None else list(null), lp_count=count)
        count += 1
        if val > best:
            best, best_a = val, a
    witness = best_a / ksum(np.abs(best_a))
    gamma = 1.0 / ksum(np.abs(best_a))
    return SidonReport(witness_ratio(sys, witness), gamma, "lp_exact", list(witness), lp_count=count)


def _highs_pattern(B: np.ndarray, eps: np.ndarray, start_rows: int = 128,
                   add_rows: int = 128) -> np.ndarray | None:
    """Minimise ``t`` with ``|B a| <= t`` and ``eps.a = 1`` (HiGHS).

    Constraint generation: solve on a working set of rows, then add the most
    violated rows until the solution is feasible for every row.  The final
    LP has the same optimum as the full one.
    """
    P, n = B.shape
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_eq = np.concatenate([eps, [0.0]])[None, :]
    bounds = [(None, None)] * n + [(0, None)]
    order = np.argsort(-np.abs(B) @ np.abs(eps), kind="stable")
    active = np.zeros(P, dtype=bool)
    active[order[:start_rows]] = True
    while True:
        rows = B[active]
        k = rows.shape[0]
        A_ub = np.block([[rows, -np.ones((k, 1))], [-rows, -np.ones((k, 1))]])
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(2 * k), A_eq=A_eq, b_eq=[1.0],
                      bounds=bounds, method="highs")
        if res.status != 0:
            return None
        a, t = res.x[:n], res.x[n]
        viol = np.abs(B @ a) - t * (1 + 1e-9) - 1e-12
        viol[active] = -np.inf
        bad = np.nonzero(viol > 0)[0]
        if bad.size == 0:
            return a
        worst = bad[np.argsort(-viol[bad], kind="stable")[:add_rows]]
        active[worst] = True


def sidon_constant_estimate(sys: OrthoSystem, patterns: int = 16, seed: int = 0) -> SidonReport:
    """Witness-backed upper estimate of gamma from a sample of sign patterns.

    Candidate patterns: all-plus, signs of the coefficient directions that
    are cheap to guess (alternating, random), each solved exactly by HiGHS.
    """
    if not sys.is_real:
        raise ValueError("the LP estimate handles real systems only")
    n = sys.n
    B = _value_rows(sys)
    null = _null_vector(B) if B.shape[0] >= n else None
    if null is not None:
        return SidonReport(witness_ratio(sys, null), None, "heuristic", list(null),
                           null_vector=list(null))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    cands = [np.ones(n), np.where(np.arange(n) % 2 == 0, 1.0, -1.0)]
    if 2 ** (n - 1) <= patterns:
        cands = list(_sign_patterns(n))
    else:
        while len(cands) < patterns:
            cands.append(rng.choice(np.array([-1.0, 1.0]), size=n))
    best, best_a = math.inf, None
    for eps in cands:
        a = _highs_pattern(B, eps)
        if a is None or not np.any(a):
            continue
        r = witness_ratio(sys, a)
        if r < best:
            best, best_a = r, a / ksum(np.abs(a))
    return SidonReport(best, None, "heuristic", list(best_a), lp_count=len(cands))


# --- probes --------------------------------------------------------------------------


@dataclass
class LambdaPReport:
    p: float
    mp_lower: float
    probe_count: int
    best_direction: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"p": self.p, "mp_lower": self.mp_lower, "probe_count": self.probe_count,
                "best_direction": [_jsonable(x) for x in self.best_direction]}


def _probe_directions(n: int, probes: int, seed: int) -> np.ndarray:
    """Basis vectors, the all-equal vector, then Gaussian and sign probes.

    Gaussian and sign probes come from separate substreams so a larger budget
    extends the list without changing its prefix.
    """
    gs, ss = np.random.SeedSequence(seed).spawn(2)
    g = np.random.Generator(np.random.Philox(gs)).standard_normal((probes, n))
    s = np.random.Generator(np.random.Philox(ss)).choice(np.array([-1.0, 1.0]), size=(probes, n))
    rows = [np.eye(n), np.ones((1, n))]
    for i in range(probes):
        rows.append(g[i:i + 1])
        rows.append(s[i:i + 1])
    return np.vstack(rows)


def _lp_ratio(sys: OrthoSystem, a: np.ndarray, p: float) -> float:
    f = SampledFunction(sys.space, a @ sys.values)
    return lp_norm(f, p).value / math.sqrt(ksum(np.abs(a) ** 2))


def lambda_p_probe(sys: OrthoSystem, p: float, probes: int = 32, seed: int = 0,
                   ascent_steps: int = 50) -> LambdaPReport:
    """Probe lower estimate of the Lambda(p) constant ``M_p``.

    For even integer p every probe is refined by the fixed-point ascent
    ``a <- grad ||B a||_p^p / ||grad||``, which never decreases the ratio
    because ``||.||_p^p`` is convex.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    dirs = _probe_directions(sys.n, probes, seed)
    even = float(p).is_integer() and int(p) % 2 == 0
    w = sys.space.weights
    V = sys.values
    best, best_a = -math.inf, None
    for a in dirs:
        a = a / math.sqrt(ksum(np.abs(a) ** 2))
        r = _lp_ratio(sys, a, p)
        if even:
            for _ in range(ascent_steps):
                f = a @ V
                grad = (np.abs(f) ** (p - 2) * f * w) @ np.conj(V).T
                norm = math.sqrt(ksum(np.abs(grad) ** 2))
                if norm == 0:
                    break
                cand = grad / norm
                if np.iscomplexobj(cand) and not np.iscomplexobj(V):
                    cand = cand.real
                rc = _lp_ratio(sys, cand, p)
                if rc <= r:
                    break
                a, r = cand, rc
        if r > best:
            best, best_a = r, a
    return LambdaPReport(float(p), best, dirs.shape[0], list(best_a))


def psi2_probe(sys: OrthoSystem, probes: int = 32, seed: int = 0) -> dict:
    """Probe lower estimate of the psi2 constant ``C``."""
    dirs = _probe_directions(sys.n, probes, seed)
    best, best_a = -math.inf, None
    for a in dirs:
        a = a / math.sqrt(ksum(np.abs(a) ** 2))
        v = psi2_norm(SampledFunction(sys.space, a @ sys.values))
        if v > best:
            best, best_a = v, a
    return {"psi2_lower": best, "probe_count": dirs.shape[0],
            "best_direction": [_jsonable(x) for x in best_a], "kind": "lower estimate"}


# --- proportional subsystem -----------------------------------------------------------


def _gamma(sys: OrthoSystem, idx: list[int], method: str, seed: int, patterns: int) -> SidonReport:
    sub = sys.subsystem(idx)
    if method == "exact":
        rep = sidon_constant_exact(sub)
    elif method == "estimate":
        rep = sidon_constant_estimate(sub, patterns, seed)
    else:
        raise ValueError(f"unknown method {method!r}")
    rep.indices = list(idx)
    return rep


def proportional_subsystem(sys: OrthoSystem, gamma_target: float, method: str = "exact",
                           seed: int = 0, patterns: int = 6) -> tuple[list[int], SidonReport]:
    """Greedily grow ``S`` keeping ``gamma(S) >= gamma_target``.

    At each round the index giving the largest ``gamma(S + j)`` is added
    (ties: lowest index); the run stops when no addition stays above target.
    """
    if not 0 < gamma_target < 1:
        raise ValueError("gamma_target must lie in (0, 1)")
    S: list[int] = []
    current = None
    remaining = list(range(sys.n))
    while remaining:
        best_j, best_rep, best_val = None, None, -math.inf
        for j in remaining:
            rep = _gamma(sys, sorted(S + [j]), method, seed, patterns)
            val = rep.gamma_exact if rep.gamma_exact is not None else rep.gamma_upper
            if val > best_val + 1e-12:
                best_j, best_rep, best_val = j, rep, val
        if best_val < gamma_target - 1e-12:
            break
        S = sorted(S + [best_j])
        remaining.remove(best_j)
        current = best_rep
    if current is None:
        # no singleton reaches the target; report the best one anyway
        reps = [_gamma(sys, [j], method, seed, patterns) for j in range(sys.n)]
        vals = [r.gamma_exact if r.gamma_exact is not None else r.gamma_upper for r in reps]
        j = int(np.argmax(vals))
        S, current = [j], reps[j]
    return S, current
