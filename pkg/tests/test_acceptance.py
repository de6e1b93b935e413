"""Acceptance criteria, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line (visible even without
``-s``) and then asserts.  Frozen reference values were computed once by the
oracle named next to them.
"""
import math
import time

import numpy as np
import pytest

from sidonlab.martingale import mds_extract, mds_invariants, riesz_mass_check
from sidonlab.measure_core import cube, uniform_space
from sidonlab.riesz_cert import (
    bessel_check,
    compare_averages,
    five_fold_lower_bound,
    l2_linfty_bridge,
    rademacher_sidon_estimate,
    rademacher_sidon_exhaustive,
    tensor_metric_check,
)
from sidonlab.sidon_solver import (
    psi2_probe,
    sidon_constant_bruteforce,
    sidon_constant_exact,
    witness_ratio,
)
from sidonlab.systems import (
    OrthoSystem,
    bent_signs,
    build_counterexample,
    ce_decay_row,
    ce_phi_sup_norms,
    ce_sup_norm,
    decay_coefficients,
    rademacher_system,
    signed_walsh_sup,
    tensor_system,
    walsh_system,
    walsh_values,
)

# frozen DERIVED references (CE n = 10, seed 0)
RATIO_REF = 0.9397647262509858        # compare_averages, 10^4 samples, seed 0
C_REF = 1.6602499234929793            # psi2_probe, 16 probes, seed 0
M_REF = 2.7112017689137606            # max sup norm of the CE(10) functions


@pytest.fixture
def report(capsys):
    def emit(num, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {detail}")
        assert ok, detail
    return emit


def random_real_system(rng, N=8, n=4):
    q, _ = np.linalg.qr(rng.standard_normal((N, N)))
    return OrthoSystem(uniform_space(N), q[:, :n].T * math.sqrt(N))


def test_01_ce_orthonormality(report):
    t0 = time.perf_counter()
    worst_off = worst_diag = 0.0
    for n in (4, 8, 12):
        G = build_counterexample(n, backend="dense").system().gram()
        worst_off = max(worst_off, float(np.abs(G - np.diag(np.diag(G))).max()))
        worst_diag = max(worst_diag, float(np.abs(np.diag(G) - 1).max()))
    dt = time.perf_counter() - t0
    ok = worst_off <= 1e-9 and worst_diag <= 1e-9 and dt <= 30
    report(1, ok, f"max offdiag {worst_off:.2e}, max |diag-1| {worst_diag:.2e}, {dt:.1f}s")


def test_02_ce_uniform_bounds(report):
    t0 = time.perf_counter()
    phi_i, phi0_large, phi0_small = 0.0, 0.0, 0.0
    for n in (4, 8, 12):
        s = ce_phi_sup_norms(build_counterexample(n, backend="dense"))
        phi_i = max(phi_i, float(s[1:].max()))
        phi0_small = max(phi0_small, float(s[0]))
    for k in range(6, 19):
        s = ce_phi_sup_norms(build_counterexample(2**k, backend="structured"))
        phi_i = max(phi_i, float(s[1:].max()))
        phi0_large = max(phi0_large, float(s[0]))
    dt = time.perf_counter() - t0
    ok = phi_i <= 2 + 1e-12 and phi0_large <= 7 and dt <= 60
    report(2, ok, f"max |phi_i| {phi_i:.4f} <= 2, max |phi_0| (n>=64) {phi0_large:.4f} <= 7 "
                  f"(n<64 observed {phi0_small:.4f}), {dt:.1f}s")


def test_03_flat_polynomial(report):
    t0 = time.perf_counter()
    worst = 0.0
    for m in range(2, 17, 2):          # bent functions exist only for even m
        sig = bent_signs(m)
        sup = signed_walsh_sup(sig.signs, sig.first_index, m)
        worst = max(worst, abs(sup / 2 ** (m / 2) - 1))
        assert sup <= 6 * math.sqrt(2**m)
    dt = time.perf_counter() - t0
    report(3, worst <= 1e-9 and dt <= 5,
           f"bent sup = 2^(m/2) for even m in 2..16, max rel err {worst:.1e}, {dt:.2f}s")


def test_04_decay(report):
    t0 = time.perf_counter()
    rows = [ce_decay_row(build_counterexample(2**k, backend="structured")) for k in range(6, 19)]
    dmax = max(r.d_n for r in rows)
    a = decay_coefficients(8)
    agree = abs(ce_sup_norm(build_counterexample(8, backend="dense"), a)
                - ce_sup_norm(build_counterexample(8, backend="structured"), a))
    # monotonicity on the factor-4 sweep (one sign family throughout)
    sweep = [r for r in rows if r.n in [4**j for j in range(3, 10)]]
    ratios = [r.ratio for r in sweep]
    rise = max(b - a_ for a_, b in zip(ratios, ratios[1:]))
    dt = time.perf_counter() - t0
    ok = dmax <= 10 and agree <= 1e-9 and rise <= 1e-9 and dt <= 120
    report(4, ok, f"max d(n) {dmax:.4f} <= 10 over n=2^6..2^18, backend diff {agree:.1e}, "
                  f"ratio max rise {rise:.2e} on n=4^3..4^9, {dt:.1f}s")


def test_05_grid_check(report):
    t0 = time.perf_counter()
    n = np.geomspace(10, 1e6, 51)[1:]
    p = np.geomspace(10, 1e6, 51)[1:]
    N, P = np.meshgrid(n, p, indexing="ij")
    slack = np.sqrt(P) - np.sqrt(np.log(N)) * N ** (-1 / P)
    dt = time.perf_counter() - t0
    report(5, slack.min() >= 0 and dt <= 1,
           f"min sqrt(p) - sqrt(log n) n^(-1/p) = {slack.min():.4f} on 50x50 grid, {dt:.3f}s")


def test_06_mds_invariants(report):
    t0 = time.perf_counter()
    r = rademacher_system(6)
    m = mds_extract(r, 0.1)
    rad_ok = sorted(m.selected_order) == list(range(6)) and max(m.achieved_errors) == 0
    ce = build_counterexample(10).system()
    ce = ce if ce.is_real else ce.real_part()
    mc = mds_extract(ce, 0.25)
    inv = mds_invariants(mc, ce)
    dt = time.perf_counter() - t0
    ok = (rad_ok and inv["max_atom_mean"] <= 1e-10 and inv["max_l1_error"] <= 0.25
          and inv["atom_growth_ok"] and dt <= 60)
    report(6, ok, f"rademacher(6) full/zero-error {rad_ok}; CE(10): atom mean "
                  f"{inv['max_atom_mean']:.1e}, L1 err {inv['max_l1_error']:.4f}, "
                  f"growth {inv['atom_growth_ok']}, {dt:.1f}s")


def test_07_riesz_mass(report):
    ce = build_counterexample(10).system()
    m = mds_extract(ce, 0.25)
    C = max(m.bound_C, m.theta_sup)
    out = riesz_mass_check(m, C, 20, 0)
    report(7, out["passed"], f"20 sign vectors: max |mass-1| {out['max_deviation']:.1e}, "
                             f"min integrand {out['min_integrand']:.4f}")


def test_08_bessel(report):
    ce = build_counterexample(10).system()
    m = mds_extract(ce, 0.25)
    C = max(m.bound_C, m.theta_sup)
    T = m.thetas[:12]
    rng = np.random.default_rng(0)
    fs = list(ce.values) + [rng.uniform(-C, C, ce.values.shape[1]) for _ in range(10)]
    vals = [bessel_check(T, f, C, ce.space.weights).value for f in fs]
    worst = max(vals)
    report(8, worst <= 1 + 1e-10, f"|A| = {len(T)}, max Bessel sum {worst:.2e} over {len(fs)} f")


def test_09_certificate_soundness(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    violations, checked = 0, 0
    for _ in range(20):
        s = random_real_system(rng)
        C = float(s.sup_norms().max())
        ts = tensor_system(s, 5)
        for _ in range(5):
            a = rng.standard_normal(4)
            cert = five_fold_lower_bound(s, a, min(0.5, C / 2), C=C)
            sup = float(np.abs(ts.combination_values(a)).max())
            violations += cert.certified_lower > sup + 1e-12
            checked += 1
    dt = time.perf_counter() - t0
    report(9, violations == 0 and dt <= 120,
           f"{checked} certificates on 32768-tuple oracle, {violations} violations, {dt:.1f}s")


def test_10_exact_sidon(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    bad = 0
    for i in range(20):
        s = random_real_system(rng, 8, 2 + i % 4)
        ex = sidon_constant_exact(s).gamma_exact
        bf = sidon_constant_bruteforce(s, 0.01)
        bad += not (ex - 1e-9 <= bf.gamma_upper <= ex + bf.grid_modulus)
    w4 = OrthoSystem(cube(2), walsh_values(2, range(4)), 1.0)
    g4 = sidon_constant_exact(w4).gamma_exact
    wit = witness_ratio(w4, np.array([1, 1, 1, -1]) / 4)
    g2 = sidon_constant_exact(rademacher_system(2)).gamma_exact
    dt = time.perf_counter() - t0
    ok = bad == 0 and g4 <= 0.5 + 1e-9 and abs(wit - 0.5) <= 1e-12 and abs(g2 - 1) <= 1e-9
    report(10, ok, f"{bad}/20 grid mismatches; gamma(1,r1,r2,r1r2) {g4:.6f} witness sup {wit}; "
                   f"gamma(r1,r2) {g2:.6f}, {dt:.1f}s")


def test_11_bridge(report):
    ce = build_counterexample(8).system()
    rng = np.random.default_rng(11)
    slack = min(float(np.subtract(*l2_linfty_bridge(ce, rng.standard_normal(ce.n))[::-1]))
                for _ in range(50))
    report(11, slack >= -1e-10, f"min rhs - lhs over 50 lambda: {slack:.4f}")


def test_12_rademacher_sidon(report):
    r = rademacher_system(8)
    rep = rademacher_sidon_estimate(r, np.arange(1, 9), 1000, 0)
    w = walsh_system(2, 3)
    est = rademacher_sidon_estimate(w, np.ones(3), 1000, 0).system_average
    ex = rademacher_sidon_exhaustive(w, np.ones(3))
    ok = rep.system_average == 1.0 and rep.standard_errors["system"] == 0 and abs(est - ex) <= 1e-12
    report(12, ok, f"rademacher(8) avg {rep.system_average} se {rep.standard_errors['system']}; "
                   f"W1..W3 est {est:.12f} vs exhaustive {ex:.12f}")


def test_13_rad_majorization(report):
    ce = build_counterexample(10).system()
    rep = compare_averages(ce, ce.values, 10_000, 0, gaussian=False)
    C = psi2_probe(ce, 16, 0)["psi2_lower"]
    M = float(ce.sup_norms().max())
    budget = C_REF * M_REF
    ok = (abs(rep.ratio - RATIO_REF) <= 3 * rep.ratio_se and rep.ratio < budget
          and abs(C - C_REF) <= 1e-9 and abs(M - M_REF) <= 1e-12)
    report(13, ok, f"ratio {rep.ratio:.6f} +- {rep.ratio_se:.6f} vs frozen {RATIO_REF:.6f}; "
                   f"budget C*M = {budget:.4f}")


def test_14_tensor_metric(report):
    ce = build_counterexample(10).system()
    out = tensor_metric_check(ce, 5, 10_000, 0)
    report(14, out["violations"] == 0,
           f"10^4 pairs at k=5: {out['violations']} violations of M^4 sqrt(5), "
           f"max ratio {out['max_ratio']:.4f}")
