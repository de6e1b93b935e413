import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sidonlab.martingale import mds_extract
from sidonlab.measure_core import SampledFunction, cube, uniform_space
from sidonlab.riesz_cert import (
    bessel_check,
    compare_averages,
    five_fold_lower_bound,
    l2_linfty_bridge,
    nu_inner_products,
    prop_main_pipeline,
    psi2_tail_bounds,
    rademacher_sidon_estimate,
    rademacher_sidon_exhaustive,
    riesz_density_values,
    tensor_metric_check,
    truncate_system,
    truncation_level,
    verify_certificate,
)
from sidonlab.systems import (
    OrthoSystem,
    build_counterexample,
    rademacher_system,
    tensor_system,
    walsh_system,
)


def random_real_system(rng, N=8, n=4):
    q, _ = np.linalg.qr(rng.standard_normal((N, N)))
    return OrthoSystem(uniform_space(N), q[:, :n].T * math.sqrt(N))


@pytest.fixture(scope="module")
def ce8():
    return build_counterexample(8).system()


@pytest.fixture(scope="module")
def ce10():
    return build_counterexample(10).system()


# --- nu tables -------------------------------------------------------------------


def test_nu_rademacher_delta():
    r = rademacher_system(3)
    t = nu_inner_products(r.values, r.values, r.space.weights)
    for j in range(3):
        assert np.allclose(t.lookup([j]), np.eye(3)[j])
    assert np.allclose(t.lookup([]), 0.0)


def test_nu_matches_direct_products():
    rng = np.random.default_rng(0)
    T = rng.standard_normal((5, 32))
    F = rng.standard_normal((3, 32))
    w = rng.random(32)
    w /= w.sum()
    t = nu_inner_products(T, F, w)
    for mask in range(32):
        prod = np.ones(32)
        for p in range(5):
            if mask >> p & 1:
                prod *= T[p]
        assert np.allclose(t.values[mask], F @ (prod * w), atol=1e-12)


def test_nu_chunked_high_bits_match():
    # enough points that the enumeration splits into low and high halves
    rng = np.random.default_rng(1)
    N = 2**17
    T = rng.choice([-1.0, 1.0], size=(6, N))
    F = rng.standard_normal((1, N))
    w = np.full(N, 1 / N)
    t = nu_inner_products(T, F, w)
    mask = 0b110101
    prod = T[0] * T[2] * T[4] * T[5]
    assert t.values[mask, 0] == pytest.approx(F[0] @ (prod * w), abs=1e-12)


def test_nu_limited_enumeration():
    T = np.ones((21, 4))
    t = nu_inner_products(T, np.ones(4), np.full(4, 0.25), subset_limit=1)
    assert not t.exact and t.values.shape[0] == 22
    with pytest.raises(Exception):
        nu_inner_products(T, np.ones(4), np.full(4, 0.25))


# --- Bessel -----------------------------------------------------------------------


def test_bessel_spec_examples():
    r = rademacher_system(1)
    rep = bessel_check(r.values, r.values[0], 1.0, r.space.weights)
    assert rep.value == pytest.approx(1.0)
    const = bessel_check(r.values, np.ones(2), 1.0, r.space.weights)
    assert const.value == pytest.approx(1.0)


def test_bessel_constant_counterexample():
    # f = C with C > 1 gives C^2 from the empty set alone: only the
    # ||f||_inf^2 form of the bound survives
    r = rademacher_system(2)
    rep = bessel_check(r.values, np.full(4, 2.0), 2.0, r.space.weights)
    assert rep.value == pytest.approx(4.0)
    assert not rep.passed_unit and rep.passed_rigorous


def test_bessel_input_bounds():
    r = rademacher_system(1)
    with pytest.raises(ValueError):
        bessel_check(2 * r.values, r.values[0], 1.0, r.space.weights)
    with pytest.raises(ValueError):
        bessel_check(r.values, 3 * r.values[0], 1.0, r.space.weights)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_bessel_rigorous_bound_random(seed):
    rng = np.random.default_rng(seed)
    sys_ = random_real_system(rng, 16, 6)
    C = float(sys_.sup_norms().max())
    mds = mds_extract(sys_, min(0.5, C / 2), C=C)
    Cb = max(C, mds.theta_sup)
    f = rng.uniform(-Cb, Cb, 16)
    rep = bessel_check(mds.thetas, f, Cb, sys_.space.weights)
    assert rep.passed_rigorous


def test_bessel_ce_functions(ce10):
    mds = mds_extract(ce10, 0.25)
    C = max(mds.bound_C, mds.theta_sup)
    for f in ce10.values:
        assert bessel_check(mds.thetas[:12], f, C, ce10.space.weights).passed_unit


# --- five-fold certificate ----------------------------------------------------------


def test_five_fold_single_rademacher():
    r = rademacher_system(1)
    cert = five_fold_lower_bound(r, [1.0], 0.1, delta=0.5, C=1.0)
    assert cert.pairing == pytest.approx(0.5)
    assert cert.index_set_A == [0] and cert.alpha == [1]
    assert cert.mu_mass == pytest.approx(1.0)


def test_five_fold_rademacher6_regression():
    cert = five_fold_lower_bound(rademacher_system(6), np.ones(6), 0.1, C=1.0)
    # frozen from a reference run: pairing = delta * sum |a|, delta = 1/2
    assert cert.certified_lower / 6 == pytest.approx(0.5)
    assert cert.certified_lower / 6 >= 0.3


def test_five_fold_rejects_complex_and_large_delta():
    cs = OrthoSystem(uniform_space(2), np.array([[1j, -1j]]))
    with pytest.raises(ValueError):
        five_fold_lower_bound(cs, [1.0], 0.1)
    with pytest.raises(ValueError, match="too large"):
        five_fold_lower_bound(rademacher_system(2), [1.0, 1.0], 0.1, delta=0.9, C=1.0)


def test_five_fold_pairing_equals_density_integral():
    rng = np.random.default_rng(5)
    sys_ = random_real_system(rng)
    a = rng.standard_normal(4)
    C = float(sys_.sup_norms().max())
    cert = five_fold_lower_bound(sys_, a, min(0.5, C / 2), C=C)
    dens = riesz_density_values(cert.mds, cert.alpha, cert.delta)
    vals = tensor_system(sys_, 5).combination_values(a)
    assert dens.min() >= 0
    assert dens.mean() == pytest.approx(1.0, abs=1e-12)
    assert np.mean(vals * dens) == pytest.approx(cert.pairing, abs=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_five_fold_soundness(seed):
    rng = np.random.default_rng(seed)
    sys_ = random_real_system(rng)
    a = rng.standard_normal(4)
    C = float(sys_.sup_norms().max())
    cert = five_fold_lower_bound(sys_, a, min(0.5, C / 2), C=C)
    sup = np.abs(tensor_system(sys_, 5).combination_values(a)).max()
    assert cert.certified_lower <= sup + 1e-12


def test_truncated_expansion_tail_bound():
    # 21 Rademacher functions force the |S| <= 1 expansion
    r = rademacher_system(21)
    a = np.ones(21)
    cert = five_fold_lower_bound(r, a, 0.1, C=1.0)
    assert not cert.exact_expansion
    assert cert.tail_bound == pytest.approx(cert.delta**2 * 21)
    # for C = 1 the analytic tail agrees with C^8 delta^2 sum|a|
    assert cert.tail_bound <= cert.delta**2 * 21 + 1e-12
    assert cert.certified_lower == pytest.approx(cert.delta * 21 - cert.tail_bound)


def test_certificate_roundtrip():
    rng = np.random.default_rng(2)
    sys_ = random_real_system(rng)
    cert = five_fold_lower_bound(sys_, rng.standard_normal(4), 0.5, seed=3)
    out = verify_certificate(sys_, cert.to_dict())
    assert out["passed"] and out["abs_diff"] <= 1e-9
    bad = dict(cert.to_dict(), certified_lower=cert.certified_lower + 1.0)
    assert not verify_certificate(sys_, bad)["passed"]


# --- bridge --------------------------------------------------------------------------


def test_bridge_single_function():
    r = rademacher_system(3)
    lhs, rhs = l2_linfty_bridge(r.subsystem([0]), [2.0])
    assert lhs == 2.0 and rhs == pytest.approx(2.0)


def test_bridge_rademacher_equal():
    lhs, rhs = l2_linfty_bridge(rademacher_system(4), np.ones(4))
    assert lhs == pytest.approx(rhs)


def test_bridge_ce_random(ce8):
    rng = np.random.default_rng(0)
    for _ in range(10):
        lhs, rhs = l2_linfty_bridge(ce8, rng.standard_normal(9))
        assert lhs <= rhs + 1e-10


def test_bridge_needs_unit_norm():
    s = OrthoSystem(uniform_space(2), np.array([[math.sqrt(2), 0.0]]), orthonormal=False)
    s2 = OrthoSystem(uniform_space(2), np.array([[1.0, 0.5]]), orthonormal=False)
    l2_linfty_bridge(s, [1.0])
    with pytest.raises(ValueError):
        l2_linfty_bridge(s2, [1.0])


# --- truncation --------------------------------------------------------------------


def test_truncation_level_arithmetic():
    assert truncation_level(1 / math.e, 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        truncation_level(1.5, 1.0)


def test_truncation_leaves_bounded_system():
    r = rademacher_system(3)
    t = truncate_system(r, 0.01, 1.3)
    assert t.system is r
    assert max(t.truncated_mass) == 0.0


def test_truncation_tail_prediction():
    # one large value on a small set: psi2-heavy synthetic function
    N = 1024
    v = np.ones(N)
    v[:4] = 8.0
    v /= math.sqrt(np.mean(v**2))
    s = OrthoSystem(uniform_space(N), v[None, :], orthonormal=True)
    from sidonlab.measure_core import psi2_norm
    C = psi2_norm(s[0])
    t = truncate_system(s, 0.3, C)
    assert t.truncated_mass[0] > 0
    mass_bound, prob_bound = psi2_tail_bounds(t.level_y, C)
    assert t.truncated_mass[0] <= mass_bound
    assert t.truncated_probability[0] <= prob_bound
    assert t.system.uniform_bound_M == pytest.approx(t.level_y)


def test_truncation_checks_declared_constant():
    s = rademacher_system(2)
    with pytest.raises(ValueError):
        truncate_system(s, 0.5, 1.0)


# --- Monte Carlo ----------------------------------------------------------------------


def test_rademacher_sidon_on_rademacher():
    rep = rademacher_sidon_estimate(rademacher_system(8), np.arange(1, 9), 1000, 0)
    assert rep.system_average == pytest.approx(1.0, abs=1e-12)
    assert rep.standard_errors["system"] == 0.0


def test_rademacher_sidon_exhaustive_walsh3():
    w = walsh_system(2, 3)
    ex = rademacher_sidon_exhaustive(w, np.ones(3))
    rep = rademacher_sidon_estimate(w, np.ones(3), 500, 1)
    assert abs(rep.system_average - ex) <= 1e-12


def test_rademacher_sidon_within_three_se():
    rng = np.random.default_rng(4)
    sys_ = random_real_system(rng, 16, 10)
    lam = rng.standard_normal(10)
    ex = rademacher_sidon_exhaustive(sys_, lam)
    rep = rademacher_sidon_estimate(sys_, lam, 4000, 2)
    assert abs(rep.system_average - ex) <= 3 * rep.standard_errors["system"]


def test_rademacher_sidon_ce_regression(ce10):
    rep = rademacher_sidon_estimate(ce10, np.ones(11), 2000, 0)
    # frozen reference; the sup of the CE functions exceeds 1, so the
    # estimate can leave (0, 1]
    assert rep.system_average == pytest.approx(1.155063777438215, rel=1e-12)
    assert 0 < rep.system_average <= ce10.sup_norms().max()


def test_rademacher_sidon_sample_floor():
    with pytest.raises(ValueError):
        rademacher_sidon_estimate(rademacher_system(2), [1, 1], 10, 0)


def test_compare_averages_rademacher_symmetry():
    r = rademacher_system(5)
    rng = np.random.default_rng(0)
    X = rng.standard_normal((5, 7))
    rep = compare_averages(r, X, 4000, 0)
    assert abs(rep.ratio - 1) <= 3 * rep.ratio_se + 1e-12


def test_compare_averages_delta_vectors():
    r = rademacher_system(2)
    X = np.eye(2)
    rep = compare_averages(r, X, 200, 0)
    assert rep.system_average == 1.0 and rep.rademacher_average == 1.0


def test_compare_averages_reproducible():
    r = rademacher_system(3)
    X = np.eye(3)
    a = compare_averages(r, X, 300, 9)
    b = compare_averages(r, X, 300, 9)
    assert a.to_dict() == b.to_dict()


def test_compare_averages_shape_check():
    with pytest.raises(ValueError):
        compare_averages(rademacher_system(2), np.ones((3, 2)), 100, 0)


# --- tensor metric ---------------------------------------------------------------------


def test_tensor_metric_equal_points():
    out = tensor_metric_check(rademacher_system(3), 2, 1, 0)
    assert out["zero_pairs_ok"] and out["violations"] == 0


def test_tensor_metric_constant_function():
    s = OrthoSystem(uniform_space(2), np.ones((1, 2)), 1.0)
    out = tensor_metric_check(s, 2, 50, 0)
    assert out["violations"] == 0 and out["max_ratio"] == 0.0


def test_tensor_metric_ce(ce10):
    out = tensor_metric_check(ce10, 5, 2000, 1)
    assert out["violations"] == 0
    assert out["constant"] == pytest.approx(out["M"] ** 4 * math.sqrt(5))


# --- pipeline -------------------------------------------------------------------------------


def test_pipeline_chain_rademacher():
    r = rademacher_system(13)
    lam = np.array([1.0] + [1 / 12] * 12)
    out = prop_main_pipeline(r, lam, np.eye(13), 0.1)
    assert out["chain_holds"]
    assert out["rademacher_side"] >= out["riesz_side"] - 1e-9


def test_pipeline_complex_split():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)))
    s = OrthoSystem(uniform_space(8), q[:, :3].T * math.sqrt(8))
    out = prop_main_pipeline(s, np.ones(3), np.eye(3), 0.3)
    assert out["half"] in ("real", "imag")
    assert out["chain_holds"]
