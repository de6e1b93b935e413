import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sidonlab.measure_core import (
    ENUMERATION_CAP,
    EnumerationCapError,
    ProbSpace,
    SampledFunction,
    SpaceMismatchError,
    cube,
    fwht,
    ifwht,
    inner,
    lp_norm,
    popcount,
    product_space,
    psi2_norm,
    reweight,
    uniform_space,
    walsh_synthesis,
)
from sidonlab.systems import walsh_values


def test_cube_weights_and_structure():
    sp = cube(3)
    assert sp.point_count == 8
    assert sp.is_uniform_cube and sp.cube_dim == 3
    assert math.fsum(sp.weights) == 1.0


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        ProbSpace(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        ProbSpace(np.array([1.5, -0.5]))


def test_cap_names_structured_backend():
    with pytest.raises(EnumerationCapError, match="structured"):
        cube(25)
    with pytest.raises(EnumerationCapError):
        product_space(cube(13), cube(12))


def test_product_ordering_right_fastest():
    a = ProbSpace(np.array([0.25, 0.75]))
    b = ProbSpace(np.array([0.5, 0.5]))
    p = product_space(a, b)
    assert np.allclose(p.weights, [0.125, 0.125, 0.375, 0.375])
    assert p.decompose(3) == (1, 1)
    assert p.decompose(2) == (1, 0)


def test_rademacher_bit_convention():
    # r_{k+1}(p) = (-1)^{bit k of p}
    vals = walsh_values(3, [1, 2, 4])
    for p in range(8):
        for k in range(3):
            assert vals[k, p] == (-1) ** ((p >> k) & 1)


def test_inner_and_mismatch():
    sp = cube(2)
    f = SampledFunction(sp, walsh_values(2, [1])[0])
    g = SampledFunction(sp, walsh_values(2, [2])[0])
    assert inner(f, f) == 1.0
    assert inner(f, g) == 0.0
    with pytest.raises(SpaceMismatchError):
        inner(f, SampledFunction(cube(3), np.ones(8)))


def test_inner_complex_conjugates_second_argument():
    sp = uniform_space(2)
    f = SampledFunction(sp, np.array([1j, 1j]))
    assert inner(f, f) == 1.0
    assert inner(f, SampledFunction(sp, np.ones(2))) == 1j


def test_lp_norms():
    sp = cube(1)
    f = SampledFunction(sp, np.array([3.0, -1.0]))
    assert lp_norm(f, 1).value == pytest.approx(2.0)
    assert lp_norm(f, 2).value == pytest.approx(math.sqrt(5.0))
    assert lp_norm(f, math.inf).value == 3.0
    # large p does not overflow
    big = SampledFunction(sp, np.array([1e200, 0.0]))
    assert lp_norm(big, 8).value == pytest.approx(1e200 * 0.5 ** (1 / 8))
    with pytest.raises(ValueError):
        lp_norm(f, 0.5)


def test_psi2_constant_modulus():
    f = SampledFunction(cube(2), walsh_values(2, [3])[0])
    assert psi2_norm(f) == pytest.approx(1 / math.sqrt(math.log(2)), rel=1e-10)


def test_psi2_two_point_root():
    # E exp(|f|^2/t^2) = 2 with f = (2, 0) uniform: exp(4/t^2) = 3
    f = SampledFunction(cube(1), np.array([2.0, 0.0]))
    assert psi2_norm(f) == pytest.approx(2 / math.sqrt(math.log(3)), rel=1e-10)
    assert psi2_norm(SampledFunction(cube(1), np.zeros(2))) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=16))
def test_psi2_defining_equation(vals):
    v = np.array(vals)
    f = SampledFunction(uniform_space(v.size), v)
    t = psi2_norm(f)
    if t == 0:
        assert not np.any(v)
        return
    moment = np.mean(np.exp((v / t) ** 2))
    assert moment == pytest.approx(2.0, rel=1e-8)


def test_reweight_checks_mass_and_sign():
    sp = cube(1)
    new = reweight(sp, SampledFunction(sp, np.array([0.5, 1.5])))
    assert np.allclose(new.weights, [0.25, 0.75]) and new.reweighted
    assert not new.is_uniform_cube
    with pytest.raises(ValueError):
        reweight(sp, SampledFunction(sp, np.array([1.0, 1.1])))
    with pytest.raises(ValueError):
        reweight(sp, SampledFunction(sp, np.array([-1.0, 3.0])))


def test_fwht_recovers_walsh_coefficients():
    rng = np.random.default_rng(3)
    c = rng.standard_normal(16)
    f = ifwht(c)
    assert np.allclose(fwht(f), c, atol=1e-13)
    W = walsh_values(4, range(16))
    assert np.allclose(walsh_synthesis(c), c @ W, atol=1e-12)


def test_fwht_rejects_reweighted_space():
    sp = reweight(cube(1), SampledFunction(cube(1), np.array([0.5, 1.5])))
    with pytest.raises(ValueError):
        fwht(SampledFunction(sp, np.ones(2)))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31))
def test_parseval(m, seed):
    rng = np.random.default_rng(seed)
    f = SampledFunction(cube(m), rng.standard_normal(2**m))
    c = fwht(f)
    assert np.sum(c**2) == pytest.approx(inner(f, f), rel=1e-10)


def test_popcount():
    assert list(popcount(np.array([0, 1, 3, 255, 2**40 + 1]))) == [0, 1, 2, 8, 2]


def test_sampled_function_arithmetic():
    sp = cube(1)
    f = SampledFunction(sp, np.array([1.0, 2.0]))
    g = SampledFunction(sp, np.array([3.0, -1.0]))
    assert np.array_equal((f + g).values, [4.0, 1.0])
    assert np.array_equal((f * g).values, [3.0, -2.0])
    assert np.array_equal((2 * f).values, [2.0, 4.0])
    assert (f - g).integral() == pytest.approx(0.5)
    assert ENUMERATION_CAP == 2**24
