import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from ordino.gaussian import (
    bvn_cdf,
    bvn_cdf_oracle,
    bvn_cdf_with_grad,
    sample_bvn,
    std_normal_cdf,
    std_normal_inv_cdf,
)

finite = st.floats(-6.0, 6.0, allow_nan=False)
corr = st.floats(-0.99, 0.99, allow_nan=False)


def test_univariate_values():
    assert std_normal_cdf(0.0) == 0.5
    assert std_normal_cdf(np.inf) == 1.0
    # erfc-based reference
    assert abs(std_normal_cdf(1.0) - 0.5 * math.erfc(-1.0 / math.sqrt(2.0))) < 1e-15
    assert abs(std_normal_cdf(1.0) - 0.8413447460685429) < 1e-15


def test_inverse_cdf():
    assert std_normal_inv_cdf(0.5) == 0.0
    assert abs(std_normal_inv_cdf(std_normal_cdf(1.0)) - 1.0) < 1e-10
    # bisection against the forward map
    lo, hi = 0.0, 5.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if std_normal_cdf(mid) < 0.975 else (lo, mid)
    assert abs(std_normal_inv_cdf(0.975) - lo) < 1e-12
    assert abs(std_normal_inv_cdf(0.975) - 1.959963984540054) < 1e-12


@pytest.mark.parametrize("rho", [-0.9, -0.5, 0.0, 0.3, 0.5, 0.99])
def test_origin_closed_form(rho):
    assert abs(bvn_cdf(0.0, 0.0, rho) - (0.25 + math.asin(rho) / (2 * math.pi))) < 1e-12


def test_known_points():
    assert bvn_cdf(0.0, 0.0, 0.0) == pytest.approx(0.25, abs=1e-15)
    assert bvn_cdf(0.0, 0.0, 0.5) == pytest.approx(1.0 / 3.0, abs=1e-14)
    assert abs(bvn_cdf(1.0, -0.5, 0.3) - bvn_cdf_oracle(1.0, -0.5, 0.3)) < 1e-10
    assert abs(bvn_cdf(-1.0, 2.0, 0.7) - bvn_cdf_oracle(-1.0, 2.0, 0.7)) < 1e-9


def test_oracle_limits():
    assert abs(bvn_cdf_oracle(np.inf, np.inf, 0.9) - 1.0) < 1e-9
    assert abs(bvn_cdf_oracle(0.0, 0.0, -0.5) - 1.0 / 6.0) < 1e-9
    assert bvn_cdf_oracle(-np.inf, 1.0, 0.2) == 0.0


def test_against_scipy_multivariate_normal():
    # third independent implementation (Genz lattice rule, ~1e-6 accurate)
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = rng.uniform(-3, 3, 2)
        r = rng.uniform(-0.9, 0.9)
        ref = stats.multivariate_normal([0, 0], [[1, r], [r, 1]]).cdf([a, b])
        assert abs(bvn_cdf(a, b, r) - ref) < 1e-5


def test_infinite_limits_short_circuit():
    assert bvn_cdf(np.inf, 0.3, 0.8) == pytest.approx(std_normal_cdf(0.3), abs=1e-16)
    assert bvn_cdf(-0.4, np.inf, -0.8) == pytest.approx(std_normal_cdf(-0.4), abs=1e-16)
    assert bvn_cdf(-np.inf, 2.0, 0.1) == 0.0
    assert bvn_cdf(np.inf, np.inf, 0.5) == 1.0


def test_vectorized_matches_scalar():
    a = np.linspace(-3, 3, 7)
    b = np.linspace(2, -2, 7)
    vec = bvn_cdf(a, b, 0.6)
    assert vec.shape == (7,)
    for ai, bi, v in zip(a, b, vec):
        assert v == pytest.approx(bvn_cdf(ai, bi, 0.6), abs=1e-15)
    per = bvn_cdf(a, b, np.full(7, 0.6))
    assert np.max(np.abs(per - vec)) < 1e-15


@pytest.mark.parametrize("bad", [1.0, -1.0, 1.5, np.nan])
def test_rho_outside_open_interval_rejected(bad):
    with pytest.raises(ValueError):
        bvn_cdf(0.0, 0.0, bad)


@settings(max_examples=200, deadline=None)
@given(finite, finite, corr)
def test_reflection_identity(a, b, r):
    assert abs(bvn_cdf(a, b, r) + bvn_cdf(-a, b, -r) - std_normal_cdf(b)) < 1e-10


@settings(max_examples=200, deadline=None)
@given(finite, finite)
def test_independence_factorizes(a, b):
    assert abs(bvn_cdf(a, b, 0.0) - std_normal_cdf(a) * std_normal_cdf(b)) < 1e-12


@settings(max_examples=200, deadline=None)
@given(finite, finite, finite, finite, corr)
def test_rectangle_probability_nonnegative(a1, a2, b1, b2, r):
    a1, a2 = sorted((a1, a2))
    b1, b2 = sorted((b1, b2))
    p = bvn_cdf(a2, b2, r) - bvn_cdf(a1, b2, r) - bvn_cdf(a2, b1, r) + bvn_cdf(a1, b1, r)
    assert p >= -1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(-4, 4), st.floats(-4, 4), st.floats(-0.95, 0.95))
def test_gradient_matches_central_differences(a, b, r):
    _, Fa, Fb, Fr = bvn_cdf_with_grad(np.array([a]), np.array([b]), r)
    h = 1e-5
    fd_a = (bvn_cdf(a + h, b, r) - bvn_cdf(a - h, b, r)) / (2 * h)
    fd_b = (bvn_cdf(a, b + h, r) - bvn_cdf(a, b - h, r)) / (2 * h)
    fd_r = (bvn_cdf(a, b, r + h) - bvn_cdf(a, b, r - h)) / (2 * h)
    for an, fd in ((Fa[0], fd_a), (Fb[0], fd_b), (Fr[0], fd_r)):
        assert abs(an - fd) <= 1e-6 * max(abs(fd), 1e-3)


def test_gradient_infinite_coordinates():
    F, Fa, Fb, Fr = bvn_cdf_with_grad(np.array([np.inf, 0.2, -np.inf]), np.array([0.5, np.inf, 0.0]), 0.4)
    assert Fa[0] == 0.0 and Fr[0] == 0.0
    assert Fb[0] == pytest.approx(math.exp(-0.125) / math.sqrt(2 * math.pi))
    assert Fa[1] == pytest.approx(math.exp(-0.02) / math.sqrt(2 * math.pi))
    assert F[2] == 0.0 and Fa[2] == Fb[2] == Fr[2] == 0.0


@pytest.mark.parametrize("rho", [0.0, 0.5])
def test_sample_correlation(rho):
    e1, e2 = sample_bvn(rho, np.random.default_rng(11), 1_000_000)
    assert abs(np.corrcoef(e1, e2)[0, 1] - rho) < 0.005
    assert abs(e2.std() - 1.0) < 0.005


def test_sampler_deterministic():
    a = sample_bvn(0.3, np.random.default_rng(5), 100)
    b = sample_bvn(0.3, np.random.default_rng(5), 100)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    pair = sample_bvn(0.3, np.random.default_rng(5))
    assert isinstance(pair[0], float) and pair[0] == a[0][0]
