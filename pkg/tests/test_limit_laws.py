from math import factorial, gamma, pi, sqrt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lorentzgas import limit_laws as ll
from lorentzgas.limit_laws import LimitSpec, ml_moment
from lorentzgas.rng import generator
from lorentzgas.stats import ks_two_sample


def test_ml_moment_examples():
    for a, d in ((2.0, 1), (1.5, 1), (2.0, 2)):
        assert ml_moment(a, d, 0) == 1.0
    assert ml_moment(2, 1, 2) == pytest.approx(pi / 2, rel=1e-14)
    assert ml_moment(2, 1, 2) == pytest.approx(1.570796, abs=1e-6)
    assert ml_moment(1.5, 1, 2) == pytest.approx(2 * gamma(4 / 3) ** 2 / gamma(5 / 3), rel=1e-14)


@given(N=st.integers(0, 20), d=st.sampled_from([1, 2]))
def test_ml_index_zero_is_exponential(N, d):
    assert ml_moment(d, d, N) == pytest.approx(factorial(N), rel=1e-12)


@given(N=st.integers(0, 8))
def test_ml_half_is_scaled_half_normal(N):
    assert ml_moment(2, 1, N) == pytest.approx((pi / 2) ** (N / 2) * ll.half_normal_moment(N), rel=1e-10)


def test_ml_moment_domain():
    with pytest.raises(ValueError):
        ml_moment(0.5, 1, 2)
    with pytest.raises(ValueError):
        ml_moment(2, 1, -1)


def test_half_normal_consistency():
    rep = ll.half_normal_consistency(generator(1))
    assert rep.ok
    assert rep.mean_abs == pytest.approx(0.79788, abs=4 * rep.mean_abs_se)
    assert rep.second / rep.mean_abs**2 == pytest.approx(ml_moment(2, 1, 2), rel=0.01)


def test_phi0_formulas():
    assert ll.gaussian_phi0([[0.5]]) == pytest.approx(1 / sqrt(2 * pi * 0.5))
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert ll.gaussian_phi0(cov) == pytest.approx(1 / (2 * pi * sqrt(np.linalg.det(cov))))
    assert ll.stable_phi0(2.0) == pytest.approx(1 / (2 * sqrt(pi)))


def test_limit_spec_validation():
    with pytest.raises(ValueError):
        LimitSpec(1.5, 2, 1.0)
    with pytest.raises(ValueError):
        LimitSpec(2.0, 1, 0.0)
    assert LimitSpec(2.0, 1, 1.0).index == 0.5
    assert LimitSpec(2.0, 2, 1.0).index == 0.0


@pytest.mark.parametrize("theta", [0.0, 0.5, 1 / 3, 0.2, 0.45])
def test_ml_sampler_moments(theta):
    alpha = 1 / (1 - theta)  # d = 1
    y = ll.sample_ml(theta, generator(7), 10**6)
    for N in (1, 2, 3):
        m = y**N
        se = m.std(ddof=1) / sqrt(len(m))
        assert abs(m.mean() - ml_moment(alpha, 1, N)) < 5 * se


def test_ml_sampler_domain():
    with pytest.raises(ValueError):
        ll.sample_ml(1.0, generator(0), 3)


def test_mixture_zero_variance():
    x = ll.sample_mixture(LimitSpec(2.0, 1, 0.4, 0.0), generator(2), 1000)
    assert np.all(x == 0)


@pytest.mark.parametrize("d,ratio", [(1, 3 * pi / 2), (2, 6.0)])
def test_mixture_kurtosis(d, ratio):
    spec = LimitSpec(2.0, d, 0.3, 2.0)
    assert ll.mixture_moment(spec, 4) / ll.mixture_moment(spec, 2) ** 2 == pytest.approx(ratio, rel=1e-13)
    x = ll.sample_mixture(spec, generator(3), 2 * 10**6)
    assert np.mean(x**4) / np.mean(x**2) ** 2 == pytest.approx(ratio, rel=0.04)
    assert ll.mixture_moment(spec, 3) == 0.0


def test_fdd_d1_marginal_matches_local_time_law():
    spec = LimitSpec(2.0, 1, 1 / sqrt(2 * pi), 1.0)
    L, B = ll.sample_joint_fdd([1.0], spec, 10**6, generator(4), size=10**5)
    ref = ll.sample_local_time_limit(spec, generator(5), 10**5)
    assert ks_two_sample(L[:, 0], ref)[0] < 0.02


def test_fdd_monotone_and_gaussian_increments():
    spec = LimitSpec(2.0, 1, 0.5, 2.0)
    L, B = ll.sample_joint_fdd([0.25, 0.5, 1.0], spec, 4000, generator(6), size=4000)
    assert np.all(np.diff(L, axis=1) >= 0)
    dB = np.diff(np.concatenate([np.zeros((len(B), 1)), B], axis=1), axis=1)
    dL = np.diff(np.concatenate([np.zeros((len(L), 1)), L], axis=1), axis=1)
    ok = dL > 0
    z = dB[ok] / np.sqrt(spec.sigma_sq * dL[ok])
    assert abs(z.mean()) < 0.05 and z.var() == pytest.approx(1.0, abs=0.05)


def test_fdd_d2_constant_in_time():
    spec = LimitSpec(2.0, 2, 0.7, 1.0)
    L, _ = ll.sample_joint_fdd([0.1, 0.5, 1.0], spec, 10**4, generator(8), size=1000)
    assert np.all(L == L[:, :1])
    assert L[:, 0].mean() == pytest.approx(0.7, rel=0.1)


def test_fdd_stable_walk():
    spec = LimitSpec(1.5, 1, ll.stable_phi0(1.5), 1.0)
    L, _ = ll.sample_joint_fdd([0.5, 1.0], spec, 2000, generator(9), size=2000)
    assert np.all(np.diff(L, axis=1) >= 0)
    assert L[:, 1].mean() == pytest.approx(spec.phi0, rel=0.15)


def test_fdd_validation():
    spec = LimitSpec(2.0, 1, 0.4)
    with pytest.raises(ValueError):
        ll.sample_joint_fdd([0.1], spec, 500, generator(0))
    with pytest.raises(ValueError):
        ll.sample_joint_fdd([0.5, 0.2], spec, 10**4, generator(0))


def test_walk_local_time_mean():
    from lorentzgas.rw_oracle import exact_moment_dp, lazy_walk
    from lorentzgas.observables import ObservableSpec

    step = lazy_walk(1)
    x = ll.walk_local_times(step, [0.5, 1.0], 2000, 20000, seed=3)
    exact = exact_moment_dp(step, ObservableSpec.local_time(1), 1, 2000, checkpoints=[1000, 2000]).moment(1)
    exact = exact / step.normalization().A(2000)
    se = x.std(axis=0, ddof=1) / sqrt(len(x))
    assert np.all(np.abs(x.mean(axis=0) - exact) < 4 * se)
