"""Limit objects: Mittag-Leffler moments and samplers, Gaussian mixtures,
asymptotic variances of null-sum observables, joint local-time samples.

Mittag-Leffler variables here are normalized by their moments
``E[Y^N] = N! Gamma(1+theta)^N / Gamma(1+N theta)``, so ``E[Y] = 1``.  At
index 1/2 this is ``sqrt(pi/2) |Z|``, at index 0 a standard exponential.
"""
from dataclasses import dataclass
from math import factorial, gamma, lgamma, pi, sqrt

import numpy as np
from numba import njit

from . import rng as _rng


@dataclass(frozen=True)
class LimitSpec:
    """``alpha`` in ``[d, 2]``; ``phi0`` the density at 0 of the limit of
    ``S_n / a_n``; ``sigma_sq`` the asymptotic variance of a null-sum
    observable (0 when unused)."""

    alpha: float
    d: int
    phi0: float
    sigma_sq: float = 0.0
    phi0_estimated: bool = False

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("d must be 1 or 2")
        if not self.d <= self.alpha <= 2:
            raise ValueError("alpha must lie in [d, 2]")
        if not self.phi0 > 0:
            raise ValueError("phi0 must be positive")
        if self.sigma_sq < 0:
            raise ValueError("sigma_sq must be non-negative")

    @property
    def index(self):
        return (self.alpha - self.d) / self.alpha

    @classmethod
    def from_step(cls, step, sigma_sq=0.0):
        alpha, _, phi0 = step.limit_constants()
        return cls(alpha, step.dim, phi0, sigma_sq)


def gaussian_phi0(cov):
    """Density at 0 of a centred Gaussian with covariance ``cov``."""
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    d = cov.shape[0]
    return float((2 * pi) ** (-d / 2) / sqrt(np.linalg.det(cov)))


def stable_phi0(alpha):
    """Density at 0 of the symmetric law with characteristic function ``exp(-|t|^alpha)``."""
    return gamma(1 + 1 / alpha) / pi


def ml_moment(alpha, d, N):
    """``E[Y^N] = N! Gamma(1+theta)^N / Gamma(1+N theta)``, ``theta = (alpha-d)/alpha``."""
    if not d <= alpha <= 2:
        raise ValueError("alpha must lie in [d, 2]")
    if N < 0 or int(N) != N:
        raise ValueError("N must be a non-negative integer")
    N = int(N)
    th = (alpha - d) / alpha
    return float(np.exp(lgamma(N + 1) + N * lgamma(1 + th) - lgamma(1 + N * th)))


def half_normal_moment(N):
    """``E|Z|^N = 2^(N/2) Gamma((N+1)/2) / sqrt(pi)``."""
    return 2 ** (N / 2) * gamma((N + 1) / 2) / sqrt(pi)


@dataclass
class ConsistencyReport:
    mean_abs: float
    mean_abs_se: float
    second: float
    second_se: float

    @property
    def ok(self):
        return (abs(self.mean_abs - sqrt(2 / pi)) <= 4 * self.mean_abs_se
                and abs(self.second - 1.0) <= 4 * self.second_se)


def half_normal_consistency(rng, n=10**6):
    """Sampled ``E|Z|`` and ``E Z^2`` with standard errors."""
    z = np.abs(rng.standard_normal(n))
    z2 = z * z
    return ConsistencyReport(float(z.mean()), float(z.std(ddof=1) / sqrt(n)),
                             float(z2.mean()), float(z2.std(ddof=1) / sqrt(n)))


def sample_ml(theta, rng, size=None):
    """Mittag-Leffler variable of index ``theta`` in ``[0, 1)``, mean 1.

    Index 0 and 1/2 use the exponential and half-normal forms; other indices
    use ``Gamma(1+theta) S^(-theta)`` with ``S`` positive ``theta``-stable
    (``E exp(-s S) = exp(-s^theta)``) drawn by Kanter's representation.
    """
    if not 0 <= theta < 1:
        raise ValueError("index must lie in [0, 1)")
    if theta == 0:
        return rng.standard_exponential(size)
    if theta == 0.5:
        return sqrt(pi / 2) * np.abs(rng.standard_normal(size))
    u = rng.uniform(0.0, pi, size)
    e = rng.standard_exponential(size)
    # Kanter: S = (A(u) / e)^((1-theta)/theta)
    a = (np.sin(theta * u) ** (theta / (1 - theta)) * np.sin((1 - theta) * u)
         / np.sin(u) ** (1 / (1 - theta)))
    s_pow = (e / a) ** (1 - theta)  # S^(-theta)
    return gamma(1 + theta) * s_pow


def sample_local_time_limit(spec, rng, size=None):
    """``phi0 * Y`` with ``Y`` Mittag-Leffler of the spec's index."""
    return spec.phi0 * sample_ml(spec.index, rng, size)


def sample_mixture(spec, rng, size=None):
    """``sqrt(sigma^2 phi0 Y) N`` with ``N`` standard normal independent of ``Y``."""
    y = sample_ml(spec.index, rng, size)
    z = rng.standard_normal(size)
    return np.sqrt(spec.sigma_sq * spec.phi0 * y) * z


def mixture_moment(spec, N):
    """``E[(sqrt(sigma^2 phi0 Y) N)^N]`` (zero for odd ``N``)."""
    if N % 2:
        return 0.0
    gauss = factorial(N) / (2 ** (N // 2) * factorial(N // 2))
    return (spec.sigma_sq * spec.phi0) ** (N // 2) * ml_moment(spec.alpha, spec.d, N // 2) * gauss


# ---------------------------------------------------------------------------
# asymptotic variance of null-sum observables


@dataclass
class SigmaBeta:
    """Truncated sums of both variance formulas and the estimated remainder.

    ``tail_estimate`` is the signed remainder beyond ``k_max`` from a power
    fit of the last decade of terms; ``tail_bound`` its magnitude.
    Iterating yields ``(via_21, via_22, tail_bound)``.
    """

    via_21: float
    via_22: float
    tail_bound: float
    tail_estimate: float
    k_max: int

    def __iter__(self):
        return iter((self.via_21, self.via_22, self.tail_bound))

    @property
    def value(self):
        return self.via_22 + self.tail_estimate


def sigma_terms(occ, spec, k_max):
    """Per-``k`` terms of both formulas for ``k = 0..k_max``.

    ``t21[k] = sum_{a,b} beta_a beta_b nu(S_k = b - a)`` and ``t22[k]`` the
    same with the second difference ``nu(S_k=b-a) - nu(S_k=b) - nu(S_k=-a)
    + nu(S_k=0)``.
    """
    cells = np.array(sorted(spec.beta), dtype=np.int64).reshape(len(spec.beta), -1)
    vals = np.array([spec.beta[tuple(c)] for c in cells])
    d = cells.shape[1]
    if d != occ.dim:
        raise ValueError("observable and table dimensions differ")
    w = occ.store_half_width
    A, B = np.meshgrid(np.arange(len(cells)), np.arange(len(cells)), indexing="ij")
    a, b = cells[A.ravel()], cells[B.ravel()]
    ww = vals[A.ravel()] * vals[B.ravel()]
    need = max(np.abs(b - a).max(), np.abs(a).max(), np.abs(b).max())
    if need > w:
        raise ValueError(f"table window {w} does not cover observable arithmetic ({need})")
    zero = np.zeros_like(a)

    def idx(x):
        return tuple((x + w).T)

    t21 = np.empty(k_max + 1)
    t22 = np.empty(k_max + 1)
    for k in range(k_max + 1):
        r = occ.row(k)
        lhs = r[idx(b - a)]
        t21[k] = ww @ lhs
        t22[k] = ww @ (lhs - r[idx(b)] - r[idx(-a)] + r[idx(zero)])
    return t21, t22


def _power_tail(terms, k_max):
    """Signed remainder ``2 sum_{k > k_max} C k^(-p)`` fitted on the last decade."""
    lo = max(1, k_max // 10)
    k = np.arange(lo, k_max + 1)
    t = terms[lo:k_max + 1]
    if k_max < 10 or np.any(t == 0) or np.any(np.sign(t) != np.sign(t[-1])):
        return 0.0 if np.all(t == 0) else float("nan")
    slope, icept = np.polyfit(np.log(k), np.log(np.abs(t)), 1)
    p = -slope
    if p <= 1:
        return float("inf") * np.sign(t[-1])
    c = np.exp(icept)
    # sum_{k > K} k^-p ~ integral from K + 1/2
    return float(2 * np.sign(t[-1]) * c * (k_max + 0.5) ** (1 - p) / (p - 1))


def sigma_beta_sq(occ, spec, k_max=10**4):
    """Asymptotic variance ``sum_{k in Z}`` of both formula variants, truncated at ``k_max``."""
    if not spec.null_sum:
        raise ValueError("sigma_beta_sq needs a null-sum observable")
    if occ.depth < k_max:
        raise ValueError(f"table depth {occ.depth} < k_max {k_max}")
    if all(v == 0 for v in spec.beta.values()):
        return SigmaBeta(0.0, 0.0, 0.0, 0.0, k_max)
    t21, t22 = sigma_terms(occ, spec, k_max)
    s21 = t21[0] + 2 * t21[1:].sum()
    s22 = t22[0] + 2 * t22[1:].sum()
    tail = _power_tail(t22, k_max)
    return SigmaBeta(float(s21), float(s22), abs(tail), tail, k_max)


# ---------------------------------------------------------------------------
# joint finite-dimensional samples


@njit(cache=True)
def _renewal_local_times(seed, count, cdf, cps):
    """Visits to 0 before each checkpoint for a walk whose gaps between visits
    follow ``cdf`` (``cdf[k-1] = P(gap <= k)``, defective)."""
    ncp = cps.shape[0]
    out = np.zeros((count, ncp))
    top = cps[ncp - 1]
    ntab = cdf.shape[0]
    for it in range(count):
        key = _rng.stream_key(seed, it)
        tau = 0
        ctr = 0
        while tau < top:
            for j in range(ncp):
                if tau < cps[j]:
                    out[it, j] += 1.0
            u = _rng.uniform(key, ctr)
            ctr += 1
            if u >= cdf[ntab - 1]:
                break
            # smallest g with cdf[g-1] > u
            lo = 0
            hi = ntab - 1
            while lo < hi:
                mid = (lo + hi) // 2
                if cdf[mid] > u:
                    hi = mid
                else:
                    lo = mid + 1
            tau += lo + 1
    return out


def walk_local_times(step, times, m, count, seed):
    """``L_{floor(t m)} / A_m`` for an aperiodic finite-variance walk, sampled
    by renewal over the exact law of gaps between visits to 0."""
    from .rw_oracle import first_return_law, return_probabilities

    cps = np.maximum(1, np.floor(np.asarray(times) * m).astype(np.int64))
    u = return_probabilities(step, int(cps[-1]) + 1)
    f = first_return_law(u)
    cdf = np.cumsum(f[1:])
    raw = _renewal_local_times(seed, count, cdf, cps)
    return raw / step.normalization().A(m)


def sample_joint_fdd(times, spec, m, rng, size=1, cutoff=None):
    """Joint samples of ``(L_{t_j})_j`` and ``(B_{sigma^2 L_{t_j}})_j``.

    For ``d = 1`` the local-time process is read off a fine-scale walk of
    ``m`` steps (the lazy walk when ``alpha = 2``, a truncated power-tail walk
    otherwise), normalized by ``A_m`` and rescaled to the spec's ``phi0``.
    For ``d = 2`` every ``L_t`` with ``t > 0`` equals one exponential variable
    of mean ``phi0``.  Returns two arrays of shape ``(size, len(times))``.
    """
    from .observables import ObservableSpec
    from .rw_oracle import lazy_walk, stable_step_builder, walk_ensemble

    t = np.asarray(times, dtype=np.float64)
    if t.ndim != 1 or len(t) == 0 or np.any(np.diff(t) <= 0) or t[0] <= 0:
        raise ValueError("times must be positive and strictly increasing")
    if m < 100 / t[0]:
        raise ValueError(f"fine scale m={m} too coarse for t_1={t[0]} (need m >= {100 / t[0]:.0f})")
    if spec.d == 2:
        L = np.repeat(spec.phi0 * rng.standard_exponential((size, 1)), len(t), axis=1)
    elif spec.alpha == 2:
        step = lazy_walk(1)
        seed = int(rng.integers(2**62))
        L = walk_local_times(step, t, m, size, seed) * (spec.phi0 / step.limit_constants()[2])
    else:
        step = stable_step_builder(spec.alpha, cutoff or max(1000, int(10 * m ** (1 / spec.alpha))))
        cps = np.maximum(1, np.floor(t * m).astype(np.int64))
        seed = int(rng.integers(2**62))
        raw = walk_ensemble(step, [ObservableSpec.local_time(1)], int(cps[-1]), cps, size, seed)[:, 0, :]
        L = raw / step.normalization().A(m) * (spec.phi0 / step.limit_constants()[2])
    dL = np.diff(np.concatenate([np.zeros((size, 1)), L], axis=1), axis=1)
    B = np.cumsum(np.sqrt(spec.sigma_sq * dL) * rng.standard_normal(dL.shape), axis=1)
    return L, B
