"""Exact occupation laws and additive-functional moments for i.i.d. walks.

For a walk ``S_k`` with finitely supported steps on Z^d the scalar masses
``nu(S_k = a)`` are computed exactly (up to tracked truncation leak) by
repeated convolution, or by Fourier inversion of the k-th power of the
characteristic function.  Moments of ``sum_{k<n} beta(S_k)`` follow from a
forward recursion over (position, degree).
"""
from dataclasses import dataclass, field
from math import ceil, comb, gamma, pi, sqrt

import numpy as np
from numba import njit
from scipy.signal import fftconvolve
from scipy.special import stirling2

from . import rng as _rng

# ---------------------------------------------------------------------------
# step laws


@dataclass(frozen=True)
class StepDistribution:
    """Finitely supported law of one increment.

    ``alpha``/``scale`` describe stable-domain steps (``1 - lambda_t ~
    scale |t|^alpha`` near 0); they are ``None`` for finite-variance steps.
    """

    support: dict
    alpha: float = None
    scale: float = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        sup = {}
        for k, p in dict(self.support).items():
            k = tuple(int(x) for x in np.atleast_1d(k))
            if p < 0:
                raise ValueError("negative probability")
            if p > 0:
                sup[k] = sup.get(k, 0.0) + float(p)
        if not sup:
            raise ValueError("empty support")
        if len({len(k) for k in sup}) != 1 or len(next(iter(sup))) not in (1, 2):
            raise ValueError("support must live in Z or Z^2")
        total = sum(sup.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total!r}")
        object.__setattr__(self, "support", sup)

    @property
    def dim(self):
        return len(next(iter(self.support)))

    @property
    def offsets(self):
        return np.array(sorted(self.support), dtype=np.int64)

    @property
    def probs(self):
        return np.array([self.support[k] for k in sorted(self.support)])

    @property
    def mean(self):
        return self.probs @ self.offsets

    @property
    def covariance(self):
        x = self.offsets - self.mean
        return (x.T * self.probs) @ x

    @property
    def span(self):
        return int(np.abs(self.offsets).max())

    @property
    def symmetric(self):
        return all(abs(self.support.get(tuple(-np.array(k)), 0.0) - p) <= 1e-15 for k, p in self.support.items())

    @property
    def aperiodic(self):
        """Differences of support points generate all of Z^d."""
        diffs = self.offsets - self.offsets[0]
        if self.dim == 1:
            return int(np.gcd.reduce(np.abs(diffs[:, 0]))) == 1
        g = 0
        for i in range(len(diffs)):
            for j in range(i + 1, len(diffs)):
                g = np.gcd(g, int(diffs[i, 0] * diffs[j, 1] - diffs[i, 1] * diffs[j, 0]))
        return g == 1

    def char(self, t):
        """Characteristic function on an array of frequencies ``(..., d)``."""
        t = np.asarray(t, dtype=np.float64)
        if self.dim == 1 and (t.ndim == 0 or t.shape[-1] != 1):
            t = t[..., None]
        return np.exp(1j * (t @ self.offsets.T.astype(np.float64))) @ self.probs

    def limit_constants(self):
        """``(alpha, c, phi0)`` with ``a_k = c k^(1/alpha)`` and ``phi0`` the
        density at 0 of the limit of ``S_k / a_k``."""
        if self.alpha is not None:
            c = self.scale ** (1.0 / self.alpha)
            return self.alpha, c, gamma(1 + 1 / self.alpha) / pi
        cov = self.covariance
        if self.dim == 1:
            return 2.0, sqrt(cov[0, 0]), 1 / sqrt(2 * pi)
        return 2.0, 1.0, 1 / (2 * pi * sqrt(np.linalg.det(cov)))

    def normalization(self):
        from .observables import NormalizationSeq

        alpha, c, _ = self.limit_constants()
        return NormalizationSeq(self.dim, alpha, "pure_power", c)

    def to_config(self):
        return [{"offset": list(k), "prob": p} for k, p in sorted(self.support.items())]

    @classmethod
    def from_config(cls, entries, name=""):
        sup = {}
        for e in entries:
            unknown = set(e) - {"offset", "prob"}
            if unknown:
                raise ValueError(f"unknown step field(s): {sorted(unknown)}")
            sup[tuple(np.atleast_1d(e["offset"]))] = float(e["prob"])
        return cls(sup, name=name)


def lazy_walk(d=1):
    """Stay with probability 1/2, otherwise a uniform nearest-neighbour move."""
    if d == 1:
        return StepDistribution({(-1,): 0.25, (0,): 0.5, (1,): 0.25}, name="lazy1d")
    return StepDistribution({(0, 0): 0.5, (1, 0): 0.125, (-1, 0): 0.125, (0, 1): 0.125, (0, -1): 0.125},
                            name="lazy2d")


NAMED_STEPS = {"lazy1d": lambda: lazy_walk(1), "lazy2d": lambda: lazy_walk(2),
               "srw1d": lambda: StepDistribution({(-1,): 0.5, (1,): 0.5}, name="srw1d"),
               "right1d": lambda: StepDistribution({(1,): 1.0}, name="right1d")}


def named_step(name):
    try:
        return NAMED_STEPS[name]()
    except KeyError:
        raise ValueError(f"unknown step {name!r}; known: {sorted(NAMED_STEPS)}") from None


@dataclass
class StableFit:
    exponent: float
    scale: float
    t_window: tuple


def fit_char_exponent(step, t_lo, t_hi, points=60):
    """Log-log regression of ``1 - Re lambda_t`` against ``t`` in a window."""
    t = np.geomspace(t_lo, t_hi, points)
    y = 1.0 - np.real(_char_1d(step, t))
    slope, icept = np.polyfit(np.log(t), np.log(y), 1)
    return StableFit(float(slope), float(np.exp(icept)), (t_lo, t_hi))


def _char_1d(step, t):
    k = step.offsets[:, 0].astype(np.float64)
    return np.cos(np.outer(t, k)) @ step.probs + 1j * (np.sin(np.outer(t, k)) @ step.probs)


def stable_step_builder(alpha, cutoff, d=1, window=None):
    """Symmetric step with ``p(+-k)`` proportional to ``k^(-1-alpha)``, ``k <= cutoff``.

    The characteristic exponent and scale are fitted on ``1 - lambda_t``
    over ``window`` (default ``[10/cutoff, 0.01]``); the fitted values are
    stored on the returned step and drive its normalization.
    """
    if d != 1:
        raise ValueError("stable steps are built on Z only")
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    k = np.arange(1, cutoff + 1, dtype=np.float64)
    w = k ** (-1.0 - alpha)
    w /= 2 * w.sum()
    sup = {}
    for kk, p in zip(k.astype(int), w):
        sup[(int(kk),)] = p
        sup[(-int(kk),)] = p
    # renormalize exactly to guard the sum-to-one check against rounding
    tot = sum(sup.values())
    sup = {key: p / tot for key, p in sup.items()}
    raw = StepDistribution(sup, name=f"stable{alpha}")
    if window is None:
        window = (10.0 / cutoff, 0.01) if cutoff > 1000 else (1e-3, 1e-2)
    fit = fit_char_exponent(raw, *window)
    return StepDistribution(raw.support, alpha=min(fit.exponent, 2.0), scale=fit.scale, name=raw.name)


# ---------------------------------------------------------------------------
# occupation tables


def suggest_half_width(step, n, sigmas=10.0):
    """Half-width ``A`` keeping the truncation leak negligible up to time ``n``."""
    if n == 0:
        return step.span
    mu = np.abs(step.mean).max()
    if step.alpha is not None:
        alpha, c, _ = step.limit_constants()
        spread = c * n ** (1 / alpha)
    else:
        spread = sqrt(n * np.diag(step.covariance).max())
    return int(min(n * step.span, ceil(mu * n + sigmas * spread + step.span)))


@dataclass
class OccupationTable:
    """Rows ``nu(S_k = a)`` for stored ``k`` and ``|a|_inf <= stored half-width``."""

    step: StepDistribution
    depth: int
    half_width: int  # computation window
    store_half_width: int
    ks: np.ndarray
    rows: np.ndarray  # (len(ks), 2w+1[, 2w+1])
    leaked_mass: np.ndarray  # per k = 0..depth

    def __post_init__(self):
        self._index = {int(k): i for i, k in enumerate(self.ks)}

    @property
    def dim(self):
        return self.step.dim

    def row(self, k):
        try:
            return self.rows[self._index[int(k)]]
        except KeyError:
            raise KeyError(f"row {k} not stored") from None

    def prob(self, k, a):
        """``nu(S_k = a)``; zero outside the stored window."""
        a = np.atleast_1d(np.asarray(a, dtype=np.int64))
        w = self.store_half_width
        if np.any(np.abs(a) > w):
            raise IndexError(f"{tuple(a)} outside stored window {w}")
        r = self.row(k)
        return float(r[a[0] + w] if self.dim == 1 else r[a[0] + w, a[1] + w])

    def to_csv(self, path):
        import csv

        w = self.store_half_width
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["k"] + [f"a{i}" for i in range(self.dim)] + ["value"])
            for i, k in enumerate(self.ks):
                r = self.rows[i]
                for idx in zip(*np.nonzero(r)):
                    wr.writerow([int(k)] + [int(x) - w for x in idx] + [repr(float(r[idx]))])


@njit(cache=True)
def _conv1(row, new, offs, probs, lo, hi):
    new[:] = 0.0
    n = row.shape[0]
    for s in range(offs.shape[0]):
        o = offs[s]
        p = probs[s]
        for x in range(max(lo, -o if o < 0 else 0), min(hi, n - o if o > 0 else n)):
            new[x + o] += p * row[x]


@njit(cache=True)
def _conv2(row, new, offs, probs, lo, hi):
    new[:, :] = 0.0
    n = row.shape[0]
    for s in range(offs.shape[0]):
        o0 = offs[s, 0]
        o1 = offs[s, 1]
        p = probs[s]
        for x in range(max(lo, -o0), min(hi, n - o0)):
            for y in range(max(lo, -o1), min(hi, n - o1)):
                new[x + o0, y + o1] += p * row[x, y]


def convolve(step, n, half_width=None, keep=None, store_half_width=None, leak_bound=1e-10):
    """Exact law of ``S_k`` for ``k <= n`` by repeated convolution.

    Mass pushed outside ``|a|_inf <= half_width`` is dropped and accounted
    in ``leaked_mass``; a ``ValueError`` is raised if it exceeds
    ``leak_bound`` at time ``n``.
    """
    if half_width is None:
        A = max(suggest_half_width(step, n), int(store_half_width or 0))
    else:
        A = int(half_width)
    ws = A if store_half_width is None else min(int(store_half_width), A)
    ks = np.arange(n + 1) if keep is None else np.unique(np.asarray(list(keep), dtype=np.int64))
    if len(ks) and (ks[0] < 0 or ks[-1] > n):
        raise ValueError("stored rows must lie in [0, n]")
    d, W = step.dim, 2 * A + 1
    shape = (W,) * d
    row = np.zeros(shape)
    row[(A,) * d] = 1.0
    new = np.empty(shape)
    offs = step.offsets if d == 2 else step.offsets[:, 0].copy()
    probs = step.probs
    span = step.span
    rows = np.empty((len(ks),) + (2 * ws + 1,) * d)
    leaked = np.zeros(n + 1)
    want = {int(k): i for i, k in enumerate(ks)}
    crop = slice(A - ws, A + ws + 1)
    conv = _conv1 if d == 1 else _conv2
    for k in range(n + 1):
        if k in want:
            rows[want[k]] = row[(crop,) * d]
        if k == n:
            break
        reach = min(A, k * span)
        conv(row, new, offs, probs, A - reach, A + reach + 1)
        before = row.sum()
        row, new = new, row
        leaked[k + 1] = leaked[k] + max(0.0, before - row.sum())
    if leaked[n] > leak_bound:
        raise ValueError(f"truncation leak {leaked[n]:.3g} exceeds bound {leak_bound:.3g}; widen half_width")
    return OccupationTable(step, n, A, ws, ks, rows, leaked)


def fourier_occupation(step, k, half_width):
    """``nu(S_k = a)`` for ``|a|_inf <= half_width`` from ``lambda_t^k``.

    The characteristic function is sampled on a grid of size
    ``M >= 2 (2 A + 1)`` (and larger than the range of ``S_k`` whenever that
    is affordable), raised to the k-th power and transformed back.
    """
    A = int(half_width)
    d = step.dim
    need = 2 * (2 * A + 1)
    exact = 2 * k * step.span + 1
    M = 1 << int(np.ceil(np.log2(max(need, min(exact, 1 << (22 if d == 1 else 11)), 2))))
    t = 2 * np.pi * np.arange(M) / M
    if d == 1:
        lam = _char_1d(step, t)
        vals = np.fft.fft(lam ** k) / M
        idx = np.arange(-A, A + 1) % M
        out = vals[idx]
    else:
        T1, T2 = np.meshgrid(t, t, indexing="ij")
        lam = step.char(np.stack([T1, T2], axis=-1))
        vals = np.fft.fft2(lam ** k) / M**2
        idx = np.arange(-A, A + 1) % M
        out = vals[np.ix_(idx, idx)]
    return out.real if not np.iscomplexobj(out) else np.real(out)


# ---------------------------------------------------------------------------
# Q-type masses


def q_mass(occ, k, a):
    """``nu(S_k = a)``, the mass of ``Q_{k,a}`` on constants."""
    return occ.prob(k, a)


def q_prime(occ, k, c):
    """``Q'_{k,c} = Q_{k,c} - Q_{k,0}`` on constants."""
    zero = (0,) * occ.dim
    return occ.prob(k, c) - occ.prob(k, zero)


def q_double_diff(occ, k, a, b):
    """``nu(S_k=b-a) - nu(S_k=b) - nu(S_k=-a) + nu(S_k=0)``."""
    a = np.atleast_1d(np.asarray(a, dtype=np.int64))
    b = np.atleast_1d(np.asarray(b, dtype=np.int64))
    zero = (0,) * occ.dim
    return occ.prob(k, b - a) - occ.prob(k, b) - occ.prob(k, -a) + occ.prob(k, zero)


def decomposition_residual_1d(occ, k):
    """Largest ``|nu(S_k=b-a) - (Q'' + Q'_b + Q'_{-a} + Q_0)|`` over all
    in-window pairs ``(a, b)`` of a one-dimensional table."""
    return _decomp_1d(occ.row(k), occ.store_half_width)


@njit(cache=True)
def _decomp_1d(r, w):
    q0 = r[w]
    worst = 0.0
    for a in range(-w, w + 1):
        qma = r[-a + w]
        for b in range(max(-w, a - w), min(w, a + w) + 1):
            lhs = r[b - a + w]
            qb = r[b + w]
            qpp = lhs - qb - qma + q0
            res = abs(lhs - (qpp + (qb - q0) + (qma - q0) + q0))
            if res > worst:
                worst = res
    return worst


def decomposition_residual_pairs(occ, k, a, b):
    """Same identity on explicit arrays of pairs ``a, b`` of shape ``(m, d)``."""
    r = occ.row(k)
    w = occ.store_half_width
    a = np.asarray(a, dtype=np.int64).reshape(len(a), -1)
    b = np.asarray(b, dtype=np.int64).reshape(len(b), -1)
    if np.any(np.abs(b - a) > w) or np.any(np.abs(a) > w) or np.any(np.abs(b) > w):
        raise IndexError("pair outside stored window")

    def at(x):
        return r[tuple((x + w).T)]

    zero = np.zeros_like(a)
    lhs, q0, qb, qma = at(b - a), at(zero), at(b), at(-a)
    qpp = lhs - qb - qma + q0
    rhs = qpp + (qb - q0) + (qma - q0) + q0
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# hypothesis checks


@dataclass
class CriteriaReport:
    lambda_at_zero: complex
    sup_away_from_zero: float
    aperiodic: bool
    fitted_c: float
    integrability: float
    b: float
    eps: float

    @property
    def ok(self):
        return self.aperiodic and self.fitted_c > 0 and np.isfinite(self.integrability)


def criteria_check(step, b=1.0, eps=0.25, ks=None, grid=401, tol=1e-12):
    """Numerical check of the Fourier-perturbation hypotheses for an i.i.d. walk.

    For i.i.d. steps the perturbed operator acts on constants by the scalar
    ``lambda_t`` with no remainder, so the checks reduce to: ``lambda_0 = 1``;
    ``sup_{b < |u|_inf <= pi} |lambda_u| < 1``; a positive ``c`` with
    ``|lambda_{t/a_k}|^k <= exp(-c min(|t|^(2-eps), |t|^(2+eps)))`` on a grid;
    and a finite value of the integral ``int (1+|t|^2) sup_k |lambda_{t/a_k}^k| dt``
    truncated to the sampled ``k``.
    """
    d = step.dim
    try:
        seq = step.normalization()
    except ValueError:  # degenerate step: no scaling sequence exists
        seq = None
    ks = np.unique(np.geomspace(1, 2000, 25).astype(int)) if ks is None else np.asarray(ks)
    lam0 = complex(step.char(np.zeros(d)))
    u = np.linspace(-np.pi, np.pi, grid)
    if d == 1:
        U = u[:, None]
    else:
        U1, U2 = np.meshgrid(u, u, indexing="ij")
        U = np.stack([U1.ravel(), U2.ravel()], axis=-1)
    away = np.abs(U).max(axis=1) > b
    sup_away = float(np.abs(step.char(U[away])).max())
    aperiodic = sup_away < 1 - tol and step.aperiodic
    if seq is None:
        return CriteriaReport(lam0, sup_away, False, 0.0, float("inf"), b, eps)
    # grid of t in units of a_k; radial profile along the worst direction
    dirs = [np.array([1.0])] if d == 1 else [np.array([1.0, 0.0]), np.array([0.0, 1.0]),
                                             np.array([1.0, 1.0]) / sqrt(2), np.array([1.0, -1.0]) / sqrt(2)]
    cs = []
    tt = np.geomspace(1e-2, 50, 200)
    envelope = np.zeros_like(tt)
    for k in ks:
        ak = float(seq.a(k))
        inside = tt < b * ak
        if not inside.any():
            continue
        for e in dirs:
            lam = np.abs(step.char(np.outer(tt[inside] / ak, e)))
            with np.errstate(divide="ignore"):
                expo = -k * np.log(lam)
            ref = np.minimum(tt[inside] ** (2 - eps), tt[inside] ** (2 + eps))
            cs.append(float(np.min(expo / ref)))
            envelope[inside] = np.maximum(envelope[inside], lam**k)
    c = max(0.0, min(cs)) if cs else 0.0
    w = (1 + tt**2) * envelope * (tt ** (d - 1) if d == 2 else 1.0)
    integral = float(np.trapezoid(w, tt)) * (2 if d == 1 else 2 * pi)
    return CriteriaReport(lam0, sup_away, bool(aperiodic), c, integral, b, eps)


# ---------------------------------------------------------------------------
# moments of additive functionals


@njit(cache=True)
def _moment_dp_1d(offs, probs, sup_idx, sup_val, N, n, A, checkpoints, binom):
    W = 2 * A + 1
    m = np.zeros((N + 1, W))
    new = np.zeros((N + 1, W))
    m[0, A] = 1.0
    out = np.zeros((checkpoints.shape[0], N + 1))
    leak = np.zeros(checkpoints.shape[0])
    span = 0
    for s in range(offs.shape[0]):
        span = max(span, abs(offs[s]))
    lost = 0.0
    cp = 0
    for k in range(n + 1):
        while cp < checkpoints.shape[0] and checkpoints[cp] == k:
            for j in range(N + 1):
                out[cp, j] = m[j].sum()
            leak[cp] = lost
            cp += 1
        if k == n or cp == checkpoints.shape[0]:
            break
        # add beta at the current position: (x + b)^j = sum_r C(j,r) x^r b^(j-r)
        for q in range(sup_idx.shape[0]):
            x = sup_idx[q]
            bv = sup_val[q]
            for j in range(N, 0, -1):
                acc = m[j, x]
                bp = 1.0
                for r in range(j - 1, -1, -1):
                    bp *= bv
                    acc += binom[j, r] * bp * m[r, x]
                m[j, x] = acc
        reach = min(A, k * span)
        lo = A - reach
        hi = A + reach + 1
        before = m[0, lo:hi].sum()
        new[:, :] = 0.0
        for s in range(offs.shape[0]):
            o = offs[s]
            p = probs[s]
            for x in range(max(lo, -o), min(hi, W - o)):
                for j in range(N + 1):
                    new[j, x + o] += p * m[j, x]
        m, new = new, m
        lost += max(0.0, before - m[0].sum())
    return out, leak


@njit(cache=True)
def _moment_dp_2d(offs, probs, sup_idx, sup_val, N, n, A, checkpoints, binom):
    W = 2 * A + 1
    m = np.zeros((N + 1, W, W))
    new = np.zeros((N + 1, W, W))
    m[0, A, A] = 1.0
    out = np.zeros((checkpoints.shape[0], N + 1))
    leak = np.zeros(checkpoints.shape[0])
    span = 0
    for s in range(offs.shape[0]):
        span = max(span, abs(offs[s, 0]), abs(offs[s, 1]))
    lost = 0.0
    cp = 0
    for k in range(n + 1):
        while cp < checkpoints.shape[0] and checkpoints[cp] == k:
            for j in range(N + 1):
                out[cp, j] = m[j].sum()
            leak[cp] = lost
            cp += 1
        if k == n or cp == checkpoints.shape[0]:
            break
        for q in range(sup_idx.shape[0]):
            x = sup_idx[q, 0]
            y = sup_idx[q, 1]
            bv = sup_val[q]
            for j in range(N, 0, -1):
                acc = m[j, x, y]
                bp = 1.0
                for r in range(j - 1, -1, -1):
                    bp *= bv
                    acc += binom[j, r] * bp * m[r, x, y]
                m[j, x, y] = acc
        reach = min(A, k * span)
        lo = A - reach
        hi = A + reach + 1
        before = m[0, lo:hi, lo:hi].sum()
        new[:, lo:hi, lo:hi] = 0.0
        nlo = max(0, lo - span)
        nhi = min(W, hi + span)
        new[:, nlo:nhi, nlo:nhi] = 0.0
        for s in range(offs.shape[0]):
            o0 = offs[s, 0]
            o1 = offs[s, 1]
            p = probs[s]
            for x in range(max(lo, -o0), min(hi, W - o0)):
                for y in range(max(lo, -o1), min(hi, W - o1)):
                    for j in range(N + 1):
                        new[j, x + o0, y + o1] += p * m[j, x, y]
        m, new = new, m
        lost += max(0.0, before - m[0].sum())
    return out, leak


@dataclass
class MomentTable:
    checkpoints: np.ndarray
    moments: np.ndarray  # (len(checkpoints), N+1): E[X^j]
    leaked_mass: np.ndarray
    method: str

    def moment(self, j):
        return self.moments[:, j]


def exact_moment_dp(step, spec, N, n, half_width=None, checkpoints=None, leak_bound=1e-9):
    """``E[(sum_{k<n'} beta(S_k))^j]`` for ``j <= N`` at each checkpoint ``n'``.

    Keeps ``m_j(k, a) = E[X_k^j 1{S_k = a}]`` with ``X_k`` the sum over times
    before ``k``; each step first adds ``beta(a)`` through the binomial
    expansion, then convolves in space.
    """
    if N > 8:
        raise ValueError("moment degree capped at 8")
    if N < 0 or n < 0:
        raise ValueError("N and n must be non-negative")
    cps = np.asarray([n] if checkpoints is None else checkpoints, dtype=np.int64)
    if np.any(np.diff(cps) < 0) or cps[-1] > n:
        raise ValueError("checkpoints must be sorted and <= n")
    d = step.dim
    if spec.dim is not None and spec.dim != d:
        raise ValueError("observable and step dimensions differ")
    A = suggest_half_width(step, n) if half_width is None else int(half_width)
    A = max(A, max((max(abs(x) for x in c) for c in spec.beta), default=0))
    binom = np.array([[comb(j, r) for r in range(N + 1)] for j in range(N + 1)], dtype=np.float64)
    cells = np.array(sorted(spec.beta), dtype=np.int64).reshape(-1, d) + A
    vals = np.array([spec.beta[c] for c in sorted(spec.beta)], dtype=np.float64)
    if d == 1:
        out, leak = _moment_dp_1d(step.offsets[:, 0].copy(), step.probs, cells[:, 0].copy(), vals, N, n, A, cps, binom)
    else:
        out, leak = _moment_dp_2d(step.offsets, step.probs, cells, vals, N, n, A, cps, binom)
    if leak[-1] > leak_bound:
        raise ValueError(f"truncation leak {leak[-1]:.3g} exceeds bound {leak_bound:.3g}")
    return MomentTable(cps, out, leak, "dp")


# ---------------------------------------------------------------------------
# return probabilities and renewal moments of the local time


@njit(cache=True)
def _lambda_at(offs, probs, t0, t1, d):
    re = 0.0
    im = 0.0
    for s in range(offs.shape[0]):
        ph = t0 * offs[s, 0] + (t1 * offs[s, 1] if d == 2 else 0.0)
        re += probs[s] * np.cos(ph)
        im += probs[s] * np.sin(ph)
    return re, im


@njit(cache=True)
def _collect(offs, probs, d, M, logcut):
    """Grid points whose ``|lambda|`` exceeds ``exp(logcut)``."""
    tot = M if d == 1 else M * M
    h = 2.0 * np.pi / M
    count = 0
    for idx in range(tot):
        i = idx % M
        j = idx // M
        re, im = _lambda_at(offs, probs, h * i, h * j, d)
        if 0.5 * np.log(re * re + im * im + 1e-300) > logcut:
            count += 1
    lre = np.empty(count)
    lim = np.empty(count)
    c = 0
    for idx in range(tot):
        i = idx % M
        j = idx // M
        re, im = _lambda_at(offs, probs, h * i, h * j, d)
        if 0.5 * np.log(re * re + im * im + 1e-300) > logcut:
            lre[c] = re
            lim[c] = im
            c += 1
    return lre, lim


@njit(cache=True)
def _power_sums(lre, lim, k0, k1, norm, out):
    """``out[k] = Re sum lambda^k / norm`` for ``k0 <= k < k1``."""
    n = lre.shape[0]
    pre = np.empty(n)
    pim = np.empty(n)
    for q in range(n):
        # lambda^k0 by repeated squaring in polar form
        r = np.sqrt(lre[q] * lre[q] + lim[q] * lim[q])
        th = np.arctan2(lim[q], lre[q])
        rk = r**k0
        pre[q] = rk * np.cos(k0 * th)
        pim[q] = rk * np.sin(k0 * th)
    real = True
    for q in range(n):
        if lim[q] != 0.0:
            real = False
            break
    for k in range(k0, k1):
        s = 0.0
        if real:
            for q in range(n):
                s += pre[q]
                pre[q] *= lre[q]
        else:
            for q in range(n):
                s += pre[q]
                a = pre[q] * lre[q] - pim[q] * lim[q]
                pim[q] = pre[q] * lim[q] + pim[q] * lre[q]
                pre[q] = a
        out[k] = s / norm


@njit(cache=True)
def _select(lre, lim, logcut):
    keep = 0.5 * np.log(lre * lre + lim * lim + 1e-300) > logcut
    return lre[keep], lim[keep]


def return_probabilities(step, n, tail=1e-18, sigmas=11.0, max_grid=None):
    """``u_k = nu(S_k = 0)`` for ``0 <= k < n`` by Fourier quadrature.

    On an ``M^d`` frequency grid the trapezoidal rule returns
    ``sum_{a in M Z^d} nu(S_k = a)``, so with ``M`` beyond the range of
    ``S_k`` the only error is that aliasing tail (bounded through
    ``sigmas`` standard deviations, or by the grid cap ``max_grid`` for
    heavy-tailed steps) plus the grid points dropped because
    ``|lambda|^k < tail``.  Times are processed in doubling blocks that share
    a grid.
    """
    d = step.dim
    if max_grid is None:
        max_grid = 1 << 22 if d == 1 else 1 << 14
    offs = step.offsets if d == 2 else np.column_stack([step.offsets[:, 0], np.zeros(len(step.probs), np.int64)])
    probs = step.probs
    sd = sqrt(np.diag(step.covariance).max())
    mu = float(np.abs(step.mean).max())
    out = np.zeros(n)
    k0 = 0
    lam_cache = {}
    while k0 < n:
        k1 = min(n, max(64, 2 * k0))
        exact_M = 2 * (k1 - 1) * step.span + 1
        M = int(min(exact_M, max_grid, 2 * ceil(mu * k1 + sigmas * sd * sqrt(k1) + step.span) + 1))
        logcut = np.log(tail) / max(k0, 1)
        if d == 1:
            if M not in lam_cache:
                pmf = np.zeros(M)
                np.add.at(pmf, step.offsets[:, 0] % M, probs)
                lam = np.fft.fft(pmf)
                lam_cache = {M: (lam.real.copy(), lam.imag.copy())}
            lre, lim = _select(*lam_cache[M], logcut)
        else:
            lre, lim = _collect(offs, probs, d, M, logcut)
        _power_sums(lre, lim, k0, k1, float(M) ** d, out)
        k0 = k1
    return out


def renewal_moments(u, N, checkpoints):
    """Moments ``E[L_{n'}^j]``, ``j <= N``, of ``L_{n'} = #{k < n' : S_k = 0}``.

    Uses ``E[C(L, m)] = sum_{k_1 < ... < k_m < n'} u_{k_1} u_{k_2-k_1} ...``
    (Markov property) and ``L^N = sum_m S(N, m) m! C(L, m)``.
    """
    u = np.asarray(u, dtype=np.float64)
    n = len(u)
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.max() > n:
        raise ValueError("checkpoint beyond available return probabilities")
    v = u.copy()
    v[0] = 0.0
    g = u.copy()
    T = np.zeros((N + 1, len(cps)))
    T[0] = 1.0
    for m in range(1, N + 1):
        if m > 1:
            g = fftconvolve(g, v)[:n]
        cs = np.concatenate([[0.0], np.cumsum(g)])
        T[m] = cs[cps]
    mom = np.zeros((len(cps), N + 1))
    mom[:, 0] = 1.0
    for j in range(1, N + 1):
        for m in range(1, j + 1):
            mom[:, j] += stirling2(j, m, exact=True) * float(np.prod(np.arange(1, m + 1))) * T[m]
    return MomentTable(cps, mom, np.zeros(len(cps)), "renewal")


def first_return_law(u):
    """First-return probabilities ``f_k`` (``f_0 = 0``) from ``u``.

    ``U(z) = 1 / (1 - F(z))``, so ``F = 1 - 1/U``; the series reciprocal is
    taken by Newton iteration with FFT products.
    """
    u = np.asarray(u, dtype=np.float64)
    n = len(u)
    g = np.array([1.0 / u[0]])
    while len(g) < n:
        L = min(n, 2 * len(g))
        e = fftconvolve(u[:L], g)[:L]
        e = -e
        e[0] += 2.0
        g = fftconvolve(g, e)[:L]
    f = -g
    f[0] = 0.0
    return f


@njit(cache=True)
def first_return_direct(u):
    """Quadratic-time recursion ``u_k = sum_{j=1}^k f_j u_{k-j}`` (reference)."""
    n = u.shape[0]
    f = np.zeros(n)
    for k in range(1, n):
        s = u[k]
        for j in range(1, k):
            s -= f[j] * u[k - j]
        f[k] = s / u[0]
    return f


# ---------------------------------------------------------------------------
# Monte Carlo walks


def alias_table(probs):
    """Walker/Vose alias table ``(threshold, alias)`` for O(1) sampling."""
    p = np.asarray(probs, dtype=np.float64)
    n = len(p)
    scaled = p * n / p.sum()
    thr = np.ones(n)
    alias = np.arange(n)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s, l = small.pop(), large.pop()
        thr[s] = scaled[s]
        alias[s] = l
        scaled[l] -= 1.0 - scaled[s]
        (small if scaled[l] < 1.0 else large).append(l)
    return thr, alias


@njit(cache=True)
def _walk_ensemble(seed, first, count, n, checkpoints, offs, thr, alias, obs_sup, obs_val, obs_len, d):
    nq = obs_len.shape[0]
    ncp = checkpoints.shape[0]
    K = thr.shape[0]
    sums = np.zeros((count, nq, ncp))
    for it in range(count):
        key = _rng.stream_key(seed, first + it)
        s0 = 0
        s1 = 0
        acc = np.zeros(nq)
        cp = 0
        for k in range(n + 1):
            while cp < ncp and checkpoints[cp] == k:
                for q in range(nq):
                    sums[it, q, cp] = acc[q]
                cp += 1
            if k == n or cp == ncp:
                break
            for q in range(nq):
                for e in range(obs_len[q]):
                    if obs_sup[q, e, 0] == s0 and (d == 1 or obs_sup[q, e, 1] == s1):
                        acc[q] += obs_val[q, e]
            x = _rng.uniform(key, k) * K
            c = int(x)
            if x - c >= thr[c]:
                c = alias[c]
            s0 += offs[c, 0]
            if d == 2:
                s1 += offs[c, 1]
    return sums


def walk_ensemble(step, specs, n, checkpoints, count, seed, first=0):
    """Birkhoff sums ``sum_{k<c} beta(S_k)`` of i.i.d. walks started at 0.

    Returns an array ``(count, len(specs), len(checkpoints))``; trajectory
    ``first + i`` uses counter stream ``(seed, first + i)``.
    """
    from .billiard import pack_observables

    d = step.dim
    offs = step.offsets if d == 2 else np.column_stack([step.offsets[:, 0], np.zeros(len(step.probs), np.int64)])
    thr, alias = alias_table(step.probs)
    sup, val, ln = pack_observables(specs, d)
    cps = np.asarray(checkpoints, dtype=np.int64)
    return _walk_ensemble(seed, first, count, n, cps, offs, thr, alias, sup, val, ln, d)


# ---------------------------------------------------------------------------
# scaling diagnostics


def local_scaling(step, u, ks):
    """``a_k^d nu(S_k = 0)`` at the requested times (should approach phi0)."""
    seq = step.normalization()
    ks = np.asarray(ks)
    return seq.a(ks) ** step.dim * np.asarray(u)[ks]


def q_double_bound_ratio(occ, seq, ks, pairs, eps=0.25):
    """``|Q''(k,a,b)| a_k^(d+2 eta) / (|a||b|)^eta`` over sampled ``(k, a, b)``."""
    eta = (seq.alpha - seq.d + eps) / 2
    out = []
    for k in ks:
        ak = float(seq.a(k))
        for a, b in pairs:
            na, nb = np.linalg.norm(a), np.linalg.norm(b)
            if na == 0 or nb == 0:
                continue
            out.append(abs(q_double_diff(occ, k, a, b)) * ak ** (seq.d + 2 * eta) / (na * nb) ** eta)
    return np.array(out)
