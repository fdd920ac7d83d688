"""Ensemble experiments, normalized moments, distributional comparisons.

Monte Carlo runs are split into fixed chunks of trajectories; per-chunk
power sums are merged by a pairwise tree in chunk order, so reports depend
only on the seed and the configuration.
"""
import csv
import hashlib
import json
from dataclasses import dataclass, field
from math import sqrt

import numpy as np
from scipy.stats import ks_2samp

from . import billiard as _bil
from .geometry import BilliardTable
from .limit_laws import LimitSpec, mixture_moment, ml_moment, sample_local_time_limit, sample_joint_fdd, sigma_beta_sq
from .observables import NormalizationSeq, ObservableSpec
from .rng import generator
from .rw_oracle import StepDistribution, convolve, exact_moment_dp, walk_ensemble

SCHEMA_VERSION = 1
CHUNK = 1024
BOOTSTRAP_RESAMPLES = 1000
MAX_TRUNCATED_FRACTION = 0.01


class TruncationError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    """One experiment: a billiard table or a walk step, observables, checkpoints.

    ``mode`` is ``"mc"`` (Monte Carlo) or ``"exact"`` (moment recursion,
    walks only).  For joint runs (``joint=True``) ``specs`` is ``[g, f]``
    with ``f`` null-sum.  ``times`` are fractions of ``n_max`` for functional
    tests; ``t_max`` and ``watched_cells`` drive flow runs.
    """

    system: str
    specs: list
    seq: NormalizationSeq
    n_max: int
    checkpoints: list
    trajectories: int = 0
    seed: int = 0
    table: BilliardTable = None
    step: StepDistribution = None
    mode: str = "mc"
    moments: int = 4
    times: tuple = ()
    joint: bool = False
    watched_cells: tuple = ()
    t_max: float = 0.0
    phi0: float = None
    sigma_sq: float = None

    def __post_init__(self):
        if self.system not in ("billiard", "walk"):
            raise ValueError("system must be 'billiard' or 'walk'")
        if self.system == "billiard" and self.table is None:
            raise ValueError("billiard experiments need a table")
        if self.system == "walk" and self.step is None:
            raise ValueError("walk experiments need a step distribution")
        if self.mode not in ("mc", "exact"):
            raise ValueError("mode must be 'mc' or 'exact'")
        if self.mode == "exact" and self.system != "walk":
            raise ValueError("exact mode is available for walks only")
        cps = list(self.checkpoints)
        if any(b < a for a, b in zip(cps, cps[1:])) or (cps and (cps[-1] > self.n_max or cps[0] < 1)):
            raise ValueError("checkpoints must be sorted and lie in [1, n_max]")
        if self.trajectories < 0:
            raise ValueError("trajectories must be non-negative")
        if not 1 <= self.moments <= 8:
            raise ValueError("moments must lie in [1, 8]")
        if self.joint and (len(self.specs) != 2 or not self.specs[1].null_sum):
            raise ValueError("joint runs need specs [g, f] with f null-sum")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")

    @property
    def dim(self):
        return self.table.dim if self.system == "billiard" else self.step.dim

    def to_dict(self):
        from .config import experiment_to_dict

        return experiment_to_dict(self)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class MomentReport:
    """Rows ``(checkpoint_n, statistic, value, stderr, predicted, provenance)``."""

    config_hash: str
    seed: int
    rows: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    error: str = ""
    schema_version: int = SCHEMA_VERSION

    COLUMNS = ("checkpoint_n", "statistic", "value", "stderr", "predicted", "provenance")

    @property
    def ok(self):
        return not self.error

    def add(self, n, statistic, value, stderr=None, predicted=None, provenance=""):
        self.rows.append({"checkpoint_n": int(n), "statistic": statistic, "value": _num(value),
                          "stderr": _num(stderr), "predicted": _num(predicted), "provenance": provenance})

    def get(self, statistic, n=None):
        for r in self.rows:
            if r["statistic"] == statistic and (n is None or r["checkpoint_n"] == n):
                return r
        raise KeyError((statistic, n))

    def to_json(self, path=None):
        doc = {"schema_version": self.schema_version, "config_hash": self.config_hash, "seed": self.seed,
               "error": self.error, "diagnostics": self.diagnostics, "rows": self.rows}
        text = json.dumps(doc, indent=1, sort_keys=True, default=_num)
        if path:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {doc.get('schema_version')}")
        return cls(doc["config_hash"], doc["seed"], doc["rows"], doc["diagnostics"], doc["error"])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow(r)


def _num(x):
    if x is None:
        return None
    if isinstance(x, (np.integer,)):
        return int(x)
    x = float(x)
    return x if np.isfinite(x) else str(x)


# ---------------------------------------------------------------------------
# comparisons


def ks_two_sample(a, b):
    """Two-sample Kolmogorov-Smirnov ``(statistic, p_value)``."""
    res = ks_2samp(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    return float(res.statistic), float(res.pvalue)


def bootstrap(stat, data, rng, resamples=BOOTSTRAP_RESAMPLES):
    """Bootstrap replicates of ``stat`` over the rows of ``data``."""
    data = np.asarray(data)
    n = len(data)
    out = []
    for _ in range(resamples):
        out.append(stat(data[rng.integers(0, n, n)]))
    return np.asarray(out)


def bootstrap_ci(stat, data, rng, level=0.99, resamples=BOOTSTRAP_RESAMPLES):
    reps = bootstrap(stat, data, rng, resamples)
    lo, hi = np.quantile(reps, [(1 - level) / 2, (1 + level) / 2], axis=0)
    return lo, hi


def tree_sum(parts):
    """Pairwise sum in a fixed order (deterministic merge of chunk accumulators)."""
    parts = list(parts)
    if not parts:
        return 0.0
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def robust_scale(x):
    """Gaussian-consistent scale from the interquartile range."""
    q1, q3 = np.quantile(x, [0.25, 0.75])
    return (q3 - q1) / 1.3489795003921634


def estimate_phi0(positions, a_n, groups=20):
    """Density at 0 of the Gaussian limit of ``S_n / a_n``, from a robust
    covariance of the sampled endpoints, with a delete-group jackknife error.

    The cell-change function is not square integrable, so the sample
    covariance is replaced by interquartile-range scales (and, for ``d = 2``,
    scales of the diagonal projections for the off-diagonal term).
    """
    x = np.asarray(positions, dtype=np.float64) / a_n
    x = x[:, None] if x.ndim == 1 else x

    def phi(z):
        if z.shape[1] == 1:
            return 1.0 / (sqrt(2 * np.pi) * robust_scale(z[:, 0]))
        s1, s2 = robust_scale(z[:, 0]), robust_scale(z[:, 1])
        sp, sm = robust_scale((z[:, 0] + z[:, 1]) / sqrt(2)), robust_scale((z[:, 0] - z[:, 1]) / sqrt(2))
        c12 = (sp**2 - sm**2) / 2
        return 1.0 / (2 * np.pi * sqrt(s1**2 * s2**2 - c12**2))

    full = phi(x)
    idx = np.array_split(np.arange(len(x)), groups)
    loo = np.array([phi(np.delete(x, g, axis=0)) for g in idx])
    se = sqrt((groups - 1) / groups * np.sum((loo - loo.mean()) ** 2))
    return float(full), float(se)


# ---------------------------------------------------------------------------
# ensembles


def _chunks(total):
    return [(s, min(CHUNK, total - s)) for s in range(0, total, CHUNK)]


def sample_sums(cfg, checkpoints=None, with_positions=False):
    """Raw Birkhoff sums ``(trajectories, len(specs), len(checkpoints))``.

    Billiard runs start from ``mu``-distributed states and also return the
    endpoint cells at each checkpoint when ``with_positions``; the number of
    truncated trajectories is returned alongside.
    """
    cps = np.asarray(cfg.checkpoints if checkpoints is None else checkpoints, dtype=np.int64)
    if cfg.system == "walk":
        sums = walk_ensemble(cfg.step, cfg.specs, int(cps[-1]), cps, cfg.trajectories, cfg.seed)
        return sums, None, 0
    tab = cfg.table
    cx, cy, r, cm, cdi, cdj, cw = tab.arrays
    sup, val, ln = _bil.pack_observables(cfg.specs, tab.dim)
    out, pos, trunc = [], [], []
    for first, count in _chunks(cfg.trajectories):
        s, p, t = _bil.map_ensemble(cfg.seed, first, count, int(cps[-1]), cps, sup, val, ln, tab.dim,
                                    cx, cy, r, cm, cdi, cdj, cw, tab.max_cell_traversal)
        out.append(s)
        pos.append(p[:, :, : tab.dim])
        trunc.append(t)
    trunc = np.concatenate(trunc)
    n_trunc = int(trunc.sum())
    if n_trunc > MAX_TRUNCATED_FRACTION * max(1, cfg.trajectories):
        raise TruncationError(f"{n_trunc} of {cfg.trajectories} trajectories truncated")
    keep = ~trunc
    sums = np.concatenate(out)[keep]
    positions = np.concatenate(pos)[keep] if with_positions else None
    return sums, positions, n_trunc


def _scales(cfg, spec, cps):
    A = cfg.seq.A(cps)
    return A if not spec.null_sum else np.sqrt(A)


def _predicted(cfg, spec, j, phi0, sigma_sq):
    """Limit of ``E[(X / A_n)^j]`` (integrable) or ``E[(X / sqrt(A_n))^j]`` (null-sum)."""
    if phi0 is None:
        return None
    ls = LimitSpec(cfg.seq.alpha, cfg.dim, phi0, sigma_sq or 0.0)
    if spec.null_sum:
        return None if sigma_sq is None else mixture_moment(ls, j)
    return (spec.total * phi0) ** j * ml_moment(cfg.seq.alpha, cfg.dim, j)


def _moment_stats(x, N):
    """Per-trajectory powers -> moments and ``E[X^4]/E[X^2]^2``-style ratios."""
    return np.array([np.mean(x**j) for j in range(1, N + 1)])


def run_experiment(cfg, phi0=None, sigma_sq=None):
    """Moments of normalized sums at each checkpoint with predictions.

    Returns ``(report, samples)`` where ``samples`` holds the per-trajectory
    normalized statistics (``None`` in exact mode).
    """
    rep = MomentReport(cfg.hash(), cfg.seed)
    cps = np.asarray(cfg.checkpoints, dtype=np.int64)
    N = cfg.moments
    phi0 = cfg.phi0 if phi0 is None else phi0
    sigma_sq = cfg.sigma_sq if sigma_sq is None else sigma_sq
    prov = "analytic"
    if cfg.system == "walk" and phi0 is None:
        phi0 = cfg.step.limit_constants()[2]
    null_specs = [s for s in cfg.specs if s.null_sum]
    if cfg.system == "walk" and sigma_sq is None and len(null_specs) == 1:
        occ = convolve(cfg.step, 10**4, store_half_width=_support_reach(null_specs[0]))
        sigma_sq = sigma_beta_sq(occ, null_specs[0], 10**4).value
    if cfg.mode == "exact":
        for spec in cfg.specs:
            mt = exact_moment_dp(cfg.step, spec, N, int(cps[-1]), checkpoints=cps)
            scale = _scales(cfg, spec, cps)
            for i, n in enumerate(cps):
                for j in range(1, N + 1):
                    rep.add(n, f"m{j}[{spec.name}]", mt.moments[i, j] / scale[i] ** j, 0.0,
                            _predicted(cfg, spec, j, phi0, sigma_sq), f"exact-dp;{prov}")
            rep.diagnostics[f"leak[{spec.name}]"] = [float(x) for x in mt.leaked_mass]
        return rep, None
    if cfg.trajectories == 0:
        rep.error = "no trajectories"
        return rep, np.zeros((0, len(cfg.specs), len(cps)))
    raw, pos, n_trunc = sample_sums(cfg, cps, with_positions=cfg.system == "billiard" and phi0 is None)
    rep.diagnostics["truncated"] = n_trunc
    rep.diagnostics["trajectories"] = int(len(raw))
    if pos is not None:
        phi0, phi_se = estimate_phi0(pos[:, -1, :], float(cfg.seq.a(cps[-1])))
        prov = "estimated-phi0"
        rep.diagnostics["phi0_estimate"] = phi0
        rep.diagnostics["phi0_jackknife_se"] = phi_se
    samples = np.empty_like(raw)
    for q, spec in enumerate(cfg.specs):
        samples[:, q, :] = raw[:, q, :] / _scales(cfg, spec, cps)
    brng = generator(cfg.seed, 2**32 + 1)
    flat = samples.reshape(len(samples), -1)
    powers = np.concatenate([flat**j for j in range(1, N + 1)], axis=1)
    merged = tree_sum([powers[s : s + c].sum(axis=0) for s, c in _chunks(len(powers))]) / len(powers)
    reps = bootstrap(lambda z: z.mean(axis=0), powers, brng) if len(powers) > 1 else np.zeros((1, powers.shape[1]))
    se = reps.std(axis=0, ddof=1) if len(reps) > 1 else np.zeros(powers.shape[1])
    width = flat.shape[1]
    for q, spec in enumerate(cfg.specs):
        for i, n in enumerate(cps):
            col = q * len(cps) + i
            for j in range(1, N + 1):
                rep.add(n, f"m{j}[{spec.name}]", merged[(j - 1) * width + col], se[(j - 1) * width + col],
                        _predicted(cfg, spec, j, phi0, sigma_sq), f"monte-carlo;{prov}")
    return rep, samples


def _support_reach(spec):
    cells = np.array(list(spec.beta), dtype=np.int64)
    return int(2 * np.abs(cells).max() + 1)


def write_samples(samples, cfg, path):
    """CSV dump ``trajectory, statistic, checkpoint_n, value``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trajectory", "statistic", "checkpoint_n", "value"])
        for t in range(samples.shape[0]):
            for q, spec in enumerate(cfg.specs):
                for i, n in enumerate(cfg.checkpoints):
                    w.writerow([t, spec.name, n, repr(float(samples[t, q, i]))])


# ---------------------------------------------------------------------------
# distributional trend of the billiard local time


@dataclass
class TrendReport:
    checkpoints: list
    ks: list
    phi0: float
    phi0_se: float
    means: list
    truncated: int

    @property
    def strictly_decreasing(self):
        return all(b < a for a, b in zip(self.ks, self.ks[1:]))


def local_time_trend(cfg, reference_size=None):
    """KS distance between ``L_n / A_n`` and ``phi0_hat * Y`` at each checkpoint.

    ``phi0_hat`` is estimated once, at the largest checkpoint, and the same
    reference sample is used for every checkpoint.
    """
    if cfg.system != "billiard":
        raise ValueError("local_time_trend runs billiard ensembles")
    lt = ObservableSpec.local_time(cfg.dim)
    run = ExperimentConfig(**{**cfg.__dict__, "specs": [lt]})
    raw, pos, n_trunc = sample_sums(run, with_positions=True)
    cps = np.asarray(run.checkpoints)
    phi0, se = estimate_phi0(pos[:, -1, :], float(run.seq.a(cps[-1])))
    spec = LimitSpec(run.seq.alpha, run.dim, phi0, phi0_estimated=True)
    ref = sample_local_time_limit(spec, generator(cfg.seed, 2**32 + 2), reference_size or len(raw))
    norm = raw[:, 0, :] / run.seq.A(cps)
    ks = [ks_two_sample(norm[:, i], ref)[0] for i in range(len(cps))]
    return TrendReport(list(map(int, cps)), ks, phi0, se, list(norm.mean(axis=0)), n_trunc)


# ---------------------------------------------------------------------------
# joint functional structure


@dataclass
class FddReport:
    times: list
    marginal_ks: list  # (statistic, p) of each first-component marginal vs sampler
    corr: float = None
    corr_ci: tuple = None
    variance_ratio: float = None
    mean_ratio: float = None
    constancy_ks: list = field(default_factory=list)  # d=2: (t_i, t_j, statistic, p)
    first: np.ndarray = None
    second: np.ndarray = None

    @property
    def dependence_ok(self):
        return self.corr_ci is not None and self.corr_ci[0] > 0

    @property
    def mixture_ok(self):
        return self.variance_ratio is not None and abs(self.variance_ratio / self.mean_ratio - 1) <= 0.15

    @property
    def constancy_ok(self):
        return all(p > 0.001 for *_, p in self.constancy_ks)


def fdd_joint_test(cfg, level=0.99, fine_scale=None):
    """Joint law of ``(sum g(S_k) / A_n, sum f(S_k) / sqrt(A_n))`` at ``t_j n``.

    Compares first-component marginals with :func:`sample_joint_fdd`,
    bootstraps ``corr(first, |second|)`` at the last time, checks the
    variance-mixture property by splitting at the median of the first
    component, and for ``d = 2`` compares the first component across times.
    """
    if not cfg.joint:
        raise ValueError("fdd_joint_test needs a joint configuration")
    t = np.asarray(cfg.times, dtype=np.float64)
    cps = np.maximum(1, np.floor(t * cfg.n_max).astype(np.int64))
    run = ExperimentConfig(**{**cfg.__dict__, "checkpoints": list(cps)})
    raw, _, _ = sample_sums(run, cps)
    A = cfg.seq.A(cfg.n_max)
    first = raw[:, 0, :] / A
    second = raw[:, 1, :] / sqrt(A)
    g, f = cfg.specs
    if cfg.system == "walk":
        phi0 = cfg.phi0 or cfg.step.limit_constants()[2]
        sig = cfg.sigma_sq
        if sig is None:
            occ = convolve(cfg.step, 10**4, store_half_width=_support_reach(f))
            sig = sigma_beta_sq(occ, f, 10**4).value
    else:
        phi0, sig = cfg.phi0, cfg.sigma_sq
    rep = FddReport(list(map(float, t)), [], first=first, second=second)
    rng = generator(cfg.seed, 2**32 + 3)
    if phi0 is not None:
        ls = LimitSpec(cfg.seq.alpha, cfg.dim, phi0, sig or 0.0)
        m = fine_scale or max(int(np.ceil(100 / t[0])), 10**5)
        L, _ = sample_joint_fdd(t, ls, m, rng, size=len(first))
        rep.marginal_ks = [ks_two_sample(first[:, j], g.total * L[:, j]) for j in range(len(t))]
    x, y = first[:, -1], np.abs(second[:, -1])
    rep.corr = float(np.corrcoef(x, y)[0, 1])
    rep.corr_ci = tuple(map(float, bootstrap_ci(lambda z: np.corrcoef(z[:, 0], z[:, 1])[0, 1],
                                                np.column_stack([x, y]), rng, level)))
    med = np.median(x)
    lo, hi = x <= med, x > med
    if lo.sum() > 1 and hi.sum() > 1 and x[lo].mean() > 0:
        s = second[:, -1]
        rep.variance_ratio = float(np.var(s[hi]) / np.var(s[lo]))
        rep.mean_ratio = float(x[hi].mean() / x[lo].mean())
    if cfg.dim == 2:
        for i in range(len(t)):
            for j in range(i + 1, len(t)):
                rep.constancy_ks.append((float(t[i]), float(t[j]), *ks_two_sample(first[:, i], first[:, j])))
    return rep


# ---------------------------------------------------------------------------
# flow


@dataclass
class FlowReport:
    times: np.ndarray
    mean_tau: float
    rate: np.ndarray  # mean of n_t / t per time
    rate_se: np.ndarray
    time_change_ratio: float
    null_mean: float
    null_se: float
    local_time_mean: float
    truncated: int

    @property
    def rate_stable(self):
        """``n_t / t`` within 2% of its last value over the final decade."""
        last = self.rate[-1]
        dec = self.times >= self.times[-1] / 10
        return bool(np.all(np.abs(self.rate[dec] / last - 1) <= 0.02))

    @property
    def null_ok(self):
        return abs(self.null_mean) <= 3 * self.null_se


def mean_free_time(table):
    """``E[tau] = pi |free area| / |boundary|`` under the collision measure."""
    area = 1.0 - sum(np.pi * d.r**2 for d in table.disks)
    return np.pi * area / table.perimeter()


def flow_experiment(cfg, times=None):
    """Collision counts of the flow at times ``t``.

    ``cfg.specs`` is ``[local time at 0, null-sum beta]``; the flow is started
    from a ``mu``-distributed collision state.  Reports the collision rate
    ``n_t / t`` (ergodic limit ``1 / E[tau]``), the time-change ratio
    ``A_{n_T} / (A_T / E[tau]^((2-d)/2))`` and the mean of
    ``A_T^(-1/2) sum_l beta_l N_T(l)``.
    """
    tab = cfg.table
    T = float(cfg.t_max)
    times = np.asarray(times if times is not None else np.geomspace(T / 100, T, 21), dtype=np.float64)
    cx, cy, r, cm, cdi, cdj, cw = tab.arrays
    sup, val, ln = _bil.pack_observables(cfg.specs, tab.dim)
    parts = [_bil.flow_ensemble(cfg.seed, first, count, times, sup, val, ln, tab.dim,
                                cx, cy, r, cm, cdi, cdj, cw, tab.max_cell_traversal)
             for first, count in _chunks(cfg.trajectories)]
    ncoll = np.concatenate([p[0] for p in parts])
    sums = np.concatenate([p[1] for p in parts])
    trunc = np.concatenate([p[2] for p in parts])
    if trunc.sum() > MAX_TRUNCATED_FRACTION * len(trunc):
        raise TruncationError(f"{int(trunc.sum())} of {len(trunc)} flow trajectories truncated")
    ncoll, sums = ncoll[~trunc], sums[~trunc]
    rate = (ncoll / times).mean(axis=0)
    rate_se = (ncoll / times).std(axis=0, ddof=1) / sqrt(len(ncoll))
    Et = mean_free_time(tab)
    seq = cfg.seq
    A_T = seq.A(int(T))
    tc = float(np.mean(seq.A(np.maximum(1, ncoll[:, -1]))) / (A_T / Et ** ((2 - tab.dim) / 2)))
    null = sums[:, 1, -1] / sqrt(A_T)
    return FlowReport(times, Et, rate, rate_se, tc, float(null.mean()), float(null.std(ddof=1) / sqrt(len(null))),
                      float((sums[:, 0, -1] / A_T).mean()), int(trunc.sum()))


def map_flow_consistency(table, n, seed, watched):
    """Flow counts at the k-th collision time equal map counts over collisions ``1..k``."""
    init = _bil.sample_initial(table, generator(seed))
    rec = _bil.run_map(init, n, table)
    t = np.cumsum(rec.flight_times)
    flow = _bil.run_flow(init, float(t[-1]) * (1 + 1e-12), table, watched, checkpoints=t)
    cells = [tuple(c) for c in rec.cells[1:]]
    mism = 0
    for q, c in enumerate(flow.watched_cells):
        cum = np.cumsum([cc == c for cc in cells])
        mism += int(np.sum(flow.counts[:, q] != cum))
    return mism, int(np.sum(flow.collisions != np.arange(1, len(t) + 1)))


def hopf_ratios(table, n, checkpoints, trajectories, seed):
    """``sum_k (tau 1_{cell 0})(T^k x) / #{k : S_k = 0}`` at checkpoints.

    Both numerator and denominator are integrable for the infinite measure,
    so the ratio tends to ``E[tau]`` under the normalized cell-0 measure.
    Entries are ``inf`` where cell 0 was not visited.
    """
    out = np.full((trajectories, len(checkpoints)), np.inf)
    for i in range(trajectories):
        rec = _bil.run_map(_bil.sample_initial(table, generator(seed, i)), n, table)
        m = len(rec.flight_times)
        at0 = np.all(rec.cells[:m] == 0, axis=1)
        h = np.concatenate([[0.0], np.cumsum(rec.flight_times * at0)])
        c0 = np.concatenate([[0], np.cumsum(at0)])
        for j, c in enumerate(checkpoints):
            if c <= m and c0[c] > 0:
                out[i, j] = h[c] / c0[c]
    return out
