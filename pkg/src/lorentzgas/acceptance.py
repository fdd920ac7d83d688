"""Named end-to-end checks, runnable from the CLI (``verify``) and from pytest.

Each check returns a :class:`CheckResult` with the measured quantities; the
scale parameters default to the full acceptance scale.
"""
import time
from dataclasses import dataclass, field
from math import gamma, pi, sqrt

import numpy as np

from . import billiard as bil
from .geometry import canonical_table, next_collision, reflect, Ray
from .limit_laws import LimitSpec, ml_moment, sigma_beta_sq
from .observables import NormalizationSeq, ObservableSpec
from .rng import generator
from .rw_oracle import (convolve, decomposition_residual_1d, decomposition_residual_pairs, exact_moment_dp,
                        fourier_occupation, lazy_walk, renewal_moments, return_probabilities,
                        stable_step_builder, walk_ensemble)
from .stats import (ExperimentConfig, fdd_joint_test, flow_experiment, ks_two_sample, local_time_trend,
                    map_flow_consistency, mean_free_time)


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name} ({self.seconds:.1f}s): {shown}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _timed(name, fn):
    t0 = time.perf_counter()
    passed, details = fn()
    return CheckResult(name, bool(passed), details, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# 1. oracle identities


def oracle_identities(depth=2000):
    def run():
        d = {}
        ok = True
        for step in (lazy_walk(1), lazy_walk(2)):
            store = None if step.dim == 1 else 8
            occ = convolve(step, depth, store_half_width=store)
            full = convolve(step, depth, keep=[1, 10, 100, depth]) if step.dim == 2 else occ
            sums = occ.rows.reshape(len(occ.ks), -1).sum(axis=1) if step.dim == 1 else \
                np.array([full.row(k).sum() for k in full.ks])
            leak = occ.leaked_mass[occ.ks] if step.dim == 1 else full.leaked_mass[full.ks]
            cons = float(np.max(np.abs(sums + leak - 1)))
            if step.dim == 1:
                dec = max(decomposition_residual_1d(occ, k) for k in range(depth + 1))
            else:
                w = occ.store_half_width
                g = np.arange(-w, w + 1)
                pts = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
                ia, ib = np.meshgrid(np.arange(len(pts)), np.arange(len(pts)), indexing="ij")
                a, b = pts[ia.ravel()], pts[ib.ravel()]
                inr = np.all(np.abs(b - a) <= w, axis=1)
                a, b = a[inr], b[inr]
                dec = max(decomposition_residual_pairs(occ, k, a, b) for k in range(depth + 1))
            four = 0.0
            for k in (0, 1, 2, 10, 100, 1000, depth):
                A = 40 if step.dim == 1 else 12
                ref = convolve(step, k, keep=[k], store_half_width=A).row(k)
                four = max(four, float(np.max(np.abs(fourier_occupation(step, k, A) - ref))))
            tag = step.name
            d[f"{tag}.conservation"] = cons
            d[f"{tag}.decomposition"] = dec
            d[f"{tag}.fourier_vs_conv"] = four
            ok &= cons <= 1e-12 and dec <= 1e-15 and four < 1e-10
        return ok, d

    return _timed("1 oracle identities", run)


# ---------------------------------------------------------------------------
# 2-4. one-dimensional exact moments


def _lazy1d_setup():
    step = lazy_walk(1)
    seq = NormalizationSeq(1, 2.0, "pure_power", sqrt(0.5))
    return step, seq, step.limit_constants()[2]


def local_time_mean_1d(n=10**5):
    def run():
        step, seq, phi0 = _lazy1d_setup()
        mt = exact_moment_dp(step, ObservableSpec.local_time(1), 1, n)
        ratio = mt.moments[-1, 1] / seq.A(n)
        target = phi0 * ml_moment(2, 1, 1)
        return abs(ratio / target - 1) <= 0.02, {"E[L_n]/A_n": ratio, "target": target,
                                                   "rel_err": ratio / target - 1, "leak": float(mt.leaked_mass[-1])}

    return _timed("2 local-time mean d=1", run)


def _null_sum_moments(n, cps):
    step, seq, phi0 = _lazy1d_setup()
    beta = ObservableSpec.difference(0, 1)
    mt = exact_moment_dp(step, beta, 4, n, checkpoints=cps)
    occ = convolve(step, 10**4, store_half_width=2)
    sb = sigma_beta_sq(occ, beta, 10**4)
    return seq, phi0, mt, sb


def null_sum_second_moment_1d(n=10**5):
    def run():
        seq, phi0, mt, sb = _null_sum_moments(n, [n])
        ratio = mt.moments[-1, 2] / seq.A(n)
        target = sb.value * phi0
        agree = abs(sb.via_21 - sb.via_22) <= sb.tail_bound
        return agree and abs(ratio / target - 1) <= 0.05, {
            "E[X^2]/A_n": ratio, "sigma2_phi0": target, "rel_err": ratio / target - 1,
            "sigma2_via21": sb.via_21, "sigma2_via22": sb.via_22, "tail_bound": sb.tail_bound}

    return _timed("3 null-sum second moment d=1", run)


def fourth_moment_ratio_1d(n=10**5):
    def run():
        cps = [10**3, 10**4, n]
        _, _, mt, _ = _null_sum_moments(n, cps)
        r = mt.moments[:, 4] / mt.moments[:, 2] ** 2
        target = 3 * ml_moment(2, 1, 2)
        dist = np.abs(r - target)
        mono = bool(np.all(np.diff(dist) < 0))
        return mono and abs(r[-1] / target - 1) <= 0.10, {"ratios": list(map(float, r)), "target": target,
                                                           "monotone": mono}

    return _timed("4 fourth-moment ratio d=1", run)


# ---------------------------------------------------------------------------
# 5. d = 2 exponential limit


def exponential_limit_2d(cps=(10**4, 10**5, 10**6)):
    def run():
        step = lazy_walk(2)
        seq = NormalizationSeq(2, 2.0, "pure_power", 1.0)
        phi0 = step.limit_constants()[2]
        u = return_probabilities(step, cps[-1])
        mt = renewal_moments(u, 2, list(cps))
        A = seq.A(list(cps))
        m1 = mt.moments[:, 1] / A
        cv2 = mt.moments[:, 2] / mt.moments[:, 1] ** 2 - 1
        trend = bool(np.all(np.diff(np.abs(cv2 - 1)) < 0))
        return trend and abs(m1[-1] / phi0 - 1) <= 0.10, {
            "E[L_n]/A_n": list(map(float, m1)), "phi0": phi0, "Var/E^2": list(map(float, cv2)), "trend": trend}

    return _timed("5 exponential limit d=2", run)


# ---------------------------------------------------------------------------
# 6. general-index Mittag-Leffler


def stable_ml_ratio(n=10**5, trajectories=10**5, seed=20240601):
    def run():
        step = stable_step_builder(1.5, 10**4)
        lt = ObservableSpec.local_time(1)
        x = walk_ensemble(step, [lt], n, [n], trajectories, seed)[:, 0, 0]
        seq = step.normalization()
        y = x / seq.A(n)
        ratio = float(np.mean(y**2) / np.mean(y) ** 2)
        target = 2 * gamma(4 / 3) ** 2 / gamma(5 / 3)
        exact = renewal_moments(return_probabilities(step, n), 2, [n]).moments[0]
        return abs(ratio / target - 1) <= 0.10, {"ratio_mc": ratio, "target": target,
                                                  "ratio_exact_finite_n": float(exact[2] / exact[1] ** 2),
                                                  "fitted_alpha": step.alpha}

    return _timed("6 general-index Mittag-Leffler", run)


# ---------------------------------------------------------------------------
# 7. billiard invariants


def billiard_invariants(samples=10**6, flights=10**7, seed=7):
    def run():
        tab2 = canonical_table(2)
        tube = canonical_table(1)
        d = {}
        # speed preservation on actual hits
        g = generator(seed)
        worst = 0.0
        for _ in range(2000):
            init = bil.sample_initial(tab2, g)
            px, py = init.base.position(tab2)
            vx, vy = init.base.velocity()
            c = next_collision(Ray((px, py), (vx, vy)), tab2, skip_disk=init.base.disk_id)
            w = reflect((vx, vy), c.inward_normal)
            worst = max(worst, abs(float(np.hypot(*w)) - 1))
        d["speed_err"] = worst
        # conjugation identity and reversibility
        conj = 0
        for i in range(200):
            rec = bil.run_map(bil.sample_initial(tube, generator(seed, i)), 1000, tube)
            conj += int(np.sum(rec.cells - rec.cells[0] != rec.birkhoff_sum))
        d["conjugation_mismatches"] = conj
        rev = max(bil.reversal_error(bil.sample_initial(tab, generator(seed, 10**6 + i)).base, 100, tab)
                  for tab in (tube, tab2) for i in range(10))
        d["reversal_err_100"] = rev
        d["float64_reversal_horizon"] = float64_reversal_horizon(tube, seed)
        rev_tol = 1e-6 * 100
        # invariance of the collision measure
        cx, cy, r, cm, cdi, cdj, cw = tab2.arrays
        ps = bil.pushforward_sample(seed, samples, cx, cy, r, cm, cdi, cdj, cw, tab2.max_cell_traversal)
        ks_th = ks_two_sample(ps[:, 0], ps[:, 2])[0]
        ks_ph = ks_two_sample(ps[:, 1], ps[:, 3])[0]
        d["ks_theta"], d["ks_sinphi"] = ks_th, ks_ph
        # free-flight tail
        tau = bil.flight_sample(seed, flights, cx, cy, r, cm, cdi, cdj, cw, tab2.max_cell_traversal)
        slope = flight_tail_slope(tau)
        d["tail_slope"] = slope
        ok = worst <= 1e-12 and conj == 0 and rev <= rev_tol and max(ks_th, ks_ph) < 0.01 and abs(slope + 2) <= 0.3
        return ok, d

    return _timed("7 billiard invariants", run)


def float64_reversal_horizon(table, seed, tol=1e-6, trials=10):
    """Median number of collisions double precision retraces within ``tol``."""
    out = []
    for i in range(trials):
        base = bil.sample_initial(table, generator(seed, 2 * 10**6 + i)).base
        k = 1
        while k < 200:
            fwd = bil.run_map(bil.ExtendedState(base, (0,) * table.dim), k, table)
            s = fwd.state(k)
            back = bil.run_map(bil.ExtendedState(s.base.reversed(), s.cell), k, table).state(k).base
            if abs(np.angle(np.exp(1j * (back.boundary_angle - base.boundary_angle)))) > tol:
                break
            k += 1
        out.append(k - 1)
    return int(np.median(out))


def flight_tail_slope(tau, lo=5.0, hi=50.0):
    """Log-log slope of ``P(tau > L)`` over ``L`` in ``[lo, hi]``."""
    tau = np.sort(tau[np.isfinite(tau)])
    L = np.geomspace(lo, hi, 20)
    surv = 1 - np.searchsorted(tau, L, side="right") / len(tau)
    return float(np.polyfit(np.log(L), np.log(surv), 1)[0])


# ---------------------------------------------------------------------------
# 8. billiard distributional trend


def billiard_trend(trajectories=10**5, cps=(10**3, 10**4, 10**5), seed=8):
    def run():
        tab = canonical_table(1)
        cfg = ExperimentConfig("billiard", [ObservableSpec.local_time(1)], NormalizationSeq(1), cps[-1], list(cps),
                               trajectories, seed, table=tab)
        tr = local_time_trend(cfg)
        return tr.strictly_decreasing, {"ks": tr.ks, "phi0_hat": tr.phi0, "phi0_se": tr.phi0_se,
                                        "means": tr.means, "truncated": tr.truncated}

    return _timed("8 billiard local-time trend", run)


# ---------------------------------------------------------------------------
# 9. joint structure


def joint_structure(n=10**5, trajectories_1d=10**4, trajectories_2d=2000, seed=9):
    def run():
        d = {}
        c1 = ExperimentConfig("walk", [ObservableSpec.local_time(1), ObservableSpec.difference(0, 1)],
                              NormalizationSeq(1, 2.0, "pure_power", sqrt(0.5)), n, [n], trajectories_1d, seed,
                              step=lazy_walk(1), times=(0.25, 0.5, 1.0), joint=True)
        r1 = fdd_joint_test(c1)
        d["corr"], d["corr_ci99"] = r1.corr, r1.corr_ci
        d["var_ratio"], d["mean_ratio"] = r1.variance_ratio, r1.mean_ratio
        d["marginal_ks"] = [k for k, _ in r1.marginal_ks]
        c2 = ExperimentConfig("walk", [ObservableSpec.local_time(2), ObservableSpec.difference((0, 0), (1, 0))],
                              NormalizationSeq(2, 2.0, "pure_power", 1.0), n, [n], trajectories_2d, seed + 1,
                              step=lazy_walk(2), times=(0.5, 1.0), joint=True)
        r2 = fdd_joint_test(c2)
        d["constancy_ks"] = [(s, p) for *_, s, p in r2.constancy_ks]
        return r1.dependence_ok and r1.mixture_ok and r2.constancy_ok, d

    return _timed("9 joint functional structure", run)


# ---------------------------------------------------------------------------
# 10. flow


def flow_consistency(t_max=10**5, trajectories=1000, seed=10):
    def run():
        tab = canonical_table(1)
        mism, cnt = 0, 0
        for i in range(20):
            a, b = map_flow_consistency(tab, 5000, seed * 1000 + i, [(0,), (1,), (-1,)])
            mism += a
            cnt += b
        cfg = ExperimentConfig("billiard", [ObservableSpec.local_time(1), ObservableSpec.difference(1, -1)],
                               NormalizationSeq(1), int(t_max), [int(t_max)], trajectories, seed, table=tab,
                               t_max=float(t_max))
        fr = flow_experiment(cfg)
        dec = fr.times >= fr.times[-1] / 10
        dev = float(np.max(np.abs(fr.rate[dec] / fr.rate[-1] - 1)))
        ok = mism == 0 and cnt == 0 and fr.rate_stable and fr.null_ok
        return ok, {"map_flow_mismatches": mism + cnt, "rate_last": float(fr.rate[-1]),
                    "1/E[tau]": 1 / mean_free_time(tab), "rate_max_dev_final_decade": dev,
                    "null_mean": fr.null_mean, "null_se": fr.null_se, "time_change_ratio": fr.time_change_ratio}

    return _timed("10 flow consistency", run)


CHECKS = {
    "oracle": oracle_identities,
    "local-time-1d": local_time_mean_1d,
    "null-sum-1d": null_sum_second_moment_1d,
    "fourth-moment-1d": fourth_moment_ratio_1d,
    "exponential-2d": exponential_limit_2d,
    "stable-ml": stable_ml_ratio,
    "billiard-invariants": billiard_invariants,
    "billiard-trend": billiard_trend,
    "joint": joint_structure,
    "flow": flow_consistency,
}
