import json
from math import sqrt

import numpy as np
import pytest

from lorentzgas import stats
from lorentzgas.geometry import canonical_table
from lorentzgas.observables import NormalizationSeq, ObservableSpec
from lorentzgas.rng import generator
from lorentzgas.rw_oracle import exact_moment_dp, lazy_walk
from lorentzgas.stats import ExperimentConfig, MomentReport, ks_two_sample, run_experiment

LAZY1 = lazy_walk(1)


def walk_cfg(**kw):
    base = dict(system="walk", specs=[ObservableSpec.local_time(1)], seq=LAZY1.normalization(), n_max=1000,
                checkpoints=[100, 1000], trajectories=500, seed=1, step=LAZY1)
    base.update(kw)
    return ExperimentConfig(**base)


def billiard_cfg(**kw):
    base = dict(system="billiard", specs=[ObservableSpec.local_time(1), ObservableSpec.difference(0, 1)],
                seq=NormalizationSeq(1), n_max=500, checkpoints=[50, 500], trajectories=300, seed=4,
                table=canonical_table(1))
    base.update(kw)
    return ExperimentConfig(**base)


# comparisons


def test_ks_examples():
    x = np.random.default_rng(0).normal(size=500)
    assert ks_two_sample(x, x)[0] == 0.0
    assert ks_two_sample(np.arange(10.0), np.arange(10.0) + 100)[0] == 1.0


def test_ks_null_calibration():
    g = generator(11)
    reps = 200
    ok = sum(ks_two_sample(g.normal(size=10**4), g.normal(size=10**4))[1] > 1e-3 for _ in range(reps))
    assert ok >= 0.99 * reps


def test_tree_sum_fixed_shape():
    parts = [np.float64(x) for x in np.random.default_rng(1).normal(size=37) * 1e10]
    assert stats.tree_sum(parts) == stats.tree_sum(list(parts))
    assert stats.tree_sum(parts) == pytest.approx(sum(parts), rel=1e-12)
    assert stats.tree_sum([]) == 0.0


def test_bootstrap_ci_contains_mean():
    x = np.random.default_rng(2).normal(size=400)
    lo, hi = stats.bootstrap_ci(np.mean, x, generator(3))
    assert lo < x.mean() < hi
    assert hi - lo == pytest.approx(2 * 2.576 / sqrt(400), rel=0.2)


def test_estimate_phi0_gaussian():
    g = generator(5)
    x = g.normal(scale=2.0, size=(20000, 1))
    phi, se = stats.estimate_phi0(x, 1.0)
    assert phi == pytest.approx(1 / (2 * sqrt(2 * np.pi)), abs=4 * se)
    cov = np.array([[1.0, 0.4], [0.4, 2.0]])
    y = g.multivariate_normal([0, 0], cov, size=20000)
    phi2, se2 = stats.estimate_phi0(y, 1.0)
    assert phi2 == pytest.approx(1 / (2 * np.pi * sqrt(np.linalg.det(cov))), abs=4 * se2)


# configuration


def test_config_validation():
    with pytest.raises(ValueError):
        walk_cfg(checkpoints=[1000, 100])
    with pytest.raises(ValueError):
        walk_cfg(checkpoints=[2000])
    with pytest.raises(ValueError):
        walk_cfg(joint=True)  # needs [g, f] with f null-sum
    with pytest.raises(ValueError):
        billiard_cfg(mode="exact")
    with pytest.raises(ValueError):
        walk_cfg(step=None)


def test_config_hash_stable():
    assert walk_cfg().hash() == walk_cfg().hash()
    assert walk_cfg().hash() != walk_cfg(seed=2).hash()


# experiments


def test_zero_trajectories_flagged():
    rep, samples = run_experiment(walk_cfg(trajectories=0))
    assert rep.error == "no trajectories" and not rep.ok
    assert rep.rows == [] and samples.shape[0] == 0


def test_exact_mode_report():
    cfg = walk_cfg(mode="exact", checkpoints=[10, 100, 1000])
    rep, samples = run_experiment(cfg)
    assert samples is None
    assert all(r["provenance"].startswith("exact-dp") for r in rep.rows)
    row = rep.get("m1[local_time]", 1000)
    exact = exact_moment_dp(LAZY1, ObservableSpec.local_time(1), 1, 1000).moment(1)[0]
    assert row["value"] == pytest.approx(exact / LAZY1.normalization().A(1000), rel=1e-13)
    assert row["predicted"] == pytest.approx(LAZY1.limit_constants()[2], rel=1e-13)


def test_report_determinism():
    a = run_experiment(billiard_cfg())[0].to_json()
    b = run_experiment(billiard_cfg())[0].to_json()
    assert a == b
    assert run_experiment(billiard_cfg(seed=5))[0].to_json() != a


def test_billiard_report_provenance():
    rep, samples = run_experiment(billiard_cfg())
    assert samples.shape == (300, 2, 2)
    assert rep.diagnostics["phi0_estimate"] > 0
    assert all(r["provenance"].endswith("estimated-phi0") for r in rep.rows)
    assert rep.get("m1[local_time]", 500)["predicted"] == pytest.approx(rep.diagnostics["phi0_estimate"])


def test_report_json_round_trip(tmp_path):
    rep, samples = run_experiment(walk_cfg(trajectories=50))
    back = MomentReport.from_json(rep.to_json())
    assert back.rows == json.loads(rep.to_json())["rows"]
    rep.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == ",".join(MomentReport.COLUMNS)
    doc = json.loads(rep.to_json())
    doc["schema_version"] = 99
    with pytest.raises(ValueError):
        MomentReport.from_json(json.dumps(doc))
    stats.write_samples(samples, walk_cfg(trajectories=50), tmp_path / "s.csv")
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 1 + 50 * 2


def test_bootstrap_coverage_of_exact_values():
    cps = [100, 1000]
    exact = exact_moment_dp(LAZY1, ObservableSpec.local_time(1), 2, 1000, checkpoints=cps).moments
    A = LAZY1.normalization().A(cps)
    covered = total = 0
    # 200 runs keep the binomial noise of the coverage rate near 1.5%
    for seed in range(200):
        rep, _ = run_experiment(walk_cfg(seed=seed, trajectories=200, moments=2))
        for i, n in enumerate(cps):
            for j in (1, 2):
                r = rep.get(f"m{j}[local_time]", n)
                total += 1
                covered += abs(r["value"] - exact[i, j] / A[i] ** j) <= 1.96 * r["stderr"]
    assert covered >= 0.9 * total


def test_truncation_aborts():
    from lorentzgas.geometry import BilliardTable, Disk

    tab = BilliardTable(1, (Disk(0.5, 0.5, 0.1),), max_cell_traversal=1)
    with pytest.raises(stats.TruncationError):
        run_experiment(billiard_cfg(table=tab))


def test_fdd_walk_single_time():
    cfg = walk_cfg(specs=[ObservableSpec.local_time(1), ObservableSpec.difference(0, 1)], joint=True,
                   times=(1.0,), n_max=4000, checkpoints=[4000], trajectories=3000, sigma_sq=6.0)
    rep = stats.fdd_joint_test(cfg, fine_scale=4000)
    assert len(rep.marginal_ks) == 1 and rep.marginal_ks[0][1] > 1e-3
    assert rep.dependence_ok and rep.mixture_ok


def test_fdd_needs_joint_config():
    with pytest.raises(ValueError):
        stats.fdd_joint_test(walk_cfg())


def test_trend_report_shape():
    rep = stats.local_time_trend(billiard_cfg(checkpoints=[50, 500]))
    assert len(rep.ks) == 2 and rep.phi0 > 0 and rep.truncated == 0


def test_flow_rate_and_null_mean():
    cfg = billiard_cfg(t_max=2000.0, trajectories=200, watched_cells=((0,), (1,), (-1,)),
                       specs=[ObservableSpec.local_time(1), ObservableSpec({(1,): 1.0, (-1,): -1.0})])
    fr = stats.flow_experiment(cfg)
    assert fr.rate[-1] == pytest.approx(1 / stats.mean_free_time(cfg.table), rel=0.02)
    assert fr.null_ok and fr.truncated == 0


def test_hopf_ratio_trend():
    r = stats.hopf_ratios(canonical_table(1), 100_000, [1000, 10_000, 100_000], 100, 3)
    dev = np.abs(r - stats.mean_free_time(canonical_table(1))).mean(axis=0)
    assert np.all(np.diff(dev) < 0) and dev[-1] < 0.05
