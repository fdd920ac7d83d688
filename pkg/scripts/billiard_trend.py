"""KS distance of the tube local time ``L_n / A_n`` to ``phi0_hat * Y`` across checkpoints.

    python3 scripts/billiard_trend.py --trajectories 5000
"""
import argparse
from dataclasses import dataclass

from lorentzgas.geometry import canonical_table
from lorentzgas.observables import NormalizationSeq, ObservableSpec
from lorentzgas.stats import ExperimentConfig, local_time_trend


@dataclass
class Config:
    radius: float = 0.4
    trajectories: int = 5000
    checkpoints: tuple = (10**3, 10**4, 10**5)
    seed: int = 8


def run(cfg):
    ex = ExperimentConfig("billiard", [ObservableSpec.local_time(1)], NormalizationSeq(1), max(cfg.checkpoints),
                          list(cfg.checkpoints), cfg.trajectories, cfg.seed, canonical_table(1, cfg.radius))
    rep = local_time_trend(ex)
    print(f"phi0_hat = {rep.phi0:.5g} +- {rep.phi0_se:.2g}  (truncated: {rep.truncated})")
    for n, ks, m in zip(rep.checkpoints, rep.ks, rep.means):
        print(f"n={n:<8} KS={ks:.4f}  mean L_n/A_n={m:.4f}")
    print("strictly decreasing:", rep.strictly_decreasing)
    return rep


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--trajectories", type=int, default=Config.trajectories)
    p.add_argument("--radius", type=float, default=Config.radius)
    p.add_argument("--seed", type=int, default=Config.seed)
    a = p.parse_args()
    run(Config(a.radius, a.trajectories, seed=a.seed))
