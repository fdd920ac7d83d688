"""Collision rate, time change and null-sum mean of the flow in the tube.

    python3 scripts/flow_rates.py --t-max 10000 --trajectories 500
"""
import argparse
from dataclasses import dataclass

import numpy as np

from lorentzgas.geometry import canonical_table
from lorentzgas.observables import NormalizationSeq, ObservableSpec
from lorentzgas.stats import ExperimentConfig, flow_experiment, hopf_ratios, mean_free_time


@dataclass
class Config:
    dim: int = 1
    t_max: float = 10**4
    trajectories: int = 500
    seed: int = 10


def run(cfg):
    tab = canonical_table(cfg.dim)
    origin = (0,) * cfg.dim
    right = (1,) + (0,) * (cfg.dim - 1)
    left = (-1,) + (0,) * (cfg.dim - 1)
    specs = [ObservableSpec.local_time(cfg.dim), ObservableSpec({right: 1.0, left: -1.0})]
    ex = ExperimentConfig("billiard", specs, NormalizationSeq(cfg.dim), int(cfg.t_max), [int(cfg.t_max)],
                          cfg.trajectories, cfg.seed, tab, watched_cells=(origin, right, left), t_max=cfg.t_max)
    fr = flow_experiment(ex)
    print(f"E[tau] = {mean_free_time(tab):.6g}")
    for t, r, se in zip(fr.times, fr.rate, fr.rate_se):
        print(f"t={t:<10.4g} n_t/t={r:.6f} +- {se:.2g}")
    print(f"time-change ratio {fr.time_change_ratio:.4f}; null-sum mean {fr.null_mean:.3g} +- {fr.null_se:.2g}")
    h = hopf_ratios(tab, int(cfg.t_max), [int(cfg.t_max) // 100, int(cfg.t_max) // 10, int(cfg.t_max)], 50,
                    cfg.seed)
    print("Hopf ratio, mean |ratio - E[tau]|:", np.abs(h - mean_free_time(tab)).mean(axis=0))


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dim", type=int, default=Config.dim)
    p.add_argument("--t-max", type=float, default=Config.t_max)
    p.add_argument("--trajectories", type=int, default=Config.trajectories)
    p.add_argument("--seed", type=int, default=Config.seed)
    a = p.parse_args()
    run(Config(a.dim, a.t_max, a.trajectories, a.seed))
