"""Exact normalized moments of walk additive functionals against their limits.

Writes one CSV row per (observable, checkpoint, degree).

    python3 scripts/walk_moments.py --n 100000 --out walk_moments.csv
"""
import argparse
import csv
from dataclasses import dataclass

import numpy as np

from lorentzgas.limit_laws import LimitSpec, mixture_moment, ml_moment, sigma_beta_sq
from lorentzgas.observables import ObservableSpec
from lorentzgas.rw_oracle import convolve, exact_moment_dp, named_step


@dataclass
class Config:
    step: str = "lazy1d"
    n: int = 10**5
    moments: int = 4
    checkpoints: tuple = (10**3, 10**4, 10**5)
    out: str = "walk_moments.csv"


def run(cfg):
    step = named_step(cfg.step)
    seq = step.normalization()
    alpha, _, phi0 = step.limit_constants()
    d = step.dim
    cps = [c for c in cfg.checkpoints if c <= cfg.n]
    lt = ObservableSpec.local_time(d)
    null = ObservableSpec.difference((0,) * d, (1,) + (0,) * (d - 1))
    sig = sigma_beta_sq(convolve(step, 10**4, store_half_width=3), null, 10**4).value
    spec = LimitSpec(alpha, d, phi0, sig)
    rows = []
    for obs, scale_pow, pred in ((lt, 1.0, lambda j: phi0**j * ml_moment(alpha, d, j)),
                                 (null, 0.5, lambda j: mixture_moment(spec, j))):
        mt = exact_moment_dp(step, obs, cfg.moments, max(cps), checkpoints=cps)
        A = seq.A(cps) ** scale_pow
        for i, n in enumerate(cps):
            for j in range(1, cfg.moments + 1):
                rows.append((obs.name, n, j, mt.moments[i, j] / A[i] ** j, pred(j)))
    with open(cfg.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["observable", "checkpoint_n", "degree", "exact", "limit"])
        w.writerows(rows)
    for r in rows:
        print(f"{r[0]:<12} n={r[1]:<8} j={r[2]}  exact={r[3]:.6g}  limit={r[4]:.6g}")
    print(f"sigma_beta^2 = {sig:.6g}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--step", default=Config.step)
    p.add_argument("--n", type=int, default=Config.n)
    p.add_argument("--moments", type=int, default=Config.moments)
    p.add_argument("--out", default=Config.out)
    a = p.parse_args()
    cps = tuple(int(x) for x in np.unique(np.geomspace(10**3, a.n, 3).astype(int)))
    run(Config(a.step, a.n, a.moments, cps, a.out))
