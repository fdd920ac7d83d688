"""Local time of a truncated power-tail walk against the Mittag-Leffler moments.

    python3 scripts/stable_local_time.py --alpha 1.5 --n 100000
"""
import argparse
from dataclasses import dataclass

from lorentzgas.limit_laws import ml_moment
from lorentzgas.observables import ObservableSpec
from lorentzgas.rw_oracle import exact_moment_dp, return_probabilities, renewal_moments, stable_step_builder


@dataclass
class Config:
    alpha: float = 1.5
    cutoff: int = 10**4
    n: int = 10**5


def run(cfg):
    step = stable_step_builder(cfg.alpha, cfg.cutoff)
    alpha, c, phi0 = step.limit_constants()
    print(f"fitted alpha {alpha:.5f}, scale c {c:.5g}, phi0 {phi0:.5g}")
    cps = [cfg.n // 100, cfg.n // 10, cfg.n]
    u = return_probabilities(step, cfg.n)
    mt = renewal_moments(u, 2, cps)
    A = step.normalization().A(cps)
    for i, n in enumerate(cps):
        m1, m2 = mt.moments[i, 1] / A[i], mt.moments[i, 2] / A[i] ** 2
        print(f"n={n:<8} E[L/A]={m1:.5f} (limit {phi0:.5f})  E[(L/A)^2]/E[L/A]^2={m2 / m1**2:.5f} "
              f"(limit {ml_moment(alpha, 1, 2):.5f})")
    # heavy tails leak past the default window; the DP result is exact up to the reported leak
    dp = exact_moment_dp(step, ObservableSpec.local_time(1), 2, 2000, leak_bound=1e-4)
    print(f"cross-check at n=2000: DP {dp.moments[0, 1]:.10g} (leak {dp.leaked_mass[0]:.2g}), "
          f"renewal {renewal_moments(u, 2, [2000]).moments[0, 1]:.10g}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--alpha", type=float, default=Config.alpha)
    p.add_argument("--cutoff", type=int, default=Config.cutoff)
    p.add_argument("--n", type=int, default=Config.n)
    a = p.parse_args()
    run(Config(a.alpha, a.cutoff, a.n))
