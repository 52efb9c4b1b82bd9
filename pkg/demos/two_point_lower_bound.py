"""Inspect the two-point constructions and test three estimators against their lower bound.

Run with ``python3 demos/two_point_lower_bound.py``.
"""

import numpy as np

from pairstab import build_problem, empirical_lecam, empirical_minimizer, exact_risks


def main():
    for kind in ("convex", "strongly-convex"):
        p = build_problem(kind, beta=1.0, r=1.0, nu=1.1, n=6)
        rep = exact_risks(p)
        print(f"\n{kind}: delta={rep.delta:.6f}  P1(y=+1)={p.p_plus[0]:.4f}")
        print(f"  excess at origin: exact {rep.excess_at_origin:.6f}, construction claims "
              f"{rep.claimed_excess_at_origin:.6f}")
        print(f"  KL per sample: four cells {rep.kl_per_sample:.6f}, label marginal {rep.kl_label_marginal:.6f}, "
              f"budget 1/(2n) = {1 / (2 * p.n):.6f}")
        estimators = {
            "constant 0": lambda S: np.zeros(1),
            "oracle w*_1": lambda S, w=rep.w_star_1: w,
            "ERM": lambda S, loss=p.loss: empirical_minimizer(S, loss).w,
        }
        for name, est in estimators.items():
            emp = empirical_lecam(p, est, trials=200, seed=0)
            print(f"  {name:12s} worst mean excess {emp.worst:.5f} +/- {emp.worst_se:.5f} "
                  f"(bound {rep.lecam_lower_bound:.5f})")


if __name__ == "__main__":
    main()
