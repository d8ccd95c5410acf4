"""Monte Carlo Rayleigh quotients against sample size.

Compares an exact eigenform (pulled-back area form on S^3, ratio 4 at every
point, so the error is pure rounding) with a non-eigen function (height on S^2,
where the estimate converges to 2 at rate N^{-1/2}).
"""

import argparse
import time

from vsubmersion import models as M
from vsubmersion.harness import monte_carlo_rayleigh


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--max-exp", type=int, default=5)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()

    h = M.hopf_model(1)
    cases = [("pi*nu2 on S3", M.pullback_field(h, M.hopf_nu2(h)), 4.0),
             ("x1 on S2", M.sphere_harmonic(M.sphere_model(2), lambda X: X[0], name="x1"), 2.0)]
    print(f"{'case':<14}{'N':>9}{'estimate':>14}{'stderr':>11}{'|z|':>8}{'sec':>7}")
    for label, phi, target in cases:
        for e in range(3, args.max_exp + 1):
            t0 = time.perf_counter()
            est = monte_carlo_rayleigh(phi, 10 ** e, args.seed)
            print(f"{label:<14}{10 ** e:>9}{est.estimate:>14.8f}{est.stderr:>11.2e}"
                  f"{est.z_score(target):>8.2f}{time.perf_counter() - t0:>7.1f}")


if __name__ == "__main__":
    main()
