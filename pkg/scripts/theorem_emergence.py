"""Optimize features directly and compare with the closed-form optimum.

Runs the d=16, two classes of four samples instance from many random starts,
then shows a program where the precision condition holds but the optimal
spectrum is not flat.
"""
import argparse

import numpy as np

from mcr2 import theory, verify
from mcr2.rates import RateParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--starts", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    p = RateParams(0.5, "nats")
    sig, _ = theory.optimal_singular_values(theory.ScalarProgram(4, 4.0, 16, 8.0, 0.5))
    best = theory.optimal_rate_reduction([4, 4], 16, p)
    print(f"oracle: singular values {np.round(sig, 6)}, DeltaR {best:.10f} nats")
    for s in range(args.seed, args.seed + args.starts):
        Z, trace, pi = verify.a7_run(s, p)
        diag = theory.diagnose_optimum(Z, pi, p)
        err = max(np.max(np.abs(x[:4] - sig) / sig) for x in diag.per_class_singular_values)
        print(f"start {s:3d}: {len(trace) - 1:4d} iters, DeltaR {trace.records[-1].DeltaR:.10f},"
              f" max cosine {diag.max_interclass_cosine:.1e}, spectrum err {err:.1e}")

    prog = theory.ScalarProgram(8, 39.0, 16, 212.0, 0.6447396144807259)
    sig, obj = theory.optimal_singular_values(prog)
    print(f"\nprecision condition holds: {prog.diversity_condition}")
    print(f"objective by support size q: {[round(q * float(prog.f(prog.c / q)), 2) for q in range(1, 9)]}")
    print(f"optimal squared singular values: {np.round(sig**2, 4)} (objective {obj:.4f})")


if __name__ == "__main__":
    main()
