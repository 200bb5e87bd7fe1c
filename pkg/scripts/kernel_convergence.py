"""Discretization quality study for the tempered fractional kernel pair.

Prints the L2-in-measure discretization error for a ladder of node counts
and the pointwise reconstruction error of both kernels at the finest level.
"""

import argparse
import time

import numpy as np

from voltlift.discretize import build_component, epsilon_k, reconstructed_kernel
from voltlift.kernelbasis import (DIFFUSION, DRIFT, eval_kernel,
                                  make_tempered_fractional_basis)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--alpha-b", type=float, default=0.5)
    ap.add_argument("--alpha-s", type=float, default=0.75)
    ap.add_argument("--kappa", type=float, default=1.0)
    ap.add_argument("--ladder", type=int, nargs="+",
                    default=[8, 16, 32, 64, 128])
    ap.add_argument("--k-fine", type=int, default=200)
    args = ap.parse_args()

    basis = make_tempered_fractional_basis(args.alpha_b, args.alpha_s,
                                           args.kappa, args.kappa)
    print("k    epsilon_k    theta_max    seconds")
    for k in args.ladder:
        t0 = time.perf_counter()
        comp = build_component(basis, k, "auto")
        eps = epsilon_k(basis, comp)
        print(f"{k:<4d} {eps:<12.4e} {comp.theta_max:<12.4g} "
              f"{time.perf_counter() - t0:.2f}")

    comp = build_component(basis, args.k_fine, "auto")
    ts = np.geomspace(1e-2, 10.0, 25)
    worst = 0.0
    for which in (DRIFT, DIFFUSION):
        rel = np.array([
            abs(reconstructed_kernel(comp, which, t)[0, 0]
                - eval_kernel(basis, which, t)[0, 0])
            / abs(eval_kernel(basis, which, t)[0, 0]) for t in ts])
        worst = max(worst, rel.max())
        print(f"{which}: max pointwise rel err {rel.max():.3e} "
              f"on t in [{ts[0]:.2g}, {ts[-1]:.2g}]")
    print(f"finest level k={comp.size}: worst rel err {worst:.3e}")


if __name__ == "__main__":
    main()
