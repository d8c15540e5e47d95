"""Residual decay E max_j (S_j - M_j)^2 / n against n, for the limit kernel and a few D^m.

    python3 scripts/residual_decay.py --spec specs/two_state.txt --replicas 2000
"""

import argparse

import numpy as np

from martapprox.cli import parse_chain_spec
from martapprox.martingale import diff_kernel_m
from martapprox.montecarlo import residual_decay_curve


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--spec", default="specs/two_state.txt")
    p.add_argument("--n-max-log10", type=int, default=4)
    p.add_argument("--m", type=int, nargs="*", default=[1, 8, 64])
    p.add_argument("--replicas", type=int, default=2000)
    p.add_argument("--seed", type=int, default=42)
    args = p.parse_args()

    chain, f, _ = parse_chain_spec(args.spec)
    grid = np.unique(np.logspace(1, args.n_max_log10, 4 * (args.n_max_log10 - 1) + 1).astype(int))
    curves = {"limit": residual_decay_curve(chain, f, grid, args.replicas, args.seed)}
    for m in args.m:
        kernel = diff_kernel_m(chain, f, m)
        curves[f"m={m}"] = residual_decay_curve(chain, f, grid, args.replicas, args.seed, kernel=kernel)

    print(f"{'n':>8}" + "".join(f"{name:>18}" for name in curves))
    for i, n in enumerate(grid):
        cells = "".join(f"{c.values[i]:>11.4g} ±{c.std_errors[i]:<5.1g}" for c in curves.values())
        print(f"{n:>8}{cells}")
    # the limit residual is bounded, so n * value should flatten out
    c = curves["limit"]
    print("\nn * value for the limit kernel:", np.round(c.values * c.n_grid, 3))


if __name__ == "__main__":
    main()
