"""||D^m - D||_2 against m as the spectral gap of a lazy two-state chain closes.

Also prints the Richardson estimate 2 D^{2m} - D^m, whose error falls much faster.

    python3 scripts/convergence_sweep.py
"""

import argparse

import numpy as np

from martapprox.chain import as_observable, l2_0_spectral_radius, norm_pi, two_state_chain
from martapprox.martingale import diff_distance, diff_kernel_m, extrapolated_kernel, limit_diff_kernel


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--gaps", type=float, nargs="*", default=[0.5, 0.2, 0.1, 0.05, 0.01])
    p.add_argument("--m-max-log2", type=int, default=12)
    args = p.parse_args()

    ms = 2 ** np.arange(0, args.m_max_log2 + 1)
    for gap in args.gaps:
        # p + q = gap puts the centered eigenvalue at 1 - gap
        chain = two_state_chain(0.25 * gap, 0.75 * gap)
        f = as_observable(chain, [1.0, -1.0], center=True)
        limit = limit_diff_kernel(chain, f)
        nf = norm_pi(chain, f)
        plain = [diff_distance(chain, diff_kernel_m(chain, f, m), limit) / nf for m in ms]
        rich = [diff_distance(chain, extrapolated_kernel(chain, f, m), limit) / nf for m in ms]
        print(f"gap {gap:g} (radius {l2_0_spectral_radius(chain):.3f})")
        print(f"{'m':>8}{'||D^m - D||/||f||':>22}{'m * dist':>12}{'richardson':>14}")
        for m, a, b in zip(ms, plain, rich):
            print(f"{m:>8}{a:>22.4e}{m * a:>12.4f}{b:>14.2e}")
        print()


if __name__ == "__main__":
    main()
