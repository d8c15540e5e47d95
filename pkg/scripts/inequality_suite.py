"""Run the four maximal inequalities over a batch of random chains and tabulate margins.

    python3 scripts/inequality_suite.py --chains 20 --n 512 --replicas 2000
"""

import argparse

import numpy as np

from martapprox.chain import random_chain, random_observable, random_reversible_chain
from martapprox.montecarlo import verify_all


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--chains", type=int, default=20)
    p.add_argument("--max-states", type=int, default=8)
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--replicas", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reversible", action="store_true", help="draw reversible chains (adds Wu's bound)")
    args = p.parse_args()

    rng = np.random.default_rng(args.seed)
    ratios = {}
    failures = 0
    for i in range(args.chains):
        size = int(rng.integers(2, args.max_states + 1))
        chain = random_reversible_chain(rng, size) if args.reversible else random_chain(rng, size)
        f = random_observable(rng, chain)
        for rep in verify_all(chain, f, args.n, args.replicas, args.seed + i):
            ratios.setdefault(rep.name, []).append((rep.lhs + 3 * rep.lhs_stderr) / rep.rhs)
            failures += not rep.passed

    print(f"{'inequality':<22}{'chains':>8}{'min':>10}{'median':>10}{'max':>10}   (lhs + 3se) / rhs")
    for name, vals in ratios.items():
        v = np.array(vals)
        print(f"{name:<22}{len(v):>8}{v.min():>10.4f}{np.median(v):>10.4f}{v.max():>10.4f}")
    print(f"\nnegative margins: {failures}")


if __name__ == "__main__":
    main()
