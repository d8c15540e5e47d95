"""Martingale approximation toolkit for additive functionals of finite Markov chains."""

from .chain import (
    FiniteMarkovChain,
    apply_operator,
    as_observable,
    build_chain,
    conditional_sum,
    inner_product_pi,
    long_run_variance,
    norm_pi,
    poisson_solve,
)
from .errors import MartApproxError

__version__ = "0.1.0"
