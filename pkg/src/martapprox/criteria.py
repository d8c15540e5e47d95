"""Projective and mixing criteria evaluated exactly on a finite chain.

Every infinite series is reported as a partial sum up to a truncation K plus
a certified bound on the omitted tail.  Tails rest on the decay envelope of
``chain.decay_envelope``: ||Q^(K+j) h|| <= q**(j // L) ||Q^K h|| for centered h.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .chain import (
    FiniteMarkovChain,
    _check_len,
    centered_operator_norm,
    decay_envelope,
    norm_pi,
    operator_powers,
    tail_factor,
)
from .errors import StateSpaceTooLarge

SATISFIED = "satisfied"
WITH_TAIL = "satisfied-with-tail-bound"
INCONCLUSIVE = "inconclusive"

ALPHA_EXACT_MAX_STATES = 20


@dataclass
class CriterionReport:
    name: str
    terms: np.ndarray
    partial_sums: np.ndarray
    tail_bound: float
    verdict: str
    details: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        """Partial sum at the largest truncation."""
        return float(self.partial_sums[-1]) if len(self.partial_sums) else 0.0

    @property
    def upper_bound(self) -> float:
        return self.value + self.tail_bound


def _verdict(tail: float) -> str:
    if tail == 0.0:
        return SATISFIED
    if np.isfinite(tail):
        return WITH_TAIL
    return INCONCLUSIVE


def _scaled(norm: float, factor: float) -> float:
    # 0 * inf must read as a vanishing tail
    return 0.0 if norm == 0.0 else norm * factor


def _report(name, terms, tail, **details) -> CriterionReport:
    terms = np.asarray(terms, dtype=float)
    return CriterionReport(
        name=name,
        terms=terms,
        partial_sums=np.cumsum(terms),
        tail_bound=float(tail),
        verdict=_verdict(tail),
        details=details,
    )


def _conditional_sum_norms(chain, f, K):
    """||E_0(S_k)||_2 for k = 1..K and ||Q^K f||_2."""
    powers = operator_powers(chain, f, K + 1)
    sums = np.cumsum(powers[:K], axis=0)
    return np.sqrt(sums**2 @ chain.pi), norm_pi(chain, powers[K])


def maxwell_woodroofe(chain: FiniteMarkovChain, f, K: int) -> CriterionReport:
    """Delta(X_0) = sum_k ||E_0(S_k)||_2 / k^{3/2}."""
    if K < 1:
        raise ValueError("K must be >= 1")
    norms, last = _conditional_sum_norms(chain, f, K)
    k = np.arange(1, K + 1)
    # ||E_0 S_k|| <= ||E_0 S_K|| + sum_{j>=K} ||Q^j f|| for every k > K
    bound = norms[-1] + _scaled(last, tail_factor(chain))
    tail = _scaled(bound, 2.0 / np.sqrt(K))
    return _report("maxwell_woodroofe", norms / k**1.5, tail, conditional_norms=norms)


def projective_series(chain: FiniteMarkovChain, f, K: int) -> CriterionReport:
    """sum_n n^{-1/2} ||E_0(X_n)||_2 = sum_n n^{-1/2} ||Q^n f||_pi."""
    if K < 1:
        raise ValueError("K must be >= 1")
    powers = operator_powers(chain, f, K + 2)
    norms = np.sqrt(powers**2 @ chain.pi)
    n = np.arange(1, K + 1)
    tail = _scaled(norms[K + 1], tail_factor(chain)) / np.sqrt(K + 1)
    return _report("projective_series", norms[1 : K + 1] / np.sqrt(n), tail)


def rio_gamma_profile(chain: FiniteMarkovChain, f, j_max: int, K: int) -> CriterionReport:
    """Gamma_j = sum_{k>=j} ||X_j E_0(X_k)||_1 for j = 0..j_max, with Cesaro means.

    ||X_j E_0(X_k)||_1 = sum_x pi(x) |Q^k f(x)| (Q^j |f|)(x).  The reported
    terms are the Gammas; ``details['cesaro'][m-1]`` is (1/m) sum_{j<m} Gamma_j.
    """
    if j_max < 0 or K < max(j_max, 1):
        raise ValueError("need j_max >= 0 and K >= max(j_max, 1)")
    f = np.asarray(f, dtype=float)
    lifted = operator_powers(chain, np.abs(f), j_max + 1)
    decays = operator_powers(chain, f, K + 2)
    cells = (lifted * chain.pi) @ np.abs(decays[: K + 1]).T
    gammas = np.array([cells[j, j:].sum() for j in range(j_max + 1)])
    factor = tail_factor(chain)
    nf = norm_pi(chain, f)
    # Cauchy-Schwarz: each omitted cell is at most ||f|| ||Q^k f||
    tail = _scaled(nf * norm_pi(chain, decays[K + 1]), factor)
    decay_norms = np.sqrt(decays[: j_max + 1] ** 2 @ chain.pi)
    envelope = np.array([_scaled(nf * v, factor) for v in decay_norms])
    cesaro = np.cumsum(gammas) / np.arange(1, j_max + 2)
    return _report(
        "rio_gamma",
        gammas,
        tail,
        cesaro=cesaro,
        gamma_upper=envelope,
        cells=cells,
    )


def hannan_profile(chain: FiniteMarkovChain, f, K: int) -> CriterionReport:
    """term_i = ||E_{-i}(X_0) - E_{-i-1}(X_0)||_2 = sqrt(||Q^i f||^2 - ||Q^{i+1} f||^2).

    Terms run over i = 0..K.  ``details['regular']`` records whether
    E(X_0 | F_{-infinity}) = 0 is certified, i.e. Q^n f -> 0.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    powers = operator_powers(chain, f, K + 2)
    sq = powers**2 @ chain.pi
    gaps = sq[:-1] - sq[1:]
    scale = max(1.0, sq[0])
    assert np.all(gaps >= -1e-12 * scale), "Q is not a contraction in L2(pi)"
    terms = np.sqrt(np.clip(gaps, 0.0, None))[: K + 1]
    factor = tail_factor(chain)
    tail = _scaled(np.sqrt(sq[K + 1]), factor)
    regular = bool(np.isfinite(factor) or np.sqrt(sq[K + 1]) <= 1e-12 * np.sqrt(scale))
    if not regular:
        tail = float("inf")
    return _report("hannan", terms, tail, regular=regular, squared_norms=sq)


def rho_coefficient(chain: FiniteMarkovChain, n: int) -> float:
    """Maximal correlation between sigma(xi_0) and sigma(xi_n).

    Second singular value of pi^{1/2} Q^n pi^{-1/2}; the top singular value
    (constants) is exactly one.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    s = np.sqrt(chain.pi)
    b = s[:, None] * np.linalg.matrix_power(chain.kernel, n) / s[None, :]
    top = np.linalg.norm(b, 2)
    assert abs(top - 1.0) <= 1e-10, f"top singular value {top!r} != 1"
    return centered_operator_norm(chain, n)


def rho_dyadic_series(chain: FiniteMarkovChain, K: int) -> CriterionReport:
    """sum_{k=1}^K rho(2^k); submultiplicativity bounds the tail by r^2/(1-r^2)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    terms = np.array([rho_coefficient(chain, 2**k) for k in range(1, K + 1)])
    r = terms[-1]
    if r == 0.0:
        tail = 0.0
    elif r < 1.0:
        tail = r**2 / (1.0 - r**2)
    else:
        tail = float("inf")
    return _report("rho_dyadic", terms, tail, sigma_fields="sigma(xi_0), sigma(xi_n)")


def _joint_deviation(chain: FiniteMarkovChain, n: int) -> np.ndarray:
    """P(xi_0 = x, xi_n = y) - pi(x) pi(y)."""
    qn = np.linalg.matrix_power(chain.kernel, n)
    return chain.pi[:, None] * qn - np.outer(chain.pi, chain.pi)


def alpha_bound(chain: FiniteMarkovChain, n: int) -> float:
    """sum_x pi(x) ||Q^n(x, .) - pi||_TV, capped at 1/4; dominates alpha(n)."""
    qn = np.linalg.matrix_power(chain.kernel, n)
    tv = 0.5 * np.abs(qn - chain.pi[None, :]).sum(axis=1)
    return float(min(0.25, chain.pi @ tv))


def alpha_coefficient(chain: FiniteMarkovChain, n: int, exact: bool = True) -> float:
    """Strong mixing coefficient between sigma(xi_0) and sigma(xi_n).

    Enumerates every event A in sigma(xi_0); for fixed A the best B collects
    the states where P(A, xi_n = y) - pi(A) pi(y) is positive.  Above
    ``ALPHA_EXACT_MAX_STATES`` states exact mode raises and non-exact mode
    returns ``alpha_bound`` with a warning.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    size = chain.n_states
    if size > ALPHA_EXACT_MAX_STATES:
        if exact:
            raise StateSpaceTooLarge(
                f"exact alpha needs 2^{size} subsets; cap is 2^{ALPHA_EXACT_MAX_STATES}"
            )
        warnings.warn("alpha_coefficient returned a total-variation upper bound", stacklevel=2)
        return alpha_bound(chain, n)
    joint = _joint_deviation(chain, n)
    bits = np.arange(size)
    best = 0.0
    chunk = 1 << 15
    for start in range(0, 1 << size, chunk):
        ids = np.arange(start, min(start + chunk, 1 << size))
        masks = ((ids[:, None] >> bits) & 1).astype(float)
        dev = masks @ joint
        best = max(best, float(np.clip(dev, 0.0, None).sum(axis=1).max()))
    return best


@dataclass(frozen=True)
class QuantileFunction:
    """Right-continuous inverse u -> Q_{|X_0|}(u) of t -> P(|X_0| > t).

    ``values[i]`` is taken on [breakpoints[i-1], breakpoints[i]) with
    breakpoints[-1] read as 0; the function is 0 from breakpoints[-1] on.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        idx = np.searchsorted(self.breakpoints, u, side="right")
        padded = np.append(self.values, 0.0)
        return padded[idx]

    def integral_of_square(self, u: float) -> float:
        """int_0^u Q(v)^2 dv."""
        lower = np.concatenate([[0.0], self.breakpoints[:-1]])
        widths = np.clip(np.minimum(self.breakpoints, u) - lower, 0.0, None)
        return float(np.sum(widths * self.values**2))


def quantile_function(chain: FiniteMarkovChain, f) -> QuantileFunction:
    f = np.asarray(f, dtype=float)
    _check_len(chain, f)
    a = np.abs(f)
    positive = a > 0
    if not positive.any():
        return QuantileFunction(np.zeros(0), np.zeros(0))
    order = np.argsort(-a[positive], kind="stable")
    levels = a[positive][order]
    mass = chain.pi[positive][order]
    merged_levels, merged_mass = [levels[0]], [mass[0]]
    for lv, ms in zip(levels[1:], mass[1:]):
        if merged_levels[-1] - lv <= 1e-12 * merged_levels[-1]:
            merged_mass[-1] += ms
        else:
            merged_levels.append(lv)
            merged_mass.append(ms)
    return QuantileFunction(np.cumsum(merged_mass), np.array(merged_levels))


def dmr_series(chain: FiniteMarkovChain, f, K: int) -> CriterionReport:
    """sum_k E[X_0^2 I(|X_0| >= Q_{|X_0|}(2 alpha_k))], indicator taken literally.

    For a finitely-valued X_0 the quantile at small u is the top atom, so the
    literal summand settles at E[X_0^2 I(|X_0| = max|f|)] and the series
    diverges unless f = 0.  ``details`` also carries the integral form
    sum_k int_0^{2 alpha_k} Q^2(u) du, which is summable on ergodic chains.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    f = np.asarray(f, dtype=float)
    qf = quantile_function(chain, f)
    alphas = np.array([alpha_coefficient(chain, k) for k in range(1, K + 1)])
    thresholds = qf(2.0 * alphas)
    a = np.abs(f)
    fsq = chain.pi * f**2
    terms = np.array([fsq[a >= t * (1.0 - 1e-12)].sum() for t in thresholds])
    integral_terms = np.array([qf.integral_of_square(2.0 * al) for al in alphas])

    if not np.any(a > 0):
        tail, integral_tail = 0.0, 0.0
        note = "f = 0"
    else:
        tail = float("inf")
        top_mass = qf.breakpoints[0]
        rho_k = centered_operator_norm(chain, K)
        if rho_k / 2.0 < top_mass:
            note = (
                "literal summand is constant "
                f"{float(top_mass * qf.values[0] ** 2)!r} for all k > {K}: series diverges"
            )
        else:
            note = "alpha_k not yet below the top atom; tail not certified"
        # alpha <= rho / 4 and rho(K + j) <= rho(K) rho(j)
        integral_tail = _scaled(0.5 * qf.values[0] ** 2 * rho_k, tail_factor(chain))
    return _report(
        "dmr",
        terms,
        tail,
        alphas=alphas,
        quantiles=thresholds,
        integral_terms=integral_terms,
        integral_partial_sums=np.cumsum(integral_terms),
        integral_tail_bound=integral_tail,
        note=note,
        sigma_fields="sigma(xi_0), sigma(xi_n)",
    )


def gap_and_cor2(chain: FiniteMarkovChain, f, K: int):
    """Reports for sum_k ||E_0(S_k)||^2 / k^2 and sum_k ||E_0(X_k)||^2."""
    if K < 1:
        raise ValueError("K must be >= 1")
    norms, last = _conditional_sum_norms(chain, f, K)
    k = np.arange(1, K + 1)
    bound = norms[-1] + _scaled(last, tail_factor(chain))
    gap = _report("gap", norms**2 / k**2, _scaled(bound**2, 1.0 / K))

    powers = operator_powers(chain, f, K + 1)
    sq = powers[1:] ** 2 @ chain.pi
    L, q = decay_envelope(chain)
    factor = float("inf") if L is None else L / (1.0 - q * q)
    cor2 = _report("cor2", sq, _scaled(sq[-1], factor))
    return gap, cor2
