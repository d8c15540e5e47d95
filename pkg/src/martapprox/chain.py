"""Finite-state stationary Markov chains and the L2(pi) geometry.

A stationary sequence X_i = f(xi_i) is realized by a chain started from its
invariant law pi.  Every conditional expectation E_0(.) is then a finite
matrix-vector product:  E(h(xi_k) | xi_0 = x) = (Q^k h)(x).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    NonStochasticRow,
    NotCentered,
    ReducibleChain,
    SeriesNotConverged,
    SingularSystem,
    ValidationError,
)

# input validation / linear-system residuals / cross-checks
ROW_TOL = 1e-9
INPUT_TOL = 1e-12
SOLVE_TOL = 1e-10
CHECK_TOL = 1e-8

MAX_SERIES_TERMS = 10**6

StateFunction = np.ndarray


@dataclass(frozen=True, eq=False)
class FiniteMarkovChain:
    """Irreducible chain with row-stochastic ``kernel`` and invariant ``pi``."""

    kernel: np.ndarray
    pi: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_states(self) -> int:
        return self.kernel.shape[0]

    def cached(self, key, compute):
        if key not in self._cache:
            self._cache[key] = compute()
        return self._cache[key]


def build_chain(kernel) -> FiniteMarkovChain:
    """Validate ``kernel`` and solve for its unique stationary law.

    Rows must sum to one within 1e-9 and be non-negative; they are then
    renormalized so that row sums are exact to machine precision.  Raises
    ``ReducibleChain`` when the invariant probability vector is not unique
    or has a zero entry.
    """
    q = np.array(kernel, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] == 0:
        raise ValidationError(f"kernel must be a non-empty square matrix, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValidationError("kernel has non-finite entries")
    n = q.shape[0]
    if np.any(q < 0):
        row = int(np.argwhere(q < 0)[0, 0])
        raise NonStochasticRow(f"row {row} has a negative entry")
    sums = q.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
    if bad.size:
        raise NonStochasticRow(f"row {int(bad[0])} sums to {sums[bad[0]]!r}")
    # rows already exact to a few ulps are left alone so that parsing is idempotent
    off = np.abs(sums - 1.0) > 4 * np.finfo(float).eps
    q[off] = q[off] / sums[off, None]

    a = np.eye(n) - q.T
    if n > 1 and np.linalg.matrix_rank(a, tol=1e-10) < n - 1:
        raise ReducibleChain("invariant probability vector is not unique")
    system = np.vstack([a, np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    if np.any(pi <= INPUT_TOL):
        raise ReducibleChain("invariant law has a zero entry (transient states)")
    pi = pi / pi.sum()
    if np.max(np.abs(pi @ q - pi)) > SOLVE_TOL:
        raise ReducibleChain("could not solve pi Q = pi to tolerance")
    q.setflags(write=False)
    pi.setflags(write=False)
    return FiniteMarkovChain(kernel=q, pi=pi)


def _check_len(chain: FiniteMarkovChain, *vectors) -> None:
    for v in vectors:
        if np.shape(v) != (chain.n_states,):
            raise DimensionMismatch(
                f"expected a vector of length {chain.n_states}, got shape {np.shape(v)}"
            )


def as_observable(chain: FiniteMarkovChain, values, center: bool = False) -> np.ndarray:
    """Return ``values`` as a member of L2_0(pi).

    With ``center=True`` the pi-mean is subtracted, otherwise a non-centered
    input raises ``NotCentered``.
    """
    f = np.asarray(values, dtype=float).copy()
    _check_len(chain, f)
    mean = float(chain.pi @ f)
    if center:
        f -= mean
    elif abs(mean) > INPUT_TOL * max(1.0, float(np.max(np.abs(f)))):
        raise NotCentered(f"pi-mean of observable is {mean!r}")
    f.setflags(write=False)
    return f


def apply_operator(chain: FiniteMarkovChain, h, power: int = 1) -> np.ndarray:
    """Q^power h, i.e. x -> E(h(xi_power) | xi_0 = x)."""
    h = np.asarray(h, dtype=float)
    _check_len(chain, h)
    if power < 0:
        raise ValueError("power must be non-negative")
    out = h.copy()
    for _ in range(power):
        out = chain.kernel @ out
    return out


def operator_powers(chain: FiniteMarkovChain, h, count: int) -> np.ndarray:
    """Rows Q^0 h, Q^1 h, ..., Q^(count-1) h."""
    h = np.asarray(h, dtype=float)
    _check_len(chain, h)
    out = np.empty((count, chain.n_states))
    if count:
        out[0] = h
    for j in range(1, count):
        out[j] = chain.kernel @ out[j - 1]
    return out


def conditional_sum(chain: FiniteMarkovChain, f, k: int) -> np.ndarray:
    """E_0(S_k) as a function of xi_0: sum_{j<k} Q^j f."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return operator_powers(chain, f, k).sum(axis=0)


def inner_product_pi(chain: FiniteMarkovChain, g, h) -> float:
    g = np.asarray(g)
    h = np.asarray(h)
    _check_len(chain, g, h)
    return float(np.sum(chain.pi * g * h).real)


def norm_pi(chain: FiniteMarkovChain, h) -> float:
    h = np.asarray(h)
    _check_len(chain, h)
    return float(np.sqrt(np.sum(chain.pi * np.abs(h) ** 2)))


def centered_operator_norm(chain: FiniteMarkovChain, power: int) -> float:
    """Operator norm of Q^power on L2_0(pi).

    Computed as the spectral norm of pi^{1/2} Q^power pi^{-1/2} after
    projecting out the invariant direction pi^{1/2}.
    """

    def compute():
        s = np.sqrt(chain.pi)
        b = s[:, None] * np.linalg.matrix_power(chain.kernel, power) / s[None, :]
        b = b - np.outer(s, s)
        return float(min(1.0, np.linalg.norm(b, 2)))

    return chain.cached(("opnorm", power), compute)


def decay_envelope(chain: FiniteMarkovChain, max_log2: int = 20):
    """Smallest dyadic block length L with ||Q^L||_{L2_0} = q < 1.

    Certifies ||Q^(K+j) h|| <= q**(j // L) ||Q^K h|| for centered h, so any
    geometric tail beyond K is at most ``||Q^K h|| * L / (1 - q)``.  Returns
    ``(None, 1.0)`` for chains without such a block (periodic chains).
    """

    def compute():
        for e in range(max_log2 + 1):
            L = 2**e
            q = centered_operator_norm(chain, L)
            if q < 1.0 - 1e-12:
                return L, q
        return None, 1.0

    return chain.cached("envelope", compute)


def tail_factor(chain: FiniteMarkovChain) -> float:
    """Multiplier G with sum_{j>=0} ||Q^(K+j) h|| <= G ||Q^K h||; inf if none."""
    L, q = decay_envelope(chain)
    if L is None:
        return float("inf")
    return L / (1.0 - q)


def l2_0_spectral_radius(chain: FiniteMarkovChain) -> float:
    """Largest modulus of an eigenvalue of Q on the centered subspace."""
    centered = chain.kernel - np.outer(np.ones(chain.n_states), chain.pi)
    return float(np.max(np.abs(np.linalg.eigvals(centered))))


def poisson_solve(chain: FiniteMarkovChain, f) -> np.ndarray:
    """Centered solution g of (I - Q) g = f."""
    f = np.asarray(f, dtype=float)
    _check_len(chain, f)
    n = chain.n_states
    a = np.eye(n) - chain.kernel + np.outer(np.ones(n), chain.pi)
    try:
        g = np.linalg.solve(a, f)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("I - Q is singular on the centered subspace") from exc
    scale = max(1.0, norm_pi(chain, f))
    residual = norm_pi(chain, g - chain.kernel @ g - f)
    if residual > SOLVE_TOL * scale or abs(chain.pi @ g) > SOLVE_TOL * scale:
        raise SingularSystem(f"Poisson residual {residual:.3e} exceeds tolerance")
    return g


def covariance_series(chain: FiniteMarkovChain, f, tol: float = SOLVE_TOL):
    """Sum_{k>=0} <f, Q^k f> truncated once the certified tail is below ``tol``.

    Returns ``(value, K)``.
    """
    f = np.asarray(f, dtype=float)
    nf = norm_pi(chain, f)
    if nf == 0.0:
        return 0.0, 0
    factor = tail_factor(chain)
    if not np.isfinite(factor):
        raise SeriesNotConverged("no contracting block: Q has modulus-one spectrum on L2_0")
    total = nf**2
    h = f
    for k in range(1, MAX_SERIES_TERMS + 1):
        h = chain.kernel @ h
        total += inner_product_pi(chain, f, h)
        if nf * norm_pi(chain, h) * factor < tol:
            return total, k
    raise SeriesNotConverged(f"tail bound above {tol} after {MAX_SERIES_TERMS} terms")


def long_run_variance(chain: FiniteMarkovChain, f) -> float:
    """sigma^2 = lim var(S_n)/n.

    Evaluated as ||g||^2 - ||Qg||^2 from the Poisson potential and checked
    against ||f||^2 + 2 sum_{k>=1} <f, Q^k f>.
    """
    g = poisson_solve(chain, f)
    from_potential = norm_pi(chain, g) ** 2 - norm_pi(chain, chain.kernel @ g) ** 2
    series, _ = covariance_series(chain, f, tol=SOLVE_TOL / 2)
    from_series = 2.0 * series - norm_pi(chain, f) ** 2
    if abs(from_potential - from_series) > CHECK_TOL * max(1.0, abs(from_potential)):
        raise SeriesNotConverged(
            f"variance mismatch: potential {from_potential!r} vs series {from_series!r}"
        )
    return max(from_potential, 0.0)


# -- ready-made chains ---------------------------------------------------------


def two_state_chain(p: float, q: float) -> FiniteMarkovChain:
    """Jump 0->1 with probability p and 1->0 with probability q."""
    return build_chain([[1 - p, p], [q, 1 - q]])


def iid_chain(pi) -> FiniteMarkovChain:
    pi = np.asarray(pi, dtype=float)
    return build_chain(np.tile(pi, (pi.size, 1)))


def cycle_chain(n: int) -> FiniteMarkovChain:
    """Deterministic rotation x -> x+1 mod n."""
    return build_chain(np.roll(np.eye(n), 1, axis=1))


def random_chain(rng: np.random.Generator, n: int, concentration: float = 1.0) -> FiniteMarkovChain:
    """Rows drawn independently from a symmetric Dirichlet law."""
    return build_chain(rng.dirichlet(np.full(n, concentration), size=n))


def random_reversible_chain(rng: np.random.Generator, n: int) -> FiniteMarkovChain:
    """Random walk on a complete graph with random symmetric conductances."""
    w = rng.exponential(size=(n, n))
    w = w + w.T
    return build_chain(w / w.sum(axis=1, keepdims=True))


def random_circulant_chain(rng: np.random.Generator, n: int) -> FiniteMarkovChain:
    """Random walk on Z_n with a random step law; normal, usually not reversible."""
    steps = rng.dirichlet(np.ones(n))
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    return build_chain(steps[idx])


def random_observable(rng: np.random.Generator, chain: FiniteMarkovChain) -> np.ndarray:
    return as_observable(chain, rng.normal(size=chain.n_states), center=True)
