"""Martingale approximation of partial sums built from averaged correctors.

For a fixed averaging length m the corrector

    theta^m = (1/m) sum_{i=1}^m E_0(S_i) = sum_{j<m} (1 - j/m) Q^j f

yields martingale differences D_k^m = theta^m(xi_{k+1}) - (Q theta^m)(xi_k) and
the exact identity

    S_k = M_k^m + theta^m(xi_0) - theta^m(xi_k) + sum_{j<k} Y^m(xi_j),

with Y^m = (1/m) sum_{i=1}^m Q^i f.  The m -> infinity limit is obtained
directly from the Poisson potential g, D_k = g(xi_{k+1}) - (Q g)(xi_k).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .chain import (
    FiniteMarkovChain,
    _check_len,
    conditional_sum,
    operator_powers,
    poisson_solve,
)
from .errors import DimensionMismatch, EmptyBatch, InvalidState


@dataclass(frozen=True)
class AveragedCorrector:
    m: int
    theta: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class DifferenceKernel:
    """d[x, y] is the martingale increment on the transition x -> y."""

    d: np.ndarray
    variance: float
    label: str = ""

    def increments(self, path) -> np.ndarray:
        path = np.asarray(path)
        return self.d[path[..., :-1], path[..., 1:]]


@dataclass(frozen=True)
class DecompositionTrace:
    """Partial sums of one path split into martingale and remainder.

    All arrays are indexed by k = 0..n for a path xi_0..xi_n; ``rbar`` is the
    running sum of Y^m(xi_j) and ``rbar_direct`` the same quantity assembled
    from (1/m) E_{j-1}(S_{j+m} - S_j).
    """

    states: np.ndarray
    partial_sums: np.ndarray
    martingale: np.ndarray
    residual: np.ndarray
    theta_path: Optional[np.ndarray] = None
    rbar: Optional[np.ndarray] = None
    rbar_direct: Optional[np.ndarray] = None
    limit_martingale: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.states)

    def identity_error(self) -> float:
        """Largest deviation from S_k = M_k^m + theta_0 - theta_k + Rbar_k."""
        if self.theta_path is None or len(self.states) == 0:
            return 0.0
        rhs = self.martingale + self.theta_path[0] - self.theta_path + self.rbar
        return float(np.max(np.abs(self.partial_sums - rhs)))

    def rbar_error(self) -> float:
        if self.rbar is None or len(self.states) == 0:
            return 0.0
        return float(np.max(np.abs(self.rbar - self.rbar_direct)))


def averaged_corrector(chain: FiniteMarkovChain, f, m: int) -> AveragedCorrector:
    if m < 1:
        raise ValueError("m must be >= 1")
    f = np.asarray(f, dtype=float)
    powers = operator_powers(chain, f, m + 1)
    weights = 1.0 - np.arange(m) / m
    theta = weights @ powers[:m]
    y = powers[1:].sum(axis=0) / m
    return AveragedCorrector(m=m, theta=theta, y=y)


def corrector_identity_error(chain: FiniteMarkovChain, f, corrector: AveragedCorrector) -> float:
    """Max deviation from f = theta - Q theta + y (the one-step decomposition of X_k)."""
    lhs = corrector.theta - chain.kernel @ corrector.theta + corrector.y
    return float(np.max(np.abs(lhs - np.asarray(f))))


def kernel_from_potential(chain: FiniteMarkovChain, h, label: str = "") -> DifferenceKernel:
    """Increment kernel h(y) - (Qh)(x) and its stationary second moment."""
    h = np.asarray(h, dtype=float)
    d = h[None, :] - (chain.kernel @ h)[:, None]
    variance = float(np.sum(chain.pi[:, None] * chain.kernel * d**2))
    return DifferenceKernel(d=d, variance=variance, label=label)


def diff_kernel_m(chain: FiniteMarkovChain, f, m: int) -> DifferenceKernel:
    corrector = averaged_corrector(chain, f, m)
    return kernel_from_potential(chain, corrector.theta, label=f"m={m}")


def limit_diff_kernel(chain: FiniteMarkovChain, f) -> DifferenceKernel:
    return kernel_from_potential(chain, poisson_solve(chain, f), label="limit")


def centering_error(chain: FiniteMarkovChain, kernel: DifferenceKernel) -> float:
    """max_x |sum_y Q(x,y) d(x,y)|; zero for a martingale difference kernel."""
    return float(np.max(np.abs(np.sum(chain.kernel * kernel.d, axis=1))))


def diff_distance(chain: FiniteMarkovChain, a: DifferenceKernel, b: DifferenceKernel) -> float:
    """||D_a - D_b||_2 under the stationary transition law pi(x) Q(x, y)."""
    if a.d.shape != b.d.shape or a.d.shape != chain.kernel.shape:
        raise DimensionMismatch(f"kernel shapes {a.d.shape} and {b.d.shape} do not match the chain")
    diff = a.d - b.d
    return float(np.sqrt(np.sum(chain.pi[:, None] * chain.kernel * diff**2)))


def extrapolated_kernel(chain: FiniteMarkovChain, f, m: int) -> DifferenceKernel:
    """Richardson estimate 2 D^{2m} - D^m of the m -> infinity limit.

    theta^m differs from the Poisson potential by -(1/m) sum_j j Q^j f plus a
    term decaying geometrically in m, so one extrapolation step removes the
    leading 1/m error.
    """
    a = averaged_corrector(chain, f, m).theta
    b = averaged_corrector(chain, f, 2 * m).theta
    return kernel_from_potential(chain, 2.0 * b - a, label=f"richardson m={m}")


def _as_path(chain: FiniteMarkovChain, path) -> np.ndarray:
    path = np.asarray(path)
    if path.size and (
        not np.issubdtype(path.dtype, np.integer) or path.min() < 0 or path.max() >= chain.n_states
    ):
        raise InvalidState(f"path contains states outside 0..{chain.n_states - 1}")
    return path.astype(np.intp)


def decompose_trajectory(
    chain: FiniteMarkovChain,
    f,
    path,
    kernel: DifferenceKernel,
    corrector: Optional[AveragedCorrector] = None,
    limit_kernel: Optional[DifferenceKernel] = None,
) -> DecompositionTrace:
    f = np.asarray(f, dtype=float)
    _check_len(chain, f)
    path = _as_path(chain, path)
    if path.size == 0:
        empty = np.zeros(0)
        return DecompositionTrace(path, empty, empty, empty)

    def running(values):
        out = np.zeros(len(path))
        out[1:] = np.cumsum(values)
        return out

    s = running(f[path[:-1]])
    mart = running(kernel.d[path[:-1], path[1:]])
    extra = {}
    if corrector is not None:
        m = corrector.m
        direct = (conditional_sum(chain, f, m + 1) - f) / m
        extra = dict(
            theta_path=corrector.theta[path],
            rbar=running(corrector.y[path[:-1]]),
            rbar_direct=running(direct[path[:-1]]),
        )
    if limit_kernel is not None:
        extra["limit_martingale"] = running(limit_kernel.d[path[:-1], path[1:]])
    return DecompositionTrace(
        states=path, partial_sums=s, martingale=mart, residual=s - mart, **extra
    )


def residual_paths(chain: FiniteMarkovChain, f, paths, kernel: DifferenceKernel) -> np.ndarray:
    """R_k = S_k - M_k for a (replicas, n+1) array of paths, k = 0..n."""
    paths = np.asarray(paths, dtype=np.intp)
    f = np.asarray(f, dtype=float)
    step = f[paths[:, :-1]] - kernel.d[paths[:, :-1], paths[:, 1:]]
    out = np.zeros(paths.shape)
    np.cumsum(step, axis=1, out=out[:, 1:])
    return out


def max_square_statistic(residuals: np.ndarray, n: int):
    """Mean and standard error of max_{1<=j<=n} R_j^2 / n over rows."""
    if residuals.shape[0] == 0:
        raise EmptyBatch("no replicas")
    peak = np.max(residuals[:, 1 : n + 1] ** 2, axis=1) / n
    se = peak.std(ddof=1) / np.sqrt(len(peak)) if len(peak) > 1 else 0.0
    return float(peak.mean()), float(se)


def residual_max_statistic(traces: Sequence[DecompositionTrace], n: int):
    """Monte Carlo E(max_{1<=j<=n} (S_j - M_j)^2) / n with its standard error."""
    if len(traces) == 0:
        raise EmptyBatch("no traces supplied")
    if n < 1 or any(len(t) < n + 1 for t in traces):
        raise ValueError(f"every trace needs at least {n + 1} states")
    residuals = np.stack([t.residual[: n + 1] for t in traces])
    return max_square_statistic(residuals, n)


def necessity_bound(chain: FiniteMarkovChain, f, n: int) -> float:
    """3 max_{k<=n} ||E_0(S_k)||_2, which dominates ||R_n^n||_2."""
    sums = np.cumsum(operator_powers(chain, f, n), axis=0)
    norms = np.sqrt(sums**2 @ chain.pi)
    return 3.0 * float(norms.max())

