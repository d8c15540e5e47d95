"""Seeded simulation of stationary paths and Monte Carlo checks.

Replica r of a batch with seed s draws its uniforms from
``PCG64(SeedSequence(s, spawn_key=(r,)))``, so a path depends only on
(seed, r, chain) and never on batch size or evaluation order.  All
reductions go through per-replica arrays, which keeps statistics
bit-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np
from scipy import stats

from .chain import (
    FiniteMarkovChain,
    _check_len,
    long_run_variance,
    norm_pi,
    operator_powers,
    tail_factor,
)
from .criteria import hannan_profile
from .errors import DegenerateVariance, EmptyBatch, InvalidState, NotRegular, NotReversible, SeriesNotConverged
from .martingale import (
    averaged_corrector,
    diff_distance,
    diff_kernel_m,
    limit_diff_kernel,
    residual_paths,
)
from .spectral import kv_integral, spectral_measure, structure_flags

SIGMA_CUSHION = 3.0
KS_THRESHOLD = 0.05
KS_REFERENCE_REPLICAS = 2000
_CHUNK_CELLS = 1 << 21


@dataclass(frozen=True)
class TrajectoryBatch:
    seed: int
    n: int
    paths: np.ndarray  # (replicas, n + 1) state indices, xi_0 ~ pi

    @property
    def replicas(self) -> int:
        return self.paths.shape[0]

    def chunks(self):
        rows = max(1, _CHUNK_CELLS // (self.n + 1))
        for start in range(0, self.replicas, rows):
            yield self.paths[start : start + rows].astype(np.intp)


@numba.njit(cache=True)
def _walk(cum_pi, cum_kernel, uniforms, out):
    reps, length = uniforms.shape
    last = cum_pi.shape[0] - 1
    for r in range(reps):
        u = uniforms[r, 0]
        x = 0
        while x < last and u >= cum_pi[x]:
            x += 1
        out[r, 0] = x
        for t in range(1, length):
            u = uniforms[r, t]
            y = 0
            while y < last and u >= cum_kernel[x, y]:
                y += 1
            x = y
            out[r, t] = x


def replica_generator(seed: int, replica: int, start: Optional[int] = None) -> np.random.Generator:
    key = (replica,) if start is None else (replica, start + 1)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def simulate(
    chain: FiniteMarkovChain, n: int, replicas: int, seed: int, start: Optional[int] = None
) -> TrajectoryBatch:
    """Paths xi_0..xi_n by inverse-CDF sampling.

    xi_0 ~ pi by default.  With ``start`` every replica begins at that state and
    draws from its own stream, disjoint from the stationary one.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if replicas < 1:
        raise EmptyBatch("replicas must be >= 1")
    if start is not None and not 0 <= start < chain.n_states:
        raise InvalidState(f"start state {start} outside 0..{chain.n_states - 1}")
    if start is None:
        cum_pi = np.cumsum(chain.pi)
    else:
        cum_pi = (np.arange(chain.n_states) >= start).astype(float)
    cum_pi[-1] = 1.0
    cum_kernel = np.cumsum(chain.kernel, axis=1)
    cum_kernel[:, -1] = 1.0
    dtype = np.min_scalar_type(chain.n_states - 1)
    paths = np.empty((replicas, n + 1), dtype=dtype)
    rows = max(1, _CHUNK_CELLS // (n + 1))
    for start in range(0, replicas, rows):
        stop = min(start + rows, replicas)
        uniforms = np.stack([replica_generator(seed, r, start).random(n + 1) for r in range(start, stop)])
        block = np.empty(uniforms.shape, dtype=np.int64)
        _walk(cum_pi, cum_kernel, uniforms, block)
        paths[start:stop] = block
    paths.setflags(write=False)
    return TrajectoryBatch(seed=seed, n=n, paths=paths)


def _mean_se(samples: np.ndarray):
    samples = np.asarray(samples, dtype=float)
    se = samples.std(ddof=1) / np.sqrt(len(samples)) if len(samples) > 1 else 0.0
    return float(samples.mean()), float(se)


def _partial_sums(values: np.ndarray) -> np.ndarray:
    """Rows 0, v_0, v_0 + v_1, ... for each replica."""
    out = np.zeros((values.shape[0], values.shape[1] + 1))
    np.cumsum(values, axis=1, out=out[:, 1:])
    return out


# -- seminorms -----------------------------------------------------------------


@dataclass(frozen=True)
class SeminormEstimate:
    n_grid: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    with_max: bool

    @property
    def final(self):
        """Estimate and standard error at the largest n (the limsup surrogate)."""
        return float(self.values[-1]), float(self.std_errors[-1])


def estimate_seminorm(
    chain: FiniteMarkovChain,
    z,
    n_grid: Sequence[int],
    replicas: int,
    seed: int,
    with_max: bool = True,
    batch: Optional[TrajectoryBatch] = None,
) -> SeminormEstimate:
    """(1/sqrt n) || max_{k<=n} |sum_{j=1}^k Z(xi_j)| ||_2, or the no-max variant."""
    z = np.asarray(z, dtype=float)
    _check_len(chain, z)
    grid = np.asarray(n_grid, dtype=int)
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 1:
        raise ValueError("n_grid must be positive and strictly increasing")
    if batch is None:
        batch = simulate(chain, int(grid[-1]), replicas, seed)
    per_replica = []
    for paths in batch.chunks():
        sums = _partial_sums(z[paths[:, 1 : grid[-1] + 1]])
        if with_max:
            sums = np.maximum.accumulate(np.abs(sums), axis=1)
        per_replica.append(sums[:, grid] ** 2)
    second = np.concatenate(per_replica)
    values, errors = [], []
    for col, n in enumerate(grid):
        mean, se = _mean_se(second[:, col])
        root = np.sqrt(mean)
        values.append(root / np.sqrt(n))
        # delta method for sqrt(mean)
        errors.append(se / (2.0 * root) / np.sqrt(n) if root > 0 else 0.0)
    return SeminormEstimate(grid, np.array(values), np.array(errors), with_max)


# -- maximal inequalities ------------------------------------------------------


@dataclass(frozen=True)
class InequalityReport:
    name: str
    n: int
    lhs: float
    lhs_stderr: float
    rhs: float
    margin: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "margin", self.rhs - (self.lhs + SIGMA_CUSHION * self.lhs_stderr))

    @property
    def passed(self) -> bool:
        return self.margin >= 0.0


def max_partial_sum_moment(chain: FiniteMarkovChain, f, batch: TrajectoryBatch):
    """Monte Carlo E(max_{1<=i<=n} S_i^2) with its standard error."""
    f = np.asarray(f, dtype=float)
    peaks = [np.max(_partial_sums(f[p[:, :-1]])[:, 1:] ** 2, axis=1) for p in batch.chunks()]
    return _mean_se(np.concatenate(peaks))


def _lhs(chain, f, n, replicas, seed, batch):
    if batch is None:
        batch = simulate(chain, n, replicas, seed)
    if batch.n != n:
        raise ValueError(f"batch has length {batch.n}, expected {n}")
    return max_partial_sum_moment(chain, f, batch)


def rio_rhs(chain: FiniteMarkovChain, f, n: int) -> float:
    """8 n E X_0^2 + 16 sum_{k=2}^n E|X_0 E_0(S_k - S_1)|."""
    f = np.asarray(f, dtype=float)
    powers = operator_powers(chain, f, max(n, 1))
    shifted = np.cumsum(powers[1:], axis=0)  # row k-2 holds E_0(S_k - S_1)
    cross = np.abs(shifted) @ (chain.pi * np.abs(f))
    return float(8 * n * norm_pi(chain, f) ** 2 + 16 * cross.sum())


def pu_rhs(chain: FiniteMarkovChain, f, n: int) -> float:
    """n (2 ||X_0|| + 3 sum_{j<r} ||E_0(S_{2^j})|| / 2^{j/2})^2 with 2^{r-1} < n <= 2^r."""
    f = np.asarray(f, dtype=float)
    r = (n - 1).bit_length()
    total = 2.0 * norm_pi(chain, f)
    if r:
        sums = np.cumsum(operator_powers(chain, f, 2 ** (r - 1)), axis=0)
        norms = np.sqrt(sums**2 @ chain.pi)
        j = np.arange(r)
        total += 3.0 * np.sum(norms[2**j - 1] / 2.0 ** (j / 2))
    return float(n * total**2)


def dm_rhs(chain: FiniteMarkovChain, f, n: int) -> float:
    """4 n (sum_i ||E_{-i}(X_0) - E_{-i-1}(X_0)||)^2, truncated sum (a lower bound)."""
    K = 64
    while True:
        report = hannan_profile(chain, f, K)
        if not report.details["regular"]:
            raise NotRegular("E(X_0 | F_-inf) = 0 is not certified")
        if report.tail_bound <= 1e-12 * max(1.0, report.value) or K >= 1 << 16:
            return float(4 * n * report.value**2)
        K *= 4


def lw_rhs(chain: FiniteMarkovChain, f, n: int) -> float:
    """(24 n + 3) sum_{k>=0} E(X_0 X_k), the series evaluated spectrally."""
    if not structure_flags(chain).reversible:
        raise NotReversible("inequality requires a reversible chain")
    if norm_pi(chain, f) > 0 and not np.isfinite(tail_factor(chain)):
        raise SeriesNotConverged("covariance series does not converge (periodic chain)")
    return float((24 * n + 3) * kv_integral(spectral_measure(chain, f)))


def _verify(name, rhs_fn, chain, f, n, replicas, seed, batch):
    rhs = rhs_fn(chain, f, n)
    lhs, se = _lhs(chain, f, n, replicas, seed, batch)
    return InequalityReport(name=name, n=n, lhs=lhs, lhs_stderr=se, rhs=rhs)


def verify_rio(chain, f, n, replicas, seed, batch=None) -> InequalityReport:
    return _verify("rio", rio_rhs, chain, f, n, replicas, seed, batch)


def verify_pu(chain, f, n, replicas, seed, batch=None) -> InequalityReport:
    return _verify("peligrad_utev", pu_rhs, chain, f, n, replicas, seed, batch)


def verify_dm(chain, f, n, replicas, seed, batch=None) -> InequalityReport:
    return _verify("dedecker_merlevede", dm_rhs, chain, f, n, replicas, seed, batch)


def verify_lw(chain, f, n, replicas, seed, batch=None) -> InequalityReport:
    return _verify("wu", lw_rhs, chain, f, n, replicas, seed, batch)


def verify_all(chain, f, n, replicas, seed):
    """All applicable inequalities on one shared batch; Wu only for reversible chains."""
    batch = simulate(chain, n, replicas, seed)
    checks = [verify_rio, verify_pu, verify_dm]
    if structure_flags(chain).reversible:
        checks.append(verify_lw)
    return [check(chain, f, n, replicas, seed, batch=batch) for check in checks]


# -- functional CLT ------------------------------------------------------------


def ks_threshold(count: int) -> float:
    """KS acceptance level: 0.05 at 2000 samples, scaled as 1/sqrt(count)."""
    return KS_THRESHOLD * np.sqrt(KS_REFERENCE_REPLICAS / count)


def _halfnormal_cdf(a):
    return np.clip(2.0 * stats.norm.cdf(a) - 1.0, 0.0, None)


@dataclass(frozen=True)
class KSResult:
    label: str
    count: int
    terminal_ks: float
    max_ks: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.terminal_ks < self.threshold and self.max_ks < self.threshold


@dataclass(frozen=True)
class FcltReport:
    sigma2: float
    n: int
    overall: KSResult
    groups: tuple

    @property
    def passed(self) -> bool:
        return self.overall.passed and all(g.passed for g in self.groups)


def _ks(label, terminal, peak):
    return KSResult(
        label=label,
        count=len(terminal),
        terminal_ks=float(stats.kstest(terminal, stats.norm.cdf).statistic),
        max_ks=float(stats.kstest(peak, _halfnormal_cdf).statistic),
        threshold=float(ks_threshold(len(terminal))),
    )


def _normalized(f, batch, scale):
    terminal, peak = [], []
    for paths in batch.chunks():
        sums = _partial_sums(f[paths[:, :-1]])
        terminal.append(sums[:, -1] / scale)
        peak.append(sums.max(axis=1) / scale)
    return np.concatenate(terminal), np.concatenate(peak)


def fclt_statistics(chain: FiniteMarkovChain, f, n: int, replicas: int, seed: int) -> FcltReport:
    """KS distances of S_n / sqrt(n sigma^2) to N(0,1) and of the running maximum
    max_{0<=k<=n} S_k / sqrt(n sigma^2) to the law of sup_{t<=1} W_t.

    The conditional check runs ``replicas`` further paths from each fixed
    initial state, so every group is tested at the same sample size as the
    stationary batch.
    """
    f = np.asarray(f, dtype=float)
    sigma2 = long_run_variance(chain, f)
    if sigma2 <= 1e-12:
        raise DegenerateVariance(f"long-run variance {sigma2!r} vanishes")
    scale = np.sqrt(n * sigma2)
    overall = _ks("all", *_normalized(f, simulate(chain, n, replicas, seed), scale))
    groups = tuple(
        _ks(f"xi_0={x}", *_normalized(f, simulate(chain, n, replicas, seed, start=x), scale))
        for x in range(chain.n_states)
    )
    return FcltReport(sigma2=sigma2, n=n, overall=overall, groups=groups)


# -- residual decay ------------------------------------------------------------


@dataclass(frozen=True)
class DecayCurve:
    n_grid: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray


def residual_decay_curve(
    chain: FiniteMarkovChain, f, n_grid: Sequence[int], replicas: int, seed: int, kernel=None
) -> DecayCurve:
    """E(max_{1<=j<=n} (S_j - M_j)^2) / n per n; M built from the limit kernel by default."""
    grid = np.asarray(n_grid, dtype=int)
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 1:
        raise ValueError("n_grid must be positive and strictly increasing")
    if kernel is None:
        kernel = limit_diff_kernel(chain, f)
    batch = simulate(chain, int(grid[-1]), replicas, seed)
    per_replica = []
    for paths in batch.chunks():
        peak = np.maximum.accumulate(residual_paths(chain, f, paths, kernel)[:, 1:] ** 2, axis=1)
        per_replica.append(peak[:, grid - 1] / grid)
    table = np.concatenate(per_replica)
    stats_ = [_mean_se(table[:, i]) for i in range(len(grid))]
    return DecayCurve(grid, np.array([s[0] for s in stats_]), np.array([s[1] for s in stats_]))


@dataclass(frozen=True)
class ApproximationTrend:
    m_grid: np.ndarray
    seminorm: np.ndarray
    seminorm_stderr: np.ndarray
    distance: np.ndarray
    residual: np.ndarray
    residual_stderr: np.ndarray
    spearman: dict


def approximation_trend(
    chain: FiniteMarkovChain, f, m_grid: Sequence[int], n: int, replicas: int, seed: int
) -> ApproximationTrend:
    """||Y^m||_{M+} estimate, ||D^m - D||_2 and the D^m residual statistic across m."""
    f = np.asarray(f, dtype=float)
    limit = limit_diff_kernel(chain, f)
    batch = simulate(chain, n, replicas, seed)
    sem, sem_se, dist, res, res_se = [], [], [], [], []
    for m in m_grid:
        y = averaged_corrector(chain, f, m).y
        value, se = estimate_seminorm(chain, y, [n], replicas, seed, batch=batch).final
        sem.append(value)
        sem_se.append(se)
        kernel = diff_kernel_m(chain, f, m)
        dist.append(diff_distance(chain, kernel, limit))
        peaks = [
            np.max(residual_paths(chain, f, p, kernel)[:, 1:] ** 2, axis=1) / n
            for p in batch.chunks()
        ]
        mean, se = _mean_se(np.concatenate(peaks))
        res.append(mean)
        res_se.append(se)
    rho = {
        "seminorm~distance": stats.spearmanr(sem, dist).statistic,
        "seminorm~residual": stats.spearmanr(sem, res).statistic,
        "distance~residual": stats.spearmanr(dist, res).statistic,
    }
    return ApproximationTrend(
        np.asarray(m_grid), np.array(sem), np.array(sem_se), np.array(dist),
        np.array(res), np.array(res_se), {k: float(v) for k, v in rho.items()},
    )
