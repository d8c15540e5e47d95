"""Spectral measure of an observable under a self-adjoint or normal Markov operator.

Conjugating by pi^{1/2} turns L2(pi) into plain Euclidean space, where Q
becomes A = pi^{1/2} Q pi^{-1/2}.  Q is self-adjoint in L2(pi) iff A is
symmetric, and normal iff A commutes with its transpose.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur

from .chain import FiniteMarkovChain, conditional_sum, norm_pi
from .errors import NotNormalOperator, NotReversible, WeightAtOne

STRUCTURE_TOL = 1e-10
UNIT_OVERSHOOT = 1e-12
ATOM_AT_ONE = 1e-10


@dataclass(frozen=True)
class StructureFlags:
    reversible: bool
    normal: bool


@dataclass(frozen=True)
class SpectralMeasure:
    """Atoms ``points`` with masses ``weights``; total mass is ||f||^2."""

    points: np.ndarray
    weights: np.ndarray
    reversible: bool

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def moment(self, k: int):
        """sum_i w_i z_i^k, which equals <f, Q^k f>_pi."""
        return np.sum(self.weights * self.points**k)


@dataclass(frozen=True)
class NormalBounds:
    normcond_integral: float
    plus_bound: float


def _conjugated(chain: FiniteMarkovChain) -> np.ndarray:
    s = np.sqrt(chain.pi)
    return s[:, None] * chain.kernel / s[None, :]


def structure_flags(chain: FiniteMarkovChain) -> StructureFlags:
    if chain.pi.min() < 1e-6:
        warnings.warn("pi has entries below 1e-6; structure tests are ill-conditioned", stacklevel=2)
    flow = chain.pi[:, None] * chain.kernel
    reversible = bool(np.max(np.abs(flow - flow.T)) <= STRUCTURE_TOL)
    a = _conjugated(chain)
    normal = bool(np.linalg.norm(a @ a.T - a.T @ a) <= STRUCTURE_TOL)
    assert normal or not reversible
    return StructureFlags(reversible=reversible, normal=normal)


def _check_no_mass_at_one(points, weights) -> None:
    near = np.abs(points - 1.0) < ATOM_AT_ONE
    if np.any(weights[near] > ATOM_AT_ONE):
        raise WeightAtOne("observable has spectral mass at 1 (not centered or chain reducible)")


def spectral_measure(chain: FiniteMarkovChain, f) -> SpectralMeasure:
    """Spectral measure of f for Q on L2(pi).

    The atom at 1 carried by the constants is removed after checking that it
    has no mass.
    """
    f = np.asarray(f, dtype=float)
    flags = structure_flags(chain)
    a = _conjugated(chain)
    ftilde = np.sqrt(chain.pi) * f
    if flags.reversible:
        points, vectors = np.linalg.eigh(0.5 * (a + a.T))
        if np.any(np.abs(points) > 1.0 + UNIT_OVERSHOOT):
            raise ArithmeticError("eigenvalue outside [-1, 1]")
        points = np.clip(points, -1.0, 1.0)
        weights = (vectors.T @ ftilde) ** 2
    elif flags.normal:
        t, z = schur(a.astype(complex), output="complex")
        if np.linalg.norm(np.triu(t, 1)) > 1e-8:
            raise NotNormalOperator("Schur form is not diagonal")
        points = np.diag(t).copy()
        modulus = np.abs(points)
        if np.any(modulus > 1.0 + UNIT_OVERSHOOT):
            raise ArithmeticError("eigenvalue outside the unit disk")
        over = modulus > 1.0
        points[over] /= modulus[over]
        weights = np.abs(z.conj().T @ ftilde) ** 2
    else:
        raise NotNormalOperator("Q is neither self-adjoint nor normal in L2(pi)")
    _check_no_mass_at_one(points, weights)
    keep = np.abs(points - 1.0) >= ATOM_AT_ONE
    return SpectralMeasure(points=points[keep], weights=weights[keep], reversible=flags.reversible)


def _guard(measure: SpectralMeasure) -> None:
    _check_no_mass_at_one(measure.points, measure.weights)


def _geometric(points, m: int) -> np.ndarray:
    """1 + z + ... + z^(m-1) for each atom."""
    out = np.zeros(points.shape, dtype=points.dtype)
    term = np.ones(points.shape, dtype=points.dtype)
    for _ in range(m):
        out = out + term
        term = term * points
    return out


def _live(measure: SpectralMeasure):
    mask = measure.weights > 0
    return measure.points[mask], measure.weights[mask]


def kv_integral(measure: SpectralMeasure) -> float:
    """int (1 - t)^{-1} rho_f(dt) = sum_{n>=0} E(X_0 X_n)."""
    if not measure.reversible:
        raise NotReversible("kv_integral needs a self-adjoint operator")
    _guard(measure)
    points, weights = _live(measure)
    return float(np.sum(weights / (1.0 - points)))


def reversible_seminorm_bound(measure: SpectralMeasure, m: int) -> float:
    """27 int (1 + t + ... + t^(m-1))^2 / (m^2 (1 - t)) rho_f(dt), bounding ||Y^m||_{M+}^2."""
    if not measure.reversible:
        raise NotReversible("the 27-constant bound needs a self-adjoint operator")
    if m < 1:
        raise ValueError("m must be >= 1")
    _guard(measure)
    points, weights = _live(measure)
    geo = _geometric(points, m)
    return float(27.0 * np.sum(weights * geo**2 / (m**2 * (1.0 - points))))


def normal_integral_and_bound(measure: SpectralMeasure, m: int) -> NormalBounds:
    """int |1-z|^{-1} rho_f(dz) and 4 int |1+...+z^(m-1)|^2 / (m^2 |1-z|) rho_f(dz)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    _guard(measure)
    points, weights = _live(measure)
    gap = np.abs(1.0 - points)
    geo = np.abs(_geometric(points, m)) ** 2
    return NormalBounds(
        normcond_integral=float(np.sum(weights / gap)),
        plus_bound=float(4.0 * np.sum(weights * geo / (m**2 * gap))),
    )


def conditional_norm_identity(chain: FiniteMarkovChain, f, measure: SpectralMeasure, k: int) -> float:
    """sum_i w_i |1 + z_i + ... + z_i^(k-1)|^2, checked against ||E_0(S_k)||_2^2."""
    if k < 1:
        raise ValueError("k must be >= 1")
    flags = structure_flags(chain)
    if not flags.normal:
        raise NotNormalOperator("identity holds for normal operators only")
    spectral = float(np.sum(measure.weights * np.abs(_geometric(measure.points, k)) ** 2))
    direct = norm_pi(chain, conditional_sum(chain, f, k)) ** 2
    if abs(spectral - direct) > 1e-9 * max(1.0, abs(direct)):
        raise AssertionError(f"spectral side {spectral!r} != projective side {direct!r}")
    return spectral
