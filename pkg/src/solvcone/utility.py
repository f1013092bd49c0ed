"""Power utility of the liquidation value and its growth/integrability checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cone_geometry import TOL, SolvencyCone, liquidation_values, purchase_values


@dataclass(frozen=True)
class UtilitySpec:
    """``U(x) = ℓ(x)^{1-γ} / (1-γ)``; prices do not enter this family."""

    gamma: float
    q: float | None = None
    C: float | None = None

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        q = 2.0 / (1.0 - self.gamma) if self.q is None else float(self.q)
        if q * (1.0 - self.gamma) <= 1.0:
            raise ValueError("q must exceed 1/(1-gamma)")
        C = 1.0 / (1.0 - self.gamma) if self.C is None else float(self.C)
        if C <= 0:
            raise ValueError("growth constant must be positive")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "C", C)

    @property
    def growth_exponent(self) -> float:
        """Smallest g in {γ, 1-γ} with ``U <= C (1 + ℘^g)`` for this family (ℓ <= ℘)."""
        return max(self.gamma, 1.0 - self.gamma)

    def of_cash(self, ell):
        """Utility of a numeraire amount (vectorised, clipped at 0)."""
        ell = np.maximum(np.asarray(ell, float), 0.0)
        return ell ** (1.0 - self.gamma) / (1.0 - self.gamma)


class UtilityDomainError(ValueError):
    pass


def eval_utility(spec: UtilitySpec, x, cone: SolvencyCone, tol: float = TOL):
    """U at a position (or rows of positions); raises for positions outside K."""
    x = np.asarray(x, float)
    ell = liquidation_values(cone, x)
    scale = np.maximum(1.0, np.abs(x).max(axis=-1))
    if np.any(ell < -tol * scale):
        raise UtilityDomainError("utility is defined on the solvency cone only")
    out = spec.of_cash(ell)
    return float(out) if np.ndim(out) == 0 else out


def m1(spec: UtilitySpec, alpha):
    return 1.0 - (1.0 - np.asarray(alpha, float)) ** (1.0 - spec.gamma)


@dataclass(frozen=True, eq=False)
class A1Certificate:
    alphas: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    zeta_mean: float
    min_slack: float
    violation: tuple | None = None

    @property
    def ok(self) -> bool:
        return self.violation is None


def check_A1(spec: UtilitySpec, samples, alphas, cone: SolvencyCone, tol: float = 1e-12) -> A1Certificate:
    """``U((1-α)x) >= (1-m1(α)) U(x) - m2(α) ζ`` with ``m2 = ζ = 0``."""
    X = np.atleast_2d(np.asarray(samples, float))
    if X.shape[0] == 0:
        raise ValueError("need at least one sample")
    alphas = np.asarray(alphas, float)
    U = eval_utility(spec, X, cone)
    U = np.atleast_1d(U)
    mm1 = m1(spec, alphas)
    lhs = np.array([np.atleast_1d(eval_utility(spec, (1 - a) * X, cone)) for a in alphas])  # (A, n)
    slack = lhs - (1 - mm1)[:, None] * U[None, :]
    worst = np.unravel_index(np.argmin(slack), slack.shape)
    violation = None
    if slack[worst] < -tol * max(1.0, float(np.abs(U).max())):
        violation = (X[worst[1]].copy(), float(alphas[worst[0]]), float(slack[worst]))
    return A1Certificate(alphas, mm1, np.zeros_like(alphas), 0.0, float(slack.min()), violation)


@dataclass(frozen=True, eq=False)
class GrowthReport:
    exponent: float
    min_slack: float
    violations: np.ndarray  # indices of violating samples
    q_ok: bool  # q (1 - exponent) > 1, the integrability exponent the bound needs

    @property
    def ok(self) -> bool:
        return self.violations.size == 0


def check_growth_bound(spec: UtilitySpec, samples, cone: SolvencyCone, tol: float = 1e-12) -> GrowthReport:
    """``U(x) <= C (1 + ℘(x)^g)`` on every sample, ``g = spec.growth_exponent``."""
    X = np.atleast_2d(np.asarray(samples, float))
    U = np.atleast_1d(eval_utility(spec, X, cone))
    P = np.maximum(purchase_values(cone, X), 0.0)
    g = spec.growth_exponent
    slack = spec.C * (1.0 + P**g) - U
    return GrowthReport(g, float(slack.min()), np.flatnonzero(slack < -tol), spec.q * (1.0 - g) > 1.0)


def ui_moment(spec: UtilitySpec, Z1_leaves, leaf_probs) -> float:
    """``E[(Z^1_T)^{1-q}]`` on a finite tree (finite whenever all Z^1_T > 0)."""
    Z = np.asarray(Z1_leaves, float)
    if np.any(Z <= 0):
        return float("inf")
    return float(np.dot(leaf_probs, Z ** (1.0 - spec.q)))
