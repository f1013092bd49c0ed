"""Consistent price systems on event trees and their certificates.

``find_cps`` solves one linear program over the deflated prices
``y = Z / S`` at every node.  Interiority is imposed through the l1 surrogate

    g·y >= eps |g|_1 |y|_1          for every generator g of K,

which is linear because ``y >= 0``.  By the triangle inequality it extends to
all of K, and since l1 norms dominate Euclidean ones it implies the Euclidean
eps-interiority of ``y``.  The objective maximises the smallest slack.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cone_geometry import SolvencyCone, eps_interior_dual, purchase_value
from .lp import LPError, linprog
from .market_models import EventTree
from .portfolio_dynamics import TreeStrategy

CONTIGUITY_FLOOR = 1e-8


class PriceSystemError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PriceSystem:
    tree: EventTree
    Z: np.ndarray  # (N, d)
    eps: float
    slack: float = 0.0

    @property
    def deflated(self) -> np.ndarray:
        return self.Z / self.tree.prices

    def martingale_error(self) -> float:
        err = 0.0
        for i in range(self.tree.size):
            c, p = self.tree.children(i)
            if c.size:
                err = max(err, float(np.abs(p @ self.Z[c] - self.Z[i]).max()))
        return err

    def interior_ok(self, cone: SolvencyCone, eps: float | None = None) -> bool:
        e = self.eps / np.sqrt(cone.d) if eps is None else eps
        return all(eps_interior_dual(cone, y, e) for y in self.deflated)

    def contiguity_ok(self, floor: float = CONTIGUITY_FLOOR) -> bool:
        return bool(self.Z[self.tree.leaves(), 0].min() >= floor)

    def q_weights(self) -> np.ndarray:
        """Leaf weights of ``Q = Z^1_T P``."""
        leaves = self.tree.leaves()
        return self.Z[leaves, 0] * self.tree.reach()[leaves]

    def verify(self, cone: SolvencyCone) -> None:
        if abs(self.Z[0, 0] - 1.0) > 1e-10:
            raise PriceSystemError("Z^1 at the root must be 1")
        if self.martingale_error() > 1e-10:
            raise PriceSystemError("Z is not a martingale")
        if not self.interior_ok(cone):
            raise PriceSystemError("Z/S leaves the eps-interior of the dual cone")

    def write_csv(self, path) -> None:
        lines = ["node_id," + ",".join(f"Z{j + 1}" for j in range(self.Z.shape[1]))]
        lines += [f"{i}," + ",".join(f"{v:.17g}" for v in row) for i, row in enumerate(self.Z)]
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True, eq=False)
class CPSInfeasible:
    """No eps-consistent system: the LP optimum of the min-slack is <= 0.

    ``certificate`` holds the LP multipliers (martingale rows, normalisation,
    cone rows) proving the optimum bound.
    """

    eps: float
    best_slack: float
    certificate: np.ndarray = field(repr=False)

    def __bool__(self) -> bool:
        return False


def find_cps(tree: EventTree, cone: SolvencyCone, eps: float):
    """An eps-uniformly consistent price system on ``tree`` or an infeasibility record."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not cone.proper:
        raise PriceSystemError("empty ε-interior: the dual cone has no interior when K is not proper")
    N, d = tree.size, tree.d
    G = cone.generators
    ng = G.shape[0]
    nv = N * d + 1  # y (node-major), then t
    S = tree.prices

    eq_rows, eq_rhs = [], []
    for i in range(N):
        c, p = tree.children(i)
        if c.size == 0:
            continue
        for k in range(d):
            row = np.zeros(nv)
            row[i * d + k] = S[i, k]
            for j, q in zip(c, p):
                row[j * d + k] -= q * S[j, k]
            eq_rows.append(row)
            eq_rhs.append(0.0)
    row = np.zeros(nv)
    row[0] = S[0, 0]
    eq_rows.append(row)
    eq_rhs.append(1.0)

    # t - g·y + eps |g|_1 Σ y <= 0  for every node and generator
    coef = -G + eps * np.abs(G).sum(axis=1, keepdims=True)  # (ng, d)
    A_ub = np.zeros((N * ng, nv))
    for i in range(N):
        A_ub[i * ng : (i + 1) * ng, i * d : (i + 1) * d] = coef
    A_ub[:, -1] = 1.0
    cost = np.zeros(nv)
    cost[-1] = -1.0
    res = linprog(cost, A_ub=A_ub, b_ub=np.zeros(N * ng), A_eq=np.array(eq_rows), b_eq=np.array(eq_rhs),
                  free=[nv - 1], max_iter=50_000)
    if res.status == "unbounded":
        raise LPError("price-system LP unbounded")
    if not res.ok:
        raise LPError(f"price-system LP failed: {res.status}")
    t = float(res.x[-1])
    if t <= 1e-12:
        return CPSInfeasible(eps, t, res.duals)
    y = res.x[:-1].reshape(N, d)
    Z = y * S
    Z = Z / Z[0, 0]
    return PriceSystem(tree, Z, eps, t)


# -- certificates ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SupermartingaleReport:
    values: np.ndarray  # Z·V̂ after each node's trade
    violations: list  # (node, excess)
    integrated_lhs: float
    integrated_rhs: float

    @property
    def ok(self) -> bool:
        return not self.violations and self.integrated_lhs <= self.integrated_rhs + 1e-10


def verify_supermartingale(Z: PriceSystem, x, strategy: TreeStrategy, tol: float = 1e-10) -> SupermartingaleReport:
    """Node-exact check that ``Z·V̂`` is a supermartingale along the tree.

    Also checks the integrated form
    ``E[Σ -(Z/S)·ΔB] <= Z_0·V̂_{0-} - E[Z_T·V̂_T]``.
    """
    tree = Z.tree
    x = np.asarray(x, float)
    H = strategy.holdings(x)
    ZV = np.einsum("ij,ij->i", Z.Z, H)
    start = float(Z.Z[0] @ (x / tree.prices[0]))
    violations = []
    scale = max(1.0, abs(start))
    if ZV[0] > start + tol * scale:
        violations.append((-1, ZV[0] - start))
    for i in range(tree.size):
        c, p = tree.children(i)
        if c.size and p @ ZV[c] > ZV[i] + tol * scale:
            violations.append((i, float(p @ ZV[c] - ZV[i])))
    reach = tree.reach()
    leaves = tree.leaves()
    spent = -np.einsum("ij,ij->i", Z.deflated, strategy.actions)
    lhs = float(reach @ spent)
    rhs = start - float(reach[leaves] @ ZV[leaves])
    return SupermartingaleReport(ZV, violations, lhs, rhs)


@dataclass(frozen=True, eq=False)
class VariationReport:
    expectations: np.ndarray  # E_Q[Var B_T] per strategy
    bound: float
    worst_slack: float

    @property
    def ok(self) -> bool:
        return self.worst_slack >= -1e-9


def expected_q_variation(Z: PriceSystem, strategy: TreeStrategy) -> float:
    leaves = Z.tree.leaves()
    return float(Z.q_weights() @ strategy.variation()[leaves])


def variation_bound_check(Z: PriceSystem, x, strategies, cone: SolvencyCone | None = None) -> VariationReport:
    """``E_Q[Var B_T] <= ℘(x)/eps`` for every strategy (l1 variation)."""
    strategies = list(strategies)
    if cone is None:
        if not strategies:
            raise ValueError("give the cone or at least one strategy")
        cone = strategies[0].cone
    bound = purchase_value(cone, np.asarray(x, float)) / Z.eps
    ev = np.array([expected_q_variation(Z, s) for s in strategies])
    return VariationReport(ev, bound, float((bound - ev).min()) if ev.size else float("inf"))


def markov_tail(Z: PriceSystem, strategy: TreeStrategy, c: float) -> float:
    """``Q(Var B_T > c)`` on the tree."""
    leaves = Z.tree.leaves()
    return float(Z.q_weights() @ (strategy.variation()[leaves] > c))
