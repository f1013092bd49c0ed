"""Strategies, wealth, admissibility, coarsening and the stopping-time repair.

Conventions: the initial endowment ``x`` is a monetary position at time 0,
so the physical holdings just before time 0 are ``x / S_0``.  A strategy
``B`` is a step path of cumulative monetary transfers with ``B_{0-} = 0``;
its jump at a node is a monetary trade charged at that node's prices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cone_geometry import (
    TOL,
    SolvencyCone,
    liquidation_value,
    solvent,
    transfer_rays,
)
from .market_models import EventTree
from .path_calculus import CADLAG, GridPath, coordinate_variation, piecewise_approx, running_modulus


class AdmissibilityError(ValueError):
    pass


class RepairError(RuntimeError):
    """Liquidation at the repair time would be insolvent; ``tau`` is the grid node."""

    def __init__(self, tau: int, value: float):
        super().__init__(f"negative liquidation value {value:.3g} at repair node {tau}")
        self.tau = tau
        self.value = value


def in_minus_cone(cone: SolvencyCone, D, tol: float = TOL) -> np.ndarray:
    """Row-wise test ``-D ∈ K``."""
    return solvent(cone, -np.atleast_2d(np.asarray(D, float)), tol)


@dataclass(frozen=True, eq=False)
class Strategy:
    B: GridPath
    cone: SolvencyCone

    def __post_init__(self):
        if self.B.kind != CADLAG:
            raise ValueError("strategies are step paths")
        if self.B.d != self.cone.d:
            raise ValueError("strategy and cone dimensions differ")
        if np.any(self.B.pre0 != 0):
            raise ValueError("strategies start from B_{0-} = 0")
        if not in_minus_cone(self.cone, self.B.increments()).all():
            raise ValueError("strategy increments must lie in -K")

    @classmethod
    def from_jumps(cls, cone: SolvencyCone, jumps, horizon: float = 1.0) -> "Strategy":
        """Strategy whose jump at node k is ``jumps[k]`` (row 0 is the jump at time 0)."""
        jumps = np.asarray(jumps, float)
        return cls(GridPath(horizon, np.cumsum(jumps, axis=0), CADLAG, np.zeros(jumps.shape[1])), cone)

    @classmethod
    def zero(cls, cone: SolvencyCone, m: int, horizon: float = 1.0) -> "Strategy":
        return cls.from_jumps(cone, np.zeros((m + 1, cone.d)), horizon)

    @property
    def jumps(self) -> np.ndarray:
        return self.B.increments()

    def write_csv(self, path, cone_file: str = "cone.txt") -> None:
        self.B.write_csv(path, header_lines=[f"# cone: {cone_file}", "# pre0: " + " ".join("0" for _ in range(self.B.d))])


@dataclass(frozen=True, eq=False)
class WealthPaths:
    V_hat: GridPath
    V: GridPath
    x: np.ndarray


def _check_prices(S: GridPath, B: GridPath) -> None:
    if S.m != B.m or not np.isclose(S.horizon, B.horizon):
        raise ValueError("strategy and price paths live on different grids")
    if S.d != B.d:
        raise ValueError("dimension mismatch")
    if np.any(S.values <= 0):
        raise ValueError("prices must be positive")


def _hat_values(x: np.ndarray, jumps: np.ndarray, S: np.ndarray) -> np.ndarray:
    return x / S[0] + np.cumsum(jumps / S, axis=0)


def wealth(x, B: Strategy, S: GridPath) -> WealthPaths:
    """Physical and monetary wealth of ``x`` traded by ``B`` along ``S``."""
    x = np.asarray(x, float)
    _check_prices(S, B.B)
    V_hat = _hat_values(x, B.jumps, S.values)
    return WealthPaths(
        GridPath(S.horizon, V_hat, CADLAG, x / S.values[0]),
        GridPath(S.horizon, V_hat * S.values, CADLAG, x),
        x,
    )


@dataclass(frozen=True)
class Admissibility:
    ok: bool
    violation: int | None  # grid node, -1 for the endowment itself
    time: float | None

    def __bool__(self) -> bool:
        return self.ok


def is_admissible(x, B: Strategy, S: GridPath, tol: float = TOL) -> Admissibility:
    x = np.asarray(x, float)
    if not solvent(B.cone, x[None], tol)[0]:
        return Admissibility(False, -1, 0.0)
    W = wealth(x, B, S)
    bad = np.flatnonzero(~solvent(B.cone, W.V.values, tol))
    if bad.size == 0:
        return Admissibility(True, None, None)
    k = int(bad[0])
    return Admissibility(False, k, float(S.times[k]))


def liquidation_jump(cone: SolvencyCone, x) -> np.ndarray:
    x = np.asarray(x, float)
    jump = -x.copy()
    jump[0] += liquidation_value(cone, x)
    return jump


def liquidation_strategy(x, cone: SolvencyCone, m: int = 1, horizon: float = 1.0) -> Strategy:
    """Jump ``ℓ(x) e_1 - x`` at time 0, constant afterwards."""
    x = np.asarray(x, float)
    if not solvent(cone, x[None])[0]:
        raise AdmissibilityError("the endowment is not solvent")
    jumps = np.zeros((m + 1, cone.d))
    jumps[0] = liquidation_jump(cone, x)
    return Strategy.from_jumps(cone, jumps, horizon)


# -- coarsening certificate --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ApproximationCertificate:
    xi: GridPath
    analytic_bound: np.ndarray  # per-coordinate sup bound from moduli and norms
    mode: str

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.xi.values).max())


def discretize_strategy(x, B: Strategy, S: GridPath, m: int, mode: str = "bound"):
    """Coarse strategy ``B^m`` on m cells and a certificate ``ξ^m``.

    ``ξ^m`` satisfies ``S_t ⊙ (V̂^{B^m}_t + ξ^m_t) ∈ K`` on the fine grid.  On a
    coarse cell ``[t_k, t_{k+1})`` it is
    ``|S_{t_k}/S_t - 1| |V̂^{B^m}_{t_k}| + (S_{t_k}/S_t) ξ̃_{t_k}``, where ``ξ̃``
    dominates ``V̂^B_{t_k} - V̂^{B^m}_{t_k}``: ``mode="bound"`` uses
    ``w_{t_k}(1/S, T/m - T/M) Var_{t_k} B`` (M fine cells) and ``mode="exact"`` the positive part of
    the difference itself.
    """
    x = np.asarray(x, float)
    if mode not in ("bound", "exact"):
        raise ValueError("mode must be 'bound' or 'exact'")
    adm = is_admissible(x, B, S)
    if not adm:
        raise AdmissibilityError(f"input strategy is inadmissible at node {adm.violation}")
    Bm_path = piecewise_approx(B.B, m)
    r = B.B.m // m
    fine = Bm_path.refine(r)
    Bm_fine = Strategy(fine, B.cone)
    coarse = Strategy(Bm_path, B.cone)

    Sv = S.values
    V_hat = wealth(x, B, S).V_hat.values
    V_hat_m = wealth(x, Bm_fine, S).V_hat.values
    nodes = np.arange(0, B.B.m + 1, r)
    if mode == "bound":
        # a fine trade moves to the coarse node at most r - 1 fine cells later
        inv_S = GridPath(S.horizon, 1.0 / Sv, S.kind)
        w = running_modulus(inv_S, (r - 1) * S.step)
        w = w[:, None] if w.ndim == 1 else w
        var = np.cumsum(np.abs(B.jumps), axis=0)
        tilde = w[nodes] * var[nodes]
    else:
        tilde = np.maximum(V_hat[nodes] - V_hat_m[nodes], 0.0)
    cell = np.minimum(np.arange(B.B.m + 1) // r, m)
    anchor = nodes[cell]
    ratio = Sv[anchor] / Sv
    xi = np.abs(ratio - 1.0) * np.abs(V_hat_m[anchor]) + ratio * tilde[cell]

    inv_S = GridPath(S.horizon, 1.0 / Sv, S.kind)
    wS = np.atleast_1d(running_modulus(S, S.horizon / m)[-1])
    w_inv = np.atleast_1d(running_modulus(inv_S, S.horizon / m)[-1])
    norm_inv = np.abs(1.0 / Sv).max(axis=0)
    norm_Vm = np.abs(V_hat_m).max(axis=0)
    bound = wS * norm_inv * norm_Vm + (1.0 + wS * norm_inv) * w_inv * coordinate_variation(B.B)
    cert = ApproximationCertificate(GridPath(S.horizon, xi, CADLAG), bound, mode)
    return coarse, cert


def check_certificate(x, coarse: Strategy, cert: ApproximationCertificate, S: GridPath, tol: float = TOL) -> bool:
    """Whether ``S_t ⊙ (V̂^{B^m}_t + ξ_t) ∈ K`` at every fine node."""
    r = S.m // coarse.B.m
    fine = Strategy(coarse.B.refine(r), coarse.cone)
    V_hat_m = wealth(x, fine, S).V_hat.values
    return bool(np.all(cert.xi.values >= 0) and solvent(coarse.cone, S.values * (V_hat_m + cert.xi.values), tol).all())


# -- repair ----------------------------------------------------------------------------


def first_breach(x, C: Strategy, S: GridPath, margin: float) -> int | None:
    """First node where ``S ⊙ (V̂ - margin·1) ∉ K``, or None."""
    V_hat = wealth(x, C, S).V_hat.values
    bad = np.flatnonzero(~solvent(C.cone, S.values * (V_hat - margin)))
    return int(bad[0]) if bad.size else None


def repair_strategy(x, C: Strategy, S: GridPath, cone: SolvencyCone | None = None, margin: float | None = None) -> Strategy:
    """Follow ``C`` until the margin is breached, then liquidate and freeze."""
    x = np.asarray(x, float)
    cone = C.cone if cone is None else cone
    if margin is None:
        margin = liquidation_value(cone, x) / 10.0
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    tau = first_breach(x, C, S, margin)
    if tau is None:
        return C
    jumps = C.jumps.copy()
    prev = x / S.values[0] if tau == 0 else x / S.values[0] + np.cumsum(jumps[:tau] / S.values[:tau], axis=0)[-1]
    V_pre = S.values[tau] * prev
    ell = liquidation_value(cone, V_pre)
    if ell < -TOL * max(1.0, np.abs(V_pre).max()):
        raise RepairError(tau, ell)
    jumps[tau] = liquidation_jump(cone, V_pre)
    jumps[tau + 1 :] = 0.0
    return Strategy.from_jumps(cone, jumps, S.horizon)


def random_k_decreasing(cone: SolvencyCone, m: int, rng: np.random.Generator, scale: float = 0.1,
                        trade_prob: float = 0.3, horizon: float = 1.0) -> Strategy:
    """Random K-decreasing step path: sparse nonnegative combinations of -generators."""
    rays = transfer_rays(cone.costs) if cone.costs is not None else cone.generators
    jumps = np.zeros((m + 1, cone.d))
    active = rng.random(m + 1) < trade_prob
    coef = rng.exponential(scale, size=(m + 1, rays.shape[0])) * (rng.random((m + 1, rays.shape[0])) < 0.5)
    jumps[active] = -(coef[active] @ rays)
    return Strategy.from_jumps(cone, jumps, horizon)


# -- strategies on event trees -----------------------------------------------------------


def tree_holdings(tree: EventTree, x, actions) -> np.ndarray:
    """Physical holdings after each node's trade; ``actions`` are monetary (N, d)."""
    x = np.asarray(x, float)
    actions = np.asarray(actions, float)
    H = np.zeros((tree.size, tree.d))
    parent = tree.parent
    for i in tree.topological():
        before = x / tree.prices[0] if parent[i] < 0 else H[parent[i]]
        H[i] = before + actions[i] / tree.prices[i]
    return H


@dataclass(frozen=True, eq=False)
class TreeStrategy:
    tree: EventTree
    actions: np.ndarray  # (N, d) monetary trades, zero at chance nodes
    cone: SolvencyCone

    def __post_init__(self):
        a = np.asarray(self.actions, float)
        if a.shape != (self.tree.size, self.tree.d):
            raise ValueError("one action per node is required")
        if np.any(a[~self.tree.tradable] != 0):
            raise ValueError("no trading at chance nodes")
        if not in_minus_cone(self.cone, a).all():
            raise ValueError("tree actions must lie in -K")
        object.__setattr__(self, "actions", a)

    def holdings(self, x) -> np.ndarray:
        return tree_holdings(self.tree, x, self.actions)

    def positions(self, x) -> np.ndarray:
        return self.holdings(x) * self.tree.prices

    def admissible(self, x, tol: float = TOL) -> bool:
        return bool(solvent(self.cone, self.positions(x), tol).all())

    def variation(self) -> np.ndarray:
        """Running l1 variation at each node (sum along the path to the node)."""
        size = np.abs(self.actions).sum(axis=1)
        var = np.zeros(self.tree.size)
        parent = self.tree.parent
        for i in self.tree.topological():
            var[i] = size[i] + (var[parent[i]] if parent[i] >= 0 else 0.0)
        return var


def _viable(cone, tree, i, P_post, h_post, tol=TOL) -> np.ndarray:
    """Rows of candidate post-trade states that are solvent now and at every child."""
    ok = solvent(cone, P_post, tol)
    ch, _ = tree.children(i)
    for c in ch:
        ok &= solvent(cone, h_post * tree.prices[c], tol)
    return ok


def random_tree_strategy(tree: EventTree, x, cone: SolvencyCone, rng: np.random.Generator,
                         scale: float = 0.5, trade_prob: float = 0.7) -> TreeStrategy:
    """Random admissible strategy: shrink random -K trades until viable.

    A trade is viable when the position stays solvent at the node and at all
    of its children.  Falls back to no trade and then to full liquidation,
    which is always viable from a solvent position.
    """
    x = np.asarray(x, float)
    rays = transfer_rays(cone.costs) if cone.costs is not None else cone.generators
    base = liquidation_value(cone, x)
    actions = np.zeros((tree.size, tree.d))
    H = np.zeros((tree.size, tree.d))
    parent = tree.parent
    for i in tree.topological():
        h = x / tree.prices[0] if parent[i] < 0 else H[parent[i]]
        S = tree.prices[i]
        if tree.tradable[i]:
            cands = []
            if rng.random() < trade_prob:
                coef = rng.exponential(scale * base, size=rays.shape[0]) * (rng.random(rays.shape[0]) < 0.5)
                a = -(coef @ rays)
                cands += [a * 0.5**k for k in range(8)]
            cands.append(np.zeros(tree.d))
            C = np.array(cands)
            ok = _viable(cone, tree, i, S * h + C, h + C / S)
            if ok.any():
                a = C[int(np.argmax(ok))]
            else:
                a = liquidation_jump(cone, S * h)
            actions[i] = a
        H[i] = h + actions[i] / S
    return TreeStrategy(tree, actions, cone)


def churn_tree_strategy(tree: EventTree, x, cone: SolvencyCone, candidates) -> TreeStrategy:
    """Greedy adversary: at each node take the viable candidate with the largest
    l1 size (round-trip trades inflate variation)."""
    x = np.asarray(x, float)
    C = np.asarray(candidates, float)
    size = np.abs(C).sum(axis=1)
    order = np.argsort(-size, kind="stable")
    C = C[order]
    actions = np.zeros((tree.size, tree.d))
    H = np.zeros((tree.size, tree.d))
    parent = tree.parent
    for i in tree.topological():
        h = x / tree.prices[0] if parent[i] < 0 else H[parent[i]]
        S = tree.prices[i]
        if tree.tradable[i]:
            ok = _viable(cone, tree, i, S * h + C, h + C / S)
            actions[i] = C[int(np.argmax(ok))] if ok.any() else liquidation_jump(cone, S * h)
        H[i] = h + actions[i] / S
    return TreeStrategy(tree, actions, cone)

