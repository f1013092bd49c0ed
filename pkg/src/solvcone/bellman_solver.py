"""Bellman values on event trees (enumeration, lattice DP) and by Monte Carlo.

All three methods maximise ``E[U(V_T)]`` over strategies whose trades come
from a finite :class:`ActionGrid`.  Positions are monetary; holdings are
physical units.  A trade is admissible at a node when the post-trade
position is solvent there; the tree methods additionally require solvency
at every child (the position is carried there before the next trade).
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .cone_geometry import (
    TOL,
    SolvencyCone,
    liquidation_value,
    liquidation_values,
    purchase_value,
    solvent,
    transfer_rays,
)
from .market_models import (
    BudgetError,
    EventTree,
    ModelSpec,
    build_tree,
    randomized_tree,
    revealing_tree,
    sample_batch,
)
from .portfolio_dynamics import RepairError, TreeStrategy, in_minus_cone, liquidation_jump
from .utility import UtilitySpec

ENUM_BUDGET = 10_000_000
LATTICE_BUDGET = 50_000_000


# -- action grids ---------------------------------------------------------------


def _prune(A: np.ndarray) -> np.ndarray:
    """Drop duplicates and actions dominated componentwise by another action."""
    A = np.unique(np.round(A, 12), axis=0)
    keep = np.ones(len(A), dtype=bool)
    for start in range(0, len(A), 512):
        block = A[start : start + 512]
        ge = (A[None, :, :] >= block[:, None, :] - 1e-12).all(axis=2)
        gt = (A[None, :, :] > block[:, None, :] + 1e-12).any(axis=2)
        keep[start : start + 512] = ~(ge & gt).any(axis=1)
    A = A[keep]
    return A[np.lexsort(A.T[::-1])]


@dataclass(frozen=True, eq=False)
class ActionGrid:
    """Finite trade sets: ``actions`` everywhere, ``root_actions`` at time-0 nodes.

    Every trade lies in -K.  Pruning removes only trades dominated
    componentwise by another trade, which cannot change any value because
    the continuation value is componentwise monotone.
    """

    cone: SolvencyCone
    actions: np.ndarray
    root_actions: np.ndarray
    delta: float = 0.0
    kappa: int = 0

    def __post_init__(self):
        for name in ("actions", "root_actions"):
            A = _prune(np.atleast_2d(np.asarray(getattr(self, name), float)))
            if not in_minus_cone(self.cone, A).all():
                raise ValueError("every action must lie in -K")
            if not (np.abs(A).max(axis=1) == 0).any():
                raise ValueError("the zero action is required")
            object.__setattr__(self, name, A)

    @classmethod
    def build(cls, cone: SolvencyCone, x=None, delta: float | None = None, kappa: int = 40,
              max_rays: int | None = None, liquidation: bool = True) -> "ActionGrid":
        """``{-δ Σ k_g g}`` over transfer rays g, k_g ∈ {0..κ}, at most ``max_rays`` nonzero."""
        if cone.costs is None:
            raise ValueError("action grids need the cone's cost matrix")
        rays = transfer_rays(cone.costs)
        if delta is None:
            if x is None:
                raise ValueError("give either delta or the endowment x")
            delta = liquidation_value(cone, np.asarray(x, float)) / 20.0
        if delta <= 0 or kappa < 0:
            raise ValueError("need delta > 0 and kappa >= 0")
        if max_rays is None:
            max_rays = 2 if cone.d == 2 else 1
        acts = [np.zeros(cone.d)]
        ks = np.arange(1, kappa + 1)
        for r in range(1, max_rays + 1):
            for combo in itertools.combinations(range(len(rays)), r):
                for mult in itertools.product(ks, repeat=r):
                    acts.append(-delta * (np.array(mult, float) @ rays[list(combo)]))
        A = np.array(acts)
        root = A
        if liquidation and x is not None:
            root = np.vstack([A, liquidation_jump(cone, x)])
        return cls(cone, A, root, float(delta), int(kappa))

    def actions_at(self, tree: EventTree, i: int) -> np.ndarray:
        if not tree.tradable[i]:
            return np.zeros((1, tree.d))
        return self.root_actions if tree.step[i] == 0 else self.actions

    def scaled(self, c: float) -> "ActionGrid":
        if c <= 0:
            raise ValueError("scale must be positive")
        return ActionGrid(self.cone, c * self.actions, c * self.root_actions, c * self.delta, self.kappa)

    def mix(self, other: "ActionGrid", alpha: float) -> "ActionGrid":
        """Minkowski combination ``α A + (1-α) A'`` (node by node)."""

        def comb(A, B):
            return (alpha * A[:, None, :] + (1 - alpha) * B[None, :, :]).reshape(-1, A.shape[1])

        return ActionGrid(self.cone, comb(self.actions, other.actions), comb(self.root_actions, other.root_actions))

    def with_root_shift(self, shift) -> "ActionGrid":
        """Add ``root + shift`` trades (``shift`` must be in -K) to the time-0 set."""
        shift = np.asarray(shift, float)
        return ActionGrid(self.cone, self.actions, np.vstack([self.root_actions, self.root_actions + shift]),
                          self.delta, self.kappa)


def surplus_shift(cone: SolvencyCone, x, y) -> np.ndarray:
    """Trade converting the surplus ``y - x`` (in K) into cash."""
    return liquidation_jump(cone, np.asarray(y, float) - np.asarray(x, float))


# -- reports ---------------------------------------------------------------------------


@dataclass(eq=False)
class ValueReport:
    value: float
    method: str
    stderr: float = 0.0
    gap: float = float("nan")
    bound: float = float("nan")  # dp: interpolation error bound
    bracket: tuple = (float("nan"), float("nan"))
    root_action: np.ndarray | None = None
    strategy: TreeStrategy | None = None
    bound_valid: bool = True
    info: dict = field(default_factory=dict)


def _require_interior(cone: SolvencyCone, x: np.ndarray) -> float:
    ell = liquidation_value(cone, x)
    if ell <= 0:
        raise ValueError("the endowment must lie in the interior of K (ℓ(x) > 0)")
    return ell


# -- exact enumeration ----------------------------------------------------------------------


def enumeration_work(tree: EventTree, grid: ActionGrid) -> int:
    """Number of (state, action) evaluations the enumeration performs."""
    states = np.zeros(tree.size)
    states[0] = 1.0
    work = 0.0
    for i in tree.topological():
        c, _ = tree.children(i)
        a = 1 if (c.size == 0) else len(grid.actions_at(tree, i))
        work += states[i] * a
        states[c] += states[i] * a
    return int(work)


class _Enumerator:
    def __init__(self, tree: EventTree, grid: ActionGrid, U: UtilitySpec):
        self.tree, self.grid, self.U, self.cone = tree, grid, U, grid.cone

    def values(self, i: int, H: np.ndarray):
        """Best value from node i for each pre-trade holding row of H, and argmax."""
        tree = self.tree
        S = tree.prices[i]
        ch, pr = tree.children(i)
        if ch.size == 0:
            # at a leaf no trade raises ℓ, so the zero trade is optimal
            P = H * S
            v = np.where(solvent(self.cone, P), self.U.of_cash(liquidation_values(self.cone, P)), -np.inf)
            return v, np.zeros(len(H), dtype=int)
        acts = self.grid.actions_at(tree, i)
        M, A = len(H), len(acts)
        Hp = (H[:, None, :] + acts[None, :, :] / S).reshape(M * A, -1)
        ok = solvent(self.cone, Hp * S)
        for c in ch:
            ok &= solvent(self.cone, Hp * tree.prices[c])
        acc = np.full(M * A, -np.inf)
        if ok.any():
            sub = Hp[ok]
            tot = np.zeros(len(sub))
            for c, p in zip(ch, pr):
                tot += p * self.values(int(c), sub)[0]
            acc[ok] = tot
        acc = acc.reshape(M, A)
        best = np.argmax(acc, axis=1)
        return acc[np.arange(M), best], best


def enumerate_value(tree: EventTree, x, grid: ActionGrid, U: UtilitySpec, want_strategy: bool = False,
                    budget: int = ENUM_BUDGET) -> ValueReport:
    """Exact optimum over all adapted assignments of grid trades."""
    if tree.recombining:
        raise ValueError("enumeration needs a non-recombining tree")
    x = np.asarray(x, float)
    _require_interior(grid.cone, x)
    work = enumeration_work(tree, grid)
    if work > budget:
        raise BudgetError(f"enumeration needs {work:.3g} evaluations (budget {budget:.3g}); "
                          "reduce kappa, the tree depth, or use dp_value")
    en = _Enumerator(tree, grid, U)
    h0 = (x / tree.prices[0])[None]
    v, best = en.values(0, h0)
    value = float(v[0])
    if not np.isfinite(value):
        raise AssertionError("no admissible strategy although x is interior")
    root_action = grid.actions_at(tree, 0)[best[0]] if not tree.is_leaf(0) else np.zeros(tree.d)
    strategy = None
    if want_strategy:
        actions = np.zeros((tree.size, tree.d))
        H = np.zeros((tree.size, tree.d))
        parent = tree.parent
        for i in tree.topological():
            h = x / tree.prices[0] if parent[i] < 0 else H[parent[i]]
            if not tree.is_leaf(i):
                _, b = en.values(int(i), h[None])
                actions[i] = grid.actions_at(tree, i)[b[0]]
            H[i] = h + actions[i] / tree.prices[i]
        strategy = TreeStrategy(tree, actions, grid.cone)
    return ValueReport(value, "enumerate", root_action=root_action, strategy=strategy, info={"work": work})


# -- lattice dynamic programming -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Lattice:
    lo: np.ndarray
    step: np.ndarray
    shape: tuple

    @property
    def points(self) -> np.ndarray:
        axes = [self.lo[i] + self.step[i] * np.arange(self.shape[i]) for i in range(len(self.shape))]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(self.shape))

    @property
    def hi(self) -> np.ndarray:
        return self.lo + self.step * (np.array(self.shape) - 1)

    def locate(self, q: np.ndarray):
        """Cell index, fractional offsets and an in-box mask for query rows."""
        f = (q - self.lo) / self.step
        n = np.array(self.shape)
        inside = ((f >= -1e-9) & (f <= n - 1 + 1e-9)).all(axis=1)
        f = np.clip(f, 0.0, n - 1)
        i0 = np.minimum(np.floor(f).astype(int), n - 2)
        return i0, f - i0, inside, f

    def flat(self, idx: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple(idx.T), self.shape)


def _aligned_axis(lo: float, hi: float, anchor: float, points: int):
    lo, hi = min(lo, anchor), max(hi, anchor)
    h = (hi - lo) / max(points - 1, 1) if hi > lo else 1.0
    below = math.ceil((anchor - lo) / h - 1e-9)
    above = math.ceil((hi - anchor) / h - 1e-9)
    return anchor - below * h, h, below + above + 1


def reachable_box(tree: EventTree, x, grid: ActionGrid):
    """Interval hull of pre-trade positions at all non-root nodes."""
    x = np.asarray(x, float)
    lo = np.full((tree.size, tree.d), np.inf)
    hi = np.full((tree.size, tree.d), -np.inf)
    lo[0] = hi[0] = x
    for i in tree.topological():
        acts = grid.actions_at(tree, i)
        plo, phi = lo[i] + acts.min(axis=0), hi[i] + acts.max(axis=0)
        for c in tree.children(i)[0]:
            r = tree.prices[c] / tree.prices[i]
            lo[c] = np.minimum(lo[c], np.minimum(plo * r, phi * r))
            hi[c] = np.maximum(hi[c], np.maximum(plo * r, phi * r))
    rest = np.arange(1, tree.size)
    return lo[rest].min(axis=0), hi[rest].max(axis=0)


def make_lattice(tree: EventTree, x, grid: ActionGrid, points: int = 41, radius: float | None = None) -> Lattice:
    """Shared lattice: the reachable box, or ``x ± radius·℘(x)`` when ``radius`` is set.

    The cash axis is aligned to contain ``ℓ(x)``; the other axes contain 0.
    """
    x = np.asarray(x, float)
    cone = grid.cone
    if radius is None:
        blo, bhi = reachable_box(tree, x, grid)
    else:
        R = radius * purchase_value(cone, x)
        blo, bhi = x - R, x + R
    anchors = np.zeros(tree.d)
    anchors[0] = liquidation_value(cone, x)
    lo, step, shape = [], [], []
    for k in range(tree.d):
        a, h, n = _aligned_axis(blo[k], bhi[k], anchors[k], points)
        lo.append(a)
        step.append(h)
        shape.append(n)
    return Lattice(np.array(lo), np.array(step), tuple(shape))


class _Table:
    """Lattice values at one node: estimate, lower and upper bounds."""

    def __init__(self, lat: Lattice, est, lower, upper):
        self.lat, self.est, self.lower, self.upper = lat, est, lower, upper

    def query(self, q: np.ndarray):
        lat = self.lat
        i0, frac, inside, f = lat.locate(q)
        d = q.shape[1]
        est = np.zeros(len(q))
        for corner in itertools.product((0, 1), repeat=d):
            c = np.array(corner)
            w = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1)
            est += w * self.est[lat.flat(i0 + c)]
        n = np.array(lat.shape)
        lo_idx = np.clip(np.floor(f + 1e-9).astype(int), 0, n - 1)
        hi_idx = np.clip(np.ceil(f - 1e-9).astype(int), 0, n - 1)
        return est, self.lower[lat.flat(lo_idx)], self.upper[lat.flat(hi_idx)], inside


def dp_value(tree: EventTree, x, grid: ActionGrid, U: UtilitySpec, points: int = 41,
             radius: float | None = None, budget: int = LATTICE_BUDGET) -> ValueReport:
    """Backward induction over (node, position) with multilinear interpolation.

    Alongside the estimate the recursion carries lower and upper bounds on
    the exact grid value: the exact value is componentwise nondecreasing in
    the position, so it is bracketed by the bounds at the lower and upper
    corners of the query's cell.  The reported ``bound`` is rigorous when the
    lattice box contains every reachable position (the default box).
    """
    x = np.asarray(x, float)
    cone = grid.cone
    _require_interior(cone, x)
    if tree.is_leaf(0):
        v = float(U.of_cash(liquidation_value(cone, x)))
        return ValueReport(v, "dp", bound=0.0, bracket=(v, v), root_action=np.zeros(tree.d))
    lat = make_lattice(tree, x, grid, points, radius)
    L = int(np.prod(lat.shape))
    A = max(len(grid.actions), len(grid.root_actions))
    if L * A > budget:
        raise BudgetError(f"lattice of {L} points x {A} actions exceeds the budget {budget:.3g}; "
                          "lower 'points' or kappa")
    P = lat.points
    tables: dict[int, _Table] = {}

    def evaluate(i: int, states: np.ndarray):
        """(estimate, lower, upper) per (state, action) for pre-trade states at node i."""
        S = tree.prices[i]
        acts = grid.actions_at(tree, i)
        M, nA = len(states), len(acts)
        post = (states[:, None, :] + acts[None, :, :]).reshape(M * nA, -1)
        ok = solvent(cone, post)
        est = np.zeros(M * nA)
        low = np.zeros(M * nA)
        up = np.zeros(M * nA)
        ch, pr = tree.children(i)
        for c, p in zip(ch, pr):
            q = post * (tree.prices[c] / S)
            ok &= solvent(cone, q)
            if tree.is_leaf(c):
                u = U.of_cash(liquidation_values(cone, q))
                e, lo_, up_ = u, u, u
            else:
                e, lo_, up_, inside = tables[int(c)].query(q)
                ok &= inside
            est += p * e
            low += p * lo_
            up += p * up_
        shape = (M, nA)
        est = np.where(ok, est, -np.inf).reshape(shape)
        low = np.where(ok, low, -np.inf).reshape(shape)
        up = np.where(ok, up, -np.inf).reshape(shape)
        return est, low, up

    order = tree.topological()[::-1]
    for i in order:
        i = int(i)
        if i == 0 or tree.is_leaf(i):
            continue
        est, low, up = evaluate(i, P)
        e = est.max(axis=1)
        viable = np.isfinite(e)
        # non-viable points: estimate extended by 0 (the minimum of U), bounds stay -inf
        tables[i] = _Table(lat, np.where(viable, e, 0.0), low.max(axis=1), up.max(axis=1))

    est, low, up = evaluate(0, x[None])
    b = int(np.argmax(est[0]))
    value = float(est[0, b])
    if not np.isfinite(value):
        raise AssertionError("no admissible trade at the root")
    lower, upper = float(low[0].max()), float(up[0].max())
    bound = max(value - lower, upper - value)
    return ValueReport(value, "dp", bound=bound, bracket=(lower, upper),
                       root_action=grid.actions_at(tree, 0)[b], bound_valid=radius is None,
                       info={"lattice": lat.shape, "actions": A})


# -- Monte Carlo -----------------------------------------------------------------------------------


class PolicyError(ValueError):
    pass


Policy = Callable[[int, float, np.ndarray, np.ndarray], np.ndarray]


class ZeroPolicy:
    name = "zero"

    def __call__(self, k, t, S, H):
        return np.zeros_like(H)


class LiquidateNow:
    name = "liquidate-now"

    def __init__(self, cone: SolvencyCone):
        self.cone = cone

    def __call__(self, k, t, S, H):
        if k > 0:
            return np.zeros_like(H)
        P = S * H
        a = -P
        a[:, 0] += liquidation_values(self.cone, P)
        return a


class BuyAndHold:
    name = "buy-and-hold"

    def __init__(self, trade):
        self.trade = np.asarray(trade, float)

    def __call__(self, k, t, S, H):
        return np.broadcast_to(self.trade, H.shape).copy() if k == 0 else np.zeros_like(H)


class TreePolicy:
    """Replays a tree strategy: lookup by (step, rounded prices, rounded holdings)."""

    name = "tree"

    def __init__(self, strategy: TreeStrategy, x, digits: int = 9):
        tree = strategy.tree
        self.digits = digits
        H = strategy.holdings(x)
        parent = tree.parent
        self.table = {}
        for i in tree.topological():
            before = np.asarray(x, float) / tree.prices[0] if parent[i] < 0 else H[parent[i]]
            self.table[self._key(tree.step[i], tree.prices[i], before)] = strategy.actions[i]

    def _key(self, k, S, h):
        return (int(k),) + tuple(np.round(S[1:], self.digits)) + tuple(np.round(h, self.digits))

    def __call__(self, k, t, S, H):
        out = np.zeros_like(H)
        for r in range(len(H)):
            key = self._key(k, S[r], H[r])
            if key not in self.table:
                raise PolicyError(f"state {key} is not covered by the tree strategy")
            out[r] = self.table[key]
        return out


def mc_value(spec: ModelSpec, x, policy: Policy, cone: SolvencyCone, U: UtilitySpec, N: int, seed: int,
             m: int | None = None, margin: float | None = None) -> ValueReport:
    """Sample mean of ``U(V_T)`` for a feedback policy, with automatic repair."""
    x = np.asarray(x, float)
    m = spec.n if m is None else m
    if margin is None:
        margin = liquidation_value(cone, x) / 10.0
    S, _ = sample_batch(spec, m, N, seed)
    H = np.broadcast_to(x / S[0, 0], (N, spec.d)).copy()
    alive = np.ones(N, dtype=bool)
    repaired = 0
    times = np.linspace(0.0, spec.T, m + 1)
    for k in range(m + 1):
        Sk = S[:, k, :]
        a = np.asarray(policy(k, times[k], Sk, H), float)
        a[~alive] = 0.0
        if not in_minus_cone(cone, a).all():
            raise PolicyError(f"policy produced trades outside -K at step {k}")
        Hp = H + a / Sk
        breach = alive & ~solvent(cone, Sk * (Hp - margin))
        if breach.any():
            pre = Sk[breach] * H[breach]
            ell = liquidation_values(cone, pre)
            if np.any(ell < -TOL * np.maximum(1.0, np.abs(pre).max(axis=1))):
                raise RepairError(k, float(ell.min()))
            cash = np.zeros((breach.sum(), spec.d))
            cash[:, 0] = np.maximum(ell, 0.0)
            Hp[breach] = cash
            alive &= ~breach
            repaired += int(breach.sum())
        H = Hp
    util = U.of_cash(liquidation_values(cone, S[:, -1, :] * H))
    stderr = float(util.std(ddof=1) / math.sqrt(N)) if N > 1 else 0.0
    return ValueReport(float(util.mean()), "mc", stderr=stderr,
                       info={"policy": getattr(policy, "name", "custom"), "repaired": repaired, "m": m})


# -- experiments ----------------------------------------------------------------------------------


@dataclass(eq=False)
class ConvergenceReport:
    ns: list
    values: list
    increments: list
    monotone: bool
    mc_lower: ValueReport | None
    cps_certified: bool
    note: str = "Cauchy evidence"

    def summary(self) -> str:
        inc = ", ".join(f"{v:.6g}" for v in self.increments) or "none"
        trend = "decreasing" if self.monotone else "not monotone"
        flag = "" if self.cps_certified else " [no price-system certificate: cone not proper]"
        lo = f"; MC lower bracket {self.mc_lower.value:.6g} ± {self.mc_lower.stderr:.2g}" if self.mc_lower else ""
        return f"{self.note}: increments {inc} ({trend}){lo}{flag}"


def _dp_for_n(args):
    spec, n, x, grid, U, points, radius = args
    tree = build_tree(spec.with_(kind="scaled_walk", n=n), n, recombine=True)
    return dp_value(tree, x, grid, U, points=points, radius=radius).value


def convergence_study(target: ModelSpec, ns, x, cone: SolvencyCone, U: UtilitySpec, grid: ActionGrid | None = None,
                      points: int = 41, radius: float | None = 2.0, mc_paths: int = 0, mc_steps: int = 64,
                      seed: int = 0, pool=None) -> ConvergenceReport:
    """dp values on scaled-walk trees calibrated to ``target`` for each n."""
    x = np.asarray(x, float)
    grid = ActionGrid.build(cone, x) if grid is None else grid
    jobs = [(target, int(n), x, grid, U, points, radius) for n in ns]
    values = list(pool.map(_dp_for_n, jobs)) if pool is not None else [_dp_for_n(j) for j in jobs]
    inc = [abs(b - a) for a, b in zip(values, values[1:])]
    monotone = all(b <= a for a, b in zip(inc, inc[1:]))
    mc = None
    if mc_paths > 0:
        gbm = target.with_(kind="gbm")
        policies = [ZeroPolicy(), LiquidateNow(cone)]
        ell = liquidation_value(cone, x)
        for g in transfer_rays(cone.costs):
            policies.append(BuyAndHold(-0.25 * ell * g))
        reports = [mc_value(gbm, x, p, cone, U, mc_paths, seed, m=mc_steps) for p in policies]
        mc = max(reports, key=lambda r: r.value)
    return ConvergenceReport([int(n) for n in ns], values, inc, monotone, mc, bool(cone.proper))


@dataclass(eq=False)
class RandomizationReport:
    value: float
    randomized_value: float
    per_coin: np.ndarray
    averaged: float
    control_difference: float | None

    @property
    def difference(self) -> float:
        return abs(self.value - self.randomized_value)


def randomization_test(tree: EventTree, x, U: UtilitySpec, grid: ActionGrid, coin_arity: int,
                       control: bool = True) -> RandomizationReport:
    """Compare the value with and without an independent coin revealed at time 0."""
    if coin_arity < 1:
        raise ValueError("coin arity must be >= 1")
    base = enumerate_value(tree, x, grid, U).value
    prod = randomized_tree(tree, coin_arity)
    rand = enumerate_value(prod, x, grid, U)
    # each coin branch is a copy of the original tree: optimise it separately
    en = _Enumerator(prod, grid, U)
    h0 = (np.asarray(x, float) / tree.prices[0])[None]
    per = np.array([en.values(int(c), h0)[0][0] for c in prod.children(0)[0]])
    diff = None
    if control:
        diff = enumerate_value(revealing_tree(tree), x, grid, U).value - base
    return RandomizationReport(base, rand.value, per, float(per.mean()), diff)


# -- results CSV ---------------------------------------------------------------------------------------

RESULT_FIELDS = ["method", "n", "x", "gamma", "lambda", "value", "stderr", "gap", "seed"]


def result_row(report: ValueReport, n, x, gamma, lam, seed) -> dict:
    return {
        "method": report.method,
        "n": n,
        "x": ";".join(f"{v:.17g}" for v in np.asarray(x, float)),
        "gamma": f"{gamma:.17g}",
        "lambda": f"{lam:.17g}",
        "value": f"{report.value:.17g}",
        "stderr": f"{report.stderr:.17g}",
        "gap": "" if math.isnan(report.gap) else f"{report.gap:.17g}",
        "seed": seed,
    }


def append_results(path, rows) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS, lineterminator="\n")
        if new:
            w.writeheader()
        for r in rows:
            w.writerow(r)
