"""Price models: geometric Brownian motion, scaled random walks, regime switching.

Asset 1 is the numeraire (``S^1 ≡ 1``); only assets ``2..d`` carry dynamics,
so per-asset parameters are vectors of length ``d - 1``.

Random streams: path ``i`` of a batch draws from block ``i // PATH_BLOCK`` of
``SeedSequence(seed)``, each block being its own ``spawn_key``.  A path's
draws therefore depend on ``(seed, i)`` only, not on the batch size or on
how blocks are spread over workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .path_calculus import LINEAR, GridPath

GBM = "gbm"
SCALED_WALK = "scaled_walk"
REGIME_SWITCH = "regime_switch"
KINDS = (GBM, SCALED_WALK, REGIME_SWITCH)

PATH_BLOCK = 1024
NODE_BUDGET = 2_000_000


def _vec(values, k: int, name: str) -> np.ndarray:
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 1 and k > 1:
        v = np.full(k, float(v[0]))
    if v.shape != (k,):
        raise ValueError(f"{name} needs {k} entries, got {v.size}")
    return v


@dataclass(frozen=True, eq=False)
class ModelSpec:
    kind: str
    d: int
    T: float = 1.0
    drift: np.ndarray = 0.0
    sigma: np.ndarray = 0.2
    corr: np.ndarray | None = None
    s0: np.ndarray = 1.0
    n: int = 1
    drift2: np.ndarray | None = None
    sigma2: np.ndarray | None = None
    switch_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.d < 2:
            raise ValueError("need at least two assets")
        if self.T <= 0:
            raise ValueError("horizon must be positive")
        if self.n < 1:
            raise ValueError("step count must be >= 1")
        k = self.d - 1
        put = lambda name, v: object.__setattr__(self, name, v)  # noqa: E731
        put("drift", _vec(self.drift, k, "drift"))
        put("sigma", _vec(self.sigma, k, "sigma"))
        put("s0", _vec(self.s0, k, "s0"))
        if np.any(self.sigma < 0):
            raise ValueError("volatilities must be nonnegative")
        if np.any(self.s0 <= 0):
            raise ValueError("initial prices must be positive")
        corr = np.eye(k) if self.corr is None else np.asarray(self.corr, dtype=float)
        if corr.shape != (k, k) or not np.allclose(corr, corr.T) or not np.allclose(np.diag(corr), 1.0):
            raise ValueError("correlation must be a symmetric unit-diagonal matrix")
        if np.linalg.eigvalsh(corr).min() < -1e-12:
            raise ValueError("correlation matrix is not positive semidefinite")
        put("corr", corr)
        if self.kind == SCALED_WALK and not np.allclose(corr, np.eye(k)):
            raise ValueError("scaled_walk uses independent coins; correlation must be the identity")
        if self.kind == REGIME_SWITCH:
            put("drift2", _vec(self.drift if self.drift2 is None else self.drift2, k, "drift2"))
            put("sigma2", _vec(self.sigma if self.sigma2 is None else self.sigma2, k, "sigma2"))
            if self.switch_rate < 0:
                raise ValueError("switch intensity must be nonnegative")

    @property
    def chol(self) -> np.ndarray:
        # symmetric square root also handles singular correlation matrices
        w, v = np.linalg.eigh(self.corr)
        return v * np.sqrt(np.clip(w, 0.0, None))

    def walk_increments(self, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Up/down log-increments per step, matching the GBM law in the limit."""
        n = self.n if n is None else n
        dt = self.T / n
        mean = (self.drift - 0.5 * self.sigma**2) * dt
        return mean + self.sigma * math.sqrt(dt), mean - self.sigma * math.sqrt(dt)

    def with_(self, **changes) -> "ModelSpec":
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return ModelSpec(**fields)


@dataclass(frozen=True, eq=False)
class MarketScenario:
    S: GridPath
    Y: GridPath


# -- sampling ----------------------------------------------------------------


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(block,)))


def _log_paths(spec: ModelSpec, m: int, rng: np.random.Generator, count: int):
    """Log-price increments (count, m, d-1) and factor increments."""
    k = spec.d - 1
    dt = spec.T / m
    if spec.kind == GBM:
        z = rng.standard_normal((count, m, k)) @ spec.chol.T
        inc = (spec.drift - 0.5 * spec.sigma**2) * dt + spec.sigma * math.sqrt(dt) * z
        return inc, math.sqrt(dt) * z
    if spec.kind == SCALED_WALK:
        if m % spec.n:
            raise ValueError(f"grid cells m={m} must be a multiple of the walk steps n={spec.n}")
        coins = np.where(rng.random((count, spec.n, k)) < 0.5, 1.0, -1.0)
        up, down = spec.walk_increments()
        steps = np.where(coins > 0, up, down)
        inc = np.zeros((count, m, k))
        r = m // spec.n
        # the j-th coin moves the price on the last cell of walk step j
        inc[:, r - 1 :: r, :] = steps
        fac = np.zeros((count, m, k))
        fac[:, r - 1 :: r, :] = coins * math.sqrt(spec.T / spec.n)
        return inc, fac
    # regime switching: a two-state chain with symmetric intensity, regime held per cell
    z = rng.standard_normal((count, m, k)) @ spec.chol.T
    u = rng.random((count, m))
    p_switch = 1.0 - math.exp(-spec.switch_rate * dt)
    flips = u < p_switch
    regime = np.concatenate([np.zeros((count, 1), dtype=int), np.cumsum(flips, axis=1)[:, :-1] % 2], axis=1)
    a = np.where(regime[..., None] == 0, spec.drift, spec.drift2)
    s = np.where(regime[..., None] == 0, spec.sigma, spec.sigma2)
    inc = (a - 0.5 * s**2) * dt + s * math.sqrt(dt) * z
    fac = np.concatenate([math.sqrt(dt) * z, regime[..., None].astype(float)], axis=2)
    return inc, fac


def _block_paths(spec: ModelSpec, m: int, seed: int, block: int) -> tuple[np.ndarray, np.ndarray]:
    inc, fac = _log_paths(spec, m, _block_rng(seed, block), PATH_BLOCK)
    zeros = np.zeros((PATH_BLOCK, 1, spec.d - 1))
    risky = spec.s0 * np.exp(np.concatenate([zeros, np.cumsum(inc, axis=1)], axis=1))
    assert np.all(risky > 0), "multiplicative dynamics cannot produce nonpositive prices"
    S = np.concatenate([np.ones((PATH_BLOCK, m + 1, 1)), risky], axis=2)
    if spec.kind == REGIME_SWITCH:
        W = np.concatenate([zeros, np.cumsum(fac[..., :-1], axis=1)], axis=1)
        reg = fac[..., -1:]
        Y = np.concatenate([W, np.concatenate([reg[:, :1], reg], axis=1)], axis=2)
    else:
        Y = np.concatenate([np.zeros((PATH_BLOCK, 1, fac.shape[2])), np.cumsum(fac, axis=1)], axis=1)
    return S, Y


def sample_batch(spec: ModelSpec, m: int, paths: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Prices (paths, m+1, d) and factor paths for paths ``0..paths-1``."""
    if m < 1 or paths < 1:
        raise ValueError("need m >= 1 and at least one path")
    parts = [_block_paths(spec, m, seed, b) for b in range(-(-paths // PATH_BLOCK))]
    S = np.concatenate([p[0] for p in parts])[:paths]
    Y = np.concatenate([p[1] for p in parts])[:paths]
    return S, Y


def sample_scenario(spec: ModelSpec, m: int, seed: int, index: int = 0) -> MarketScenario:
    """Scenario number ``index`` of the stream ``seed`` on an m-cell grid."""
    if m < 1:
        raise ValueError("need m >= 1")
    block, offset = divmod(index, PATH_BLOCK)
    S, Y = _block_paths(spec, m, seed, block)
    return MarketScenario(GridPath(spec.T, S[offset], LINEAR), GridPath(spec.T, Y[offset], LINEAR))


# -- event trees ---------------------------------------------------------------


class BudgetError(RuntimeError):
    """A requested computation exceeds its documented size budget."""


@dataclass(frozen=True, eq=False)
class EventTree:
    """Finite probability tree; node 0 is the root, children stored in CSR form.

    ``step[i]`` is the time index of node i (time ``step·T/n``).  A node with
    ``tradable[i] = False`` is a pure chance node: no trading takes place
    there (used for coins revealed before the first trading date).
    """

    prices: np.ndarray  # (N, d), column 0 ≡ 1
    step: np.ndarray  # (N,)
    labels: np.ndarray  # (N,)
    child_ptr: np.ndarray  # (N+1,)
    child_idx: np.ndarray
    child_prob: np.ndarray
    horizon: float
    n: int
    recombining: bool = False
    tradable: np.ndarray | None = None
    _parent: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        N = self.prices.shape[0]
        if self.tradable is None:
            object.__setattr__(self, "tradable", np.ones(N, dtype=bool))
        if np.any(self.prices <= 0) or not np.allclose(self.prices[:, 0], 1.0):
            raise ValueError("prices must be positive with a unit numeraire")
        for i in range(N):
            lo, hi = self.child_ptr[i], self.child_ptr[i + 1]
            if hi > lo and abs(self.child_prob[lo:hi].sum() - 1.0) > 1e-12:
                raise ValueError(f"child probabilities of node {i} do not sum to 1")
        if not self.recombining:
            parent = np.full(N, -1)
            parent[self.child_idx] = np.repeat(np.arange(N), np.diff(self.child_ptr))
            object.__setattr__(self, "_parent", parent)

    @property
    def size(self) -> int:
        return self.prices.shape[0]

    @property
    def d(self) -> int:
        return self.prices.shape[1]

    @property
    def parent(self) -> np.ndarray:
        if self.recombining:
            raise ValueError("recombining trees have no unique parent")
        return self._parent

    def children(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.child_ptr[i], self.child_ptr[i + 1]
        return self.child_idx[lo:hi], self.child_prob[lo:hi]

    def is_leaf(self, i: int) -> bool:
        return self.child_ptr[i] == self.child_ptr[i + 1]

    @property
    def depth(self) -> int:
        """Number of edges on the longest root-to-leaf path."""
        depth = np.zeros(self.size, dtype=int)
        for i in self.topological():
            c, _ = self.children(i)
            depth[c] = np.maximum(depth[c], depth[i] + 1)
        return int(depth.max())

    def topological(self) -> np.ndarray:
        """Nodes ordered so that parents precede children (construction order)."""
        return np.arange(self.size)

    def reach(self) -> np.ndarray:
        """Probability of reaching each node."""
        r = np.zeros(self.size)
        r[0] = 1.0
        for i in self.topological():
            c, p = self.children(i)
            r[c] += r[i] * p
        return r

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self.child_ptr) == 0)

    def write_csv(self, path) -> None:
        lines = ["parent,child,prob," + ",".join(f"S{j + 1}" for j in range(1, self.d)) + ",label"]
        for i in range(self.size):
            c, p = self.children(i)
            for j, q in zip(c, p):
                lines.append(f"{i},{j},{q:.17g}," + ",".join(f"{v:.17g}" for v in self.prices[j, 1:])
                             + f",{self.labels[j]}")
        Path(path).write_text("\n".join(lines) + "\n")


def _assemble(prices, step, labels, children, horizon, n, recombining, tradable=None) -> EventTree:
    ptr = np.zeros(len(children) + 1, dtype=int)
    ptr[1:] = np.cumsum([len(c) for c in children])
    idx = np.array([j for c in children for j, _ in c], dtype=int)
    prob = np.array([p for c in children for _, p in c], dtype=float)
    return EventTree(np.asarray(prices, float), np.asarray(step, int), np.asarray(labels, int), ptr, idx, prob,
                     float(horizon), int(n), recombining, None if tradable is None else np.asarray(tradable, bool))


def lattice_tree(s0, moves, probs, n: int, horizon: float = 1.0, recombine: bool = False,
                 labels=None, transition=None) -> EventTree:
    """Tree with multiplicative moves.

    ``moves`` has shape (b, d-1) (log-increments per branch) or, with a
    regime ``transition`` matrix (r, r), shape (r, b, d-1): branch moves
    depend on the current regime and children carry the next regime label.
    """
    s0 = np.asarray(s0, float).reshape(-1)
    moves = np.asarray(moves, float)
    probs = np.asarray(probs, float)
    if transition is None:
        moves = moves[None]
        transition = np.ones((1, 1))
    transition = np.asarray(transition, float)
    regimes, b, k = moves.shape
    if k != s0.size or probs.shape != (b,):
        raise ValueError("move table does not match the price dimension")
    if not recombine:
        width = int((transition > 0).sum(axis=1).max()) * b
        if sum(width**t for t in range(n + 1)) > NODE_BUDGET:
            raise BudgetError(f"a {width}-ary tree of depth {n} exceeds the node budget of {NODE_BUDGET}")
    prices = [np.concatenate([[1.0], s0])]
    logs = [np.zeros(k)]
    step = [0]
    label = [0]
    children: list[list] = [[]]
    frontier = [0]
    index = {}
    for depth in range(1, n + 1):
        nxt = []
        for i in frontier:
            r = label[i]
            for br in range(b):
                for r2 in range(regimes):
                    p = probs[br] * transition[r, r2]
                    if p == 0.0:
                        continue
                    lg = logs[i] + moves[r, br]
                    key = (depth, r2, tuple(np.round(lg, 10))) if recombine else None
                    j = index.get(key) if recombine else None
                    if j is None:
                        j = len(prices)
                        if j >= NODE_BUDGET:
                            raise BudgetError(f"tree exceeds the node budget of {NODE_BUDGET}")
                        prices.append(np.concatenate([[1.0], s0 * np.exp(lg)]))
                        logs.append(lg)
                        step.append(depth)
                        label.append(r2)
                        children.append([])
                        nxt.append(j)
                        if recombine:
                            index[key] = j
                    children[i].append((j, p))
        frontier = nxt
    for c in children:
        # merge duplicate edges created by recombination
        if len({j for j, _ in c}) < len(c):
            acc: dict[int, float] = {}
            for j, p in c:
                acc[j] = acc.get(j, 0.0) + p
            c[:] = sorted(acc.items())
    return _assemble(prices, step, label, children, horizon, n, recombine)


def build_tree(spec: ModelSpec, n: int | None = None, recombine: bool = False) -> EventTree:
    """Event tree of the scaled walk (or the discretised regime-switching model)."""
    n = spec.n if n is None else n
    k = spec.d - 1
    branches = np.array(list(np.ndindex(*(2,) * k)))  # 0 = up, 1 = down
    probs = np.full(len(branches), 0.5**k)
    if not recombine and len(branches) ** n * 2 > NODE_BUDGET:
        raise BudgetError(f"{len(branches)}^{n} leaves exceed the node budget; use recombine=True")
    if spec.kind == SCALED_WALK:
        up, down = spec.walk_increments(n)
        moves = np.where(branches == 0, up, down)
        return lattice_tree(spec.s0, moves, probs, n, spec.T, recombine)
    if spec.kind == REGIME_SWITCH:
        dt = spec.T / n
        tables = []
        for a, s in ((spec.drift, spec.sigma), (spec.drift2, spec.sigma2)):
            mean = (a - 0.5 * s**2) * dt
            tables.append(np.where(branches == 0, mean + s * math.sqrt(dt), mean - s * math.sqrt(dt)))
        p = 1.0 - math.exp(-spec.switch_rate * dt)
        P = np.array([[1 - p, p], [p, 1 - p]])
        return lattice_tree(spec.s0, np.array(tables), probs, n, spec.T, recombine, transition=P)
    raise ValueError("trees are built for scaled_walk and regime_switch models")


def randomized_tree(tree: EventTree, arity: int) -> EventTree:
    """Product of ``tree`` with an independent uniform coin revealed at time 0."""
    if arity < 1:
        raise ValueError("coin arity must be >= 1")
    if tree.recombining:
        raise ValueError("randomisation needs a non-recombining tree")
    N = tree.size
    prices = [tree.prices[0]]
    step = [0]
    labels = [0]
    tradable = [False]
    children: list[list] = [[(1 + c * N, 1.0 / arity) for c in range(arity)]]
    for c in range(arity):
        off = 1 + c * N
        for i in range(N):
            prices.append(tree.prices[i])
            step.append(tree.step[i])
            labels.append(tree.labels[i] * arity + c)
            tradable.append(bool(tree.tradable[i]))
            ch, p = tree.children(i)
            children.append([(off + j, q) for j, q in zip(ch, p)])
    return _assemble(prices, step, labels, children, tree.horizon, tree.n, False, tradable)


def revealing_tree(tree: EventTree) -> EventTree:
    """Negative control: the time-0 "coin" is the first move of the tree itself."""
    if tree.recombining:
        raise ValueError("needs a non-recombining tree")
    first, p_first = tree.children(0)
    N = tree.size
    prices = [tree.prices[0]]
    step = [0]
    labels = [0]
    tradable = [False]
    children: list[list] = [[]]
    for c, (j0, p0) in enumerate(zip(first, p_first)):
        off = len(prices)
        children[0].append((off, float(p0)))
        # copy of the root whose only continuation is branch j0, then the subtree
        sub = [j0]
        order = []
        while sub:
            i = sub.pop(0)
            order.append(i)
            sub.extend(tree.children(i)[0])
        where = {i: off + 1 + k for k, i in enumerate(order)}
        prices.append(tree.prices[0])
        step.append(0)
        labels.append(c)
        tradable.append(True)
        children.append([(where[j0], 1.0)])
        for i in order:
            prices.append(tree.prices[i])
            step.append(tree.step[i])
            labels.append(tree.labels[i])
            tradable.append(True)
            ch, p = tree.children(i)
            children.append([(where[j], q) for j, q in zip(ch, p)])
    return _assemble(prices, step, labels, children, tree.horizon, tree.n, False, tradable)


# -- coordinates and diagnostics ---------------------------------------------------


def physical_map(S_t, x) -> np.ndarray:
    """Monetary position -> physical units (divide by prices)."""
    S_t = np.asarray(S_t, float)
    if np.any(S_t <= 0):
        raise ValueError("prices must be positive")
    return np.asarray(x, float) / S_t


def monetary_map(S_t, x_hat) -> np.ndarray:
    """Physical units -> monetary position (inverse of :func:`physical_map`)."""
    S_t = np.asarray(S_t, float)
    if np.any(S_t <= 0):
        raise ValueError("prices must be positive")
    return np.asarray(x_hat, float) * S_t


def _norm_cdf(z):
    return 0.5 * (1.0 + np.vectorize(math.erf)(np.asarray(z, float) / math.sqrt(2.0)))


def lognormal_cdf(spec: ModelSpec, s, asset: int = 1) -> np.ndarray:
    """Terminal CDF of risky asset ``asset`` (1-based among risky) under the GBM law."""
    i = asset - 1
    a, sig, s0 = spec.drift[i], spec.sigma[i], spec.s0[i]
    mu = math.log(s0) + (a - 0.5 * sig**2) * spec.T
    sd = sig * math.sqrt(spec.T)
    return _norm_cdf((np.log(np.asarray(s, float)) - mu) / sd)


def terminal_ks_distance(tree: EventTree, spec: ModelSpec, asset: int = 1) -> float:
    """Kolmogorov distance between the tree's terminal law and the GBM lognormal."""
    leaves = tree.leaves()
    reach = tree.reach()[leaves]
    s = tree.prices[leaves, asset]
    order = np.argsort(s)
    s, w = s[order], reach[order]
    uniq, inv = np.unique(np.round(s, 12), return_inverse=True)
    mass = np.bincount(inv, weights=w)
    cdf_after = np.cumsum(mass)
    cdf_before = cdf_after - mass
    F = lognormal_cdf(spec, uniq, asset)
    return float(max(np.abs(cdf_after - F).max(), np.abs(cdf_before - F).max()))
