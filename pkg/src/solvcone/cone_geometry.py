"""Polyhedral solvency cones built from transaction-cost matrices.

A cone is stored by its generators (extreme rays, monetary units) and, for
d <= 4, by the extreme rays of its dual computed with the double-description
method.  Membership, liquidation and purchase values are available both as
small linear programs over the generators and, when the dual is exact, as
closed-form minima/maxima over the dual section ``K* ∩ {w : w^1 = 1}``.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lp import LPError, linprog

TOL = 1e-9
EXACT_DUAL_MAX_DIM = 4


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Proportional cost rates; ``rates[i, j]`` is λ^{ij} (0-based indices)."""

    rates: np.ndarray

    def __post_init__(self):
        lam = np.array(self.rates, dtype=float)
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
            raise ValueError("cost matrix must be square")
        if lam.shape[0] < 2:
            raise ValueError("need at least two assets")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise ValueError("cost rates must be finite and nonnegative")
        if np.any(np.diag(lam) != 0):
            raise ValueError("diagonal cost rates must be zero")
        lam.setflags(write=False)
        object.__setattr__(self, "rates", lam)

    @property
    def d(self) -> int:
        return self.rates.shape[0]

    @classmethod
    def uniform(cls, d: int, rate: float) -> "CostMatrix":
        lam = np.full((d, d), float(rate))
        np.fill_diagonal(lam, 0.0)
        return cls(lam)

    @classmethod
    def parse(cls, text: str) -> "CostMatrix":
        """Parse ``d = <int>`` followed by ``lambda.i.j = <rate>`` lines (1-based)."""
        d = None
        entries = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "d":
                d = int(value)
                continue
            m = re.fullmatch(r"lambda\.(\d+)\.(\d+)", key)
            if not m:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            entries[(int(m.group(1)), int(m.group(2)))] = float(value)
        if d is None:
            raise ValueError("missing 'd'")
        lam = np.zeros((d, d))
        for (i, j), v in entries.items():
            if not (1 <= i <= d and 1 <= j <= d):
                raise ValueError(f"lambda.{i}.{j} out of range for d={d}")
            lam[i - 1, j - 1] = v
        return cls(lam)

    @classmethod
    def read(cls, path) -> "CostMatrix":
        return cls.parse(Path(path).read_text())

    def dumps(self) -> str:
        lines = [f"d = {self.d}"]
        for i in range(self.d):
            for j in range(self.d):
                if i != j:
                    lines.append(f"lambda.{i + 1}.{j + 1} = {self.rates[i, j]:.17g}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class DualSection:
    """Vertices of ``K* ∩ {w : w^1 = 1}``; ``exact`` is False when sampled."""

    vertices: np.ndarray
    exact: bool = True


@dataclass(frozen=True, eq=False)
class SolvencyCone:
    d: int
    generators: np.ndarray
    dual_generators: np.ndarray | None
    proper: bool
    costs: CostMatrix | None = None
    _section: DualSection | None = field(default=None, repr=False)

    @property
    def exact_dual(self) -> bool:
        return self.dual_generators is not None

    @property
    def section(self) -> DualSection:
        return self._section

    @classmethod
    def from_generators(cls, generators, costs: CostMatrix | None = None) -> "SolvencyCone":
        """Build a cone from an arbitrary generating set (redundant rays removed)."""
        G = np.atleast_2d(np.asarray(generators, dtype=float))
        d = G.shape[1]
        G = _remove_redundant(_dedup(G))
        proper = _is_pointed(G)
        duals = None
        section = None
        # the double description below starts from R^d_+, valid only when K ⊇ R^d_+
        if all(_in_cone_lp(G, e) for e in np.eye(d)):
            if d <= EXACT_DUAL_MAX_DIM:
                duals = double_description(G)
                for g in G:
                    if np.any(duals @ g < -TOL):
                        raise AssertionError("bipolarity check failed")
                if np.all(duals[:, 0] > TOL):
                    section = DualSection(_sorted_rows(duals / duals[:, :1]), exact=True)
            else:
                section = _sampled_section(G)
        return cls(d, G, duals, proper, costs, section)


def transfer_rays(costs: CostMatrix) -> np.ndarray:
    """Rows ``g_ij = (1+λ^{ji}) e_i - e_j``: give up one unit of j to receive i."""
    d = costs.d
    rays = []
    for i in range(d):
        for j in range(d):
            if i != j:
                g = np.zeros(d)
                g[i] = 1.0 + costs.rates[j, i]
                g[j] = -1.0
                rays.append(g)
    return np.array(rays)


def cone_from_costs(costs: CostMatrix) -> SolvencyCone:
    """Solvency cone ``R^d_+ + cone{(1+λ^{ji}) e_i - e_j : i != j}``."""
    d = costs.d
    rays = np.vstack([np.eye(d), transfer_rays(costs)])
    cone = SolvencyCone.from_generators(rays, costs)
    for i in range(d):
        assert contains(cone, np.eye(d)[i]), "cone must contain the nonnegative orthant"
    return cone


def orthant_cone(d: int) -> SolvencyCone:
    return SolvencyCone.from_generators(np.eye(d))


# -- generator bookkeeping -------------------------------------------------


def _sorted_rows(A: np.ndarray) -> np.ndarray:
    order = np.lexsort(A.T[::-1])
    return A[order]


def _dedup(G: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(G, axis=1)
    G = G[norms > TOL] / norms[norms > TOL, None]
    out: list[np.ndarray] = []
    for g in G:
        if not any(np.abs(g - h).max() <= TOL for h in out):
            out.append(g)
    return np.array(out)


def _in_cone_lp(G: np.ndarray, x: np.ndarray) -> bool:
    if G.shape[0] == 0:
        return bool(np.abs(x).max() <= TOL)
    res = linprog(np.zeros(G.shape[0]), A_eq=G.T, b_eq=x)
    return res.ok


def _remove_redundant(G: np.ndarray) -> np.ndarray:
    keep = list(range(G.shape[0]))
    for k in range(G.shape[0]):
        others = [j for j in keep if j != k]
        if _in_cone_lp(G[others], G[k]):
            keep = others
    return G[keep]


def _is_pointed(G: np.ndarray) -> bool:
    # K ∩ -K = {0} iff no nonzero c >= 0 with G^T c = 0
    k = G.shape[0]
    res = linprog(-np.ones(k), A_ub=np.ones((1, k)), b_ub=[1.0], A_eq=G.T, b_eq=np.zeros(G.shape[1]))
    if not res.ok:
        raise LPError(f"properness LP failed: {res.status}")
    return -res.fun <= TOL


def double_description(G: np.ndarray) -> np.ndarray:
    """Extreme rays of ``{w : g·w >= 0 for all rows g of G}`` (unit norm).

    The generating set must contain enough rays that the dual is pointed
    and lies in the nonnegative orthant; the iteration starts from the
    orthant ``R^d_+`` and adds one halfspace at a time (Motzkin's method
    with the algebraic adjacency test).
    """
    d = G.shape[1]
    H: list[np.ndarray] = [np.eye(d)[i] for i in range(d)]
    rays = [np.eye(d)[i] for i in range(d)]
    for g in G:
        if any(np.abs(g / np.linalg.norm(g) - h / np.linalg.norm(h)).max() <= TOL for h in H):
            continue
        R = np.array(rays)
        s = R @ g
        pos = [i for i in range(len(rays)) if s[i] > TOL]
        zero = [i for i in range(len(rays)) if abs(s[i]) <= TOL]
        negs = [i for i in range(len(rays)) if s[i] < -TOL]
        Hm = np.array(H)
        tight = np.abs(R @ Hm.T) <= TOL
        new = [rays[i] for i in pos + zero]
        for p, n in itertools.product(pos, negs):
            common = tight[p] & tight[n]
            rank = np.linalg.matrix_rank(Hm[common], tol=1e-10) if common.any() else 0
            if rank != d - 2:
                continue
            r = s[p] * rays[n] - s[n] * rays[p]
            r /= np.linalg.norm(r)
            if not any(np.abs(r - q).max() <= 1e-8 for q in new):
                new.append(r)
        rays = new
        H.append(g)
    return _sorted_rows(np.array(rays))


def _sampled_section(G: np.ndarray, samples: int = 64, seed: int = 0) -> DualSection:
    # LP-only mode: vertices of the section found by maximising random directions
    rng = np.random.default_rng(seed)
    d = G.shape[1]
    A_eq = np.zeros((1, d))
    A_eq[0, 0] = 1.0
    found: list[np.ndarray] = []
    directions = np.vstack([np.eye(d), -np.eye(d), rng.normal(size=(samples, d))])
    for c in directions:
        res = linprog(-c, A_ub=-G, b_ub=np.zeros(G.shape[0]), A_eq=A_eq, b_eq=[1.0])
        if res.ok and not any(np.abs(res.x - q).max() <= 1e-8 for q in found):
            found.append(res.x)
    return DualSection(_sorted_rows(np.array(found)), exact=False)


# -- LP-backed queries -------------------------------------------------------


def _check_dim(cone: SolvencyCone, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (cone.d,):
        raise ValueError(f"expected a vector of length {cone.d}, got shape {x.shape}")
    return x


def contains(cone: SolvencyCone, x, tol: float = TOL) -> bool:
    """LP membership: smallest shift ``s >= -tol`` with ``x + s·1`` in the cone."""
    x = _check_dim(cone, x)
    if tol <= 0:
        raise ValueError("tol must be positive")
    G = cone.generators
    k = G.shape[0]
    # variables: c (k), s' = s + tol >= 0
    A_eq = np.hstack([G.T, -np.ones((cone.d, 1))])
    b_eq = x - tol
    cost = np.zeros(k + 1)
    cost[-1] = 1.0
    res = linprog(cost, A_eq=A_eq, b_eq=b_eq)
    if not res.ok:
        raise LPError(f"membership LP failed: {res.status}")
    return res.x[-1] <= 2 * tol


def contains_dual(cone: SolvencyCone, x, tol: float = TOL) -> bool:
    """Membership via the dual generators: ``w·x >= -tol`` for every dual ray."""
    x = _check_dim(cone, x)
    if not cone.exact_dual:
        raise ValueError("dual generators are only available for d <= 4")
    return bool(np.all(cone.dual_generators @ x >= -tol))


def liquidation_value(cone: SolvencyCone, x) -> float:
    """ℓ(x) = sup{λ : x - λ e_1 ∈ K} by linear programming."""
    x = _check_dim(cone, x)
    G = cone.generators
    k = G.shape[0]
    # x - λ e_1 = G^T c  ->  G^T c + λ e_1 = x ; maximise λ (free)
    e1 = np.zeros((cone.d, 1))
    e1[0, 0] = 1.0
    cost = np.zeros(k + 1)
    cost[-1] = -1.0
    res = linprog(cost, A_eq=np.hstack([G.T, e1]), b_eq=x, free=[k])
    if res.status == "unbounded":
        raise LPError("liquidation LP unbounded: cone contains -e_1")
    if not res.ok:
        raise AssertionError("liquidation LP infeasible; cone must contain the orthant")
    return float(res.x[-1])


def purchase_value(cone: SolvencyCone, x) -> float:
    """℘(x) = inf{y : y e_1 - x ∈ K} by linear programming."""
    x = _check_dim(cone, x)
    G = cone.generators
    k = G.shape[0]
    e1 = np.zeros((cone.d, 1))
    e1[0, 0] = 1.0
    cost = np.zeros(k + 1)
    cost[-1] = 1.0
    # y e_1 - x = G^T c  ->  -G^T c + y e_1 = x
    res = linprog(cost, A_eq=np.hstack([-G.T, e1]), b_eq=x, free=[k])
    if res.status == "unbounded":
        raise LPError("purchase LP unbounded: cone contains -e_1")
    if not res.ok:
        raise AssertionError("purchase LP infeasible; cone must contain the orthant")
    return float(res.x[-1])


# -- closed forms over the dual section --------------------------------------


def _section_vertices(cone: SolvencyCone) -> np.ndarray:
    if not cone.exact_dual or cone.section is None:
        raise ValueError("closed-form values need the exact dual (d <= 4)")
    return cone.section.vertices


def liquidation_values(cone: SolvencyCone, X) -> np.ndarray:
    """Vectorised ℓ over the last axis: min of ``w·x`` over section vertices."""
    X = np.asarray(X, dtype=float)
    if cone.exact_dual:
        return (X @ _section_vertices(cone).T).min(axis=-1)
    flat = X.reshape(-1, cone.d)
    return np.array([liquidation_value(cone, v) for v in flat]).reshape(X.shape[:-1])


def purchase_values(cone: SolvencyCone, X) -> np.ndarray:
    """Vectorised ℘ over the last axis: max of ``w·x`` over section vertices."""
    X = np.asarray(X, dtype=float)
    if cone.exact_dual:
        return (X @ _section_vertices(cone).T).max(axis=-1)
    flat = X.reshape(-1, cone.d)
    return np.array([purchase_value(cone, v) for v in flat]).reshape(X.shape[:-1])


def solvent(cone: SolvencyCone, X, tol: float = TOL) -> np.ndarray:
    """Vectorised membership ``x ∈ K`` (scale-aware tolerance)."""
    X = np.asarray(X, dtype=float)
    scale = np.maximum(1.0, np.abs(X).max(axis=-1))
    return liquidation_values(cone, X) >= -tol * scale


def dual_section(cone: SolvencyCone) -> DualSection:
    return cone.section


# -- projection and ε-interior ------------------------------------------------


class ProjectionError(RuntimeError):
    pass


def _nnls(A: np.ndarray, b: np.ndarray, max_iter: int) -> np.ndarray:
    """Lawson–Hanson active-set solver for ``min |A c - b|`` with ``c >= 0``."""
    n = A.shape[1]
    c = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ (b - A @ c)
    it = 0
    while (~passive).any() and (w[~passive] > 1e-12).any():
        j = int(np.argmax(np.where(passive, -np.inf, w)))
        passive[j] = True
        while True:
            it += 1
            if it > max_iter:
                raise ProjectionError(f"cone projection did not converge in {max_iter} steps")
            z = np.zeros(n)
            z[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
            if (z[passive] > 0).all():
                c = z
                break
            mask = passive & (z <= 0)
            alpha = np.min(c[mask] / (c[mask] - z[mask]))
            c = c + alpha * (z - c)
            passive &= c > 1e-14
            c[~passive] = 0.0
        w = A.T @ (b - A @ c)
    return c


def project_cone(G, u, max_iter: int = 500) -> np.ndarray:
    """Euclidean projection of ``u`` onto the cone generated by ``G``.

    ``G`` is a :class:`SolvencyCone` or an array of generators (rows).
    """
    gens = G.generators if isinstance(G, SolvencyCone) else np.atleast_2d(np.asarray(G, dtype=float))
    u = np.asarray(u, dtype=float)
    if u.shape != (gens.shape[1],):
        raise ValueError("dimension mismatch")
    coef = _nnls(gens.T, u, max_iter)
    return gens.T @ coef


def eps_interior_dual(cone: SolvencyCone, y, eps: float) -> bool:
    """Whether ``w·y > eps |y| |w|`` for every generator ``w`` of the cone.

    Checking generators is equivalent to checking all of K: for
    ``w = Σ c_g g`` with ``c_g >= 0`` the triangle inequality gives
    ``w·y = Σ c_g g·y > eps |y| Σ c_g |g| >= eps |y| |w|``.
    """
    y = _check_dim(cone, y)
    if eps <= 0:
        raise ValueError("eps must be positive")
    ny = np.linalg.norm(y)
    if ny == 0:
        raise ValueError("y must be nonzero")
    G = cone.generators
    return bool(np.all(G @ y > eps * ny * np.linalg.norm(G, axis=1)))


def write_generators(cone: SolvencyCone, path, dual: bool = False) -> None:
    rays = cone.dual_generators if dual else cone.generators
    if rays is None:
        raise ValueError("dual generators unavailable in LP-only mode")
    Path(path).write_text("".join(" ".join(f"{v:.17g}" for v in r) + "\n" for r in rays))


def read_generators(path) -> np.ndarray:
    rows = [list(map(float, line.split())) for line in Path(path).read_text().splitlines() if line.strip()]
    return np.array(rows)
