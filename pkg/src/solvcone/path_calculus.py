"""Paths on uniform time grids: moduli, Stieltjes sums, variation, metrics.

A :class:`GridPath` stores its values at the nodes ``t_k = kT/m``.  Step
("cadlag") paths hold ``values[k]`` on ``[t_k, t_{k+1})``; linear paths
interpolate between nodes.  Step paths may also carry a value at ``0-`` so
that a jump at time zero is representable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

CADLAG = "cadlag"
LINEAR = "linear"


@dataclass(frozen=True, eq=False)
class GridPath:
    horizon: float
    values: np.ndarray
    kind: str = CADLAG
    pre0: np.ndarray | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] < 2:
            raise ValueError("need at least one grid cell")
        if not np.all(np.isfinite(vals)):
            raise ValueError("path values must be finite")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.kind not in (CADLAG, LINEAR):
            raise ValueError(f"unknown path kind {self.kind!r}")
        pre = vals[0].copy() if self.pre0 is None else np.asarray(self.pre0, dtype=float).reshape(-1)
        if pre.shape != (vals.shape[1],):
            raise ValueError("pre0 has the wrong dimension")
        vals.setflags(write=False)
        pre.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "pre0", pre)

    @property
    def m(self) -> int:
        return self.values.shape[0] - 1

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def step(self) -> float:
        return self.horizon / self.m

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.m + 1)

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]

    def increments(self) -> np.ndarray:
        """Jumps at the nodes; row 0 is the jump from ``0-`` to ``0``."""
        return np.diff(np.vstack([self.pre0, self.values]), axis=0)

    def component(self, i: int) -> "GridPath":
        return GridPath(self.horizon, self.values[:, i], self.kind, self.pre0[i : i + 1])

    def refine(self, factor: int) -> "GridPath":
        """Same path on a grid with ``factor`` times as many cells."""
        if factor < 1:
            raise ValueError("refinement factor must be >= 1")
        if self.kind == CADLAG:
            vals = np.vstack([np.repeat(self.values[:-1], factor, axis=0), self.values[-1:]])
        else:
            s = np.linspace(0.0, 1.0, factor + 1)[:-1]
            left, right = self.values[:-1], self.values[1:]
            inner = left[:, None, :] + s[None, :, None] * (right - left)[:, None, :]
            vals = np.vstack([inner.reshape(-1, self.d), self.values[-1:]])
        return GridPath(self.horizon, vals, self.kind, self.pre0)

    def concat(self, other: "GridPath") -> "GridPath":
        """Continue this path with the increments of ``other``.

        ``other``'s jump at its time 0 lands on the join node, added to this
        path's last jump.
        """
        if not math.isclose(self.step, other.step) or self.kind != other.kind or self.d != other.d:
            raise ValueError("paths must share grid step, kind and dimension")
        tail = self.values[-1] + (other.values - other.pre0)
        vals = np.vstack([self.values[:-1], tail])
        return GridPath(self.horizon + other.horizon, vals, self.kind, self.pre0)

    def write_csv(self, path, header_lines=()) -> None:
        lines = list(header_lines)
        if not np.array_equal(self.pre0, self.values[0]):
            lines.append("# pre0: " + " ".join(f"{v:.17g}" for v in self.pre0))
        lines.append("t," + ",".join(f"x{i + 1}" for i in range(self.d)))
        for t, row in zip(self.times, self.values):
            lines.append(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read_csv(cls, path, kind: str = CADLAG) -> "GridPath":
        pre0 = None
        rows = []
        for line in Path(path).read_text().splitlines():
            if line.startswith("# pre0:"):
                pre0 = np.array(line.split(":", 1)[1].split(), dtype=float)
            elif line.startswith("#") or line.startswith("t,") or not line.strip():
                continue
            else:
                rows.append([float(v) for v in line.split(",")])
        data = np.array(rows)
        t = data[:, 0]
        return cls(float(t[-1]), data[:, 1:], kind, pre0)


@dataclass(frozen=True, eq=False)
class BVCertificate:
    variation_path: GridPath
    directions: np.ndarray  # (m+1, d), unit l1 norm where the jump is nonzero
    jumped: np.ndarray  # (m+1,) bool

    @property
    def total(self) -> float:
        return float(self.variation_path.values[-1, 0])


def _same_grid(f: GridPath, g: GridPath) -> None:
    if f.m != g.m or not math.isclose(f.horizon, g.horizon):
        raise ValueError("paths live on different grids")


def _window(path: GridPath, eps: float) -> int:
    return int(math.floor(eps / path.step + 1e-9))


def _ranges(x: np.ndarray, w: int) -> np.ndarray:
    """max - min over each trailing window [k-w, k] (clipped at 0)."""
    n = x.size
    if w <= 0:
        return np.zeros(n)
    padded = np.concatenate([np.full(w, x[0]), x])
    view = sliding_window_view(padded, w + 1)
    out = view.max(axis=1) - view.min(axis=1)
    # the first w windows include padding equal to x[0], which is a real value
    return out


def modulus(f: GridPath, eps: float):
    """Modulus of continuity over grid pairs ``|t_r - t_s| <= eps``.

    Returns a float for scalar paths and one value per coordinate otherwise.
    """
    if not 0 < eps <= f.horizon + 1e-12:
        raise ValueError("eps must lie in (0, T]")
    w = _window(f, eps)
    out = np.array([_ranges(f.values[:, i], w).max() for i in range(f.d)])
    return float(out[0]) if f.d == 1 else out


def running_modulus(f: GridPath, eps: float) -> np.ndarray:
    """``w_{t_k}(f, eps)`` for every node k; shape (m+1,) or (m+1, d)."""
    w = _window(f, eps)
    out = np.column_stack([np.maximum.accumulate(_ranges(f.values[:, i], w)) for i in range(f.d)])
    return out[:, 0] if f.d == 1 else out


def sup_norm(f: GridPath):
    out = np.abs(f.values).max(axis=0)
    return float(out[0]) if f.d == 1 else out


def uniform_distance(f: GridPath, g: GridPath) -> float:
    _same_grid(f, g)
    if f.d != g.d:
        raise ValueError("dimension mismatch")
    return float(np.linalg.norm(f.values - g.values, axis=1).max())


def mz_distance(x: GridPath, y: GridPath) -> float:
    """Meyer–Zheng distance of two step paths (exact clipped integral)."""
    if not math.isclose(x.horizon, y.horizon):
        raise ValueError("paths must share the horizon")
    if x.d != y.d:
        raise ValueError("dimension mismatch")
    m = math.lcm(x.m, y.m)
    xv = x.refine(m // x.m).values
    yv = y.refine(m // y.m).values
    dist = np.minimum(np.linalg.norm(xv - yv, axis=1), 1.0)
    return float(dist[:-1].sum() * (x.horizon / m) + dist[-1])


def stieltjes_integral(f: GridPath, b: GridPath) -> GridPath:
    """Left-point Stieltjes sums ``Σ_{j<=k} f(t_j) Δb_{t_j}`` (jump at 0 included).

    ``f`` is scalar or has the same dimension as ``b`` (coordinatewise
    integrands).  Exact for step integrators.
    """
    _same_grid(f, b)
    if f.d not in (1, b.d):
        raise ValueError("integrand must be scalar or match the integrator's dimension")
    vals = np.cumsum(f.values * b.increments(), axis=0)
    return GridPath(b.horizon, vals, CADLAG, np.zeros(b.d))


def total_variation(b: GridPath) -> BVCertificate:
    """Running coordinate-sum variation and l1-normalised jump directions."""
    jumps = b.increments()
    size = np.abs(jumps).sum(axis=1)
    var = GridPath(b.horizon, np.cumsum(size), CADLAG, np.zeros(1))
    jumped = size > 0
    directions = np.zeros_like(jumps)
    directions[jumped] = jumps[jumped] / size[jumped, None]
    return BVCertificate(var, directions, jumped)


def coordinate_variation(b: GridPath) -> np.ndarray:
    """Terminal variation of each coordinate separately."""
    return np.abs(b.increments()).sum(axis=0)


def piecewise_approx(b: GridPath, m: int) -> GridPath:
    """Coarse step path holding ``b_{t_k}`` on each coarse cell ``[t_k, t_{k+1})``."""
    if m < 1 or b.m % m:
        raise ValueError(f"coarse cell count {m} must divide {b.m}")
    r = b.m // m
    return GridPath(b.horizon, b.values[::r], CADLAG, b.pre0)


def lift(coarse: GridPath, fine_m: int) -> GridPath:
    """Represent a coarse path on a finer grid (exact for step paths)."""
    if fine_m % coarse.m:
        raise ValueError("fine grid must refine the coarse grid")
    return coarse.refine(fine_m // coarse.m)
