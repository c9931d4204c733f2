"""Sup/inf-convolutions in the tangential directions, convex envelopes and contact sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.spatial import ConvexHull, QhullError

from .grid import GridField


@dataclass(frozen=True)
class EnvelopeParams:
    epsilon: float
    rho: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.rho > 0:
            raise ValueError("rho must be > 0")

    def r_eps(self, u) -> float:
        """Shift radius (2 eps |u|_inf)^(1/2)."""
        vals = u.values if isinstance(u, GridField) else np.asarray(u)
        return math.sqrt(2.0 * self.epsilon * float(np.max(np.abs(vals))))

    @property
    def lipschitz_bound(self) -> float:
        return 6.0 * self.rho / self.epsilon


@njit(cache=True)
def _lower_parabolas(f, a):
    """d[p] = min_q f[q] + a (p - q)^2 on integer points (linear time)."""
    m = f.shape[0]
    d = np.empty(m)
    v = np.zeros(m, dtype=np.int64)
    z = np.empty(m + 1)
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, m):
        r = v[k]
        s = ((f[q] + a * q * q) - (f[r] + a * r * r)) / (2.0 * a * (q - r))
        while s <= z[k]:
            k -= 1
            r = v[k]
            s = ((f[q] + a * q * q) - (f[r] + a * r * r)) / (2.0 * a * (q - r))
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for p in range(m):
        while z[k + 1] < p:
            k += 1
        r = v[k]
        d[p] = f[r] + a * (p - r) * (p - r)
    return d


def _lower_along(arr: np.ndarray, axis: int, a: float) -> np.ndarray:
    moved = np.moveaxis(arr, axis, -1)
    flat = moved.reshape(-1, moved.shape[-1])
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        out[i] = _lower_parabolas(np.ascontiguousarray(flat[i]), a)
    return np.moveaxis(out.reshape(moved.shape), -1, axis)


def lower_envelope_xprime(u: GridField, eps: float) -> GridField:
    """u_eps(y) = min over grid x' of u(x', y_n) + |x' - y'|^2 / eps."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    grid = u.grid
    arr = u.array().astype(float)
    a = grid.h**2 / eps
    for axis in range(grid.n - 1):
        arr = _lower_along(arr, axis, a)
    return GridField(grid, arr.reshape(-1))


def upper_envelope_xprime(u: GridField, eps: float) -> GridField:
    """u^eps(y) = max over grid x' of u(x', y_n) - |x' - y'|^2 / eps."""
    neg = lower_envelope_xprime(GridField(u.grid, -u.values), eps)
    return GridField(u.grid, -neg.values)


# -- convex envelope ----------------------------------------------------------


def _default_points(values: np.ndarray) -> np.ndarray:
    axes = [np.linspace(-1.0, 1.0, m) for m in values.shape]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, values.ndim)


def _lower_hull_1d(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    xs, vs = x[order], v[order]
    hull: list[int] = []
    for i in range(len(xs)):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            cross = (xs[i1] - xs[i0]) * (vs[i] - vs[i0]) - (vs[i1] - vs[i0]) * (xs[i] - xs[i0])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    env = np.interp(xs, xs[hull], vs[hull])
    out = np.empty_like(env)
    out[order] = env
    return out


def convex_envelope(values, points=None) -> np.ndarray:
    """Largest convex minorant of nodal values over the convex hull of the nodes.

    ``values`` is a 1-D array (segment) or a d-D array (patch on a uniform grid
    of [-1, 1]^d); scattered nodes can be given through ``points`` (N, d).
    The envelope is exact: lower facets of the convex hull of the graph.
    """
    vals = np.asarray(values, dtype=float)
    shape = vals.shape
    if not np.all(np.isfinite(vals)):
        raise ValueError("convex_envelope needs finite values")
    pts = _default_points(vals) if points is None else np.asarray(points, dtype=float).reshape(vals.size, -1)
    v = vals.reshape(-1)
    d = pts.shape[1]
    if d == 1:
        return _lower_hull_1d(pts[:, 0], v).reshape(shape)
    # affine data is its own envelope (and makes the lifted hull degenerate)
    A = np.c_[pts, np.ones(len(v))]
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    if np.max(np.abs(A @ coef - v)) <= 1e-13 * (1.0 + np.max(np.abs(v))):
        return vals.copy()
    try:
        hull = ConvexHull(np.c_[pts, v])
    except QhullError as exc:  # pragma: no cover - degenerate node sets
        raise ValueError(f"convex hull failed: {exc}") from exc
    eq = hull.equations
    lower = eq[eq[:, d] < -1e-12]
    # plane of each lower facet: z = -(n . x + c) / n_z
    slopes = -lower[:, :d] / lower[:, d : d + 1]
    offs = -lower[:, d + 1] / lower[:, d]
    env = np.full(len(v), -np.inf)
    for start in range(0, len(lower), 512):
        block = pts @ slopes[start : start + 512].T + offs[start : start + 512]
        env = np.maximum(env, block.max(axis=1))
    return np.minimum(env, v).reshape(shape)


def contact_set(v, env, tol: float | None = None) -> np.ndarray:
    """Flat indices of nodes where v touches its convex envelope."""
    vv = v.values if isinstance(v, GridField) else np.asarray(v, dtype=float).reshape(-1)
    ee = env.values if isinstance(env, GridField) else np.asarray(env, dtype=float).reshape(-1)
    if tol is None:
        tol = 1e-9 * (1.0 + float(np.ptp(vv)))
    return np.nonzero(np.abs(vv - ee) <= tol)[0]
