"""Classified Cartesian grids and the monotone discretization of the transmission problem.

Node classes: ``PLUS``/``MINUS`` (interior nodes of the two phases), ``INTERFACE``
(one node per grid column, the one with x_n - psi(x') in (-h/2, h/2]),
``BOUNDARY`` (Dirichlet nodes) and ``OUTSIDE`` (ball domains only).

Interior nodes are discretized by frame-wise combinations of centered second
differences. Interface nodes carry only the transmission condition, written
with second order one-sided differences along the normal; off-grid stencil
points are ghost values interpolated (tensor quadratic) from nodes on the
correct side of the interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.sparse as sp

from .expr import as_field
from .geometry import DomainSpec, InterfaceGraph, normal_at
from .operators import EllipticOperator

PLUS, MINUS, INTERFACE, BOUNDARY, OUTSIDE = 0, 1, 2, 3, 4
KIND_NAMES = {PLUS: "plus", MINUS: "minus", INTERFACE: "interface", BOUNDARY: "boundary", OUTSIDE: "outside"}

# solver roles
ROLE_PLUS, ROLE_MINUS, ROLE_JUMP, ROLE_FIXED = 0, 1, 2, 3
TERM_MIN, TERM_MAX = 0, 1


class GridError(ValueError):
    pass


class SchemeInapplicable(ValueError):
    pass


# -- stencils -----------------------------------------------------------------


def _canonical(d) -> tuple:
    d = tuple(int(v) for v in d)
    for v in d:
        if v != 0:
            return d if v > 0 else tuple(-w for w in d)
    raise ValueError("zero direction")


@dataclass
class StencilScheme:
    """Orthogonal frames of integer directions within stencil radius ``radius``.

    radius 0: axis frame only; 1: adds the 45 degree frames in every
    coordinate plane; 2: adds the arctan(1/2) frames in every coordinate plane.
    """

    n: int
    radius: int
    directions: np.ndarray = field(init=False)
    frames: list = field(init=False)

    def __post_init__(self):
        if self.radius not in (0, 1, 2):
            raise SchemeInapplicable(f"stencil radius must be 0, 1 or 2, got {self.radius}")
        dirs: list[tuple] = []

        def idx(d):
            d = _canonical(d)
            if d not in dirs:
                dirs.append(d)
            return dirs.index(d)

        eye = np.eye(self.n, dtype=int)
        frames = [tuple(idx(e) for e in eye)]
        planar = []
        if self.radius >= 1:
            planar.append((1, 1))
        if self.radius >= 2:
            planar.extend([(2, 1), (1, 2)])
        for i in range(self.n):
            for j in range(i + 1, self.n):
                rest = [k for k in range(self.n) if k not in (i, j)]
                for a, b in planar:
                    v = a * eye[i] + b * eye[j]
                    w = -b * eye[i] + a * eye[j]
                    frames.append(tuple([idx(v), idx(w)] + [idx(eye[k]) for k in rest]))
        self.directions = np.array(dirs, dtype=int)
        self.frames = frames

    @property
    def m(self) -> int:
        return len(self.directions)

    def index_of(self, d) -> int | None:
        d = _canonical(d)
        for k, v in enumerate(self.directions):
            if tuple(v) == d:
                return k
        return None

    @property
    def sq_lengths(self) -> np.ndarray:
        return np.sum(self.directions**2, axis=1).astype(float)


def make_scheme(n: int = 2, radius: int = 1) -> StencilScheme:
    return StencilScheme(n, radius)


# -- grid -------------------------------------------------------------------


@dataclass
class GhostStencil:
    idx: np.ndarray
    weights: np.ndarray


class Grid:
    def __init__(self, domain: DomainSpec, iface: InterfaceGraph, cells: int):
        if cells % 2 != 0:
            raise GridError(f"grid.cells must be even, got {cells}")
        if cells < 8:
            raise GridError(f"grid.cells must be >= 8, got {cells}")
        if iface.n != domain.n:
            raise GridError("interface and domain dimensions differ")
        self.domain = domain
        self.iface = iface
        self.n = n = domain.n
        self.cells = cells
        self.h = 2.0 / cells
        self.shape = (cells + 1,) * n
        self.N = (cells + 1) ** n
        ii = np.indices(self.shape).reshape(n, -1).T
        self.multi = ii
        self.coords = (2.0 * ii - cells) / cells
        self.height = iface.signed_height(self.coords)
        self.ndist = iface.normal_distance(self.coords)
        self.tol = self.h / 2.0
        self._classify()
        self._build_interface_rows()

    # index helpers
    def flat_index(self, multi) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(multi).T), self.shape)

    def shifted(self, offset) -> np.ndarray:
        """Flat index of node + offset for every node, -1 where outside the grid."""
        tgt = self.multi + np.asarray(offset, dtype=int)
        ok = np.all((tgt >= 0) & (tgt <= self.cells), axis=1)
        out = np.full(self.N, -1, dtype=np.int64)
        out[ok] = np.ravel_multi_index(tuple(tgt[ok].T), self.shape)
        if self.domain.shape == "unit_ball":
            out[(out >= 0) & (self.kind[np.maximum(out, 0)] == OUTSIDE)] = -1
        return out

    def _classify(self):
        h, cells, n = self.h, self.cells, self.n
        kind = np.where(self.height > 0, PLUS, MINUS).astype(np.int8)
        band = (self.height > -h / 2) & (self.height <= h / 2)
        kind[band] = INTERFACE
        # exactly one interface node per column
        cols = self.multi[:, :-1]
        col_id = np.ravel_multi_index(tuple(cols.T), (cells + 1,) * (n - 1)) if n > 1 else np.zeros(self.N, int)
        counts = np.bincount(col_id[band], minlength=(cells + 1) ** (n - 1))
        if np.any(counts != 1):
            raise GridError("interface exits the domain (some grid column has no interface node)")
        rows = self.multi[band, -1]
        inner_cols = np.all((cols[band] > 0) & (cols[band] < cells), axis=1)
        bad = (rows[inner_cols] < 3) | (rows[inner_cols] > cells - 3)
        if np.any(bad):
            raise GridError(
                "interface exits the domain band: one-sided stencils need three node rows "
                "between the interface and the top/bottom boundary"
            )
        on_bdry = np.any((self.multi == 0) | (self.multi == cells), axis=1)
        kind[on_bdry] = BOUNDARY
        self.kind = kind
        if self.domain.shape == "unit_ball":
            r2 = np.sum(self.coords**2, axis=1)
            kind[r2 > 1.0 + 1e-12] = OUTSIDE
            self.kind = kind
            inside = kind != OUTSIDE
            for a in range(n):
                for s in (-1, 1):
                    off = np.zeros(n, int)
                    off[a] = s
                    nb = self.shifted(off)
                    edge = inside & (nb < 0)
                    kind[edge] = BOUNDARY
            self.kind = kind
        self.interface_nodes = np.nonzero(kind == INTERFACE)[0]

    def node_side(self) -> np.ndarray:
        """+1 / -1 physical side of every node (0 exactly on the graph)."""
        return np.sign(self.height).astype(int)

    def ghost_stencil(self, node: int, sigma: int, s: float) -> GhostStencil:
        """Interpolation weights for u at node + sigma*s*h*nu from nodes on side sigma."""
        n, cells = self.n, self.cells
        x0 = self.coords[node]
        nu = normal_at(self.iface, x0[:-1])
        p_idx = self.multi[node] + sigma * s * nu
        start = np.clip(np.rint(p_idx).astype(int) - 1, 0, cells - 2)
        for _ in range(4):
            block = np.array(list(product(*[range(st, st + 3) for st in start])))
            flat = self.flat_index(block)
            ok = sigma * self.height[flat] >= -1e-12
            if self.domain.shape == "unit_ball":
                ok &= self.kind[flat] != OUTSIDE
            if np.all(ok):
                break
            start[-1] += sigma
            if start[-1] < 0 or start[-1] > cells - 2:
                break
        else:
            ok = np.zeros(1, bool)
        if not np.all(ok):
            raise GridError(f"no one-sided interpolation block for interface node {node}")
        t = p_idx - start
        lag = [np.array([(tt - 1) * (tt - 2) / 2, -tt * (tt - 2), tt * (tt - 1) / 2]) for tt in t]
        w = np.ones(len(block))
        for a in range(n):
            w *= lag[a][block[:, a] - start[a]]
        keep = np.abs(w) > 1e-14
        return GhostStencil(flat[keep], w[keep])

    def _build_interface_rows(self):
        """Linear transmission rows: jump(u) - g = diag*u0 + sum(coef*u) + factor*g."""
        h = self.h
        rows, cols, vals = [], [], []
        diag = np.zeros(self.N)
        factor = np.zeros(self.N)
        nodes = self.interface_nodes
        for k in nodes:
            d = abs(self.ndist[k])
            diag[k] = -6.0 / (2 * h)
            factor[k] = 3.0 * d / (2 * h) - 1.0
            for sigma in (1, -1):
                for s, c in ((1, 4.0), (2, -1.0)):
                    gs = self.ghost_stencil(k, sigma, s)
                    for j, w in zip(gs.idx, gs.weights):
                        if j == k:
                            diag[k] += c * w / (2 * h)
                        else:
                            rows.append(k)
                            cols.append(j)
                            vals.append(c * w / (2 * h))
        self.jump_diag = diag
        self.jump_factor = factor
        self.jump_matrix = sp.csr_matrix((vals, (rows, cols)), shape=(self.N, self.N))

    def ball_nodes(self, center, radius, tol: float = 1e-12) -> np.ndarray:
        r = np.linalg.norm(self.coords - np.asarray(center, dtype=float), axis=1)
        return np.nonzero((r <= radius + tol) & (self.kind != OUTSIDE))[0]

    def describe(self) -> dict:
        counts = {KIND_NAMES[k]: int(np.sum(self.kind == k)) for k in KIND_NAMES}
        return {"n": self.n, "cells": self.cells, "h": self.h, "node_counts": counts}


def build_grid(domain: DomainSpec, iface: InterfaceGraph, cells: int) -> Grid:
    return Grid(domain, iface, cells)


# -- fields and problems -----------------------------------------------------


@dataclass
class GridField:
    grid: Grid
    values: np.ndarray
    plus_trace: np.ndarray | None = None
    minus_trace: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.N,):
            raise GridError(f"field has shape {self.values.shape}, grid needs ({self.grid.N},)")
        if self.plus_trace is not None or self.minus_trace is not None:
            if self.plus_trace is None or self.minus_trace is None:
                raise GridError("trace pair must be given together")

    def array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def copy(self) -> "GridField":
        pt = None if self.plus_trace is None else self.plus_trace.copy()
        mt = None if self.minus_trace is None else self.minus_trace.copy()
        return GridField(self.grid, self.values.copy(), pt, mt)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "GridField":
        return cls(grid, as_field(fn, grid.n)(grid.coords))


@dataclass
class TransmissionProblem:
    F_plus: EllipticOperator
    F_minus: EllipticOperator
    f_plus: object = 0.0
    f_minus: object = 0.0
    g: object = 0.0
    iface: InterfaceGraph | None = None
    boundary: object = 0.0
    domain: DomainSpec = field(default_factory=DomainSpec)

    def __post_init__(self):
        if (self.F_plus.lam, self.F_plus.lam_cap) != (self.F_minus.lam, self.F_minus.lam_cap):
            raise ValueError("F_plus and F_minus must share (lambda, lambda_cap)")
        n = self.domain.n
        if self.iface is None:
            self.iface = InterfaceGraph(n)
        self.sources = {k: getattr(self, k) for k in ("f_plus", "f_minus", "g", "boundary")}
        self.f_plus = as_field(self.f_plus, n)
        self.f_minus = as_field(self.f_minus, n)
        self.g = as_field(self.g, n)
        self.boundary = as_field(self.boundary, n)

    @property
    def n(self) -> int:
        return self.domain.n

    def g_on_interface(self, points) -> np.ndarray:
        """g evaluated at the vertical foot points (x', psi(x'))."""
        pts = np.array(np.atleast_2d(points), dtype=float)
        pts[:, -1] = self.iface.psi(pts[:, :-1])
        return self.g(pts)

    def describe(self) -> dict:
        src = {k: (v if isinstance(v, str) else repr(v)) for k, v in self.sources.items()}
        return {
            "F_plus": self.F_plus.describe(),
            "F_minus": self.F_minus.describe(),
            **src,
            "psi": self.iface.describe(),
            "domain": {"shape": self.domain.shape, "n": self.domain.n},
        }


# -- operator tables ------------------------------------------------------------


def _linear_coeffs(A: np.ndarray, scheme: StencilScheme) -> np.ndarray:
    """Nonnegative direction weights c with sum_j c_j D_j = tr(A D^2 u) (monotone splitting)."""
    n = scheme.n
    if A.shape != (n, n):
        raise SchemeInapplicable(f"matrix is {A.shape}, scheme dimension {n}")
    c = np.zeros(scheme.m)
    for i in range(n):
        e = np.zeros(n, int)
        e[i] = 1
        c[scheme.index_of(e)] += A[i, i]
    for i in range(n):
        for j in range(i + 1, n):
            b = A[i, j]
            if b == 0.0:
                continue
            d = np.zeros(n, int)
            d[i], d[j] = 1, (1 if b > 0 else -1)
            k = scheme.index_of(d)
            if k is None:
                raise SchemeInapplicable(
                    "linear operator with off-diagonal entries needs diagonal stencil directions; "
                    "use stencil_radius >= 1"
                )
            c[k] += 2.0 * abs(b)
            for a in (i, j):
                e = np.zeros(n, int)
                e[a] = 1
                c[scheme.index_of(e)] -= abs(b)
    if np.any(c < -1e-14):
        raise SchemeInapplicable(
            "matrix is not diagonally dominant, the 9-point splitting is not monotone; "
            "rotate coordinates or use a pucci/bellman operator"
        )
    return np.clip(c, 0.0, None)


def _terms(op: EllipticOperator, scheme: StencilScheme):
    """[(term_kind, weight_tag, p[A, m], q[A, m])] for one operator."""
    m = scheme.m
    if op.kind == "blend":
        out = []
        for (kind, _, p, q), tag in zip(_terms(op.plus, scheme) + _terms(op.minus, scheme), ("h", "1-h")):
            out.append((kind, tag, p, q))
        return out
    if op.kind == "linear":
        c = _linear_coeffs(op.matrix, scheme)
        return [(TERM_MIN, "1", c[None, :], c[None, :])]
    if op.kind == "bellman_min":
        cs = np.array([_linear_coeffs(A, scheme) for A in op.members])
        return [(TERM_MIN, "1", cs, cs)]
    lo, hi = (op.lam, op.lam_cap) if op.kind == "pucci_minus" else (op.lam_cap, op.lam)
    p = np.zeros((len(scheme.frames), m))
    q = np.zeros_like(p)
    for a, fr in enumerate(scheme.frames):
        p[a, list(fr)] = lo
        q[a, list(fr)] = hi
    return [(TERM_MIN if op.kind == "pucci_minus" else TERM_MAX, "1", p, q)]


# -- discretization -------------------------------------------------------------


@dataclass
class Discretization:
    """Flat arrays describing every nodal equation; consumed by the solvers."""

    grid: Grid
    scheme: StencilScheme
    roles: np.ndarray
    rhs: np.ndarray
    nbr_p: np.ndarray
    nbr_m: np.ndarray
    shift_p: np.ndarray
    shift_m: np.ndarray
    dir_scale: np.ndarray
    term_kind: np.ndarray
    n_alt: np.ndarray
    alt_p: np.ndarray
    alt_q: np.ndarray
    alt_ok: np.ndarray
    term_w: np.ndarray
    jump_diag: np.ndarray
    jump_const: np.ndarray
    jump_matrix: sp.csr_matrix

    @property
    def is_linear(self) -> bool:
        return bool(np.all(self.n_alt <= 1) and np.all(self.alt_p == self.alt_q))

    def data_scale(self) -> float:
        vals = [np.max(np.abs(self.rhs)) if self.rhs.size else 0.0]
        jc = self.jump_const[self.roles == ROLE_JUMP]
        if jc.size:
            vals.append(float(np.max(np.abs(jc))))
        return float(max(vals))

    # vectorized evaluation ---------------------------------------------------
    def second_differences(self, u: np.ndarray, nodes: np.ndarray, center=None) -> np.ndarray:
        nb_p = self.nbr_p[nodes]
        nb_m = self.nbr_m[nodes]
        valid = (nb_p >= 0) & (nb_m >= 0)
        s = u[np.maximum(nb_p, 0)] + self.shift_p[nodes] + u[np.maximum(nb_m, 0)] + self.shift_m[nodes]
        c = u[nodes] if center is None else np.asarray(center, dtype=float)
        D = (s - 2.0 * c[:, None]) * self.dir_scale[None, :]
        return np.where(valid, D, 0.0)

    def operator_values(self, u: np.ndarray, nodes: np.ndarray, center=None) -> np.ndarray:
        """Discrete F_h at interior-role nodes (optionally with a replaced center value)."""
        nodes = np.asarray(nodes, dtype=np.int64)
        D = self.second_differences(u, nodes, center)
        side = self.roles[nodes].astype(int)
        Dp, Dm = np.maximum(D, 0.0), np.minimum(D, 0.0)
        total = np.zeros(len(nodes))
        for t in range(self.term_kind.shape[1]):
            P = self.alt_p[side, t]  # (K, A, m)
            Q = self.alt_q[side, t]
            vals = np.einsum("kam,km->ka", P, Dp) + np.einsum("kam,km->ka", Q, Dm)
            ok = self.alt_ok[nodes, t]
            kind = self.term_kind[side, t]
            lo = np.where(ok, vals, np.inf).min(axis=1)
            hi = np.where(ok, vals, -np.inf).max(axis=1)
            ext = np.where(kind == TERM_MIN, lo, hi)
            w = self.term_w[nodes, t]
            total += np.where(w != 0.0, w * np.where(np.isfinite(ext), ext, 0.0), 0.0)
        return total

    def jump_values(self, u: np.ndarray) -> np.ndarray:
        """jump(u) - g at every node (meaningful on jump-role nodes)."""
        return self.jump_diag * u + self.jump_matrix @ u + self.jump_const

    def residual(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        r = np.zeros_like(u)
        inter = np.nonzero(self.roles <= ROLE_MINUS)[0]
        r[inter] = self.operator_values(u, inter) - self.rhs[inter]
        jn = self.roles == ROLE_JUMP
        r[jn] = self.jump_values(u)[jn]
        fx = self.roles == ROLE_FIXED
        r[fx] = u[fx] - self.rhs[fx]
        return r


def _admissible_neighbors(grid: Grid, side_kind: int, nb: np.ndarray, whole: bool) -> np.ndarray:
    ok = nb >= 0
    if whole:
        return ok
    kind = grid.kind[np.maximum(nb, 0)]
    sigma = 1 if side_kind == PLUS else -1
    same = kind == side_kind
    near = (kind == INTERFACE) | ((kind == BOUNDARY) & (sigma * grid.height[np.maximum(nb, 0)] > -grid.h / 2))
    return ok & (same | near)


def discretize(grid: Grid, scheme: StencilScheme, ops, rhs: np.ndarray, roles: np.ndarray,
               g_foot: np.ndarray | None = None, whole_domain: bool = False) -> Discretization:
    """Low-level constructor.

    ``ops`` is (operator for ROLE_PLUS nodes, operator for ROLE_MINUS nodes).
    ``rhs`` holds f at interior nodes and Dirichlet values at fixed nodes.
    ``g_foot`` (jump data at foot points) enables jump rows and jump-corrected
    neighbor values; with ``whole_domain`` stencils may cross the interface.
    """
    if scheme.n != grid.n:
        raise SchemeInapplicable("scheme and grid dimensions differ")
    N, m, h = grid.N, scheme.m, grid.h
    roles = np.asarray(roles, dtype=np.int8)
    nbr_p = np.stack([grid.shifted(d) for d in scheme.directions], axis=1)
    nbr_m = np.stack([grid.shifted(-d) for d in scheme.directions], axis=1)
    dir_scale = 1.0 / (h * h * scheme.sq_lengths)

    term_lists = [_terms(op, scheme) for op in ops]
    T = max(len(t) for t in term_lists)
    A = max(t[2].shape[0] for tl in term_lists for t in tl)
    term_kind = np.zeros((2, T), dtype=np.int8)
    n_alt = np.zeros((2, T), dtype=np.int64)
    alt_p = np.zeros((2, T, A, m))
    alt_q = np.zeros((2, T, A, m))
    for s, tl in enumerate(term_lists):
        for t, (kind, _, p, q) in enumerate(tl):
            term_kind[s, t] = kind
            n_alt[s, t] = p.shape[0]
            alt_p[s, t, : p.shape[0]] = p
            alt_q[s, t, : q.shape[0]] = q

    shift_p = np.zeros((N, m))
    shift_m = np.zeros((N, m))
    term_w = np.zeros((N, T))
    alt_ok = np.zeros((N, T, A), dtype=bool)
    for s, (op, tl) in enumerate(zip(ops, term_lists)):
        nodes = np.nonzero(roles == s)[0]
        if nodes.size == 0:
            continue
        if op.kind == "blend":
            hw = np.asarray(op.weight(grid.coords[nodes]), dtype=float)
            if np.any((hw < -1e-14) | (hw > 1 + 1e-14)):
                raise SchemeInapplicable("blend weight must take values in [0, 1]")
            hw = np.clip(hw, 0.0, 1.0)
            term_w[nodes, 0] = hw
            term_w[nodes, 1] = 1.0 - hw
        else:
            term_w[nodes, 0] = 1.0
        side_kind = PLUS if s == ROLE_PLUS else MINUS
        avail = np.ones((nodes.size, m), dtype=bool)
        for j in range(m):
            avail[:, j] = (
                _admissible_neighbors(grid, side_kind, nbr_p[nodes, j], whole_domain)
                & _admissible_neighbors(grid, side_kind, nbr_m[nodes, j], whole_domain)
            )
        for t, (_, _, p, q) in enumerate(tl):
            need = (p != 0) | (q != 0)  # (A, m)
            ok = np.all(avail[:, None, :] | ~need[None, :, :], axis=2)
            alt_ok[nodes, t, : p.shape[0]] = ok
            missing = ~np.any(ok, axis=1)
            if np.any(missing):
                bad = nodes[np.argmax(missing)]
                raise SchemeInapplicable(
                    f"no admissible stencil at node {bad} (x={grid.coords[bad].tolist()}); "
                    "the interface is too steep for this grid"
                )
        if g_foot is not None and not whole_domain:
            sigma = 1 if side_kind == PLUS else -1
            for nbr, shift in ((nbr_p, shift_p), (nbr_m, shift_m)):
                nb = nbr[nodes]
                safe = np.maximum(nb, 0)
                d = grid.ndist[safe]
                other = (nb >= 0) & (sigma * d < 0)
                shift[nodes] = np.where(other, sigma * d * g_foot[safe], 0.0)

    jump_const = np.zeros(N)
    jump_diag = np.zeros(N)
    jump_matrix = sp.csr_matrix((N, N))
    jn = roles == ROLE_JUMP
    if np.any(jn):
        if g_foot is None:
            raise ValueError("jump rows need g")
        jump_const[jn] = grid.jump_factor[jn] * g_foot[jn]
        jump_diag[jn] = grid.jump_diag[jn]
        keep = sp.diags(jn.astype(float))
        jump_matrix = (keep @ grid.jump_matrix).tocsr()

    return Discretization(
        grid=grid, scheme=scheme, roles=roles, rhs=np.asarray(rhs, dtype=float),
        nbr_p=nbr_p, nbr_m=nbr_m, shift_p=shift_p, shift_m=shift_m, dir_scale=dir_scale,
        term_kind=term_kind, n_alt=n_alt, alt_p=alt_p, alt_q=alt_q, alt_ok=alt_ok,
        term_w=term_w, jump_diag=jump_diag, jump_const=jump_const, jump_matrix=jump_matrix,
    )


def transmission_roles(grid: Grid) -> np.ndarray:
    roles = np.full(grid.N, ROLE_FIXED, dtype=np.int8)
    roles[grid.kind == PLUS] = ROLE_PLUS
    roles[grid.kind == MINUS] = ROLE_MINUS
    roles[grid.kind == INTERFACE] = ROLE_JUMP
    return roles


def discretize_problem(problem: TransmissionProblem, grid: Grid, scheme: StencilScheme) -> Discretization:
    if problem.iface is not grid.iface and not np.array_equal(problem.iface.coeffs, grid.iface.coeffs):
        raise GridError("grid was built for a different interface")
    roles = transmission_roles(grid)
    X = grid.coords
    rhs = np.zeros(grid.N)
    rp, rm = roles == ROLE_PLUS, roles == ROLE_MINUS
    rhs[rp] = problem.f_plus(X[rp])
    rhs[rm] = problem.f_minus(X[rm])
    fx = roles == ROLE_FIXED
    rhs[fx] = problem.boundary(X[fx])
    g_foot = problem.g_on_interface(X)
    return discretize(grid, scheme, (problem.F_plus, problem.F_minus), rhs, roles, g_foot=g_foot)


def assemble_residual(problem: TransmissionProblem, scheme: StencilScheme, u: GridField) -> GridField:
    """Nodal residual of the discrete transmission problem; zero iff u is a discrete solution."""
    disc = discretize_problem(problem, u.grid, scheme)
    return GridField(u.grid, disc.residual(u.values))


# -- single-node evaluators ----------------------------------------------------


def _second_difference(u: GridField, node: int, d, allowed_kinds=None) -> float | None:
    grid = u.grid
    i = grid.multi[node]
    fwd, bwd = i + d, i - d
    if np.any(fwd < 0) or np.any(fwd > grid.cells) or np.any(bwd < 0) or np.any(bwd > grid.cells):
        return None
    a = int(grid.flat_index(fwd[None])[0])
    b = int(grid.flat_index(bwd[None])[0])
    if allowed_kinds is not None and (grid.kind[a] not in allowed_kinds or grid.kind[b] not in allowed_kinds):
        return None
    v = u.values
    return (v[a] - 2.0 * v[node] + v[b]) / (grid.h**2 * float(np.dot(d, d)))


def discretize_interior(op: EllipticOperator, scheme: StencilScheme, u: GridField, node: int) -> float:
    """F_h(u) at one interior node, computed directly from the frame formulas.

    Pucci kinds take the extremal frame-wise combination over the frames whose
    neighbors are available; linear kinds use the monotone 9-point splitting.
    """
    grid = u.grid
    kind = grid.kind[node]
    if kind not in (PLUS, MINUS):
        raise GridError(f"node {node} is not an interior node")
    allowed = {kind, INTERFACE, BOUNDARY}
    D = [_second_difference(u, node, d, allowed) for d in scheme.directions]

    def frame_values(lo, hi):
        out = []
        for fr in scheme.frames:
            if any(D[j] is None for j in fr):
                continue
            out.append(sum(lo * max(D[j], 0.0) + hi * min(D[j], 0.0) for j in fr))
        return out

    def linear_value(A):
        c = _linear_coeffs(A, scheme)
        total = 0.0
        for j, cj in enumerate(c):
            if cj == 0.0:
                continue
            if D[j] is None:
                raise SchemeInapplicable(f"direction {scheme.directions[j].tolist()} unavailable at node {node}")
            total += cj * D[j]
        return total

    def value(o, weight=1.0):
        if o.kind == "pucci_minus":
            return weight * min(frame_values(o.lam, o.lam_cap))
        if o.kind == "pucci_plus":
            return weight * max(frame_values(o.lam_cap, o.lam))
        if o.kind == "linear":
            return weight * linear_value(o.matrix)
        if o.kind == "bellman_min":
            return weight * min(linear_value(A) for A in o.members)
        hw = float(o.weight(grid.coords[node][None])[0])
        return value(o.plus, hw) + value(o.minus, 1.0 - hw)

    return float(value(op))


def one_sided_normal_derivatives(u: GridField, node: int, g_val: float = 0.0, order: int = 2):
    """(D_nu^+ u, D_nu^- u) at an interface node.

    The value at the node is corrected by the jump when the node sits on the
    other side of the graph. ``order`` 2 uses 3-point, 3 uses 4-point stencils.
    """
    grid = u.grid
    h = grid.h
    d = grid.ndist[node]
    v = u.values
    u0 = v[node]
    up = u0 + d * g_val if d < 0 else u0
    um = u0 - d * g_val if d > 0 else u0
    if order == 2:
        coefs, denom = (-3.0, 4.0, -1.0), 2.0 * h
    elif order == 3:
        coefs, denom = (-11.0, 18.0, -9.0, 2.0), 6.0 * h
    else:
        raise ValueError("order must be 2 or 3")
    out = []
    for sigma, base in ((1, up), (-1, um)):
        acc = coefs[0] * base
        for s, c in enumerate(coefs[1:], start=1):
            gs = grid.ghost_stencil(node, sigma, s)
            acc += c * float(np.dot(gs.weights, v[gs.idx]))
        out.append(sigma * acc / denom)
    return out[0], out[1]


def discretize_transmission(u: GridField, node: int, g_val: float, iface: InterfaceGraph | None = None) -> float:
    """D_nu^+ u - D_nu^- u - g_val with second order one-sided differences."""
    grid = u.grid
    if grid.kind[node] != INTERFACE:
        raise GridError(f"node {node} is not an interface node")
    if iface is not None and not np.array_equal(iface.coeffs, grid.iface.coeffs):
        raise GridError("interface does not match the grid")
    dp, dm = one_sided_normal_derivatives(u, node, g_val, order=2)
    return dp - dm - g_val
