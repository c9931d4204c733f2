"""Discrete solvers: Gauss-Seidel relaxation started from barrier subsolutions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import _kernels as K
from .grid import (
    ROLE_FIXED, ROLE_JUMP, ROLE_MINUS, ROLE_PLUS, Discretization, Grid, GridField,
    StencilScheme, TransmissionProblem, discretize, discretize_problem, make_scheme,
)
from .operators import pucci_minus, pucci_plus

ORDERS = ("lexicographic", "red_black")


class SolveError(RuntimeError):
    pass


@dataclass
class SolveParams:
    tolerance: float | None = None  # None: 1e-10 * (1 + |data|_inf)
    max_sweeps: int = 200_000
    sweep_order: str = "lexicographic"
    damping: float = 1.0
    method: str = "auto"  # auto | sweep | direct
    init: str = "barrier"  # barrier | zero | boundary

    def __post_init__(self):
        if self.tolerance is not None and not self.tolerance > 0:
            raise ValueError("solve.tolerance must be > 0")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("solve.damping must lie in (0, 1]")
        if self.sweep_order not in ORDERS:
            raise ValueError(f"solve.order must be one of {ORDERS}")
        if self.method not in ("auto", "sweep", "direct"):
            raise ValueError("solve.method must be auto, sweep or direct")
        if self.init not in ("barrier", "zero", "boundary"):
            raise ValueError("solve.init must be barrier, zero or boundary")
        if self.max_sweeps < 1:
            raise ValueError("solve.max_sweeps must be >= 1")


@dataclass
class SolveReport:
    field: GridField
    converged: bool
    residual_history: list
    sweeps: int
    monotone: bool | None
    tolerance: float
    method: str
    underline_u: GridField | None = None
    overline_u: GridField | None = None
    damping_final: float = 1.0
    residual_nonincreasing: bool = True
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "sweeps": self.sweeps,
            "residual_max": self.residual,
            "tolerance": self.tolerance,
            "method": self.method,
            "monotone": self.monotone,
            "damping_final": self.damping_final,
            "residual_nonincreasing": self.residual_nonincreasing,
            "message": self.message,
        }


def _order(grid: Grid, kind: str) -> np.ndarray:
    idx = np.arange(grid.N, dtype=np.int64)
    if kind == "lexicographic":
        return idx
    color = np.sum(grid.multi, axis=1) % 2
    return np.concatenate([idx[color == 0], idx[color == 1]])


def _kernel_args(disc: Discretization):
    J = disc.jump_matrix.tocsr()
    return (
        disc.roles.astype(np.int64), disc.rhs, disc.nbr_p, disc.nbr_m, disc.shift_p, disc.shift_m,
        disc.dir_scale, disc.term_kind.astype(np.int64), disc.n_alt, disc.alt_p, disc.alt_q,
        disc.alt_ok, disc.term_w, disc.jump_diag, J.indptr.astype(np.int64),
        J.indices.astype(np.int64), J.data, disc.jump_const,
    )


def residual_max(disc: Discretization, u: np.ndarray) -> float:
    return float(np.max(np.abs(K.residual(u, *_kernel_args(disc)))))


def default_tolerance(disc: Discretization) -> float:
    return 1e-10 * (1.0 + disc.data_scale())


def linear_system(disc: Discretization):
    """(A, b) with A u = b equivalent to residual(u) = 0 for linear discretizations."""
    if not disc.is_linear:
        raise SolveError("discretization is not linear")
    N = disc.grid.N
    rows, cols, vals = [], [], []
    b = np.zeros(N)
    inter = np.nonzero(disc.roles <= ROLE_MINUS)[0]
    side = disc.roles[inter].astype(int)
    diag = np.zeros(N)
    const = np.zeros(N)
    for t in range(disc.term_kind.shape[1]):
        w = disc.term_w[inter, t]
        c = disc.alt_p[side, t, 0] * disc.dir_scale[None, :] * w[:, None]  # (K, m)
        for nbr, shift in ((disc.nbr_p, disc.shift_p), (disc.nbr_m, disc.shift_m)):
            nb = nbr[inter]
            ok = (disc.nbr_p[inter] >= 0) & (disc.nbr_m[inter] >= 0) & (c != 0)
            r, j = np.nonzero(ok)
            rows.append(inter[r])
            cols.append(nb[r, j])
            vals.append(c[r, j])
            const[inter] += np.sum(np.where(ok, c * shift[inter], 0.0), axis=1)
        ok = (disc.nbr_p[inter] >= 0) & (disc.nbr_m[inter] >= 0)
        diag[inter] -= 2.0 * np.sum(np.where(ok, c, 0.0), axis=1)
    b[inter] = disc.rhs[inter] - const[inter]
    jn = disc.roles == ROLE_JUMP
    diag[jn] = disc.jump_diag[jn]
    b[jn] = -disc.jump_const[jn]
    fx = disc.roles == ROLE_FIXED
    diag[fx] = 1.0
    b[fx] = disc.rhs[fx]
    A = sp.csr_matrix(
        (np.concatenate(vals) if vals else np.zeros(0),
         (np.concatenate(rows) if rows else np.zeros(0, int), np.concatenate(cols) if cols else np.zeros(0, int))),
        shape=(N, N),
    )
    A = A + disc.jump_matrix + sp.diags(diag)
    return A.tocsr(), b


def solve_discretization(disc: Discretization, params: SolveParams, u0: np.ndarray,
                         track_monotone: bool = False, upper: np.ndarray | None = None) -> SolveReport:
    """Relax ``disc`` from ``u0``; returns a report with the final field."""
    grid = disc.grid
    tol = params.tolerance if params.tolerance is not None else default_tolerance(disc)
    u = np.array(u0, dtype=float)
    fx = disc.roles == ROLE_FIXED
    u[fx] = disc.rhs[fx]
    args = _kernel_args(disc)
    method = params.method
    if method == "auto":
        method = "direct" if disc.is_linear else "sweep"
    if method == "direct":
        A, b = linear_system(disc)
        u = spsolve(A.tocsc(), b)
        r = float(np.max(np.abs(K.residual(u, *args))))
        ok = bool(np.all(np.isfinite(u))) and r <= tol
        return SolveReport(GridField(grid, u), ok, [r], 1, None, tol, "direct",
                           message="" if ok else "direct solve residual above tolerance",
                           extra={"history_sweeps": [1]})

    order = _order(grid, params.sweep_order)
    omega = params.damping
    history = [float(np.max(np.abs(K.residual(u, *args))))]
    marks = [0]
    monotone = True if track_monotone else None
    above = False
    nonincreasing = True
    best = history[0]
    sweeps = 0
    check_every = 1 if track_monotone else 10
    while history[-1] > tol and sweeps < params.max_sweeps:
        prev = u.copy() if track_monotone else None
        K.sweep(u, order, *args, omega)
        sweeps += 1
        if track_monotone:
            scale = 1e-12 * (1.0 + np.max(np.abs(u)))
            if np.any(u < prev - scale):
                monotone = False
            if upper is not None and np.any(u > upper + max(scale, tol)):
                above = True
        if sweeps % check_every == 0 or sweeps == params.max_sweeps:
            r = float(np.max(np.abs(K.residual(u, *args))))
            if not np.isfinite(r):
                break
            if r > history[-1] * (1 + 1e-12):
                nonincreasing = False
                if r > 1e3 * best and omega > 1e-3:
                    omega *= 0.5
            best = min(best, r)
            history.append(r)
            marks.append(sweeps)
    if marks[-1] != sweeps:
        history.append(float(np.max(np.abs(K.residual(u, *args)))))
        marks.append(sweeps)
    ok = history[-1] <= tol
    rep = SolveReport(
        GridField(grid, u), ok, history, sweeps, monotone, tol, "sweep",
        damping_final=omega, residual_nonincreasing=nonincreasing,
        message="" if ok else f"max_sweeps={params.max_sweeps} exceeded (residual {history[-1]:.3e})",
    )
    rep.extra["history_sweeps"] = marks
    if track_monotone and upper is not None:
        rep.extra["exceeded_upper_barrier"] = above
    return rep


# -- barriers ---------------------------------------------------------------


def _sup(values) -> float:
    return float(np.max(np.abs(values))) if np.size(values) else 0.0


def dirichlet_solve(grid: Grid, scheme: StencilScheme, op, rhs_value, boundary: np.ndarray,
                    params: SolveParams) -> SolveReport:
    """op(D^2 psi) = rhs on all non-boundary nodes (interface ignored), psi = boundary on the boundary."""
    roles = np.where(grid.kind == 3, ROLE_FIXED, ROLE_PLUS).astype(np.int8)
    if grid.domain.shape == "unit_ball":
        roles[grid.kind == 4] = ROLE_FIXED
    rhs = np.where(roles == ROLE_FIXED, boundary, rhs_value).astype(float)
    disc = discretize(grid, scheme, (op, op), rhs, roles, whole_domain=True)
    p = SolveParams(params.tolerance, params.max_sweeps, params.sweep_order, params.damping, "auto", "zero")
    start = np.where(roles == ROLE_FIXED, boundary, 0.0)
    rep = solve_discretization(disc, p, start)
    if not rep.converged:
        raise SolveError(f"inner Dirichlet solve did not converge: {rep.message}")
    return rep


def perron_barriers(problem: TransmissionProblem, grid: Grid, params: SolveParams | None = None,
                    scheme: StencilScheme | None = None):
    """(underline_u, overline_u) from Dirichlet problems with shifted boundary data.

    The Dirichlet operators are the Pucci extremal operators; when both sides
    share one linear operator that operator itself is used (it bounds itself
    from both sides), which turns the two inner solves into linear ones.
    """
    params = params or SolveParams()
    scheme = scheme or make_scheme(grid.n, 1)
    X = grid.coords
    Fp, Fm = problem.F_plus, problem.F_minus
    lam, Lam = Fp.lam, Fp.lam_cap
    if Fp.kind == "linear" and Fp.describe() == Fm.describe():
        op_lo = op_hi = Fp
    else:
        op_lo, op_hi = pucci_minus(lam, Lam), pucci_plus(lam, Lam)
    fsup = max(_sup(problem.f_plus(X)), _sup(problem.f_minus(X)))
    gsup = _sup(problem.g_on_interface(X))
    phi = problem.boundary(X)
    xn = np.abs(X[:, -1])
    lo = dirichlet_solve(grid, scheme, op_lo, fsup, phi - 0.5 * gsup * xn, params)
    hi = dirichlet_solve(grid, scheme, op_hi, -fsup, phi + 0.5 * gsup * xn, params)
    under = lo.field.values + 0.5 * gsup * xn
    over = hi.field.values - 0.5 * gsup * xn
    return GridField(grid, under), GridField(grid, over)


def solve(problem: TransmissionProblem, grid: Grid, scheme: StencilScheme | None = None,
          params: SolveParams | None = None, initial: GridField | None = None) -> SolveReport:
    params = params or SolveParams()
    scheme = scheme or make_scheme(grid.n, 1)
    disc = discretize_problem(problem, grid, scheme)
    under = over = None
    track = False
    if initial is not None:
        u0 = initial.values
    elif params.init == "barrier":
        under, over = perron_barriers(problem, grid, params, scheme)
        u0 = under.values
        track = params.damping == 1.0
    elif params.init == "boundary":
        u0 = problem.boundary(grid.coords)
    else:
        u0 = np.zeros(grid.N)
    rep = solve_discretization(disc, params, u0, track_monotone=track,
                               upper=None if over is None else over.values)
    rep.underline_u, rep.overline_u = under, over
    return rep


# -- oracle ------------------------------------------------------------------


def _jacobi_roots(disc: Discretization, u: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Per-node bisection for F_h(center) = f with neighbors frozen (vectorized)."""
    D0 = disc.second_differences(u, nodes, np.zeros(len(nodes)))
    s = D0 / disc.dir_scale[None, :]  # neighbor sums where valid
    spread = np.max(np.abs(s), axis=1) + 1.0
    f = disc.rhs[nodes]
    cmin = np.min(disc.dir_scale) * min(
        disc.alt_p[disc.alt_p > 0].min() if np.any(disc.alt_p > 0) else 1.0,
        disc.alt_q[disc.alt_q > 0].min() if np.any(disc.alt_q > 0) else 1.0,
    )
    lo = -spread - np.abs(f) / cmin - 1.0
    hi = spread + np.abs(f) / cmin + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = disc.operator_values(u, nodes, mid)
        up = val > f
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
        if np.all(hi - lo <= 1e-15 * (1.0 + np.abs(mid))):
            break
    return 0.5 * (lo + hi)


def brute_force_solve(problem: TransmissionProblem, grid: Grid, scheme: StencilScheme | None = None,
                      tol: float = 1e-12, max_iter: int = 1_000_000, damping: float = 0.8) -> GridField:
    """Damped simultaneous Jacobi iteration; order independent; for grids with at most 9 nodes per axis."""
    if grid.cells > 8:
        raise SolveError("brute_force_solve is limited to grids with at most 9 nodes per axis")
    scheme = scheme or make_scheme(grid.n, 1)
    disc = discretize_problem(problem, grid, scheme)
    u = np.where(disc.roles == ROLE_FIXED, disc.rhs, 0.0)
    inter = np.nonzero(disc.roles <= ROLE_MINUS)[0]
    jn = np.nonzero(disc.roles == ROLE_JUMP)[0]
    for it in range(max_iter):
        if np.max(np.abs(disc.residual(u))) <= tol:
            return GridField(grid, u)
        new = u.copy()
        new[inter] = _jacobi_roots(disc, u, inter)
        off = disc.jump_matrix @ u
        new[jn] = -(off[jn] + disc.jump_const[jn]) / disc.jump_diag[jn]
        u = u + damping * (new - u)
    raise SolveError(f"brute_force_solve did not reach {tol} in {max_iter} iterations")
