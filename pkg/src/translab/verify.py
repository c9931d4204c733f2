"""Executable checks on discrete solutions: ABP, maximum/comparison principles,
oscillation decay, regularity exponents, jump accuracy, viscosity audits, barriers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .envelopes import contact_set, convex_envelope
from .geometry import InterfaceGraph
from .grid import (
    BOUNDARY, INTERFACE, MINUS, OUTSIDE, PLUS, ROLE_FIXED, ROLE_MINUS, ROLE_PLUS, Grid, GridField,
    StencilScheme, TransmissionProblem, discretize, discretize_problem, make_scheme,
    one_sided_normal_derivatives, transmission_roles,
)
from .operators import EllipticOperator, eval_operator, pucci_from_eigs, pucci_minus, sym_eigvals
from .solve import SolveParams, solve, solve_discretization


class HypothesisError(ValueError):
    """Inputs violate the hypotheses of the statement being checked."""


class ResolutionError(ValueError):
    pass


def _ln_norm(values: np.ndarray, h: float, n: int) -> float:
    if values.size == 0:
        return 0.0
    return float((h**n * np.sum(np.abs(values) ** n)) ** (1.0 / n))


def _phys_side(grid: Grid) -> np.ndarray:
    """+1 for nodes in the closure of Omega+, -1 for Omega- (interface nodes by height)."""
    return np.where(grid.height >= 0, 1, -1)


def _f_values(problem: TransmissionProblem, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    X = grid.coords
    return problem.f_plus(X), problem.f_minus(X)


# -- ABP -------------------------------------------------------------------------


@dataclass
class AbpReport:
    lhs: float
    rhs_parts: dict
    data: float
    fitted_C: float
    contact_restricted: dict | None = None
    contact_nodes: int | None = None
    fitted_C_contact: float | None = None

    def rhs(self, C: float, restricted: bool = False) -> float:
        parts = self.contact_restricted if restricted else self.rhs_parts
        return parts["boundary_sup"] + C * (parts["g_max"] + parts["f_minus_Ln"] + parts["f_plus_Ln"])

    def covered(self, C: float, restricted: bool = False, tol: float = 1e-12) -> bool:
        return self.lhs <= self.rhs(C, restricted) + tol

    def as_dict(self) -> dict:
        return {
            "lhs": self.lhs, "rhs_parts": self.rhs_parts, "data": self.data, "fitted_C": self.fitted_C,
            "contact_restricted": self.contact_restricted, "contact_nodes": self.contact_nodes,
            "fitted_C_contact": self.fitted_C_contact,
        }


def _region(grid: Grid, inner_radius: float | None, center=None):
    """(inside nodes, boundary-layer nodes) of the ABP region."""
    active = grid.kind != OUTSIDE
    if inner_radius is None:
        inside = np.nonzero(active)[0]
        bdry = np.nonzero(grid.kind == BOUNDARY)[0]
        return inside, bdry
    c = np.zeros(grid.n) if center is None else np.asarray(center, dtype=float)
    r = np.linalg.norm(grid.coords - c, axis=1)
    tol = 1e-12
    if np.any(np.abs(c) + inner_radius > 1.0 + tol):
        raise ValueError("inner ball must lie inside the domain")
    inside = np.nonzero(active & (r <= inner_radius + tol))[0]
    bdry = np.nonzero(active & (r <= inner_radius + tol) & (r > inner_radius - grid.h - tol))[0]
    return inside, bdry


def _lifted_envelope(grid: Grid, nodes: np.ndarray, values: np.ndarray, pad: float) -> np.ndarray:
    """Convex envelope of ``values`` on ``nodes``, extended by 0 on a box of half-width ``pad``."""
    pts = grid.coords[nodes]
    n = grid.n
    corners = np.array(np.meshgrid(*[[-pad, pad]] * n, indexing="ij")).reshape(n, -1).T
    allp = np.vstack([pts, corners])
    allv = np.concatenate([values, np.zeros(len(corners))])
    return convex_envelope(allv, allp)[: len(nodes)]


def _fit_C(lhs: float, parts: dict) -> float:
    """Smallest C with lhs <= boundary_sup + C * data."""
    excess = lhs - parts["boundary_sup"]
    data = parts["g_max"] + parts["f_minus_Ln"] + parts["f_plus_Ln"]
    if excess <= 1e-12 * (1.0 + abs(lhs)):
        return 0.0
    return excess / data if data > 0 else math.inf


def check_abp(problem: TransmissionProblem, solution: GridField, inner_radius: float | None = None,
              use_contact_set: bool = False, center=None) -> AbpReport:
    """ABP quantities on the whole grid (``inner_radius`` None) or on a ball.

    lhs = sup u_- over the region; rhs parts are the discrete boundary sup of
    u_-, max over interface nodes of g_+, and Riemann-sum L^n norms of f_+ on
    each side. With ``use_contact_set`` (flat interfaces) the f norms are
    restricted to the negative contact set of u + sup_bdry u_- with the convex
    envelope of its negative part extended by zero.
    """
    grid = solution.grid
    u = solution.values
    inside, bdry = _region(grid, inner_radius, center)
    uneg = np.maximum(-u, 0.0)
    lhs = float(np.max(uneg[inside])) if inside.size else 0.0
    bsup = float(np.max(uneg[bdry])) if bdry.size else 0.0
    g_foot = problem.g_on_interface(grid.coords)
    gi = grid.kind[inside] == INTERFACE
    g_max = float(np.max(np.maximum(g_foot[inside][gi], 0.0))) if np.any(gi) else 0.0
    fp, fm = _f_values(problem, grid)
    side = _phys_side(grid)[inside]
    fpp = np.maximum(fp[inside][side > 0], 0.0)
    fmp = np.maximum(fm[inside][side < 0], 0.0)
    parts = {
        "boundary_sup": bsup, "g_max": g_max,
        "f_minus_Ln": _ln_norm(fmp, grid.h, grid.n), "f_plus_Ln": _ln_norm(fpp, grid.h, grid.n),
    }
    data = parts["g_max"] + parts["f_minus_Ln"] + parts["f_plus_Ln"]
    rep = AbpReport(lhs, parts, data, _fit_C(lhs, parts))
    if use_contact_set:
        if not grid.iface.is_flat:
            raise HypothesisError("the contact-set variant needs a flat interface")
        # contact set of u shifted to be >= 0 on the boundary; it contains the
        # contact set of u - max g_+ |x_n| used in the argument
        v = u + bsup
        target = -np.maximum(-v[inside], 0.0)
        reach = float(np.max(np.abs(grid.coords[inside]))) if inside.size else 1.0
        env = _lifted_envelope(grid, inside, target, 2.0 * reach)
        touch = contact_set(target, env)
        cnodes = inside[touch]
        negative = target[touch] < 0
        cnodes = cnodes[negative]
        cside = _phys_side(grid)[cnodes]
        rparts = {
            "boundary_sup": bsup, "g_max": g_max,
            "f_minus_Ln": _ln_norm(np.maximum(fm[cnodes][cside < 0], 0.0), grid.h, grid.n),
            "f_plus_Ln": _ln_norm(np.maximum(fp[cnodes][cside > 0], 0.0), grid.h, grid.n),
        }
        rep.contact_restricted = rparts
        rep.contact_nodes = int(cnodes.size)
        rep.fitted_C_contact = _fit_C(lhs, rparts)
    return rep


# -- maximum and comparison principles ----------------------------------------


@dataclass
class MaxPrincipleReport:
    min_u: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.min_u >= -self.tol


def check_maximum_principle(problem: TransmissionProblem, solution: GridField, tol: float = 1e-8) -> MaxPrincipleReport:
    grid = solution.grid
    X = grid.coords
    fp, fm = _f_values(problem, grid)
    if np.any(fp != 0.0) or np.any(fm != 0.0):
        raise HypothesisError("maximum principle check needs f = 0 on both sides")
    g = problem.g_on_interface(X[grid.kind == INTERFACE])
    if np.any(g > 0.0):
        raise HypothesisError(f"maximum principle check needs g <= 0 (max g = {float(np.max(g)):.3g})")
    phi = problem.boundary(X[grid.kind == BOUNDARY])
    if np.any(phi < 0.0):
        raise HypothesisError(f"maximum principle check needs boundary data >= 0 (min = {float(np.min(phi)):.3g})")
    return MaxPrincipleReport(float(np.min(solution.values[grid.kind != OUTSIDE])), tol)


@dataclass
class ComparisonReport:
    violation: float
    tol: float
    u_sub: GridField
    u_super: GridField
    converged: bool

    @property
    def passed(self) -> bool:
        return self.converged and self.violation <= self.tol


def check_comparison(problem_sub: TransmissionProblem, problem_super: TransmissionProblem, grid: Grid,
                     scheme: StencilScheme | None = None, params: SolveParams | None = None,
                     tol: float | None = None) -> ComparisonReport:
    """Solve both problems and return max(u_sub - u_super); data must be ordered."""
    a, b = problem_sub, problem_super
    if a.F_plus.describe() != b.F_plus.describe() or a.F_minus.describe() != b.F_minus.describe():
        raise HypothesisError("comparison needs the same operators")
    if not np.array_equal(a.iface.coeffs, b.iface.coeffs):
        raise HypothesisError("comparison needs the same interface")
    X = grid.coords
    side = _phys_side(grid)
    inter = (grid.kind == PLUS) | (grid.kind == MINUS)
    fa = np.where(side > 0, a.f_plus(X), a.f_minus(X))
    fb = np.where(side > 0, b.f_plus(X), b.f_minus(X))
    if np.any(fa[inter] < fb[inter]):
        raise HypothesisError("need f_sub >= f_super")
    ifc = grid.kind == INTERFACE
    if np.any(a.g_on_interface(X[ifc]) < b.g_on_interface(X[ifc])):
        raise HypothesisError("need g_sub >= g_super")
    bd = grid.kind == BOUNDARY
    if np.any(a.boundary(X[bd]) > b.boundary(X[bd])):
        raise HypothesisError("need boundary_sub <= boundary_super")
    scheme = scheme or make_scheme(grid.n, 1)
    params = params or SolveParams()
    ra = solve(a, grid, scheme, params)
    rb = solve(b, grid, scheme, params)
    if tol is None:
        tol = 10.0 * max(ra.tolerance, rb.tolerance)
    viol = float(np.max(ra.field.values - rb.field.values))
    return ComparisonReport(viol, tol, ra.field, rb.field, ra.converged and rb.converged)


# -- oscillation decay ------------------------------------------------------------


@dataclass
class OscillationReport:
    osc_inner: float
    osc_outer: float
    data_term: float
    mu_hat: float
    radius: float
    C: float


def measure_oscillation_decay(problem: TransmissionProblem, solution: GridField, center=None,
                              radius: float = 1.0, C: float = 0.0) -> OscillationReport:
    """osc over B_{r/3} versus osc over B_r; the data term is scaled to radius r.

    mu_hat = (osc_inner - C * data_term) / osc_outer with data_term =
    r (|g|_inf + |f^-|_Ln + |f^+|_Ln) over the outer ball.
    """
    grid = solution.grid
    c = np.zeros(grid.n) if center is None else np.asarray(center, dtype=float)
    if 2.0 * radius / 3.0 < 4.0 * grid.h:
        raise ResolutionError(f"inner ball of radius {radius / 3:.3g} is below 4h = {4 * grid.h:.3g} across")
    outer = grid.ball_nodes(c, radius)
    inner = grid.ball_nodes(c, radius / 3.0)
    u = solution.values
    osc_o = float(np.ptp(u[outer]))
    osc_i = float(np.ptp(u[inner]))
    fp, fm = _f_values(problem, grid)
    side = _phys_side(grid)[outer]
    gi = outer[grid.kind[outer] == INTERFACE]
    gsup = float(np.max(np.abs(problem.g_on_interface(grid.coords[gi])))) if gi.size else 0.0
    data = radius * (gsup + _ln_norm(fm[outer][side < 0], grid.h, grid.n) + _ln_norm(fp[outer][side > 0], grid.h, grid.n))
    mu = (osc_i - C * data) / osc_o if osc_o > 0 else 0.0
    return OscillationReport(osc_i, osc_o, data, mu, radius, C)


# -- regularity fits ------------------------------------------------------------


@dataclass
class RegularityFit:
    order: int
    alpha_hat: float
    scales: np.ndarray
    osc_residual: np.ndarray
    coefficients: list
    fit_r2: float
    center: np.ndarray
    fit_tol: float
    resolution_limited: bool
    window: tuple
    slope: float = float("nan")

    def coeffs_at(self, k: int = -1) -> dict:
        return self.coefficients[k]

    def as_dict(self) -> dict:
        def conv(d):
            return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}

        return {
            "order": self.order, "alpha_hat": self.alpha_hat, "slope": self.slope,
            "scales": self.scales.tolist(), "osc_residual": self.osc_residual.tolist(),
            "fit_r2": self.fit_r2, "center": self.center.tolist(), "fit_tol": self.fit_tol,
            "resolution_limited": self.resolution_limited, "window": list(self.window),
            "coefficients": [conv(c) for c in self.coefficients],
        }


def _design(y: np.ndarray, plus: np.ndarray, order: int):
    """Columns for one-sided polynomial fits; returns (matrix, unpack)."""
    N, n = y.shape
    cols = [np.ones(N)]
    names = [("c",)]
    if order >= 1:
        for i in range(n - 1):
            cols.append(y[:, i])
            names.append(("Bt", i))
        cols.append(np.where(plus, y[:, -1], 0.0))
        names.append(("bn", 1))
        cols.append(np.where(plus, 0.0, y[:, -1]))
        names.append(("bn", -1))
    if order >= 2:
        for i, j in combinations_with_replacement(range(n), 2):
            q = y[:, i] * y[:, j]
            # 1/2 y^T A y: diagonal entries carry 1/2, off-diagonals appear twice
            fac = 0.5 if i == j else 1.0
            for s in (1, -1):
                cols.append(fac * np.where(plus == (s == 1), q, 0.0))
                names.append(("A", s, i, j))
    M = np.stack(cols, axis=1)

    def unpack(coef):
        out = {"c": 0.0}
        B = {1: np.zeros(n), -1: np.zeros(n)}
        A = {1: np.zeros((n, n)), -1: np.zeros((n, n))}
        for name, val in zip(names, coef):
            if name[0] == "c":
                out["c"] = float(val)
            elif name[0] == "Bt":
                B[1][name[1]] = val
                B[-1][name[1]] = val
            elif name[0] == "bn":
                B[name[1]][-1] = val
            else:
                _, s, i, j = name
                A[s][i, j] = val
                A[s][j, i] = val
        if order >= 1:
            out["B_plus"], out["B_minus"] = B[1], B[-1]
        if order >= 2:
            out["A_plus"], out["A_minus"] = A[1], A[-1]
        return out

    return M, unpack


def fit_regularity_exponent(solution: GridField, center=None, order: int = 0, scale_window=None,
                            r_max: float | None = None, noise_floor: float | None = None) -> RegularityFit:
    """Fit osc(u - P_r) ~ r^(order + alpha) over dyadic balls centered on the interface.

    P_r is the least-squares polynomial of degree ``order`` on each side
    (shared constant; shared tangential gradient for order >= 1) in local
    coordinates y = (x' - c', x_n - psi(x') - (c_n - psi(c'))).
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    grid = solution.grid
    iface = grid.iface
    c = np.zeros(grid.n) if center is None else np.asarray(center, dtype=float)
    if r_max is None:
        r_max = float(1.0 - np.max(np.abs(c)))
    lo, hi = scale_window if scale_window is not None else (8.0 * grid.h, r_max / 2.0)
    if lo < 4.0 * grid.h:
        raise ResolutionError("scale window must start at >= 4h")
    scales = []
    r = hi
    while r >= lo * (1 - 1e-12):
        scales.append(r)
        r /= 2.0
    if len(scales) < 3:
        raise ResolutionError(f"degenerate regression: only {len(scales)} dyadic scales in [{lo:.3g}, {hi:.3g}]")
    u = solution.values
    X = grid.coords
    y = X - c
    y[:, -1] = iface.signed_height(X) - float(iface.signed_height(c[None])[0])
    plus = iface.signed_height(X) >= 0
    osc = []
    coefs = []
    for r in scales:
        nodes = grid.ball_nodes(c, r)
        M, unpack = _design(y[nodes], plus[nodes], order)
        sol, *_ = np.linalg.lstsq(M, u[nodes], rcond=None)
        res = u[nodes] - M @ sol
        osc.append(float(np.ptp(res)))
        coefs.append(unpack(sol))
    osc = np.array(osc)
    scales = np.array(scales)
    if noise_floor is None:
        noise_floor = 1e-9 * (1.0 + float(np.ptp(u)))
    limited = bool(np.all(osc <= noise_floor))
    if limited:
        alpha, slope, r2 = 1.0, float("nan"), 1.0
    else:
        ok = osc > noise_floor
        if np.sum(ok) < 3:
            alpha, slope, r2, limited = 1.0, float("nan"), 1.0, True
        else:
            lx, ly = np.log(scales[ok]), np.log(osc[ok])
            slope, icpt = np.polyfit(lx, ly, 1)
            pred = slope * lx + icpt
            ss = float(np.sum((ly - ly.mean()) ** 2))
            r2 = 1.0 - float(np.sum((ly - pred) ** 2)) / ss if ss > 0 else 1.0
            alpha = float(slope - order)
    fit_tol = float(osc[-1] / scales[-1] ** order) if order else float(osc[-1])
    return RegularityFit(order, alpha, scales, osc, coefs, float(r2), c, fit_tol, limited, (lo, hi), float(slope))


def fitted_normal_jumps(fit: RegularityFit) -> np.ndarray:
    """(B_k^+ - B_k^-) . e_n at each dyadic scale of an order >= 1 fit."""
    if fit.order < 1:
        raise ValueError("normal jumps need an order >= 1 fit")
    return np.array([float(c["B_plus"][-1] - c["B_minus"][-1]) for c in fit.coefficients])


def jump_limit(fit: RegularityFit) -> float:
    """Limit of the fitted normal jumps as r -> 0.

    Richardson extrapolation of the last two scales assuming an error ~ r^alpha
    with the fitted alpha (clipped to [0.05, 1]).
    """
    J = fitted_normal_jumps(fit)
    if fit.resolution_limited or len(J) < 2:
        return float(J[-1])
    q = 2.0 ** (-float(np.clip(fit.alpha_hat, 0.05, 1.0)))
    return float((J[-1] - q * J[-2]) / (1.0 - q))


# -- normal jump ------------------------------------------------------------------


@dataclass
class JumpReport:
    max_err: float
    nodes: np.ndarray
    errors: np.ndarray


def measure_normal_jump(problem: TransmissionProblem, solution: GridField) -> JumpReport:
    """|D_nu^+ u - D_nu^- u - g| at interface nodes with third order one-sided differences."""
    grid = solution.grid
    nodes = grid.interface_nodes
    g = problem.g_on_interface(grid.coords[nodes])
    errs = np.empty(len(nodes))
    for k, (node, gv) in enumerate(zip(nodes, g)):
        dp, dm = one_sided_normal_derivatives(solution, int(node), float(gv), order=3)
        errs[k] = abs(dp - dm - gv)
    return JumpReport(float(np.max(errs)) if errs.size else 0.0, nodes, errs)


# -- viscosity audit ----------------------------------------------------------------


@dataclass
class Violation:
    node: int
    x: list
    kind: str
    amount: float


def check_viscosity_inequalities(candidate: GridField, problem: TransmissionProblem, tol: float,
                                 side: str = "sub", scheme: StencilScheme | None = None) -> list[Violation]:
    """Nodes where the candidate fails the discrete sub- (or super-) solution inequalities.

    Interior nodes: F_h(u) >= f - tol (sub) or <= f + tol (super). Interface
    nodes pass if the jump inequality holds or if either F^+_h or F^-_h,
    evaluated with symmetric stencils across the interface, satisfies the
    interior inequality.
    """
    if side not in ("sub", "super"):
        raise ValueError("side must be 'sub' or 'super'")
    grid = candidate.grid
    scheme = scheme or make_scheme(grid.n, 1)
    sgn = 1.0 if side == "sub" else -1.0
    u = candidate.values
    disc = discretize_problem(problem, grid, scheme)
    out: list[Violation] = []
    inter = np.nonzero(disc.roles <= ROLE_MINUS)[0]
    gap = sgn * (disc.operator_values(u, inter) - disc.rhs[inter])
    for node, gp in zip(inter, gap):
        if gp < -tol:
            out.append(Violation(int(node), grid.coords[node].tolist(), "interior", float(-gp)))
    ifc = grid.interface_nodes
    if ifc.size:
        jump_gap = sgn * disc.jump_values(u)[ifc]
        X = grid.coords
        f_side = []
        for op, f in ((problem.F_plus, problem.f_plus), (problem.F_minus, problem.f_minus)):
            roles = np.full(grid.N, ROLE_FIXED, dtype=np.int8)
            roles[ifc] = ROLE_PLUS
            whole = discretize(grid, scheme, (op, op), np.zeros(grid.N), roles, whole_domain=True)
            f_side.append(sgn * (whole.operator_values(u, ifc) - f(X[ifc])))
        best = np.maximum(jump_gap, np.maximum(f_side[0], f_side[1]))
        for node, b in zip(ifc, best):
            if b < -tol:
                out.append(Violation(int(node), grid.coords[node].tolist(), "interface", float(-b)))
    return out


# -- barriers -------------------------------------------------------------------


@dataclass
class RadialBarrierReport:
    ok: bool
    margin: float
    discrete_min: float
    tol: float

    @property
    def sign_agrees(self) -> bool:
        if self.margin > 0:
            return self.discrete_min > self.tol
        if self.margin < 0:
            return self.discrete_min < -self.tol
        return abs(self.discrete_min) <= self.tol


def radial_barrier(r: np.ndarray, gamma: float) -> np.ndarray:
    return r ** (-gamma) - (2.0 / 3.0) ** (-gamma)


def _normalized_pucci_radial(gamma, lam, lam_cap, n, pts, step):
    """M^-(D^2 phi) r^(gamma+2)/gamma with D^2 phi from centered differences of the analytic phi."""
    def phi(p):
        return radial_barrier(np.linalg.norm(p, axis=-1), gamma)

    eye = np.eye(n) * step
    f0 = phi(pts)
    H = np.empty((len(pts), n, n))
    for i in range(n):
        H[:, i, i] = (phi(pts + eye[i]) - 2 * f0 + phi(pts - eye[i])) / step**2
        for j in range(i + 1, n):
            v = (phi(pts + eye[i] + eye[j]) - phi(pts + eye[i] - eye[j])
                 - phi(pts - eye[i] + eye[j]) + phi(pts - eye[i] - eye[j])) / (4 * step**2)
            H[:, i, j] = H[:, j, i] = v
    e = np.linalg.eigvalsh(H)
    vals = lam * np.maximum(e, 0.0).sum(axis=1) + lam_cap * np.minimum(e, 0.0).sum(axis=1)
    r = np.linalg.norm(pts, axis=1)
    return vals * r ** (gamma + 2) / gamma


def validate_radial_barrier(gamma: float, lam: float, lam_cap: float, n: int, cells: int | None = None,
                            annulus=None) -> RadialBarrierReport:
    """Analytic margin lam (gamma + 1) - Lam (n - 1) against the discrete annulus minimum.

    The discrete value is M^- of the centered-difference Hessian of phi, scaled
    by r^(gamma+2)/gamma so that it equals the margin in the continuum. The
    O(h^2) consistency error at step h is bounded by |N_h - N_2h| (three times
    its asymptotic size).
    """
    if min(gamma, lam, lam_cap) <= 0 or n not in (2, 3):
        raise ValueError("need positive gamma, lambda, lambda_cap and n in {2, 3}")
    margin = lam * (gamma + 1.0) - lam_cap * (n - 1.0)
    r_in, r_out = annulus if annulus is not None else ((0.25, 0.75) if n == 2 else (0.5, 0.95))
    if cells is None:
        cells = 256 if n == 2 else 64
    h = 2.0 * r_out / cells
    axis = np.arange(-cells // 2, cells // 2 + 1) * h
    pts = np.array(np.meshgrid(*[axis] * n, indexing="ij")).reshape(n, -1).T
    r = np.linalg.norm(pts, axis=1)
    pts = pts[(r >= r_in) & (r <= r_out)]
    fine = _normalized_pucci_radial(gamma, lam, lam_cap, n, pts, h)
    coarse = _normalized_pucci_radial(gamma, lam, lam_cap, n, pts, 2 * h)
    tol = float(np.max(np.abs(fine - coarse))) + 1e-9
    return RadialBarrierReport(margin > 0, float(margin), float(np.min(fine)), tol)


@dataclass
class InterfaceBarrierReport:
    w: GridField
    c_plus_hat: float
    c_minus_hat: float
    converged: bool


def barrier_boundary_data(points: np.ndarray) -> np.ndarray:
    """0 for |x'| <= 1/2, linear ramp to 1 at |x'| = 3/4, 1 beyond."""
    rp = np.linalg.norm(points[:, :-1], axis=1)
    return np.clip((rp - 0.5) / 0.25, 0.0, 1.0)


def validate_interface_barrier(grid: Grid, lam: float = 1.0, lam_cap: float = 1.0,
                               scheme: StencilScheme | None = None, params: SolveParams | None = None,
                               measure_radius: float = 0.25) -> InterfaceBarrierReport:
    """M^-(D^2 w) = 0 on each side, w = ramp data on the interface, w = 1 on the outer boundary."""
    scheme = scheme or make_scheme(grid.n, 1)
    params = params or SolveParams(init="zero")
    roles = transmission_roles(grid)
    roles[grid.kind == INTERFACE] = ROLE_FIXED
    X = grid.coords
    rhs = np.zeros(grid.N)
    rhs[grid.kind == INTERFACE] = barrier_boundary_data(X[grid.kind == INTERFACE])
    rhs[grid.kind == BOUNDARY] = 1.0
    op = pucci_minus(lam, lam_cap)
    disc = discretize(grid, scheme, (op, op), rhs, roles)
    rep = solve_discretization(disc, params, np.where(roles == ROLE_FIXED, rhs, 0.0))
    w = rep.field
    sel = grid.interface_nodes[np.linalg.norm(X[grid.interface_nodes, :-1], axis=1) <= measure_radius + 1e-12]
    dps, dms = [], []
    for node in sel:
        dp, dm = one_sided_normal_derivatives(w, int(node), 0.0, order=2)
        dps.append(dp)
        dms.append(dm)
    return InterfaceBarrierReport(w, float(np.min(dps)), float(np.max(dms)), rep.converged)


# -- C^{2,alpha} relations ---------------------------------------------------------


def frame_operator_value(op: EllipticOperator, scheme: StencilScheme, A: np.ndarray) -> float:
    """The scheme's operator applied to the quadratic 1/2 x^T A x (frame-restricted extremum)."""
    from .grid import _terms

    dirs = scheme.directions.astype(float)
    D = np.einsum("mi,ij,mj->m", dirs, A, dirs) / np.sum(dirs**2, axis=1)
    total = 0.0
    terms = _terms(op, scheme)
    if op.kind == "blend":
        raise ValueError("frame_operator_value does not support blends")
    for kind, _, p, q in terms:
        vals = p @ np.maximum(D, 0.0) + q @ np.minimum(D, 0.0)
        total += float(np.min(vals) if kind == 0 else np.max(vals))
    return total


@dataclass
class C2Report:
    residuals: dict
    tolerances: dict

    @property
    def max_ratio(self) -> float:
        return float(max(self.residuals[k] / self.tolerances[k] for k in self.residuals))

    @property
    def passed(self) -> bool:
        return all(self.residuals[k] <= self.tolerances[k] for k in self.residuals)


def _gradient(fn, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    n = len(x)
    out = np.zeros(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        out[i] = (fn((x + e)[None])[0] - fn((x - e)[None])[0]) / (2 * step)
    return out


def check_c2_matrix_relations(fit: RegularityFit, problem: TransmissionProblem, op: EllipticOperator | None = None,
                              tol: float | None = None, scheme: StencilScheme | None = None,
                              scale: int = -1) -> C2Report:
    """Relations between the one-sided quadratic coefficients at a flat interface point.

    tangential blocks of A^+ and A^- agree; (A^+)_{jn} - (A^-)_{jn} = d_j g;
    normal slopes differ by g; F^+(A^+) = f^+ and F^-(A^-) = f^- at the center.
    An explicit ``op`` replaces both side operators. With ``scheme`` the
    operators are the scheme's frame-restricted versions.
    """
    if fit.order != 2:
        raise ValueError("C^{2,alpha} relations need an order-2 fit")
    if not problem.iface.is_flat:
        raise HypothesisError("matrix relations are checked for flat interfaces")
    ops = (op, op) if op is not None else (problem.F_plus, problem.F_minus)
    if not all(o.is_concave for o in ops):
        raise HypothesisError("matrix relations are checked for concave operators")
    c = fit.center
    gfun = problem.g_on_interface
    g0 = float(gfun(c[None])[0])
    gg = _gradient(gfun, c)
    fp = float(problem.f_plus(c[None])[0])
    fm = float(problem.f_minus(c[None])[0])
    def ev(o, A):
        return frame_operator_value(o, scheme, A) if scheme is not None else eval_operator(o, A)

    def gaps(k):
        co = fit.coefficients[k]
        Ap, Am, Bp, Bm = co["A_plus"], co["A_minus"], co["B_plus"], co["B_minus"]
        n = len(Bp)
        t = n - 1
        return {
            "tangential": (Ap[:t, :t] - Am[:t, :t]).reshape(-1),
            "mixed": Ap[:t, t] - Am[:t, t] - gg[:t],
            "normal_jump": np.array([Bp[-1] - Bm[-1] - g0]),
            "F_plus": np.array([ev(ops[0], Ap) - fp]),
            "F_minus": np.array([ev(ops[1], Am) - fm]),
        }

    k = scale % len(fit.scales)
    cur = gaps(k)
    res = {key: float(np.max(np.abs(v))) if v.size else 0.0 for key, v in cur.items()}
    if tol is not None:
        tols = {key: float(tol) for key in res}
    else:
        # gradient-level relations scale like osc / r, Hessian-level ones like osc / r^2;
        # the decrement from the previous scale bounds the remaining bias of a
        # sequence converging at least like 2^-k
        r = float(fit.scales[k])
        osc = float(fit.osc_residual[k])
        h2 = osc / r**2
        n = len(fit.center)
        tols = {"tangential": h2, "mixed": h2, "normal_jump": osc / r,
                "F_plus": n * ops[0].lam_cap * h2, "F_minus": n * ops[1].lam_cap * h2}
        if k > 0:
            prev = gaps(k - 1)
            for key in tols:
                if cur[key].size:
                    tols[key] += float(np.max(np.abs(cur[key] - prev[key])))
    return C2Report(res, tols)
