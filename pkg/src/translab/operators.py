"""Uniformly elliptic operators F(M) on symmetric matrices.

Supported kinds: ``linear`` (tr(A M)), ``pucci_plus``, ``pucci_minus``,
``bellman_min`` (minimum of linear members) and ``blend`` (a point-dependent
convex combination h(x) F+(M) + (1 - h(x)) F-(M)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .expr import as_field

KINDS = ("linear", "pucci_plus", "pucci_minus", "bellman_min", "blend")


class InvalidInput(ValueError):
    pass


def _sym(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] not in (1, 2, 3):
        raise InvalidInput(f"expected a 1x1, 2x2 or 3x3 matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInput("matrix has non-finite entries")
    return 0.5 * (M + M.T)


def sym_eigvals(M) -> np.ndarray:
    """Eigenvalues (ascending) of a symmetric matrix of size <= 3; closed form up to 2x2."""
    M = _sym(M)
    n = M.shape[0]
    if n == 1:
        return np.array([M[0, 0]])
    if n == 2:
        a, b, c = M[0, 0], M[0, 1], M[1, 1]
        mid = 0.5 * (a + c)
        rad = math.hypot(0.5 * (a - c), b)
        return np.array([mid - rad, mid + rad])
    # the trigonometric cubic formula loses sqrt(eps) accuracy at repeated eigenvalues
    return np.linalg.eigvalsh(M)


def spectral_norm(M) -> float:
    return float(np.max(np.abs(sym_eigvals(M))))


@dataclass
class EllipticOperator:
    kind: str
    lam: float
    lam_cap: float
    matrix: np.ndarray | None = None
    members: list[np.ndarray] = field(default_factory=list)
    plus: "EllipticOperator | None" = None
    minus: "EllipticOperator | None" = None
    weight: Callable | None = None
    weight_source: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInput(f"unknown operator kind {self.kind!r}; expected one of {KINDS}")
        self.lam = float(self.lam)
        self.lam_cap = float(self.lam_cap)
        if not (self.lam > 0 and self.lam_cap >= self.lam):
            raise InvalidInput(f"need 0 < lambda <= lambda_cap, got ({self.lam}, {self.lam_cap})")
        if self.kind == "linear":
            if self.matrix is None:
                raise InvalidInput("linear operator needs a matrix")
            self.matrix = _sym(self.matrix)
        elif self.kind == "bellman_min":
            if not self.members:
                raise InvalidInput("bellman_min needs at least one member matrix")
            self.members = [_sym(A) for A in self.members]
            if len({A.shape for A in self.members}) != 1:
                raise InvalidInput("bellman_min members must share a dimension")
        elif self.kind == "blend":
            if self.plus is None or self.minus is None or self.weight is None:
                raise InvalidInput("blend needs plus, minus and weight")
            for sub in (self.plus, self.minus):
                if sub.kind == "blend":
                    raise InvalidInput("nested blends are not supported")
                if (sub.lam, sub.lam_cap) != (self.lam, self.lam_cap):
                    raise InvalidInput("blend members must share (lambda, lambda_cap)")

    @property
    def dim(self) -> int | None:
        if self.kind == "linear":
            return self.matrix.shape[0]
        if self.kind == "bellman_min":
            return self.members[0].shape[0]
        if self.kind == "blend":
            return self.plus.dim or self.minus.dim
        return None

    @property
    def is_concave(self) -> bool:
        return self.kind in ("linear", "pucci_minus", "bellman_min")

    def describe(self) -> dict:
        out = {"kind": self.kind, "lambda": self.lam, "lambda_cap": self.lam_cap}
        if self.kind == "linear":
            out["matrix"] = self.matrix.tolist()
        elif self.kind == "bellman_min":
            out["members"] = [A.tolist() for A in self.members]
        elif self.kind == "blend":
            out["plus"] = self.plus.describe()
            out["minus"] = self.minus.describe()
            out["weight"] = self.weight_source
        return out


def linear(A, lam: float | None = None, lam_cap: float | None = None) -> EllipticOperator:
    A = _sym(A)
    ev = sym_eigvals(A)
    lam = float(ev[0]) if lam is None else lam
    lam_cap = float(ev[-1]) if lam_cap is None else lam_cap
    return EllipticOperator("linear", lam, lam_cap, matrix=A)


def laplacian(n: int = 2) -> EllipticOperator:
    return linear(np.eye(n), 1.0, 1.0)


def pucci_minus(lam: float, lam_cap: float) -> EllipticOperator:
    return EllipticOperator("pucci_minus", lam, lam_cap)


def pucci_plus(lam: float, lam_cap: float) -> EllipticOperator:
    return EllipticOperator("pucci_plus", lam, lam_cap)


def bellman_min(members: Sequence, lam: float, lam_cap: float) -> EllipticOperator:
    return EllipticOperator("bellman_min", lam, lam_cap, members=list(members))


def blend(F_plus: EllipticOperator, F_minus: EllipticOperator, weight) -> EllipticOperator:
    """h(x) F+(M) + (1 - h(x)) F-(M); ``weight`` is an expression, number or callable."""
    source = weight if isinstance(weight, str) else None
    return EllipticOperator(
        "blend", F_plus.lam, F_plus.lam_cap, plus=F_plus, minus=F_minus,
        weight=as_field(weight), weight_source=source,
    )


def pucci_from_eigs(ev, lam: float, lam_cap: float, sign: int) -> float:
    pos = float(np.sum(np.clip(ev, 0.0, None)))
    neg = float(-np.sum(np.clip(ev, None, 0.0)))
    if sign > 0:
        return lam_cap * pos - lam * neg
    return lam * pos - lam_cap * neg


def blend_weight(op: EllipticOperator, x) -> float:
    if x is None:
        raise InvalidInput("blend operators need an evaluation point x")
    if isinstance(x, (int, float)):
        h = float(x)
    else:
        h = float(op.weight(np.atleast_2d(np.asarray(x, dtype=float)))[0])
    if not 0.0 <= h <= 1.0:
        raise InvalidInput(f"blend weight {h} outside [0, 1]")
    return h


def eval_operator(op: EllipticOperator, M, x=None) -> float:
    """Evaluate F(M). For blends ``x`` is the point (or directly the weight)."""
    M = _sym(M)
    if op.dim is not None and op.dim != M.shape[0]:
        raise InvalidInput(f"operator dimension {op.dim} does not match matrix size {M.shape[0]}")
    if op.kind == "linear":
        return float(np.sum(op.matrix * M))
    if op.kind in ("pucci_plus", "pucci_minus"):
        sign = 1 if op.kind == "pucci_plus" else -1
        return pucci_from_eigs(sym_eigvals(M), op.lam, op.lam_cap, sign)
    if op.kind == "bellman_min":
        return float(min(np.sum(A * M) for A in op.members))
    h = blend_weight(op, x)
    return h * eval_operator(op.plus, M) + (1.0 - h) * eval_operator(op.minus, M)


# -- sampling ---------------------------------------------------------------


def deterministic_corpus(n: int) -> list[np.ndarray]:
    """Fixed matrices always included in sampled checks."""
    mats = [np.eye(n), -np.eye(n)]
    for i in range(n):
        E = np.zeros((n, n))
        E[i, i] = 1.0
        mats.extend([E, -E])
    D = np.eye(n)
    D[-1, -1] = -1.0
    mats.extend([D, -D])
    v = np.ones(n) / math.sqrt(n)
    mats.append(np.outer(v, v))
    if n >= 2:
        S = np.zeros((n, n))
        S[0, 1] = S[1, 0] = 1.0
        mats.append(S)
    return mats


def random_sym(rng: np.random.Generator, n: int) -> np.ndarray:
    B = rng.uniform(-1.0, 1.0, size=(n, n))
    return np.triu(B) + np.triu(B, 1).T


def random_psd(rng: np.random.Generator, n: int) -> np.ndarray:
    B = rng.uniform(-1.0, 1.0, size=(n, n))
    rank = rng.integers(1, n + 1)
    B[:, rank:] = 0.0
    return B @ B.T


def _op_dim(op: EllipticOperator, n: int | None) -> int:
    d = op.dim
    if d is not None:
        return d
    return 2 if n is None else n


@dataclass
class EllipticityReport:
    trials: int
    tol: float
    norm: str = "trace"
    violations: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_uniform_ellipticity(op: EllipticOperator, trials: int = 1000, tol: float = 1e-12,
                              seed: int = 0, n: int | None = None, x=None) -> EllipticityReport:
    """Sample pairs (M, N >= 0) and report violations of
    lam*|N| <= F(M+N) - F(M) <= Lam*|N|, with |N| the trace norm of N.
    """
    if trials < 1:
        raise InvalidInput("trials must be >= 1")
    n = _op_dim(op, n)
    rng = np.random.default_rng(seed)
    report = EllipticityReport(trials=trials, tol=tol)
    corpus = deterministic_corpus(n)
    psd_corpus = [np.eye(n)] + [np.outer(e, e) for e in np.eye(n)]
    pairs = [(M, N) for M in corpus[:4] for N in psd_corpus]
    for _ in range(trials):
        pairs.append((random_sym(rng, n), random_psd(rng, n)))
    for M, N in pairs:
        if op.kind == "blend" and x is None:
            xp = float(rng.uniform(0.0, 1.0))
        else:
            xp = x
        diff = eval_operator(op, M + N, xp) - eval_operator(op, M, xp)
        size = float(np.trace(N))
        lo, hi = op.lam * size, op.lam_cap * size
        if diff < lo - tol or diff > hi + tol:
            report.violations.append(
                {"M": M.tolist(), "N": N.tolist(), "difference": diff, "lower": lo, "upper": hi}
            )
    return report


@dataclass
class OperatorDistance:
    theta_hat: float
    samples_used: int
    norm: str = "spectral"
    argmax: list | None = None


def operator_distance(F_plus: EllipticOperator, F_minus: EllipticOperator, trials: int = 1000,
                      seed: int = 0, n: int | None = None, x=None) -> OperatorDistance:
    """Lower estimate of sup_{M != 0} |F+(M) - F-(M)| / |M| (spectral norm)."""
    if (F_plus.lam, F_plus.lam_cap) != (F_minus.lam, F_minus.lam_cap):
        raise InvalidInput("operators must share (lambda, lambda_cap)")
    n = _op_dim(F_plus, n if F_minus.dim is None else F_minus.dim)
    rng = np.random.default_rng(seed)
    mats = deterministic_corpus(n) + [random_sym(rng, n) for _ in range(trials)]
    best, arg = 0.0, None
    for M in mats:
        norm = spectral_norm(M)
        if norm == 0.0:
            continue
        ratio = abs(eval_operator(F_plus, M, x) - eval_operator(F_minus, M, x)) / norm
        if ratio > best:
            best, arg = ratio, M.tolist()
    return OperatorDistance(theta_hat=best, samples_used=len(mats), argmax=arg)


def solve_normal_entry(op: EllipticOperator, A, target: float = 0.0, x=None) -> np.ndarray:
    """Return a copy of A with A[n-1, n-1] chosen so that F(A) = target.

    F is strictly increasing in the last diagonal entry (slope in [lam, Lam]),
    so a bracketed bisection converges.
    """
    A = _sym(A).copy()
    n = A.shape[0]

    def resid(t):
        B = A.copy()
        B[n - 1, n - 1] = t
        return eval_operator(op, B, x) - target

    span = 1.0 + np.abs(A).sum() + abs(target)
    lo, hi = -span / op.lam, span / op.lam
    while resid(lo) > 0:
        lo *= 2
    while resid(hi) < 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if resid(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * (1.0 + abs(mid)):
            break
    A[n - 1, n - 1] = 0.5 * (lo + hi)
    return A
