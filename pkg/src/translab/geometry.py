"""Interface graphs x_n = psi(x') and the computational domain."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from itertools import product

import numpy as np
from numpy.polynomial import polynomial as P

MAX_DEGREE = 4


class GeometryError(ValueError):
    pass


class Region(Enum):
    OMEGA_PLUS = "OmegaPlus"
    OMEGA_MINUS = "OmegaMinus"
    GAMMA = "Gamma"


@dataclass(frozen=True)
class DomainSpec:
    n: int = 2
    shape: str = "unit_square"

    def __post_init__(self):
        if self.n not in (2, 3):
            raise GeometryError(f"dimension must be 2 or 3, got {self.n}")
        if self.shape not in ("unit_square", "unit_ball"):
            raise GeometryError(f"unknown domain shape {self.shape!r}")

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        if self.shape == "unit_square":
            return np.all(np.abs(pts) <= 1.0 + 1e-12, axis=1)
        return np.sum(pts**2, axis=1) <= 1.0 + 1e-12


class InterfaceGraph:
    """Polynomial graph psi over x' = (x_1, ..., x_{n-1}).

    ``coeffs`` is dense by multi-index: for n = 2 a list ``[c0, c1, ...]`` of
    coefficients of x1**k; for n = 3 a nested list ``c[i][j]`` of x1**i x2**j.
    Total degree must not exceed 4.
    """

    def __init__(self, n: int, coeffs=None):
        if n not in (2, 3):
            raise GeometryError(f"dimension must be 2 or 3, got {n}")
        self.n = n
        m = n - 1
        if coeffs is None or (np.ndim(coeffs) == 0 and float(coeffs) == 0.0):
            c = np.zeros((1,) * m)
        else:
            c = np.array(coeffs, dtype=float)
            if c.ndim == 0:
                c = c.reshape((1,) * m)
        if c.ndim != m:
            raise GeometryError(f"psi coefficients for n={n} must be {m}-dimensional, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise GeometryError("psi coefficients must be finite")
        for idx in zip(*np.nonzero(c)):
            if sum(idx) > MAX_DEGREE:
                raise GeometryError(f"psi has total degree > {MAX_DEGREE}")
        self.coeffs = c
        self._grad = [P.polyder(c, axis=i) for i in range(m)]
        self._hess = [[P.polyder(self._grad[i], axis=j) for j in range(m)] for i in range(m)]

    @property
    def is_flat(self) -> bool:
        return not np.any(self.coeffs)

    def _val(self, c, xp):
        xp = np.atleast_2d(np.asarray(xp, dtype=float))
        if self.n == 2:
            return P.polyval(xp[:, 0], c)
        return P.polyval2d(xp[:, 0], xp[:, 1], c)

    def psi(self, x_prime) -> np.ndarray:
        return self._val(self.coeffs, x_prime)

    def gradient(self, x_prime) -> np.ndarray:
        return np.stack([self._val(g, x_prime) for g in self._grad], axis=-1)

    def hessian(self, x_prime) -> np.ndarray:
        m = self.n - 1
        rows = [np.stack([self._val(self._hess[i][j], x_prime) for j in range(m)], axis=-1) for i in range(m)]
        return np.stack(rows, axis=-2)

    def signed_height(self, points) -> np.ndarray:
        """x_n - psi(x'), positive in Omega+."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts[:, -1] - self.psi(pts[:, :-1])

    def normal_distance(self, points) -> np.ndarray:
        """First-order signed distance to the graph along the normal."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        grad = self.gradient(pts[:, :-1])
        return self.signed_height(pts) / np.sqrt(1.0 + np.sum(grad**2, axis=1))

    def describe(self) -> dict:
        return {"n": self.n, "coeffs": self.coeffs.tolist()}


def flat(n: int = 2) -> InterfaceGraph:
    return InterfaceGraph(n)


def normal_at(iface: InterfaceGraph, x_prime) -> np.ndarray:
    """Unit normal (-grad psi, 1)/sqrt(1 + |grad psi|^2), pointing into Omega+."""
    xp = np.atleast_2d(np.asarray(x_prime, dtype=float))
    grad = iface.gradient(xp)
    nu = np.concatenate([-grad, np.ones((xp.shape[0], 1))], axis=1)
    nu /= np.linalg.norm(nu, axis=1, keepdims=True)
    return nu[0] if np.ndim(x_prime) <= 1 else nu


def classify_point(iface: InterfaceGraph, x, tol: float = 0.0) -> Region:
    t = float(iface.signed_height(x)[0])
    if t > tol:
        return Region.OMEGA_PLUS
    if t < -tol:
        return Region.OMEGA_MINUS
    return Region.GAMMA


def _xprime_grid(n: int, grid_pts: int) -> np.ndarray:
    t = np.linspace(-1.0, 1.0, grid_pts)
    return np.array(list(product(t, repeat=n - 1)))


def holder_seminorm(iface: InterfaceGraph, order: int, alpha: float, grid_pts: int = 41) -> float:
    """Discrete [D^order psi]_alpha over pairs of points of a uniform grid on [-1, 1]^(n-1).

    Gradient differences use the Euclidean norm, Hessian differences the
    spectral norm. The result is a lower bound on the continuum seminorm.
    """
    if order not in (1, 2):
        raise GeometryError(f"order must be 1 or 2, got {order}")
    if not 0.0 < alpha <= 1.0:
        raise GeometryError(f"alpha must lie in (0, 1], got {alpha}")
    xp = _xprime_grid(iface.n, grid_pts)
    if order == 1:
        D = iface.gradient(xp)
        diff = np.linalg.norm(D[:, None, :] - D[None, :, :], axis=-1)
    else:
        H = iface.hessian(xp)
        dH = H[:, None] - H[None, :]
        diff = np.max(np.abs(np.linalg.eigvalsh(dH)), axis=-1)
    dist = np.linalg.norm(xp[:, None, :] - xp[None, :, :], axis=-1)
    mask = dist > 0
    return float(np.max(diff[mask] / dist[mask] ** alpha)) if np.any(mask) else 0.0
