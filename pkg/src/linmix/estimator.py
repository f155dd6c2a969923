"""Block-subsampled ridge estimate of the stationary mean and its confidence ellipsoid."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import NumericalError, SpecError

ACTION_NORM_TOL = 1e-9
# closed-set membership; only absorbs rounding in the quadratic form
MEMBERSHIP_RTOL = 1e-12


def block_length(n: int, d: int, lam: float, B: float, a: float, gamma: float) -> int:
    """Spacing ``k`` between the samples that are fed to the estimator.

    ``k = max(1, ceil(log(6 a gamma n^2 / denom) / gamma))`` with
    ``denom = 1 + 4 sqrt(n) B + sqrt(8 d n log(n (1 + n/(lam d))) / lam)``.
    """
    if n < 1:
        raise SpecError(f"horizon must be >= 1, got {n}")
    if min(d, lam, B, a, gamma) <= 0:
        raise SpecError("block_length parameters must be positive")
    denom = 1.0 + 4.0 * math.sqrt(n) * B + math.sqrt(8.0 * d * n * math.log(n * (1.0 + n / (lam * d))) / lam)
    # log(6 a gamma n^2 / denom), split so that a tiny ``a`` cannot underflow
    log_arg = math.log(6.0 * gamma) + math.log(a) + 2.0 * math.log(n) - math.log(denom)
    return max(1, math.ceil(log_arg / gamma))


def confidence_radius(n: int, k: int, d: int, lam: float, B: float, delta: Optional[float] = None) -> float:
    """Squared radius ``b`` of the ellipsoid; ``delta`` defaults to ``1/n``."""
    if delta is None:
        delta = 1.0 / n
    if not 0.0 < delta < 1.0:
        raise SpecError(f"delta must lie in (0, 1), got {delta}")
    if n < 1 or k < 1:
        raise SpecError("n and k must be >= 1")
    root = 2.0 * math.sqrt(lam) * B + math.sqrt(2.0 * math.log(1.0 / delta) + d * math.log1p(n / (k * lam * d)))
    return root * root


@dataclass
class RlsState:
    """Running sums of the regularized least-squares problem."""

    d: int
    lam: float
    V: np.ndarray
    u: np.ndarray
    count: int = 0

    @classmethod
    def empty(cls, d: int, lam: float) -> "RlsState":
        if lam <= 0:
            raise SpecError("regularization lambda must be positive")
        return cls(d=d, lam=float(lam), V=np.zeros((d, d)), u=np.zeros(d))

    def gram(self) -> np.ndarray:
        """``lam I + V``."""
        return self.V + self.lam * np.eye(self.d)


def absorb(state: RlsState, x: np.ndarray, y: float) -> RlsState:
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x) > 1.0 + ACTION_NORM_TOL:
        raise SpecError(f"action norm {np.linalg.norm(x):.12g} exceeds the unit ball")
    state.V += np.outer(x, x)
    state.u += y * x
    state.count += 1
    return state


def estimate(state: RlsState) -> np.ndarray:
    """Solve ``(lam I + V) theta = u`` through a Cholesky factorization."""
    G = state.gram()
    try:
        factor = cho_factor(G, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise NumericalError(f"lam I + V is not positive definite (lam={state.lam})") from exc
    return cho_solve(factor, state.u, check_finite=False)


@dataclass(frozen=True)
class ConfidenceEllipsoid:
    """Closed set ``{theta : (theta - center)^T weight (theta - center) <= radius}``."""

    center: np.ndarray
    weight: np.ndarray
    radius: float

    def distance2(self, theta: np.ndarray) -> float:
        diff = np.asarray(theta, dtype=float) - self.center
        return float(diff @ self.weight @ diff)

    def contains(self, theta: np.ndarray) -> bool:
        return self.distance2(theta) <= self.radius * (1.0 + MEMBERSHIP_RTOL)

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "weight": self.weight.tolist(), "radius": self.radius}

    @classmethod
    def from_dict(cls, data: dict) -> "ConfidenceEllipsoid":
        center = np.asarray(data["center"], dtype=float)
        weight = np.asarray(data["weight"], dtype=float)
        radius = float(data["radius"])
        if weight.shape != (center.size, center.size):
            raise SpecError("weight must be a d x d matrix matching the center")
        if radius <= 0:
            raise SpecError("radius must be positive")
        return cls(center, weight, radius)


def build_ellipsoid(state: RlsState, b: float, B: float) -> ConfidenceEllipsoid:
    """Ellipsoid around the current estimate with weight ``(2B)^2 (lam I + V)``."""
    if not b > 0:
        raise SpecError("ellipsoid radius must be positive")
    zeta2 = (2.0 * B) ** 2
    return ConfidenceEllipsoid(center=estimate(state), weight=zeta2 * state.gram(), radius=float(b))
