"""Optimistic action selection over the unit ball.

Because the action set is the unit ball, ``max_x max_theta <x, theta>`` over an
ellipsoid ``C`` equals ``max_{theta in C} ||theta||``, attained with
``x = theta / ||theta||``.  Writing ``theta = c + sqrt(b) W^{-1/2} u`` turns
this into maximizing a convex quadratic over ``||u|| <= 1``, which is solved
exactly in the eigenbasis of ``W`` by a secular equation on the multiplier.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .estimator import ConfidenceEllipsoid

MAX_BISECTIONS = 200
BRACKET_RTOL = 1e-13
# eigenvalues of W within this relative distance of the smallest are one eigenspace
LEAD_RTOL = 1e-10
# leading-space component of the center below this (relative) counts as zero
HARD_CASE_RTOL = 1e-14


@dataclass(frozen=True)
class OptimisticSolution:
    theta_plus: np.ndarray
    x_plus: np.ndarray
    value: float


def _tie_break_direction(basis: np.ndarray) -> np.ndarray:
    """Deterministic unit vector in ``span(basis)``.

    Projects e_1, e_2, ... onto the span and keeps the first nonzero projection,
    signed so that its first nonzero component is positive.
    """
    proj = basis @ basis.T
    for j in range(proj.shape[0]):
        v = proj[:, j]
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            v = v / nv
            first = v[np.flatnonzero(np.abs(v) > 1e-12)[0]]
            return v if first > 0 else -v
    raise NumericalError("empty leading eigenspace")


def _secular(sigma: float, g2: list[float], gaps: list[float]) -> float:
    return sum(gi / ((sigma + gap) * (sigma + gap)) for gi, gap in zip(g2, gaps))


def _bisect(lo: float, hi: float, g2: list[float], gaps: list[float]) -> float:
    """Root of ``secular(sigma) = 1`` in ``[lo, hi]`` (the function is decreasing)."""
    for _ in range(MAX_BISECTIONS):
        if hi - lo <= BRACKET_RTOL * hi:
            return 0.5 * (lo + hi)
        # geometric steps while the bracket spans orders of magnitude
        mid = math.sqrt(lo * hi) if lo > 0 and hi > 4.0 * lo else 0.5 * (lo + hi)
        if _secular(mid, g2, gaps) > 1.0:
            lo = mid
        else:
            hi = mid
    raise NumericalError(f"secular root-find did not converge: bracket [{lo!r}, {hi!r}]")


def solve_optimistic(ellipsoid: ConfidenceEllipsoid) -> OptimisticSolution:
    """Global maximizer of ``||theta||`` over the ellipsoid and the matching action."""
    c = np.asarray(ellipsoid.center, dtype=float)
    W = np.asarray(ellipsoid.weight, dtype=float)
    b = float(ellipsoid.radius)
    d = c.size
    try:
        w, Q = np.linalg.eigh(W)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigendecomposition of the ellipsoid weight failed") from exc
    if not w[0] > 0 or not b > 0:
        raise NumericalError(f"degenerate ellipsoid (min eigenvalue {w[0]!r}, radius {b!r})")

    # semi-axes squared, largest first (eigh sorts w ascending)
    s2 = b / w
    s = np.sqrt(s2)
    c_eig = Q.T @ c
    g = s * c_eig

    smax2 = float(s2[0])
    lead = s2 >= smax2 * (1.0 - LEAD_RTOL)
    gaps = np.where(lead, 0.0, smax2 - s2)
    g_norm = float(np.linalg.norm(g))
    g_lead = float(np.linalg.norm(g[lead]))

    u = np.zeros(d)
    if g_lead <= HARD_CASE_RTOL * (g_norm + smax2):
        # leading component of the center vanishes: possibly the hard case
        rest = ~lead
        psi = float(np.sum(g[rest] ** 2 / gaps[rest] ** 2)) if rest.any() else 0.0
        if psi <= 1.0:
            u[rest] = g[rest] / gaps[rest]
            if g_lead > 0:
                direction = np.where(lead, g, 0.0) / g_lead
            else:
                direction = np.zeros(d)
                direction[lead] = Q[:, lead].T @ _tie_break_direction(Q[:, lead])
            u += math.sqrt(max(0.0, 1.0 - psi)) * direction
        else:
            # each term is at least its sigma=0 value times (gap_min / (sigma + gap_min))^2
            gap_min = float(gaps[rest].min())
            lo = gap_min * (math.sqrt(psi) - 1.0)
            sigma = _bisect(lo, g_norm, (g[rest] ** 2).tolist(), gaps[rest].tolist())
            u[rest] = g[rest] / (sigma + gaps[rest])
    else:
        # at the root, g_lead^2 / sigma^2 <= 1 <= ||g||^2 / sigma^2
        sigma = _bisect(g_lead, g_norm, (g**2).tolist(), gaps.tolist())
        u = g / (sigma + gaps)

    un = np.linalg.norm(u)
    if un > 0:
        u /= un
    theta = Q @ (c_eig + s * u)
    value = float(np.linalg.norm(theta))
    if value > 0:
        x = theta / value
    else:  # unreachable for b > 0
        x = np.zeros(d)
        x[0] = 1.0
    return OptimisticSolution(theta_plus=theta, x_plus=x, value=value)
