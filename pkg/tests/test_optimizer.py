import math

import numpy as np
import pytest
from scipy.stats import special_ortho_group

from linmix.estimator import ConfidenceEllipsoid
from linmix.optimizer import solve_optimistic
from oracles import boundary_grid_max, random_ellipsoid


def check_invariants(ell, sol):
    assert ell.distance2(sol.theta_plus) <= ell.radius * (1 + 1e-8)
    assert abs(ell.distance2(sol.theta_plus) - ell.radius) <= 1e-8 * ell.radius
    assert abs(sol.value - np.linalg.norm(sol.theta_plus)) <= 1e-10
    assert abs(np.linalg.norm(sol.x_plus) - 1.0) <= 1e-12
    assert abs(sol.x_plus @ sol.theta_plus - sol.value) <= 1e-10 * (1 + sol.value)


@pytest.mark.parametrize("d", [1, 2, 4])
def test_sphere(d):
    rng = np.random.default_rng(d)
    c = rng.normal(size=d)
    w, b = 3.0, 2.0
    ell = ConfidenceEllipsoid(c, w * np.eye(d), b)
    sol = solve_optimistic(ell)
    r = math.sqrt(b / w)
    assert abs(sol.value - (np.linalg.norm(c) + r)) <= 1e-12
    np.testing.assert_allclose(sol.theta_plus, c * (1 + r / np.linalg.norm(c)), atol=1e-12)
    check_invariants(ell, sol)


def test_zero_center_picks_first_axis():
    ell = ConfidenceEllipsoid(np.zeros(2), np.diag([1.0, 2.0]), 4.0)
    sol = solve_optimistic(ell)
    assert abs(sol.value - 2.0) <= 1e-12
    np.testing.assert_allclose(sol.theta_plus, [2.0, 0.0], atol=1e-12)
    # the tie-break is deterministic, including a fully degenerate ball
    ball = solve_optimistic(ConfidenceEllipsoid(np.zeros(3), 2.0 * np.eye(3), 8.0))
    np.testing.assert_allclose(ball.x_plus, [1.0, 0.0, 0.0], atol=1e-12)


def test_zero_center_rotated_leading_axis():
    R = special_ortho_group.rvs(2, random_state=4)
    W = R @ np.diag([0.5, 3.0]) @ R.T
    sol = solve_optimistic(ConfidenceEllipsoid(np.zeros(2), W, 1.0))
    lead = R[:, 0] if R[0, 0] > 0 else -R[:, 0]
    np.testing.assert_allclose(sol.x_plus, lead, atol=1e-10)
    assert abs(sol.value - math.sqrt(2.0)) <= 1e-12


def test_hard_case_center_off_leading_axis():
    # center along the short axis only: the solution leaves the center's line
    W = np.diag([1.0, 4.0])
    ell = ConfidenceEllipsoid(np.array([0.0, 0.1]), W, 1.0)
    sol = solve_optimistic(ell)
    check_invariants(ell, sol)
    assert sol.theta_plus[0] > 0.9
    assert abs(sol.value - boundary_grid_max(ell.center, W, 1.0)) <= 1e-9


def test_near_hard_case_is_continuous():
    W = np.diag([1.0, 4.0])
    base = solve_optimistic(ConfidenceEllipsoid(np.array([0.0, 0.1]), W, 1.0)).value
    for tiny in (1e-16, 1e-12, 1e-8):
        value = solve_optimistic(ConfidenceEllipsoid(np.array([tiny, 0.1]), W, 1.0)).value
        assert abs(value - base) <= 1e-7


@pytest.mark.parametrize("d,count", [(2, 30), (3, 10)])
def test_grid_oracle(d, count):
    rng = np.random.default_rng(100 + d)
    for _ in range(count):
        c, W, b = random_ellipsoid(rng, d)
        ell = ConfidenceEllipsoid(c, W, b)
        sol = solve_optimistic(ell)
        check_invariants(ell, sol)
        assert abs(sol.value - boundary_grid_max(c, W, b, points=10**6 if d == 2 else 2 * 10**5)) <= 1e-5


def test_value_dominates_feasible_points():
    rng = np.random.default_rng(7)
    for d in (2, 3, 5):
        for _ in range(20):
            c, W, b = random_ellipsoid(rng, d)
            ell = ConfidenceEllipsoid(c, W, b)
            sol = solve_optimistic(ell)
            assert sol.value >= np.linalg.norm(c) - 1e-12
            w, Q = np.linalg.eigh(W)
            u = rng.normal(size=(1000, d))
            u *= rng.uniform(0, 1, size=(1000, 1)) ** (1 / d) / np.linalg.norm(u, axis=1, keepdims=True)
            feasible = c + math.sqrt(b) * (u @ (Q / np.sqrt(w)).T)
            assert np.all(np.linalg.norm(feasible, axis=1) <= sol.value + 1e-12)


def test_rotation_equivariance():
    rng = np.random.default_rng(9)
    for d in (2, 3, 4):
        for seed in range(10):
            c, W, b = random_ellipsoid(rng, d)
            if np.linalg.norm(c) == 0:
                continue  # the tie-break is not rotation-equivariant
            R = special_ortho_group.rvs(d, random_state=seed)
            sol = solve_optimistic(ConfidenceEllipsoid(c, W, b))
            rot = solve_optimistic(ConfidenceEllipsoid(R @ c, R @ W @ R.T, b))
            assert abs(rot.value - sol.value) <= 1e-9
            np.testing.assert_allclose(rot.theta_plus, R @ sol.theta_plus, atol=1e-9)


def test_tiny_and_huge_scales():
    for scale in (1e-6, 1e6):
        ell = ConfidenceEllipsoid(np.array([0.3, -0.2]) * scale, np.diag([2.0, 9.0]) / scale**2, 1.5)
        sol = solve_optimistic(ell)
        check_invariants(ell, sol)
        assert abs(sol.value - boundary_grid_max(ell.center, ell.weight, 1.5)) <= 1e-9 * scale
