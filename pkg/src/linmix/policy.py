"""LinMix-UCB (finite and doubling-trick horizons) plus comparison policies.

The parameter sequence is exogenous (actions never influence ``theta_t``), and
within a block the played action is fixed, so every block is simulated as one
optimistic solve followed by a batch of payoffs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import SpecError
from .estimator import ConfidenceEllipsoid, RlsState, absorb, block_length, build_ellipsoid, confidence_radius
from .optimizer import solve_optimistic
from .process import Environment

LINMIX_FINITE = "LinMixFinite"
LINMIX_INFINITE = "LinMixInfinite"
FIXED_ORACLE = "FixedOracle"
EVERY_STEP_UCB = "EveryStepUcb"
POLICIES = (LINMIX_FINITE, LINMIX_INFINITE, FIXED_ORACLE, EVERY_STEP_UCB)


@dataclass
class PolicyConfig:
    lam: float = 1.0
    a: float = 1.0
    gamma: float = 1.0
    B: float = 1.0
    delta: Optional[float] = None
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        if min(self.lam, self.a, self.gamma, self.B) <= 0:
            raise SpecError("lambda, a, gamma and B must be positive")
        if self.delta is not None and not 0.0 < self.delta < 1.0:
            raise SpecError(f"delta must lie in (0, 1), got {self.delta}")
        if self.x0 is not None:
            self.x0 = np.asarray(self.x0, dtype=float)
            if abs(np.linalg.norm(self.x0) - 1.0) > 1e-12:
                raise SpecError("x0 must be a unit vector")

    def initial_action(self, d: int) -> np.ndarray:
        if self.x0 is None:
            x = np.zeros(d)
            x[0] = 1.0
            return x
        if self.x0.size != d:
            raise SpecError(f"x0 has dimension {self.x0.size}, process has {d}")
        return self.x0.copy()

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "a": self.a,
            "gamma": self.gamma,
            "B": self.B,
            "delta": self.delta,
            "x0": None if self.x0 is None else self.x0.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyConfig":
        return cls(
            lam=float(data.get("lambda", 1.0)),
            a=float(data.get("a", 1.0)),
            gamma=float(data.get("gamma", 1.0)),
            B=float(data.get("B", 1.0)),
            delta=data.get("delta"),
            x0=data.get("x0"),
        )


class EllipsoidRecord(NamedTuple):
    round: int
    m: int
    t_built: int
    newest_sample: int
    ellipsoid: ConfidenceEllipsoid
    covers: Optional[bool]


class BlockRecord(NamedTuple):
    """Steps ``t_start..t_end`` played with one action.

    ``ellipsoid`` indexes ``Trajectory.ellipsoid_log`` (None for x0 blocks).
    """

    round: int
    m: int
    t_start: int
    t_end: int
    ellipsoid: Optional[int]


class Round(NamedTuple):
    index: int
    horizon: int
    t_start: int
    t_end: int
    block_length: int


@dataclass
class Trajectory:
    policy: str
    actions: np.ndarray
    payoffs: np.ndarray
    block_length: Optional[int]
    ellipsoid_log: Optional[list[EllipsoidRecord]]
    blocks: list[BlockRecord] = field(default_factory=list)
    absorbed: list[int] = field(default_factory=list)
    schedule: list[Round] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.payoffs.size

    def step_records(self):
        """Yield ``(t, m, l, action, payoff)`` for every step, ``l`` counted from 1."""
        for blk in self.blocks:
            for t in range(blk.t_start, blk.t_end + 1):
                yield t, blk.m, t - blk.t_start + 1, self.actions[t - 1], float(self.payoffs[t - 1])


class _Recorder:
    def __init__(self, n: int, d: int):
        self.actions = np.empty((n, d))
        self.payoffs = np.empty(n)
        self.t = 0
        self.ellipsoids: list[EllipsoidRecord] = []
        self.blocks: list[BlockRecord] = []
        self.absorbed: list[int] = []
        self.schedule: list[Round] = []

    def play(self, env: Environment, x: np.ndarray, count: int, round_index: int, m: int, used) -> np.ndarray:
        self.blocks.append(BlockRecord(round_index, m, self.t + 1, self.t + count, used))
        y = env.draw(count) @ x
        self.actions[self.t : self.t + count] = x
        self.payoffs[self.t : self.t + count] = y
        self.t += count
        return y

    def log_ellipsoid(self, state, b, B, theta_star, round_index, m) -> int:
        ell = build_ellipsoid(state, b, B)
        covers = None if theta_star is None else bool(ell.contains(theta_star))
        newest = self.absorbed[-1] if state.count else 0
        t_built = self.blocks[-1].t_start
        self.ellipsoids.append(EllipsoidRecord(round_index, m, t_built, newest, ell, covers))
        return len(self.ellipsoids) - 1

    def trajectory(self, policy: str, k: Optional[int], with_ellipsoids: bool = True) -> Trajectory:
        return Trajectory(
            policy=policy,
            actions=self.actions[: self.t],
            payoffs=self.payoffs[: self.t],
            block_length=k,
            ellipsoid_log=self.ellipsoids if with_ellipsoids else None,
            blocks=self.blocks,
            absorbed=self.absorbed,
            schedule=self.schedule,
        )


def _play_round(
    env: Environment,
    rec: _Recorder,
    n: int,
    limit: int,
    k: int,
    cfg: PolicyConfig,
    delta: Optional[float],
    theta_star: Optional[np.ndarray],
    round_index: int = 0,
) -> None:
    """One finite-horizon LinMix-UCB instance over its first ``limit`` of ``n`` steps.

    Block ``m`` covers round steps ``mk+1 .. (m+1)k``; its first payoff is the
    only one absorbed.  At that step ``C_m`` is built from the samples of blocks
    ``0..max(0, m-1)``, and block ``m+1`` plays the optimistic action of ``C_m``.
    """
    d = env.d
    state = RlsState.empty(d, cfg.lam)
    last_block = (n - 1) // k
    # a single block never consumes an ellipsoid (and the default delta = 1/n is then 1)
    build = last_block >= 1
    b = confidence_radius(n, k, d, cfg.lam, cfg.B, delta) if build else 0.0

    x = cfg.initial_action(d)
    current: Optional[int] = None
    for m in range(last_block + 1):
        start = m * k + 1
        if start > limit:
            break
        stop = min((m + 1) * k, n, limit)
        if m >= 1:
            x = solve_optimistic(rec.ellipsoids[current].ellipsoid).x_plus
        y = rec.play(env, x, stop - start + 1, round_index, m, current if m >= 1 else None)

        if m >= 1 and build:
            current = rec.log_ellipsoid(state, b, cfg.B, theta_star, round_index, m)
        absorb(state, x, float(y[0]))
        rec.absorbed.append(rec.blocks[-1].t_start)
        if m == 0 and build:
            current = rec.log_ellipsoid(state, b, cfg.B, theta_star, round_index, m)


def run_finite(
    env: Environment,
    n: int,
    cfg: PolicyConfig,
    theta_star: Optional[np.ndarray] = None,
) -> Trajectory:
    """LinMix-UCB with known horizon ``n``.

    ``theta_star`` is only used to flag, for the audit log, whether each
    ellipsoid contains the true mean; the policy never reads it.
    """
    if n < 1:
        raise SpecError(f"horizon must be >= 1, got {n}")
    k = block_length(n, env.d, cfg.lam, cfg.B, cfg.a, cfg.gamma)
    rec = _Recorder(n, env.d)
    _play_round(env, rec, n, n, k, cfg, cfg.delta, theta_star)
    rec.schedule.append(Round(0, n, 1, n, k))
    return rec.trajectory(LINMIX_FINITE, k)


def run_everystep_ucb(
    env: Environment,
    n: int,
    cfg: PolicyConfig,
    theta_star: Optional[np.ndarray] = None,
) -> Trajectory:
    """Baseline that absorbs every payoff (block length forced to 1)."""
    if n < 1:
        raise SpecError(f"horizon must be >= 1, got {n}")
    rec = _Recorder(n, env.d)
    _play_round(env, rec, n, n, 1, cfg, cfg.delta, theta_star)
    rec.schedule.append(Round(0, n, 1, n, 1))
    return rec.trajectory(EVERY_STEP_UCB, 1)


def n_zero(cfg: PolicyConfig) -> int:
    """Length of the first doubling round, ``max(1, ceil(3 a gamma sqrt(lam) / (2 sqrt(lam) B + sqrt(2))))``."""
    root_lam = math.sqrt(cfg.lam)
    return max(1, math.ceil(3.0 * cfg.a * cfg.gamma * root_lam / (2.0 * root_lam * cfg.B + math.sqrt(2.0))))


def doubling_schedule(n0: int, total_n: int) -> list[tuple[int, int, int, int]]:
    """Rounds ``(i, n_i, t_start, t_end)`` covering ``1..total_n``; the last may be cut short."""
    rounds = []
    i = 0
    while True:
        t_start = (2**i - 1) * n0 + 1
        if t_start > total_n:
            return rounds
        rounds.append((i, 2**i * n0, t_start, min((2 ** (i + 1) - 1) * n0, total_n)))
        i += 1


def run_infinite(
    env: Environment,
    total_n: int,
    cfg: PolicyConfig,
    theta_star: Optional[np.ndarray] = None,
) -> Trajectory:
    """Anytime LinMix-UCB: fresh finite-horizon runs on horizons ``2^i n0``."""
    if total_n < 1:
        raise SpecError(f"total_n must be >= 1, got {total_n}")
    rec = _Recorder(total_n, env.d)
    for i, n_i, t_start, t_end in doubling_schedule(n_zero(cfg), total_n):
        k = block_length(n_i, env.d, cfg.lam, cfg.B, cfg.a, cfg.gamma)
        delta = cfg.delta if cfg.delta is not None else 1.0 / n_i
        _play_round(env, rec, n_i, t_end - t_start + 1, k, cfg, delta if n_i > 1 else None, theta_star, i)
        rec.schedule.append(Round(i, n_i, t_start, t_end, k))
    return rec.trajectory(LINMIX_INFINITE, None)


def run_fixed_oracle(env: Environment, n: int, theta_star: np.ndarray) -> Trajectory:
    """Play ``theta_star / ||theta_star||`` every step (``e_1`` if ``theta_star = 0``)."""
    if n < 1:
        raise SpecError(f"horizon must be >= 1, got {n}")
    theta_star = np.asarray(theta_star, dtype=float)
    norm = np.linalg.norm(theta_star)
    if norm > 0:
        x = theta_star / norm
    else:
        x = np.zeros(env.d)
        x[0] = 1.0
    rec = _Recorder(n, env.d)
    rec.play(env, x, n, 0, 0, None)
    rec.schedule.append(Round(0, n, 1, n, n))
    return rec.trajectory(FIXED_ORACLE, None, with_ellipsoids=False)
