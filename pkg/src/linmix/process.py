"""Stationary phi-mixing parameter sequences over a finite vector dictionary.

A process is a finite-state Markov chain ``s_t`` with transition matrix ``P``
and the parameter sequence is ``theta_t = D[s_t]``.  The chain is started
from its stationary distribution, so ``theta_t`` is stationary and its
phi-mixing coefficients are exactly computable from powers of ``P``.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .errors import SpecError

MARKOV = "MarkovDictionary"
IID = "IidDictionary"
KINDS = (MARKOV, IID)

ROW_SUM_TOL = 1e-12
SPECTRAL_GAP_TOL = 1e-9
STATIONARY_RESIDUAL_TOL = 1e-12

# Lags with phi below this are at floating-point noise level and are left out
# of the log-linear fit (the envelope still has to dominate them).
PHI_FIT_FLOOR = 1e-13
# Envelope sentinel for processes without dependence.
NO_DEPENDENCE_A = float(np.finfo(float).tiny)
NO_DEPENDENCE_GAMMA = 1.0


def _is_primitive(P: np.ndarray) -> bool:
    # Wielandt: a nonnegative SxS matrix is primitive iff its (S-1)^2+1 power is positive.
    S = P.shape[0]
    pattern = (P > 0).astype(np.int64)
    power = np.eye(S, dtype=np.int64)
    base = pattern.copy()
    e = (S - 1) ** 2 + 1
    while e:
        if e & 1:
            power = np.minimum(power @ base, 1)
        base = np.minimum(base @ base, 1)
        e >>= 1
    return bool(np.all(power > 0))


def check_transition(P: np.ndarray) -> np.ndarray:
    """Validate a row-stochastic, irreducible and aperiodic transition matrix."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise SpecError(f"transition matrix must be square, got shape {P.shape}")
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise SpecError("transition matrix entries must be finite and nonnegative")
    sums = P.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > ROW_SUM_TOL:
        raise SpecError(f"rows of the transition matrix must sum to 1 (got {sums})")
    if not _is_primitive(P):
        raise SpecError("transition matrix is reducible or periodic")
    if P.shape[0] > 1:
        moduli = np.sort(np.abs(np.linalg.eigvals(P)))[::-1]
        gap = 1.0 - moduli[1]
        if gap <= SPECTRAL_GAP_TOL:
            raise SpecError(f"spectral gap {gap:.3e} is numerically zero (near-absorbing chain)")
    return P


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Stationary vector ``pi`` of an irreducible aperiodic chain (``pi P = pi``).

    When every row of ``P`` is identical the chain is iid and the common row is
    returned unchanged.
    """
    P = check_transition(P)
    S = P.shape[0]
    if np.all(P == P[0]):
        return P[0].copy()

    A = P.T - np.eye(S)
    A[-1, :] = 1.0
    rhs = np.zeros(S)
    rhs[-1] = 1.0
    pi = np.linalg.solve(A, rhs)
    # one step of iterative refinement
    pi = pi + np.linalg.solve(A, rhs - A @ pi)
    pi = pi / pi.sum()

    residual = np.max(np.abs(pi @ P - pi))
    if residual > STATIONARY_RESIDUAL_TOL or np.any(pi <= 0):
        raise SpecError(f"could not resolve a positive stationary vector (residual {residual:.2e})")
    return pi


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def phi_coefficient(P: np.ndarray, pi: np.ndarray, m: int) -> float:
    """Lag-``m`` phi-mixing coefficient of the stationary chain.

    For a Markov chain the supremum over past and future events reduces to the
    worst starting state, ``max_i TV(P^m(i, .), pi)``.
    """
    if m < 1:
        raise SpecError(f"lag must be >= 1, got {m}")
    Pm = np.linalg.matrix_power(np.asarray(P, dtype=float), m)
    pi = np.asarray(pi, dtype=float)
    tv = 0.5 * np.abs(Pm - pi[None, :]).sum(axis=1)
    return float(min(1.0, tv.max()))


def phi_sequence(P: np.ndarray, pi: np.ndarray, max_lag: int) -> list[float]:
    return [phi_coefficient(P, pi, m) for m in range(1, max_lag + 1)]


@dataclass(frozen=True)
class MixingProfile:
    """Coefficients ``phi_1..phi_M`` with an envelope ``a * exp(-gamma * m)``."""

    phi: tuple[float, ...]
    envelope_a: float
    envelope_gamma: float

    def envelope(self, m) -> np.ndarray:
        return self.envelope_a * np.exp(-self.envelope_gamma * np.asarray(m, dtype=float))

    def dominated(self) -> bool:
        lags = np.arange(1, len(self.phi) + 1)
        return bool(np.all(np.asarray(self.phi) <= self.envelope(lags)))


def fit_envelope(phi: Sequence[float]) -> tuple[float, float]:
    """Fit ``phi_m <= a exp(-gamma m)`` to a nonincreasing coefficient sequence.

    The slope and intercept come from least squares on ``log phi_m`` against
    ``m`` (lags with ``phi_m`` at noise level are ignored); ``a`` is then
    scaled up until the envelope dominates every provided lag.  An all-zero
    sequence returns the sentinel ``(tiny, 1.0)``, meaning no dependence.
    """
    values = np.asarray(phi, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise SpecError("phi must be a non-empty sequence")
    if np.any(values < 0) or np.any(values > 1):
        raise SpecError("phi coefficients must lie in [0, 1]")
    lags = np.arange(1, values.size + 1, dtype=float)

    if np.all(values == 0):
        return NO_DEPENDENCE_A, NO_DEPENDENCE_GAMMA

    usable = values > PHI_FIT_FLOOR
    if usable.sum() < 2:
        raise SpecError("need at least two strictly positive coefficients to fit an envelope")
    slope, intercept = np.polyfit(lags[usable], np.log(values[usable]), 1)
    gamma = -float(slope)
    if not gamma > 0:
        raise SpecError(f"coefficients do not decay (fitted rate {gamma:.3e})")
    a = math.exp(float(intercept))

    # scale a until the envelope sits on or above every point
    excess = np.max(values * np.exp(gamma * lags)) / a
    if excess > 1.0:
        a *= excess
    # guard the last ulp
    while np.any(values > a * np.exp(-gamma * lags)):
        a = np.nextafter(a, np.inf)
    return float(a), gamma


def mixing_profile(P: np.ndarray, pi: np.ndarray, max_lag: int) -> MixingProfile:
    phi = phi_sequence(P, pi, max_lag)
    # exact profiles are nonincreasing; remove rounding wiggles below 1 ulp-ish noise
    phi = list(np.minimum.accumulate(phi))
    a, gamma = fit_envelope(phi)
    return MixingProfile(tuple(float(p) for p in phi), a, gamma)


@dataclass
class ProcessSpec:
    """A stationary generator of parameter vectors.

    ``transition`` is the SxS row-stochastic matrix of the state chain and
    ``dictionary`` stacks the S parameter values as rows.  For the iid kind the
    transition may be given as a single probability row.
    """

    kind: str
    transition: np.ndarray
    dictionary: np.ndarray
    bound_B: float
    seed: Optional[int] = None
    pi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"kind must be one of {KINDS}, got {self.kind!r}")
        D = np.atleast_2d(np.asarray(self.dictionary, dtype=float))
        P = np.asarray(self.transition, dtype=float)
        if self.kind == IID:
            if P.ndim == 1:
                P = np.tile(P, (D.shape[0], 1))
            if not np.all(P == P[0]):
                raise SpecError("iid process requires identical transition rows")
        if P.ndim != 2 or P.shape[0] != D.shape[0]:
            raise SpecError(f"transition shape {P.shape} does not match {D.shape[0]} dictionary entries")
        if not np.all(np.isfinite(D)):
            raise SpecError("dictionary entries must be finite")
        self.bound_B = float(self.bound_B)
        if not self.bound_B > 0:
            raise SpecError("bound_B must be positive")
        norms = np.linalg.norm(D, axis=1)
        # rounding slack so unit-normalized entries pass with B = 1
        if np.any(norms > self.bound_B * (1 + 1e-12)):
            raise SpecError(f"dictionary norm {norms.max():.6g} exceeds bound_B={self.bound_B}")
        self.transition = P
        self.dictionary = D
        self.pi = stationary_distribution(P)

    @property
    def n_states(self) -> int:
        return self.dictionary.shape[0]

    @property
    def dim(self) -> int:
        return self.dictionary.shape[1]

    def phi(self, m: int) -> float:
        return phi_coefficient(self.transition, self.pi, m)

    def profile(self, max_lag: int) -> MixingProfile:
        return mixing_profile(self.transition, self.pi, max_lag)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "kind": self.kind,
            "transition": self.transition.tolist(),
            "dictionary": self.dictionary.tolist(),
            "bound_B": self.bound_B,
        }
        if self.seed is not None:
            out["seed"] = self.seed
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ProcessSpec":
        try:
            return cls(
                kind=data["kind"],
                transition=np.asarray(data["transition"], dtype=float),
                dictionary=np.asarray(data["dictionary"], dtype=float),
                bound_B=data["bound_B"],
                seed=data.get("seed"),
            )
        except KeyError as exc:
            raise SpecError(f"process config is missing field {exc.args[0]!r}") from None


def symmetric_chain(eps: float, dictionary=((1.0, 0.0), (0.0, 1.0)), bound_B: float = 1.0) -> ProcessSpec:
    """Two-state chain that switches state with probability ``eps``."""
    P = np.array([[1.0 - eps, eps], [eps, 1.0 - eps]])
    return ProcessSpec(MARKOV, P, np.asarray(dictionary, dtype=float), bound_B)


@dataclass
class ProcessState:
    """Position of one seeded realization of a process.

    Every step consumes exactly one uniform from ``rng``: step 1 draws the
    initial state from ``pi`` and later steps draw from the current row.
    """

    current_state: Optional[int]
    rng: np.random.Generator
    t: int = 0


def start(spec: ProcessSpec, seed: Optional[int] = None) -> ProcessState:
    if seed is None:
        seed = spec.seed
    return ProcessState(current_state=None, rng=np.random.default_rng(seed), t=0)


def sample_theta(state: ProcessState, spec: ProcessSpec) -> tuple[np.ndarray, ProcessState]:
    """Draw ``theta_t`` and advance ``state`` by one step (in place)."""
    u = float(state.rng.random())
    row = spec.pi if state.current_state is None else spec.transition[state.current_state]
    s = min(bisect_right(np.cumsum(row).tolist(), u), spec.n_states - 1)
    state.current_state = s
    state.t += 1
    return spec.dictionary[s].copy(), state


class Environment:
    """Process handle consumed by the policies: draws blocks of ``theta_t``."""

    def __init__(self, spec: ProcessSpec, seed: Optional[int] = None):
        self.spec = spec
        self.state = start(spec, seed)
        self._cum_pi = np.cumsum(spec.pi)
        self._cum_rows = [np.cumsum(row).tolist() for row in spec.transition]
        self._iid = bool(np.all(spec.transition == spec.pi))

    @property
    def d(self) -> int:
        return self.spec.dim

    @property
    def t(self) -> int:
        return self.state.t

    def draw_states(self, count: int) -> np.ndarray:
        st = self.state
        last = self.spec.n_states - 1
        u = st.rng.random(count)
        if self._iid:
            idx = np.minimum(np.searchsorted(self._cum_pi, u, side="right"), last)
        else:
            idx = np.empty(count, dtype=np.intp)
            s = st.current_state
            rows = self._cum_rows
            start_row = self._cum_pi.tolist()
            for i, ui in enumerate(u.tolist()):
                s = min(bisect_right(start_row if s is None else rows[s], ui), last)
                idx[i] = s
        if count:
            st.current_state = int(idx[-1])
            st.t += count
        return idx

    def draw(self, count: int) -> np.ndarray:
        """Next ``count`` parameter vectors as a ``(count, d)`` array."""
        return self.spec.dictionary[self.draw_states(count)]

    def step(self) -> np.ndarray:
        return self.draw(1)[0]
