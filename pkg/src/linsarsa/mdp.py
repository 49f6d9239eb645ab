"""Finite MDPs, trajectory sampling and exact Markov-chain analysis.

States and actions are integer indices.  The transition kernel is stored as
an array ``kernel[x, a, y] = P(y | x, a)`` and rewards are deterministic,
``rewards[x, a] = r(x, a)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ErgodicityError, ParameterError

ROW_TOL = 1e-12
STATIONARY_TOL = 1e-12
STATIONARY_MAX_ITERS = 10**6
RHO_FLOOR = 1e-3
TV_FLOOR = 1e-12
DEFAULT_HORIZON = 200


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


def _check_rows(probs: np.ndarray, what: str) -> None:
    if np.any(probs < 0):
        raise ParameterError(f"{what} has negative entries")
    if np.any(np.abs(probs.sum(axis=-1) - 1.0) > ROW_TOL):
        raise ParameterError(f"{what} rows must sum to 1")


def cumulative(probs: np.ndarray) -> np.ndarray:
    """Row-wise CDF with the last column pinned to exactly 1."""
    cum = np.cumsum(probs, axis=-1)
    cum[..., -1] = 1.0
    return cum


def inverse_cdf(cum: np.ndarray, u) -> np.ndarray:
    """Sample indices from CDF rows ``cum`` given uniforms ``u`` in [0, 1).

    ``cum`` may carry leading batch dimensions matching ``u``.  Zero-mass
    categories are never returned.
    """
    u = np.asarray(u)
    return np.sum(cum <= u[..., None], axis=-1)


@dataclass(frozen=True)
class FiniteMdp:
    n_states: int
    n_actions: int
    kernel: np.ndarray
    rewards: np.ndarray
    gamma: float
    r_max: float

    def __post_init__(self):
        kernel = _frozen(self.kernel)
        rewards = _frozen(self.rewards)
        S, A = int(self.n_states), int(self.n_actions)
        if S < 1 or A < 1:
            raise ParameterError("n_states and n_actions must be positive")
        if kernel.shape != (S, A, S):
            raise ParameterError(f"kernel shape {kernel.shape} != {(S, A, S)}")
        if rewards.shape != (S, A):
            raise ParameterError(f"rewards shape {rewards.shape} != {(S, A)}")
        _check_rows(kernel, "kernel")
        if not 0.0 <= self.gamma < 1.0:
            raise ParameterError("gamma must lie in [0, 1)")
        if self.r_max < 0 or np.any(rewards < 0) or np.any(rewards > self.r_max):
            raise ParameterError("rewards must lie in [0, r_max]")
        object.__setattr__(self, "n_states", S)
        object.__setattr__(self, "n_actions", A)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "r_max", float(self.r_max))

    @cached_property
    def kernel_cdf(self) -> np.ndarray:
        return cumulative(self.kernel)

    def check_index(self, x, a) -> None:
        if not (0 <= x < self.n_states and 0 <= a < self.n_actions):
            raise ParameterError(f"(x={x}, a={a}) out of range")


@dataclass(frozen=True)
class PolicyMatrix:
    """Stationary policy ``probs[x, a] = pi(a | x)``."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs)
        if probs.ndim != 2:
            raise ParameterError("policy must be a 2-d table")
        _check_rows(probs, "policy")
        object.__setattr__(self, "probs", probs)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "PolicyMatrix":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))


@dataclass(frozen=True)
class MixingProfile:
    """Certified geometric mixing constants: ``tv_curve[t] <= m * rho**t``."""

    m: float
    rho: float
    horizon: int
    tv_curve: np.ndarray = field(repr=False)

    def envelope(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.m * np.power(self.rho, t)


def build_random_mdp(n_states: int, n_actions: int, r_max: float = 1.0, gamma: float = 0.9,
                     min_prob: float = 0.01, seed: int = 0) -> FiniteMdp:
    """Random MDP whose every kernel entry is at least ``min_prob``.

    Kernel rows are ``min_prob + (1 - n_states * min_prob) * Dirichlet(1)``;
    rewards are uniform on ``[0, r_max]``.
    """
    if n_states < 1 or n_actions < 1:
        raise ParameterError("n_states and n_actions must be positive")
    if min_prob < 0 or min_prob * n_states > 1.0 + 1e-15:
        raise ParameterError(f"min_prob={min_prob} infeasible for {n_states} states")
    rng = np.random.default_rng(seed)
    free = max(0.0, 1.0 - n_states * min_prob)
    kernel = min_prob + free * rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    kernel /= kernel.sum(axis=-1, keepdims=True)
    rewards = rng.uniform(0.0, r_max, size=(n_states, n_actions))
    return FiniteMdp(n_states, n_actions, kernel, rewards, gamma, r_max)


def two_state_mdp() -> FiniteMdp:
    """The two-state, two-action reference instance used throughout the tests.

    Action 0 moves to the other state with probability 0.9, action 1 with
    probability 0.1; ``r(x, a) = 0.25 (1 + x)(1 + a/2)`` and gamma = 0.5.
    """
    kernel = np.zeros((2, 2, 2))
    kernel[0, 0] = [0.1, 0.9]
    kernel[0, 1] = [0.9, 0.1]
    kernel[1, 0] = [0.9, 0.1]
    kernel[1, 1] = [0.1, 0.9]
    x = np.arange(2)[:, None]
    a = np.arange(2)[None, :]
    rewards = np.clip(0.25 * (1 + x) * (1 + 0.5 * a), 0.0, 1.0)
    return FiniteMdp(2, 2, kernel, rewards, gamma=0.5, r_max=1.0)


def sample_step(mdp: FiniteMdp, x: int, a: int, rng: np.random.Generator) -> tuple[int, float]:
    """Draw ``y ~ P(. | x, a)`` and return it with the reward ``r(x, a)``."""
    mdp.check_index(x, a)
    y = int(inverse_cdf(mdp.kernel_cdf[x, a], rng.random()))
    return y, float(mdp.rewards[x, a])


def policy_kernel(mdp: FiniteMdp, policy) -> np.ndarray:
    """State chain induced by a policy: ``K[x, y] = sum_a pi(a|x) P(y|x,a)``."""
    probs = policy.probs if isinstance(policy, PolicyMatrix) else np.asarray(policy, dtype=float)
    if probs.shape != (mdp.n_states, mdp.n_actions):
        raise ParameterError(f"policy shape {probs.shape} does not match the MDP")
    return np.einsum("xa,xay->xy", probs, mdp.kernel)


def tv_distance(p, q, axis=-1) -> np.ndarray:
    """Total-variation distance ``0.5 * ||p - q||_1``."""
    return 0.5 * np.sum(np.abs(np.asarray(p) - np.asarray(q)), axis=axis)


def stationary_distribution(K, tol: float = STATIONARY_TOL,
                            max_iters: int = STATIONARY_MAX_ITERS) -> np.ndarray:
    """Invariant law of a row-stochastic matrix.

    Power iteration from a linear-solve warm start, run until
    ``||pi K - pi||_1 <= tol``.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    if K.shape != (n, n):
        raise ParameterError("K must be square")
    M = K.T - np.eye(n)
    M[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(M, rhs)
        pi = np.clip(pi, 0.0, None)
    except np.linalg.LinAlgError:
        pi = np.full(n, 1.0 / n)
    if not np.all(np.isfinite(pi)) or pi.sum() <= 0:
        pi = np.full(n, 1.0 / n)
    pi /= pi.sum()
    for _ in range(max_iters):
        nxt = pi @ K
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() <= tol:
            return nxt
        pi = nxt
    raise ErgodicityError(f"power iteration did not reach tol={tol} in {max_iters} steps")


def second_eigenvalue_modulus(K) -> float:
    mods = np.sort(np.abs(np.linalg.eigvals(np.asarray(K, dtype=float))))[::-1]
    return float(mods[1]) if mods.size > 1 else 0.0


def tv_curve(K, horizon: int = DEFAULT_HORIZON, stationary=None) -> np.ndarray:
    """``d(t) = max_x d_TV(K^t(x, .), stationary)`` for ``t = 0..horizon``.

    Values below ``TV_FLOOR`` are round-off and are reported as 0.
    """
    K = np.asarray(K, dtype=float)
    pi = stationary_distribution(K) if stationary is None else np.asarray(stationary)
    Kt = np.eye(K.shape[0])
    out = np.empty(horizon + 1)
    for t in range(horizon + 1):
        out[t] = tv_distance(Kt, pi[None, :]).max()
        Kt = Kt @ K
    out[out < TV_FLOOR] = 0.0
    return out


def mixing_profile(K, horizon: int = DEFAULT_HORIZON, rho_floor: float = RHO_FLOOR) -> MixingProfile:
    """Fit ``(m, rho)`` so that ``d(t) <= m rho^t`` holds on ``0..horizon``.

    ``rho`` is the second-largest eigenvalue modulus (floored), and ``m`` is
    the smallest constant that certifies the inequality on the horizon.
    """
    K = np.asarray(K, dtype=float)
    rho = max(second_eigenvalue_modulus(K), rho_floor)
    if rho >= 1.0 - 1e-12:
        raise ErgodicityError(f"second eigenvalue modulus {rho} >= 1; chain does not mix")
    d = tv_curve(K, horizon)
    log_rho = math.log(rho)
    log_m = max((math.log(v) - t * log_rho for t, v in enumerate(d) if v > 0), default=None)
    m = TV_FLOOR if log_m is None else math.exp(log_m) * (1 + 1e-9)
    return MixingProfile(m=m, rho=rho, horizon=horizon, tv_curve=_frozen(d))
