"""Projected SARSA and fitted SARSA with linear function approximation.

Every run follows one continuous trajectory.  Replications are simulated in
lockstep as a batch, but each replication draws its randomness from its own
generator in a fixed order (two uniforms to initialise ``x_0, a_0``, then
one uniform for the transition and one for the action per step), so a
replication's trajectory does not depend on which batch it runs in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .features import FeatureMap
from .mdp import FiniteMdp, cumulative, inverse_cdf
from .policy import PolicyOperator

_CHUNK = 1024


@dataclass(frozen=True)
class Observation:
    x: int
    a: int
    x_next: int
    a_next: int
    reward: float


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``alpha_t``.

    decaying:        ``1 / (2 w (t + 1))`` for ``t >= 0``
    constant:        ``alpha0``
    decaying_fitted: ``1 / (2 t w)`` for ``t >= 1`` and ``alpha_0 = 1 / (sqrt(2) B w)``
    """

    kind: str
    value: float
    block: int = 1

    def __post_init__(self):
        if self.kind not in ("decaying", "constant", "decaying_fitted"):
            raise ParameterError(f"unknown schedule {self.kind!r}")
        v = float(self.value)
        if self.kind == "constant":
            # alpha0 = 0 is the frozen learner
            if not (v >= 0 and math.isfinite(v)):
                raise ParameterError("constant step size must be >= 0")
        elif not (v > 0 and math.isfinite(v)):
            raise ParameterError("w must be positive")
        if self.block < 1:
            raise ParameterError("block must be >= 1")
        object.__setattr__(self, "value", v)

    @classmethod
    def decaying(cls, w: float) -> "StepSchedule":
        return cls("decaying", w)

    @classmethod
    def constant(cls, alpha0: float) -> "StepSchedule":
        return cls("constant", alpha0)

    @classmethod
    def decaying_fitted(cls, w: float, block: int) -> "StepSchedule":
        return cls("decaying_fitted", w, block)

    def alphas(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ParameterError("t must be >= 0")
        if self.kind == "constant":
            return np.full(t.shape, self.value)
        w = self.value
        if self.kind == "decaying":
            return 1.0 / (2.0 * w * (t + 1.0))
        with np.errstate(divide="ignore"):
            out = 1.0 / (2.0 * w * t)
        return np.where(t == 0, 1.0 / (math.sqrt(2.0) * self.block * w), out)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "value": self.value}
        if self.kind == "decaying_fitted":
            d["block"] = self.block
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StepSchedule":
        return cls(d["kind"], d["value"], int(d.get("block", 1)))


def step_size(schedule: StepSchedule, t: int) -> float:
    return float(schedule.alphas(t))


@dataclass(frozen=True)
class LearnerConfig:
    radius_R: float
    schedule: StepSchedule
    horizon_T: int
    inner_B: int = 1
    seed: int = 0
    theta0: tuple | None = None
    x0: int | None = None

    def __post_init__(self):
        if not self.radius_R > 0:
            raise ParameterError("radius_R must be positive")
        if self.horizon_T < 1 or self.inner_B < 1:
            raise ParameterError("horizon_T and inner_B must be >= 1")
        if self.theta0 is not None:
            object.__setattr__(self, "theta0", tuple(float(v) for v in self.theta0))


@dataclass
class ThetaTrace:
    """Parameters at checkpoints of a single run.

    ``grad_norms[i]`` is the norm of the semi-gradient that produced
    ``thetas[i]`` (0 at ``t = 0``).  ``drift_ratio_max`` is the largest
    ``||theta_{t+1} - theta_t|| / alpha_t`` seen.
    """

    ts: np.ndarray
    thetas: np.ndarray
    grad_norms: np.ndarray
    gradient_norm_max: float
    drift_ratio_max: float
    observations_consumed: int
    theta_norm_max: float


@dataclass
class BatchTrace:
    """Lockstep traces of ``K`` replications; arrays carry a batch axis."""

    ts: np.ndarray
    thetas: np.ndarray            # (n_ckpt, K, N)
    grad_norms: np.ndarray        # (n_ckpt, K)
    gradient_norm_max: np.ndarray  # (K,)
    drift_ratio_max: np.ndarray   # (K,)
    theta_norm_max: np.ndarray    # (K,)
    observations_consumed: int
    captured: dict = field(default_factory=dict)

    def single(self, k: int = 0) -> ThetaTrace:
        return ThetaTrace(ts=self.ts, thetas=self.thetas[:, k], grad_norms=self.grad_norms[:, k],
                          gradient_norm_max=float(self.gradient_norm_max[k]),
                          drift_ratio_max=float(self.drift_ratio_max[k]),
                          observations_consumed=self.observations_consumed,
                          theta_norm_max=float(self.theta_norm_max[k]))


def _features(fm: FeatureMap, x: int, a: int) -> np.ndarray:
    if not (0 <= x < fm.n_states and 0 <= a < fm.n_actions):
        raise ParameterError(f"(x={x}, a={a}) out of range")
    return fm.table[x, a]


def td_error(theta, obs: Observation, gamma: float, fm: FeatureMap) -> float:
    """``r + gamma phi(x', a')^T theta - phi(x, a)^T theta``."""
    theta = np.asarray(theta, dtype=float)
    return float(obs.reward + gamma * _features(fm, obs.x_next, obs.a_next) @ theta
                 - _features(fm, obs.x, obs.a) @ theta)


def semi_gradient(theta, obs: Observation, gamma: float, fm: FeatureMap) -> np.ndarray:
    """``g = phi(x, a) * delta``."""
    return _features(fm, obs.x, obs.a) * td_error(theta, obs, gamma, fm)


def project(theta, radius_R: float) -> np.ndarray:
    """Euclidean projection onto the ball of radius ``radius_R`` (last axis).

    The result satisfies ``np.linalg.norm(out) <= radius_R`` exactly in
    floating point.
    """
    if not radius_R > 0:
        raise ParameterError("radius_R must be positive")
    theta = np.asarray(theta, dtype=float)
    norms = np.linalg.norm(theta, axis=-1, keepdims=True)
    over = norms > radius_R
    if not np.any(over):
        return theta.copy()
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(over, theta * (radius_R / norms), theta)
    shrink = 1.0
    for _ in range(8):
        bad = np.linalg.norm(out, axis=-1, keepdims=True) > radius_R
        if not np.any(bad):
            break
        shrink *= 1.0 - 2.0**-52
        out = np.where(bad, out * shrink, out)
    return out


def log_checkpoints(T: int) -> list[int]:
    """0, powers of two below ``T``, and ``T``."""
    pts = {0, T}
    k = 1
    while k < T:
        pts.add(k)
        k *= 2
    return sorted(pts)


class _Streams:
    """Per-replication uniforms, drawn in chunks."""

    def __init__(self, seeds):
        self.gens = [np.random.default_rng(int(s)) for s in seeds]
        self.buf = None
        self.pos = _CHUNK

    def initial(self) -> np.ndarray:
        return np.stack([g.random(2) for g in self.gens])

    def next(self) -> np.ndarray:
        if self.pos == _CHUNK:
            self.buf = np.stack([g.random((_CHUNK, 2)) for g in self.gens], axis=1)
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return u


def simulate(mdp: FiniteMdp, fm: FeatureMap, op: PolicyOperator, cfg: LearnerConfig,
             seeds, checkpoints=None, *, record_full: bool = False,
             freeze_policy_at: int | None = None,
             capture_obs_at=()) -> BatchTrace:
    """Run fitted SARSA (``inner_B = 1`` is plain SARSA) for every seed.

    Step ``k = 1..T`` observes ``x_k``, draws ``a_k`` from the behavior
    policy ``pi_{theta_p}`` with ``p = B * floor((k - 1) / B)``, then sets
    ``theta_k = project(theta_{k-1} + alpha_{k-1} g_{k-1})`` where ``g_{k-1}``
    uses ``O_{k-1} = (x_{k-1}, a_{k-1}, x_k, a_k)``.  ``freeze_policy_at = s``
    keeps the behavior policy at ``pi_{theta_s}`` for every action after
    step ``s``.  ``capture_obs_at`` lists times ``t`` whose ``O_t`` is kept.
    """
    if mdp.n_states != fm.n_states or mdp.n_actions != fm.n_actions:
        raise ParameterError("feature table does not match the MDP")
    seeds = list(seeds)
    K, T, B, N = len(seeds), cfg.horizon_T, cfg.inner_B, fm.n_features
    R, gamma = cfg.radius_R, mdp.gamma
    phi = fm.table
    if record_full:
        ckpts = np.arange(T + 1)
    else:
        ckpts = np.array(sorted(set(log_checkpoints(T) if checkpoints is None else checkpoints)),
                         dtype=int)
    if ckpts.size and (ckpts[0] < 0 or ckpts[-1] > T):
        raise ParameterError("checkpoints must lie in [0, horizon_T]")
    capture = set(int(t) for t in capture_obs_at)
    ck_index = {int(t): i for i, t in enumerate(ckpts)}

    theta0 = np.zeros(N) if cfg.theta0 is None else np.asarray(cfg.theta0, dtype=float)
    if theta0.shape != (N,):
        raise ParameterError("theta0 has the wrong dimension")
    theta = np.tile(project(theta0, R), (K, 1))
    streams = _Streams(seeds)
    u0 = streams.initial()
    if cfg.x0 is None:
        x = np.minimum((u0[:, 0] * mdp.n_states).astype(int), mdp.n_states - 1)
    else:
        if not 0 <= cfg.x0 < mdp.n_states:
            raise ParameterError("x0 out of range")
        x = np.full(K, int(cfg.x0))
    theta_b = theta.copy()
    a = inverse_cdf(cumulative(op.probs(np.einsum("kan,kn->ka", phi[x], theta_b))), u0[:, 1])

    thetas = np.empty((len(ckpts), K, N))
    grad_norms = np.zeros((len(ckpts), K))
    if 0 in ck_index:
        thetas[ck_index[0]] = theta
    gmax = np.zeros(K)
    drift = np.zeros(K)
    tmax = np.linalg.norm(theta, axis=1)
    cdf = mdp.kernel_cdf
    alphas = cfg.schedule.alphas(np.arange(T))
    captured = {}

    for k in range(1, T + 1):
        u = streams.next()
        y = inverse_cdf(cdf[x, a], u[:, 0])
        r = mdp.rewards[x, a]
        s = k - 1
        if freeze_policy_at is None or s <= freeze_policy_at:
            if s % B == 0 or s == freeze_policy_at:
                theta_b = theta
        probs = op.probs(np.einsum("kan,kn->ka", phi[y], theta_b))
        a_new = inverse_cdf(cumulative(probs), u[:, 1])
        if s in capture:
            captured[s] = np.stack([x, a, y, a_new], axis=1)
        f_now = phi[x, a]
        delta = r + gamma * np.einsum("kn,kn->k", phi[y, a_new], theta) \
            - np.einsum("kn,kn->k", f_now, theta)
        g = f_now * delta[:, None]
        gn = np.linalg.norm(g, axis=1)
        np.maximum(gmax, gn, out=gmax)
        alpha = alphas[s]
        new = project(theta + alpha * g, R)
        if alpha > 0:
            np.maximum(drift, np.linalg.norm(new - theta, axis=1) / alpha, out=drift)
        theta = new
        np.maximum(tmax, np.linalg.norm(theta, axis=1), out=tmax)
        if k in ck_index:
            i = ck_index[k]
            thetas[i] = theta
            grad_norms[i] = gn
        x, a = y, a_new
    return BatchTrace(ts=ckpts, thetas=thetas, grad_norms=grad_norms, gradient_norm_max=gmax,
                      drift_ratio_max=drift, theta_norm_max=tmax, observations_consumed=T,
                      captured=captured)


def run_fitted_sarsa(mdp: FiniteMdp, fm: FeatureMap, op: PolicyOperator, cfg: LearnerConfig,
                     checkpoints=None, record_full: bool = False) -> ThetaTrace:
    """Fitted SARSA: the behavior policy is refreshed every ``cfg.inner_B`` steps."""
    return simulate(mdp, fm, op, cfg, [cfg.seed], checkpoints, record_full=record_full).single()


def run_sarsa(mdp: FiniteMdp, fm: FeatureMap, op: PolicyOperator, cfg: LearnerConfig,
              checkpoints=None, record_full: bool = False) -> ThetaTrace:
    """Projected SARSA; the policy is improved after every update."""
    if cfg.inner_B != 1:
        raise ParameterError("run_sarsa requires inner_B = 1; use run_fitted_sarsa")
    return run_fitted_sarsa(mdp, fm, op, cfg, checkpoints, record_full)
