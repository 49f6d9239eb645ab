"""Policy improvement operators mapping action values to behavior policies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoCertificateError, ParameterError
from .features import FeatureMap
from .mdp import PolicyMatrix

KINDS = ("softmax", "mellowmax", "epsilon_greedy")


@dataclass(frozen=True)
class PolicyOperator:
    """``kind`` with its single parameter.

    softmax: temperature ``sigma``; mellowmax: ``omega``; epsilon_greedy:
    exploration rate ``epsilon``.
    """

    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown operator kind {self.kind!r}")
        p = float(self.param)
        if self.kind == "epsilon_greedy":
            if not 0.0 <= p <= 1.0:
                raise ParameterError("epsilon must lie in [0, 1]")
        elif not (p > 0 and np.isfinite(p)):
            raise ParameterError(f"{self.kind} parameter must be positive")
        object.__setattr__(self, "param", p)

    @classmethod
    def softmax(cls, sigma: float) -> "PolicyOperator":
        return cls("softmax", sigma)

    @classmethod
    def mellowmax(cls, omega: float) -> "PolicyOperator":
        return cls("mellowmax", omega)

    @classmethod
    def epsilon_greedy(cls, epsilon: float) -> "PolicyOperator":
        return cls("epsilon_greedy", epsilon)

    @property
    def lipschitz_c(self) -> float | None:
        if self.kind == "epsilon_greedy":
            return None
        return lipschitz_certificate(self)

    def probs(self, q) -> np.ndarray:
        """Action probabilities for action-value rows ``q[..., a]``."""
        q = np.asarray(q, dtype=float)
        if self.kind == "softmax":
            return _softmax(q / self.param)
        if self.kind == "mellowmax":
            return _mellowmax_policy(q, self.param)
        n = q.shape[-1]
        best = np.argmax(q, axis=-1)  # first index among ties
        out = np.full(q.shape, self.param / n)
        np.put_along_axis(out, best[..., None], 1.0 - self.param + self.param / n, axis=-1)
        return out

    def to_dict(self) -> dict:
        name = {"softmax": "sigma", "mellowmax": "omega", "epsilon_greedy": "epsilon"}[self.kind]
        return {"kind": self.kind, name: self.param}

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyOperator":
        kind = d["kind"]
        name = {"softmax": "sigma", "mellowmax": "omega", "epsilon_greedy": "epsilon"}.get(kind)
        if name is None:
            raise ParameterError(f"unknown operator kind {kind!r}")
        return cls(kind, d[name])


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _mellowmax_policy(q: np.ndarray, omega: float, iters: int = 64) -> np.ndarray:
    """Maximum-entropy policy whose mean action value equals mellowmax.

    With ``z = omega * q`` and ``mm = log mean exp(z)``, the inverse
    temperature ``beta`` solves ``sum_a exp(beta d_a) d_a = 0`` for
    ``d = z - mm``.  The left side is increasing in beta, non-positive at 0
    and non-negative at 1, so bisection on [0, 1] brackets the root.
    """
    z = omega * q
    zmax = z.max(axis=-1, keepdims=True)
    n = z.shape[-1]
    mm = zmax + np.log(np.exp(z - zmax).sum(axis=-1, keepdims=True) / n)
    d = z - mm
    lo = np.zeros(z.shape[:-1] + (1,))
    hi = np.ones_like(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        w = mid * d
        f = (np.exp(w - w.max(axis=-1, keepdims=True)) * d).sum(axis=-1, keepdims=True)
        pos = f > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    return _softmax(0.5 * (lo + hi) * z)


def improve(op: PolicyOperator, fm: FeatureMap, theta) -> PolicyMatrix:
    """Behavior policy ``Gamma(phi^T theta)``."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ParameterError("theta must be finite")
    return PolicyMatrix(op.probs(fm.q_values(theta)))


def lipschitz_certificate(op: PolicyOperator) -> float:
    """Per-entry Lipschitz constant ``C`` of ``theta -> pi_theta(a|x)``.

    softmax: the Jacobian of ``pi_a`` is ``(pi_a / sigma)(phi_a - mean phi)``
    whose norm is at most ``2 pi_a (1 - pi_a) / sigma <= 1 / (2 sigma)``.
    mellowmax: the policy depends on ``omega * q`` only and its gradient
    l1-norm in those scaled values is at most 1/4, giving ``omega / 4``.
    The mellowmax constant is checked numerically, not proven.
    """
    if op.kind == "softmax":
        return 1.0 / (2.0 * op.param)
    if op.kind == "mellowmax":
        return op.param / 4.0
    raise NoCertificateError("epsilon-greedy is discontinuous and has no Lipschitz constant")


def lipschitz_ratios(op: PolicyOperator, fm: FeatureMap, theta1, theta2) -> np.ndarray:
    """``max_{x,a} |pi_1(a|x) - pi_2(a|x)| / ||theta1 - theta2||`` per pair.

    Pairs with ``theta1 == theta2`` get NaN.
    """
    t1 = np.atleast_2d(np.asarray(theta1, dtype=float))
    t2 = np.atleast_2d(np.asarray(theta2, dtype=float))
    p1 = op.probs(np.einsum("xan,kn->kxa", fm.table, t1))
    p2 = op.probs(np.einsum("xan,kn->kxa", fm.table, t2))
    gap = np.abs(p1 - p2).reshape(len(t1), -1).max(axis=1)
    dist = np.linalg.norm(t1 - t2, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(dist > 0, gap / dist, np.nan)


def sample_ball(rng: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    """``n`` points uniform in the closed l2 ball of the given radius."""
    v = rng.standard_normal((n, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / dim)
    return v * r[:, None]


def empirical_lipschitz(op: PolicyOperator, fm: FeatureMap, n_pairs: int, radius: float,
                        rng: np.random.Generator, local_step: float | None = None) -> float:
    """Largest observed Lipschitz ratio over random θ-pairs in the ball.

    By default both points are uniform in the ball; with ``local_step`` the
    second point is a perturbation of that length, which probes the local
    slope.
    """
    if n_pairs < 1:
        raise ParameterError("n_pairs must be >= 1")
    N = fm.n_features
    t1 = sample_ball(rng, n_pairs, N, radius)
    if local_step is None:
        t2 = sample_ball(rng, n_pairs, N, radius)
    else:
        step = rng.standard_normal((n_pairs, N))
        t2 = t1 + local_step * step / np.linalg.norm(step, axis=1, keepdims=True)
    ratios = lipschitz_ratios(op, fm, t1, t2)
    return float(np.nanmax(ratios)) if np.any(np.isfinite(ratios)) else 0.0
