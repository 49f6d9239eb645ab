"""Linear feature maps phi(x, a) in R^N with ||phi(x, a)||_2 <= 1."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFeaturesError, ParameterError

INDEPENDENCE_TOL = 1e-10
_NORM_SLACK = 1e-12


@dataclass(frozen=True)
class FeatureMap:
    """Feature table ``table[x, a, :] = phi(x, a)``."""

    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        if table.ndim != 3 or table.shape[2] < 1:
            raise ParameterError("feature table must have shape (n_states, n_actions, N)")
        if np.linalg.norm(table, axis=2).max() > 1.0 + _NORM_SLACK:
            raise ParameterError("feature vectors must have norm <= 1; call normalize()")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @property
    def n_states(self) -> int:
        return self.table.shape[0]

    @property
    def n_actions(self) -> int:
        return self.table.shape[1]

    @property
    def n_features(self) -> int:
        return self.table.shape[2]

    def q_values(self, theta) -> np.ndarray:
        """``Q_theta(x, a) = phi(x, a)^T theta`` for all pairs."""
        return self.table @ np.asarray(theta, dtype=float)


@dataclass(frozen=True)
class GramReport:
    gram: np.ndarray
    min_eigenvalue: float
    independent: bool


def normalize(raw) -> FeatureMap:
    """Scale the whole table by ``1 / max ||raw(x, a)||`` when that exceeds 1."""
    raw = np.array(raw, dtype=float)
    if raw.size == 0:
        raise ParameterError("empty feature table")
    if raw.ndim == 1:
        raw = raw[None, None, :]
    elif raw.ndim == 2:
        raw = raw[None, :, :]
    peak = np.linalg.norm(raw, axis=-1).max()
    if peak == 0.0:
        raise DegenerateFeaturesError("all feature vectors are zero")
    if peak > 1.0:
        raw = raw / peak
        # Division can leave a norm one ulp above 1.
        over = np.linalg.norm(raw, axis=-1).max()
        if over > 1.0:
            raw = raw / over
    return FeatureMap(raw)


def evaluate(fm: FeatureMap, x: int, a: int) -> np.ndarray:
    if not (0 <= x < fm.n_states and 0 <= a < fm.n_actions):
        raise ParameterError(f"(x={x}, a={a}) out of range")
    return fm.table[x, a]


def one_hot(n_states: int, n_actions: int) -> FeatureMap:
    """Tabular features; coordinate ``x * n_actions + a`` indexes the pair."""
    return FeatureMap(np.eye(n_states * n_actions).reshape(n_states, n_actions, -1))


def random_gaussian(n_states: int, n_actions: int, n_features: int, seed: int = 0) -> FeatureMap:
    rng = np.random.default_rng(seed)
    return normalize(rng.standard_normal((n_states, n_actions, n_features)))


def polynomial(n_states: int, n_actions: int, degree: int = 2) -> FeatureMap:
    """Low-rank features: per action, powers of the rescaled state index.

    Gives ``n_actions * (degree + 1)`` columns; column block ``a`` is active
    only for action ``a``.
    """
    s = np.linspace(-1.0, 1.0, n_states) if n_states > 1 else np.zeros(1)
    powers = np.stack([s**k for k in range(degree + 1)], axis=-1)
    table = np.zeros((n_states, n_actions, n_actions * (degree + 1)))
    for a in range(n_actions):
        table[:, a, a * (degree + 1):(a + 1) * (degree + 1)] = powers
    return normalize(table)


def gram_report(fm: FeatureMap, mu, tol: float = INDEPENDENCE_TOL) -> GramReport:
    """Gram matrix ``sum mu(x,a) phi phi^T`` and its linear-independence verdict."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != fm.table.shape[:2]:
        raise ParameterError("mu must be indexed [x][a] like the feature table")
    if abs(mu.sum() - 1.0) > 1e-9 or np.any(mu < 0):
        raise ParameterError("mu must be a probability table")
    gram = np.einsum("xa,xan,xam->nm", mu, fm.table, fm.table)
    gram = 0.5 * (gram + gram.T)
    lam_min = float(np.linalg.eigvalsh(gram)[0])
    return GramReport(gram=gram, min_eigenvalue=lam_min, independent=lam_min > tol)
