"""Exact mean-field quantities on finite MDPs.

For a fixed ``theta`` the SARSA data come from the chain that samples
``X ~ P_theta`` (stationary), ``A ~ pi_theta(.|X)``, ``Y ~ P(.|X, A)`` and
``B ~ pi_theta(.|Y)``.  Averages over that law are finite sums here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bounds
from .errors import IndependenceError, NoFixedPointError, ParameterError
from .features import FeatureMap, gram_report
from .learner import Observation, semi_gradient
from .mdp import FiniteMdp, MixingProfile, PolicyMatrix, mixing_profile, policy_kernel, \
    stationary_distribution
from .policy import PolicyOperator, lipschitz_certificate, sample_ball

DAMPING = 0.5
FIXED_POINT_TOL = 1e-10
FIXED_POINT_MAX_ITERS = 10**4
POLISH_STEPS = 5


@dataclass(frozen=True)
class MeanFieldPair:
    a_matrix: np.ndarray
    b_vector: np.ndarray


@dataclass(frozen=True)
class FixedPointReport:
    theta_star: np.ndarray
    residual: float
    w_s: float
    w_l: float
    lam: float
    assumption2_ok: bool
    radius_bound: float
    gram_independent: bool
    c_lipschitz: float
    radius_R: float
    g_const: float
    mixing: MixingProfile
    a_matrix: np.ndarray
    b_vector: np.ndarray
    mu_star: np.ndarray
    iterations: int

    @property
    def m(self) -> float:
        return self.mixing.m

    @property
    def rho(self) -> float:
        return self.mixing.rho

    def scalars(self) -> dict:
        return {"residual": self.residual, "w_s": self.w_s, "w_l": self.w_l, "lambda": self.lam,
                "assumption2_ok": self.assumption2_ok, "radius_bound": self.radius_bound,
                "theta_star_norm": float(np.linalg.norm(self.theta_star)),
                "gram_independent": self.gram_independent, "C": self.c_lipschitz,
                "R": self.radius_R, "G": self.g_const, "m": self.m, "rho": self.rho,
                "iterations": self.iterations}


def _policy(mdp, fm, op, theta) -> np.ndarray:
    if fm.n_states != mdp.n_states or fm.n_actions != mdp.n_actions:
        raise ParameterError("feature table does not match the MDP")
    return op.probs(fm.q_values(theta))


def state_law(mdp: FiniteMdp, fm: FeatureMap, op: PolicyOperator, theta) -> np.ndarray:
    """Stationary state law ``P_theta`` of the chain driven by ``pi_theta``."""
    return stationary_distribution(policy_kernel(mdp, _policy(mdp, fm, op, theta)))


def stationary_action_measure(mdp: FiniteMdp, fm: FeatureMap, op: PolicyOperator, theta) -> np.ndarray:
    """``mu_theta(x, a) = P_theta(x) pi_theta(a|x)``."""
    pi = _policy(mdp, fm, op, theta)
    d = stationary_distribution(policy_kernel(mdp, pi))
    return d[:, None] * pi


def mean_field_from_policy(mdp: FiniteMdp, fm: FeatureMap, pi, mu=None) -> MeanFieldPair:
    """``A, b`` for a fixed behavior policy table ``pi``."""
    pi = pi.probs if isinstance(pi, PolicyMatrix) else np.asarray(pi, dtype=float)
    if mu is None:
        mu = stationary_distribution(policy_kernel(mdp, pi))[:, None] * pi
    phi = fm.table
    next_phi = np.einsum("xay,yb,ybn->xan", mdp.kernel, pi, phi)
    A = np.einsum("xa,xan,xam->nm", mu, phi, mdp.gamma * next_phi - phi)
    b = np.einsum("xa,xan,xa->n", mu, phi, mdp.rewards)
    return MeanFieldPair(A, b)


def mean_field(mdp: FiniteMdp, fm: FeatureMap, op: PolicyOperator, theta) -> MeanFieldPair:
    return mean_field_from_policy(mdp, fm, _policy(mdp, fm, op, theta))


def mean_field_gradient(mdp: FiniteMdp, fm: FeatureMap, op: PolicyOperator, theta) -> np.ndarray:
    """Noiseless semi-gradient ``A_theta theta + b_theta``."""
    theta = np.asarray(theta, dtype=float)
    mf = mean_field(mdp, fm, op, theta)
    return mf.a_matrix @ theta + mf.b_vector


def td_fixed_point(mdp: FiniteMdp, fm: FeatureMap, pi) -> np.ndarray:
    """TD(0) limit for a frozen policy: solves ``A theta + b = 0``."""
    mf = mean_field_from_policy(mdp, fm, pi)
    try:
        return np.linalg.solve(mf.a_matrix, -mf.b_vector)
    except np.linalg.LinAlgError as exc:
        raise IndependenceError("A is singular for this policy") from exc


def _solve(A, b) -> np.ndarray:
    try:
        out = np.linalg.solve(A, -b)
    except np.linalg.LinAlgError as exc:
        raise IndependenceError("A_theta is singular; features are not independent") from exc
    if np.linalg.cond(A) > 1e14:
        raise IndependenceError("A_theta is numerically singular")
    return out


def mixing_for(mdp, fm, op, theta, horizon: int = 200) -> MixingProfile:
    return mixing_profile(policy_kernel(mdp, _policy(mdp, fm, op, theta)), horizon)


def solve_fixed_point(mdp: FiniteMdp, fm: FeatureMap, op: PolicyOperator,
                      damping: float = DAMPING, tol: float = FIXED_POINT_TOL,
                      max_iters: int = FIXED_POINT_MAX_ITERS, radius_R: float | None = None,
                      mixing: str = "theta_star", grid_size: int = 64,
                      seed: int = 0) -> FixedPointReport:
    """Find ``theta*`` with ``A_{theta*} theta* + b_{theta*} = 0`` and its constants.

    Iterates ``theta <- (1 - damping) theta + damping (-A_theta^{-1} b_theta)``
    until the residual is at most ``tol``, then takes undamped steps while
    they keep reducing it.
    ``radius_R`` defaults to ``r_max / |w_l|``.  The mixing constants come
    from the chain of ``pi_{theta*}``; ``mixing="worst_case"`` instead takes
    the profile with the largest perturbation factor over ``theta*`` and a
    random grid in the R-ball.
    """
    if not 0 < damping <= 1:
        raise ParameterError("damping must lie in (0, 1]")
    C = lipschitz_certificate(op)
    theta = np.zeros(fm.n_features)
    residual = np.inf
    for it in range(1, max_iters + 1):
        mf = mean_field(mdp, fm, op, theta)
        residual = float(np.linalg.norm(mf.a_matrix @ theta + mf.b_vector))
        if residual <= tol:
            break
        theta = (1 - damping) * theta + damping * _solve(mf.a_matrix, mf.b_vector)
        if not np.all(np.isfinite(theta)) or np.linalg.norm(theta) > 1e8:
            raise NoFixedPointError("fixed-point iteration diverged")
    else:
        raise NoFixedPointError(f"no fixed point within {max_iters} iterations "
                                f"(residual {residual:.3e})")
    # Polish with undamped steps while they shrink the residual; damping alone
    # leaves an error of order tol / |w_l| in theta.
    for _ in range(POLISH_STEPS):
        cand = _solve(mf.a_matrix, mf.b_vector)
        mf_c = mean_field(mdp, fm, op, cand)
        res_c = float(np.linalg.norm(mf_c.a_matrix @ cand + mf_c.b_vector))
        if not res_c < residual:
            break
        theta, mf, residual = cand, mf_c, res_c
    A, b = mf.a_matrix, mf.b_vector
    sym = 0.5 * (A + A.T)
    w_l = float(np.linalg.eigvalsh(sym)[-1])
    r_bound = bounds.radius_bound(mdp.r_max, w_l) if w_l < 0 else np.inf
    R = r_bound if radius_R is None else float(radius_R)
    if not np.isfinite(R):
        raise IndependenceError(f"w_l={w_l} >= 0; pass radius_R explicitly")
    G = bounds.g_constant(mdp.r_max, R)
    mix = mixing_for(mdp, fm, op, theta)
    if mixing == "worst_case":
        rng = np.random.default_rng(seed)
        for th in sample_ball(rng, grid_size, fm.n_features, R):
            cand = mixing_for(mdp, fm, op, th)
            if bounds.tv_perturbation_factor(cand.m, cand.rho) > \
                    bounds.tv_perturbation_factor(mix.m, mix.rho):
                mix = cand
    elif mixing != "theta_star":
        raise ParameterError(f"unknown mixing mode {mixing!r}")
    lam = bounds.lambda_const(G, mdp.n_actions, mix.m, mix.rho)
    shifted = A + C * lam * np.eye(fm.n_features)
    w_s = -float(np.linalg.eigvalsh(0.5 * (shifted + shifted.T))[-1])
    mu = stationary_action_measure(mdp, fm, op, theta)
    return FixedPointReport(theta_star=theta, residual=residual, w_s=w_s, w_l=w_l, lam=lam,
                            assumption2_ok=w_s > 0, radius_bound=r_bound,
                            gram_independent=gram_report(fm, mu).independent, c_lipschitz=C,
                            radius_R=R, g_const=G, mixing=mix, a_matrix=A, b_vector=b,
                            mu_star=mu, iterations=it)


def exact_q(mdp: FiniteMdp, policy) -> np.ndarray:
    """``Q^pi`` from the linear system ``Q = r + gamma P Pi Q``."""
    pi = policy.probs if isinstance(policy, PolicyMatrix) else np.asarray(policy, dtype=float)
    S, A = mdp.n_states, mdp.n_actions
    M = np.einsum("xay,yb->xayb", mdp.kernel, pi).reshape(S * A, S * A)
    q = np.linalg.solve(np.eye(S * A) - mdp.gamma * M, mdp.rewards.reshape(-1))
    return q.reshape(S, A)


def bias_functional(theta, obs: Observation, theta_star, mdp: FiniteMdp, fm: FeatureMap,
                    op: PolicyOperator, gamma: float | None = None) -> float:
    """``<theta - theta*, g(theta; O) - gbar(theta)>`` with ``gbar`` exact."""
    theta = np.asarray(theta, dtype=float)
    gamma = mdp.gamma if gamma is None else gamma
    g = semi_gradient(theta, obs, gamma, fm)
    gbar = mean_field_gradient(mdp, fm, op, theta)
    return float((theta - np.asarray(theta_star)) @ (g - gbar))
