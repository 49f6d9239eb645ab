"""Closed-form finite-sample bounds for projected and fitted SARSA.

All logarithms are natural.  Every evaluator returns a :class:`BoundResult`
carrying the constants it used, so audits can print each additive term.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from .errors import BoundInapplicableWarning, ContradictionError, ParameterError


def g_constant(r_max: float, radius_R: float) -> float:
    """Uniform bound ``G = r_max + 2R`` on the semi-gradient norm."""
    return r_max + 2.0 * radius_R


def _check_rho(rho: float) -> None:
    if not 0.0 < rho < 1.0:
        raise ParameterError(f"rho={rho} must lie in (0, 1)")


def mixing_steps(m: float, rho: float) -> int:
    """``ceil(log_rho(1/m))`` clipped at 0.

    For ``m < 1`` the raw ceiling is negative; the burn-in it counts cannot
    be, so it is clipped.
    """
    _check_rho(rho)
    if m <= 0:
        raise ParameterError("m must be positive")
    return max(0, math.ceil(math.log(1.0 / m) / math.log(rho)))


def lambda_const(g: float, n_actions: int, m: float, rho: float) -> float:
    """``lambda = G |A| (2 + ceil(log_rho 1/m) + 1/(1 - rho))``."""
    return g * n_actions * (2 + mixing_steps(m, rho) + 1.0 / (1.0 - rho))


def tv_perturbation_factor(m: float, rho: float) -> float:
    """``ceil(log_rho 1/m) + 1/(1 - rho)``: stationary-law sensitivity to the kernel."""
    return mixing_steps(m, rho) + 1.0 / (1.0 - rho)


def tau0(m: float, rho: float, alpha: float) -> int:
    """Smallest ``t >= 0`` with ``m rho^t <= alpha``."""
    _check_rho(rho)
    if not alpha > 0:
        raise ParameterError("alpha must be positive")
    if m <= alpha:
        return 0
    t = max(0, math.ceil(math.log(alpha / m) / math.log(rho)))
    while t > 0 and m * rho ** (t - 1) <= alpha:
        t -= 1
    while m * rho**t > alpha:
        t += 1
    return t


def tau0_block(m: float, rho: float, alpha: float, block: int) -> int:
    """Smallest multiple ``n B`` (``n >= 0``) with ``m rho^(nB) <= alpha``."""
    if block < 1:
        raise ParameterError("block must be >= 1")
    t = tau0(m, rho, alpha)
    return block * math.ceil(t / block)


@dataclass(frozen=True)
class BoundInputs:
    g_const: float
    lam: float
    c_lipschitz: float
    n_actions: int
    w: float
    w_s: float
    m: float
    rho: float
    horizon_T: int
    inner_B: int = 1
    alpha0: float | None = None
    theta0_error: float | None = None

    def __post_init__(self):
        _check_rho(self.rho)
        if self.g_const <= 0 or self.c_lipschitz <= 0 or self.m <= 0 or self.n_actions < 1:
            raise ParameterError("G, C, m must be positive and |A| >= 1")
        if self.horizon_T < 1 or self.inner_B < 1:
            raise ParameterError("horizon_T and inner_B must be >= 1")


@dataclass
class BoundResult:
    total: float
    terms: dict
    tau0: int
    lam: float
    g_const: float
    horizon_T: int
    applicable: bool = True
    notes: list = field(default_factory=list)

    @property
    def transient(self) -> float:
        return self.terms["transient"]

    @property
    def plateau(self) -> float:
        return self.terms["plateau"]

    def audit_row(self) -> dict:
        vals = list(self.terms.values())
        return {"T": self.horizon_T, "tau0": self.tau0, "lambda": self.lam,
                "term1": vals[0], "term2": vals[1] if len(vals) > 1 else 0.0, "total": self.total}


def _inapplicable(note: str, notes: list) -> bool:
    warnings.warn(note, BoundInapplicableWarning, stacklevel=3)
    notes.append(note)
    return False


def theorem1_bound(inp: BoundInputs) -> BoundResult:
    """MSE bound for SARSA with ``alpha_t = 1/(2w(t+1))`` after ``T`` steps."""
    G, lam, C, nA, w, rho = inp.g_const, inp.lam, inp.c_lipschitz, inp.n_actions, inp.w, inp.rho
    T = inp.horizon_T
    if w <= 0:
        raise ParameterError("w must be positive")
    notes = []
    ok = True
    if inp.w_s <= 0:
        ok = _inapplicable("w_s <= 0: the negative-definiteness assumption fails", notes)
    elif w > inp.w_s:
        ok = _inapplicable(f"w={w} exceeds w_s={inp.w_s}", notes)
    alpha_T = 1.0 / (2.0 * w * (T + 1))
    t0 = tau0(inp.m, rho, alpha_T)
    term1 = (G**2 * (4 * C * nA * G * t0**2 + (12 + 2 * lam * C) * t0 + 1)
             * (math.log(T) + 1) / (4 * w**2 * T))
    term2 = 2 * G**2 * (t0 * w + w + 1.0 / rho) / (w**2 * T)
    return BoundResult(term1 + term2, {"term1": term1, "term2": term2}, t0, lam, G, T, ok, notes)


def theorem2_bound(inp: BoundInputs) -> BoundResult:
    """Constant-step SARSA: exponentially decaying transient plus a plateau."""
    G, lam, C, nA, ws, rho = inp.g_const, inp.lam, inp.c_lipschitz, inp.n_actions, inp.w_s, inp.rho
    a0 = inp.alpha0
    if a0 is None or not a0 > 0:
        raise ParameterError("alpha0 must be positive")
    if ws <= 0:
        raise ParameterError("w_s <= 0: the negative-definiteness assumption fails")
    if a0 >= 1.0 / (2.0 * ws):
        raise ParameterError(f"alpha0={a0} must be < 1/(2 w_s) = {1 / (2 * ws)}")
    t0 = tau0(inp.m, rho, a0)
    err0 = math.nan if inp.theta0_error is None else inp.theta0_error
    transient = math.exp(-2.0 * a0 * ws * inp.horizon_T) * err0
    plateau = a0 * G**2 * ((12 + 2 * lam * C) * t0 + 4 * G * C * nA * t0**2 + 8 / rho + 1) / (2 * ws)
    return BoundResult(transient + plateau, {"transient": transient, "plateau": plateau},
                       t0, lam, G, inp.horizon_T)


def theorem3_bounds(inp: BoundInputs, schedule: str = "decaying") -> BoundResult:
    """Fitted SARSA after ``T = inp.horizon_T`` blocks of ``B`` steps.

    ``schedule="decaying"`` uses ``alpha_t = 1/(2tw)``; ``"constant"`` uses
    ``alpha0 < 1/(2 w_s B)`` and returns transient and plateau.
    """
    G, lam, C, nA, rho, B = inp.g_const, inp.lam, inp.c_lipschitz, inp.n_actions, inp.rho, inp.inner_B
    T = inp.horizon_T
    notes = []
    if schedule == "decaying":
        w = inp.w
        if w <= 0:
            raise ParameterError("w must be positive")
        ok = True
        if inp.w_s <= 0:
            ok = _inapplicable("w_s <= 0: the negative-definiteness assumption fails", notes)
        elif w > inp.w_s:
            ok = _inapplicable(f"w={w} exceeds w_s={inp.w_s}", notes)
        alpha_TB = 1.0 / (2.0 * T * B * w)
        t0 = tau0_block(inp.m, rho, alpha_TB, B)
        lead = 4 * G**2 * (t0 + B) * w
        logpart = (math.log(T) + 1) * ((6 + lam * C) * G**2 * t0 + (6.5 + lam * C) * G**2 * B
                                       + C * nA * G**3 * t0**2)
        tail = 4 * G**2 / rho + 0.5 * B * G**2
        denom = w**2 * B * T
        term1 = (lead + tail) / denom
        term2 = logpart / denom
        return BoundResult(term1 + term2, {"term1": term1, "term2": term2}, t0, lam, G, T, ok, notes)
    if schedule != "constant":
        raise ParameterError(f"unknown schedule {schedule!r}")
    ws, a0 = inp.w_s, inp.alpha0
    if a0 is None or not a0 > 0:
        raise ParameterError("alpha0 must be positive")
    if ws <= 0:
        raise ParameterError("w_s <= 0: the negative-definiteness assumption fails")
    if a0 >= 1.0 / (2.0 * ws * B):
        raise ParameterError(f"alpha0={a0} must be < 1/(2 w_s B) = {1 / (2 * ws * B)}")
    t0 = tau0_block(inp.m, rho, a0, B)
    err0 = math.nan if inp.theta0_error is None else inp.theta0_error
    transient = math.exp(-2.0 * ws * B * a0 * T) * err0
    plateau = a0 * (B * G**2 + 2 * (6 + lam * C) * G**2 * (t0 + B) + 8 * G**2 / rho
                    + 2 * nA * G**3 * t0**2) / (2 * ws)
    return BoundResult(transient + plateau, {"transient": transient, "plateau": plateau},
                       t0, lam, G, T)


def radius_bound(r_max: float, w_l: float) -> float:
    """``r_max / |w_l|``, an upper bound on ``||theta*||``."""
    if w_l >= 0:
        raise ContradictionError(f"w_l={w_l} must be negative (features dependent or oracle failed)")
    return r_max / abs(w_l)


def coupling_drift_bound(c_lipschitz: float, n_actions: int, g_const: float, alphas) -> dict:
    """TV bound between the SARSA law of ``O_t`` and its frozen-policy copy.

    ``alphas`` are ``alpha_{t-tau}, ..., alpha_{t-1}``.  Returns the
    recursive state term ``C|A|G sum_j sum_{i<=j} alpha_i``, the two action
    terms ``C|A|G (sum_{t-tau}^{t-1} + sum_{t-tau}^{t-2}) alpha_i`` and
    their total.
    """
    alphas = [float(a) for a in alphas]
    scale = c_lipschitz * n_actions * g_const
    partial = 0.0
    nested = 0.0
    for a in alphas:
        partial += a
        nested += partial
    single = sum(alphas)
    actions = scale * (single + sum(alphas[:-1]))
    state = scale * nested
    return {"state_term": state, "action_terms": actions, "drift_term": scale * single,
            "total": state + actions}
