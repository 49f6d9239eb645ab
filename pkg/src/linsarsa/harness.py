"""Experiment orchestration: replicated runs, MSE curves, bound checks, diagnostics."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.spatial.distance import pdist

from . import bounds, features, io, oracle
from .errors import BoundInapplicableWarning, FitError, NoFixedPointError, ParameterError
from .features import FeatureMap
from .learner import LearnerConfig, StepSchedule, log_checkpoints, project, run_fitted_sarsa, \
    run_sarsa, simulate
from .mdp import FiniteMdp, build_random_mdp, two_state_mdp
from .policy import PolicyOperator, empirical_lipschitz, improve

SIGMA_GRID = (1.0, 2.0, 5.0, 10.0, 20.0)
# The short grid never certifies an instance we ship, so it continues geometrically.
SIGMA_GRID_EXTENDED = SIGMA_GRID + tuple(float(k * 10**e) for e in range(1, 8) for k in (5, 10, 20))
MODES = ("mse", "bound_check", "b_sweep", "coupling", "chatter_demo")
_MASK64 = (1 << 64) - 1


def splitmix64(master: int, index: int) -> int:
    """Seed for replication ``index``: one splitmix64 output from ``master``."""
    z = (int(master) + (int(index) + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def replication_seeds(master: int, n: int) -> list[int]:
    return [splitmix64(master, i) for i in range(n)]


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment; serialized as JSON.

    ``operator`` may set its parameter to ``"auto"`` (softmax only) to pick
    the smallest certified temperature.  A schedule ``value`` of ``"w_s"``
    is resolved from the oracle.  ``radius_R = None`` means ``r_max/|w_l|``.
    """

    mdp: dict = field(default_factory=lambda: {"kind": "two_state"})
    features: dict = field(default_factory=lambda: {"kind": "one_hot"})
    operator: dict = field(default_factory=lambda: {"kind": "softmax", "sigma": "auto"})
    schedule: dict = field(default_factory=lambda: {"kind": "decaying", "value": "w_s"})
    horizon_T: int = 2**14
    inner_B: int = 1
    radius_R: float | None = None
    n_replications: int = 200
    checkpoints: list | None = None
    output_dir: str = "out"
    mode: str = "mse"
    master_seed: int = 0
    theta0: list | None = None
    x0: int | None = None
    b_list: list = field(default_factory=lambda: [1, 4, 16])
    coupling_t: int = 10_000
    coupling_taus: list = field(default_factory=lambda: [10, 50, 200])
    chatter_sigma: float = 1.0
    chatter_candidates: int = 40
    bound_check: bool = True
    mixing: str = "theta_star"
    name: str = "experiment"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}")
        if self.n_replications < 1:
            raise ParameterError("n_replications must be >= 1")
        if self.checkpoints is not None:
            cps = [int(c) for c in self.checkpoints]
            if cps != sorted(cps):
                raise ParameterError("checkpoints must be sorted ascending")
            self.checkpoints = cps

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config is not valid JSON: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


@dataclass
class Instance:
    label: str
    mdp: FiniteMdp
    fm: FeatureMap
    op: PolicyOperator
    report: oracle.FixedPointReport | None


def make_mdp(spec: dict) -> FiniteMdp:
    kind = spec.get("kind")
    if kind == "two_state":
        return two_state_mdp()
    if kind == "random":
        return build_random_mdp(int(spec.get("n_states", 10)), int(spec.get("n_actions", 3)),
                                r_max=float(spec.get("r_max", 1.0)),
                                gamma=float(spec.get("gamma", 0.9)),
                                min_prob=float(spec.get("min_prob", 0.01)),
                                seed=int(spec.get("seed", 0)))
    if kind == "file":
        return io.read_mdp(spec["path"])
    raise ParameterError(f"unknown mdp kind {kind!r}")


def make_features(spec: dict, mdp: FiniteMdp) -> FeatureMap:
    kind = spec.get("kind")
    S, A = mdp.n_states, mdp.n_actions
    if kind == "one_hot":
        return features.one_hot(S, A)
    if kind == "random_gaussian":
        return features.random_gaussian(S, A, int(spec.get("n_features", 4)), int(spec.get("seed", 0)))
    if kind == "polynomial":
        return features.polynomial(S, A, int(spec.get("degree", 2)))
    if kind == "file":
        return io.read_features(spec["path"])
    raise ParameterError(f"unknown feature kind {kind!r}")


def select_sigma(mdp: FiniteMdp, fm: FeatureMap, grid=SIGMA_GRID_EXTENDED, mixing="theta_star"):
    """Smallest softmax temperature in ``grid`` whose fixed point certifies ``w_s > 0``."""
    for sigma in grid:
        op = PolicyOperator.softmax(sigma)
        try:
            rep = oracle.solve_fixed_point(mdp, fm, op, mixing=mixing)
        except NoFixedPointError:
            continue
        if rep.assumption2_ok:
            return op, rep
    raise NoFixedPointError("no temperature in the grid satisfies w_s > 0")


def build_instance(cfg: ExperimentConfig, label: str | None = None) -> Instance:
    mdp = make_mdp(cfg.mdp)
    fm = make_features(cfg.features, mdp)
    spec = dict(cfg.operator)
    if spec.get("kind") == "softmax" and spec.get("sigma") == "auto":
        op, rep = select_sigma(mdp, fm, mixing=cfg.mixing)
        if cfg.radius_R is not None:
            rep = oracle.solve_fixed_point(mdp, fm, op, radius_R=cfg.radius_R, mixing=cfg.mixing)
    else:
        op = PolicyOperator.from_dict(spec)
        rep = None
        if op.kind != "epsilon_greedy":
            rep = oracle.solve_fixed_point(mdp, fm, op, radius_R=cfg.radius_R, mixing=cfg.mixing)
    return Instance(label or cfg.name, mdp, fm, op, rep)


def default_suite(mixing: str = "theta_star") -> list[Instance]:
    """TwoState with tabular features plus five random 10-state, 3-action MDPs (N = 4)."""
    out = []
    mdp = two_state_mdp()
    fm = features.one_hot(2, 2)
    op, rep = select_sigma(mdp, fm, mixing=mixing)
    out.append(Instance("two_state", mdp, fm, op, rep))
    for i in range(1, 6):
        mdp = build_random_mdp(10, 3, r_max=1.0, gamma=0.9, min_prob=0.01, seed=i)
        fm = features.random_gaussian(10, 3, 4, seed=100 + i)
        op, rep = select_sigma(mdp, fm, mixing=mixing)
        out.append(Instance(f"random_{i}", mdp, fm, op, rep))
    return out


def suite_config(inst: Instance) -> dict:
    """``mdp``/``features`` config fields reproducing a default-suite instance."""
    if inst.label == "two_state":
        return {"mdp": {"kind": "two_state"}, "features": {"kind": "one_hot"}}
    i = int(inst.label.split("_")[1])
    return {"mdp": {"kind": "random", "n_states": 10, "n_actions": 3, "gamma": 0.9,
                    "min_prob": 0.01, "r_max": 1.0, "seed": i},
            "features": {"kind": "random_gaussian", "n_features": 4, "seed": 100 + i}}


def resolve_schedule(spec: dict, report, inner_B: int = 1) -> StepSchedule:
    spec = dict(spec)
    if spec.get("value") == "w_s":
        if report is None or not report.w_s > 0:
            raise ParameterError("schedule value 'w_s' needs a certified oracle report")
        spec["value"] = report.w_s
    if spec.get("kind") == "decaying_fitted":
        spec.setdefault("block", inner_B)
    return StepSchedule.from_dict(spec)


def learner_config(cfg: ExperimentConfig, inst: Instance, schedule: StepSchedule | None = None,
                   horizon_T: int | None = None, inner_B: int | None = None) -> LearnerConfig:
    R = cfg.radius_R
    if R is None:
        if inst.report is None:
            raise ParameterError("radius_R is required when no oracle report exists")
        R = inst.report.radius_R
    B = cfg.inner_B if inner_B is None else inner_B
    sch = resolve_schedule(cfg.schedule, inst.report, B) if schedule is None else schedule
    return LearnerConfig(radius_R=R, schedule=sch, horizon_T=cfg.horizon_T if horizon_T is None
                         else horizon_T, inner_B=B, seed=cfg.master_seed,
                         theta0=cfg.theta0, x0=cfg.x0)


@dataclass
class MseCurve:
    ts: np.ndarray
    mse_mean: np.ndarray
    mse_stderr: np.ndarray
    bound_value: np.ndarray
    bound_results: dict
    report: oracle.FixedPointReport
    label: str = ""
    gradient_norm_max: float = 0.0
    theta_norm_max: float = 0.0
    drift_ratio_max: float = 0.0
    radius_R: float = 0.0
    g_const: float = 0.0
    final_thetas: np.ndarray | None = None
    q_gap: float = math.nan

    def rows(self):
        return [[int(t), m, s, b] for t, m, s, b in
                zip(self.ts, self.mse_mean, self.mse_stderr, self.bound_value)]

    def csv(self) -> str:
        return io.csv_text(["T", "mse_mean", "mse_stderr", "bound"], self.rows())

    def violations(self) -> list[int]:
        ok = np.isfinite(self.bound_value)
        return [int(t) for t in self.ts[ok][self.mse_mean[ok] > self.bound_value[ok]]]


def bound_inputs(report, n_actions: int, schedule: StepSchedule, horizon_T: int, inner_B: int,
                 theta0_error: float) -> bounds.BoundInputs:
    w = schedule.value if schedule.kind != "constant" else report.w_s
    alpha0 = schedule.value if schedule.kind == "constant" else None
    return bounds.BoundInputs(g_const=report.g_const, lam=report.lam, c_lipschitz=report.c_lipschitz,
                              n_actions=n_actions, w=w, w_s=report.w_s, m=report.m, rho=report.rho,
                              horizon_T=horizon_T, inner_B=inner_B, alpha0=alpha0,
                              theta0_error=theta0_error)


def bound_at(report, n_actions: int, schedule: StepSchedule, t: int, inner_B: int,
             theta0_error: float):
    """Applicable bound on ``E||theta_t - theta*||^2`` or None.

    Fitted runs are bounded only at block boundaries, with ``t / B`` blocks.
    """
    if t < 1 or t % inner_B:
        return None
    if schedule.kind == "constant" and schedule.value == 0:
        return None
    if schedule.kind == "decaying" and inner_B != 1:
        return None
    T = t // inner_B
    inp = bound_inputs(report, n_actions, schedule, T, inner_B, theta0_error)
    if schedule.kind == "decaying":
        return bounds.theorem1_bound(inp)
    if schedule.kind == "decaying_fitted":
        return bounds.theorem3_bounds(inp, "decaying")
    if inner_B == 1:
        return bounds.theorem2_bound(inp)
    return bounds.theorem3_bounds(inp, "constant")


def certificate_holds(inst: Instance, radius: float, seed: int = 0, n_pairs: int = 2000) -> bool:
    """Empirical Lipschitz estimate (global and local pairs) against the certificate."""
    rng = np.random.default_rng(seed)
    C = inst.op.lipschitz_c
    est = max(empirical_lipschitz(inst.op, inst.fm, n_pairs, radius, rng),
              empirical_lipschitz(inst.op, inst.fm, n_pairs, radius, rng, local_step=1e-4))
    return est <= C + 1e-9


def run_mse_experiment(cfg: ExperimentConfig, inst: Instance | None = None,
                       schedule: StepSchedule | None = None) -> MseCurve:
    """Replicated runs of SARSA or fitted SARSA and their MSE against ``theta*``."""
    inst = build_instance(cfg) if inst is None else inst
    rep = inst.report
    if rep is None:
        raise ParameterError("MSE experiments need an operator with a fixed point")
    lcfg = learner_config(cfg, inst, schedule)
    sch = lcfg.schedule
    describe_only = not rep.assumption2_ok
    if describe_only:
        warnings.warn(f"{inst.label}: w_s={rep.w_s:.3e} <= 0, reporting MSE without bounds",
                      BoundInapplicableWarning, stacklevel=2)
    elif inst.op.kind == "mellowmax" and not certificate_holds(inst, lcfg.radius_R, cfg.master_seed):
        describe_only = True
        warnings.warn(f"{inst.label}: empirical Lipschitz estimate exceeds the mellowmax "
                      "certificate, reporting MSE without bounds", BoundInapplicableWarning,
                      stacklevel=2)
    elif cfg.bound_check and sch.kind == "constant" and sch.value > 0:
        limit = 1.0 / (2.0 * rep.w_s * lcfg.inner_B)
        if sch.value >= limit:
            raise ParameterError(f"alpha0={sch.value} must be < {limit} for the bound")
    ckpts = cfg.checkpoints if cfg.checkpoints is not None else log_checkpoints(lcfg.horizon_T)
    seeds = replication_seeds(cfg.master_seed, cfg.n_replications)
    batch = simulate(inst.mdp, inst.fm, inst.op, lcfg, seeds, ckpts)
    err = ((batch.thetas - rep.theta_star) ** 2).sum(axis=-1)
    K = err.shape[1]
    mean = err.mean(axis=1)
    stderr = err.std(axis=1, ddof=1) / math.sqrt(K) if K > 1 else np.zeros_like(mean)
    theta0 = np.zeros(inst.fm.n_features) if lcfg.theta0 is None else np.asarray(lcfg.theta0)
    err0 = float(((project(theta0, lcfg.radius_R) - rep.theta_star) ** 2).sum())
    bvals = np.full(len(batch.ts), np.nan)
    results = {}
    if not describe_only:
        for i, t in enumerate(batch.ts):
            res = bound_at(rep, inst.mdp.n_actions, sch, int(t), lcfg.inner_B, err0)
            if res is not None:
                results[int(t)] = res
                bvals[i] = res.total
    pi_star = improve(inst.op, inst.fm, rep.theta_star)
    q_gap = float(np.abs(inst.fm.q_values(rep.theta_star) - oracle.exact_q(inst.mdp, pi_star)).max())
    return MseCurve(ts=batch.ts, mse_mean=mean, mse_stderr=stderr, bound_value=bvals,
                    bound_results=results, report=rep, label=inst.label,
                    gradient_norm_max=float(batch.gradient_norm_max.max()),
                    theta_norm_max=float(batch.theta_norm_max.max()),
                    drift_ratio_max=float(batch.drift_ratio_max.max()),
                    radius_R=lcfg.radius_R, g_const=bounds.g_constant(inst.mdp.r_max, lcfg.radius_R),
                    final_thetas=batch.thetas[-1], q_gap=q_gap)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def fit_rate(curve, tail_fraction: float = 0.5) -> RateFit:
    """Least-squares slope of ``ln mse`` against ``ln T`` over the tail checkpoints.

    ``curve`` is an :class:`MseCurve` or a ``(ts, mse)`` pair.
    """
    if isinstance(curve, MseCurve):
        ts, mse = curve.ts, curve.mse_mean
    else:
        ts, mse = curve
    ts = np.asarray(ts, dtype=float)
    mse = np.asarray(mse, dtype=float)
    keep = ts > 0
    ts, mse = ts[keep], mse[keep]
    if not 0 < tail_fraction <= 1:
        raise ParameterError("tail_fraction must lie in (0, 1]")
    n = max(4, math.ceil(tail_fraction * len(ts)))
    if len(ts) < 4:
        raise FitError("need at least 4 checkpoints with T > 0")
    ts, mse = ts[-n:], mse[-n:]
    if np.any(mse <= 0):
        raise FitError("mse values must be positive to fit on a log scale")
    lx, ly = np.log(ts), np.log(mse)
    if np.ptp(ly) == 0:
        return RateFit(0.0, float(ly[0]), 1.0, n)
    fit = stats.linregress(lx, ly)
    return RateFit(float(fit.slope), float(fit.intercept), float(fit.rvalue**2), n)


def report_fields(rep: oracle.FixedPointReport, op: PolicyOperator | None = None,
                  q_gap: float | None = None) -> dict:
    out = {}
    if op is not None:
        out["operator"] = op.kind
        out["operator_param"] = op.param
    out["theta_star"] = rep.theta_star
    out.update(rep.scalars())
    if q_gap is not None:
        out["q_gap_inf"] = q_gap
    return out


def write_outputs(curve: MseCurve, output_dir, op: PolicyOperator | None = None,
                  rate: RateFit | None = None) -> None:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mse.csv").write_text(curve.csv())
    rows = [list(r.audit_row().values()) for r in curve.bound_results.values()]
    io.write_csv(out / "bound_audit.csv", ["T", "tau0", "lambda", "term1", "term2", "total"], rows)
    (out / "fixed_point.txt").write_text(io.format_report(report_fields(curve.report, op,
                                                                         curve.q_gap)))
    if rate is not None:
        (out / "rate_fit.txt").write_text(io.format_report(
            {"slope": rate.slope, "intercept": rate.intercept, "r_squared": rate.r_squared,
             "n_points": rate.n_points}))


@dataclass
class BSweepRow:
    B: int
    target: str
    final_error_mean: float
    final_error_max: float
    bound_violations: int
    bound_checkpoints: int
    bit_identical: bool | None
    gradient_norm_max: float = 0.0
    theta_norm_max: float = 0.0


def b_sweep(cfg: ExperimentConfig, inst: Instance | None = None, b_list=None,
            budget: int | None = None, n_replications: int | None = None) -> list[BSweepRow]:
    """Fitted SARSA at a fixed sample budget for each block length ``B``.

    Uses ``alpha_0 = 1/(sqrt(2) B w)``, ``alpha_t = 1/(2tw)``.  ``B = budget``
    never improves the policy, so its target is the TD fixed point of
    ``pi_{theta_0}`` rather than ``theta*``.
    """
    inst = build_instance(cfg) if inst is None else inst
    rep = inst.report
    b_list = cfg.b_list if b_list is None else b_list
    budget = cfg.horizon_T if budget is None else budget
    K = cfg.n_replications if n_replications is None else n_replications
    w = resolve_schedule(cfg.schedule, rep).value
    seeds = replication_seeds(cfg.master_seed, K)
    rows = []
    for B in b_list:
        B = int(B)
        if budget % B:
            raise ParameterError(f"budget {budget} is not a multiple of B={B}")
        sch = StepSchedule.decaying_fitted(w, B)
        lcfg = learner_config(cfg, inst, sch, horizon_T=budget, inner_B=B)
        ckpts = sorted({B * n for n in log_checkpoints(budget // B)})
        batch = simulate(inst.mdp, inst.fm, inst.op, lcfg, seeds, ckpts)
        if B == budget:
            theta0 = np.zeros(inst.fm.n_features) if lcfg.theta0 is None else np.asarray(lcfg.theta0)
            target = oracle.td_fixed_point(inst.mdp, inst.fm, improve(inst.op, inst.fm, theta0))
            label = "td_fixed_point"
        else:
            target, label = rep.theta_star, "theta_star"
        final = np.linalg.norm(batch.thetas[-1] - target, axis=1)
        viol = n_b = 0
        if rep.assumption2_ok and B != budget:
            err = ((batch.thetas - rep.theta_star) ** 2).sum(axis=-1).mean(axis=1)
            err0 = float(((batch.thetas[0, 0] - rep.theta_star) ** 2).sum())
            for t, e in zip(batch.ts, err):
                res = bound_at(rep, inst.mdp.n_actions, sch, int(t), B, err0)
                if res is not None:
                    n_b += 1
                    viol += int(e > res.total)
        same = None
        if B == 1:
            one = LearnerConfig(lcfg.radius_R, sch, budget, 1, seeds[0], lcfg.theta0, lcfg.x0)
            a = run_sarsa(inst.mdp, inst.fm, inst.op, one, record_full=True)
            b = run_fitted_sarsa(inst.mdp, inst.fm, inst.op, one, record_full=True)
            same = bool(np.array_equal(a.thetas, b.thetas) and np.array_equal(a.grad_norms, b.grad_norms))
        rows.append(BSweepRow(B, label, float(final.mean()), float(final.max()), viol, n_b, same,
                              float(batch.gradient_norm_max.max()),
                              float(batch.theta_norm_max.max())))
    return rows


def b_sweep_csv(rows: list[BSweepRow]) -> str:
    header = ["B", "target", "final_error_mean", "final_error_max", "bound_violations",
              "bound_checkpoints", "bit_identical", "gradient_norm_max", "theta_norm_max"]
    return io.csv_text(header, [[getattr(r, h) if getattr(r, h) is not None else "" for h in header]
                                for r in rows])


@dataclass(frozen=True)
class CouplingResult:
    t: int
    tau: int
    empirical_tv: float
    mismatch_rate: float
    noise: float
    bound: float
    drift_term: float
    mixing_term: float
    n_replications: int
    gradient_norm_max: float = 0.0
    theta_norm_max: float = 0.0


def _o_cells(obs: np.ndarray, S: int, A: int) -> np.ndarray:
    x, a, y, b = obs.T
    return ((x * A + a) * S + y) * A + b


def coupling_sweep(cfg: ExperimentConfig, t: int, taus, n_replications: int,
                   inst: Instance | None = None,
                   schedule: StepSchedule | None = None) -> list[CouplingResult]:
    """Law of ``O_t`` under SARSA against the chain frozen at ``pi_{theta_{t-tau}}``.

    The two copies share every uniform, so they agree up to step ``t - tau``
    and stay coupled afterwards until an action draw separates them.  The TV
    estimate compares the two ``O_t`` histograms over ``|X|^2 |A|^2`` cells;
    the mismatch rate ``P(O_t != O'_t)`` is a coupling upper bound on the
    true distance.
    """
    inst = build_instance(cfg) if inst is None else inst
    taus = [int(v) for v in taus]
    if any(not 1 <= tau < t for tau in taus):
        raise ParameterError("need t > tau >= 1")
    if n_replications < 100:
        warnings.warn("fewer than 100 replications: histogram TV is unstable", RuntimeWarning,
                      stacklevel=2)
    lcfg = learner_config(cfg, inst, schedule, horizon_T=t + 1, inner_B=1)
    seeds = replication_seeds(cfg.master_seed, n_replications)
    S, A = inst.mdp.n_states, inst.mdp.n_actions
    ncell = S * S * A * A
    base = simulate(inst.mdp, inst.fm, inst.op, lcfg, seeds, [t], capture_obs_at=[t])
    cells = _o_cells(base.captured[t], S, A)
    p = np.bincount(cells, minlength=ncell) / n_replications
    rep = inst.report
    C = rep.c_lipschitz if rep is not None else math.nan
    G = bounds.g_constant(inst.mdp.r_max, lcfg.radius_R)
    out = []
    for tau in taus:
        aux = simulate(inst.mdp, inst.fm, inst.op, lcfg, seeds, [t], freeze_policy_at=t - tau,
                       capture_obs_at=[t])
        cells_aux = _o_cells(aux.captured[t], S, A)
        q = np.bincount(cells_aux, minlength=ncell) / n_replications
        tv = 0.5 * float(np.abs(p - q).sum())
        mis = float(np.mean(cells != cells_aux))
        noise = math.sqrt(max(mis * (1 - mis), 1.0 / n_replications) / n_replications)
        alphas = lcfg.schedule.alphas(np.arange(t - tau, t))
        db = bounds.coupling_drift_bound(C, A, G, alphas)
        mix = 4 * G**2 * rep.m * rep.rho ** (tau - 1) if rep is not None else math.nan
        out.append(CouplingResult(t, tau, tv, mis, noise, db["total"], db["drift_term"], mix,
                                  n_replications,
                                  float(max(base.gradient_norm_max.max(), aux.gradient_norm_max.max())),
                                  float(max(base.theta_norm_max.max(), aux.theta_norm_max.max()))))
    return out


def coupling_diagnostic(cfg: ExperimentConfig, t: int, tau: int, n_replications: int,
                        inst: Instance | None = None) -> tuple[float, float]:
    """``(empirical_tv, bound)`` for a single ``tau``."""
    res = coupling_sweep(cfg, t, [tau], n_replications, inst)[0]
    return res.empirical_tv, res.bound


def coupling_csv(results: list[CouplingResult]) -> str:
    header = ["t", "tau", "empirical_tv", "mismatch_rate", "noise", "bound", "drift_term",
              "mixing_term", "n_replications", "gradient_norm_max", "theta_norm_max"]
    return io.csv_text(header, [[getattr(r, h) for h in header] for r in results])


@dataclass
class ChatterSummary:
    label: str
    found: bool
    greedy_diameter: float
    softmax_diameter: float
    ratio: float
    greedy_shrink: float
    theta_norm_max: float
    radius_R: float
    candidates_screened: int
    candidates_run: int
    epsilon: float
    sigma: float

    def fields(self) -> dict:
        return asdict(self)


def late_diameter(thetas: np.ndarray, window: float = 0.25, max_points: int = 2000,
                  end: int | None = None) -> float:
    """Largest distance between two parameters in the last ``window`` of ``thetas[:end]``."""
    thetas = thetas[:end]
    n = len(thetas)
    late = thetas[n - max(2, int(window * n)):]
    stride = max(1, len(late) // max_points)
    return float(pdist(late[::stride]).max())


def greedy_cycle(mdp: FiniteMdp, fm: FeatureMap, op: PolicyOperator, max_iters: int = 60) -> int:
    """Cycle length of exact policy iteration ``theta <- TD fixed point of op(theta)``.

    0 means the iteration settled on one greedy action table.  A cycle of
    length >= 2 means the exact mean field has no consistent greedy
    fixed point, the structural cause of oscillating SARSA.
    """
    theta = np.zeros(fm.n_features)
    seen = []
    for _ in range(max_iters):
        pi = op.probs(fm.q_values(theta))
        key = tuple(np.argmax(pi, axis=1))
        if key in seen:
            return len(seen) - seen.index(key)
        seen.append(key)
        theta = oracle.td_fixed_point(mdp, fm, pi)
    return 0


def chatter_demo(cfg: ExperimentConfig, max_runs: int = 8) -> ChatterSummary:
    """Search random instances for one where epsilon-greedy SARSA oscillates.

    Up to ``cfg.chatter_candidates`` instances are screened with
    :func:`greedy_cycle`; at most ``max_runs`` cycling ones are then run with
    the epsilon-greedy operator and with softmax at ``cfg.chatter_sigma``
    on the same seed and budget.  ``found`` means the softmax late-window
    diameter is below 10% of the greedy one.  ``greedy_shrink`` compares the
    greedy diameter over the last quarter to the quarter ending at T/2.
    Nothing is asserted: the best candidate is returned either way.
    """
    op_g = PolicyOperator.from_dict(cfg.operator)
    if op_g.kind != "epsilon_greedy":
        raise ParameterError("chatter_demo needs an epsilon_greedy operator")
    op_s = PolicyOperator.softmax(cfg.chatter_sigma)
    R = 10.0 if cfg.radius_R is None else cfg.radius_R
    sch = StepSchedule.from_dict(cfg.schedule)
    lcfg = LearnerConfig(R, sch, cfg.horizon_T, 1, cfg.master_seed, cfg.theta0, cfg.x0)
    best = None
    base_seed = int(cfg.mdp.get("seed", 0))
    screened = runs = 0
    for j in range(cfg.chatter_candidates):
        spec = dict(cfg.mdp, seed=base_seed + j)
        mdp = make_mdp(spec)
        fspec = dict(cfg.features)
        if "seed" in fspec:
            fspec["seed"] = int(fspec["seed"]) + j
        fm = make_features(fspec, mdp)
        screened += 1
        try:
            if greedy_cycle(mdp, fm, op_g) < 2:
                continue
        except Exception:  # noqa: BLE001  singular TD systems are skipped
            continue
        runs += 1
        g = run_sarsa(mdp, fm, op_g, lcfg, record_full=True)
        s = run_sarsa(mdp, fm, op_s, lcfg, record_full=True)
        dg, ds = late_diameter(g.thetas), late_diameter(s.thetas)
        mid = late_diameter(g.thetas, end=len(g.thetas) // 2)
        ratio = ds / dg if dg > 0 else math.inf
        cand = ChatterSummary(f"{spec.get('kind')}_{spec['seed']}", ratio < 0.1, dg, ds, ratio,
                              dg / mid if mid > 0 else math.inf,
                              max(g.theta_norm_max, s.theta_norm_max), R, screened, runs,
                              op_g.param, op_s.param)
        if best is None or cand.ratio < best.ratio:
            best = cand
        if cand.found or runs >= max_runs:
            break
    if best is None:
        return ChatterSummary("none", False, math.nan, math.nan, math.nan, math.nan, math.nan, R,
                              screened, 0, op_g.param, op_s.param)
    best.candidates_screened, best.candidates_run = screened, runs
    return best
