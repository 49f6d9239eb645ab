"""Acceptance gate: one test per criterion, each recording a pass/fail line."""
import math

import numpy as np
import pytest

from linsarsa import bounds, features, harness, oracle
from linsarsa.harness import ExperimentConfig
from linsarsa.learner import Observation
from linsarsa.mdp import build_random_mdp, policy_kernel, two_state_mdp
from linsarsa.policy import PolicyOperator, sample_ball

from acceptance_log import record
from conftest import gamma_zero
from independent import visitation_and_gradient

CHECKPOINTS = [2**k for k in range(8, 15)]
SEED = 2024


def suite_cfg(inst, **kw):
    base = dict(harness.suite_config(inst), operator={"kind": "softmax", "sigma": inst.op.param},
                n_replications=200, master_seed=SEED)
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def decaying_curves(suite):
    out = []
    for inst in suite:
        cfg = suite_cfg(inst, schedule={"kind": "decaying", "value": "w_s"},
                        horizon_T=CHECKPOINTS[-1], checkpoints=CHECKPOINTS)
        out.append((inst, harness.run_mse_experiment(cfg, inst)))
    return out


@pytest.fixture(scope="module")
def constant_curves(suite):
    ckpts = [1000, 50_000, 60_000, 70_000, 80_000, 90_000, 100_000]
    out = []
    for inst in suite:
        cfg = suite_cfg(inst, schedule={"kind": "constant", "value": 0.01}, horizon_T=100_000,
                        checkpoints=ckpts)
        out.append((inst, harness.run_mse_experiment(cfg, inst)))
    return out


@pytest.fixture(scope="module")
def b_rows(two_state_instance):
    inst = two_state_instance
    cfg = suite_cfg(inst, schedule={"kind": "decaying", "value": "w_s"})
    return harness.b_sweep(cfg, inst, b_list=[1, 4, 16, 100_000], budget=100_000,
                           n_replications=50)


@pytest.fixture(scope="module")
def coupling_results(two_state_instance):
    inst = two_state_instance
    cfg = suite_cfg(inst, schedule={"kind": "decaying", "value": "w_s"})
    return harness.coupling_sweep(cfg, 10_000, [10, 50, 200], 10_000, inst)


def extra_instances():
    """Generated instances beyond the suite, certified or not."""
    out = []
    for sigma in (1.0, 5.0, 20.0):
        out.append((two_state_mdp(), features.one_hot(2, 2), PolicyOperator.softmax(sigma)))
    for seed in range(6, 16):
        m = build_random_mdp(8, 3, r_max=1.0, gamma=0.9, min_prob=0.01, seed=seed)
        out.append((m, features.random_gaussian(8, 3, 4, seed=200 + seed),
                    PolicyOperator.softmax(10.0)))
    return out


def test_criterion_01_decaying_bound(decaying_curves):
    bad = {inst.label: c.violations() for inst, c in decaying_curves if c.violations()}
    bounded = all(len(c.bound_results) == len(CHECKPOINTS) for _, c in decaying_curves)
    ratio = max(float(np.max(c.mse_mean / c.bound_value)) for _, c in decaying_curves)
    ok = record(1, not bad and bounded,
                f"{len(decaying_curves)} instances x {len(CHECKPOINTS)} checkpoints, "
                f"violations {bad or 0}, max mse/bound {ratio:.2e}")
    assert ok


def test_criterion_02_rate(decaying_curves):
    fits = {inst.label: harness.fit_rate(c) for inst, c in decaying_curves}
    ok = all(f.slope <= -0.7 and f.r_squared >= 0.9 for f in fits.values())
    worst = max(f.slope for f in fits.values())
    r2 = min(f.r_squared for f in fits.values())
    record(2, ok, f"slopes {', '.join(f'{f.slope:.3f}' for f in fits.values())}; "
           f"worst slope {worst:.3f}, min r^2 {r2:.4f}")
    assert ok


def test_criterion_03_constant_plateau(constant_curves):
    problems = []
    for inst, c in constant_curves:
        limit = 1.0 / (2.0 * c.report.w_s)
        if not 0.01 < limit:
            problems.append(f"{inst.label}: alpha0 >= 1/(2 w_s)")
        for t, m in zip(c.ts, c.mse_mean):
            if t >= 50_000 and not m <= c.bound_results[int(t)].plateau:
                problems.append(f"{inst.label}: mse({t}) above plateau")
        i3, i5 = list(c.ts).index(1000), list(c.ts).index(100_000)
        if not c.mse_mean[i5] < c.mse_mean[i3]:
            problems.append(f"{inst.label}: mse(1e5) >= mse(1e3)")
    ratio = max(float(c.mse_mean[-1] / c.bound_results[100_000].plateau) for _, c in constant_curves)
    ok = record(3, not problems, f"{len(constant_curves)} instances, tail mse/plateau up to "
                f"{ratio:.2e}; {problems or 'mse(1e5) < mse(1e3) everywhere'}")
    assert ok


def test_criterion_04_fitted(b_rows):
    rows = [r for r in b_rows if r.B in (1, 4, 16)]
    errs = {r.B: r.final_error_max for r in rows}
    ok = (all(e <= 0.05 for e in errs.values()) and rows[0].bit_identical is True
          and all(r.bound_violations == 0 and r.bound_checkpoints > 0 for r in rows))
    record(4, ok, f"max final error by B {errs}; B=1 bit-identical {rows[0].bit_identical}; "
           f"bound violations {sum(r.bound_violations for r in rows)} of "
           f"{sum(r.bound_checkpoints for r in rows)} checkpoints")
    assert ok


def test_single_block_reaches_td_fixed_point(b_rows):
    row = [r for r in b_rows if r.B == 100_000][0]
    assert row.target == "td_fixed_point"
    assert row.final_error_max <= 0.05


def test_criterion_05_radius(suite):
    cases = [(i.label, i.mdp, i.report) for i in suite]
    for j, (m, fm, op) in enumerate(extra_instances()):
        cases.append((f"extra_{j}", m, oracle.solve_fixed_point(m, fm, op)))
    bad = [lab for lab, m, rep in cases
           if not np.linalg.norm(rep.theta_star) <= m.r_max / abs(rep.w_l)]
    slack = min(m.r_max / abs(rep.w_l) - np.linalg.norm(rep.theta_star) for _, m, rep in cases)
    ok = record(5, not bad, f"{len(cases)} instances, violations {bad or 0}, "
                f"smallest gap {slack:.3e}")
    assert ok


def test_criterion_06_projection(decaying_curves, constant_curves, b_rows, coupling_results):
    runs = [(f"{i.label}/decaying", c.gradient_norm_max, c.theta_norm_max, c.g_const, c.radius_R)
            for i, c in decaying_curves]
    runs += [(f"{i.label}/constant", c.gradient_norm_max, c.theta_norm_max, c.g_const, c.radius_R)
             for i, c in constant_curves]
    rep = decaying_curves[0][1].report
    runs += [(f"two_state/B={r.B}", r.gradient_norm_max, r.theta_norm_max, rep.g_const,
              rep.radius_R) for r in b_rows]
    runs += [(f"two_state/tau={r.tau}", r.gradient_norm_max, r.theta_norm_max, rep.g_const,
              rep.radius_R) for r in coupling_results]
    bad = [lab for lab, g, th, G, R in runs if not (g <= G and th <= R)]
    worst = max(g / G for _, g, _, G, _ in runs)
    ok = record(6, not bad, f"{len(runs)} runs, violations {bad or 0}, max ||g||/G {worst:.3f}")
    assert ok


def test_criterion_07_descent(suite):
    rng = np.random.default_rng(SEED)
    worst = -math.inf
    n_bad = 0
    for inst in suite:
        rep = inst.report
        g_star = oracle.mean_field_gradient(inst.mdp, inst.fm, inst.op, rep.theta_star)
        for th in sample_ball(rng, 10_000, inst.fm.n_features, rep.radius_R):
            d = th - rep.theta_star
            g = oracle.mean_field_gradient(inst.mdp, inst.fm, inst.op, th)
            gap = d @ (g - g_star) + rep.w_s * (d @ d)
            worst = max(worst, gap)
            n_bad += int(gap > 1e-9)
    ok = record(7, n_bad == 0, f"{len(suite)} x 10000 points, violations {n_bad}, "
                f"max <d, dg> + w_s|d|^2 = {worst:.3e}")
    assert ok


def test_criterion_08_tv_perturbation(suite):
    rng = np.random.default_rng(SEED + 1)
    n_bad = 0
    worst = 0.0
    for inst in suite:
        rep = inst.report
        n, N = 1000, inst.fm.n_features
        factor = inst.mdp.n_actions * rep.c_lipschitz * bounds.tv_perturbation_factor(rep.m, rep.rho)
        first = sample_ball(rng, n, N, rep.radius_R)
        # half the pairs are far apart, half are local perturbations
        second = np.concatenate([sample_ball(rng, n // 2, N, rep.radius_R),
                                 first[n // 2:] + sample_ball(rng, n - n // 2, N, 1e-3 * rep.radius_R)])
        for t1, t2 in zip(first, second):
            p1 = oracle.state_law(inst.mdp, inst.fm, inst.op, t1)
            p2 = oracle.state_law(inst.mdp, inst.fm, inst.op, t2)
            tv = 0.5 * np.abs(p1 - p2).sum()
            lim = factor * np.linalg.norm(t1 - t2)
            worst = max(worst, tv / lim)
            n_bad += int(tv > lim)
    ok = record(8, n_bad == 0, f"{len(suite)} x 1000 pairs, violations {n_bad}, "
                f"max tv/bound {worst:.3e}")
    assert ok


def _random_obs(rng, m):
    x, a = rng.integers(m.n_states), rng.integers(m.n_actions)
    y, b = rng.integers(m.n_states), rng.integers(m.n_actions)
    return Observation(int(x), int(a), int(y), int(b), float(m.rewards[x, a]))


def test_criterion_09_bias_functional(suite):
    rng = np.random.default_rng(SEED + 2)
    size_bad = lip_bad = 0
    size_ratio = lip_ratio = 0.0
    for inst in suite:
        rep = inst.report
        G, N = rep.g_const, inst.fm.n_features
        lip = (6 + rep.lam * rep.c_lipschitz) * G
        first = sample_ball(rng, 10_000, N, rep.radius_R)
        second = np.concatenate([sample_ball(rng, 5000, N, rep.radius_R),
                                 first[5000:] + sample_ball(rng, 5000, N, 1e-3 * rep.radius_R)])
        norms = np.linalg.norm(second, axis=1, keepdims=True)
        second = np.where(norms > rep.radius_R, second * rep.radius_R / norms, second)
        for t1, t2 in zip(first, second):
            obs = _random_obs(rng, inst.mdp)
            l1 = oracle.bias_functional(t1, obs, rep.theta_star, inst.mdp, inst.fm, inst.op)
            l2 = oracle.bias_functional(t2, obs, rep.theta_star, inst.mdp, inst.fm, inst.op)
            big = max(abs(l1), abs(l2))
            size_ratio = max(size_ratio, big / (2 * G**2))
            size_bad += int(big > 2 * G**2)
            dist = np.linalg.norm(t1 - t2)
            if dist > 0:
                slope = abs(l1 - l2) / dist
                lip_ratio = max(lip_ratio, slope / lip)
                lip_bad += int(slope > lip)
    ok = record(9, size_bad == 0 and lip_bad == 0,
                f"{len(suite)} x 10000 pairs, |Lambda| violations {size_bad} (max ratio "
                f"{size_ratio:.3e}), Lipschitz violations {lip_bad} (max ratio {lip_ratio:.3e})")
    assert ok


def test_criterion_10_oracle_equivalence(suite):
    rng = np.random.default_rng(SEED + 3)
    worst_z = 0.0
    closed_err = 0.0
    for j, inst in enumerate(suite):
        rep = inst.report
        theta = sample_ball(rng, 1, inst.fm.n_features, rep.radius_R)[0]
        pi = inst.op.probs(inst.fm.q_values(theta))
        _, grads = visitation_and_gradient(inst.mdp, inst.fm, pi, theta, seed=SEED + j)
        mc = grads.mean(axis=0)
        se = grads.std(axis=0, ddof=1) / math.sqrt(len(grads))
        exact = oracle.mean_field_gradient(inst.mdp, inst.fm, inst.op, theta)
        worst_z = max(worst_z, float(np.max(np.abs(mc - exact) / se)))
        m0 = gamma_zero(inst.mdp)
        fm = features.one_hot(m0.n_states, m0.n_actions)
        th = rng.normal(size=fm.n_features)
        mu = oracle.stationary_action_measure(m0, fm, inst.op, th).reshape(-1)
        mf = oracle.mean_field(m0, fm, inst.op, th)
        r = m0.rewards.reshape(-1)
        fp = oracle.solve_fixed_point(m0, fm, inst.op)
        closed_err = max(closed_err, float(np.abs(mf.a_matrix + np.diag(mu)).max()),
                         float(np.abs(mf.b_vector - mu * r).max()),
                         float(np.abs(fp.theta_star - r).max()))
    ok = record(10, worst_z <= 3.0 and closed_err <= 1e-10,
                f"max |MC - exact|/SE {worst_z:.2f} over {len(suite)} instances (1e6 samples each); "
                f"gamma=0 closed-form error {closed_err:.1e}")
    assert ok


def test_criterion_11_mixing_certificate(suite):
    # Recompute d(t) from powers of the kernel and a separately solved
    # stationary law.  TV values below 1e-12 are round-off of exact zeros.
    worst = 0.0
    n_bad = 0
    for inst in suite:
        rep = inst.report
        pi = inst.op.probs(inst.fm.q_values(rep.theta_star))
        K = policy_kernel(inst.mdp, pi)
        w, v = np.linalg.eig(K.T)
        d = np.real(v[:, np.argmin(np.abs(w - 1))])
        d = d / d.sum()
        Kt = np.eye(len(d))
        for t in range(201):
            dt = float(0.5 * np.abs(Kt - d).sum(axis=1).max())
            env = rep.m * rep.rho**t
            if dt > 1e-12:
                worst = max(worst, dt / env)
                n_bad += int(dt > env)
            Kt = Kt @ K
    ok = record(11, n_bad == 0, f"{len(suite)} instances x t = 0..200, violations {n_bad}, "
                f"max d(t)/(m rho^t) {worst:.3f}")
    assert ok


def test_criterion_12_coupling(coupling_results):
    res = coupling_results
    below = all(r.empirical_tv <= r.bound for r in res)
    mono = all(b.empirical_tv >= a.empirical_tv - 3 * math.hypot(a.noise, b.noise)
               for a, b in zip(res, res[1:]))
    detail = "; ".join(f"tau={r.tau}: tv {r.empirical_tv:.2e} (mismatch {r.mismatch_rate:.2e}) "
                       f"<= bound {r.bound:.2e}" for r in res)
    ok = record(12, below and mono, f"{detail}; monotone within noise {mono}")
    assert ok
