import numpy as np
import pytest
from hypothesis import given, settings, strategies as st, HealthCheck
from hypothesis.extra.numpy import arrays

from linsarsa import features, oracle, policy
from linsarsa.errors import DegenerateFeaturesError, ParameterError


def test_normalize_identity_when_max_is_one():
    raw = np.eye(4).reshape(2, 2, 4)
    fm = features.normalize(raw)
    assert np.array_equal(fm.table, raw)


def test_normalize_single_vector():
    fm = features.normalize([3.0, 4.0])
    np.testing.assert_allclose(fm.table[0, 0], [0.6, 0.8])


def test_normalize_zero_table():
    with pytest.raises(DegenerateFeaturesError):
        features.normalize(np.zeros((2, 2, 3)))


@settings(max_examples=50, deadline=None)
@given(arrays(float, (3, 2, 4), elements=st.floats(-50, 50)))
def test_normalize_bounds_norm(raw):
    peak = np.linalg.norm(raw, axis=-1).max()
    if peak == 0:
        return
    fm = features.normalize(raw)
    out = np.linalg.norm(fm.table, axis=-1).max()
    assert out <= 1.0
    if peak > 1:
        assert out == pytest.approx(1.0, abs=1e-15)


def test_feature_map_rejects_long_vectors():
    with pytest.raises(ParameterError):
        features.FeatureMap(np.full((1, 1, 2), 1.0))


def test_evaluate_one_hot():
    fm = features.one_hot(3, 2)
    for x in range(3):
        for a in range(2):
            v = features.evaluate(fm, x, a)
            assert v[x * 2 + a] == 1.0 and v.sum() == 1.0
            assert np.array_equal(v, features.evaluate(fm, x, a))
    assert np.all(fm.q_values(np.zeros(6)) == 0)
    with pytest.raises(ParameterError):
        features.evaluate(fm, 3, 0)


def test_gram_one_hot_uniform():
    fm = features.one_hot(2, 2)
    mu = np.full((2, 2), 0.25)
    rep = features.gram_report(fm, mu)
    np.testing.assert_allclose(rep.gram, np.diag(np.full(4, 0.25)))
    assert rep.min_eigenvalue == pytest.approx(0.25) and rep.independent


def test_gram_duplicate_column():
    base = features.random_gaussian(3, 2, 2, seed=1).table
    fm = features.FeatureMap(np.concatenate([base, base[..., :1]], axis=-1) / np.sqrt(2))
    rep = features.gram_report(fm, np.full((3, 2), 1 / 6))
    assert not rep.independent and rep.min_eigenvalue <= features.INDEPENDENCE_TOL


def test_gram_too_few_support_pairs():
    fm = features.random_gaussian(2, 2, 3, seed=0)
    mu = np.array([[0.5, 0.0], [0.5, 0.0]])
    assert not features.gram_report(fm, mu).independent


@pytest.mark.parametrize("seed", range(5))
def test_gram_matches_weighted_rank(two_state, seed):
    fm = features.random_gaussian(2, 2, 2, seed=seed)
    op = policy.PolicyOperator.softmax(5.0)
    try:
        rep = oracle.solve_fixed_point(two_state, fm, op)
        mu = rep.mu_star
    except Exception:
        mu = oracle.stationary_action_measure(two_state, fm, op, np.zeros(2))
    gram = features.gram_report(fm, mu)
    M = (np.sqrt(mu)[..., None] * fm.table).reshape(-1, 2)
    sv = np.linalg.svd(M, compute_uv=False)
    # sv^2 are the Gram eigenvalues
    assert gram.independent == bool(sv.min() ** 2 > features.INDEPENDENCE_TOL)


def test_polynomial_family():
    fm = features.polynomial(5, 2, degree=2)
    assert fm.n_features == 6
    assert np.linalg.norm(fm.table, axis=-1).max() <= 1.0
    assert features.gram_report(fm, np.full((5, 2), 0.1)).independent
