import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pubmto import optim as O
from pubmto.umm import ConfigError, UmmConfig, apply_umm


def test_identity():
    u = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(apply_umm(u, np.zeros(3), UmmConfig()), u)


def test_clippy_example():
    cfg = UmmConfig(kind="clippy", sigma_rel=0.5, sigma_abs=0.1)
    np.testing.assert_allclose(apply_umm(np.array([0.2, 0.05]), np.zeros(2), cfg), [0.1, 0.025])


def test_adatask_single_task_matches_rmsprop():
    rng = np.random.default_rng(0)
    st = O.OptimizerState.create(4, "rmsprop", beta=0.9)
    cfg = UmmConfig(kind="adatask", beta=0.9, eps=st.eps)
    for _ in range(5):
        g = rng.normal(size=4)
        expected = O.task_update(st, g)
        got = apply_umm(expected, np.zeros(4), cfg, task=0, grad=g)
        np.testing.assert_array_equal(got, expected)
        O.advance_moments(st, g)


def test_adatask_accumulators_private():
    rng = np.random.default_rng(1)
    g0 = [rng.normal(size=3) for _ in range(4)]
    a = UmmConfig(kind="adatask", beta=0.9)
    b = UmmConfig(kind="adatask", beta=0.9)
    for g in g0:
        apply_umm(g, None, a, task=0, grad=g)
        apply_umm(g, None, a, task=1, grad=rng.normal(size=3))
        apply_umm(g, None, b, task=0, grad=g)
        apply_umm(g, None, b, task=1, grad=np.zeros(3))
    np.testing.assert_array_equal(a.accumulators[0], b.accumulators[0])


def test_adatask_needs_grad():
    with pytest.raises(ValueError):
        apply_umm(np.ones(2), None, UmmConfig(kind="adatask"))


def test_config_validation():
    with pytest.raises(ConfigError):
        UmmConfig(kind="clippy", sigma_abs=0.0)
    with pytest.raises(ConfigError):
        UmmConfig(kind="l2_clip", max_norm=-1.0)
    with pytest.raises(ConfigError):
        UmmConfig(kind="lamb")


vec = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=8)


@settings(max_examples=60, deadline=None)
@given(vec, st.floats(0.0, 2.0), st.floats(1e-4, 1.0))
def test_clippy_properties(u, rel, abs_):
    u = np.array(u)
    theta = np.linspace(-1, 1, u.size)
    out = apply_umm(u, theta, UmmConfig(kind="clippy", sigma_rel=rel, sigma_abs=abs_))
    assert np.all(np.abs(out) <= np.abs(u) + 1e-15)
    assert np.all(np.abs(out) <= rel * np.abs(theta) + abs_ + 1e-12)
    if np.linalg.norm(u) > 1e-6:
        cos = out @ u / (np.linalg.norm(out) * np.linalg.norm(u))
        assert cos == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(vec, st.floats(0.01, 5.0))
def test_l2_clip_properties(u, m):
    u = np.array(u)
    out = apply_umm(u, None, UmmConfig(kind="l2_clip", max_norm=m))
    assert np.linalg.norm(out) <= m + 1e-12
    if np.linalg.norm(u) <= m:
        np.testing.assert_array_equal(out, u)
