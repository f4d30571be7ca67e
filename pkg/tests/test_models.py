import numpy as np
import pytest

from pubmto import models as M
from pubmto import tensor as T


def test_shared_bottom_parameter_counts():
    params, _ = M.build_model(M.ModelSpec(kind="shared_bottom", input_dim=8, hidden_dim=4, task_count=2))
    assert params.shared_size() == 8 * 4 + 4
    assert [sum(p.size for p in g.values()) for g in params.per_task] == [5, 5]


def test_unknown_kind_is_config_error():
    with pytest.raises(M.ConfigError):
        M.ModelSpec(kind="transformer")
    with pytest.raises(M.ConfigError):
        M.ModelSpec(expert_count=0)


def test_mmoe_gates_on_simplex():
    model = M.build(M.ModelSpec(kind="mmoe"), seed=1)
    x = np.random.default_rng(0).normal(size=(32, 16)) * 5
    for w in model.gate_weights(x):
        assert np.all(w >= 0)
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)


def test_ple_partition():
    spec = M.ModelSpec(kind="ple", expert_count=2, experts_per_task=2)
    params = M.build(spec, seed=0).params
    assert sorted(params.shared) == ["expert0.b", "expert0.w", "expert1.b", "expert1.w"]
    for group in params.per_task:
        assert {"expert0.w", "expert1.w", "gate.w", "tower.w"} <= set(group)
    ids = [id(p) for p in params.all_params()]
    assert len(ids) == len(set(ids))


@pytest.mark.parametrize("kind", M.KINDS)
def test_zero_model_gives_zero_logits(kind):
    model = M.build(M.ModelSpec(kind=kind), seed=0)
    for p in model.params.all_params():
        p.data[...] = 0.0
    for z in M.forward_multi(model, np.ones((3, 16))):
        np.testing.assert_array_equal(z.data, 0.0)
        np.testing.assert_array_equal(T.sigmoid(z).data, 0.5)


@pytest.mark.parametrize("kind", M.KINDS)
def test_rows_independent_and_deterministic(kind):
    x = np.random.default_rng(2).normal(size=(7, 16))
    a = M.build(M.ModelSpec(kind=kind), seed=5).predict(x)
    b = M.build(M.ModelSpec(kind=kind), seed=5).predict(x)
    one = M.build(M.ModelSpec(kind=kind), seed=5).predict(x[3:4])
    for u, v, w in zip(a, b, one):
        np.testing.assert_array_equal(u, v)
        np.testing.assert_allclose(u[3], w[0], rtol=1e-14)


def test_batch_shape_checked():
    model = M.build(M.ModelSpec(), seed=0)
    with pytest.raises(T.ShapeError):
        model.forward(np.ones((2, 5)))


@pytest.mark.parametrize("kind", M.KINDS)
def test_partition_by_perturbation(kind):
    model = M.build(M.ModelSpec(kind=kind), seed=3)
    x = np.random.default_rng(4).normal(size=(5, 16))
    base = model.predict(x)
    for j, group in enumerate(model.params.per_task):
        for p in group.values():
            saved = p.data.copy()
            p.data.reshape(-1)[0] += 0.3
            out = model.predict(x)
            p.data[...] = saved
            for i in range(len(out)):
                if i != j:
                    np.testing.assert_array_equal(out[i], base[i])
    p = next(iter(model.params.shared.values()))
    p.data += 0.3
    out = model.predict(x)
    assert all(not np.array_equal(o, b) for o, b in zip(out, base))


def test_checkpoint_round_trip(tmp_path):
    model = M.build(M.preset("ple", "desk"), seed=9)
    model.save(tmp_path / "m.json")
    back = M.Model.load(tmp_path / "m.json")
    x = np.ones((2, 16))
    for u, v in zip(model.predict(x), back.predict(x)):
        np.testing.assert_array_equal(u, v)


def test_wide_preset():
    spec = M.preset("mmoe", "wide")
    assert spec.expert_count == 8


def test_glorot_bounds():
    params = M.build(M.ModelSpec(kind="shared_bottom", input_dim=8, hidden_dim=4), seed=0).params
    a = np.sqrt(6 / 12)
    assert np.all(np.abs(params.shared["bottom.w"].data) <= a)
    np.testing.assert_array_equal(params.shared["bottom.b"].data, 0.0)


def test_flatten_round_trip():
    params = M.build(M.ModelSpec(), seed=0).params
    v = M.flatten(params.shared)
    M.unflatten_into(params.shared, v * 2)
    np.testing.assert_array_equal(M.flatten(params.shared), v * 2)
    with pytest.raises(T.ShapeError):
        M.unflatten_into(params.shared, v[:-1])
