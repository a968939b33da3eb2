import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import decoyqa.dbn as dbn
from decoyqa.dbn import (
    DbnHyperparams, DbnModel, FeatureSetMismatch, ModelChecksumError, ModelVersionError, RbmLayer,
    RbmVelocity, fine_tune, load_model, model_bytes, model_from_bytes, predict, pretrain,
    rbm_cd_update, save_model, train_dbn,
)
from decoyqa.features.normalize import NormalizationBounds, assemble_feature_vector

from oracles import gradient_check, random_network, rbm_trial

FAST = DbnHyperparams(pretrain_epochs=5, finetune_max_iters=100, seed=3)


def _zero_model(width=9, n1=20, n2=10):
    layers = [RbmLayer(np.zeros((width, n1)), np.zeros(width), np.zeros(n1)),
              RbmLayer(np.zeros((n1, n2)), np.zeros(n1), np.zeros(n2))]
    return DbnModel(layers, np.zeros(n2), 0.0, "selected9", NormalizationBounds(), DbnHyperparams())


@pytest.fixture(scope="module")
def trained():
    rng = np.random.default_rng(11)
    x = rng.random((120, 9))
    y = 0.2 + 0.6 * x[:, :3].mean(axis=1)
    return train_dbn(x, y, FAST), x, y


def test_default_hyperparams():
    hp = DbnHyperparams()
    assert (hp.n1, hp.n2, hp.learning_rate, hp.weight_cost) == (20, 10, 1e-4, 0.007)
    assert (hp.momentum(0), hp.momentum(4), hp.momentum(5), hp.momentum(99)) == (0.5, 0.5, 0.9, 0.9)


@pytest.mark.parametrize("bad", [dict(n1=0), dict(learning_rate=0.0), dict(weight_cost=-1.0),
                                 dict(momentum_end=1.0), dict(cd_k=0)])
def test_invalid_hyperparams(bad):
    with pytest.raises(ValueError):
        DbnHyperparams(**bad)


def test_zero_layer_hidden_probs_are_half():
    layer = RbmLayer(np.zeros((4, 3)), np.zeros(4), np.zeros(3))
    batch = np.random.default_rng(0).random((7, 4))
    np.testing.assert_array_equal(layer.hidden_probs(batch), 0.5)


def test_momentum_arithmetic(monkeypatch):
    layer = RbmLayer(np.zeros((2, 2)), np.zeros(2), np.zeros(2))
    zero = (np.zeros((2, 2)), np.zeros(2), np.zeros(2))
    monkeypatch.setattr(dbn, "cd_gradient", lambda *a: zero)
    hp = DbnHyperparams(weight_cost=0.0)
    prior = RbmVelocity(np.full((2, 2), 0.1), np.full(2, 0.1), np.full(2, 0.1))
    new, vel = rbm_cd_update(layer, np.ones((1, 2)), hp, prior, np.random.default_rng(0), momentum=0.5)
    np.testing.assert_allclose(vel.weights, 0.05)
    np.testing.assert_allclose(new.weights, 0.05)


def test_divergence_is_reported():
    layer = RbmLayer(np.full((2, 2), np.inf), np.zeros(2), np.zeros(2))
    with pytest.raises(dbn.DivergenceError, match="divergence"):
        rbm_cd_update(layer, np.ones((1, 2)), DbnHyperparams(), None, np.random.default_rng(0))


def test_batch_width_checked():
    layer = RbmLayer(np.zeros((3, 2)), np.zeros(3), np.zeros(2))
    with pytest.raises(ValueError):
        rbm_cd_update(layer, np.ones((2, 4)), DbnHyperparams(), None, np.random.default_rng(0))


def test_cd1_agrees_with_exact_gradient_3v2h():
    positive = sum(rbm_trial(seed) > 0 for seed in range(100))
    assert positive >= 95


def test_zero_epochs_gives_initialization():
    x = np.random.default_rng(1).random((30, 9))
    hp = DbnHyperparams(pretrain_epochs=0, seed=42)
    layers = pretrain(x, hp)
    rng = np.random.default_rng(42)
    first = RbmLayer.initialize(9, hp.n1, rng)
    second = RbmLayer.initialize(hp.n1, hp.n2, rng)
    for got, want in zip(layers, (first, second)):
        np.testing.assert_array_equal(got.weights, want.weights)
        np.testing.assert_array_equal(got.hidden_bias, want.hidden_bias)
    assert abs(first.weights.std() - 0.1) < 0.02


def test_pretrain_is_deterministic():
    x = np.random.default_rng(2).random((50, 9))
    a, b = pretrain(x, FAST), pretrain(x, FAST)
    for la, lb in zip(a, b):
        assert la.weights.tobytes() == lb.weights.tobytes()
        assert la.hidden_bias.tobytes() == lb.hidden_bias.tobytes()


def test_single_pattern_reconstruction_improves():
    pattern = np.random.default_rng(5).random(9)
    x = np.tile(pattern, (200, 1))
    hp = DbnHyperparams(pretrain_epochs=20, learning_rate=0.05, seed=0)
    init = pretrain(x, dataclasses.replace(hp, pretrain_epochs=0))[0]
    trained = pretrain(x, hp)[0]
    assert trained.reconstruction_error(x) < init.reconstruction_error(x)


def test_gradient_small_network():
    rng = np.random.default_rng(0)
    params = random_network(rng, [5, 4, 3, 1])
    assert gradient_check(params, rng.random((10, 5)), rng.random(10)) < 1e-5


@pytest.mark.parametrize("seed", range(20))
def test_gradient_full_network(seed):
    rng = np.random.default_rng(100 + seed)
    params = random_network(rng, [9, 20, 10, 1])
    assert gradient_check(params, rng.random((25, 9)), rng.random(25), weight_cost=0.007) < 1e-5


def test_zero_model_predicts_half():
    fv = assemble_feature_vector({}, NormalizationBounds(), "selected9")
    assert predict(_zero_model(), fv) == 0.5


def test_overfits_ten_samples():
    rng = np.random.default_rng(9)
    x, y = rng.random((10, 9)), rng.uniform(0.1, 0.9, 10)
    hp = DbnHyperparams(pretrain_epochs=5, finetune_max_iters=2000, finetune_weight_cost=0.0)
    model = train_dbn(x, y, hp)
    assert np.mean((model.predict_matrix(x) - y) ** 2) < 1e-3


def test_training_rows_within_recorded_error(trained):
    model, x, y = trained
    err = np.abs(model.predict_matrix(x) - y)
    assert err.mean() == pytest.approx(model.metadata["train_mae"], abs=1e-15)
    assert np.all(err <= model.metadata["train_mae"] + 0.1)
    assert model.metadata["n_train"] == 120 and model.metadata["finetune_iterations"] > 0


def test_regularization_shrinks_weights():
    rng = np.random.default_rng(4)
    x = rng.random((80, 9))
    y = 0.1 + 0.8 * x[:, 0] * x[:, 1]
    layers = pretrain(x, FAST)
    norms = []
    for wc in (0.0, 1e-3, 1e-2):
        hp = dataclasses.replace(FAST, finetune_weight_cost=wc)
        m = fine_tune(layers, x, y, hp)
        norms.append(sum(float(np.sum(w * w)) for w, _ in m.params()))
    assert norms[0] >= norms[1] >= norms[2]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=9, max_size=9))
def test_output_strictly_inside_unit_interval(trained, row):
    model, _, _ = trained
    out = model.predict_matrix(np.array([row]))
    assert np.all((out > 0.0) & (out < 1.0))


def test_feature_set_mismatch_names_features(trained):
    model, _, _ = trained
    fv = assemble_feature_vector({}, NormalizationBounds(), "all16")
    with pytest.raises(FeatureSetMismatch, match="ProQ2"):
        predict(model, fv)


def test_training_is_deterministic():
    rng = np.random.default_rng(8)
    x, y = rng.random((40, 9)), rng.random(40)
    assert model_bytes(train_dbn(x, y, FAST)) == model_bytes(train_dbn(x, y, FAST))


def test_save_load_round_trip(trained, tmp_path):
    model, _, _ = trained
    path = tmp_path / "m.dbn"
    save_model(model, path)
    loaded = load_model(path)
    probe = np.random.default_rng(0).random((100, 9))
    assert model.predict_matrix(probe).tobytes() == loaded.predict_matrix(probe).tobytes()
    assert model_bytes(loaded) == path.read_bytes()
    assert loaded.hyperparams == model.hyperparams and loaded.bounds == model.bounds


def test_truncated_file_fails_checksum(trained):
    blob = model_bytes(trained[0])
    with pytest.raises(ModelChecksumError):
        model_from_bytes(blob[:-10])
    with pytest.raises(ModelChecksumError):
        model_from_bytes(blob[:len(dbn.MAGIC) + 4])


def test_corrupted_byte_fails_checksum(trained):
    blob = bytearray(model_bytes(trained[0]))
    blob[len(blob) // 2] ^= 0x01
    with pytest.raises(ModelChecksumError):
        model_from_bytes(bytes(blob))


def test_newer_version_is_refused(trained):
    blob = bytearray(model_bytes(trained[0]))
    blob[len(dbn.MAGIC):len(dbn.MAGIC) + 4] = (dbn.FORMAT_VERSION + 1).to_bytes(4, "little")
    with pytest.raises(ModelVersionError, match="version"):
        model_from_bytes(bytes(blob))
