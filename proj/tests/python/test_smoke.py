import json

import numpy as np
import pytest

import deltaspike as ds


def test_ramp_fires_every_fourth_step():
    x = 0.3 * np.arange(13)
    stream = ds.sod_sample(x, 1.0, mode="value")
    assert stream.events().tolist() == [[4, 0], [8, 0], [12, 0]]
    assert ds.EventStream.from_text(stream.to_text()) == stream


def test_if_encoder_matches_delta_reference():
    rng = np.random.default_rng(0)
    x = np.cumsum(rng.normal(0.0, 0.4, 300))
    assert ds.if_sod_encode(x, 0.5, -0.5) == ds.sod_sample(x, 0.5)
    rec = ds.sod_reconstruct(ds.sod_sample(x, 0.5), x[0], 0.5)
    assert rec.shape == x.shape


def test_multidim_potentials_are_error_projections():
    rng = np.random.default_rng(1)
    bank = ds.DirectionBank(rng.normal(0.0, 0.6, (5, 3)))
    x = np.cumsum(rng.normal(0.0, 0.5, (80, 3)), axis=0)
    stream, potentials = ds.multidim_sod_encode(x, bank)
    x_hat = ds.reference_trajectory(stream, bank, x[0])
    np.testing.assert_allclose(potentials, (x - x_hat) @ bank.directions.T, atol=1e-9)


def test_discrete_step_and_exact_solve():
    beta = ds.beta_from_tau(0.02, 0.01)
    assert beta == pytest.approx(np.exp(-0.5))
    u = ds.lif_discrete_step(np.zeros(2), np.array([1.0, 2.0]), beta)
    np.testing.assert_allclose(u, (1 - beta) * np.array([1.0, 2.0]))
    exact = ds.lif_exact_solve(np.ones(3), 0.02, 0.01)
    np.testing.assert_allclose(exact[1], 1 - beta)


def test_feature_shape():
    t = np.arange(16000) / 16000.0
    f = ds.log_mel_features(0.5 * np.sin(2 * np.pi * 1000.0 * t))
    assert f.shape == (98, 40, 3)
    assert len(ds.mel_center_frequencies()) == 40


def test_gradcheck_passes_and_detects_corruption():
    ok = ds.gradcheck(seed=0, instances=3)
    assert ok["passed"] and ok["worst_relative_error"] < 1e-4
    assert set(ok["by_kind"]) == {"weight", "beta", "threshold", "readout_weight", "readout_bias"}
    assert not ds.gradcheck(seed=0, instances=3, corrupt_backward=True)["passed"]


def test_network_forward_reports_rates():
    cfg = json.loads(ds.Network.reference_config())
    cfg.update(input_steps=10, input_bins=8, n_classes=3,
               layers=[dict(cfg["layers"][0], units=4)])
    net = ds.Network.init(json.dumps(cfg), seed=2)
    out = net.forward(np.random.default_rng(3).normal(size=(10, 8, 3)))
    assert out["logits"].shape == (3,)
    assert out["spikes"][0].shape == (10, 8, 4)
    assert out["firing_rate_hz"][0] == pytest.approx(out["spikes"][0].mean() / 0.01)


def test_train_and_evaluate(tmp_path):
    net, history = ds.train_synthetic(seed=1, epochs=2, layers="conv:4:3x3:1x1",
                                      output_dir=str(tmp_path))
    assert [h["epoch"] for h in history] == [1, 2]
    metrics = ds.evaluate(str(tmp_path / "final.ckpt"))
    assert metrics["accuracy"] == pytest.approx(history[-1]["validation"]["accuracy"])
    assert ds.Network.load(str(tmp_path / "final.ckpt")).config_json == net.config_json


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        ds.sod_sample(np.zeros(4), -1.0)
    with pytest.raises(OSError):
        ds.read_wav("/nonexistent.wav")
