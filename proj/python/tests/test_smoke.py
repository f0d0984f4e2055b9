import json
import math

import numpy as np
import pytest

import psd


def test_embed_and_chord():
    e = psd.embed_period(10, 8)
    assert e.shape == (8,)
    assert e[0] == pytest.approx(math.sin(10.0))
    assert e[1] == pytest.approx(math.cos(10.0))
    assert psd.optimal_chord(10) == pytest.approx(10 * math.sin(math.pi / 20))


def test_rewards():
    assert psd.r_psd(0.0) == pytest.approx(1.0)
    assert psd.r_psd(0.3) == pytest.approx(psd.r_psd(-0.3))
    assert psd.r_ext(0.5) == pytest.approx(1.0)


def test_polygon_loss_is_minus_L():
    L = 6
    pts = psd.regular_polygon(L, 2)
    idx = np.arange(2 * L)
    z_t, z_t1, z_tL = pts[idx], pts[(idx + 1) % (2 * L)], pts[(idx + L) % (2 * L)]
    loss = psd.psd_loss(z_t, z_t1, z_tL, [L] * (2 * L))
    assert loss == pytest.approx(-L, abs=1e-9)


def test_spectrum_finds_frequency():
    n = 200
    x = np.cos(2 * np.pi * np.arange(n) / 20)
    s = psd.spectrum(x, k=1)
    assert s["top_k"][0][0] == pytest.approx(1 / 20)
    assert psd.autocorr_period(x) == 20


def test_update_bounds_expands():
    L_min, L_max, once_min, once_max = psd.update_bounds(10, 10, False, False, 190.0, 190.0, 200)
    assert L_max > 10 and once_max


def test_config_round_trip_and_errors():
    text = psd.default_config("ring_world")
    assert json.loads(psd.validate_config(text)) == json.loads(text)
    cfg = json.loads(text)
    cfg["not_a_key"] = 1
    with pytest.raises(psd.ConfigError):
        psd.validate_config(json.dumps(cfg))
    with pytest.raises(ValueError):
        psd.validate_config("{")


def test_trainer_epoch_and_checkpoint(tmp_path):
    cfg = json.loads(psd.default_config("ring_world"))
    cfg["epochs"] = 2
    cfg["seed"] = 3
    cfg["agent"]["hidden_units"] = 16
    cfg["encoder"]["hidden_units"] = 16
    cfg["encoder"]["batch"] = 32
    cfg["encoder"]["steps_per_epoch"] = 2
    cfg["agent"]["batch"] = 32
    t = psd.Trainer(json.dumps(cfg))
    m = t.run_epoch()
    assert m["epoch"] == 1 and math.isfinite(m["mean_return_psd"])
    assert t.buffer_size > 0
    path = tmp_path / "state.ckpt"
    t.save(str(path))
    u = psd.Trainer.load(str(path))
    assert u.epoch == t.epoch and u.to_bytes() == t.to_bytes()
    traj = u.evaluate(L=10, seed=1)
    assert traj["states"].shape[0] == traj["actions"].shape[0] + 1
    lat = u.encode(traj["states"], 10)
    assert lat.shape == (traj["states"].shape[0], 3)


def test_verify_theorem_small():
    ok, report = psd.verify_theorem(2, 2, [2])
    assert ok and report["suite"] == "theorem"
