import math

import numpy as np
import pytest

import lipsync


def test_constants():
    assert lipsync.VIDEO_FPS == 60
    assert lipsync.CHARACTER_CLASSES == 29


def test_wav_round_trip(tmp_path):
    samples = lipsync.synth_speech(1.0, 3)
    path = tmp_path / "a.wav"
    lipsync.save_wav(path, samples, 16000)
    back, rate = lipsync.load_wav(path)
    assert rate == 16000
    assert len(back) == 16000
    assert np.max(np.abs(np.asarray(back) - np.asarray(samples))) <= 1.0 / 32768


def test_mfcc_shape_and_features_are_probabilities():
    samples = lipsync.synth_speech(2.0, 4)
    m = lipsync.mfcc(samples, 16000)
    assert m.shape == ((32000 - 400) // 160 + 1, 13)
    f = lipsync.speech_features(samples, 16000)
    assert f.shape == (120, 29)
    assert np.allclose(f.sum(axis=1), 1.0, atol=1e-6)
    assert f.min() >= 0.0


def test_resample_length():
    out = lipsync.resample(lipsync.synth_speech(1.0, 1), 16000, 8000)
    assert len(out) == 8000


def test_network_forward_and_frames():
    net = lipsync.Network.init(20, seed=1)
    assert net.vertices == 20
    f = lipsync.speech_features(lipsync.synth_speech(3.7, 2), 16000)
    y = net.forward(f)
    assert y.shape == (round(60 * 3.7), 60)
    lstm = lipsync.Network.init(20, seed=1, arch="lstm")
    assert lstm.parameter_count < net.parameter_count


def test_full_size_parameter_count():
    assert lipsync.Network.init(5713, seed=1).parameter_count == 1195131


def test_loss_values_and_gradient():
    rng = np.random.default_rng(0)
    p = rng.normal(size=(4, 6))
    t = rng.normal(size=(4, 6))
    total, lp, lv, grad = lipsync.loss_total(p, t)
    assert lp == pytest.approx(np.sum((p - t) ** 2) / 4)
    d = np.diff(p, axis=0) - np.diff(t, axis=0)
    assert lv == pytest.approx(np.sum(d ** 2) / 3)
    assert total == pytest.approx(lp + 0.5 * lv)
    assert grad.shape == p.shape
    assert lipsync.loss_velocity(p + 2.0, t) == pytest.approx(lipsync.loss_velocity(p, t), rel=1e-12)


def test_errors_are_raised_as_lipsync_error():
    with pytest.raises(lipsync.Error):
        lipsync.load_wav("/nonexistent/file.wav")
    with pytest.raises(lipsync.Error):
        lipsync.loss_position(np.zeros((2, 3)), np.zeros((2, 4)))


def test_metrics_identities():
    head = lipsync.make_head(40, seed=2)
    assert len(head["landmarks"]) == 20
    disp = np.zeros((10, 120))
    disp[:, 1::3] = np.linspace(0, 0.1, 10)[:, None]
    a = lipsync.project_landmarks(head["vertices"], head["landmarks"], disp)
    assert lipsync.positional_error(a, a) == 0.0
    assert lipsync.velocity_error(a + 5.0, a) == pytest.approx(0.0, abs=1e-12)


def test_tiny_pipeline(tmp_path):
    manifest = lipsync.generate_corpus(tmp_path / "c", sentences=4, vertices=30, seed=5,
                                       min_duration=0.4, max_duration=0.6)
    net, history = lipsync.train(manifest, epochs=2, lr=1e-3)
    assert [h["epoch"] for h in history] == [1, 2]
    assert all(math.isfinite(h["train_total"]) for h in history)
    assert "val_lp" in history[0]
    report = lipsync.evaluate(net, manifest)
    assert set(report) == {"pos_err_all", "pos_err_lip", "vel_err_all", "vel_err_lip"}
    assert report["pos_err_all"] > 0.0
    net.save(tmp_path / "n.lsn1")
    again = lipsync.Network.load(tmp_path / "n.lsn1")
    f = lipsync.speech_features(lipsync.synth_speech(0.5, 9), 16000)
    assert np.array_equal(again.forward(f), net.forward(f))
