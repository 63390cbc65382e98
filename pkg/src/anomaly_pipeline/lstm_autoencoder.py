"""Sequence-to-sequence LSTM autoencoder over windows of latent vectors.

Windows slide across dataset record order; each window is attributed to
its last record (the anchor), so stride 1 yields exactly one temporal
reconstruction error per record. The encoder LSTM compresses a window to
a fixed-size code; the decoder LSTM, seeded from that code, re-emits the
window one vector at a time, feeding each reconstruction back as the next
step's input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, TrainingDivergedError
from .nn.lstm import LstmParams, LstmState, init_lstm_params, lstm_cell_backward, lstm_cell_forward
from .nn.serialize import load_model, params_to_document, save_model
from .nn.training import TrainConfig, make_optimizer, minibatch_indices

ARCHITECTURE = "lstm-ae"
_ERROR_MODES = ("window", "anchor")


@dataclass(frozen=True)
class LstmAeConfig:
    latent_dim: int
    window: int = 8
    code_dim: int = 16
    hidden_size: int = 32
    stride: int = 1
    error_mode: str = "window"

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.code_dim < 1 or self.hidden_size < 1:
            raise ConfigError("code_dim and hidden_size must be >= 1")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.error_mode not in _ERROR_MODES:
            raise ConfigError(f"error_mode must be one of {_ERROR_MODES}, got {self.error_mode!r}")

    def to_dict(self) -> dict:
        return {
            "latent_dim": self.latent_dim, "window": self.window,
            "code_dim": self.code_dim, "hidden_size": self.hidden_size,
            "stride": self.stride, "error_mode": self.error_mode,
        }


@dataclass(frozen=True)
class LatentSequence:
    window: np.ndarray
    anchor_index: int


def make_sequences(latents: np.ndarray, window: int, stride: int = 1) -> list[LatentSequence]:
    """Sliding windows over record order, anchored to their last element.

    The head is padded by repeating the first latent so records earlier
    than window-1 still anchor a full window. Anchors advance by stride
    starting at record 0.
    """
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim != 2 or latents.shape[0] == 0:
        raise DataError(f"expected a non-empty [n, latent_dim] matrix, got {latents.shape}")
    if window < 1 or stride < 1:
        raise ConfigError("window and stride must be >= 1")
    sequences = []
    for anchor in range(0, latents.shape[0], stride):
        rows = [latents[max(t, 0)] for t in range(anchor - window + 1, anchor + 1)]
        sequences.append(LatentSequence(window=np.stack(rows), anchor_index=anchor))
    return sequences


def stack_windows(sequences: list[LatentSequence]) -> np.ndarray:
    if not sequences:
        raise DataError("no sequences given")
    return np.stack([s.window for s in sequences])


@dataclass
class _Projection:
    w: np.ndarray
    b: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x @ self.w.T + self.b


class LstmAutoencoder:
    """Encoder/decoder LSTM pair with dense projections at the seams."""

    def __init__(self, config: LstmAeConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        h, r, d = config.hidden_size, config.code_dim, config.latent_dim
        self.encoder = init_lstm_params(rng, input_size=d, hidden_size=h)
        self.decoder = init_lstm_params(rng, input_size=d, hidden_size=h)
        limit = lambda fi, fo: np.sqrt(6.0 / (fi + fo))
        self.code_proj = _Projection(
            w=rng.uniform(-limit(h, r), limit(h, r), size=(r, h)), b=np.zeros(r)
        )
        self.init_proj = _Projection(
            w=rng.uniform(-limit(r, h), limit(r, h), size=(h, r)), b=np.zeros(h)
        )
        self.out_proj = _Projection(
            w=rng.uniform(-limit(h, d), limit(h, d), size=(d, h)), b=np.zeros(d)
        )

    @property
    def params(self) -> dict[str, np.ndarray]:
        out = {}
        out.update(self.encoder.as_dict("enc."))
        out.update(self.decoder.as_dict("dec."))
        out.update({"code.w": self.code_proj.w, "code.b": self.code_proj.b})
        out.update({"init.w": self.init_proj.w, "init.b": self.init_proj.b})
        out.update({"out.w": self.out_proj.w, "out.b": self.out_proj.b})
        return out

    def set_params(self, params: dict[str, np.ndarray]):
        own = self.params
        for name, value in params.items():
            if name not in own:
                raise ConfigError(f"unknown parameter {name!r}")
            if own[name].shape != value.shape:
                raise ConfigError(f"parameter {name}: shape {value.shape} != {own[name].shape}")
            own[name][...] = value

    def _check_windows(self, windows: np.ndarray) -> np.ndarray:
        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim == 2:
            windows = windows[None]
        w, d = self.config.window, self.config.latent_dim
        if windows.ndim != 3 or windows.shape[1:] != (w, d):
            raise DataError(f"expected windows [B, {w}, {d}], got {windows.shape}")
        return windows

    def encode(self, windows: np.ndarray) -> np.ndarray:
        """Windows [B, W, d] (or one [W, d]) -> codes [B, r]."""
        windows = self._check_windows(windows)
        batch = windows.shape[0]
        h = self.config.hidden_size
        state = LstmState(c=np.zeros((batch, h)), h=np.zeros((batch, h)))
        for t in range(self.config.window):
            state, _ = lstm_cell_forward(windows[:, t], state, self.encoder)
        return self.code_proj.apply(state.h)

    def decode(self, codes: np.ndarray) -> np.ndarray:
        """Codes [B, r] -> reconstructed windows [B, W, d]."""
        codes = np.asarray(codes, dtype=np.float64)
        if codes.ndim == 1:
            codes = codes[None]
        if codes.shape[-1] != self.config.code_dim:
            raise DataError(f"code length {codes.shape[-1]} != code_dim {self.config.code_dim}")
        batch = codes.shape[0]
        h = self.config.hidden_size
        d = self.config.latent_dim
        state = LstmState(c=np.zeros((batch, h)), h=self.init_proj.apply(codes))
        prev = np.zeros((batch, d))
        steps = []
        for _ in range(self.config.window):
            state, _ = lstm_cell_forward(prev, state, self.decoder)
            prev = self.out_proj.apply(state.h)
            steps.append(prev)
        return np.stack(steps, axis=1)

    def forward(self, windows: np.ndarray) -> np.ndarray:
        return self.decode(self.encode(windows))

    def _forward_with_caches(self, windows: np.ndarray):
        batch = windows.shape[0]
        h = self.config.hidden_size
        d = self.config.latent_dim
        state = LstmState(c=np.zeros((batch, h)), h=np.zeros((batch, h)))
        enc_caches = []
        for t in range(self.config.window):
            state, cache = lstm_cell_forward(windows[:, t], state, self.encoder)
            enc_caches.append(cache)
        enc_h = state.h
        codes = self.code_proj.apply(enc_h)

        dec_state = LstmState(c=np.zeros((batch, h)), h=self.init_proj.apply(codes))
        prev = np.zeros((batch, d))
        dec_caches = []
        dec_hs = []
        recon = []
        for _ in range(self.config.window):
            dec_state, cache = lstm_cell_forward(prev, dec_state, self.decoder)
            prev = self.out_proj.apply(dec_state.h)
            dec_caches.append(cache)
            dec_hs.append(dec_state.h)
            recon.append(prev)
        return {
            "enc_caches": enc_caches, "enc_h": enc_h, "codes": codes,
            "dec_caches": dec_caches, "dec_hs": dec_hs,
            "recon": np.stack(recon, axis=1),
        }

    def _backward(self, fwd: dict, grad_recon: np.ndarray) -> dict[str, np.ndarray]:
        """BPTT through decoder, seam projections, and encoder."""
        w = self.config.window
        batch = grad_recon.shape[0]
        h = self.config.hidden_size
        grads = {name: np.zeros_like(value) for name, value in self.params.items()}

        # Decoder: reconstruction t feeds both the loss and step t+1's input.
        grad_h = np.zeros((batch, h))
        grad_c = np.zeros((batch, h))
        grad_from_next_input = np.zeros((batch, self.config.latent_dim))
        for t in range(w - 1, -1, -1):
            g_out = grad_recon[:, t] + grad_from_next_input
            grads["out.w"] += g_out.T @ fwd["dec_hs"][t]
            grads["out.b"] += g_out.sum(axis=0)
            grad_h = grad_h + g_out @ self.out_proj.w
            cell_grads, grad_x, grad_h, grad_c = lstm_cell_backward(
                fwd["dec_caches"][t], self.decoder, grad_h, grad_c
            )
            for key, value in cell_grads.items():
                grads[f"dec.{key}"] += value
            grad_from_next_input = grad_x
        # Step 1's input is the zero vector; grad_from_next_input ends unused.

        # Seam: decoder h0 came from init_proj(codes); codes from code_proj(enc_h).
        grads["init.w"] += grad_h.T @ fwd["codes"]
        grads["init.b"] += grad_h.sum(axis=0)
        grad_codes = grad_h @ self.init_proj.w
        grads["code.w"] += grad_codes.T @ fwd["enc_h"]
        grads["code.b"] += grad_codes.sum(axis=0)

        grad_h = grad_codes @ self.code_proj.w
        grad_c = np.zeros((batch, h))
        for t in range(w - 1, -1, -1):
            cell_grads, _, grad_h, grad_c = lstm_cell_backward(
                fwd["enc_caches"][t], self.encoder, grad_h, grad_c
            )
            for key, value in cell_grads.items():
                grads[f"enc.{key}"] += value
        return grads

    def record_error(self, seq: LatentSequence) -> float:
        return float(self.record_errors([seq])[0])

    def record_errors(self, sequences: list[LatentSequence]) -> np.ndarray:
        """Per-window mean squared error (whole window or anchor step only)."""
        windows = self._check_windows(stack_windows(sequences))
        recon = self.forward(windows)
        if self.config.error_mode == "anchor":
            diff = recon[:, -1] - windows[:, -1]
        else:
            diff = (recon - windows).reshape(windows.shape[0], -1)
        return np.mean(diff * diff, axis=-1 if diff.ndim == 2 else 1)

    def train(self, sequences: list[LatentSequence], train_config: TrainConfig) -> list[float]:
        """Minibatch BPTT training; returns per-epoch mean loss."""
        windows = self._check_windows(stack_windows(sequences))
        optimizer = make_optimizer(train_config)
        rng = np.random.default_rng([train_config.seed, 1])
        params = self.params
        history: list[float] = []
        for epoch in range(train_config.epochs):
            total = 0.0
            for batch in minibatch_indices(windows.shape[0], train_config.batch_size, rng):
                x = windows[batch]
                fwd = self._forward_with_caches(x)
                diff = fwd["recon"] - x
                loss = float(np.sum(diff * diff)) / x.shape[0]
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch + 1}, batch of {x.shape[0]}"
                    )
                total += loss * x.shape[0]
                grads = self._backward(fwd, 2.0 * diff / x.shape[0])
                optimizer.step(params, grads)
            history.append(total / windows.shape[0])
        return history

    def save(self, path):
        save_model(path, ARCHITECTURE, {"seed": self.seed, **self.config.to_dict()}, self.params)

    def to_document(self) -> dict:
        return params_to_document(
            ARCHITECTURE, {"seed": self.seed, **self.config.to_dict()}, self.params
        )

    @classmethod
    def load(cls, path) -> "LstmAutoencoder":
        config, params = load_model(path, ARCHITECTURE)
        seed = config.pop("seed", 0)
        model = cls(LstmAeConfig(**config), seed=seed)
        model.set_params(params)
        return model
