"""Multi-scale convolutional autoencoder over 2D feature maps.

The encoder runs three same-padded conv branches (1x1, 2x2, 3x3 kernels)
in parallel, concatenates them channel-wise, max-pools once, and projects
to a dense latent vector. The decoder mirrors that path: dense back to the
pooled shape, one strided transposed conv, and a crop to the input grid
with a sigmoid output (inputs are min-max scaled into [0, 1]).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, TrainingDivergedError
from .nn.layers import Conv2D, CropToGrid, Dense, Flatten, MaxPool2D, Reshape, TransposedConv2D
from .nn.serialize import load_model, params_to_document, save_model
from .nn.training import TrainConfig, make_optimizer, minibatch_indices

ARCHITECTURE = "mscnn"


@dataclass(frozen=True)
class MscnnConfig:
    nx: int
    ny: int
    filters_per_branch: int = 8
    latent_dim: int = 32
    pool_window: int = 2
    pool_stride: int = 2

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigError(f"input extents must be positive, got {self.nx}x{self.ny}")
        if self.filters_per_branch < 1:
            raise ConfigError("filters_per_branch must be >= 1")
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")
        if self.latent_dim >= self.nx * self.ny:
            raise ConfigError(
                f"latent_dim {self.latent_dim} must compress below the "
                f"{self.nx}x{self.ny}={self.nx * self.ny} input cells"
            )
        if self.pool_window < 1 or self.pool_stride < 1:
            raise ConfigError("pool window and stride must be >= 1")
        if min(self.nx, self.ny) < self.pool_window:
            raise ConfigError(
                f"pool window {self.pool_window} exceeds input extents {self.nx}x{self.ny}"
            )

    @property
    def pooled_extents(self) -> tuple[int, int]:
        px = (self.nx - self.pool_window) // self.pool_stride + 1
        py = (self.ny - self.pool_window) // self.pool_stride + 1
        return px, py

    @property
    def merged_channels(self) -> int:
        return 3 * self.filters_per_branch

    def to_dict(self) -> dict:
        return {
            "nx": self.nx, "ny": self.ny,
            "filters_per_branch": self.filters_per_branch,
            "latent_dim": self.latent_dim,
            "pool_window": self.pool_window, "pool_stride": self.pool_stride,
        }


class MscnnAutoencoder:
    """Encoder/decoder pair with a flat namespaced parameter dict."""

    def __init__(self, config: MscnnConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        f = config.filters_per_branch
        # Same-padding per kernel: 1x1 none, 2x2 right/bottom, 3x3 symmetric.
        self.branch1 = Conv2D(1, f, (1, 1), rng, activation="relu")
        self.branch2 = Conv2D(1, f, (2, 2), rng, padding=((0, 1), (0, 1)), activation="relu")
        self.branch3 = Conv2D(1, f, (3, 3), rng, padding=1, activation="relu")
        self.pool = MaxPool2D((config.pool_window,) * 2, (config.pool_stride,) * 2)
        self.flatten = Flatten()
        px, py = config.pooled_extents
        merged = config.merged_channels * px * py
        self.enc_dense = Dense(merged, config.latent_dim, rng)
        self.dec_dense = Dense(config.latent_dim, merged, rng, activation="relu")
        self.reshape = Reshape((config.merged_channels, px, py))
        kernel = config.pool_window + config.pool_stride - 1
        self.tconv = TransposedConv2D(
            config.merged_channels, 1, (kernel, kernel), rng,
            stride=(config.pool_stride,) * 2, activation="sigmoid",
        )
        rows, cols = self.tconv.spec.transposed_output_extents(px, py)
        if rows < config.nx or cols < config.ny:
            raise ConfigError(
                f"decoder produces {rows}x{cols}, smaller than input {config.nx}x{config.ny}"
            )
        self.crop = CropToGrid(config.nx, config.ny)
        self._named = {
            "b1": self.branch1, "b2": self.branch2, "b3": self.branch3,
            "enc": self.enc_dense, "dec": self.dec_dense, "tconv": self.tconv,
        }

    @property
    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, layer in self._named.items():
            for key, value in layer.params.items():
                out[f"{prefix}.{key}"] = value
        return out

    @property
    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, layer in self._named.items():
            for key, value in layer.grads.items():
                out[f"{prefix}.{key}"] = value
        return out

    def set_params(self, params: dict[str, np.ndarray]):
        for name, value in params.items():
            prefix, key = name.split(".", 1)
            target = self._named[prefix].params[key]
            if target.shape != value.shape:
                raise ConfigError(f"parameter {name}: shape {value.shape} != {target.shape}")
            target[...] = value

    def _check_maps(self, maps: np.ndarray) -> np.ndarray:
        maps = np.asarray(maps, dtype=np.float64)
        if maps.ndim == 3:
            maps = maps[None]
        if maps.ndim != 4 or maps.shape[1] != 1 or maps.shape[2:] != (self.config.nx, self.config.ny):
            raise DataError(
                f"expected maps [B, 1, {self.config.nx}, {self.config.ny}], got {maps.shape}"
            )
        return maps

    def encode(self, maps: np.ndarray) -> np.ndarray:
        maps = self._check_maps(maps)
        merged = np.concatenate(
            [self.branch1.forward(maps), self.branch2.forward(maps), self.branch3.forward(maps)],
            axis=1,
        )
        return self.enc_dense.forward(self.flatten.forward(self.pool.forward(merged)))

    def decode(self, latent: np.ndarray) -> np.ndarray:
        latent = np.asarray(latent, dtype=np.float64)
        if latent.ndim == 1:
            latent = latent[None]
        if latent.shape[-1] != self.config.latent_dim:
            raise DataError(
                f"latent length {latent.shape[-1]} != latent_dim {self.config.latent_dim}"
            )
        up = self.reshape.forward(self.dec_dense.forward(latent))
        return self.crop.forward(self.tconv.forward(up))

    def forward(self, maps: np.ndarray) -> np.ndarray:
        return self.decode(self.encode(maps))

    def backward(self, grad_recon: np.ndarray):
        """Backprop a gradient on the reconstruction through every layer."""
        g = self.crop.backward(grad_recon)
        g = self.tconv.backward(g)
        g = self.dec_dense.backward(self.reshape.backward(g))
        g = self.enc_dense.backward(g)
        g = self.pool.backward(self.flatten.backward(g))
        f = self.config.filters_per_branch
        g1 = self.branch1.backward(g[:, :f])
        g2 = self.branch2.backward(g[:, f : 2 * f])
        g3 = self.branch3.backward(g[:, 2 * f :])
        return g1 + g2 + g3

    def reconstruction_errors(self, maps: np.ndarray) -> np.ndarray:
        """Per-record mean squared reconstruction error."""
        maps = self._check_maps(maps)
        recon = self.forward(maps)
        diff = (recon - maps).reshape(maps.shape[0], -1)
        return np.mean(diff * diff, axis=1)

    def train(self, maps: np.ndarray, train_config: TrainConfig) -> list[float]:
        """Minibatch training on normal maps; returns per-epoch mean loss."""
        maps = self._check_maps(maps)
        if maps.shape[0] == 0:
            raise DataError("training set is empty")
        optimizer = make_optimizer(train_config)
        rng = np.random.default_rng([train_config.seed, 0])
        params = self.params
        history: list[float] = []
        for epoch in range(train_config.epochs):
            total = 0.0
            for batch in minibatch_indices(maps.shape[0], train_config.batch_size, rng):
                x = maps[batch]
                recon = self.forward(x)
                diff = recon - x
                loss = float(np.sum(diff * diff)) / x.shape[0]
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch + 1}, batch of {x.shape[0]}"
                    )
                total += loss * x.shape[0]
                self.backward(2.0 * diff / x.shape[0])
                optimizer.step(params, self.grads)
            history.append(total / maps.shape[0])
        return history

    def save(self, path):
        save_model(path, ARCHITECTURE, {"seed": self.seed, **self.config.to_dict()}, self.params)

    def to_document(self) -> dict:
        return params_to_document(
            ARCHITECTURE, {"seed": self.seed, **self.config.to_dict()}, self.params
        )

    @classmethod
    def load(cls, path) -> "MscnnAutoencoder":
        config, params = load_model(path, ARCHITECTURE)
        seed = config.pop("seed", 0)
        model = cls(MscnnConfig(**config), seed=seed)
        model.set_params(params)
        return model
