"""Loss, optimizers, and the finite-difference gradient oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TrainingDivergedError

__all__ = ["TrainConfig", "squared_error_sum", "squared_error_mean",
           "Sgd", "Adam", "make_optimizer", "finite_difference_gradient",
           "finite_difference_at", "minibatch_indices"]


@dataclass
class TrainConfig:
    """Knobs for gradient-based training of either autoencoder."""

    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise ValueError(f"learning_rate must be finite and >= 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")


def squared_error_sum(x: np.ndarray, x_prime: np.ndarray) -> float:
    """Reconstruction error as the plain sum of squared differences."""
    if x.shape != x_prime.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_prime.shape}")
    d = np.asarray(x, dtype=np.float64) - np.asarray(x_prime, dtype=np.float64)
    return float(np.sum(d * d))


def squared_error_mean(x: np.ndarray, x_prime: np.ndarray) -> float:
    """Per-record reconstruction error: mean of squared differences.

    The mean form keeps threshold statistics independent of the feature
    count; the sum form above is the raw definition.
    """
    if x.shape != x_prime.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_prime.shape}")
    d = np.asarray(x, dtype=np.float64) - np.asarray(x_prime, dtype=np.float64)
    return float(np.mean(d * d))


def _check_finite(name: str, g: np.ndarray):
    if not np.all(np.isfinite(g)):
        raise TrainingDivergedError(f"non-finite gradient in {name!r}")


class Sgd:
    """p <- p - lr * g, in place."""

    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        for name, p in params.items():
            g = grads[name]
            _check_finite(name, g)
            p -= self.learning_rate * g


class Adam:
    """Moment-corrected update with per-parameter running moments."""

    def __init__(self, learning_rate: float, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = grads[name]
            _check_finite(name, g)
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + self.epsilon)


def make_optimizer(config: TrainConfig) -> Sgd | Adam:
    if config.optimizer == "sgd":
        return Sgd(config.learning_rate)
    return Adam(config.learning_rate, config.beta1, config.beta2, config.epsilon)


def _fd_single(loss_fn, p: np.ndarray, step: float) -> np.ndarray:
    grad = np.zeros_like(p)
    flat = p.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        hi = loss_fn(p)
        flat[k] = orig - step
        lo = loss_fn(p)
        flat[k] = orig
        gflat[k] = (hi - lo) / (2.0 * step)
    return grad


def finite_difference_gradient(loss_fn, params, step: float = 1e-5):
    """Central differences (f(p+h) - f(p-h)) / 2h, one coordinate at a time.

    Accepts a single array or a dict of arrays (the loss receives the same
    container it was given). Used as the independent oracle against every
    analytic backward pass.
    """
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    if isinstance(params, dict):
        work = {name: np.array(value, dtype=np.float64) for name, value in params.items()}
        grads = {name: np.zeros_like(value) for name, value in work.items()}
        for name, p in work.items():
            flat = p.reshape(-1)
            gflat = grads[name].reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + step
                hi = loss_fn(work)
                flat[k] = orig - step
                lo = loss_fn(work)
                flat[k] = orig
                gflat[k] = (hi - lo) / (2.0 * step)
        return grads
    return _fd_single(loss_fn, np.array(params, dtype=np.float64), step)


def finite_difference_at(loss_fn, params: dict, name: str, index: tuple,
                         step: float = 1e-5) -> float:
    """Central-difference derivative of a single named coordinate.

    Cheap enough to spot-check hundreds of random coordinates of a large
    model without differentiating every parameter.
    """
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    orig = work[name][index]
    work[name][index] = orig + step
    hi = loss_fn(work)
    work[name][index] = orig - step
    lo = loss_fn(work)
    work[name][index] = orig
    return (hi - lo) / (2.0 * step)


def minibatch_indices(n: int, batch_size: int, rng: np.random.Generator):
    """Yield shuffled index batches covering range(n) once."""
    order = rng.permutation(n)
    size = min(batch_size, n)
    for start in range(0, n, size):
        yield order[start : start + size]
