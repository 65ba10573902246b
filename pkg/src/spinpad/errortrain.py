"""Bit-level write-error injection into a small numpy MLP trainer.

Write errors are modeled as independent per-bit flips on IEEE 754 binary32
words, with separate rates for the sign bit, the exponent bits, and a
configurable span of low-order mantissa bits. Injection happens on every
scratchpad write event during training: layer activations after the forward
pass, error tensors during the backward pass, and weights after the update
step. Weight gradients are consumed immediately and never written back, so
they are not an injection point. Values that come out of injection non-finite
are replaced with zero and counted, so a wrecked run diverges observably
instead of crashing.

Randomness is derived per write event from a counter-style key
(seed, kind, epoch, batch, layer), making the training curve a pure function
of (network spec, dataset, binding, seed) regardless of execution order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidParameterError
from .magnetics import derive_stream

SIGN_BIT = 31
EXPONENT_BITS = range(23, 31)
MANTISSA_SPAN = 23

_ACTIVATIONS = ("tanh", "relu")

# Stream kinds for counter-based randomness derivation.
_K_INIT, _K_SHUFFLE, _K_ACT, _K_ERR, _K_WEIGHT, _K_BIAS, _K_DATA = range(7)


@dataclass(frozen=True)
class SegmentErrorConfig:
    """Per-segment bit flip probabilities for one scratchpad's writes."""

    sign_wer: float = 0.0
    exponent_wer: float = 0.0
    mantissa_wer: float = 0.0
    affected_mantissa_bits: int = MANTISSA_SPAN  # lowest-order bits at risk

    def __post_init__(self) -> None:
        for name in ("sign_wer", "exponent_wer", "mantissa_wer"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InvalidParameterError(f"{name} must be in [0, 1], got {p}")
        if not 0 <= self.affected_mantissa_bits <= MANTISSA_SPAN:
            raise InvalidParameterError(
                f"affected_mantissa_bits must be in [0, {MANTISSA_SPAN}]"
            )

    @property
    def is_zero(self) -> bool:
        return self.sign_wer == self.exponent_wer == self.mantissa_wer == 0.0

    @classmethod
    def zero(cls) -> "SegmentErrorConfig":
        return cls()


@dataclass(frozen=True)
class BufferErrorBinding:
    """Which write-error config applies to each of the three scratchpads."""

    activations: SegmentErrorConfig = field(default_factory=SegmentErrorConfig)
    weights: SegmentErrorConfig = field(default_factory=SegmentErrorConfig)
    errors: SegmentErrorConfig = field(default_factory=SegmentErrorConfig)

    @property
    def is_zero(self) -> bool:
        return (self.activations.is_zero and self.weights.is_zero
                and self.errors.is_zero)

    @classmethod
    def zero(cls) -> "BufferErrorBinding":
        return cls()

    @classmethod
    def uniform(cls, cfg: SegmentErrorConfig) -> "BufferErrorBinding":
        return cls(activations=cfg, weights=cfg, errors=cfg)


@dataclass(frozen=True)
class InjectionStats:
    bit_flips: int
    sanitized: int


def _flip_mask(shape: tuple[int, ...], cfg: SegmentErrorConfig,
               rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Per-element uint32 XOR mask; draw order is sign, exponent, mantissa."""
    mask = np.zeros(shape, dtype=np.uint32)
    flips = 0

    def hit(p: float, bit: int) -> None:
        nonlocal flips
        h = rng.random(shape) < p
        flips += int(h.sum())
        np.bitwise_or(mask, h.astype(np.uint32) << np.uint32(bit), out=mask)

    if cfg.sign_wer > 0.0:
        hit(cfg.sign_wer, SIGN_BIT)
    if cfg.exponent_wer > 0.0:
        for bit in EXPONENT_BITS:
            hit(cfg.exponent_wer, bit)
    if cfg.mantissa_wer > 0.0:
        for bit in range(cfg.affected_mantissa_bits):
            hit(cfg.mantissa_wer, bit)
    return mask, flips


def inject_tensor(values: np.ndarray, cfg: SegmentErrorConfig,
                  rng: np.random.Generator) -> tuple[np.ndarray, InjectionStats]:
    """Flip bits element-wise; zero out (and count) non-finite results."""
    out = np.ascontiguousarray(values, dtype=np.float32).copy()
    if cfg.is_zero:
        return out, InjectionStats(0, 0)
    mask, flips = _flip_mask(out.shape, cfg, rng)
    out.view(np.uint32)[...] ^= mask
    bad = ~np.isfinite(out)
    sanitized = int(bad.sum())
    if sanitized:
        out[bad] = 0.0
    return out, InjectionStats(flips, sanitized)


def inject_word(value: float, cfg: SegmentErrorConfig,
                rng: np.random.Generator) -> float:
    """One binary32 word through the write-error channel."""
    if not math.isfinite(value):
        raise InvalidParameterError("inject_word requires a finite input")
    out, _ = inject_tensor(np.array([value], dtype=np.float32), cfg, rng)
    return float(out[0])


# ----------------------------------------------------------------- dataset

@dataclass(frozen=True)
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray


def two_moons(n: int, noise: float = 0.15, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Two interleaved half circles, shuffled; the bundled desk-scale task."""
    if n < 2:
        raise InvalidParameterError("need at least 2 points")
    if noise < 0:
        raise InvalidParameterError("noise must be non-negative")
    rng = derive_stream(seed, _K_DATA)
    n_outer = n // 2
    n_inner = n - n_outer
    t_outer = rng.random(n_outer) * np.pi
    t_inner = rng.random(n_inner) * np.pi
    x = np.concatenate([
        np.stack([np.cos(t_outer), np.sin(t_outer)], axis=1),
        np.stack([1.0 - np.cos(t_inner), 0.5 - np.sin(t_inner)], axis=1),
    ])
    x += rng.standard_normal(x.shape) * noise
    y = np.concatenate([np.zeros(n_outer, dtype=np.int64),
                        np.ones(n_inner, dtype=np.int64)])
    order = rng.permutation(n)
    return x[order].astype(np.float32), y[order]


def make_moons_dataset(n_train: int = 400, n_test: int = 200,
                       noise: float = 0.15, seed: int = 0) -> Dataset:
    x, y = two_moons(n_train + n_test, noise=noise, seed=seed)
    return Dataset(x[:n_train], y[:n_train], x[n_train:], y[n_train:])


# --------------------------------------------------------------------- MLP

@dataclass(frozen=True)
class TinyNetSpec:
    """Feedforward net: layer_sizes[0] inputs through layer_sizes[-1] classes."""

    layer_sizes: tuple[int, ...] = (2, 32, 32, 2)
    activation: str = "tanh"
    learning_rate: float = 0.2
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.layer_sizes) < 2:
            raise InvalidParameterError("need at least input and output sizes")
        if any(s < 1 for s in self.layer_sizes):
            raise InvalidParameterError("layer sizes must be positive")
        if self.activation not in _ACTIVATIONS:
            raise InvalidParameterError(
                f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}"
            )
        if self.learning_rate <= 0:
            raise InvalidParameterError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise InvalidParameterError("batch_size and epochs must be >= 1")


def _activation_pair(tag: str):
    """(f, f' as a function of the post-activation value)."""
    if tag == "tanh":
        return np.tanh, lambda a: 1.0 - a * a
    return (lambda z: np.maximum(z, 0.0),
            lambda a: (a > 0).astype(a.dtype))


def init_params(spec: TinyNetSpec, dtype=np.float32) -> list[tuple[np.ndarray, np.ndarray]]:
    """1/sqrt(fan_in)-scaled normal weights, zero biases, seed-derived."""
    rng = derive_stream(spec.seed, _K_INIT)
    params = []
    for fan_in, fan_out in zip(spec.layer_sizes, spec.layer_sizes[1:]):
        w = rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in)
        params.append((w.astype(dtype), np.zeros(fan_out, dtype=dtype)))
    return params


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_clean(params, x, act_fn) -> np.ndarray:
    a = x
    last = len(params) - 1
    for i, (w, b) in enumerate(params):
        z = a @ w + b
        a = act_fn(z) if i < last else z
    return a


def loss_and_gradients(params, x, y, activation: str = "tanh",
                       loss: str = "cross_entropy"):
    """Clean (injection-free) loss and parameter gradients; any dtype."""
    act_fn, act_deriv = _activation_pair(activation)
    n = x.shape[0]
    acts = [x]
    a = x
    last = len(params) - 1
    for i, (w, b) in enumerate(params):
        z = a @ w + b
        a = act_fn(z) if i < last else z
        acts.append(a)
    logits = acts[-1]
    onehot = np.zeros_like(logits)
    onehot[np.arange(n), y] = 1.0
    if loss == "cross_entropy":
        p = _softmax(logits)
        with np.errstate(divide="ignore"):
            value = float(-np.log(p[np.arange(n), y]).mean())
        e = (p - onehot) / n
    elif loss == "quadratic":
        diff = logits - onehot
        value = float(0.5 * (diff * diff).sum() / n)
        e = diff / n
    else:
        raise InvalidParameterError(f"unknown loss {loss!r}")
    grads = [None] * len(params)
    for i in range(last, -1, -1):
        w, _ = params[i]
        grads[i] = (acts[i].T @ e, e.sum(axis=0))
        if i:
            e = (e @ w.T) * act_deriv(acts[i])
    return value, grads


def gradient_check(spec: TinyNetSpec, x, y, loss: str = "cross_entropy",
                   params=None, step: float = 1e-4) -> float:
    """Max relative error of analytic vs central-difference gradients (float64)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if params is None:
        params = init_params(spec, dtype=np.float64)
    else:
        params = [(np.asarray(w, np.float64), np.asarray(b, np.float64))
                  for w, b in params]
    _, grads = loss_and_gradients(params, x, y, spec.activation, loss)
    worst = 0.0
    for li, (w, b) in enumerate(params):
        for tensor, grad in ((w, grads[li][0]), (b, grads[li][1])):
            flat = tensor.reshape(-1)
            gflat = grad.reshape(-1)
            for j in range(flat.size):
                keep = flat[j]
                flat[j] = keep + step
                up, _ = loss_and_gradients(params, x, y, spec.activation, loss)
                flat[j] = keep - step
                dn, _ = loss_and_gradients(params, x, y, spec.activation, loss)
                flat[j] = keep
                numeric = (up - dn) / (2.0 * step)
                scale = max(abs(gflat[j]), abs(numeric))
                if scale > 1e-8:
                    worst = max(worst, abs(gflat[j] - numeric) / scale)
    return worst


# ---------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainingResult:
    """Per-epoch curve; lists stop early when the run diverges."""

    train_loss: list[float]
    test_accuracy: list[float]  # percent
    sanitized_per_epoch: list[int]
    diverged: bool

    @property
    def epochs_completed(self) -> int:
        return len(self.test_accuracy)

    @property
    def final_accuracy(self) -> float:
        return self.test_accuracy[-1] if self.test_accuracy else 0.0

    @property
    def total_sanitized(self) -> int:
        return sum(self.sanitized_per_epoch)


def _validate_dataset(spec: TinyNetSpec, ds: Dataset) -> None:
    for x, y, tag in ((ds.x_train, ds.y_train, "train"),
                      (ds.x_test, ds.y_test, "test")):
        if x.ndim != 2 or x.shape[1] != spec.layer_sizes[0]:
            raise InvalidParameterError(
                f"{tag} inputs must be (n, {spec.layer_sizes[0]})")
        if y.shape != (x.shape[0],):
            raise InvalidParameterError(f"{tag} labels must match inputs")
        if y.size and (y.min() < 0 or y.max() >= spec.layer_sizes[-1]):
            raise InvalidParameterError(
                f"{tag} labels must be in [0, {spec.layer_sizes[-1]})")
    if ds.x_train.shape[0] < 1 or ds.x_test.shape[0] < 1:
        raise InvalidParameterError("train and test splits must be non-empty")


def _accuracy(params, x, y, act_fn) -> float:
    logits = _forward_clean(params, x, act_fn)
    return 100.0 * float((logits.argmax(axis=1) == y).mean())


def train_with_errors(spec: TinyNetSpec, dataset: Dataset,
                      binding: BufferErrorBinding) -> TrainingResult:
    """Minibatch SGD with write-error injection at every scratchpad write.

    Injection points per minibatch: each layer's activation after the
    forward pass, each propagated error tensor during the backward pass
    (including the loss gradient), and each weight/bias tensor after the
    SGD update. A zero binding skips injection entirely, so it is
    bit-identical to an error-free trainer with the same seed.
    """
    _validate_dataset(spec, dataset)
    act_fn, act_deriv = _activation_pair(spec.activation)
    params = init_params(spec)
    x_train = np.ascontiguousarray(dataset.x_train, dtype=np.float32)
    y_train = np.ascontiguousarray(dataset.y_train, dtype=np.int64)
    x_test = np.ascontiguousarray(dataset.x_test, dtype=np.float32)
    y_test = np.ascontiguousarray(dataset.y_test, dtype=np.int64)
    n = x_train.shape[0]
    last = len(params) - 1
    lr = np.float32(spec.learning_rate)

    losses: list[float] = []
    accs: list[float] = []
    sanitized: list[int] = []
    diverged = False

    for epoch in range(spec.epochs):
        order = derive_stream(spec.seed, _K_SHUFFLE, epoch).permutation(n)
        xs, ys = x_train[order], y_train[order]
        batch_losses: list[float] = []
        epoch_sanitized = 0

        for batch, lo in enumerate(range(0, n, spec.batch_size)):
            xb = xs[lo:lo + spec.batch_size]
            yb = ys[lo:lo + spec.batch_size]
            m = xb.shape[0]

            # forward; activations are written per layer, so inject per layer
            acts = [xb]
            a = xb
            for li, (w, b) in enumerate(params):
                z = a @ w + b
                a = act_fn(z) if li < last else z
                if not binding.activations.is_zero:
                    a, st = inject_tensor(
                        a, binding.activations,
                        derive_stream(spec.seed, _K_ACT, epoch, batch, li))
                    epoch_sanitized += st.sanitized
                acts.append(a)

            p = _softmax(acts[-1])
            with np.errstate(divide="ignore"):
                loss = float(-np.log(p[np.arange(m), yb]).mean())
            if not math.isfinite(loss):
                diverged = True
                break
            batch_losses.append(loss)

            onehot = np.zeros_like(p)
            onehot[np.arange(m), yb] = 1.0
            e = (p - onehot) / np.float32(m)
            # backward; every error tensor is written to the error buffer
            if not binding.errors.is_zero:
                e, st = inject_tensor(
                    e, binding.errors,
                    derive_stream(spec.seed, _K_ERR, epoch, batch, last))
                epoch_sanitized += st.sanitized
            grads = [None] * len(params)
            for li in range(last, -1, -1):
                w, _ = params[li]
                grads[li] = (acts[li].T @ e, e.sum(axis=0))
                if li:
                    e = (e @ w.T) * act_deriv(acts[li])
                    if not binding.errors.is_zero:
                        e, st = inject_tensor(
                            e, binding.errors,
                            derive_stream(spec.seed, _K_ERR, epoch, batch, li - 1))
                        epoch_sanitized += st.sanitized

            # update; weights are written back, gradients never are
            for li, ((w, b), (dw, db)) in enumerate(zip(params, grads)):
                w = w - lr * dw
                b = b - lr * db
                if not binding.weights.is_zero:
                    w, st = inject_tensor(
                        w, binding.weights,
                        derive_stream(spec.seed, _K_WEIGHT, epoch, batch, li))
                    epoch_sanitized += st.sanitized
                    b, st = inject_tensor(
                        b, binding.weights,
                        derive_stream(spec.seed, _K_BIAS, epoch, batch, li))
                    epoch_sanitized += st.sanitized
                params[li] = (w, b)

        if diverged:
            break
        losses.append(float(np.mean(batch_losses)))
        accs.append(_accuracy(params, x_test, y_test, act_fn))
        sanitized.append(epoch_sanitized)

    return TrainingResult(losses, accs, sanitized, diverged)


def train_reference(spec: TinyNetSpec, dataset: Dataset) -> TrainingResult:
    """Error-free baseline with the identical schedule and randomness."""
    return train_with_errors(spec, dataset, BufferErrorBinding.zero())


# ------------------------------------------------------------- experiments

@dataclass(frozen=True)
class ExperimentConfig:
    """One error-resilience experiment: net, task, binding, seed list."""

    net: TinyNetSpec
    binding: BufferErrorBinding
    seeds: tuple[int, ...] = (1, 2, 3)
    n_train: int = 400
    n_test: int = 200
    noise: float = 0.3
    dataset_seed: int = 7

    def __post_init__(self) -> None:
        if not self.seeds:
            raise InvalidParameterError("need at least one seed")
        if self.n_train < 1 or self.n_test < 1:
            raise InvalidParameterError("n_train and n_test must be >= 1")
        if self.noise < 0:
            raise InvalidParameterError("noise must be non-negative")

    def dataset(self) -> Dataset:
        return make_moons_dataset(self.n_train, self.n_test, self.noise,
                                  self.dataset_seed)


def _segment_from_dict(raw: dict, where: str) -> SegmentErrorConfig:
    valid = set(SegmentErrorConfig.__dataclass_fields__)
    unknown = set(raw) - valid
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(sorted(unknown))}")
    try:
        return SegmentErrorConfig(**raw)
    except InvalidParameterError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def experiment_from_dict(raw: dict, where: str = "experiment") -> ExperimentConfig:
    """Experiment schema: net fields at top level, binding nested per buffer."""
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a JSON object")
    raw = dict(raw)
    binding_raw = raw.pop("binding", {})
    if not isinstance(binding_raw, dict):
        raise ConfigError(f"{where}: binding must be an object")
    unknown = set(binding_raw) - {"activations", "weights", "errors"}
    if unknown:
        raise ConfigError(f"{where}: unknown binding key(s) {', '.join(sorted(unknown))}")
    binding = BufferErrorBinding(**{
        buf: _segment_from_dict(cfg, f"{where}: binding.{buf}")
        for buf, cfg in binding_raw.items()
    })

    net_fields = set(TinyNetSpec.__dataclass_fields__)
    net_raw = {k: raw.pop(k) for k in list(raw) if k in net_fields}
    if "layer_sizes" in net_raw:
        net_raw["layer_sizes"] = tuple(net_raw["layer_sizes"])
    exp_fields = set(ExperimentConfig.__dataclass_fields__) - {"net", "binding"}
    exp_raw = {k: raw.pop(k) for k in list(raw) if k in exp_fields}
    if "seeds" in exp_raw:
        exp_raw["seeds"] = tuple(exp_raw["seeds"])
    if raw:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(sorted(raw))}")
    try:
        return ExperimentConfig(net=TinyNetSpec(**net_raw), binding=binding,
                                **exp_raw)
    except (TypeError, InvalidParameterError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def load_experiment(path: str | Path) -> ExperimentConfig:
    """Read an experiment config from a JSON file."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return experiment_from_dict(raw, where=str(path))


def run_experiment(cfg: ExperimentConfig) -> dict[int, TrainingResult]:
    """Train once per seed on the shared dataset; keyed by seed."""
    ds = cfg.dataset()
    return {seed: train_with_errors(replace(cfg.net, seed=seed), ds, cfg.binding)
            for seed in cfg.seeds}
