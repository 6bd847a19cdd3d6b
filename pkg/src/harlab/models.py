"""The three classifier architectures and their training loop.

Kinds:
  lstm      LSTM -> last hidden state -> dropout -> dense softmax
  cnn       conv1d -> conv1d -> maxpool -> flatten -> dense softmax
  lstm_cnn  LSTM (full sequence) -> conv1d -> conv1d -> maxpool -> flatten
            -> dense softmax

Training is deterministic given (spec, seed, data order): weight init,
batch shuffling, and dropout masks all come from streams derived from
the spec seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .core import ActivityClass, FeatureTensor, N_CLASSES
from .rng import make_rng

KINDS = ("lstm", "cnn", "lstm_cnn")

_DEFAULT_CONV_FILTERS = {"cnn": (20, 32), "lstm_cnn": (50, 32)}


class ModelError(ValueError):
    """Raised on invalid model specifications or shape mismatches."""


@dataclass(frozen=True)
class ModelSpec:
    """Architecture and training hyperparameters for one classifier."""

    kind: str
    timesteps: int = 100
    n_features: int = 64
    hidden_size: int = 50            # LSTM variants; candidate sizes 20 and 50
    conv_filters: tuple[int, int] = ()
    kernel_size: int = 3
    pool_size: int = 3
    dropout: float = 0.2
    n_classes: int = 7
    lr0: float = 0.01
    epochs: int = 50
    batch_size: int = 32
    seed: int = 42

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}; valid: {', '.join(KINDS)}")
        if self.kind in _DEFAULT_CONV_FILTERS and not self.conv_filters:
            object.__setattr__(self, "conv_filters", _DEFAULT_CONV_FILTERS[self.kind])
        object.__setattr__(self, "conv_filters", tuple(self.conv_filters))
        if self.n_classes != N_CLASSES:
            raise ModelError(f"n_classes must be {N_CLASSES}, got {self.n_classes}")
        if self.timesteps < 1 or self.n_features < 1:
            raise ModelError("timesteps and n_features must be >= 1")
        if self.kind != "lstm" and len(self.conv_filters) != 2:
            raise ModelError(f"kind {self.kind!r} needs two conv filter counts")
        if self.epochs < 1 or self.batch_size < 1:
            raise ModelError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError("dropout must be in [0, 1)")

    @property
    def input_shape(self) -> tuple[int, int]:
        return (self.timesteps, self.n_features)


@dataclass(frozen=True)
class EpochStats:
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


class Network:
    """An ordered stack of named layers ending in a softmax dense head."""

    def __init__(self, spec: ModelSpec, layers: list[tuple[str, object]]):
        self.spec = spec
        self._layers = layers

    def layer(self, name: str):
        for lname, layer in self._layers:
            if lname == name:
                return layer
        raise KeyError(name)

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        out = x
        for lname, layer in self._layers:
            if lname == "select_last":
                self._last_T = out.shape[1]
                out = out[:, -1]
            elif isinstance(layer, nn.Dropout):
                out = layer.forward(out, train=train, rng=rng)
            else:
                out = layer.forward(out)
        return out

    def backward(self, dprobs: np.ndarray) -> None:
        grad = dprobs
        for lname, layer in reversed(self._layers):
            if lname == "select_last":
                full = np.zeros((grad.shape[0], self._last_T, grad.shape[1]))
                full[:, -1] = grad
                grad = full
            else:
                grad = layer.backward(grad)

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for lname, layer in self._layers:
            if lname == "select_last":
                continue
            for pname, arr in layer.params().items():
                out[f"{lname}.{pname}"] = arr
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for lname, layer in self._layers:
            if lname == "select_last":
                continue
            for pname, arr in layer.grads().items():
                out[f"{lname}.{pname}"] = arr
        return out

    def zero_grads(self) -> None:
        for g in self.grads().values():
            g[...] = 0.0

    def set_weights(self, weights: dict[str, np.ndarray]) -> None:
        params = self.params()
        if set(weights) != set(params):
            raise ModelError(
                f"weight names do not match spec: {sorted(set(weights) ^ set(params))}")
        for name, arr in weights.items():
            if params[name].shape != arr.shape:
                raise ModelError(
                    f"weight {name!r} has shape {arr.shape}, expected {params[name].shape}")
            params[name][...] = arr


def count_params(net: Network) -> int:
    return sum(arr.size for arr in net.params().values())


def build(spec: ModelSpec) -> Network:
    """Instantiate an untrained network with seeded initial weights."""
    rng = make_rng(spec.seed, "init")
    T, d = spec.input_shape
    k, pool, C = spec.kernel_size, spec.pool_size, spec.n_classes
    layers: list[tuple[str, object]] = []
    if spec.kind == "lstm":
        layers.append(("lstm", nn.Lstm.init(rng, d, spec.hidden_size)))
        layers.append(("select_last", None))
        layers.append(("dropout", nn.Dropout(spec.dropout)))
        layers.append(("dense", nn.Dense.init(rng, spec.hidden_size, C, "softmax")))
        return Network(spec, layers)

    if spec.kind == "cnn":
        c_in, t = d, T
    else:
        layers.append(("lstm", nn.Lstm.init(rng, d, spec.hidden_size)))
        c_in, t = spec.hidden_size, T
    f1, f2 = spec.conv_filters
    layers.append(("conv1", nn.Conv1d.init(rng, c_in, f1, k, "tanh")))
    t = t - k + 1
    layers.append(("conv2", nn.Conv1d.init(rng, f1, f2, k, "tanh")))
    t = t - k + 1
    if t < pool:
        raise ModelError(f"timesteps {T} too short for conv/pool stack")
    layers.append(("pool", nn.MaxPool1d(pool)))
    t = t // pool
    layers.append(("flatten", nn.Flatten()))
    layers.append(("dense", nn.Dense.init(rng, t * f2, C, "softmax")))
    return Network(spec, layers)


@dataclass
class TrainedModel:
    """A trained network plus its per-epoch history."""

    spec: ModelSpec
    network: Network
    history: list[EpochStats] = field(default_factory=list)

    @property
    def weights(self) -> dict[str, np.ndarray]:
        return self.network.params()

    def predict_probs(self, x: np.ndarray, batch: int = 256) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.vstack([self.network.forward(x[i:i + batch])
                          for i in range(0, x.shape[0], batch)])


def stack_features(tensors) -> tuple[np.ndarray, np.ndarray]:
    """Stack FeatureTensors into (x [n, T, F], labels [n]); shapes must agree."""
    tensors = list(tensors)
    if not tensors:
        raise ModelError("empty sample list")
    shape = tensors[0].values.shape
    for t in tensors:
        if t.values.shape != shape:
            raise ModelError(f"inconsistent sample shapes {t.values.shape} vs {shape}")
    x = np.stack([t.values for t in tensors])
    y = np.array([t.label_code for t in tensors], dtype=np.int64)
    return x, y


def train(net: Network, train_set, val_set) -> TrainedModel:
    """Mini-batch Adam training with seeded shuffling and dropout.

    train_set/val_set are iterables of FeatureTensor (or pre-stacked
    (x, y) pairs).  History records one row per epoch.
    """
    spec = net.spec

    def as_arrays(data):
        if (isinstance(data, tuple) and len(data) == 2
                and isinstance(data[0], np.ndarray)):
            return data
        return stack_features(data)

    x_train, y_train = as_arrays(train_set)
    x_val, y_val = as_arrays(val_set)
    for name, x in (("train", x_train), ("validation", x_val)):
        if x.shape[0] == 0:
            raise ModelError(f"empty {name} split")
        if x.shape[1:] != spec.input_shape:
            raise ModelError(f"{name} data shape {x.shape[1:]} != spec {spec.input_shape}")
    shuffle_rng = make_rng(spec.seed, "shuffle")
    dropout_rng = make_rng(spec.seed, "dropout")
    state = nn.AdamState(lr0=spec.lr0)
    n = x_train.shape[0]
    model = TrainedModel(spec, net)
    for _ in range(spec.epochs):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        hit_sum = 0.0
        for start in range(0, n, spec.batch_size):
            idx = order[start:start + spec.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            probs = net.forward(xb, train=True, rng=dropout_rng)
            loss_sum += nn.cross_entropy(probs, yb) * idx.size
            hit_sum += nn.accuracy(probs, yb) * idx.size
            net.zero_grads()
            net.backward(nn.cross_entropy_grad(probs, yb))
            nn.adam_step(net.params(), net.grads(), state)
        val_probs = model.predict_probs(x_val)
        model.history.append(EpochStats(
            train_loss=loss_sum / n,
            train_acc=hit_sum / n,
            val_loss=nn.cross_entropy(val_probs, y_val),
            val_acc=nn.accuracy(val_probs, y_val),
        ))
    return model


def predict(model: TrainedModel, x: FeatureTensor) -> tuple[ActivityClass, np.ndarray]:
    """Eval-mode class prediction and the full probability row."""
    if x.values.shape != model.spec.input_shape:
        raise ModelError(
            f"input shape {x.values.shape} != model input {model.spec.input_shape}")
    probs = model.network.forward(x.values[None])[0]
    return ActivityClass(int(probs.argmax())), probs


def decimate(x: FeatureTensor, k: int) -> FeatureTensor:
    """Keep every k-th timestep; ceil(T/k) rows survive."""
    if k < 1:
        raise ModelError(f"decimation factor must be >= 1, got {k}")
    if k == 1:
        return x
    return x.with_values(x.values[::k], f"decimate:{k}")


def decimate_all(tensors, k: int) -> list[FeatureTensor]:
    return [decimate(t, k) for t in tensors]


def infer_decimation(data_timesteps: int, model_timesteps: int) -> int:
    """Factor k with ceil(data/k) == model timesteps, if one exists."""
    if data_timesteps == model_timesteps:
        return 1
    if data_timesteps < model_timesteps:
        raise ModelError(
            f"data has {data_timesteps} timesteps but the model wants {model_timesteps}")
    k = math.ceil(data_timesteps / model_timesteps)
    if math.ceil(data_timesteps / k) != model_timesteps:
        raise ModelError(
            f"no decimation factor maps {data_timesteps} timesteps to {model_timesteps}")
    return k
