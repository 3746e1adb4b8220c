"""Fully-connected ReLU networks with a fused softmax cross-entropy head.

Backward passes are written out by hand: each dense layer turns the residual
coming from above into ``dW = delta^T a_prev`` and hands ``delta W`` down,
ReLU masks it with the step function of its cached pre-activation, and
dropout multiplies by its cached mask.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import DimensionError, DomainError, FormatError
from .tensor import Rng

TRAIN = "train"
EVAL = "eval"

CHECKPOINT_FORMAT = "gcreg-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden: tuple[int, ...]
    classes: int
    dropout: float = 0.5
    # dropout follows only the last ``dropout_layers`` hidden layers; None means all
    dropout_layers: int | None = None
    init_gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.dropout_layers is not None and self.dropout_layers < 0:
            raise DomainError(f"dropout_layers must be >= 0, got {self.dropout_layers}")
        if not self.init_gain > 0:
            raise DomainError(f"init_gain must be positive, got {self.init_gain}")
        if self.input_dim < 1 or self.classes < 1 or any(h < 1 for h in self.hidden):
            raise DomainError(f"layer widths must be positive: {self}")
        if not 0.0 <= self.dropout < 1.0:
            raise DomainError(f"dropout probability must be in [0, 1), got {self.dropout}")

    @property
    def depth(self) -> int:
        return len(self.hidden)

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.classes)

    def has_dropout(self, hidden_index: int) -> bool:
        if self.dropout == 0:
            return False
        k = self.depth if self.dropout_layers is None else self.dropout_layers
        return hidden_index >= self.depth - k

    @classmethod
    def mlp(cls, input_dim, width, depth, classes, dropout=0.5, dropout_layers=None, init_gain=1.0):
        return cls(input_dim, (width,) * depth, classes, dropout, dropout_layers, init_gain)

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        k = d.get("dropout_layers")
        return cls(int(d["input_dim"]), tuple(d["hidden"]), int(d["classes"]), float(d["dropout"]),
                   None if k is None else int(k), float(d.get("init_gain", 1.0)))


class DenseLayer:
    def __init__(self, weights: np.ndarray, bias: np.ndarray):
        self.W = T.as_tensor(weights)
        self.b = T.as_tensor(bias)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise DimensionError(f"weights {self.W.shape} and bias {self.b.shape} do not match")
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self.a_prev = None

    @property
    def fan_in(self):
        return self.W.shape[1]

    @property
    def fan_out(self):
        return self.W.shape[0]

    def forward(self, x, mode):
        if x.shape[1] != self.fan_in:
            raise DimensionError(f"input width {x.shape[1]} != layer fan-in {self.fan_in}")
        if mode == TRAIN:
            self.a_prev = x
        return T.matmul(x, self.W.T) + self.b

    def backward(self, delta):
        self.dW = T.matmul(delta.T, self.a_prev)
        self.db = delta.sum(axis=0)
        return T.matmul(delta, self.W)


class ReluLayer:
    def __init__(self):
        self.z = None

    def forward(self, z, mode):
        gate = T.heaviside(z)
        if mode == TRAIN:
            self.z = z
        return z * gate

    def backward(self, delta):
        return delta * T.heaviside(self.z)


class DropoutLayer:
    """Inverted dropout; identity in eval mode or when ``p == 0``."""

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise DomainError(f"dropout probability must be in [0, 1), got {p}")
        self.p = float(p)
        self.mask = None

    def forward(self, x, mode, rng: Rng | None = None):
        if mode != TRAIN or self.p == 0.0:
            self.mask = None
            return x
        if rng is None:
            raise ValueError("train-mode dropout needs an Rng")
        keep = rng.uniform(x.shape) >= self.p
        self.mask = keep / (1.0 - self.p)
        return x * self.mask

    def backward(self, delta):
        if self.mask is None:
            return delta
        return delta * self.mask


class Network:
    def __init__(self, arch: Architecture, layers: list):
        self.arch = arch
        self.layers = layers
        widths = [l.fan_in for l in self.dense_layers] + [self.dense_layers[-1].fan_out]
        if tuple(widths) != arch.widths:
            raise DimensionError(f"layer widths {widths} do not chain as {arch.widths}")

    @property
    def dense_layers(self) -> list[DenseLayer]:
        return [l for l in self.layers if isinstance(l, DenseLayer)]

    def clone(self) -> "Network":
        dense = self.dense_layers
        return build_network(self.arch, [l.W.copy() for l in dense], [l.b.copy() for l in dense])


def build_network(arch: Architecture, weights, biases) -> Network:
    """Assemble dense/ReLU/dropout layers around the given parameter arrays."""
    layers = []
    n_dense = len(arch.widths) - 1
    for i in range(n_dense):
        layers.append(DenseLayer(weights[i], biases[i]))
        if i < n_dense - 1:
            layers.append(ReluLayer())
            if arch.has_dropout(i):
                layers.append(DropoutLayer(arch.dropout))
    return Network(arch, layers)


def init_params(arch: Architecture, rng: Rng) -> Network:
    """He-normal weights (std ``init_gain * sqrt(2 / fan_in)``), zero biases."""
    widths = arch.widths
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        weights.append(rng.fork(f"dense{i}").normal((fan_out, fan_in), arch.init_gain * math.sqrt(2.0 / fan_in)))
        biases.append(T.zeros(fan_out))
    return build_network(arch, weights, biases)


def forward(net: Network, batch_x, mode: str = EVAL, rng: Rng | None = None) -> np.ndarray:
    x = T.as_tensor(batch_x)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != net.arch.input_dim:
        raise DimensionError(f"batch width {x.shape[1]} != network input width {net.arch.input_dim}")
    for layer in net.layers:
        if isinstance(layer, DropoutLayer):
            x = layer.forward(x, mode, rng)
        else:
            x = layer.forward(x, mode)
    return x


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"{labels.shape[0] if labels.ndim else 0} labels for {n} rows")
    if n and (labels.min() < 0 or labels.max() >= c):
        raise DomainError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.sum(lse - shifted[rows, labels]) / n)
    probs = np.exp(shifted - lse[:, None])
    probs[rows, labels] -= 1.0
    return loss, probs / n


def backward(net: Network, dlogits: np.ndarray) -> None:
    delta = dlogits
    for layer in reversed(net.layers):
        delta = layer.backward(delta)


def loss_and_grad(net: Network, batch, rng: Rng | None = None) -> float:
    """Train-mode forward + backward on ``batch = (x, labels)``.

    Fills every dW and db and returns the mean data loss, penalty excluded.
    """
    x, labels = batch
    logits = forward(net, x, TRAIN, rng)
    loss, dlogits = softmax_cross_entropy(logits, labels)
    backward(net, dlogits)
    return loss


def predict(net: Network, x, batch_size: int = 1024) -> np.ndarray:
    x = T.as_tensor(x)
    out = [forward(net, x[i:i + batch_size], EVAL).argmax(axis=1) for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros(0, dtype=int)


def accuracy(net: Network, x, labels) -> float:
    return float(np.mean(predict(net, x) == np.asarray(labels)))


class FlatParamView:
    """Flat ordering over every dense-layer weight; biases are not covered.

    Order is layer by layer, each weight matrix in row-major order.
    """

    def __init__(self, net: Network):
        self.shapes = [l.W.shape for l in net.dense_layers]
        self.sizes = [int(np.prod(s)) for s in self.shapes]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)
        self.n = int(self.offsets[-1])

    def index(self, layer: int, row: int, col: int) -> int:
        return int(self.offsets[layer] + row * self.shapes[layer][1] + col)

    def slices(self):
        return [slice(int(a), int(b)) for a, b in zip(self.offsets[:-1], self.offsets[1:])]


def gather_flat(view: FlatParamView, net: Network, source: str = "params") -> np.ndarray:
    if source == "params":
        parts = [l.W for l in net.dense_layers]
    elif source == "grads":
        parts = [l.dW for l in net.dense_layers]
    else:
        raise ValueError(f"source must be 'params' or 'grads', got {source!r}")
    return np.concatenate([p.ravel() for p in parts])


def scatter_flat(view: FlatParamView, net: Network, values) -> None:
    values = T.as_tensor(values)
    if values.shape != (view.n,):
        raise DimensionError(f"expected {view.n} values, got shape {values.shape}")
    for layer, sl, shape in zip(net.dense_layers, view.slices(), view.shapes):
        layer.W = values[sl].reshape(shape).copy()


def layer_stats(net: Network) -> dict:
    """Per-layer and count-weighted global mean |w| and mean |dW|."""
    layers = []
    for l in net.dense_layers:
        layers.append({
            "count": l.W.size,
            "avg_abs_w": T.reduce("abs_mean", l.W),
            "avg_abs_grad": T.reduce("abs_mean", l.dW),
        })
    total = sum(r["count"] for r in layers)
    glob = {
        "count": total,
        "avg_abs_w": sum(r["avg_abs_w"] * r["count"] for r in layers) / total,
        "avg_abs_grad": sum(r["avg_abs_grad"] * r["count"] for r in layers) / total,
    }
    return {"layers": layers, "global": glob}


def save_checkpoint(net: Network, path, rng_label: str = "") -> Path:
    """Write a JSON checkpoint; see README "Checkpoint format"."""
    view = FlatParamView(net)
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "architecture": net.arch.to_dict(),
        "rng": rng_label,
        "n_weights": view.n,
        "weights": gather_flat(view, net, "params").tolist(),
        "biases": [l.b.tolist() for l in net.dense_layers],
    }
    path = Path(path)
    path.write_text(json.dumps(doc))
    return path


def load_checkpoint(path) -> tuple[Network, str]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"checkpoint {path} is not valid JSON: {exc.msg}", exc.pos) from exc
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path} is not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} file")
    arch = Architecture.from_dict(doc["architecture"])
    widths = arch.widths
    shapes = [(o, i) for i, o in zip(widths[:-1], widths[1:])]
    flat = T.as_tensor(doc["weights"])
    if flat.size != sum(o * i for o, i in shapes):
        raise FormatError(f"{path}: {flat.size} weights do not fit architecture {widths}")
    weights, pos = [], 0
    for o, i in shapes:
        weights.append(flat[pos:pos + o * i].reshape(o, i).copy())
        pos += o * i
    net = build_network(arch, weights, [T.as_tensor(b) for b in doc["biases"]])
    return net, doc.get("rng", "")
