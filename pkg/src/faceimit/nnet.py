"""A small fully connected network with exact backprop and Adam.

Inputs are row-major batches ``(B, fan_in)``; a single vector is treated as
a batch of one and returned unbatched.
"""
from dataclasses import dataclass, field
from itertools import count

import numpy as np

from . import _kernels
from ._jsonio import FORMAT_VERSION
from .errors import DimensionError, MalformedFileError, StaleTapeError

ACTIVATIONS = ("tanh", "relu", "linear")

_versions = count(1)


@dataclass(eq=False)
class Layer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: str


@dataclass(eq=False)
class Network:
    layers: list
    seed: int = 0
    # bumped on every in-place update; tapes remember the value they saw
    version: int = field(default_factory=lambda: next(_versions))

    @property
    def sizes(self):
        return [self.layers[0].W.shape[1]] + [lay.W.shape[0] for lay in self.layers]

    @property
    def activations(self):
        return [lay.activation for lay in self.layers]

    def parameters(self):
        """Flat list ``[W0, b0, W1, b1, ...]`` of the live arrays."""
        out = []
        for lay in self.layers:
            out.extend((lay.W, lay.b))
        return out

    def copy(self):
        return Network([Layer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers],
                       seed=self.seed)

    def same_weights(self, other):
        return (self.activations == other.activations
                and all(np.array_equal(a, b) for a, b in zip(self.parameters(), other.parameters())))


@dataclass
class Tape:
    version: int
    shapes: tuple
    inputs: list   # per layer input
    outputs: list  # per layer post-activation
    batched: bool


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_network(layer_sizes, activations, seed=0):
    """Glorot-uniform weights, zero biases.

    ``layer_sizes`` includes the input width, so ``[4, 8, 2]`` gives two
    layers with weight shapes ``(8, 4)`` and ``(2, 8)``.
    """
    layer_sizes = list(layer_sizes)
    activations = list(activations)
    if len(layer_sizes) < 2:
        raise ValueError("need an input size and at least one layer")
    if len(activations) != len(layer_sizes) - 1:
        raise ValueError(f"{len(layer_sizes) - 1} layers but {len(activations)} activations")
    for act in activations:
        if act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {act!r}")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(layer_sizes[:-1], layer_sizes[1:], activations):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(Layer(rng.uniform(-lim, lim, size=(fan_out, fan_in)), np.zeros(fan_out), act))
    return Network(layers, seed=int(seed))


def _activate(z, act):
    if act == "tanh":
        return np.tanh(z)
    if act == "relu":
        return np.maximum(z, 0.0)
    return z


def forward(net, x):
    """Return ``(y, tape)``."""
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    h = x if batched else x[None, :]
    if h.shape[1] != net.layers[0].W.shape[1]:
        raise DimensionError(f"input width {h.shape[1]} != network fan-in {net.layers[0].W.shape[1]}")
    inputs, outputs = [], []
    for lay in net.layers:
        inputs.append(h)
        h = _activate(h @ lay.W.T + lay.b, lay.activation)
        outputs.append(h)
    tape = Tape(net.version, tuple(l.W.shape for l in net.layers), inputs, outputs, batched)
    return (h if batched else h[0]), tape


def predict(net, x):
    return forward(net, x)[0]


def backward(net, tape, upstream):
    """Reverse-mode gradients of ``sum(upstream * y)``.

    Returns ``(grads, dx)`` where ``grads`` follows ``net.parameters()``.
    Batch reduction is a plain sum; pass ``upstream / B`` for a mean loss.
    """
    if tape.version != net.version or tape.shapes != tuple(l.W.shape for l in net.layers):
        raise StaleTapeError("tape was recorded against a different network state")
    g = np.asarray(upstream, dtype=np.float64)
    if not tape.batched:
        g = g[None, :]
    if g.shape != tape.outputs[-1].shape:
        raise DimensionError(f"upstream shape {g.shape} != output shape {tape.outputs[-1].shape}")
    grads = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        lay = net.layers[i]
        y = tape.outputs[i]
        if lay.activation == "tanh":
            g = g * (1.0 - y * y)
        elif lay.activation == "relu":
            g = g * (y > 0.0)
        grads[2 * i] = g.T @ tape.inputs[i]
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ lay.W
    return grads, (g if tape.batched else g[0])


def init_adam(net):
    params = net.parameters()
    return AdamState([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(net, grads, state, lr):
    """One bias-corrected Adam step, applied in place; returns ``(net, state)``."""
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    params = net.parameters()
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise DimensionError("gradient shapes do not match network parameters")
    state.t += 1
    for p, g, m, v in zip(params, grads, state.m, state.v):
        _kernels.adam_update(p, g, m, v, lr, state.beta1, state.beta2, state.eps, state.t)
    net.version = next(_versions)
    return net, state


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def network_to_dict(net):
    return dict(kind="network", format_version=FORMAT_VERSION, seed=net.seed,
                sizes=net.sizes, activations=net.activations,
                weights=[l.W for l in net.layers], biases=[l.b for l in net.layers])


def network_from_dict(doc, path="<dict>"):
    try:
        sizes = list(doc["sizes"])
        acts = list(doc["activations"])
        layers = []
        for i, act in enumerate(acts):
            W = np.asarray(doc["weights"][i], dtype=np.float64).reshape(sizes[i + 1], sizes[i])
            b = np.asarray(doc["biases"][i], dtype=np.float64).reshape(sizes[i + 1])
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
            layers.append(Layer(W, b, act))
    except (KeyError, IndexError, ValueError, TypeError) as exc:
        raise MalformedFileError(f"{path}: bad network ({exc})") from exc
    if len(layers) != len(sizes) - 1:
        raise MalformedFileError(f"{path}: layer count disagrees with sizes")
    return Network(layers, seed=int(doc.get("seed", 0)))
