"""Small fully connected networks used as additive-predictor terms.

All weights and biases of a :class:`Network` live in one flat parameter
vector (``net.params``); the per-layer arrays are views into it, so an
optimizer can update a network by writing to the flat vector.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .exceptions import DimensionError, SpecError, StaleCacheError


class Activation(str, enum.Enum):
    RELU = "relu"
    SOFTPLUS = "softplus"
    IDENTITY = "identity"


@dataclass(frozen=True)
class LayerSpec:
    units: int
    activation: Activation = Activation.IDENTITY
    use_bias: bool = True

    def __post_init__(self):
        if int(self.units) < 1:
            raise SpecError("layer units must be >= 1")
        object.__setattr__(self, "units", int(self.units))
        act = self.activation
        try:
            if not isinstance(act, Activation):
                act = Activation(str(act).lower())
        except ValueError:
            raise SpecError(f"unknown activation {self.activation!r}") from None
        object.__setattr__(self, "activation", act)

    def to_json(self) -> dict:
        return {"units": self.units, "activation": self.activation.value, "bias": self.use_bias}

    @classmethod
    def from_json(cls, obj) -> "LayerSpec":
        if isinstance(obj, LayerSpec):
            return obj
        return cls(obj["units"], obj.get("activation", "identity"), bool(obj.get("bias", True)))


def default_architecture(head: str = "identity") -> list[LayerSpec]:
    """64-64-32 ReLU trunk without bias plus a one-unit head."""
    trunk = [LayerSpec(64, "relu", False), LayerSpec(64, "relu", False),
             LayerSpec(32, "relu", False)]
    return trunk + [LayerSpec(1, head, True)]


def _activate(kind, z):
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    if kind is Activation.SOFTPLUS:
        return np.logaddexp(0.0, z)
    return z


def _activation_grad(kind, z):
    if kind is Activation.RELU:
        # subgradient at 0 is 0
        return (z > 0).astype(float)
    if kind is Activation.SOFTPLUS:
        return expit(z)
    return None


class Network:
    """Feed-forward network ``input_dim -> layers[0] -> ... -> layers[-1]``."""

    def __init__(self, layers, input_dim: int, params=None):
        self.layers = [LayerSpec.from_json(l) for l in layers]
        if not self.layers:
            raise SpecError("a network needs at least one layer")
        if int(input_dim) < 1:
            raise SpecError("input_dim must be >= 1")
        self.input_dim = int(input_dim)
        self._shapes = []
        fan_in = self.input_dim
        for spec in self.layers:
            self._shapes.append(((fan_in, spec.units), spec.units if spec.use_bias else 0))
            fan_in = spec.units
        self.n_params = sum(a * b + nb for (a, b), nb in self._shapes)
        self.bind(np.zeros(self.n_params) if params is None else params, copy=False)
        self._cache = None

    @property
    def output_dim(self) -> int:
        return self.layers[-1].units

    def bind(self, buffer: np.ndarray, copy: bool = True) -> None:
        """Make ``buffer`` the parameter storage, optionally copying current values in."""
        if buffer.shape != (self.n_params,):
            raise DimensionError(f"network needs {self.n_params} parameters, got {buffer.shape}")
        if copy:
            buffer[:] = self.params
        self.params = buffer
        self.weights, self.biases = _views(self._shapes, buffer)
        self._cache = None

    def forward(self, inputs):
        return forward(self, inputs)

    def backward(self, upstream):
        return backward(self, upstream)

    def evaluate(self, inputs) -> np.ndarray:
        """Forward pass that leaves the backprop cache untouched."""
        h = _check_inputs(self, inputs)
        for spec, w, b in zip(self.layers, self.weights, self.biases):
            z = h @ w
            if b is not None:
                z = z + b
            h = _activate(spec.activation, z)
        return h[:, 0] if h.shape[1] == 1 else h

    def copy(self) -> "Network":
        return Network(self.layers, self.input_dim, self.params.copy())


def _views(shapes, buffer):
    weights, biases = [], []
    pos = 0
    for (fi, fo), nb in shapes:
        weights.append(buffer[pos:pos + fi * fo].reshape(fi, fo))
        pos += fi * fo
        biases.append(buffer[pos:pos + nb] if nb else None)
        pos += nb
    return weights, biases


def _check_inputs(net, inputs):
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionError(f"network expects {net.input_dim} input columns, got shape {x.shape}")
    return x


def _key(seed: int) -> int:
    # Philox keys are unsigned 64-bit
    return int(seed) % (1 << 64)


def init_network(specs, input_dim: int, seed: int) -> Network:
    """Glorot-uniform weights from a Philox stream keyed by ``seed``; zero biases."""
    net = Network(specs, input_dim)
    rng = np.random.Generator(np.random.Philox(key=_key(seed)))
    for w in net.weights:
        fan_in, fan_out = w.shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return net


def forward(net: Network, inputs) -> np.ndarray:
    """Evaluate the network and keep the activations for :func:`backward`.

    Returns a vector of length N for single-output networks, else an
    ``(N, units)`` matrix.
    """
    h = _check_inputs(net, inputs)
    if not np.all(np.isfinite(h)):
        raise DimensionError("network inputs must be finite")
    cache = [h]
    pre = []
    for spec, w, b in zip(net.layers, net.weights, net.biases):
        z = h @ w
        if b is not None:
            z = z + b
        pre.append(z)
        h = _activate(spec.activation, z)
        cache.append(h)
    net._cache = (cache, pre)
    return h[:, 0] if h.shape[1] == 1 else h


@dataclass
class NetworkGrads:
    flat: np.ndarray
    weights: list
    biases: list
    inputs: np.ndarray


def backward(net: Network, upstream) -> NetworkGrads:
    """Reverse-mode gradients of ``sum(upstream * output)``.

    Uses and clears the cache of the last :func:`forward` call.
    """
    if net._cache is None:
        raise StaleCacheError("backward() needs a preceding forward() on the same network")
    acts, pre = net._cache
    g = np.asarray(upstream, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape != acts[-1].shape:
        raise StaleCacheError(f"upstream shape {g.shape} does not match the cached "
                              f"output shape {acts[-1].shape}")
    net._cache = None
    flat = np.zeros(net.n_params)
    gw, gb = _views(net._shapes, flat)
    for layer in range(len(net.layers) - 1, -1, -1):
        dact = _activation_grad(net.layers[layer].activation, pre[layer])
        if dact is not None:
            g = g * dact
        np.matmul(acts[layer].T, g, out=gw[layer])
        if gb[layer] is not None:
            gb[layer][:] = g.sum(axis=0)
        g = g @ net.weights[layer].T
    return NetworkGrads(flat, gw, gb, g)
