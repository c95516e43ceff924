"""Feed-forward networks on top of :mod:`intactvae.autodiff`."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

ACTIVATIONS = ("relu", "leaky_relu", "softplus", "identity")


@dataclass
class MlpParams:
    """Weights ``(in, out)`` and biases ``(out,)`` of a fully connected net.

    Entries are numpy arrays, or Tensors while a network is being trained.
    The last layer is always affine (no activation).
    """
    weights: list
    biases: list
    activation: str = "relu"
    alpha: float = 0.01  # leaky_relu negative slope

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(self.layers):
            ws, bs = np.shape(ad.value(w)), np.shape(ad.value(b))
            if len(ws) != 2 or bs != (ws[1],):
                raise ValueError(f"layer {i}: weight {ws} incompatible with bias {bs}")
            if not (np.all(np.isfinite(ad.value(w))) and np.all(np.isfinite(ad.value(b)))):
                raise ValueError(f"layer {i}: non-finite weight or bias")
            if i and ws[0] != np.shape(ad.value(self.weights[i - 1]))[1]:
                raise ValueError(
                    f"layer {i}: expects {ws[0]} inputs but layer {i - 1} "
                    f"produces {np.shape(ad.value(self.weights[i - 1]))[1]}")

    @property
    def layers(self):
        return list(zip(self.weights, self.biases))

    @property
    def n_in(self):
        return np.shape(ad.value(self.weights[0]))[0]

    @property
    def n_out(self):
        return np.shape(ad.value(self.weights[-1]))[1]

    @property
    def sizes(self):
        return [self.n_in] + [np.shape(ad.value(w))[1] for w in self.weights]

    def arrays(self):
        out = []
        for w, b in self.layers:
            out += [w, b]
        return out

    def replace_arrays(self, arrays):
        arrays = list(arrays)
        return MlpParams(arrays[0::2], arrays[1::2], self.activation, self.alpha)


def init_mlp(rng, sizes, activation="relu", alpha=0.01):
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, activation, alpha)


def activate(h, activation, alpha=0.01):
    if activation == "relu":
        return ad.relu(h)
    if activation == "leaky_relu":
        return ad.leaky_relu(h, alpha)
    if activation == "softplus":
        return ad.softplus(h)
    return h


def mlp_forward(params, x):
    """Run ``x`` (a vector or a batch of row vectors) through the network."""
    if not isinstance(x, ad.Tensor):
        x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x.reshape(1, -1) if squeeze else x
    if np.shape(ad.value(h))[1] != params.n_in:
        raise ValueError(f"layer 0: input width {np.shape(ad.value(h))[1]} != {params.n_in}")
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(params.layers):
        h = h @ w + b
        if i < last:
            h = activate(h, params.activation, params.alpha)
    return h.reshape(-1) if squeeze else h
