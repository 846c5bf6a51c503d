"""Small trainable building blocks shared by the model stages."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


class Linear:
    def __init__(self, rng, n_in, n_out):
        self.weight = ad.he_param(rng, n_in, (n_in, n_out))
        self.bias = ad.zeros_param((n_out,))

    def __call__(self, x):
        return x @ self.weight + self.bias

    @property
    def params(self):
        return [self.weight, self.bias]


class Mlp:
    """Stack of Linear layers with an activation between them.

    `final_act=None` leaves the last layer linear.
    """

    def __init__(self, rng, widths, hidden_act=ad.leaky_relu, final_act=None):
        self.layers = [Linear(rng, a, b) for a, b in zip(widths[:-1], widths[1:])]
        self.hidden_act = hidden_act
        self.final_act = final_act

    def __call__(self, x):
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            act = self.final_act if i == last else self.hidden_act
            if act is not None:
                x = act(x)
        return x

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]


class LayerNorm:
    def __init__(self, dim, eps=1e-5):
        self.gamma = ad.ones_param((dim,))
        self.beta = ad.zeros_param((dim,))
        self.eps = eps

    def __call__(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered / ad.sqrt(var + self.eps) * self.gamma + self.beta

    @property
    def params(self):
        return [self.gamma, self.beta]


def collect_params(*blocks):
    out = []
    for block in blocks:
        out.extend(block.params if hasattr(block, "params") else [block])
    return out
