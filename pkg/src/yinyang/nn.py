"""Dense layers and the Adam optimizer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


@dataclass
class MlpParams:
    """Affine layers ``(W, b)`` with ``W`` of shape (fan_in, fan_out)."""

    layers: list
    activations: list  # "relu" or "identity", one per layer

    @property
    def P(self) -> int:
        return len(self.layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    def named(self, prefix: str) -> dict:
        out = {}
        for i, (W, b) in enumerate(self.layers):
            out[f"{prefix}.{i}.W"] = W
            out[f"{prefix}.{i}.b"] = b
        return out

    def load_named(self, prefix: str, values: dict) -> None:
        self.layers = [(values[f"{prefix}.{i}.W"], values[f"{prefix}.{i}.b"])
                       for i in range(len(self.layers))]


def init_mlp(dims, rng: np.random.Generator, final_activation: str = "identity") -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        layers.append((rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)))
    acts = ["relu"] * (len(layers) - 1) + [final_activation]
    return MlpParams(layers, acts)


def mlp_forward(X, params: MlpParams, tape: ad.Tape | None = None, prefix: str = "mlp",
                dropout: float = 0.0, rng: np.random.Generator | None = None):
    """Row-wise MLP. With a tape the weights are registered as named leaves.

    Dropout (inverted scaling) is applied to the input of every layer after
    the first when ``dropout > 0``; pass ``rng`` to make it reproducible.
    """
    h = X
    if np.shape(ad.value(X))[-1] != params.in_dim:
        raise ValueError(f"input has {np.shape(ad.value(X))[-1]} columns, first layer expects {params.in_dim}")
    for i, ((W, b), act) in enumerate(zip(params.layers, params.activations)):
        if tape is not None:
            W = tape.param(f"{prefix}.{i}.W", W)
            b = tape.param(f"{prefix}.{i}.b", b)
        if dropout > 0 and i > 0:
            keep = (rng.random(np.shape(ad.value(h))) >= dropout) / (1.0 - dropout)
            h = ad.mul(h, keep)
        h = ad.add(ad.matmul(h, W), b)
        if act == "relu":
            h = ad.relu(h)
        elif act != "identity":
            raise ValueError(f"unknown activation {act!r}")
    return h


def backward(tape: ad.Tape, loss, seed: float = 1.0) -> dict:
    return tape.backward(loss, seed)


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict) -> dict:
    """One bias-corrected Adam update; returns a new parameter dict."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    out = dict(params)
    for name, g in grads.items():
        p = params[name]
        if np.shape(g) != np.shape(p):
            raise ValueError(f"gradient shape {np.shape(g)} != parameter shape {np.shape(p)} for {name!r}")
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - state.beta1 ** t)
        v_hat = v / (1 - state.beta2 ** t)
        out[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out
