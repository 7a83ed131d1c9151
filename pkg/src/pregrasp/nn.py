"""Small dense networks with hand-written reverse mode and Adam.

Parameters of one network live in a single flat float64 vector; per-layer
weights and biases are views into it, which keeps Adam and polyak averaging
to one vectorized expression each.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

HIDDEN = (64, 64)


class InvalidLayout(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


class NonFiniteGradient(FloatingPointError):
    pass


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {what}")


class MlpParams:
    """Weights of an MLP ``sizes[0] -> ... -> sizes[-1]`` with tanh hidden units."""

    def __init__(self, sizes: Sequence[int], flat: np.ndarray | None = None):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise InvalidLayout(f"invalid layout {sizes}")
        self.sizes = sizes
        n = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
        if flat is None:
            flat = np.zeros(n)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (n,):
            raise ShapeMismatch(f"expected {n} parameters for {sizes}, got {flat.shape}")
        self.flat = flat
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        off = 0
        for a, b in zip(sizes[:-1], sizes[1:]):
            self.weights.append(flat[off:off + a * b].reshape(a, b))
            off += a * b
            self.biases.append(flat[off:off + b])
            off += b

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w.shape, b.shape]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(self.sizes, self.flat.copy())

    def zeros_like(self) -> "MlpParams":
        return MlpParams(self.sizes)

    def __eq__(self, other) -> bool:
        return (isinstance(other, MlpParams) and self.sizes == other.sizes
                and np.array_equal(self.flat, other.flat))


def mlp_layout(n_in: int, n_out: int, hidden: Sequence[int] = HIDDEN) -> tuple[int, ...]:
    return (n_in, *hidden, n_out)


def mlp_init(sizes: Sequence[int], rng: np.random.Generator) -> MlpParams:
    """Fan-in scaled uniform weights, zero biases.

    Weights are drawn from U(-sqrt(3/fan_in), sqrt(3/fan_in)), i.e. variance
    1/fan_in.
    """
    params = MlpParams(sizes)
    for w in params.weights:
        bound = np.sqrt(3.0 / w.shape[0])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return params


@dataclass
class MlpCache:
    inputs: list[np.ndarray]  # input to each layer (post-activation of the previous)
    hidden_out: list[np.ndarray]  # tanh outputs


def mlp_forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
    """Forward pass over a single input vector or a batch (rows)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.sizes[0]:
        raise ShapeMismatch(f"input width {x.shape[-1]} != {params.sizes[0]}")
    _check_finite(x, "network input")
    inputs, hidden = [], []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        if i < last:
            h = np.tanh(z)
            hidden.append(h)
        else:
            h = z
    return h, MlpCache(inputs, hidden)


def mlp_backward(
    params: MlpParams, cache: MlpCache, grad_out: np.ndarray
) -> tuple[MlpParams, np.ndarray]:
    """Gradients of ``sum(output * grad_out)`` w.r.t. parameters and input.

    For batched forwards the parameter gradient is summed over rows.
    """
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape[-1] != params.sizes[-1]:
        raise ShapeMismatch(f"output gradient width {grad_out.shape[-1]} != {params.sizes[-1]}")
    grads = params.zeros_like()
    g = grad_out
    for i in range(len(params.weights) - 1, -1, -1):
        inp = cache.inputs[i]
        if inp.ndim == 1:
            grads.weights[i][...] = np.outer(inp, g)
            grads.biases[i][...] = g
        else:
            grads.weights[i][...] = inp.T @ g
            grads.biases[i][...] = g.sum(axis=0)
        g = g @ params.weights[i].T
        if i > 0:
            g = g * (1.0 - cache.hidden_out[i - 1] ** 2)
    return grads, g


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.step, self.beta1, self.beta2, self.eps)


def adam_update(state: AdamState, flat: np.ndarray, grad: np.ndarray, lr: float) -> None:
    """In-place bias-corrected Adam step on a flat parameter vector."""
    if grad.shape != flat.shape or state.m.shape != flat.shape:
        raise ShapeMismatch("Adam shapes do not match the parameters")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("refusing to apply a non-finite gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * grad * grad
    mhat = state.m / (1.0 - b1 ** state.step)
    vhat = state.v / (1.0 - b2 ** state.step)
    flat -= lr * mhat / (np.sqrt(vhat) + state.eps)


def adam_step(
    state: AdamState, params: MlpParams, grads: MlpParams, learning_rate: float
) -> tuple[MlpParams, AdamState]:
    """Functional Adam step: returns new params and state, inputs untouched."""
    new_params, new_state = params.copy(), state.copy()
    adam_update(new_state, new_params.flat, grads.flat, learning_rate)
    return new_params, new_state


def polyak_update(target: MlpParams, online: MlpParams, tau: float) -> MlpParams:
    """``target <- tau * target + (1 - tau) * online`` in place; returns ``target``."""
    if target.sizes != online.sizes:
        raise ShapeMismatch(f"{target.sizes} vs {online.sizes}")
    target.flat *= tau
    target.flat += (1.0 - tau) * online.flat
    return target
