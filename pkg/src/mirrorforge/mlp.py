"""Minimal dense networks with hand-written backpropagation.

One hidden tanh layer, float64 throughout. The backward pass returns both
parameter gradients and the gradient with respect to the inputs; the latter
lets a generator receive gradients through a frozen discriminator.
Adversarial losses are formed in pre-activation (logit) space for numerical
stability, so backward() can optionally accept the gradient at the output
pre-activation instead of at the activated output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Mlp", "ForwardCache", "Adam", "Sgd"]

_ACTIVATIONS = ("tanh", "logistic", "identity")


def _logistic(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    ex = np.exp(x[~positive])
    out[~positive] = ex / (1.0 + ex)
    return out


@dataclass
class ForwardCache:
    """Intermediate values needed by the backward pass."""

    inputs: np.ndarray
    hidden: np.ndarray
    pre_outputs: np.ndarray
    outputs: np.ndarray


class Mlp:
    """Input -> tanh hidden layer -> output (tanh, logistic, or raw affine)."""

    def __init__(
        self,
        w1: np.ndarray,
        b1: np.ndarray,
        w2: np.ndarray,
        b2: np.ndarray,
        output_activation: str = "identity",
    ):
        if output_activation not in _ACTIVATIONS:
            raise ValueError(f"unknown output activation {output_activation!r}")
        if w1.shape[1] != b1.shape[0] or w2.shape[1] != b2.shape[0]:
            raise ValueError("bias shapes do not match weight shapes")
        if w1.shape[1] != w2.shape[0]:
            raise ValueError("hidden dimensions of the two layers disagree")
        arrays = [np.asarray(a, dtype=float) for a in (w1, b1, w2, b2)]
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("network parameters must be finite")
        self.w1, self.b1, self.w2, self.b2 = arrays
        self.output_activation = output_activation

    @classmethod
    def initialize(
        cls,
        n_inputs: int,
        n_hidden: int,
        n_outputs: int,
        output_activation: str,
        rng: np.random.Generator,
    ) -> "Mlp":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
        bound1 = 1.0 / np.sqrt(n_inputs)
        bound2 = 1.0 / np.sqrt(n_hidden)
        return cls(
            w1=rng.uniform(-bound1, bound1, (n_inputs, n_hidden)),
            b1=rng.uniform(-bound1, bound1, n_hidden),
            w2=rng.uniform(-bound2, bound2, (n_hidden, n_outputs)),
            b2=rng.uniform(-bound2, bound2, n_outputs),
            output_activation=output_activation,
        )

    @property
    def n_inputs(self) -> int:
        return self.w1.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.w2.shape[1]

    def parameters(self) -> list[np.ndarray]:
        """Live references, ordered to match backward()'s gradient list."""
        return [self.w1, self.b1, self.w2, self.b2]

    def copy(self) -> "Mlp":
        return Mlp(
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
            output_activation=self.output_activation,
        )

    def forward(self, inputs: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        if inputs.shape[1] != self.n_inputs:
            raise ValueError(
                f"expected {self.n_inputs} input features, got {inputs.shape[1]}"
            )
        hidden = np.tanh(inputs @ self.w1 + self.b1)
        pre = hidden @ self.w2 + self.b2
        if self.output_activation == "tanh":
            outputs = np.tanh(pre)
        elif self.output_activation == "logistic":
            outputs = _logistic(pre)
        else:
            outputs = pre
        return outputs, ForwardCache(
            inputs=inputs, hidden=hidden, pre_outputs=pre, outputs=outputs
        )

    def backward(
        self,
        cache: ForwardCache,
        grad: np.ndarray,
        at_preactivation: bool = False,
    ) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients for parameters() plus the gradient w.r.t. the inputs.

        ``grad`` is the loss gradient at the activated outputs, or at the
        output pre-activation when ``at_preactivation`` is set (the stable
        form for logistic-output losses).
        """
        grad = np.asarray(grad, dtype=float)
        if at_preactivation:
            grad_pre = grad
        elif self.output_activation == "tanh":
            grad_pre = grad * (1.0 - cache.outputs**2)
        elif self.output_activation == "logistic":
            grad_pre = grad * cache.outputs * (1.0 - cache.outputs)
        else:
            grad_pre = grad
        grad_w2 = cache.hidden.T @ grad_pre
        grad_b2 = grad_pre.sum(axis=0)
        grad_hidden = (grad_pre @ self.w2.T) * (1.0 - cache.hidden**2)
        grad_w1 = cache.inputs.T @ grad_hidden
        grad_b1 = grad_hidden.sum(axis=0)
        grad_inputs = grad_hidden @ self.w1.T
        return [grad_w1, grad_b1, grad_w2, grad_b2], grad_inputs

    def to_dict(self) -> dict:
        return {
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
            "output_activation": self.output_activation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Mlp":
        return cls(
            w1=np.asarray(data["w1"], dtype=float),
            b1=np.asarray(data["b1"], dtype=float),
            w2=np.asarray(data["w2"], dtype=float),
            b2=np.asarray(data["b2"], dtype=float),
            output_activation=data["output_activation"],
        )


class Adam:
    """Adam with bias correction; one slot pair per parameter array."""

    def __init__(
        self,
        params: list[np.ndarray],
        learning_rate: float = 2e-4,
        beta1: float = 0.5,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._first = [np.zeros_like(p) for p in params]
        self._second = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if len(params) != len(self._first):
            raise ValueError("parameter list does not match optimizer state")
        self.step_count += 1
        correct1 = 1.0 - self.beta1**self.step_count
        correct2 = 1.0 - self.beta2**self.step_count
        for p, g, m, v in zip(params, grads, self._first, self._second):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g**2
            p -= (
                self.learning_rate
                * (m / correct1)
                / (np.sqrt(v / correct2) + self.eps)
            )


class Sgd:
    """Plain gradient descent with a fixed learning rate."""

    def __init__(self, params: list[np.ndarray], learning_rate: float = 2e-4):
        self.learning_rate = learning_rate
        self._n = len(params)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if len(params) != self._n:
            raise ValueError("parameter list does not match optimizer state")
        for p, g in zip(params, grads):
            p -= self.learning_rate * g
