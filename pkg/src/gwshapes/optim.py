"""Adam optimizer over lists of parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import GraphError, Tensor


@dataclass
class AdamState:
    """Moment buffers and hyperparameters; moments start at zero."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)
    _scratch: list = field(default_factory=list, repr=False)


def adam_step(state: AdamState, params: list[Tensor], grads: list[np.ndarray]) -> AdamState:
    """One in-place Adam update with bias correction.

    Rejects frozen parameters and mismatched shapes. Deterministic: the same
    state, parameters and gradients always produce the same update. Gradients
    are read-only; updates run through preallocated scratch buffers.
    """
    if len(params) != len(grads):
        raise GraphError(f"{len(params)} params vs {len(grads)} grads")
    for p in params:
        if p.frozen:
            raise GraphError(f"refusing to update frozen parameter node {p.node_id}")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p.value) for p in params]
        state.second_moment = [np.zeros_like(p.value) for p in params]
        state._scratch = [(np.empty_like(p.value), np.empty_like(p.value)) for p in params]
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, g, m, v, (t1, t2) in zip(params, grads, state.first_moment,
                                    state.second_moment, state._scratch):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.value.shape:
            raise GraphError(f"grad shape {g.shape} vs param shape {p.value.shape}")
        m *= state.beta1
        np.multiply(g, 1.0 - state.beta1, out=t1)
        m += t1
        v *= state.beta2
        np.multiply(g, g, out=t1)
        t1 *= 1.0 - state.beta2
        v += t1
        np.divide(v, bc2, out=t1)
        np.sqrt(t1, out=t1)
        t1 += state.epsilon
        np.divide(m, t1, out=t2)
        t2 *= state.learning_rate / bc1
        p.value -= t2
    return state


class Adam:
    """Convenience wrapper reading gradients off the tensors' ``.grad``."""

    def __init__(self, params: list[Tensor], learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        for p in params:
            if p.frozen:
                raise GraphError(f"frozen parameter node {p.node_id} given to optimizer")
        self.params = list(params)
        self.state = AdamState(learning_rate, beta1, beta2, epsilon)

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.value) for p in self.params]
        adam_step(self.state, self.params, grads)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
