from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class OptimizerError(RuntimeError):
    pass


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


class AdamW:
    """Adam with decoupled weight decay.

    ``p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)``
    """

    def __init__(self, params: list[Tensor], lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 1e-4):
        self.params = list(params)
        self.state = OptimizerState(
            lr=lr, beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay,
            m=[np.zeros_like(p.data) for p in self.params],
            v=[np.zeros_like(p.data) for p in self.params],
        )

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = np.zeros_like(p.data)

    def step(self) -> None:
        s = self.state
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise OptimizerError(f"parameter {i} with shape {p.shape} has no gradient")
        s.step += 1
        bc1 = 1.0 - s.beta1**s.step
        bc2 = 1.0 - s.beta2**s.step
        for p, m, v in zip(self.params, s.m, s.v):
            g = p.grad
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + s.eps)
            p.data -= s.lr * (update + s.weight_decay * p.data)
