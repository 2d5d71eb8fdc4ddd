"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AdamWConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValueError("betas must lie in [0, 1)")
        if self.lr <= 0 or self.eps <= 0 or self.weight_decay < 0:
            raise ValueError("lr and eps must be positive, weight_decay non-negative")


class AdamW:
    """Tracks first/second moments per parameter tensor of one network."""

    def __init__(self, parameters, config: AdamWConfig = AdamWConfig()) -> None:
        self.config = config
        self.parameters = list(parameters)  # [(name, weight, grad)]
        self.t = 0
        self._m = {name: np.zeros_like(w) for name, w, _ in self.parameters}
        self._v = {name: np.zeros_like(w) for name, w, _ in self.parameters}

    def step(self) -> None:
        c = self.config
        self.t += 1
        bias1 = 1.0 - c.beta1**self.t
        bias2 = 1.0 - c.beta2**self.t
        for name, w, g in self.parameters:
            # decay is decoupled from the gradient-based update
            w -= c.lr * c.weight_decay * w
            m = self._m[name]
            v = self._v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            w -= c.lr * (m / bias1) / (np.sqrt(v / bias2) + c.eps)
