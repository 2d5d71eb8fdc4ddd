"""Training loop and finite-difference gradient verification."""

from __future__ import annotations

import numpy as np

from .losses import bce_loss, mae_loss
from .network import KIND_CLASSIFY, Network
from .optim import AdamW


class TrainingDiverged(RuntimeError):
    """Raised when a training step produces a non-finite loss."""


def _loss_for(net: Network, probs_or_coords: np.ndarray, targets: np.ndarray):
    if net.kind == KIND_CLASSIFY:
        return bce_loss(probs_or_coords, targets)
    return mae_loss(probs_or_coords, targets)


def train_step(net: Network, x: np.ndarray, y: np.ndarray, opt: AdamW) -> float:
    """One optimizer update over a pre-normalized batch; returns the pre-update loss."""
    out = net.forward(x)
    loss, grad = _loss_for(net, out, y)
    if not np.isfinite(loss):
        finite = out[np.isfinite(out)]
        span = f"[{finite.min():.3g}, {finite.max():.3g}]" if finite.size else "all non-finite"
        raise TrainingDiverged(
            f"non-finite loss at optimizer step {opt.t + 1}: {loss!r} (output range {span})"
        )
    net.zero_grads()
    net.backward(grad)
    opt.step()
    return loss


def fit(
    net: Network,
    x: np.ndarray,
    y: np.ndarray,
    opt: AdamW,
    steps: int,
    batch_size: int,
    seed: int,
) -> list[float]:
    """Seeded mini-batch training; two runs with equal seeds give equal trajectories."""
    rng = np.random.default_rng(seed)
    n = x.shape[0]
    history: list[float] = []
    order = np.array([], dtype=np.int64)
    for _ in range(steps):
        if order.size < batch_size:
            order = np.concatenate([order, rng.permutation(n)])
        batch, order = order[:batch_size], order[batch_size:]
        history.append(train_step(net, x[batch], y[batch], opt))
    return history


def gradient_check(
    net: Network,
    x: np.ndarray,
    y: np.ndarray,
    n_params: int = 100,
    h: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks a random subset of parameters; float64 throughout. The
    relative error uses |ga - gn| / max(1e-8, |ga| + |gn|).
    """
    out = net.forward(x)
    _, grad = _loss_for(net, out, y)
    net.zero_grads()
    net.backward(grad)
    params = net.parameters()
    analytic = {name: g.copy() for name, _, g in params}

    flat_index = [(name, i) for name, w, _ in params for i in range(w.size)]
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(flat_index), size=min(n_params, len(flat_index)), replace=False)

    tensors = {name: w for name, w, _ in params}
    worst = 0.0
    for p in picks:
        name, i = flat_index[p]
        w = tensors[name].reshape(-1)
        orig = w[i]
        w[i] = orig + h
        loss_plus, _ = _loss_for(net, net.forward(x), y)
        w[i] = orig - h
        loss_minus, _ = _loss_for(net, net.forward(x), y)
        w[i] = orig
        numeric = (loss_plus - loss_minus) / (2.0 * h)
        ga = analytic[name].reshape(-1)[i]
        rel = abs(ga - numeric) / max(1e-8, abs(ga) + abs(numeric))
        worst = max(worst, rel)
    return worst
