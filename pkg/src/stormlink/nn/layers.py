"""Differentiable layers with explicit forward/backward passes.

Each layer caches whatever its backward pass needs during forward.
Parameterized layers accumulate gradients into .grads, keyed like .weights.
"""

from __future__ import annotations

import numpy as np


class Layer:
    weights: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def __init__(self) -> None:
        self.weights = {}
        self.grads = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grads(self) -> None:
        for k in self.grads:
            self.grads[k][...] = 0.0


class Conv2D(Layer):
    """3x3 convolution, stride 1, same padding."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3) -> None:
        super().__init__()
        if kernel % 2 != 1:
            raise ValueError("kernel size must be odd")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.weights = {
            "w": np.zeros((out_channels, in_channels, kernel, kernel)),
            "b": np.zeros(out_channels),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.weights.items()}
        self._cols: np.ndarray | None = None
        self._shape: tuple[int, ...] | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        k = self.kernel
        pad = k // 2
        padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        cols = np.empty((n, c, k * k, h * w))
        for di in range(k):
            for dj in range(k):
                cols[:, :, di * k + dj, :] = padded[:, :, di : di + h, dj : dj + w].reshape(
                    n, c, h * w
                )
        cols = cols.reshape(n, c * k * k, h * w)
        wflat = self.weights["w"].reshape(self.out_channels, c * k * k)
        out = np.matmul(wflat[None], cols) + self.weights["b"][None, :, None]
        self._cols = cols
        self._shape = (n, c, h, w)
        return out.reshape(n, self.out_channels, h, w)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        assert self._cols is not None and self._shape is not None
        n, c, h, w = self._shape
        k = self.kernel
        pad = k // 2
        dflat = grad.reshape(n, self.out_channels, h * w)
        wflat = self.weights["w"].reshape(self.out_channels, c * k * k)
        self.grads["w"] += np.einsum("nop,nfp->of", dflat, self._cols).reshape(
            self.weights["w"].shape
        )
        self.grads["b"] += dflat.sum(axis=(0, 2))
        dcols = np.matmul(wflat.T[None], dflat).reshape(n, c, k * k, h * w)
        dpad = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
        for di in range(k):
            for dj in range(k):
                dpad[:, :, di : di + h, dj : dj + w] += dcols[:, :, di * k + dj, :].reshape(
                    n, c, h, w
                )
        return dpad[:, :, pad : pad + h, pad : pad + w]


class ReLU(Layer):
    def __init__(self) -> None:
        super().__init__()
        self._mask: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        assert self._mask is not None
        return np.where(self._mask, grad, 0.0)


class MaxPool2D(Layer):
    """2x2 max pooling, stride 2; a trailing odd row/column forms a partial window."""

    def __init__(self) -> None:
        super().__init__()
        self._idx: np.ndarray | None = None
        self._shape: tuple[int, ...] | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        h2, w2 = h + h % 2, w + w % 2
        padded = np.full((n, c, h2, w2), -np.inf)
        padded[:, :, :h, :w] = x
        windows = (
            padded.reshape(n, c, h2 // 2, 2, w2 // 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h2 // 2, w2 // 2, 4)
        )
        self._idx = windows.argmax(axis=-1)
        self._shape = (n, c, h, w)
        return np.take_along_axis(windows, self._idx[..., None], axis=-1)[..., 0]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        assert self._idx is not None and self._shape is not None
        n, c, h, w = self._shape
        h2, w2 = h + h % 2, w + w % 2
        dwin = np.zeros((n, c, h2 // 2, w2 // 2, 4))
        np.put_along_axis(dwin, self._idx[..., None], grad[..., None], axis=-1)
        dpad = (
            dwin.reshape(n, c, h2 // 2, w2 // 2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h2, w2)
        )
        return dpad[:, :, :h, :w]


class Flatten(Layer):
    def __init__(self) -> None:
        super().__init__()
        self._shape: tuple[int, ...] | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        assert self._shape is not None
        return grad.reshape(self._shape)


class Linear(Layer):
    def __init__(self, in_features: int, out_features: int) -> None:
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weights = {"w": np.zeros((out_features, in_features)), "b": np.zeros(out_features)}
        self.grads = {k: np.zeros_like(v) for k, v in self.weights.items()}
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.weights["w"].T + self.weights["b"]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        assert self._x is not None
        self.grads["w"] += grad.T @ self._x
        self.grads["b"] += grad.sum(axis=0)
        return grad @ self.weights["w"]


class Sigmoid(Layer):
    def __init__(self) -> None:
        super().__init__()
        self._out: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self._out = out
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        assert self._out is not None
        return grad * self._out * (1.0 - self._out)
