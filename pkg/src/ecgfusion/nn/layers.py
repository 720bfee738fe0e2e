"""Numpy layers with forward caches and exact analytic backward passes.

The conv stack runs channels-last: waveform activations are
(batch, length, channels), which makes every im2col row a contiguous
memory slab and keeps the matmuls copy-light. Dense/head layers operate on
plain (batch, features) matrices. Every layer owns its parameters and
gradients in dicts keyed by short names; the model prefixes them into a
flat parameter tree.
"""

from __future__ import annotations

import numpy as np


class Layer:
    def __init__(self) -> None:
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, train: bool,
                rng: np.random.Generator | None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv1d(Layer):
    """Stride-1 'same' 1-D convolution on (B, L, C) activations.

    The public weight shape stays the conventional (out, in, kernel); the
    matmul layouts are derived per call (the reshaped weights are tiny).
    ``bias=False`` for convolutions feeding a BatchNorm: the normalization
    cancels any additive channel constant, so such a bias is a dead
    parameter."""

    def __init__(self, c_in: int, c_out: int, kernel: int,
                 rng: np.random.Generator, dtype=np.float32, bias: bool = True):
        super().__init__()
        self.k = kernel
        self.pad_left = (kernel - 1) // 2
        self.pad_right = kernel - 1 - self.pad_left
        std = np.sqrt(2.0 / (c_in * kernel))
        self.params["W"] = (rng.normal(0.0, std, (c_out, c_in, kernel))
                            .astype(dtype))
        if bias:
            self.params["b"] = np.zeros(c_out, dtype=dtype)
        self._cache = None

    def forward(self, x, train, rng):
        """Accumulate one GEMM per kernel tap over contiguous row slices:
        records are laid out back to back with their own padding, so a
        window starting inside record i never reads record i+1."""
        b, l, c = x.shape
        lp = l + self.k - 1
        n = b * lp
        W = self.params["W"]
        o = W.shape[0]
        xp = np.pad(x, ((0, 0), (self.pad_left, self.pad_right), (0, 0)))
        x2 = np.pad(xp.reshape(n, c), ((0, self.k - 1), (0, 0)))
        y2 = np.zeros((n, o), dtype=x.dtype)
        tmp = np.empty_like(y2)
        for k in range(self.k):
            np.dot(x2[k:k + n], np.ascontiguousarray(W[:, :, k].T), out=tmp)
            y2 += tmp
        self._cache = (x2, (b, l, c)) if train else None
        y = np.ascontiguousarray(y2.reshape(b, lp, o)[:, :l])
        if "b" in self.params:
            y += self.params["b"]
        return y

    def backward(self, dy):
        assert self._cache is not None, "backward without a training forward"
        x2, (b, l, c) = self._cache
        self._cache = None
        W = self.params["W"]
        o = W.shape[0]
        lp = l + self.k - 1
        n = b * lp
        dy_emb = np.zeros((b, lp, o), dtype=dy.dtype)
        dy_emb[:, :l] = dy
        dy2 = dy_emb.reshape(n, o)
        dW = np.empty_like(W)
        dx2 = np.zeros((n + self.k - 1, c), dtype=dy.dtype)
        tmp = np.empty((n, c), dtype=dy.dtype)
        for k in range(self.k):
            dW[:, :, k] = dy2.T @ x2[k:k + n]
            np.dot(dy2, W[:, :, k], out=tmp)
            dx2[k:k + n] += tmp
        self.grads["W"] = dW
        if "b" in self.params:
            self.grads["b"] = dy2.sum(axis=0)
        dxp = dx2[:n].reshape(b, lp, c)
        return np.ascontiguousarray(dxp[:, self.pad_left:self.pad_left + l])


class BatchNorm1d(Layer):
    """Per-channel batch normalization over (batch, length)."""

    def __init__(self, channels: int, dtype=np.float32,
                 momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_var"] = np.ones(channels, dtype=dtype)
        self._cache = None

    def forward(self, x, train, rng):
        if train:
            mean = x.mean(axis=(0, 1))
            var = x.var(axis=(0, 1))
            m = self.momentum
            self.buffers["running_mean"] = ((1 - m) * self.buffers["running_mean"]
                                            + m * mean).astype(x.dtype)
            self.buffers["running_var"] = ((1 - m) * self.buffers["running_var"]
                                           + m * var).astype(x.dtype)
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        ivar = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * ivar
        if train:
            self._cache = (xhat, ivar)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, dy):
        xhat, ivar = self._cache
        self._cache = None
        n = dy.shape[0] * dy.shape[1]
        self.grads["gamma"] = (dy * xhat).sum(axis=(0, 1))
        self.grads["beta"] = dy.sum(axis=(0, 1))
        dxhat = dy * self.params["gamma"]
        s1 = dxhat.sum(axis=(0, 1), keepdims=True)
        s2 = (dxhat * xhat).sum(axis=(0, 1), keepdims=True)
        return (ivar / n) * (n * dxhat - s1 - xhat * s2)


class ReLU(Layer):
    def forward(self, x, train, rng):
        mask = x > 0
        self._mask = mask if train else None
        return x * mask

    def backward(self, dy):
        return dy * self._mask


class Dropout(Layer):
    """Inverted dropout; identity at p=0 or in inference mode."""

    def __init__(self, p: float):
        super().__init__()
        self.p = p
        self._mask = None

    def forward(self, x, train, rng):
        if not train or self.p <= 0.0:
            self._mask = None
            return x
        assert rng is not None, "dropout in training mode needs an rng"
        keep = (rng.random(x.shape) >= self.p).astype(x.dtype) / (1.0 - self.p)
        self._mask = keep
        return x * keep

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


class MaxPool1d(Layer):
    """Non-overlapping max pooling along the length axis of (B, L, C)."""

    def __init__(self, size: int):
        super().__init__()
        self.size = size

    def forward(self, x, train, rng):
        b, l, c = x.shape
        pad = (-l) % self.size
        if pad:
            x = np.pad(x, ((0, 0), (0, pad), (0, 0)), constant_values=-np.inf)
        xr = x.reshape(b, -1, self.size, c)
        idx = xr.argmax(axis=2)
        y = np.take_along_axis(xr, idx[:, :, None, :], axis=2)[:, :, 0, :]
        if train:
            self._cache = (idx, x.shape, l, x.dtype)
        return y

    def backward(self, dy):
        idx, padded_shape, l, dtype = self._cache
        self._cache = None
        b, lp, c = padded_shape
        dxr = np.zeros((b, lp // self.size, self.size, c), dtype=dtype)
        np.put_along_axis(dxr, idx[:, :, None, :], dy[:, :, None, :], axis=2)
        return dxr.reshape(b, lp, c)[:, :l]


class GlobalAvgPool(Layer):
    """(B, L, C) -> (B, C) mean over time."""

    def forward(self, x, train, rng):
        self._l = x.shape[1]
        return x.mean(axis=1)

    def backward(self, dy):
        return np.repeat(dy[:, None, :], self._l, axis=1) / self._l


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 dtype=np.float32):
        super().__init__()
        std = np.sqrt(2.0 / n_in)
        self.params["W"] = rng.normal(0.0, std, (n_in, n_out)).astype(dtype)
        self.params["b"] = np.zeros(n_out, dtype=dtype)

    def forward(self, x, train, rng):
        self._x = x if train else None
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        x = self._x
        self._x = None
        self.grads["W"] = x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"].T


class ConcatDense(Layer):
    """First merge-head layer with structurally separate weight blocks for
    the deep features and the engineered-feature vector.

    Keeping ``W_fe`` as its own tensor makes the merge-neutrality contract
    exact: with W_fe == 0 the fe term is a matmul against zeros, added to
    the identical deep-branch matmul a plain Dense would compute.
    """

    def __init__(self, n_deep: int, n_fe: int, n_out: int,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        std = np.sqrt(2.0 / max(1, n_deep + n_fe))
        self.n_fe = n_fe
        self.params["W"] = rng.normal(0.0, std, (n_deep, n_out)).astype(dtype)
        if n_fe:
            self.params["W_fe"] = rng.normal(0.0, std, (n_fe, n_out)).astype(dtype)
        self.params["b"] = np.zeros(n_out, dtype=dtype)

    def forward(self, inputs, train, rng):
        deep, fe = inputs
        self._x = (deep, fe) if train else None
        y = deep @ self.params["W"] + self.params["b"]
        if self.n_fe:
            y = y + fe @ self.params["W_fe"]
        return y

    def backward(self, dy):
        deep, fe = self._x
        self._x = None
        self.grads["W"] = deep.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        d_deep = dy @ self.params["W"].T
        d_fe = None
        if self.n_fe:
            self.grads["W_fe"] = fe.T @ dy
            d_fe = dy @ self.params["W_fe"].T
        return d_deep, d_fe


class Sigmoid(Layer):
    def forward(self, x, train, rng):
        # two-branch form avoids exp overflow for large |x|
        y = np.where(x >= 0,
                     1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        self._y = y if train else None
        return y

    def backward(self, dy):
        y = self._y
        self._y = None
        return dy * y * (1.0 - y)
