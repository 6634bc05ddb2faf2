"""Network layers with hand-written forward/backward passes.

Each layer is stateless across calls except for its parameters (and the
Batch Renormalization moving moments): forward returns an opaque cache
that backward consumes, so the same layer can serve several concurrent
partial passes (e.g. the native sub-batch below the tap and the joint
batch above it).
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ShapeError

TRAIN, EVAL = "train", "eval"


class Layer:
    kind = "base"

    def __init__(self, name: str):
        self.name = name
        self.params: dict[str, np.ndarray] = {}

    def state_tensors(self) -> dict[str, np.ndarray]:
        """Tensors to checkpoint: parameters plus non-learnable state."""
        return dict(self.params)

    def load_state(self, tensors: dict[str, np.ndarray]) -> None:
        for key, arr in self.state_tensors().items():
            src = tensors[key]
            if src.shape != arr.shape:
                raise ShapeError(f"{self.name}.{key}: shape {src.shape} != {arr.shape}")
            arr[...] = src

    def out_shape(self, in_shape: tuple) -> tuple:
        raise NotImplementedError

    def forward(self, x: np.ndarray, mode: str):
        raise NotImplementedError

    def backward(self, dy: np.ndarray, cache):
        """Returns (dx, param_grads)."""
        raise NotImplementedError

    def spec(self) -> dict:
        return {"name": self.name, "kind": self.kind}


class Dense(Layer):
    kind = "dense"

    def __init__(self, name, in_features, units, rng=None):
        super().__init__(name)
        self.in_features, self.units = in_features, units
        scale = np.sqrt(2.0 / in_features)
        w = rng.normal((in_features, units)) * scale if rng is not None else \
            np.zeros((in_features, units), dtype=np.float32)
        self.params = {"w": w.astype(np.float32), "b": np.zeros(units, dtype=np.float32)}

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.in_features:
            raise ShapeError(f"{self.name}: expected ({self.in_features},), got {in_shape}")
        return (self.units,)

    def forward(self, x, mode):
        y = kernels.matmul(x, self.params["w"]) + self.params["b"]
        return y, x

    def backward(self, dy, cache):
        x = cache
        dw = (x.astype(np.float64).T @ dy.astype(np.float64)).astype(np.float32)
        db = dy.astype(np.float64).sum(axis=0).astype(np.float32)
        dx = (dy.astype(np.float64) @ self.params["w"].astype(np.float64).T).astype(np.float32)
        return dx, {"w": dw, "b": db}

    def spec(self):
        return {"name": self.name, "kind": self.kind, "units": self.units}


class Conv(Layer):
    """Grouped 2-D convolution; groups == in_channels gives kind 'dwconv'."""

    kind = "conv"

    def __init__(self, name, in_channels, out_channels, kernel, stride=1, pad=0,
                 groups=1, rng=None):
        super().__init__(name)
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.pad, self.groups = kernel, stride, pad, groups
        c_g = in_channels // groups
        fan_in = c_g * kernel * kernel
        shape = (out_channels, c_g, kernel, kernel)
        w = rng.normal(shape) * np.sqrt(2.0 / fan_in) if rng is not None else \
            np.zeros(shape, dtype=np.float32)
        self.params = {"w": w.astype(np.float32)}

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_channels:
            raise ShapeError(f"{self.name}: expected {self.in_channels} channels, got {c}")
        ho = kernels.conv_out_extent(h, self.kernel, self.stride, self.pad)
        wo = kernels.conv_out_extent(w, self.kernel, self.stride, self.pad)
        return (self.out_channels, ho, wo)

    def forward(self, x, mode):
        y = kernels.conv2d(x, self.params["w"], self.stride, self.pad, self.groups)
        return y, x

    def backward(self, dy, cache):
        dx, dw = kernels.conv2d_backward(cache, self.params["w"], dy,
                                         self.stride, self.pad, self.groups)
        return dx, {"w": dw}

    def spec(self):
        return {"name": self.name, "kind": self.kind, "out_channels": self.out_channels,
                "kernel": self.kernel, "stride": self.stride, "pad": self.pad,
                "groups": self.groups}


class DwConv(Conv):
    kind = "dwconv"

    def __init__(self, name, channels, kernel, stride=1, pad=0, rng=None):
        super().__init__(name, channels, channels, kernel, stride, pad,
                         groups=channels, rng=rng)

    def spec(self):
        return {"name": self.name, "kind": self.kind, "kernel": self.kernel,
                "stride": self.stride, "pad": self.pad}


class Relu(Layer):
    kind = "relu"

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, mode):
        y = np.maximum(x, 0.0).astype(np.float32)
        return y, x > 0

    def backward(self, dy, cache):
        return (dy * cache).astype(np.float32), {}


class Brn(Layer):
    """Batch Renormalization.

    Train mode normalizes with batch moments corrected by r, d clipped
    against the moving moments; eval mode uses the moving moments. When
    ``moments_frozen`` is set the layer is a fixed affine normalizer:
    it applies the eval formula in both modes and never updates moments,
    which keeps stored latent activations exactly reproducible.

    r and d are treated as constants in backward.
    """

    kind = "brn"

    def __init__(self, name, channels, r_max=1.25, d_max=0.5, avg_rate=0.99995,
                 eps=1e-5):
        super().__init__(name)
        self.channels = channels
        self.r_max, self.d_max = float(r_max), float(d_max)
        self.avg_rate, self.eps = float(avg_rate), float(eps)
        self.moments_frozen = False
        self.params = {
            "gamma": np.ones(channels, dtype=np.float32),
            "beta": np.zeros(channels, dtype=np.float32),
        }
        self.mu_mov = np.zeros(channels, dtype=np.float64)
        self.sigma_mov = np.ones(channels, dtype=np.float64)

    def state_tensors(self):
        out = dict(self.params)
        out["mu_mov"] = self.mu_mov.astype(np.float32)
        out["sigma_mov"] = self.sigma_mov.astype(np.float32)
        return out

    def load_state(self, tensors):
        gamma, beta = tensors["gamma"], tensors["beta"]
        if gamma.shape != (self.channels,):
            raise ShapeError(f"{self.name}: gamma shape {gamma.shape}")
        self.params["gamma"][...] = gamma
        self.params["beta"][...] = beta
        self.mu_mov = tensors["mu_mov"].astype(np.float64)
        self.sigma_mov = tensors["sigma_mov"].astype(np.float64)

    def out_shape(self, in_shape):
        c = in_shape[0] if len(in_shape) == 3 else in_shape[-1]
        if c != self.channels:
            raise ShapeError(f"{self.name}: expected {self.channels} channels, got {c}")
        return in_shape

    def _bview(self, per_channel, ndim):
        if ndim == 4:
            return per_channel.reshape(1, -1, 1, 1)
        return per_channel.reshape(1, -1)

    def forward(self, x, mode):
        axes = (0, 2, 3) if x.ndim == 4 else (0,)
        gamma = self._bview(self.params["gamma"].astype(np.float64), x.ndim)
        beta = self._bview(self.params["beta"].astype(np.float64), x.ndim)
        if mode == TRAIN and not self.moments_frozen:
            xf = x.astype(np.float64)
            mu_b = xf.mean(axis=axes)
            sigma_b = np.sqrt(xf.var(axis=axes) + self.eps)
            r = np.clip(sigma_b / self.sigma_mov, 1.0 / self.r_max, self.r_max)
            d = np.clip((mu_b - self.mu_mov) / self.sigma_mov, -self.d_max, self.d_max)
            xhat = (xf - self._bview(mu_b, x.ndim)) / self._bview(sigma_b, x.ndim)
            y = gamma * (xhat * self._bview(r, x.ndim) + self._bview(d, x.ndim)) + beta
            self.mu_mov = self.avg_rate * self.mu_mov + (1 - self.avg_rate) * mu_b
            self.sigma_mov = self.avg_rate * self.sigma_mov + (1 - self.avg_rate) * sigma_b
            cache = ("batch", xhat, sigma_b, r, d)
            return y.astype(np.float32), cache
        xf = x.astype(np.float64)
        xhat = (xf - self._bview(self.mu_mov, x.ndim)) / self._bview(self.sigma_mov, x.ndim)
        y = gamma * xhat + beta
        return y.astype(np.float32), ("moving", xhat)

    def backward(self, dy, cache):
        gamma = self._bview(self.params["gamma"].astype(np.float64), dy.ndim)
        axes = (0, 2, 3) if dy.ndim == 4 else (0,)
        dyf = dy.astype(np.float64)
        if cache[0] == "batch":
            _, xhat, sigma_b, r, d = cache
            rb, db = self._bview(r, dy.ndim), self._bview(d, dy.ndim)
            dgamma = (dyf * (xhat * rb + db)).sum(axis=axes)
            dbeta = dyf.sum(axis=axes)
            dxhat = dyf * gamma * rb
            m_d = dxhat.mean(axis=axes)
            m_dx = (dxhat * xhat).mean(axis=axes)
            dx = (dxhat - self._bview(m_d, dy.ndim)
                  - xhat * self._bview(m_dx, dy.ndim)) / self._bview(sigma_b, dy.ndim)
        else:
            _, xhat = cache
            dgamma = (dyf * xhat).sum(axis=axes)
            dbeta = dyf.sum(axis=axes)
            dx = dyf * gamma / self._bview(self.sigma_mov, dy.ndim)
        return dx.astype(np.float32), {"gamma": dgamma.astype(np.float32),
                                       "beta": dbeta.astype(np.float32)}

    def spec(self):
        return {"name": self.name, "kind": self.kind, "r_max": self.r_max,
                "d_max": self.d_max, "avg_rate": self.avg_rate}


class GlobalAvgPool(Layer):
    kind = "avgpool"

    def out_shape(self, in_shape):
        c, h, w = in_shape
        return (c,)

    def forward(self, x, mode):
        return kernels.global_avg_pool(x), x.shape

    def backward(self, dy, cache):
        _, _, h, w = cache
        return kernels.global_avg_pool_backward(dy, h, w), {}


class Flatten(Layer):
    kind = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, mode):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache):
        return dy.reshape(cache), {}
