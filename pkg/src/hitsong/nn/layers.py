"""Layer kinds for the regression networks.

All tensors are float64 numpy arrays. Convolutional activations use the
layout ``(batch, maps, freq, time)``. Every layer caches what it needs in
``forward`` and returns ``(grad_input, param_grads)`` from ``backward``
without touching its own parameters.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError, StateError

KINDS = ("dense", "conv2d", "relu", "dropout", "global_avg_pool_time", "concat_channels")


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = ""

    def __init__(self):
        self.name = self.kind
        self.params: dict[str, np.ndarray] = {}
        self._cache = None

    def hyper(self) -> dict:
        return {}

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def forward(self, x, train: bool = False, rng: np.random.Generator | None = None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def _cached(self):
        if self._cache is None:
            raise StateError(f"layer '{self.name}': backward called before forward")
        return self._cache

    def __repr__(self):
        return f"{type(self).__name__}({self.hyper()})"


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self.params = {"W": np.zeros((n_out, n_in)), "b": np.zeros(n_out)}

    def hyper(self):
        return {"n_in": self.n_in, "n_out": self.n_out}

    def init_params(self, rng):
        self.params["W"] = glorot_uniform(rng, (self.n_out, self.n_in), self.n_in, self.n_out)
        self.params["b"] = np.zeros(self.n_out)

    def forward(self, x, train=False, rng=None):
        x = x.reshape(x.shape[0], -1)
        if x.shape[1] != self.n_in:
            raise ShapeError(f"layer '{self.name}' (dense): expected {self.n_in} inputs, got {x.shape[1]}")
        self._cache = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, grad):
        x = self._cached()
        return grad @ self.params["W"], {"W": grad.T @ x, "b": grad.sum(axis=0)}


class Conv2D(Layer):
    """Cross-correlation with optional zero padding ``((top, bottom), (left, right))``."""

    kind = "conv2d"

    def __init__(self, in_maps: int, out_maps: int, kernel: tuple[int, int], padding=((0, 0), (0, 0))):
        super().__init__()
        self.in_maps, self.out_maps = in_maps, out_maps
        self.kernel = tuple(kernel)
        self.padding = tuple(tuple(int(v) for v in p) for p in padding)
        kh, kw = self.kernel
        self.params = {"W": np.zeros((out_maps, in_maps, kh, kw)), "b": np.zeros(out_maps)}

    def hyper(self):
        return {
            "in_maps": self.in_maps,
            "out_maps": self.out_maps,
            "kernel": list(self.kernel),
            "padding": [list(p) for p in self.padding],
        }

    def init_params(self, rng):
        kh, kw = self.kernel
        fan_in = self.in_maps * kh * kw
        fan_out = self.out_maps * kh * kw
        self.params["W"] = glorot_uniform(rng, self.params["W"].shape, fan_in, fan_out)
        self.params["b"] = np.zeros(self.out_maps)

    def output_shape(self, in_shape):
        c, h, w = in_shape
        (pt, pb), (pl, pr) = self.padding
        kh, kw = self.kernel
        return (self.out_maps, h + pt + pb - kh + 1, w + pl + pr - kw + 1)

    def forward(self, x, train=False, rng=None):
        if x.ndim != 4 or x.shape[1] != self.in_maps:
            raise ShapeError(
                f"layer '{self.name}' (conv2d): expected (batch, {self.in_maps}, H, W), got {x.shape}"
            )
        kh, kw = self.kernel
        xp = np.pad(x, ((0, 0), (0, 0)) + self.padding) if any(map(any, self.padding)) else x
        if xp.shape[2] < kh or xp.shape[3] < kw:
            raise ShapeError(
                f"layer '{self.name}' (conv2d): kernel {self.kernel} larger than padded input {xp.shape[2:]}"
            )
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # B, C, H', W', kh, kw
        out = np.tensordot(win, self.params["W"], axes=([1, 4, 5], [1, 2, 3]))  # B, H', W', O
        self._cache = (xp.shape, win)
        return out.transpose(0, 3, 1, 2) + self.params["b"][None, :, None, None]

    def backward(self, grad, need_input_grad: bool = True):
        xp_shape, win = self._cached()
        kh, kw = self.kernel
        W = self.params["W"]
        dW = np.tensordot(grad, win, axes=([0, 2, 3], [0, 2, 3]))
        db = grad.sum(axis=(0, 2, 3))
        if not need_input_grad:
            return None, {"W": dW, "b": db}
        B, _, Ho, Wo = grad.shape
        dcols = np.tensordot(grad, W, axes=([1], [0]))  # B, H', W', C, kh, kw
        dxp = np.zeros(xp_shape)
        if Ho * Wo <= kh * kw:
            for i in range(Ho):
                for j in range(Wo):
                    dxp[:, :, i:i + kh, j:j + kw] += dcols[:, i, j]
        else:
            dcols = dcols.transpose(0, 3, 4, 5, 1, 2)  # B, C, kh, kw, H', W'
            for u in range(kh):
                for v in range(kw):
                    dxp[:, :, u:u + Ho, v:v + Wo] += dcols[:, :, u, v]
        (pt, pb), (pl, pr) = self.padding
        dx = dxp[:, :, pt:xp_shape[2] - pb, pl:xp_shape[3] - pr]
        return dx, {"W": dW, "b": db}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False, rng=None):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, grad):
        return grad * self._cached(), {}


class Dropout(Layer):
    """Inverted dropout: identity in eval mode, survivors scaled by 1/(1-rate) in train mode."""

    kind = "dropout"

    def __init__(self, rate: float = 0.25):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._identity = None

    def hyper(self):
        return {"rate": self.rate}

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._cache = None
            self._identity = True
            return x
        if rng is None:
            raise StateError(f"layer '{self.name}': train-mode dropout needs a random generator")
        scale = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        self._identity = False
        self._cache = scale
        return x * scale

    def backward(self, grad):
        if self._identity is None:
            raise StateError(f"layer '{self.name}': backward called before forward")
        if self._identity:
            return grad, {}
        return grad * self._cache, {}


class GlobalAvgPoolTime(Layer):
    """Mean over the time axis, flattened to ``(batch, maps * freq)``."""

    kind = "global_avg_pool_time"

    def forward(self, x, train=False, rng=None):
        if x.ndim != 4:
            raise ShapeError(f"layer '{self.name}' (global_avg_pool_time): expected 4-d input, got {x.shape}")
        self._cache = x.shape
        return x.mean(axis=3).reshape(x.shape[0], -1)

    def backward(self, grad):
        shape = self._cached()
        g = grad.reshape(shape[:3])[..., None] / shape[3]
        return np.broadcast_to(g, shape).copy(), {}


class ConcatChannels(Layer):
    """Concatenate several ``(batch, maps, freq, time)`` inputs along maps."""

    kind = "concat_channels"

    def forward(self, xs, train=False, rng=None):
        ref = xs[0].shape
        for x in xs[1:]:
            if x.shape[0] != ref[0] or x.shape[2:] != ref[2:]:
                raise ShapeError(
                    f"layer '{self.name}' (concat_channels): incompatible inputs {[x.shape for x in xs]}"
                )
        self._cache = [x.shape[1] for x in xs]
        return np.concatenate(xs, axis=1)

    def backward(self, grad):
        splits = np.cumsum(self._cached())[:-1]
        return np.split(grad, splits, axis=1), {}


LAYER_TYPES = {cls.kind: cls for cls in (Dense, Conv2D, ReLU, Dropout, GlobalAvgPoolTime, ConcatChannels)}


def layer_from_hyper(kind: str, hyper: dict) -> Layer:
    cls = LAYER_TYPES[kind]
    if kind == "conv2d":
        return cls(hyper["in_maps"], hyper["out_maps"], tuple(hyper["kernel"]),
                   tuple(tuple(p) for p in hyper["padding"]))
    return cls(**hyper)
