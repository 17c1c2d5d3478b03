"""Small neural-net building blocks on top of the autodiff tensor."""

import numpy as np

from . import tensor as T
from .errors import ShapeMismatchError
from .tensor import Tensor, parameter


class Linear:
    def __init__(self, weight, bias):
        self.weight = weight if isinstance(weight, Tensor) else parameter(weight)
        self.bias = bias if isinstance(bias, Tensor) else parameter(bias)

    @classmethod
    def init(cls, n_in, n_out, rng, scale=None):
        """Uniform(-1/sqrt(n_in), +1/sqrt(n_in)) init unless scale is given."""
        bound = scale if scale is not None else 1.0 / np.sqrt(n_in)
        w = rng.uniform(-bound, bound, size=(n_in, n_out)).astype(np.float32)
        b = rng.uniform(-bound, bound, size=(n_out,)).astype(np.float32)
        return cls(parameter(w), parameter(b))

    def __call__(self, x):
        return T.linear(x, self.weight, self.bias)

    def parameters(self):
        return [self.weight, self.bias]


class BatchNorm1d:
    """Batch normalization over axis 0 of a (B,F) tensor.

    Train mode normalizes with batch statistics and updates running
    statistics with momentum 0.1; eval mode freezes to the running values.
    """

    def __init__(self, num_features, momentum=0.1, eps=1e-5):
        self.gamma = parameter(np.ones(num_features, dtype=np.float32))
        self.beta = parameter(np.zeros(num_features, dtype=np.float32))
        self.running_mean = np.zeros(num_features, dtype=np.float32)
        self.running_var = np.ones(num_features, dtype=np.float32)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x, train):
        if x.data.ndim != 2 or x.data.shape[1] != self.gamma.data.shape[0]:
            raise ShapeMismatchError(
                f"batch norm expects (B,{self.gamma.data.shape[0]}), got {x.data.shape}"
            )
        if train:
            mu = T.tmean(x, axis=0)
            xc = T.sub(x, mu)
            var = T.tmean(T.square(xc), axis=0)
            m = self.momentum
            self.running_mean = ((1 - m) * self.running_mean + m * mu.data).astype(
                np.float32
            )
            self.running_var = ((1 - m) * self.running_var + m * var.data).astype(
                np.float32
            )
        else:
            mu = Tensor(self.running_mean.astype(x.data.dtype))
            var = Tensor(self.running_var.astype(x.data.dtype))
            xc = T.sub(x, mu)
        denom = T.sqrt(T.add(var, np.asarray(self.eps, dtype=x.data.dtype)))
        y = T.div(xc, denom)
        return T.add(T.mul(y, self.gamma_cast(x)), self.beta_cast(x))

    def gamma_cast(self, x):
        if x.data.dtype == self.gamma.data.dtype:
            return self.gamma
        return Tensor(self.gamma.data.astype(x.data.dtype))

    def beta_cast(self, x):
        if x.data.dtype == self.beta.data.dtype:
            return self.beta
        return Tensor(self.beta.data.astype(x.data.dtype))

    def parameters(self):
        return [self.gamma, self.beta]

    def state_arrays(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}


class GroupNorm:
    """Group normalization over a single (C,D,H,W) volume; per-channel affine."""

    def __init__(self, num_channels, groups=8, eps=1e-5):
        self.groups = groups if num_channels >= groups else num_channels
        if num_channels % self.groups != 0:
            raise ShapeMismatchError(
                f"channels {num_channels} not divisible into {self.groups} groups"
            )
        self.gamma = parameter(np.ones(num_channels, dtype=np.float32))
        self.beta = parameter(np.zeros(num_channels, dtype=np.float32))
        self.eps = eps

    def __call__(self, x):
        c = x.data.shape[0]
        if x.data.ndim != 4 or c != self.gamma.data.shape[0]:
            raise ShapeMismatchError(
                f"group norm expects ({self.gamma.data.shape[0]},D,H,W), got {x.data.shape}"
            )
        g = self.groups
        spatial = x.data.shape[1:]
        xg = T.reshape(x, (g, -1))
        mu = T.reshape(T.tmean(xg, axis=1), (g, 1))
        xc = T.sub(xg, mu)
        var = T.reshape(T.tmean(T.square(xc), axis=1), (g, 1))
        denom = T.sqrt(T.add(var, np.asarray(self.eps, dtype=x.data.dtype)))
        y = T.reshape(T.div(xc, denom), (c, *spatial))
        gamma = T.reshape(self._cast(self.gamma, x), (c, 1, 1, 1))
        beta = T.reshape(self._cast(self.beta, x), (c, 1, 1, 1))
        return T.add(T.mul(y, gamma), beta)

    @staticmethod
    def _cast(p, x):
        if x.data.dtype == p.data.dtype:
            return p
        return Tensor(p.data.astype(x.data.dtype))

    def parameters(self):
        return [self.gamma, self.beta]
