"""Layers with hand-written backward passes.

Every layer caches what it needs during ``forward`` and consumes it in
``backward``.  ``backward(grad, param_grad=...)`` returns the gradient with
respect to the layer input and, depending on ``param_grad``:

``"batch"``
    accumulates summed parameter gradients into ``Tensor.grad``;
``"per_sample"``
    stores per-sample parameter gradients (leading batch axis) in
    ``Tensor.grad_sample``; this is what DP-SGD clips;
``None``
    leaves parameter gradients untouched (input gradient only).

Piecewise-linear layers additionally implement a tangent (forward-mode)
pass around the most recent primal forward.  Back-propagating through the
tangent pass yields mixed second derivatives, which is how the Lipschitz
penalty of a WGAN critic is differentiated with respect to its weights.
"""
import numpy as np
from scipy.special import expit

from ..errors import ShapeError
from . import functional as F

PARAM_GRAD_MODES = ("batch", "per_sample", None)


class Tensor:
    """Parameter array with gradient slots."""

    __slots__ = ("data", "grad", "grad_sample")

    def __init__(self, data):
        self.data = data
        self.grad = None
        self.grad_sample = None

    @property
    def shape(self):
        return self.data.shape

    def accumulate(self, g):
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def __repr__(self):
        return f"Tensor(shape={list(self.data.shape)}, dtype={self.data.dtype})"


def _store(param, g, mode):
    if mode == "batch":
        param.accumulate(g)
    elif mode == "per_sample":
        param.grad_sample = g


class Module:
    training = True

    def __call__(self, x):
        return self.forward(x)

    def _params(self):
        return []

    def _buffers(self):
        return []

    def named_parameters(self):
        return list(self._params())

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self):
        return list(self._buffers())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None
            p.grad_sample = None

    def train(self, mode=True):
        self.training = mode
        return self

    def eval(self):
        return self.train(False)

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad, param_grad="batch"):
        raise NotImplementedError

    def tangent_forward(self, t):
        raise NotImplementedError(
            f"{type(self).__name__} has no tangent pass; Lipschitz penalties need a critic "
            "built from conv/linear/ReLU-type layers only"
        )

    def tangent_backward(self, grad):
        raise NotImplementedError(f"{type(self).__name__} has no tangent pass")


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def __getitem__(self, i):
        return self.layers[i]

    def __len__(self):
        return len(self.layers)

    def _params(self):
        for i, layer in enumerate(self.layers):
            for name, p in layer.named_parameters():
                yield f"{i}.{name}", p

    def _buffers(self):
        for i, layer in enumerate(self.layers):
            for name, b in layer.named_buffers():
                yield f"{i}.{name}", b

    def train(self, mode=True):
        self.training = mode
        for layer in self.layers:
            layer.train(mode)
        return self

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad, param_grad="batch"):
        if param_grad not in PARAM_GRAD_MODES:
            raise ValueError(f"unknown param_grad mode {param_grad!r}")
        for layer in reversed(self.layers):
            grad = layer.backward(grad, param_grad)
        return grad

    def tangent_forward(self, t):
        for layer in self.layers:
            t = layer.tangent_forward(t)
        return t

    def tangent_backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.tangent_backward(grad)
        return grad


def _normal(rng, shape, std, dtype):
    rng = np.random.default_rng(0) if rng is None else rng
    return (rng.standard_normal(shape) * std).astype(dtype)


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0,
                 bias=True, dtype=np.float32, rng=None):
        if stride < 1 or padding < 0 or kernel_size < 1:
            raise ValueError("kernel_size and stride must be >= 1, padding >= 0")
        self.stride, self.padding, self.kernel_size = stride, padding, kernel_size
        self.weight = Tensor(_normal(rng, (out_channels, in_channels, kernel_size, kernel_size), 0.02, dtype))
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype)) if bias else None

    def _params(self):
        yield "weight", self.weight
        if self.bias is not None:
            yield "bias", self.bias

    def forward(self, x):
        b = None if self.bias is None else self.bias.data
        out, self._cols = F.conv2d(x, self.weight.data, b, self.stride, self.padding)
        self._x_shape = x.shape
        return out

    def backward(self, grad, param_grad="batch"):
        dx, dw, db = F.conv2d_backward(grad, self._cols, self._x_shape, self.weight.data,
                                       self.stride, self.padding, param_grad)
        _store(self.weight, dw, param_grad)
        if self.bias is not None:
            _store(self.bias, db, param_grad)
        return dx

    def tangent_forward(self, t):
        out, self._tcols = F.conv2d(t, self.weight.data, None, self.stride, self.padding)
        self._t_shape = t.shape
        return out

    def tangent_backward(self, grad):
        dt, dw, _ = F.conv2d_backward(grad, self._tcols, self._t_shape, self.weight.data,
                                      self.stride, self.padding, "batch")
        self.weight.accumulate(dw)
        return dt


class ConvTranspose2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0,
                 bias=True, dtype=np.float32, rng=None):
        if stride < 1 or padding < 0 or kernel_size < 1:
            raise ValueError("kernel_size and stride must be >= 1, padding >= 0")
        self.stride, self.padding, self.kernel_size = stride, padding, kernel_size
        self.weight = Tensor(_normal(rng, (in_channels, out_channels, kernel_size, kernel_size), 0.02, dtype))
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype)) if bias else None

    def _params(self):
        yield "weight", self.weight
        if self.bias is not None:
            yield "bias", self.bias

    def forward(self, x):
        b = None if self.bias is None else self.bias.data
        out, self._xf = F.conv_transpose2d(x, self.weight.data, b, self.stride, self.padding)
        self._x_shape = x.shape
        return out

    def backward(self, grad, param_grad="batch"):
        dx, dw, db = F.conv_transpose2d_backward(grad, self._xf, self._x_shape, self.weight.data,
                                                 self.stride, self.padding, param_grad)
        _store(self.weight, dw, param_grad)
        if self.bias is not None:
            _store(self.bias, db, param_grad)
        return dx

    def tangent_forward(self, t):
        out, self._txf = F.conv_transpose2d(t, self.weight.data, None, self.stride, self.padding)
        self._t_shape = t.shape
        return out

    def tangent_backward(self, grad):
        dt, dw, _ = F.conv_transpose2d_backward(grad, self._txf, self._t_shape, self.weight.data,
                                                self.stride, self.padding, "batch")
        self.weight.accumulate(dw)
        return dt


class Linear(Module):
    def __init__(self, in_features, out_features, bias=True, dtype=np.float32, rng=None):
        self.weight = Tensor(_normal(rng, (out_features, in_features), 0.02, dtype))
        self.bias = Tensor(np.zeros(out_features, dtype=dtype)) if bias else None

    def _params(self):
        yield "weight", self.weight
        if self.bias is not None:
            yield "bias", self.bias

    def _check(self, x):
        if x.ndim != 2 or x.shape[1] != self.weight.shape[1]:
            raise ShapeError(f"linear: expected [B, {self.weight.shape[1]}], got {list(x.shape)}")

    def forward(self, x):
        self._check(x)
        self._x = x
        out = x @ self.weight.data.T
        if self.bias is not None:
            out = out + self.bias.data
        return out

    def backward(self, grad, param_grad="batch"):
        if grad.shape != (self._x.shape[0], self.weight.shape[0]):
            raise ShapeError(f"linear backward: grad shape {list(grad.shape)}")
        if param_grad == "batch":
            self.weight.accumulate(grad.T @ self._x)
            if self.bias is not None:
                self.bias.accumulate(grad.sum(axis=0))
        elif param_grad == "per_sample":
            self.weight.grad_sample = grad[:, :, None] * self._x[:, None, :]
            if self.bias is not None:
                self.bias.grad_sample = grad.copy()
        return grad @ self.weight.data

    def tangent_forward(self, t):
        self._check(t)
        self._t = t
        return t @ self.weight.data.T

    def tangent_backward(self, grad):
        self.weight.accumulate(grad.T @ self._t)
        return grad @ self.weight.data


class _Norm(Module):
    """Shared affine parameters and backward for batch/group normalisation."""

    def __init__(self, num_channels, eps, dtype):
        self.eps = eps
        self.num_channels = num_channels
        self.weight = Tensor(np.ones(num_channels, dtype=dtype))
        self.bias = Tensor(np.zeros(num_channels, dtype=dtype))

    def _params(self):
        yield "weight", self.weight
        yield "bias", self.bias

    def _check(self, x):
        if x.ndim != 4 or x.shape[1] != self.num_channels:
            raise ShapeError(f"{type(self).__name__}: expected [B, {self.num_channels}, H, W], got {list(x.shape)}")

    def _affine_grads(self, grad, param_grad):
        if param_grad == "batch":
            self.weight.accumulate((grad * self._xhat).sum(axis=(0, 2, 3)))
            self.bias.accumulate(grad.sum(axis=(0, 2, 3)))
        elif param_grad == "per_sample":
            self.weight.grad_sample = (grad * self._xhat).sum(axis=(2, 3))
            self.bias.grad_sample = grad.sum(axis=(2, 3))


class BatchNorm2d(_Norm):
    def __init__(self, num_channels, eps=1e-5, momentum=0.1, dtype=np.float32):
        super().__init__(num_channels, eps, dtype)
        self.momentum = momentum
        self.running_mean = np.zeros(num_channels, dtype=dtype)
        self.running_var = np.ones(num_channels, dtype=dtype)

    def _buffers(self):
        yield "running_mean", self.running_mean
        yield "running_var", self.running_var

    def forward(self, x):
        self._check(x)
        if self.training:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            n = x.shape[0] * x.shape[2] * x.shape[3]
            m = self.momentum
            unbiased = var * (n / max(n - 1, 1))
            self.running_mean[...] = (1 - m) * self.running_mean + m * mean
            self.running_var[...] = (1 - m) * self.running_var + m * unbiased
        else:
            mean, var = self.running_mean, self.running_var
        self._inv_std = (1.0 / np.sqrt(var + self.eps)).astype(x.dtype)
        self._xhat = (x - mean[None, :, None, None]) * self._inv_std[None, :, None, None]
        self._batch_stats = self.training
        return self._xhat * self.weight.data[None, :, None, None] + self.bias.data[None, :, None, None]

    def backward(self, grad, param_grad="batch"):
        self._affine_grads(grad, param_grad)
        dxhat = grad * self.weight.data[None, :, None, None]
        inv_std = self._inv_std[None, :, None, None]
        if not self._batch_stats:
            return dxhat * inv_std
        axes = (0, 2, 3)
        mean_d = dxhat.mean(axis=axes, keepdims=True)
        mean_dx = (dxhat * self._xhat).mean(axis=axes, keepdims=True)
        return inv_std * (dxhat - mean_d - self._xhat * mean_dx)


class GroupNorm(_Norm):
    """Per-sample normalisation over channel groups; no running statistics."""

    def __init__(self, num_groups, num_channels, eps=1e-5, dtype=np.float32):
        if num_channels % num_groups:
            raise ValueError(f"{num_channels} channels not divisible into {num_groups} groups")
        super().__init__(num_channels, eps, dtype)
        self.num_groups = num_groups

    def forward(self, x):
        self._check(x)
        b, c, h, w = x.shape
        xg = x.reshape(b, self.num_groups, -1)
        mean = xg.mean(axis=2, keepdims=True)
        var = xg.var(axis=2, keepdims=True)
        self._inv_std = (1.0 / np.sqrt(var + self.eps)).astype(x.dtype)
        self._xhat = ((xg - mean) * self._inv_std).reshape(x.shape)
        return self._xhat * self.weight.data[None, :, None, None] + self.bias.data[None, :, None, None]

    def backward(self, grad, param_grad="batch"):
        self._affine_grads(grad, param_grad)
        b = grad.shape[0]
        dxhat = (grad * self.weight.data[None, :, None, None]).reshape(b, self.num_groups, -1)
        xhat = self._xhat.reshape(b, self.num_groups, -1)
        mean_d = dxhat.mean(axis=2, keepdims=True)
        mean_dx = (dxhat * xhat).mean(axis=2, keepdims=True)
        return (self._inv_std * (dxhat - mean_d - xhat * mean_dx)).reshape(grad.shape)


class ReLU(Module):
    def forward(self, x):
        self._pos = x > 0
        return np.where(self._pos, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad, param_grad="batch"):
        return np.where(self._pos, grad, 0).astype(grad.dtype, copy=False)

    def tangent_forward(self, t):
        return np.where(self._pos, t, 0).astype(t.dtype, copy=False)

    tangent_backward = tangent_forward


class LeakyReLU(Module):
    def __init__(self, negative_slope=0.2):
        self.negative_slope = negative_slope

    def forward(self, x):
        self._slope = np.where(x > 0, 1.0, self.negative_slope).astype(x.dtype)
        return x * self._slope

    def backward(self, grad, param_grad="batch"):
        return grad * self._slope

    def tangent_forward(self, t):
        return t * self._slope

    def tangent_backward(self, grad):
        return grad * self._slope


class Sigmoid(Module):
    def forward(self, x):
        self._y = expit(x)
        return self._y

    def backward(self, grad, param_grad="batch"):
        return grad * self._y * (1 - self._y)


class Tanh(Module):
    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, grad, param_grad="batch"):
        return grad * (1 - self._y * self._y)


class Reshape(Module):
    """Reshape the non-batch dimensions."""

    def __init__(self, *shape):
        self.shape = shape

    def forward(self, x):
        self._in_shape = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, grad, param_grad="batch"):
        return grad.reshape(self._in_shape)

    def tangent_forward(self, t):
        return self.forward(t)

    def tangent_backward(self, grad):
        return grad.reshape(self._in_shape)
