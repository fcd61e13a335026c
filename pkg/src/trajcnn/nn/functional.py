"""Stateless convolution kernels built on im2col / col2im.

Layout conventions follow the usual NCHW arrangement:

* ``conv2d``: input ``[B, Cin, H, W]``, weight ``[Cout, Cin, k, k]``
* ``conv_transpose2d``: input ``[B, Cin, H, W]``, weight ``[Cin, Cout, k, k]``

With identical ``stride``/``padding`` and the same weight array,
``conv_transpose2d`` is the adjoint of ``conv2d`` (bias aside).
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError


def conv_output_size(size, k, stride, padding):
    span = size + 2 * padding - k
    if span < 0 or span % stride:
        raise ShapeError(
            f"input size {size} incompatible with kernel {k}, stride {stride}, padding {padding}"
        )
    return span // stride + 1


def conv_transpose_output_size(size, k, stride, padding):
    out = (size - 1) * stride - 2 * padding + k
    if out <= 0:
        raise ShapeError(f"transposed conv output size {out} is not positive")
    return out


def im2col(x, k, stride, padding):
    """Return a ``[B, Ho, Wo, C, k, k]`` view of every receptive field of ``x``."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    return win.transpose(0, 2, 3, 1, 4, 5)


def col2im(cols, shape, k, stride, padding):
    """Scatter-add ``[B, Ho, Wo, C, k, k]`` patches back into an ``[B, C, H, W]`` array."""
    b, c, h, w = shape
    ho, wo = cols.shape[1], cols.shape[2]
    out = np.zeros((b, c, h + 2 * padding, w + 2 * padding), dtype=cols.dtype)
    patches = cols.transpose(0, 3, 4, 5, 1, 2)  # [B, C, k, k, Ho, Wo]
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += patches[:, :, i, j]
    if padding:
        out = out[:, :, padding:padding + h, padding:padding + w]
    return out


def _check_4d(x, channels, name):
    if x.ndim != 4 or x.shape[1] != channels:
        raise ShapeError(f"{name}: expected [B, {channels}, H, W], got {list(x.shape)}")


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """Cross-correlation with zero padding.

    Returns ``(out, cols)``; ``cols`` is the flattened im2col matrix, which
    the caller may keep for the backward pass.
    """
    cout, cin, k, _ = weight.shape
    _check_4d(x, cin, "conv2d")
    b, _, h, w = x.shape
    ho = conv_output_size(h, k, stride, padding)
    wo = conv_output_size(w, k, stride, padding)
    cols = im2col(x, k, stride, padding).reshape(b * ho * wo, cin * k * k)
    out = cols @ weight.reshape(cout, -1).T
    if bias is not None:
        out += bias
    return out.reshape(b, ho, wo, cout).transpose(0, 3, 1, 2), cols


def conv2d_backward(grad, cols, x_shape, weight, stride, padding, param_grad="batch"):
    """Gradients of :func:`conv2d`.

    ``param_grad`` selects how weight/bias gradients are returned: ``"batch"``
    (summed over the batch), ``"per_sample"`` (leading batch axis) or ``None``
    (skipped).  Returns ``(dx, dweight, dbias)``.
    """
    cout, cin, k, _ = weight.shape
    b = x_shape[0]
    if grad.shape[:2] != (b, cout):
        raise ShapeError(f"conv2d backward: grad shape {list(grad.shape)} vs batch {b}, channels {cout}")
    ho, wo = grad.shape[2], grad.shape[3]
    g = grad.transpose(0, 2, 3, 1).reshape(b * ho * wo, cout)
    dw = db = None
    if param_grad == "batch":
        dw = (g.T @ cols).reshape(weight.shape)
        db = g.sum(axis=0)
    elif param_grad == "per_sample":
        gb = g.reshape(b, ho * wo, cout)
        dw = np.matmul(gb.transpose(0, 2, 1), cols.reshape(b, ho * wo, -1)).reshape((b,) + weight.shape)
        db = gb.sum(axis=1)
    dcols = (g @ weight.reshape(cout, -1)).reshape(b, ho, wo, cin, k, k)
    dx = col2im(dcols, x_shape, k, stride, padding)
    return dx, dw, db


def conv_transpose2d(x, weight, bias=None, stride=1, padding=0):
    """Transposed convolution (fractionally strided convolution).

    Returns ``(out, xf)`` with ``xf`` the ``[B*H*W, Cin]`` input matrix.
    """
    cin, cout, k, _ = weight.shape
    _check_4d(x, cin, "conv_transpose2d")
    b, _, h, w = x.shape
    ho = conv_transpose_output_size(h, k, stride, padding)
    wo = conv_transpose_output_size(w, k, stride, padding)
    xf = x.transpose(0, 2, 3, 1).reshape(b * h * w, cin)
    cols = (xf @ weight.reshape(cin, -1)).reshape(b, h, w, cout, k, k)
    out = col2im(cols, (b, cout, ho, wo), k, stride, padding)
    if bias is not None:
        out += bias[None, :, None, None]
    return out, xf


def conv_transpose2d_backward(grad, xf, x_shape, weight, stride, padding, param_grad="batch"):
    cin, cout, k, _ = weight.shape
    b, _, h, w = x_shape
    if grad.shape[:2] != (b, cout):
        raise ShapeError(
            f"conv_transpose2d backward: grad shape {list(grad.shape)} vs batch {b}, channels {cout}"
        )
    gcols = im2col(grad, k, stride, padding)
    if gcols.shape[1:3] != (h, w):
        raise ShapeError(f"conv_transpose2d backward: grad spatial size {grad.shape[2:]} does not match input")
    gcols = gcols.reshape(b * h * w, cout * k * k)
    dw = db = None
    if param_grad == "batch":
        dw = (xf.T @ gcols).reshape(weight.shape)
        db = grad.sum(axis=(0, 2, 3))
    elif param_grad == "per_sample":
        dw = np.matmul(
            xf.reshape(b, h * w, cin).transpose(0, 2, 1), gcols.reshape(b, h * w, -1)
        ).reshape((b,) + weight.shape)
        db = grad.sum(axis=(2, 3))
    dx = (gcols @ weight.reshape(cin, -1).T).reshape(b, h, w, cin).transpose(0, 3, 1, 2)
    return dx, dw, db
