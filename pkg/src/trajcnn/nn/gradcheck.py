"""Finite-difference verification of the analytic backward passes."""
from dataclasses import dataclass, field

import numpy as np

from . import layers as L

LAYER_KINDS = (
    "conv2d", "conv_transpose2d", "linear", "batch_norm", "group_norm",
    "relu", "leaky_relu", "sigmoid", "tanh",
)

# defaults match the default input shapes of grad_check
DEFAULT_PARAMS = {
    "conv2d": {"in_channels": 2, "out_channels": 3, "kernel_size": 3, "stride": 2, "padding": 1},
    "conv_transpose2d": {"in_channels": 3, "out_channels": 2, "kernel_size": 4, "stride": 2, "padding": 1},
    "linear": {"in_features": 4, "out_features": 5},
    "batch_norm": {"num_channels": 3},
    "group_norm": {"num_channels": 4, "groups": 2},
}


@dataclass
class LayerSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        self.params = {**DEFAULT_PARAMS.get(self.kind, {}), **self.params}
        if self.params.get("stride", 1) < 1:
            raise ValueError("stride must be >= 1")


def build_layer(spec, dtype=np.float64, rng=None):
    p = dict(spec.params)
    k = spec.kind
    if k == "conv2d":
        return L.Conv2d(p["in_channels"], p["out_channels"], p["kernel_size"],
                        p.get("stride", 1), p.get("padding", 0), dtype=dtype, rng=rng)
    if k == "conv_transpose2d":
        return L.ConvTranspose2d(p["in_channels"], p["out_channels"], p["kernel_size"],
                                 p.get("stride", 1), p.get("padding", 0), dtype=dtype, rng=rng)
    if k == "linear":
        return L.Linear(p["in_features"], p["out_features"], dtype=dtype, rng=rng)
    if k == "batch_norm":
        return L.BatchNorm2d(p["num_channels"], eps=p.get("eps", 1e-5), dtype=dtype)
    if k == "group_norm":
        c = p["num_channels"]
        return L.GroupNorm(p.get("groups", min(32, c)), c, eps=p.get("eps", 1e-5), dtype=dtype)
    if k == "relu":
        return L.ReLU()
    if k == "leaky_relu":
        return L.LeakyReLU(p.get("negative_slope", 0.2))
    if k == "sigmoid":
        return L.Sigmoid()
    return L.Tanh()


def _rel_error(analytic, numeric):
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def check_module(module, x, rng, h=1e-5):
    """Max relative error between analytic and central-difference gradients.

    The scalar probed is ``sum(r * module(x))`` for a fixed random ``r``;
    every input element and every parameter element is perturbed.
    Returns ``{name: error}`` with ``"input"`` for the input gradient.
    """
    r = rng.standard_normal(module.forward(x).shape)

    def objective():
        return float(np.sum(r * module.forward(x)))

    module.zero_grad()
    module.forward(x)
    dx = module.backward(r, "batch")
    targets = [("input", x, dx)] + [(n, p.data, p.grad) for n, p in module.named_parameters()]
    errors = {}
    for name, arr, analytic in targets:
        numeric = np.zeros_like(arr)
        flat = arr.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = objective()
            flat[i] = old - h
            down = objective()
            flat[i] = old
            nflat[i] = (up - down) / (2 * h)
        errors[name] = _rel_error(analytic, numeric)
    return errors


_DEFAULT_INPUTS = {
    "conv2d": (2, 2, 5, 5),
    "conv_transpose2d": (2, 3, 3, 3),
    "linear": (3, 4),
    "batch_norm": (4, 3, 3, 3),
    "group_norm": (2, 4, 3, 3),
}


def grad_check(spec, shapes=None, seed=0, h=1e-5):
    """Return the max relative gradient error of one layer (64-bit)."""
    rng = np.random.default_rng(seed)
    layer = build_layer(spec, np.float64, rng)
    for p in layer.parameters():
        p.data[...] = rng.standard_normal(p.shape)
    x_shape = shapes if shapes is not None else _DEFAULT_INPUTS.get(spec.kind, (2, 3, 4, 4))
    x = rng.standard_normal(x_shape)
    if spec.kind in ("relu", "leaky_relu"):
        # keep inputs away from the kink so central differences are valid
        x = np.where(np.abs(x) < 1e-2, np.sign(x) * 1e-2 + x, x)
    return max(check_module(layer, x, rng, h).values())
