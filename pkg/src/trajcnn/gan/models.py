"""DCGAN-style generator and discriminator for 24x24x4 trajectory grids.

Generator: noise ``[B, 100]`` -> 1x1 -> 3x3 -> 6x6 -> 12x12 -> 24x24, transposed
convolutions with normalisation + ReLU, sigmoid output.
Discriminator: strided convolutions 24 -> 12 -> 6 -> 3 with LeakyReLU, a final
3x3 convolution to one score; sigmoid head for the adversarial loss, linear
head for WGAN critics.  No fully-connected hidden layers, no pooling.
"""
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigurationError
from ..nn import layers as L

NORMS = ("batch", "group", "none")
HEADS = ("sigmoid", "linear")


@dataclass
class GeneratorConfig:
    noise_dim: int = 100
    width: int = 64
    channels: int = 4
    norm: str = "batch"

    def validate(self):
        if self.noise_dim < 1 or self.width < 1 or self.channels < 1:
            raise ConfigurationError("generator dimensions must be positive")
        if self.norm not in NORMS:
            raise ConfigurationError(f"unknown norm {self.norm!r}")
        return self


@dataclass
class DiscriminatorConfig:
    width: int = 64
    channels: int = 4
    norm: str = "batch"
    head: str = "sigmoid"
    negative_slope: float = 0.2

    def validate(self):
        if self.width < 1 or self.channels < 1:
            raise ConfigurationError("discriminator dimensions must be positive")
        if self.norm not in NORMS:
            raise ConfigurationError(f"unknown norm {self.norm!r}")
        if self.head not in HEADS:
            raise ConfigurationError(f"unknown head {self.head!r}")
        return self


def _norm(kind, channels, dtype):
    if kind == "batch":
        return [L.BatchNorm2d(channels, dtype=dtype)]
    if kind == "group":
        return [L.GroupNorm(min(32, channels), channels, dtype=dtype)]
    return []


def init_weights(model, rng):
    """Conv/linear weights ~ N(0, 0.02); norm scales ~ N(1, 0.02); biases 0."""
    for layer in model.layers:
        if isinstance(layer, (L.Conv2d, L.ConvTranspose2d, L.Linear)):
            w = layer.weight.data
            w[...] = rng.normal(0.0, 0.02, w.shape)
            if layer.bias is not None:
                layer.bias.data[...] = 0
        elif isinstance(layer, (L.BatchNorm2d, L.GroupNorm)):
            layer.weight.data[...] = rng.normal(1.0, 0.02, layer.weight.shape)
            layer.bias.data[...] = 0
    return model


def build_generator(cfg=None, seed=0, dtype=np.float32):
    cfg = (cfg or GeneratorConfig()).validate()
    w = cfg.width
    has_norm = cfg.norm != "none"
    ladder = [(cfg.noise_dim, 4 * w, 3, 1, 0), (4 * w, 2 * w, 4, 2, 1), (2 * w, w, 4, 2, 1)]
    layers = [L.Reshape(cfg.noise_dim, 1, 1)]
    for cin, cout, k, s, p in ladder:
        layers.append(L.ConvTranspose2d(cin, cout, k, s, p, bias=not has_norm, dtype=dtype))
        layers += _norm(cfg.norm, cout, dtype)
        layers.append(L.ReLU())
    layers += [L.ConvTranspose2d(w, cfg.channels, 4, 2, 1, dtype=dtype), L.Sigmoid()]
    model = L.Sequential(*layers)
    model.config = cfg
    return init_weights(model, np.random.default_rng(seed))


def build_discriminator(cfg=None, seed=0, dtype=np.float32):
    cfg = (cfg or DiscriminatorConfig()).validate()
    w = cfg.width
    has_norm = cfg.norm != "none"
    layers = [L.Conv2d(cfg.channels, w, 4, 2, 1, dtype=dtype), L.LeakyReLU(cfg.negative_slope)]
    for cin, cout in ((w, 2 * w), (2 * w, 4 * w)):
        layers.append(L.Conv2d(cin, cout, 4, 2, 1, bias=not has_norm, dtype=dtype))
        layers += _norm(cfg.norm, cout, dtype)
        layers.append(L.LeakyReLU(cfg.negative_slope))
    layers += [L.Conv2d(4 * w, 1, 3, 1, 0, dtype=dtype), L.Reshape(1)]
    if cfg.head == "sigmoid":
        layers.append(L.Sigmoid())
    model = L.Sequential(*layers)
    model.config = cfg
    return init_weights(model, np.random.default_rng(seed))


def config_dict(cfg):
    return asdict(cfg)
