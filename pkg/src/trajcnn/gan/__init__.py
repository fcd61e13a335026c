from .losses import (
    AdversarialLoss, WassersteinLoss, adversarial_loss, bce, interpolate, lipschitz_penalty, make_loss,
    wgan_loss, wgan_lp_penalty,
)
from .models import DiscriminatorConfig, GeneratorConfig, build_discriminator, build_generator, init_weights
from .training import (
    TrainConfig, Trainer, TrainResult, apply_mask, generate, network_to_grids, prepare_real,
    resolve_architecture, train,
)

__all__ = [
    "AdversarialLoss", "WassersteinLoss", "adversarial_loss", "bce", "interpolate", "lipschitz_penalty",
    "make_loss", "wgan_loss", "wgan_lp_penalty",
    "DiscriminatorConfig", "GeneratorConfig", "build_discriminator", "build_generator", "init_weights",
    "TrainConfig", "Trainer", "TrainResult", "apply_mask", "generate", "network_to_grids", "prepare_real",
    "resolve_architecture", "train",
]
