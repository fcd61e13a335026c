"""GAN objectives.

Loss objects expose per-sample derivatives ``dl_i / d out_i`` (not divided
by the batch size); the training loop scales them, which keeps the DP path
(per-sample clipping) and the plain path numerically identical.
"""
import numpy as np

EPS = 1e-7


def bce(p, target):
    p = np.clip(p, EPS, 1 - EPS)
    return -(target * np.log(p) + (1 - target) * np.log(1 - p))


def bce_grad(p, target):
    inside = (p > EPS) & (p < 1 - EPS)
    pc = np.clip(p, EPS, 1 - EPS)
    return np.where(inside, -target / pc + (1 - target) / (1 - pc), 0.0).astype(p.dtype)


def adversarial_loss(d_real, d_fake, smoothing=(0.9, 0.1)):
    """``(loss_d, loss_g)`` for sigmoid discriminator outputs.

    The discriminator is trained against the smoothed targets; the
    generator minimises the non-saturating ``-log D(G(z))``.
    """
    valid, fake = smoothing
    loss_d = 0.5 * (bce(d_real, valid).mean() + bce(d_fake, fake).mean())
    loss_g = bce(d_fake, 1.0).mean()
    return float(loss_d), float(loss_g)


def wgan_loss(d_real, d_fake):
    return float(np.mean(d_fake) - np.mean(d_real)), float(-np.mean(d_fake))


class AdversarialLoss:
    kind = "adversarial"

    def __init__(self, smoothing=(0.9, 0.1)):
        self.valid, self.fake = smoothing

    def discriminator(self, d_real, d_fake):
        """Return ``(loss, dl/dd_real, dl/dd_fake)`` with per-sample derivatives."""
        loss = 0.5 * (bce(d_real, self.valid).mean() + bce(d_fake, self.fake).mean())
        return float(loss), 0.5 * bce_grad(d_real, self.valid), 0.5 * bce_grad(d_fake, self.fake)

    def real_term(self, d_real):
        return 0.5 * float(bce(d_real, self.valid).mean()), 0.5 * bce_grad(d_real, self.valid)

    def fake_term(self, d_fake):
        return 0.5 * float(bce(d_fake, self.fake).mean()), 0.5 * bce_grad(d_fake, self.fake)

    def generator(self, d_fake):
        return float(bce(d_fake, 1.0).mean()), bce_grad(d_fake, 1.0)


class WassersteinLoss:
    kind = "wgan"

    def discriminator(self, d_real, d_fake):
        loss = float(np.mean(d_fake) - np.mean(d_real))
        return loss, -np.ones_like(d_real), np.ones_like(d_fake)

    def real_term(self, d_real):
        return -float(np.mean(d_real)), -np.ones_like(d_real)

    def fake_term(self, d_fake):
        return float(np.mean(d_fake)), np.ones_like(d_fake)

    def generator(self, d_fake):
        return float(-np.mean(d_fake)), -np.ones_like(d_fake)


def interpolate(real, fake, rng):
    eps = rng.uniform(size=(len(real),) + (1,) * (real.ndim - 1)).astype(real.dtype)
    return eps * real + (1 - eps) * fake


def lipschitz_penalty(critic, x, lam=10.0, backward=True):
    """One-sided penalty ``lam * mean(max(0, ||grad_x D(x)|| - 1)^2)``.

    With ``backward=True`` its gradient with respect to the critic weights is
    added to their ``.grad``.  This differentiates through the input gradient
    exactly by back-propagating a tangent pass seeded with
    ``dP/d(grad_x D)``, which requires a critic of piecewise-linear layers.
    """
    b = len(x)
    out = critic.forward(x)
    g = critic.backward(np.ones_like(out), param_grad=None)
    norms = np.sqrt((g.reshape(b, -1).astype(np.float64) ** 2).sum(axis=1))
    excess = np.maximum(0.0, norms - 1.0)
    penalty = lam * float(np.mean(excess ** 2))
    if backward and np.any(excess > 0):
        coef = np.where(norms > 0, lam * 2 * excess / np.where(norms > 0, norms, 1) / b, 0.0)
        v = (g * coef.reshape((b,) + (1,) * (g.ndim - 1))).astype(x.dtype)
        t = critic.tangent_forward(v)
        critic.tangent_backward(np.ones_like(t))
    return penalty


def wgan_lp_penalty(critic, real, fake, lam=10.0, rng=None, backward=False):
    """Lipschitz penalty on random interpolates between ``real`` and ``fake``."""
    rng = np.random.default_rng(0) if rng is None else rng
    return lipschitz_penalty(critic, interpolate(real, fake, rng), lam, backward)


def make_loss(kind, smoothing=(0.9, 0.1)):
    if kind == "adversarial":
        return AdversarialLoss(smoothing)
    if kind in ("wgan", "wgan_lp"):
        return WassersteinLoss()
    raise ValueError(f"unknown loss {kind!r}")
