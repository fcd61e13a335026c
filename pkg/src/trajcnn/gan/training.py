"""Training loop: TTUR learning rates, milestone decay, label smoothing,
masking of padded cells, optional DP-SGD on either network."""
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .. import codec
from ..data import Dataset
from ..dp import PrivacyLedger, account, effective_batch
from ..dp.sgd import clip_factors, gaussian_noise, per_sample_norms
from ..errors import ConfigurationError, TrainingError
from ..metrics import sliced_wasserstein
from ..nn import Adam, lr_scheduler_step, save_checkpoint
from .losses import interpolate, lipschitz_penalty, make_loss
from .models import DiscriminatorConfig, GeneratorConfig, build_discriminator, build_generator

log = logging.getLogger(__name__)

LOSSES = ("adversarial", "wgan", "wgan_lp")


@dataclass
class TrainConfig:
    batch_size: int = 64
    steps: int = 10_000
    lr: float = 2e-4
    generator_factor: float = 1.0
    milestones: tuple = (4000,)
    lr_factor: float = 0.1
    betas: tuple = (0.9, 0.999)
    smoothing: tuple = (0.9, 0.1)
    loss: str = "adversarial"
    n_critic: int = 1
    lp_lambda: float = 10.0
    max_len: int = 144
    seed: int = 0
    snapshot_every: int = 1000
    snapshot_projections: int = 100
    snapshot_samples: int = 10_000
    checkpoint_every: int = 0
    dtype: str = "float32"
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)

    def validate(self):
        if self.loss not in LOSSES:
            raise ConfigurationError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        if self.batch_size < 1 or self.steps < 0 or self.n_critic < 1:
            raise ConfigurationError("batch_size and n_critic must be >= 1, steps >= 0")
        if not (self.lr > 0 and self.generator_factor > 0):
            raise ConfigurationError("learning rate and generator factor must be positive")
        if self.snapshot_every < 1:
            raise ConfigurationError("snapshot_every must be >= 1")
        ms = list(self.milestones)
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ConfigurationError("milestones must be strictly increasing")
        self.generator.validate()
        self.discriminator.validate()
        return self

    def as_dict(self):
        return asdict(self)


def resolve_architecture(cfg, dp=None):
    """Adjust network configs to what the loss / DP mode requires.

    * WGAN critics get a linear head; the Lipschitz penalty additionally
      needs a normalisation-free critic.
    * Per-sample clipping needs networks whose outputs do not mix samples,
      so batch norm becomes group norm on the privatised side (and on the
      critic that scores the privatised generator's samples).
    """
    g, d = replace(cfg.generator), replace(cfg.discriminator)
    if cfg.loss in ("wgan", "wgan_lp"):
        d.head = "linear"
    if cfg.loss == "wgan_lp":
        d.norm = "none"
    if dp is not None:
        if dp.target == "generator":
            g.norm = "group" if g.norm == "batch" else g.norm
        if d.norm == "batch":
            d.norm = "group"
        if dp.target == "discriminator" and cfg.loss == "wgan_lp":
            raise ConfigurationError("per-sample clipping of the critic is not supported with the Lipschitz penalty")
    return g, d


def prepare_real(ds, spec, max_len=144, dtype=np.float32):
    """Encoded + upsampled grids ``[N, 4, 2s, 2s]`` and validity masks ``[N, 1, 2s, 2s]``."""
    values, masks = codec.encode_dataset(ds, spec, max_len)
    side = values.shape[1]
    up = codec.upsample(values).values.transpose(0, 3, 1, 2)
    m = np.zeros((len(ds), side * side))
    m[:, :max_len] = masks
    m = codec.upsample(m.reshape(-1, side, side, 1)).values.transpose(0, 3, 1, 2)
    return np.ascontiguousarray(up, dtype=dtype), np.ascontiguousarray(m, dtype=dtype)


def apply_mask(x, mask):
    """Zero every padded cell so it cannot influence the discriminator."""
    return x * mask


def network_to_grids(out):
    """``[B, C, 2s, 2s]`` generator output -> ``[B, s, s, C]`` grids."""
    return codec.downsample(np.asarray(out).transpose(0, 2, 3, 1))


def generate(generator, n, seed, spec, name="generated", chunk=256):
    """Sample ``n`` trajectories (full grid length) from ``generator``."""
    nz = generator.config.noise_dim
    z = np.random.default_rng(seed).standard_normal((n, nz))
    dtype = generator.parameters()[0].data.dtype
    was_training = generator.training
    generator.eval()
    grids = []
    try:
        for i in range(0, n, chunk):
            grids.append(network_to_grids(generator.forward(z[i:i + chunk].astype(dtype))))
    finally:
        generator.train(was_training)
    if not grids:
        bbox = codec.BoundingBox(spec.lat[0], spec.lat[1], spec.lon[0], spec.lon[1])
        return Dataset(name, [], bbox)
    return codec.decode_batch(np.concatenate(grids), spec, name=name)


class EpochSampler:
    """Shuffled full batches; reshuffles when an epoch is exhausted."""

    def __init__(self, n, batch, rng):
        self.n, self.batch, self.rng = n, batch, rng
        self._perm = np.empty(0, dtype=int)
        self._pos = 0

    def next(self):
        if self._pos + self.batch > len(self._perm):
            self._perm = self.rng.permutation(self.n)
            self._pos = 0
        idx = self._perm[self._pos:self._pos + self.batch]
        self._pos += self.batch
        return np.sort(idx)


@dataclass
class TrainResult:
    generator: object
    discriminator: object
    log: list
    ledger: PrivacyLedger = None
    epsilon: float = None
    delta: float = None


class Trainer:
    """Holds the mutable state of one run; :func:`train` is the entry point."""

    def __init__(self, cfg, dataset, spec, dp=None, log_path=None, checkpoint_dir=None, audit=None):
        self.cfg = cfg.validate()
        self.spec = spec
        self.dp = dp.validate() if dp is not None else None
        self.audit = audit
        self.log_path = log_path
        self.checkpoint_dir = checkpoint_dir
        self.dtype = np.dtype(cfg.dtype)
        gcfg, dcfg = resolve_architecture(cfg, dp)
        ss = np.random.SeedSequence(cfg.seed)
        s_g, s_d, s_data, s_noise, s_interp, s_dp, s_eval = ss.spawn(7)
        self.G = build_generator(gcfg, seed=s_g, dtype=self.dtype)
        self.D = build_discriminator(dcfg, seed=s_d, dtype=self.dtype)
        self.real, self.masks = prepare_real(dataset, spec, cfg.max_len, self.dtype)
        n = len(self.real)
        self.batch = effective_batch(cfg.batch_size, dp)
        if n == 0:
            raise ConfigurationError("training dataset is empty")
        if self.batch > n:
            raise ConfigurationError(f"batch size {self.batch} exceeds dataset size {n}")
        self.sampler = EpochSampler(n, self.batch, np.random.default_rng(s_data))
        self.noise_rng = np.random.default_rng(s_noise)
        self.interp_rng = np.random.default_rng(s_interp)
        self.dp_rng = np.random.default_rng(s_dp)
        self.eval_seed = int(s_eval.generate_state(1)[0])
        self.loss = make_loss(cfg.loss, tuple(cfg.smoothing))
        self.opt_d = Adam(self.D.parameters(), cfg.lr, tuple(cfg.betas))
        self.opt_g = Adam(self.G.parameters(), cfg.lr * cfg.generator_factor, tuple(cfg.betas))
        self.d_updates = self.g_updates = 0
        self.ledger = self.delta = None
        if self.dp is not None:
            dp_steps = cfg.steps * (cfg.n_critic if self.dp.target == "discriminator" else 1)
            self.delta, q, sigma = self.dp.resolve(n, self.batch, max(dp_steps, 1))
            self.ledger = PrivacyLedger(q, sigma)
        self._snapshot_ref = self._reference_points(dataset)
        self.records = []

    # -- bookkeeping ---------------------------------------------------
    def _reference_points(self, ds):
        b = self.spec.bounds()[:2]
        xy = (ds.point_array()[:, :2] - b[:, 0]) / (b[:, 1] - b[:, 0])
        m = min(self.cfg.snapshot_samples, len(xy))
        idx = np.random.default_rng(self.eval_seed).choice(len(xy), m, replace=False)
        return xy[np.sort(idx)]

    def snapshot_swd(self):
        ref = self._snapshot_ref
        n_traj = math.ceil(len(ref) / (codec.grid_side(self.cfg.max_len) ** 2))
        gen = generate(self.G, n_traj, self.eval_seed, self.spec)
        b = self.spec.bounds()[:2]
        xy = (gen.point_array()[:, :2] - b[:, 0]) / (b[:, 1] - b[:, 0])
        return sliced_wasserstein(ref, xy[:len(ref)], self.cfg.snapshot_projections, self.eval_seed)

    def _emit(self, record):
        self.records.append(record)
        if self.log_path:
            with open(self.log_path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    def _checkpoint(self, tag):
        if not self.checkpoint_dir:
            return
        os.makedirs(self.checkpoint_dir, exist_ok=True)
        meta = {"generator": asdict(self.G.config), "spec": self.spec.as_dict(), "step": self.g_updates}
        save_checkpoint(os.path.join(self.checkpoint_dir, f"generator_{tag}.ckpt"), self.G, meta)

    # -- updates ---------------------------------------------------------
    def _noise(self):
        return self.noise_rng.standard_normal((self.batch, self.G.config.noise_dim)).astype(self.dtype)

    def discriminator_update(self):
        idx = self.sampler.next()
        x_real = apply_mask(self.real[idx], self.masks[idx])
        fake = self.G.forward(self._noise())
        if self.dp is not None and self.dp.target == "discriminator":
            loss_d = self._dp_discriminator_update(x_real, fake)
        else:
            b = self.batch
            self.D.zero_grad()
            l_r, g_r = self.loss.real_term(self.D.forward(x_real))
            self.D.backward(g_r / b)
            l_f, g_f = self.loss.fake_term(self.D.forward(fake))
            self.D.backward(g_f / b)
            loss_d = l_r + l_f
            if self.cfg.loss == "wgan_lp":
                x_hat = interpolate(x_real, fake, self.interp_rng)
                loss_d += lipschitz_penalty(self.D, x_hat, self.cfg.lp_lambda, backward=True)
        self._check_finite("loss_d", loss_d, self.D)
        self.opt_d.step()
        self.d_updates += 1
        return loss_d

    def generator_update(self):
        z = self._noise()
        if self.dp is not None and self.dp.target == "generator":
            loss_g = self._dp_generator_update(z)
        else:
            self.G.zero_grad()
            loss_g, g = self.loss.generator(self.D.forward(self.G.forward(z)))
            self.G.backward(self.D.backward(g / self.batch, param_grad=None))
        self._check_finite("loss_g", loss_g, self.G)
        self.opt_g.step()
        self.g_updates += 1
        return loss_g

    def _check_finite(self, name, value, model):
        grads_ok = all(p.grad is None or np.all(np.isfinite(p.grad)) for p in model.parameters())
        if not (math.isfinite(value) and grads_ok):
            raise TrainingError(
                f"non-finite {name} at step {self.g_updates + 1}",
                snapshot={"step": self.g_updates + 1, name: value, "d_updates": self.d_updates,
                          "g_updates": self.g_updates, "lr_d": self.opt_d.lr, "lr_g": self.opt_g.lr},
            )

    def _chunks(self):
        c = self.dp.chunk_size
        return [slice(i, min(i + c, self.batch)) for i in range(0, self.batch, c)]

    def _finish_dp(self, model):
        """Aggregate-noise step shared by both DP targets."""
        for p in model.parameters():
            noise = gaussian_noise(p.shape, self.ledger.sigma, self.dp.clip_norm, self.dp_rng, self.dtype)
            p.grad = p.grad + noise / self.batch
        self.ledger.step()

    def _per_sample_pass(self, grads, sq, kept):
        sq.append(sum((gs.reshape(len(gs), -1).astype(np.float64) ** 2).sum(axis=1) for gs in grads))
        if self.audit is not None:
            kept.append(np.concatenate([g.reshape(len(g), -1).astype(np.float64) for g in grads], axis=1))

    def _clip(self, sq, kept):
        """Clip factors in the working dtype, rounded towards zero so ``factor * ||g|| <= C`` still holds."""
        f64 = clip_factors(np.sqrt(np.concatenate(sq)), self.dp.clip_norm)
        f = f64.astype(self.dtype)
        f = np.where(f > f64, np.nextafter(f, self.dtype.type(0)), f)
        if self.audit is not None:
            self.audit(per_sample_norms(np.concatenate(kept) * f[:, None].astype(np.float64)))
        return f[:, None]

    def _dp_generator_update(self, z):
        sq, kept = [], []
        for sl in self._chunks():
            _, g = self.loss.generator(self.D.forward(self.G.forward(z[sl])))
            self.G.backward(self.D.backward(g, param_grad=None), param_grad="per_sample")
            self._per_sample_pass([p.grad_sample for p in self.G.parameters()], sq, kept)
        factors = self._clip(sq, kept)
        self.G.zero_grad()
        loss_g, g = self.loss.generator(self.D.forward(self.G.forward(z)))
        self.G.backward(self.D.backward((factors * g) / self.batch, param_grad=None))
        self._finish_dp(self.G)
        return loss_g

    def _dp_discriminator_update(self, x_real, fake):
        sq, kept = [], []
        for sl in self._chunks():
            _, g_r = self.loss.real_term(self.D.forward(x_real[sl]))
            self.D.backward(g_r, param_grad="per_sample")
            real_grads = [p.grad_sample for p in self.D.parameters()]
            _, g_f = self.loss.fake_term(self.D.forward(fake[sl]))
            self.D.backward(g_f, param_grad="per_sample")
            self._per_sample_pass([a + p.grad_sample for a, p in zip(real_grads, self.D.parameters())], sq, kept)
        factors = self._clip(sq, kept)
        self.D.zero_grad()
        l_r, g_r = self.loss.real_term(self.D.forward(x_real))
        self.D.backward((factors * g_r) / self.batch)
        l_f, g_f = self.loss.fake_term(self.D.forward(fake))
        self.D.backward((factors * g_f) / self.batch)
        self._finish_dp(self.D)
        return l_r + l_f

    # -- main loop -------------------------------------------------------
    def run(self):
        cfg = self.cfg
        self._emit(self._record(0, None, None, cfg.lr, cfg.lr * cfg.generator_factor, swd=self.snapshot_swd()))
        loss_d = loss_g = None
        for step in range(cfg.steps):
            lr_d = lr_scheduler_step(cfg.lr, step, cfg.milestones, cfg.lr_factor)
            lr_g = lr_d * cfg.generator_factor
            self.opt_d.lr, self.opt_g.lr = lr_d, lr_g
            for _ in range(cfg.n_critic):
                loss_d = self.discriminator_update()
            loss_g = self.generator_update()
            done = step + 1
            if done % cfg.snapshot_every == 0 or done == cfg.steps:
                self._emit(self._record(done, loss_d, loss_g, lr_d, lr_g, swd=self.snapshot_swd()))
            if cfg.checkpoint_every and done % cfg.checkpoint_every == 0:
                self._checkpoint(f"step{done}")
        self._checkpoint("final")
        final = {"event": "final", "step": cfg.steps, "d_updates": self.d_updates, "g_updates": self.g_updates}
        epsilon = None
        if self.dp is not None:
            epsilon = account(self.ledger, self.delta)
            final.update(epsilon=epsilon, delta=self.delta, sigma=self.ledger.sigma,
                         clip_norm=self.dp.clip_norm, dp_steps=self.ledger.steps, q=self.ledger.q,
                         batch_size=self.batch, dp_target=self.dp.target)
        self._emit(final)
        return TrainResult(self.G, self.D, self.records, self.ledger, epsilon, self.delta)

    def _record(self, step, loss_d, loss_g, lr_d, lr_g, **metrics):
        rec = {"event": "snapshot", "step": step, "loss_d": loss_d, "loss_g": loss_g,
               "lr_d": lr_d, "lr_g": lr_g, "d_updates": self.d_updates, "g_updates": self.g_updates}
        rec.update(metrics)
        return rec


def train(cfg, dataset, spec, dp=None, log_path=None, checkpoint_dir=None, audit=None):
    """Train a generator/discriminator pair on ``dataset``.

    ``dp`` (a :class:`~trajcnn.dp.DpConfig`) enables DP-SGD; ``audit`` is an
    optional callback receiving the post-clip per-sample gradient norms of
    every privatised update.  Returns a :class:`TrainResult`.
    """
    return Trainer(cfg, dataset, spec, dp, log_path, checkpoint_dir, audit).run()
