import numpy as np

from ..errors import TrainingError


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place.

    ``state`` is a dict holding ``step`` and per-parameter first/second
    moment lists; an empty dict is initialised with zero moments.
    """
    if not state:
        state["step"] = 0
        state["m"] = [np.zeros_like(p) for p in params]
        state["v"] = [np.zeros_like(p) for p in params]
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient passed to Adam")
    state["step"] += 1
    t = state["step"]
    c1 = 1 - beta1 ** t
    c2 = 1 - beta2 ** t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype, copy=False)
    return params, state


class Adam:
    """Adam over a list of :class:`~trajcnn.nn.layers.Tensor` parameters."""

    def __init__(self, params, lr=2e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = {}

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state, self.lr,
                  self.betas[0], self.betas[1], self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
            p.grad_sample = None


def lr_scheduler_step(base_lr, step, milestones=(), factor=0.1):
    """Learning rate in effect at ``step`` for a multi-step decay schedule.

    The rate is multiplied by ``factor`` once for every milestone ``m`` with
    ``step >= m``.
    """
    milestones = list(milestones)
    if any(b <= a for a, b in zip(milestones, milestones[1:])):
        raise ValueError(f"milestones must be strictly increasing, got {milestones}")
    passed = sum(1 for m in milestones if step >= m)
    return base_lr * factor ** passed
