"""Rényi-DP accounting for the Poisson-subsampled Gaussian mechanism.

``A_alpha = E_{z ~ N(0, s^2)} [((1 - q) + q * exp((2z - 1) / (2 s^2)))^alpha]``
is evaluated with a binomial expansion for integer orders and with the
erfc-weighted series for fractional orders; RDP(alpha) = log(A) / (alpha - 1).
Composition over T steps multiplies by T and the (epsilon, delta) bound is
``min_alpha  T * RDP(alpha) + log(1/delta) / (alpha - 1)``.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, gammasgn, log_ndtr, logsumexp

from ..errors import ConfigurationError

log = logging.getLogger(__name__)

DEFAULT_ORDERS = tuple(np.arange(1.25, 64.0 + 1e-9, 0.25).tolist()) + tuple(float(a) for a in range(65, 257))


def _log_binom(alpha, i):
    """``(log|binom(alpha, i)|, sign)`` for real ``alpha`` and integer array ``i``."""
    a = alpha - i + 1
    logv = gammaln(alpha + 1) - gammaln(i + 1) - gammaln(a)
    sign = gammasgn(alpha + 1) * gammasgn(a)
    return logv, sign


def _log_a_int(q, sigma, alpha):
    k = np.arange(int(alpha) + 1, dtype=np.float64)
    lb, _ = _log_binom(float(alpha), k)
    terms = lb + k * math.log(q) + (alpha - k) * math.log1p(-q) + (k * k - k) / (2 * sigma ** 2)
    return float(logsumexp(terms))


def _log_erfc(x):
    return math.log(2.0) + log_ndtr(-x * math.sqrt(2.0))


def _log_a_frac(q, sigma, alpha):
    z0 = sigma ** 2 * math.log(1 / q - 1) + 0.5
    n_terms = int(math.ceil(alpha)) + 64
    while True:
        i = np.arange(n_terms, dtype=np.float64)
        lb, sign = _log_binom(alpha, i)
        j = alpha - i
        s0 = (lb + i * math.log(q) + j * math.log1p(-q) + (i * i - i) / (2 * sigma ** 2)
              + math.log(0.5) + _log_erfc((i - z0) / (math.sqrt(2) * sigma)))
        s1 = (lb + j * math.log(q) + i * math.log1p(-q) + (j * j - j) / (2 * sigma ** 2)
              + math.log(0.5) + _log_erfc((z0 - j) / (math.sqrt(2) * sigma)))
        terms = np.logaddexp(s0, s1)
        top = terms.max()
        if terms[-1] < top - 40 or n_terms > 100_000:
            break
        n_terms *= 2
    pos = logsumexp(terms[sign > 0])
    neg = logsumexp(terms[sign < 0]) if np.any(sign < 0) else -np.inf
    if not pos > neg:
        return math.inf
    return float(pos + math.log1p(-math.exp(neg - pos)))


def rdp_subsampled_gaussian(q, sigma, alpha):
    """RDP of one step of the subsampled Gaussian mechanism at order ``alpha``."""
    if not 0 <= q <= 1:
        raise ValueError(f"sampling rate must lie in [0, 1], got {q}")
    if alpha <= 1:
        raise ValueError("Rényi order must exceed 1")
    if q == 0:
        return 0.0
    if sigma <= 0:
        return math.inf
    if q == 1:
        return alpha / (2 * sigma ** 2)
    with np.errstate(over="ignore", invalid="ignore"):
        if float(alpha).is_integer():
            log_a = _log_a_int(q, sigma, alpha)
        else:
            log_a = _log_a_frac(q, sigma, alpha)
    if not math.isfinite(log_a):
        return math.inf
    return log_a / (alpha - 1)


def compute_rdp(q, sigma, steps, orders=DEFAULT_ORDERS):
    return np.array([steps * rdp_subsampled_gaussian(q, sigma, a) for a in orders])


def epsilon_from_rdp(rdp, orders, delta):
    """Return ``(epsilon, best_order)`` for the classic RDP -> (eps, delta) conversion."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    orders = np.asarray(orders, dtype=np.float64)
    eps = np.asarray(rdp) + math.log(1 / delta) / (orders - 1)
    i = int(np.nanargmin(eps))
    return float(eps[i]), float(orders[i])


@dataclass
class PrivacyLedger:
    """Accounting state of one DP-SGD run."""

    q: float
    sigma: float
    steps: int = 0
    orders: tuple = field(default=DEFAULT_ORDERS)

    def __post_init__(self):
        if not 0 < self.q <= 1:
            raise ValueError(f"sampling rate must lie in (0, 1], got {self.q}")
        if self.sigma < 0:
            raise ValueError("noise multiplier must be non-negative")

    def step(self, n=1):
        if n < 0:
            raise ValueError("steps cannot decrease")
        self.steps += n

    def epsilon(self, delta):
        return account(self, delta)


def account(ledger, delta):
    """(epsilon) spent so far at the given delta; ``inf`` if no order gives a finite bound."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if ledger.steps == 0:
        return 0.0
    rdp = compute_rdp(ledger.q, ledger.sigma, ledger.steps, ledger.orders)
    if not np.any(np.isfinite(rdp)):
        log.warning("noise multiplier %.4g too small for a finite bound (q=%.4g, steps=%d)",
                    ledger.sigma, ledger.q, ledger.steps)
        return math.inf
    eps, _ = epsilon_from_rdp(rdp, ledger.orders, delta)
    return eps


def calibrate_sigma(epsilon_target, delta, q, steps, sigma_min=0.3, sigma_max=100.0, rtol=1e-4,
                    orders=DEFAULT_ORDERS):
    """Smallest noise multiplier in ``[sigma_min, sigma_max]`` meeting the budget.

    Bisection on sigma (epsilon is non-increasing in sigma); the returned
    value always satisfies ``account(...) <= epsilon_target``.
    """
    def eps_at(s):
        return account(PrivacyLedger(q, s, steps, orders), delta)

    if eps_at(sigma_min) <= epsilon_target:
        return sigma_min
    if eps_at(sigma_max) > epsilon_target:
        raise ConfigurationError(
            f"epsilon={epsilon_target} unreachable with sigma <= {sigma_max} (q={q}, steps={steps})"
        )
    lo, hi = sigma_min, sigma_max
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if eps_at(mid) <= epsilon_target:
            hi = mid
        else:
            lo = mid
    return hi
