from .accountant import (
    DEFAULT_ORDERS, PrivacyLedger, account, calibrate_sigma, compute_rdp, epsilon_from_rdp,
    rdp_subsampled_gaussian,
)
from .sgd import (
    DpConfig, clip_factors, clip_per_sample, effective_batch, gaussian_noise, noisy_aggregate,
    per_sample_norms,
)

__all__ = [
    "DEFAULT_ORDERS", "PrivacyLedger", "account", "calibrate_sigma", "compute_rdp",
    "epsilon_from_rdp", "rdp_subsampled_gaussian",
    "DpConfig", "clip_factors", "clip_per_sample", "effective_batch", "gaussian_noise",
    "noisy_aggregate", "per_sample_norms",
]
