"""Zero-mean unit-variance input normalization for the denoiser."""

from typing import Iterable, Tuple

import numpy as np
import torch

from pesqnet_dns.core.models import NormStats
from pesqnet_dns.error_handling import SignalError

STD_FLOOR = 1e-5


def compute_norm_stats(spectrograms: Iterable[np.ndarray]) -> NormStats:
    """Per (channel, bin) mean and std over all frames of all spectrograms.

    Channel 0 is the real part, channel 1 the imaginary part.

    Raises:
        SignalError: If no spectrogram is given or bin counts differ.
    """
    count = 0
    total = None
    total_sq = None
    for spec in spectrograms:
        spec = np.asarray(spec)
        parts = np.stack([spec.real, spec.imag]).astype(np.float64)  # (2, L, K)
        if total is None:
            total = np.zeros((2, parts.shape[2]))
            total_sq = np.zeros((2, parts.shape[2]))
        elif parts.shape[2] != total.shape[1]:
            raise SignalError(
                "spectrograms differ in bin count",
                expected=total.shape[1],
                got=parts.shape[2],
            )
        total += parts.sum(axis=1)
        total_sq += (parts**2).sum(axis=1)
        count += parts.shape[1]

    if total is None or total_sq is None or count == 0:
        raise SignalError("cannot compute normalization statistics of an empty corpus")

    mean = total / count
    var = np.maximum(total_sq / count - mean**2, 0.0)
    return NormStats(mean=mean, std=np.maximum(np.sqrt(var), STD_FLOOR))


def stats_tensors(
    stats: NormStats, dtype: torch.dtype = torch.float32
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Mean and std as (2, K) tensors."""
    return (
        torch.as_tensor(stats.mean, dtype=dtype),
        torch.as_tensor(stats.std, dtype=dtype),
    )


def to_model_input(
    noisy: torch.Tensor, mean: torch.Tensor, std: torch.Tensor
) -> torch.Tensor:
    """Complex (B, L, K) spectra to normalized real (B, 2, K, L) model input."""
    if noisy.shape[-1] != mean.shape[-1]:
        raise SignalError(
            "spectrum and statistics differ in bin count",
            spectrum_bins=int(noisy.shape[-1]),
            stats_bins=int(mean.shape[-1]),
        )
    parts = torch.stack([noisy.real, noisy.imag], dim=1)  # (B, 2, L, K)
    parts = parts.transpose(2, 3)
    return (parts - mean[None, :, :, None]) / std[None, :, :, None]
