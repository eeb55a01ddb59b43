"""Training objectives.

Spectral losses take complex tensors shaped (..., L, K) and an optional boolean
frame mask shaped (..., L). Each utterance's loss is normalized by its valid
frame count and the number of physical bins; a minibatch loss is the mean over
utterances.
"""

from typing import Optional, Union

import torch

from pesqnet_dns.core.models import PESQ_MAX, PHYSICAL_BINS
from pesqnet_dns.error_handling import ConfigValidationError, SignalError

Number = Union[float, torch.Tensor]


def _check_weight(name: str, value: float) -> None:
    if not 0.0 <= float(value) <= 1.0:
        raise ConfigValidationError([f"{name}={value} outside [0, 1]"])


def _mean(x: Number) -> Number:
    return x.mean() if isinstance(x, torch.Tensor) else x


def spectral_mse(
    estimate: torch.Tensor,
    target: torch.Tensor,
    frame_mask: Optional[torch.Tensor] = None,
    n_bins: Optional[int] = None,
) -> torch.Tensor:
    """Per-utterance (1 / (L K)) * sum |estimate - target|^2, shape (...,).

    ``n_bins`` defaults to the physical bins when the padded layout is used and
    to all bins otherwise.
    """
    if estimate.shape != target.shape:
        raise SignalError(
            "estimate and target differ in shape",
            estimate=tuple(estimate.shape),
            target=tuple(target.shape),
        )
    bins = n_bins or (PHYSICAL_BINS if estimate.shape[-1] > PHYSICAL_BINS else estimate.shape[-1])
    diff = (estimate - target)[..., :bins]
    err = diff.real**2 + diff.imag**2  # (..., L, K)
    if frame_mask is None:
        return err.mean(dim=(-2, -1))
    weights = frame_mask.to(err.dtype)
    frames = weights.sum(dim=-1).clamp(min=1.0)
    return (err.sum(dim=-1) * weights).sum(dim=-1) / (frames * bins)


def loss_joint(
    s_hat: torch.Tensor, s: torch.Tensor, frame_mask: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """MSE against the dry clean target (joint dereverberation and denoising)."""
    return spectral_mse(s_hat, s, frame_mask).mean()


def loss_noise(
    s_hat: torch.Tensor, s_rev: torch.Tensor, frame_mask: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """MSE against the reverberated clean target (denoising only)."""
    return spectral_mse(s_hat, s_rev, frame_mask).mean()


def loss_mse(
    s_hat: torch.Tensor,
    s: torch.Tensor,
    s_rev: torch.Tensor,
    beta: float,
    frame_mask: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """beta * J_joint + (1 - beta) * J_noise."""
    _check_weight("beta", beta)
    return beta * loss_joint(s_hat, s, frame_mask) + (1.0 - beta) * loss_noise(
        s_hat, s_rev, frame_mask
    )


def loss_pesq(pesq_hat: Number, pesq_true: Number) -> Number:
    """Squared estimation error of PESQNet, averaged over a batch."""
    return _mean((pesq_hat - pesq_true) ** 2)


def loss_pesqnet(pesq_hat: Number, pesq_max: float = PESQ_MAX) -> Number:
    """Squared distance of the estimated score from the scale maximum."""
    return _mean((pesq_hat - pesq_max) ** 2)


def loss_total(j_mse: Number, j_pesqnet: Number, alpha: float) -> Number:
    """alpha * J_mse + (1 - alpha) * J_pesqnet."""
    _check_weight("alpha", alpha)
    return alpha * j_mse + (1.0 - alpha) * j_pesqnet
