"""Fully convolutional recurrent network (FCRN) producing a bounded complex mask.

Tensors are laid out as (batch, channels, frequency, frames). Convolutions run
along frequency only; the ConvLSTM bottleneck carries state across frames.
"""

import logging
from typing import List, Tuple

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from pesqnet_dns.core.models import (
    ComplexMask,
    ComplexSpectrogram,
    NormStats,
    Waveform,
)
from pesqnet_dns.core.settings import FcrnConfig
from pesqnet_dns.dsp.frontend import DEFAULT_STFT, fit_length, istft_ola, stft
from pesqnet_dns.error_handling import ConfigValidationError, SignalError
from pesqnet_dns.models.normalization import stats_tensors, to_model_input

logger = logging.getLogger(__name__)

BOUND_EPS = 1e-4


def bound_mask(raw: torch.Tensor) -> torch.Tensor:
    """Map (B, 2, K, L) real/imag output z to tanh(|z|) * z / |z|.

    Phase is kept and the magnitude never exceeds 1; z = 0 maps to 0.
    """
    mag_sq = raw[:, 0] ** 2 + raw[:, 1] ** 2
    big = mag_sq > BOUND_EPS**2
    mag = torch.sqrt(torch.where(big, mag_sq, torch.ones_like(mag_sq)))
    factor = torch.where(big, torch.tanh(mag) / mag, 1.0 - mag_sq / 3.0)
    return raw * factor[:, None]


class ConvLSTM(nn.Module):
    """LSTM whose gates are 1-D convolutions over frequency.

    State starts at zero for every call, so utterances never share state.
    """

    def __init__(self, in_channels: int, hidden: int, kernel: int) -> None:
        super().__init__()
        self.hidden = hidden
        self.gates = nn.Conv1d(in_channels + hidden, 4 * hidden, kernel, padding="same")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, C, K, L) -> (B, hidden, K, L)."""
        batch, _, bins, frames = x.shape
        h = x.new_zeros(batch, self.hidden, bins)
        c = x.new_zeros(batch, self.hidden, bins)
        outputs = []
        for t in range(frames):
            i, f, g, o = self.gates(torch.cat([x[..., t], h], dim=1)).chunk(4, dim=1)
            c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
            h = torch.sigmoid(o) * torch.tanh(c)
            outputs.append(h)
        return torch.stack(outputs, dim=-1)


def _conv(cin: int, cout: int, n: int) -> nn.Conv2d:
    return nn.Conv2d(cin, cout, kernel_size=(n, 1), padding="same")


class Fcrn(nn.Module):
    """Encoder, ConvLSTM bottleneck and decoder with additive skips."""

    def __init__(self, cfg: FcrnConfig) -> None:
        super().__init__()
        self.cfg = cfg
        n, f = cfg.kernel_height, cfg.filters
        widths = [f * 2**s for s in range(cfg.pool_stages)]
        self.widths = widths

        self.encoder = nn.ModuleList()
        cin = cfg.c_in
        for w in widths:
            self.encoder.append(nn.ModuleList([_conv(cin, w, n), _conv(w, w, n)]))
            cin = w

        deepest = widths[-1]
        self.bottleneck_in = _conv(deepest, deepest, n)
        self.convlstm = ConvLSTM(deepest, f, n)
        self.bottleneck_out = _conv(f, deepest, n)

        self.decoder = nn.ModuleList()
        cin = deepest
        for w in reversed(widths):
            self.decoder.append(nn.ModuleList([_conv(cin, w, n), _conv(w, w, n)]))
            cin = w
        self.head = _conv(widths[0], cfg.c_out, n)

        self.pool = nn.MaxPool2d(kernel_size=(cfg.pool_factor, 1))
        self.upsample = nn.Upsample(scale_factor=(cfg.pool_factor, 1), mode="nearest")

    def _act(self, x: torch.Tensor) -> torch.Tensor:
        return F.leaky_relu(x, self.cfg.leaky_slope)

    def reset_parameters(self) -> None:
        """Fan-in variance scaling for every convolution, zero biases."""
        for module in self.modules():
            if isinstance(module, (nn.Conv1d, nn.Conv2d)):
                nn.init.kaiming_normal_(
                    module.weight,
                    a=self.cfg.leaky_slope,
                    mode="fan_in",
                    nonlinearity="leaky_relu",
                )
                if module.bias is not None:
                    nn.init.zeros_(module.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Normalized (B, 2, K, L) input -> bounded (B, 2, K, L) mask."""
        if x.dim() != 4 or x.shape[1] != self.cfg.c_in or x.shape[2] != self.cfg.k_in:
            raise SignalError(
                f"expected input of shape (B, {self.cfg.c_in}, {self.cfg.k_in}, L)",
                shape=tuple(x.shape),
            )
        skips: List[torch.Tensor] = []
        for first, second in self.encoder:
            x = self._act(second(self._act(first(x))))
            skips.append(x)
            x = self.pool(x)

        pooled = x
        x = self._act(self.bottleneck_in(x))
        x = self.convlstm(x)
        x = self._act(self.bottleneck_out(x)) + pooled

        for (first, second), skip in zip(self.decoder, reversed(skips)):
            x = self._act(first(self.upsample(x))) + skip
            x = self._act(second(x))
        return bound_mask(self.head(x))


def build_fcrn(cfg: FcrnConfig, seed: int = 0) -> Fcrn:
    """Build an FCRN with deterministic initial weights for ``seed``.

    Raises:
        ConfigValidationError: If ``k_in`` is not divisible by the pooling.
    """
    problems = cfg.problems()
    if problems:
        raise ConfigValidationError(problems)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = Fcrn(cfg)
        model.reset_parameters()
    logger.debug(
        "Built FCRN F=%d N=%d with %d parameters",
        cfg.filters,
        cfg.kernel_height,
        sum(p.numel() for p in model.parameters()),
    )
    return model


def mask_to_complex(mask: torch.Tensor) -> torch.Tensor:
    """(B, 2, K, L) real mask -> complex (B, L, K)."""
    return torch.complex(mask[:, 0], mask[:, 1]).transpose(1, 2)


def enhance_spectrum(
    model: Fcrn,
    noisy: torch.Tensor,
    mean: torch.Tensor,
    std: torch.Tensor,
) -> torch.Tensor:
    """Masked estimate S_hat = M * Y for complex (B, L, K) noisy spectra."""
    mask = mask_to_complex(model(to_model_input(noisy, mean, std)))
    return mask * noisy


def forward_mask(model: Fcrn, y_norm: np.ndarray) -> ComplexMask:
    """Mask of one normalized utterance given as an (L, K, 2) array.

    Raises:
        SignalError: If the input shape does not match the model.
    """
    y_norm = np.asarray(y_norm)
    if y_norm.ndim != 3 or y_norm.shape[2] != 2 or y_norm.shape[1] != model.cfg.k_in:
        raise SignalError(
            f"expected normalized input of shape (L, {model.cfg.k_in}, 2)",
            shape=tuple(y_norm.shape),
        )
    dtype = next(model.parameters()).dtype
    x = torch.as_tensor(y_norm, dtype=dtype).permute(2, 1, 0)[None]
    with torch.no_grad():
        mask = mask_to_complex(model(x))[0]
    return ComplexMask(mask.cpu().numpy().astype(np.complex128))


def apply_mask(mask: ComplexMask, spec: ComplexSpectrogram) -> ComplexSpectrogram:
    """Elementwise complex product M * Y."""
    if mask.data.shape != spec.data.shape:
        raise SignalError(
            "mask and spectrogram differ in shape",
            mask=tuple(mask.data.shape),
            spectrogram=tuple(spec.data.shape),
        )
    return ComplexSpectrogram(mask.data * spec.data, spec.config)


def normalize_spectrum(spec: ComplexSpectrogram, stats: NormStats) -> np.ndarray:
    """(L, K) complex spectrogram -> normalized (L, K, 2) real array."""
    parts = np.stack([spec.data.real, spec.data.imag], axis=-1)
    return (parts - stats.mean.T[None]) / stats.std.T[None]


def enhance_utterance(
    model: Fcrn,
    stats: NormStats,
    y: Waveform,
    identity_mask: bool = False,
) -> Waveform:
    """Denoise one waveform; the output has the input's length.

    Samples past the last complete frame are returned as zeros.
    """
    spec = stft(y, DEFAULT_STFT)
    if identity_mask:
        mask = ComplexMask(np.ones_like(spec.data))
    else:
        model.eval()
        mask = forward_mask(model, normalize_spectrum(spec, stats))
    return fit_length(istft_ola(apply_mask(mask, spec), DEFAULT_STFT), len(y))


def stats_for(model: Fcrn, stats: NormStats) -> Tuple[torch.Tensor, torch.Tensor]:
    """Normalization tensors in the model's dtype."""
    return stats_tensors(stats, next(model.parameters()).dtype)
