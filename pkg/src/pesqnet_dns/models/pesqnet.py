"""PESQNet: non-intrusive quality estimation from an amplitude spectrogram.

The spectrogram is cut into blocks of W frames. A shared subnetwork turns every
block into a feature vector (CNN encoder, parallel convolutions of growing
time width, max over time, BLSTM); mean, std, min and max over blocks feed a
small fully connected head whose output is squashed onto the PESQ scale.
"""

import logging
import math
from typing import List, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from pesqnet_dns.core.models import PESQ_MAX, PESQ_MIN, QualityScore
from pesqnet_dns.core.settings import PesqNetConfig
from pesqnet_dns.error_handling import ConfigValidationError, SignalError

logger = logging.getLogger(__name__)

GATE_SCALE = PESQ_MAX - PESQ_MIN


def output_gate(x: torch.Tensor) -> torch.Tensor:
    """3.6 * sigmoid(x) + 1.04."""
    return GATE_SCALE * torch.sigmoid(x) + PESQ_MIN


def split_blocks(
    amp: Union[np.ndarray, torch.Tensor], block_frames: int
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Cut an (L, K) amplitude spectrogram into ceil(L / W) blocks of (K, W).

    The last block is zero-padded along time.

    Returns:
        Tuple of (blocks of shape (B, K, W), valid frame count per block).
    """
    amp_t = torch.as_tensor(amp)
    if amp_t.dim() != 2 or amp_t.shape[0] < 1:
        raise SignalError("expected a non-empty (L, K) spectrogram", shape=tuple(amp_t.shape))
    frames, bins = amp_t.shape
    n_blocks = math.ceil(frames / block_frames)
    padded = F.pad(amp_t, (0, 0, 0, n_blocks * block_frames - frames))
    blocks = padded.reshape(n_blocks, block_frames, bins).transpose(1, 2)
    valid = torch.clamp(
        frames - torch.arange(n_blocks) * block_frames, max=block_frames
    )
    return blocks, valid


def _safe_std(x: torch.Tensor, dim: int) -> torch.Tensor:
    """Population std whose gradient stays finite when all values agree."""
    var = torch.mean((x - x.mean(dim=dim, keepdim=True)) ** 2, dim=dim)
    positive = var > 0
    return torch.where(positive, torch.sqrt(torch.where(positive, var, torch.ones_like(var))), var)


class PesqNet(nn.Module):
    """Block-based quality estimator."""

    def __init__(self, cfg: PesqNetConfig) -> None:
        super().__init__()
        self.cfg = cfg

        layers: List[nn.Module] = []
        cin, bins = 1, cfg.k_in
        for cout in cfg.encoder_channels:
            layers.append(nn.Conv2d(cin, cout, kernel_size=3, padding=1))
            cin = cout
            if cfg.freq_pool:
                bins //= 2
        self.encoder = nn.ModuleList(layers)
        self.encoded_bins = bins

        self.width_convs = nn.ModuleList(
            nn.Conv2d(cin, cfg.width_filters, kernel_size=(bins, w)) for w in cfg.kernel_widths
        )
        features = cfg.width_filters * len(cfg.kernel_widths)
        self.blstm = nn.LSTM(features, cfg.blstm_hidden, batch_first=True, bidirectional=True)

        fc: List[nn.Module] = []
        width = 4 * 2 * cfg.blstm_hidden
        for out in cfg.fc_widths:
            fc.append(nn.Linear(width, out))
            width = out
        self.fc = nn.ModuleList(fc)

    def _act(self, x: torch.Tensor) -> torch.Tensor:
        return F.leaky_relu(x, self.cfg.leaky_slope)

    def reset_parameters(self) -> None:
        """Fan-in variance scaling for convolutions and linear layers."""
        for module in self.modules():
            if isinstance(module, (nn.Conv2d, nn.Linear)):
                nn.init.kaiming_normal_(
                    module.weight, a=self.cfg.leaky_slope, mode="fan_in", nonlinearity="leaky_relu"
                )
                nn.init.zeros_(module.bias)
        for name, param in self.blstm.named_parameters():
            if "weight" in name:
                nn.init.xavier_uniform_(param)
            else:
                nn.init.zeros_(param)

    def block_features(self, blocks: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
        """(B, K, W) blocks -> (B, features) before the BLSTM."""
        x = blocks[:, None]
        for conv in self.encoder:
            x = self._act(conv(x))
            if self.cfg.freq_pool:
                x = F.max_pool2d(x, kernel_size=(2, 1))

        pooled = []
        for width, conv in zip(self.cfg.kernel_widths, self.width_convs):
            y = self._act(conv(x))[:, :, 0]  # (B, filters, W - w + 1)
            positions = torch.arange(y.shape[-1], device=y.device)
            limit = torch.clamp(valid.to(y.device) - width + 1, min=1)
            keep = positions[None, :] < limit[:, None]
            y = y.masked_fill(~keep[:, None, :], float("-inf"))
            pooled.append(y.amax(dim=-1))
        return torch.cat(pooled, dim=1)

    def _run_blstm(self, features: torch.Tensor) -> torch.Tensor:
        """(B, features) -> (B, 2 * hidden) under the configured scope."""
        if self.cfg.blstm_scope == "across_blocks":
            out, _ = self.blstm(features[None])
            return out[0]
        out, _ = self.blstm(features[:, None])
        return out[:, 0]

    def score_logit(self, amp: torch.Tensor) -> torch.Tensor:
        """Pre-gate output for one (L, K) amplitude spectrogram."""
        if self.cfg.log_compress:
            amp = torch.log1p(amp)
        blocks, valid = split_blocks(amp, self.cfg.block_frames)
        h = self._run_blstm(self.block_features(blocks, valid))
        stats = torch.cat(
            [h.mean(dim=0), _safe_std(h, dim=0), h.amin(dim=0), h.amax(dim=0)]
        )
        for i, layer in enumerate(self.fc):
            stats = layer(stats)
            if i < len(self.fc) - 1:
                stats = self._act(stats)
        return stats[0]

    def forward(self, amp: torch.Tensor, lengths: Sequence[int]) -> torch.Tensor:
        """(B, L, K) amplitudes with per-utterance valid frames -> (B,) scores."""
        if amp.dim() != 3 or amp.shape[-1] != self.cfg.k_in:
            raise SignalError(
                f"expected amplitudes of shape (B, L, {self.cfg.k_in})",
                shape=tuple(amp.shape),
            )
        logits = [self.score_logit(amp[b, : int(n)]) for b, n in enumerate(lengths)]
        return output_gate(torch.stack(logits))


def build_pesqnet(cfg: PesqNetConfig, seed: int = 0) -> PesqNet:
    """Build a PESQNet with deterministic initial weights for ``seed``.

    Raises:
        ConfigValidationError: On invalid kernel widths or block size.
    """
    problems = cfg.problems()
    if problems:
        raise ConfigValidationError(problems)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = PesqNet(cfg)
        model.reset_parameters()
    return model


def estimate_pesq(model: PesqNet, amp: np.ndarray) -> QualityScore:
    """Score one (L, K) amplitude spectrogram.

    Raises:
        SignalError: On negative amplitudes or an empty spectrogram.
    """
    amp = np.asarray(amp)
    if amp.ndim != 2 or amp.shape[0] < 1:
        raise SignalError("expected a non-empty (L, K) spectrogram", shape=amp.shape)
    if np.any(amp < 0):
        raise SignalError("amplitude spectrogram has negative entries")
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        score = model(torch.as_tensor(amp, dtype=dtype)[None], [amp.shape[0]])[0]
    return QualityScore.clipped(float(score))
