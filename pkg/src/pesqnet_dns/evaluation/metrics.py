"""Instrumental metrics: segmental SNR improvement, MAE and LCC."""

from typing import Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats

from pesqnet_dns.core.models import Waveform
from pesqnet_dns.error_handling import SignalError

SEG_FRAME = 256
SEG_HOP = 128
SEG_MIN_DB = -10.0
SEG_MAX_DB = 35.0
SEG_SILENCE = 1e-10


def _frames(x: np.ndarray) -> np.ndarray:
    return sliding_window_view(x, SEG_FRAME)[::SEG_HOP]


def seg_snr(clean: Waveform, degraded: Waveform) -> float:
    """Mean per-frame SNR in dB, each frame clamped to [-10, 35].

    Frames where the clean signal is silent are skipped.

    Raises:
        SignalError: On a length mismatch, a signal shorter than one frame, or
            an all-silent clean signal.
    """
    if len(clean) != len(degraded):
        raise SignalError(
            "clean and degraded differ in length", clean=len(clean), degraded=len(degraded)
        )
    if len(clean) < SEG_FRAME:
        raise SignalError(f"signal shorter than one {SEG_FRAME}-sample frame", length=len(clean))
    s = _frames(clean.samples)
    e = _frames(clean.samples - degraded.samples)
    signal = np.sum(s**2, axis=1)
    error = np.sum(e**2, axis=1)
    active = signal >= SEG_SILENCE
    if not active.any():
        raise SignalError("clean reference is silent in every frame")
    with np.errstate(divide="ignore"):
        snr = 10.0 * np.log10(signal[active] / error[active])
    return float(np.mean(np.clip(snr, SEG_MIN_DB, SEG_MAX_DB)))


def delta_snr_seg(clean: Waveform, noisy: Waveform, enhanced: Waveform) -> float:
    """SNRseg(enhanced) - SNRseg(noisy) against the same clean reference."""
    if len(noisy) != len(enhanced):
        raise SignalError(
            "noisy and enhanced differ in length", noisy=len(noisy), enhanced=len(enhanced)
        )
    return seg_snr(clean, enhanced) - seg_snr(clean, noisy)


def _pairs(estimated: Sequence[float], true: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    est = np.asarray(estimated, dtype=np.float64)
    ref = np.asarray(true, dtype=np.float64)
    if est.shape != ref.shape or est.ndim != 1:
        raise SignalError("score sequences differ in shape", estimated=est.shape, true=ref.shape)
    return est, ref


def mae(estimated: Sequence[float], true: Sequence[float]) -> float:
    """Mean absolute error between estimated and true scores.

    Raises:
        SignalError: If the sequences are empty or of different lengths.
    """
    est, ref = _pairs(estimated, true)
    if est.size == 0:
        raise SignalError("MAE of an empty set")
    return float(np.mean(np.abs(est - ref)))


def lcc(estimated: Sequence[float], true: Sequence[float]) -> float:
    """Pearson linear correlation coefficient.

    Raises:
        SignalError: With fewer than two pairs or zero variance on either side.
    """
    est, ref = _pairs(estimated, true)
    if est.size < 2:
        raise SignalError("LCC needs at least two pairs", count=int(est.size))
    if np.ptp(est) == 0.0 or np.ptp(ref) == 0.0:
        raise SignalError("LCC undefined for zero variance")
    r = stats.pearsonr(est, ref)[0]
    return float(np.clip(r, -1.0, 1.0))
