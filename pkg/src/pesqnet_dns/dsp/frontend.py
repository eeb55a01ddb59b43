"""STFT analysis, overlap-add synthesis and bin bookkeeping."""

import logging
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from pesqnet_dns.core.models import ComplexSpectrogram, StftConfig, Waveform
from pesqnet_dns.error_handling import SignalError

logger = logging.getLogger(__name__)

ENVELOPE_FLOOR = 1e-8

DEFAULT_STFT = StftConfig()


@lru_cache(maxsize=8)
def analysis_window(frame_len: int, window: str = "hann") -> np.ndarray:
    """Periodic (DFT-even) window of ``frame_len`` samples."""
    win = get_window(window, frame_len, fftbins=True).astype(np.float64)
    win.setflags(write=False)
    return win


def pad_bins(phys: np.ndarray, cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Append zero-valued bins so L x 257 becomes L x ``cfg.n_bins``."""
    phys = np.asarray(phys)
    if phys.ndim != 2 or phys.shape[1] != cfg.physical_bins:
        raise SignalError(
            f"expected {cfg.physical_bins} physical bins",
            shape=tuple(phys.shape),
        )
    extra = cfg.n_bins - cfg.physical_bins
    return np.pad(phys, ((0, 0), (0, extra)), mode="constant", constant_values=0)


def drop_bins(padded: np.ndarray, cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Remove the padded bins again (exact inverse of :func:`pad_bins`)."""
    padded = np.asarray(padded)
    if padded.ndim != 2 or padded.shape[1] != cfg.n_bins:
        raise SignalError(
            f"expected {cfg.n_bins} padded bins", shape=tuple(padded.shape)
        )
    return padded[:, : cfg.physical_bins].copy()


def stft(w: Waveform, cfg: StftConfig = DEFAULT_STFT) -> ComplexSpectrogram:
    """Windowed DFT of 50%-overlapping frames.

    Frame ``l`` (0-based) covers samples ``[l*hop, l*hop + frame_len)``; samples
    after the last complete frame are dropped.

    Raises:
        SignalError: If the signal is shorter than one frame.
    """
    n = len(w)
    if n < cfg.frame_len:
        raise SignalError(
            f"signal of {n} samples is shorter than one frame",
            samples=n,
            frame_len=cfg.frame_len,
        )
    frames = sliding_window_view(w.samples, cfg.frame_len)[:: cfg.hop]
    frames = frames[: cfg.num_frames(n)]
    windowed = frames * analysis_window(cfg.frame_len, cfg.window)
    phys = np.fft.rfft(windowed, n=cfg.fft_size, axis=-1)
    return ComplexSpectrogram(pad_bins(phys, cfg), cfg)


def istft_ola(spec: ComplexSpectrogram, cfg: StftConfig = DEFAULT_STFT) -> Waveform:
    """Inverse DFT per frame followed by weighted overlap-add.

    The output has ``(L - 1) * hop + frame_len`` samples and is normalized by
    the summed squared-window envelope.
    """
    if spec.config != cfg:
        raise SignalError(
            "spectrogram framing does not match the synthesis config",
            spec_config=repr(spec.config),
            config=repr(cfg),
        )
    phys = drop_bins(spec.data, cfg)
    frames = np.fft.irfft(phys, n=cfg.fft_size, axis=-1)[:, : cfg.frame_len]
    win = analysis_window(cfg.frame_len, cfg.window)
    frames = frames * win

    n_frames = frames.shape[0]
    out_len = (n_frames - 1) * cfg.hop + cfg.frame_len
    signal = np.zeros(out_len, dtype=np.float64)
    envelope = np.zeros(out_len, dtype=np.float64)
    win_sq = win**2
    for idx in range(n_frames):
        start = idx * cfg.hop
        signal[start : start + cfg.frame_len] += frames[idx]
        envelope[start : start + cfg.frame_len] += win_sq

    return Waveform(signal / np.maximum(envelope, ENVELOPE_FLOOR))


def fit_length(w: Waveform, n_samples: int) -> Waveform:
    """Zero-pad or crop ``w`` to exactly ``n_samples``."""
    if len(w) >= n_samples:
        return Waveform(w.samples[:n_samples].copy(), w.sample_rate)
    return Waveform(
        np.pad(w.samples, (0, n_samples - len(w))), w.sample_rate
    )
