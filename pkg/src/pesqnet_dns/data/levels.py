"""Active speech level measurement, level normalization and SNR mixing.

The active level is a frame-based approximation of ITU-T P.56: the signal is
cut into 32 ms frames, frames within 35 dB of the loudest frame are active and
the level is the RMS over active frames in dB relative to full scale.
"""

import logging
from typing import Tuple

import numpy as np

from pesqnet_dns.core.models import Waveform
from pesqnet_dns.error_handling import SignalError

logger = logging.getLogger(__name__)

LEVEL_FRAME = 512
ACTIVITY_RANGE_DB = 35.0
SILENCE_ENERGY = 1e-10
TARGET_LEVEL_DBOV = -26.0


def _frame_energies(samples: np.ndarray) -> np.ndarray:
    n_frames = len(samples) // LEVEL_FRAME
    if n_frames == 0:
        return np.array([np.mean(samples**2)]) if len(samples) else np.zeros(1)
    frames = samples[: n_frames * LEVEL_FRAME].reshape(n_frames, LEVEL_FRAME)
    return np.mean(frames**2, axis=1)


def active_power(w: Waveform) -> float:
    """Mean power over the active frames of ``w``.

    Raises:
        SignalError: If every frame is silent.
    """
    energies = _frame_energies(w.samples)
    peak = float(np.max(energies))
    if peak < SILENCE_ENERGY:
        raise SignalError("signal is silent, active level undefined", samples=len(w))
    active = energies >= peak * 10.0 ** (-ACTIVITY_RANGE_DB / 10.0)
    return float(np.mean(energies[active]))


def active_level_dbov(w: Waveform) -> float:
    """Active speech level in dBov."""
    return 10.0 * float(np.log10(active_power(w)))


def normalize_level(w: Waveform, target_dbov: float = TARGET_LEVEL_DBOV) -> Waveform:
    """Scale ``w`` so its active level equals ``target_dbov``."""
    gain = 10.0 ** ((target_dbov - active_level_dbov(w)) / 20.0)
    return Waveform(w.samples * gain, w.sample_rate)


def noise_power(w: Waveform) -> float:
    """Full-length mean power of a noise signal."""
    return float(np.mean(w.samples**2)) if len(w) else 0.0


def mix_at_snr(
    speech: Waveform, noise: Waveform, snr_db: float
) -> Tuple[Waveform, Waveform]:
    """Scale ``noise`` to ``snr_db`` below the speech and add it.

    SNR is active speech power over full noise power.

    Returns:
        Tuple of (mixture, scaled_noise).

    Raises:
        SignalError: On length mismatch, silent speech or zero-power noise.
    """
    if len(speech) != len(noise):
        raise SignalError(
            "speech and noise differ in length",
            speech=len(speech),
            noise=len(noise),
        )
    p_noise = noise_power(noise)
    if p_noise <= 0.0:
        raise SignalError("noise has zero power", samples=len(noise))
    p_speech = active_power(speech)

    scale = np.sqrt(p_speech / (p_noise * 10.0 ** (snr_db / 10.0)))
    scaled_noise = Waveform(noise.samples * scale, noise.sample_rate)
    mixture = Waveform(speech.samples + scaled_noise.samples, speech.sample_rate)
    return mixture, scaled_noise


def measure_snr(speech: Waveform, noise: Waveform) -> float:
    """SNR in dB as defined for :func:`mix_at_snr`."""
    p_noise = noise_power(noise)
    if p_noise <= 0.0:
        raise SignalError("noise has zero power", samples=len(noise))
    return 10.0 * float(np.log10(active_power(speech) / p_noise))


def rms_level_dbov(w: Waveform) -> float:
    """Plain RMS level of the whole signal in dBov."""
    power = noise_power(w)
    if power <= 0.0:
        raise SignalError("signal is silent, level undefined", samples=len(w))
    return 10.0 * float(np.log10(power))
