"""16-bit PCM mono WAV reading and writing."""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import soundfile as sf

from pesqnet_dns.core.models import SAMPLE_RATE, Waveform
from pesqnet_dns.error_handling import AudioFormatError, report_file_error

logger = logging.getLogger(__name__)

PCM_SUBTYPE = "PCM_16"
PCM_SCALE = 32768.0


def quantize_pcm16(samples: np.ndarray) -> np.ndarray:
    """Round samples onto the 16-bit grid (values k/32768, k in int16 range)."""
    ints = np.clip(np.round(np.asarray(samples) * PCM_SCALE), -32768, 32767)
    return ints / PCM_SCALE


def read_wav(path: Union[str, Path]) -> Waveform:
    """Read a mono 16 kHz 16-bit PCM WAV file.

    Raises:
        AudioFormatError: On unreadable files or any other rate, channel count
            or sample format.
    """
    path = Path(path)
    try:
        info = sf.info(str(path))
    except (OSError, RuntimeError) as e:
        report_file_error(e, path, "read")
        raise AudioFormatError(f"cannot read audio file {path}", path=str(path)) from e

    if info.samplerate != SAMPLE_RATE:
        raise AudioFormatError(
            f"{path} has sample rate {info.samplerate} Hz, expected {SAMPLE_RATE} Hz",
            path=str(path),
            sample_rate=info.samplerate,
        )
    if info.channels != 1:
        raise AudioFormatError(
            f"{path} has {info.channels} channels, expected mono",
            path=str(path),
            channels=info.channels,
        )
    if info.subtype != PCM_SUBTYPE:
        raise AudioFormatError(
            f"{path} is {info.subtype}, expected {PCM_SUBTYPE}",
            path=str(path),
            subtype=info.subtype,
        )

    data, rate = sf.read(str(path), dtype="int16", always_2d=False)
    return Waveform(data.astype(np.float64) / PCM_SCALE, rate)


def write_wav(path: Union[str, Path], w: Waveform) -> Path:
    """Write ``w`` as 16-bit PCM; samples outside [-1, 1) are clipped."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ints = np.clip(np.round(w.samples * PCM_SCALE), -32768, 32767).astype(np.int16)
    if np.any(np.abs(w.samples) > 1.0):
        logger.warning("Clipping %s while writing 16-bit PCM", path)
    try:
        sf.write(str(path), ints, w.sample_rate, subtype=PCM_SUBTYPE)
    except (OSError, RuntimeError) as e:
        report_file_error(e, path, "write")
        raise AudioFormatError(f"cannot write audio file {path}", path=str(path)) from e
    return path
