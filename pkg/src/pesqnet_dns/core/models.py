"""Data models for pesqnet-dns.

Core data structures for signals, spectra, synthesized utterances, rooms and
quality scores.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from pesqnet_dns.error_handling import SignalError

SAMPLE_RATE = 16000
PESQ_MIN = 1.04
PESQ_MAX = 4.64
PHYSICAL_BINS = 257


@dataclass(frozen=True)
class StftConfig:
    """Framing parameters of the analysis/synthesis filterbank."""

    frame_len: int = 384
    hop: int = 192
    fft_size: int = 512
    n_bins: int = 260
    window: str = "hann"

    def __post_init__(self) -> None:
        if self.hop * 2 != self.frame_len:
            raise SignalError(
                "hop must be half the frame length",
                frame_len=self.frame_len,
                hop=self.hop,
            )
        if self.fft_size < self.frame_len:
            raise SignalError(
                "fft_size must not be shorter than the frame",
                fft_size=self.fft_size,
                frame_len=self.frame_len,
            )
        if self.n_bins < self.physical_bins:
            raise SignalError(
                "n_bins must cover all physical bins",
                n_bins=self.n_bins,
                physical_bins=self.physical_bins,
            )

    @property
    def physical_bins(self) -> int:
        """Number of DFT bins from DC to Nyquist."""
        return self.fft_size // 2 + 1

    def num_frames(self, n_samples: int) -> int:
        """Frame count for a signal of ``n_samples`` (tail samples are dropped)."""
        return 1 + (n_samples - self.frame_len) // self.hop


@dataclass
class Waveform:
    """Time-domain mono signal."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate != SAMPLE_RATE:
            raise SignalError(
                f"sample rate {self.sample_rate} Hz is not supported",
                sample_rate=self.sample_rate,
                expected=SAMPLE_RATE,
            )
        if not np.all(np.isfinite(self.samples)):
            raise SignalError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration_s(self) -> float:
        """Duration in seconds."""
        return len(self) / self.sample_rate


@dataclass
class ComplexSpectrogram:
    """Frames x bins complex matrix plus the framing it was produced with."""

    data: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise SignalError(
                "spectrogram must be a non-empty frames x bins matrix",
                shape=tuple(self.data.shape),
            )
        if self.data.shape[1] != self.config.n_bins:
            raise SignalError(
                f"spectrogram has {self.data.shape[1]} bins, expected {self.config.n_bins}",
                shape=tuple(self.data.shape),
            )

    @property
    def num_frames(self) -> int:
        """Number of time frames L."""
        return int(self.data.shape[0])

    @property
    def shape(self) -> Tuple[int, int]:
        """(frames, bins)."""
        return (int(self.data.shape[0]), int(self.data.shape[1]))

    def magnitude(self) -> np.ndarray:
        """Amplitude spectrogram |X|."""
        return np.abs(self.data)


@dataclass
class ComplexMask:
    """Magnitude-bounded complex mask, frames x bins."""

    data: np.ndarray

    @property
    def max_magnitude(self) -> float:
        """Largest |M| over all entries."""
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0


@dataclass(frozen=True)
class RoomSpec:
    """Shoebox room for image-source RIR simulation (meters)."""

    length: float
    width: float
    height: float
    absorption: float
    source_pos: Tuple[float, float, float]
    mic_pos: Tuple[float, float, float]
    max_image_order: int = 10

    def __post_init__(self) -> None:
        dims = (self.length, self.width, self.height)
        if min(dims) <= 0:
            raise SignalError("room dimensions must be positive", dims=dims)
        if not 0.0 < self.absorption <= 1.0:
            raise SignalError(
                "absorption must lie in (0, 1]", absorption=self.absorption
            )
        if self.max_image_order < 0:
            raise SignalError(
                "max_image_order must be non-negative", order=self.max_image_order
            )
        for name, pos in (("source", self.source_pos), ("mic", self.mic_pos)):
            if len(pos) != 3 or any(not 0.0 < p < d for p, d in zip(pos, dims)):
                raise SignalError(
                    f"{name} position must lie strictly inside the room",
                    position=tuple(pos),
                    dims=dims,
                )

    @property
    def dims(self) -> Tuple[float, float, float]:
        """(length, width, height)."""
        return (self.length, self.width, self.height)

    @property
    def volume(self) -> float:
        """Room volume in cubic meters."""
        return self.length * self.width * self.height

    @property
    def surface(self) -> float:
        """Total wall surface in square meters."""
        l, w, h = self.dims
        return 2.0 * (l * w + l * h + w * h)

    @property
    def source_mic_distance(self) -> float:
        """Direct-path distance in meters."""
        return float(
            np.linalg.norm(np.asarray(self.source_pos) - np.asarray(self.mic_pos))
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary format."""
        return {
            "length": self.length,
            "width": self.width,
            "height": self.height,
            "absorption": self.absorption,
            "source_pos": list(self.source_pos),
            "mic_pos": list(self.mic_pos),
            "max_image_order": self.max_image_order,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RoomSpec":
        """Inverse of :meth:`to_dict`."""
        return cls(
            length=float(data["length"]),
            width=float(data["width"]),
            height=float(data["height"]),
            absorption=float(data["absorption"]),
            source_pos=tuple(float(v) for v in data["source_pos"]),  # type: ignore[arg-type]
            mic_pos=tuple(float(v) for v in data["mic_pos"]),  # type: ignore[arg-type]
            max_image_order=int(data.get("max_image_order", 10)),
        )


@dataclass
class UtteranceRecord:
    """One synthesized utterance: y(n) = s_rev(n) + d(n) with provenance."""

    uid: str
    clean: Waveform
    reverberated_clean: Waveform
    noise_segment: Waveform
    mixture: Waveform
    snr_db: float
    level_dbov: float
    rir_id: Optional[str] = None
    split: str = "train"
    room: Optional[RoomSpec] = None
    rt60_s: Optional[float] = None

    def __post_init__(self) -> None:
        lengths = {
            len(self.clean),
            len(self.reverberated_clean),
            len(self.noise_segment),
            len(self.mixture),
        }
        if len(lengths) != 1:
            raise SignalError(
                "record components differ in length", uid=self.uid, lengths=sorted(lengths)
            )

    @property
    def is_reverberant(self) -> bool:
        """True when the clean component was convolved with a simulated RIR."""
        return self.rir_id is not None

    @property
    def condition(self) -> str:
        """Reverberation condition label used in reports."""
        return "reverb" if self.is_reverberant else "no_reverb"


@dataclass
class NormStats:
    """Per (channel, bin) statistics of the noisy training spectra."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 2:
            raise SignalError(
                "mean and std must both be channels x bins",
                mean_shape=self.mean.shape,
                std_shape=self.std.shape,
            )
        if np.any(self.std <= 0):
            raise SignalError("std must be strictly positive")

    @property
    def n_bins(self) -> int:
        """Number of frequency bins covered."""
        return int(self.mean.shape[1])


@dataclass(frozen=True)
class QualityScore:
    """PESQ-scale quality score in [1.04, 4.64]."""

    value: float

    def __post_init__(self) -> None:
        if not PESQ_MIN <= self.value <= PESQ_MAX:
            raise SignalError(
                f"quality score {self.value} outside [{PESQ_MIN}, {PESQ_MAX}]",
                value=self.value,
            )

    @classmethod
    def clipped(cls, value: float) -> "QualityScore":
        """Build a score, clipping float rounding at the range ends."""
        return cls(float(min(max(value, PESQ_MIN), PESQ_MAX)))

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class CurvePoint:
    """Stage-2 training curve sample after epoch ``tau`` (0 = before training)."""

    tau: int
    j_total: float
    mae: float
    mean_oracle_score: float
