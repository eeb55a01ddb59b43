"""Room impulse responses by the image-source (mirror) method.

Shoebox rooms, frequency-independent wall reflection coefficients and
nearest-sample tap placement.
"""

import logging
from typing import Optional

import numpy as np
from scipy.signal import convolve

from pesqnet_dns.core.models import SAMPLE_RATE, RoomSpec, Waveform
from pesqnet_dns.error_handling import SignalError

logger = logging.getLogger(__name__)

SPEED_OF_SOUND = 343.0
MIN_DISTANCE = 1e-6

ROOM_LENGTH_RANGE = (3.0, 10.0)
ROOM_HEIGHT_RANGE = (2.5, 3.5)
ABSORPTION_RANGE = (0.1, 0.3)
SOURCE_DISTANCE_RANGE = (0.1, 1.0)
WALL_MARGIN = 0.01


def _axis_images(source: float, size: float, order: int) -> tuple:
    """Image coordinates along one axis and their reflection counts."""
    m = np.arange(-(order // 2) - 1, order // 2 + 2)
    q = np.array([0, 1])
    mm, qq = np.meshgrid(m, q, indexing="ij")
    mm, qq = mm.ravel(), qq.ravel()
    counts = np.abs(2 * mm - qq)
    keep = counts <= order
    coords = (1 - 2 * qq[keep]) * source + 2 * mm[keep] * size
    return coords, counts[keep]


def simulate_rir(
    room: RoomSpec,
    sample_rate: int = SAMPLE_RATE,
    c: float = SPEED_OF_SOUND,
    length: Optional[int] = None,
) -> Waveform:
    """Simulate h(n) between the room's source and microphone.

    Every image source of total reflection order up to ``room.max_image_order``
    contributes ``beta**order / distance`` at tap ``round(distance / c * fs)``
    with ``beta = sqrt(1 - absorption)``.

    Args:
        room: Room geometry and absorption.
        sample_rate: Sampling rate in Hz.
        c: Speed of sound in m/s.
        length: Number of taps; defaults to the latest image arrival plus one.

    Raises:
        SignalError: If source and microphone coincide.
    """
    if room.source_mic_distance < MIN_DISTANCE:
        raise SignalError(
            "source and microphone coincide",
            source=room.source_pos,
            mic=room.mic_pos,
        )

    order = room.max_image_order
    beta = np.sqrt(1.0 - room.absorption)
    axes = [
        _axis_images(s, size, order)
        for s, size in zip(room.source_pos, room.dims)
    ]
    (x, ox), (y, oy), (z, oz) = axes
    gx, gy, gz = np.meshgrid(x, y, z, indexing="ij")
    hx, hy, hz = np.meshgrid(ox, oy, oz, indexing="ij")
    total_order = (hx + hy + hz).ravel()
    keep = total_order <= order

    mic = np.asarray(room.mic_pos, dtype=np.float64)
    images = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)[keep]
    distances = np.linalg.norm(images - mic, axis=1)
    amplitudes = beta ** total_order[keep] / distances
    taps = np.round(distances / c * sample_rate).astype(np.int64)

    n_taps = int(taps.max()) + 1 if length is None else int(length)
    in_range = taps < n_taps
    h = np.zeros(n_taps, dtype=np.float64)
    np.add.at(h, taps[in_range], amplitudes[in_range])

    logger.debug(
        "Simulated RIR with %d image sources, %d taps", int(keep.sum()), n_taps
    )
    return Waveform(h, sample_rate)


def direct_path_index(rir: Waveform) -> int:
    """Index of the first nonzero tap."""
    nonzero = np.flatnonzero(rir.samples)
    if nonzero.size == 0:
        raise SignalError("impulse response is all zero", taps=len(rir))
    return int(nonzero[0])


def normalize_direct_path(rir: Waveform) -> Waveform:
    """Scale ``rir`` so its direct-path tap equals 1."""
    idx = direct_path_index(rir)
    return Waveform(rir.samples / rir.samples[idx], rir.sample_rate)


def reverberate(speech: Waveform, rir: Waveform) -> Waveform:
    """Convolve ``speech`` with ``rir`` keeping the direct path at time zero.

    Leading taps before the direct path are discarded and the linear
    convolution is truncated to the speech length.
    """
    if len(speech) == 0 or len(rir) == 0:
        raise SignalError("reverberate needs nonempty inputs")
    h = rir.samples[direct_path_index(rir) :]
    out = convolve(speech.samples, h, mode="full")[: len(speech)]
    return Waveform(out, speech.sample_rate)


def estimate_rt60(room: RoomSpec, c: float = SPEED_OF_SOUND) -> float:
    """Sabine reverberation time in seconds."""
    return 24.0 * np.log(10.0) * room.volume / (c * room.absorption * room.surface)


def sample_room(rng: np.random.Generator, max_image_order: int = 10) -> RoomSpec:
    """Draw a random room with the microphone at its centre.

    The source sits at a uniformly drawn distance in a direction uniform on
    the sphere, clipped to stay inside the walls.
    """
    length = rng.uniform(*ROOM_LENGTH_RANGE)
    width = rng.uniform(*ROOM_LENGTH_RANGE)
    height = rng.uniform(*ROOM_HEIGHT_RANGE)
    absorption = rng.uniform(*ABSORPTION_RANGE)
    dims = np.array([length, width, height])
    mic = dims / 2.0

    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    distance = rng.uniform(*SOURCE_DISTANCE_RANGE)
    source = np.clip(mic + distance * direction, WALL_MARGIN, dims - WALL_MARGIN)

    return RoomSpec(
        length=float(length),
        width=float(width),
        height=float(height),
        absorption=float(absorption),
        source_pos=tuple(float(v) for v in source),  # type: ignore[arg-type]
        mic_pos=tuple(float(v) for v in mic),  # type: ignore[arg-type]
        max_image_order=max_image_order,
    )
