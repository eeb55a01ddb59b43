"""Tests for image-source room impulse responses."""

import numpy as np
import pytest

from pesqnet_dns.core.models import RoomSpec, Waveform
from pesqnet_dns.data.rir import (
    SPEED_OF_SOUND,
    direct_path_index,
    estimate_rt60,
    normalize_direct_path,
    reverberate,
    sample_room,
    simulate_rir,
)
from pesqnet_dns.error_handling import SignalError


@pytest.fixture
def room() -> RoomSpec:
    """A 5 x 4 x 3 m room with the source 1 m from the microphone."""
    return RoomSpec(
        length=5.0,
        width=4.0,
        height=3.0,
        absorption=0.2,
        source_pos=(2.0, 2.0, 1.5),
        mic_pos=(3.0, 2.0, 1.5),
        max_image_order=3,
    )


class TestSimulateRir:
    """Test cases for simulate_rir."""

    def test_direct_path_tap(self, room: RoomSpec) -> None:
        """Test that the first tap sits at distance / c and carries 1 / distance."""
        rir = simulate_rir(room)
        expected = int(round(1.0 / SPEED_OF_SOUND * 16000))
        assert direct_path_index(rir) == expected
        assert rir.samples[expected] == pytest.approx(1.0, rel=1e-12)

    def test_order_zero_is_single_tap(self, room: RoomSpec) -> None:
        """Test that without reflections only the direct path remains."""
        dry = RoomSpec(**{**room.to_dict(), "max_image_order": 0})
        rir = simulate_rir(dry)
        assert np.count_nonzero(rir.samples) == 1

    def test_higher_order_adds_energy(self, room: RoomSpec) -> None:
        """Test that more image orders add reflections."""
        low = simulate_rir(RoomSpec(**{**room.to_dict(), "max_image_order": 1}))
        high = simulate_rir(room)
        assert np.sum(high.samples**2) > np.sum(low.samples**2)

    def test_fixed_length(self, room: RoomSpec) -> None:
        """Test truncation to a requested number of taps."""
        assert len(simulate_rir(room, length=100)) == 100


class TestRoom:
    """Test cases for room geometry."""

    def test_sabine_rt60(self, room: RoomSpec) -> None:
        """Test the Sabine formula 24 ln(10) V / (c a S)."""
        v, s = 60.0, 2 * (20.0 + 15.0 + 12.0)
        expected = 24 * np.log(10) * v / (SPEED_OF_SOUND * 0.2 * s)
        assert estimate_rt60(room) == pytest.approx(expected)

    def test_source_outside_room_raises(self) -> None:
        """Test that positions must lie inside the room."""
        with pytest.raises(SignalError):
            RoomSpec(5.0, 4.0, 3.0, 0.2, (6.0, 1.0, 1.0), (1.0, 1.0, 1.0))

    def test_sample_room_in_ranges(self) -> None:
        """Test that random rooms respect the drawing ranges."""
        rng = np.random.default_rng(0)
        for _ in range(20):
            r = sample_room(rng, max_image_order=2)
            assert 3.0 <= r.length <= 10.0
            assert 2.5 <= r.height <= 3.5
            assert 0.1 <= r.absorption <= 0.3
            assert r.source_mic_distance <= 1.0 + 1e-9

    def test_dict_round_trip(self, room: RoomSpec) -> None:
        """Test serialization of the room description."""
        assert RoomSpec.from_dict(room.to_dict()) == room


class TestReverberate:
    """Test cases for applying an RIR."""

    def test_direct_path_is_time_aligned(self) -> None:
        """Test that a delayed unit impulse leaves speech unchanged."""
        rir = np.zeros(50)
        rir[17] = 2.0
        speech = Waveform(np.random.default_rng(1).standard_normal(400) * 0.1)
        out = reverberate(speech, normalize_direct_path(Waveform(rir)))
        np.testing.assert_allclose(out.samples, speech.samples)

    def test_output_length(self, room: RoomSpec) -> None:
        """Test that the output keeps the speech length."""
        speech = Waveform(np.ones(1000) * 0.01)
        assert len(reverberate(speech, simulate_rir(room))) == 1000

    def test_all_zero_rir_raises(self) -> None:
        """Test that an empty response has no direct path."""
        with pytest.raises(SignalError):
            direct_path_index(Waveform(np.zeros(10)))
