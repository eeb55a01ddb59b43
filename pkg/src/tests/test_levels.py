"""Tests for level measurement and SNR mixing."""

import numpy as np
import pytest

from pesqnet_dns.core.models import Waveform
from pesqnet_dns.data.levels import (
    active_level_dbov,
    measure_snr,
    mix_at_snr,
    normalize_level,
    rms_level_dbov,
)
from pesqnet_dns.error_handling import SignalError

from .conftest import speech_like


@pytest.fixture
def speech() -> Waveform:
    """Two seconds of speech-like signal."""
    return Waveform(speech_like(32000, seed=2))


@pytest.fixture
def noise() -> Waveform:
    """White noise of the same length."""
    return Waveform(0.05 * np.random.default_rng(5).standard_normal(32000))


class TestActiveLevel:
    """Test cases for the active speech level."""

    def test_pauses_do_not_lower_level(self) -> None:
        """Test that appending silence leaves the active level unchanged."""
        tone = 0.1 * np.sin(2 * np.pi * 440 * np.arange(8192) / 16000)
        with_pause = np.concatenate([tone, np.zeros(8192)])
        assert active_level_dbov(Waveform(with_pause)) == pytest.approx(
            active_level_dbov(Waveform(tone)), abs=1e-6
        )
        assert rms_level_dbov(Waveform(with_pause)) < rms_level_dbov(Waveform(tone)) - 2.9

    def test_normalize_level(self, speech: Waveform) -> None:
        """Test scaling to -26 dBov."""
        assert active_level_dbov(normalize_level(speech)) == pytest.approx(-26.0, abs=1e-9)

    def test_silent_signal_raises(self) -> None:
        """Test that silence has no active level."""
        with pytest.raises(SignalError):
            active_level_dbov(Waveform(np.zeros(4096)))


class TestMixAtSnr:
    """Test cases for noise scaling and mixing."""

    @pytest.mark.parametrize("snr_db", [0.0, 5.0, 20.0, -5.0])
    def test_requested_snr_is_met(self, speech: Waveform, noise: Waveform, snr_db: float) -> None:
        """Test that the measured SNR equals the requested one."""
        mixture, scaled = mix_at_snr(speech, noise, snr_db)
        assert measure_snr(speech, scaled) == pytest.approx(snr_db, abs=1e-9)
        np.testing.assert_allclose(mixture.samples, speech.samples + scaled.samples)

    def test_length_mismatch_raises(self, speech: Waveform) -> None:
        """Test that speech and noise must have equal length."""
        with pytest.raises(SignalError):
            mix_at_snr(speech, Waveform(np.ones(10)), 5.0)

    def test_zero_noise_raises(self, speech: Waveform) -> None:
        """Test that silent noise cannot be scaled."""
        with pytest.raises(SignalError):
            mix_at_snr(speech, Waveform(np.zeros(len(speech))), 5.0)
