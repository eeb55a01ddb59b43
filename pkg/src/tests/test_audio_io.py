"""Tests for WAV reading and writing."""

from pathlib import Path

import numpy as np
import pytest
import soundfile as sf

from pesqnet_dns.core.models import Waveform
from pesqnet_dns.dsp.audio_io import quantize_pcm16, read_wav, write_wav
from pesqnet_dns.error_handling import AudioFormatError


class TestQuantize:
    """Test cases for the 16-bit grid."""

    def test_values_on_grid(self) -> None:
        """Test that quantized samples are integer multiples of 2**-15."""
        q = quantize_pcm16(np.array([0.1, -0.3333, 0.99999]))
        np.testing.assert_array_equal(q * 32768, np.round(q * 32768))

    def test_clipping(self) -> None:
        """Test that out-of-range values clip to the int16 limits."""
        q = quantize_pcm16(np.array([2.0, -2.0]))
        assert q[0] == 32767 / 32768
        assert q[1] == -1.0


class TestWavRoundTrip:
    """Test cases for read_wav and write_wav."""

    def test_quantized_signal_survives_exactly(self, tmp_path: Path) -> None:
        """Test that a signal already on the grid is read back bit-exactly."""
        samples = quantize_pcm16(0.2 * np.sin(np.arange(1600) / 7.0))
        path = write_wav(tmp_path / "sub" / "x.wav", Waveform(samples))
        assert path.exists()
        back = read_wav(path)
        assert back.sample_rate == 16000
        np.testing.assert_array_equal(back.samples, samples)

    def test_wrong_rate_raises(self, tmp_path: Path) -> None:
        """Test that a non-16 kHz file is rejected."""
        path = tmp_path / "x8k.wav"
        sf.write(str(path), np.zeros(800, dtype=np.int16), 8000, subtype="PCM_16")
        with pytest.raises(AudioFormatError) as exc_info:
            read_wav(path)
        assert exc_info.value.context["sample_rate"] == 8000

    def test_stereo_raises(self, tmp_path: Path) -> None:
        """Test that a two-channel file is rejected."""
        path = tmp_path / "stereo.wav"
        sf.write(str(path), np.zeros((800, 2), dtype=np.int16), 16000, subtype="PCM_16")
        with pytest.raises(AudioFormatError):
            read_wav(path)

    def test_float_subtype_raises(self, tmp_path: Path) -> None:
        """Test that 32-bit float WAVs are rejected."""
        path = tmp_path / "float.wav"
        sf.write(str(path), np.zeros(800, dtype=np.float32), 16000, subtype="FLOAT")
        with pytest.raises(AudioFormatError):
            read_wav(path)

    def test_missing_file_raises(self, tmp_path: Path) -> None:
        """Test that an absent file is an AudioFormatError."""
        with pytest.raises(AudioFormatError):
            read_wav(tmp_path / "absent.wav")
