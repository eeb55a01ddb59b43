"""Tests for the ground-truth quality oracles."""

import subprocess
from typing import List
from unittest.mock import Mock, patch

import numpy as np
import pytest

from pesqnet_dns.core.models import Waveform
from pesqnet_dns.core.settings import OracleSpec
from pesqnet_dns.error_handling import OracleError, SignalError
from pesqnet_dns.oracle.quality import (
    ExternalPesqOracle,
    SurrogateOracle,
    build_oracle,
    log_spectral_distance,
    surrogate_from_lsd,
)

from .conftest import samples_for_frames, speech_like

COMMAND = ["pesq-tool", "+16000", "{reference}", "{degraded}"]


@pytest.fixture
def clean() -> Waveform:
    """Clean reference."""
    return Waveform(speech_like(samples_for_frames(20), seed=6))


@pytest.fixture
def noisy(clean: Waveform) -> Waveform:
    """Clean plus white noise."""
    rng = np.random.default_rng(3)
    return Waveform(clean.samples + 0.02 * rng.standard_normal(len(clean)))


def completed(stdout: str, returncode: int = 0) -> subprocess.CompletedProcess:
    """Fake subprocess result."""
    return subprocess.CompletedProcess(args=COMMAND, returncode=returncode, stdout=stdout, stderr="")


class TestSurrogateOracle:
    """Test cases for the LSD-based scorer."""

    def test_identity_scores_maximum(self, clean: Waveform) -> None:
        """Test that the clean signal scores 4.64 against itself."""
        assert float(SurrogateOracle().score(clean, clean)) == pytest.approx(4.64)

    def test_noise_lowers_score(self, clean: Waveform, noisy: Waveform) -> None:
        """Test that degradation lowers the score."""
        oracle = SurrogateOracle()
        louder = Waveform(clean.samples + 5 * (noisy.samples - clean.samples))
        assert float(oracle.score(louder, clean)) < float(oracle.score(noisy, clean)) < 4.64

    def test_score_falls_with_noise_level(self, clean: Waveform) -> None:
        """Test a non-increasing score over eps in {0, 0.1, 0.3, 1.0}."""
        noise = np.random.default_rng(8).standard_normal(len(clean)) * 0.1
        oracle = SurrogateOracle()
        scores = [
            float(oracle.score(Waveform(clean.samples + eps * noise), clean))
            for eps in (0.0, 0.1, 0.3, 1.0)
        ]
        assert scores[0] == pytest.approx(4.64)
        assert all(a >= b for a, b in zip(scores, scores[1:]))

    def test_strong_white_noise_near_minimum(self, clean: Waveform) -> None:
        """Test that loud white noise scored against speech lands near 1.04."""
        noise = Waveform(np.random.default_rng(9).standard_normal(len(clean)))
        assert float(SurrogateOracle().score(noise, clean)) == pytest.approx(1.04, abs=0.2)

    def test_mapping(self) -> None:
        """Test 1.04 + 3.6 exp(-lsd / gamma)."""
        assert float(surrogate_from_lsd(0.0)) == pytest.approx(4.64)
        assert float(surrogate_from_lsd(1.0, gamma=2.0)) == pytest.approx(1.04 + 3.6 * np.exp(-0.5))
        assert float(surrogate_from_lsd(1e9)) == pytest.approx(1.04)

    def test_length_mismatch_raises(self, clean: Waveform) -> None:
        """Test that the pair must have equal length."""
        with pytest.raises(SignalError):
            log_spectral_distance(Waveform(clean.samples[:-1]), clean)

    def test_score_many_in_order(self, clean: Waveform, noisy: Waveform) -> None:
        """Test batch scoring order."""
        scores = SurrogateOracle().score_many([(clean, clean), (noisy, clean)])
        assert float(scores[0]) > float(scores[1])


@pytest.mark.subprocess
class TestExternalPesqOracle:
    """Test cases for the subprocess adapter."""

    @patch("pesqnet_dns.oracle.quality.subprocess.run")
    def test_parses_last_score(self, mock_run: Mock, clean: Waveform, noisy: Waveform) -> None:
        """Test placeholder substitution and parsing of the final score line."""
        mock_run.return_value = completed("P.862.2 tool\nintermediate 1.5\nMOS-LQO = 3.25\n")
        score = ExternalPesqOracle(COMMAND).score(noisy, clean)
        assert float(score) == 3.25
        args: List[str] = mock_run.call_args[0][0]
        assert args[0] == "pesq-tool"
        assert args[2].endswith("reference.wav")
        assert args[3].endswith("degraded.wav")
        assert mock_run.call_args.kwargs["timeout"] == 30.0

    @patch("pesqnet_dns.oracle.quality.subprocess.run")
    def test_out_of_range_score_clipped(self, mock_run: Mock, clean: Waveform) -> None:
        """Test that tool rounding above 4.64 is clipped."""
        mock_run.return_value = completed("4.6449\n")
        assert float(ExternalPesqOracle(COMMAND).score(clean, clean)) == 4.64

    @patch("pesqnet_dns.oracle.quality.subprocess.run")
    def test_nonzero_exit(self, mock_run: Mock, clean: Waveform) -> None:
        """Test that a failing tool raises with its output attached."""
        mock_run.return_value = subprocess.CompletedProcess(COMMAND, 2, "partial", "bad file")
        with pytest.raises(OracleError) as exc_info:
            ExternalPesqOracle(COMMAND).score(clean, clean)
        assert exc_info.value.context["exit_code"] == 2
        assert exc_info.value.context["stderr"] == "bad file"

    @patch("pesqnet_dns.oracle.quality.subprocess.run")
    def test_unparsable_output(self, mock_run: Mock, clean: Waveform) -> None:
        """Test that output without a score raises."""
        mock_run.return_value = completed("no score here\n")
        with pytest.raises(OracleError):
            ExternalPesqOracle(COMMAND).score(clean, clean)

    @patch("pesqnet_dns.oracle.quality.subprocess.run")
    def test_timeout(self, mock_run: Mock, clean: Waveform) -> None:
        """Test that a hanging tool raises."""
        mock_run.side_effect = subprocess.TimeoutExpired(COMMAND, 1.0)
        with pytest.raises(OracleError, match="timed out"):
            ExternalPesqOracle(COMMAND, timeout_s=1.0).score(clean, clean)

    @patch("pesqnet_dns.oracle.quality.subprocess.run")
    def test_missing_tool(self, mock_run: Mock, clean: Waveform) -> None:
        """Test that an absent executable raises."""
        mock_run.side_effect = FileNotFoundError("pesq-tool")
        with pytest.raises(OracleError, match="not found"):
            ExternalPesqOracle(COMMAND).score(clean, clean)

    @patch("pesqnet_dns.oracle.quality.subprocess.run")
    def test_score_many_keeps_order(self, mock_run: Mock, clean: Waveform) -> None:
        """Test concurrent scoring returns results in input order."""
        mock_run.return_value = completed("2.0\n")
        scores = ExternalPesqOracle(COMMAND, max_concurrency=2).score_many([(clean, clean)] * 3)
        assert [float(s) for s in scores] == [2.0, 2.0, 2.0]
        assert ExternalPesqOracle(COMMAND).score_many([]) == []

    def test_empty_command_raises(self) -> None:
        """Test that a command is required."""
        with pytest.raises(OracleError):
            ExternalPesqOracle([])


class TestBuildOracle:
    """Test cases for oracle selection."""

    def test_surrogate_default(self) -> None:
        """Test the default oracle kind."""
        assert build_oracle(OracleSpec()).kind == "surrogate"

    def test_external(self) -> None:
        """Test the external oracle settings."""
        oracle = build_oracle(OracleSpec(kind="external_pesq", command=COMMAND, timeout_s=5))
        assert isinstance(oracle, ExternalPesqOracle)
        assert oracle.timeout_s == 5
