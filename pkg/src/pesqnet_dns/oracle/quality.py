"""Intrusive ground-truth quality scorers.

``external_pesq`` runs a P.862.2 tool as a subprocess per utterance; the
``surrogate`` scorer maps the log-spectral distance between enhanced and clean
speech onto the PESQ range and needs nothing outside this package.
"""

import logging
import re
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np

from pesqnet_dns.core.models import PESQ_MAX, PESQ_MIN, QualityScore, Waveform
from pesqnet_dns.core.settings import OracleSpec
from pesqnet_dns.dsp.audio_io import write_wav
from pesqnet_dns.dsp.frontend import drop_bins, stft
from pesqnet_dns.error_handling import OracleError, SignalError

logger = logging.getLogger(__name__)

SURROGATE_GAMMA = 1.0
SURROGATE_EPS = 1e-6


class QualityOracle(Protocol):
    """Anything that scores enhanced speech against its clean reference."""

    kind: str

    def score(self, enhanced: Waveform, clean: Waveform) -> QualityScore:
        """Score one utterance."""
        ...

    def score_many(self, pairs: Sequence[Tuple[Waveform, Waveform]]) -> List[QualityScore]:
        """Score (enhanced, clean) pairs in order."""
        ...


def _check_pair(enhanced: Waveform, clean: Waveform) -> None:
    if enhanced.sample_rate != clean.sample_rate:
        raise SignalError(
            "enhanced and reference differ in sample rate",
            enhanced=enhanced.sample_rate,
            clean=clean.sample_rate,
        )
    if len(enhanced) != len(clean):
        raise SignalError(
            "enhanced and reference differ in length",
            enhanced=len(enhanced),
            clean=len(clean),
        )


def log_spectral_distance(
    enhanced: Waveform, clean: Waveform, epsilon: float = SURROGATE_EPS
) -> float:
    """Mean |log(|S_hat| + eps) - log(|S| + eps)| over frames and physical bins."""
    _check_pair(enhanced, clean)
    est = np.abs(drop_bins(stft(enhanced).data))
    ref = np.abs(drop_bins(stft(clean).data))
    return float(np.mean(np.abs(np.log(est + epsilon) - np.log(ref + epsilon))))


def surrogate_from_lsd(lsd: float, gamma: float = SURROGATE_GAMMA) -> QualityScore:
    """1.04 + 3.6 * exp(-lsd / gamma)."""
    return QualityScore.clipped(PESQ_MIN + (PESQ_MAX - PESQ_MIN) * float(np.exp(-lsd / gamma)))


def surrogate_formula(
    enhanced: Waveform,
    clean: Waveform,
    gamma: float = SURROGATE_GAMMA,
    epsilon: float = SURROGATE_EPS,
) -> QualityScore:
    """Surrogate PESQ of ``enhanced`` against ``clean``."""
    return surrogate_from_lsd(log_spectral_distance(enhanced, clean, epsilon), gamma)


class SurrogateOracle:
    """Deterministic stand-in for P.862.2."""

    kind = "surrogate"

    def __init__(self, gamma: float = SURROGATE_GAMMA, epsilon: float = SURROGATE_EPS) -> None:
        self.gamma = gamma
        self.epsilon = epsilon

    def score(self, enhanced: Waveform, clean: Waveform) -> QualityScore:
        """Score one utterance."""
        return surrogate_formula(enhanced, clean, self.gamma, self.epsilon)

    def score_many(self, pairs: Sequence[Tuple[Waveform, Waveform]]) -> List[QualityScore]:
        """Score pairs sequentially."""
        return [self.score(e, c) for e, c in pairs]


class ExternalPesqOracle:
    """Adapter around a command-line PESQ tool.

    ``command`` is an argument list in which ``{reference}`` and ``{degraded}``
    are replaced by temporary WAV paths. The score is the first capture group
    of ``score_pattern`` on the last output line it matches.
    """

    kind = "external_pesq"

    def __init__(
        self,
        command: Sequence[str],
        score_pattern: str = OracleSpec().score_pattern,
        timeout_s: float = 30.0,
        max_concurrency: int = 4,
    ) -> None:
        if not command:
            raise OracleError("external oracle needs a command")
        self.command = list(command)
        self.pattern = re.compile(score_pattern)
        self.timeout_s = timeout_s
        self.max_concurrency = max_concurrency

    def _parse(self, output: str) -> Optional[float]:
        for line in reversed(output.splitlines()):
            match = self.pattern.search(line)
            if match:
                return float(match.group(1))
        return None

    def score(self, enhanced: Waveform, clean: Waveform) -> QualityScore:
        """Run the tool once.

        Raises:
            OracleError: If the tool is missing, fails, times out or prints no
                parsable score; captured output is attached.
        """
        _check_pair(enhanced, clean)
        with tempfile.TemporaryDirectory(prefix="pesqnet-oracle-") as tmp:
            reference = write_wav(Path(tmp) / "reference.wav", clean)
            degraded = write_wav(Path(tmp) / "degraded.wav", enhanced)
            args = [
                a.format(reference=str(reference), degraded=str(degraded)) for a in self.command
            ]
            try:
                result = subprocess.run(
                    args,
                    capture_output=True,
                    text=True,
                    timeout=self.timeout_s,
                    check=False,
                )
            except FileNotFoundError as e:
                raise OracleError(f"oracle tool not found: {args[0]}", command=args) from e
            except subprocess.TimeoutExpired as e:
                raise OracleError(
                    f"oracle tool timed out after {self.timeout_s} s",
                    command=args,
                    stdout=e.stdout,
                    stderr=e.stderr,
                ) from e

        if result.returncode != 0:
            raise OracleError(
                f"oracle tool exited with code {result.returncode}",
                command=args,
                exit_code=result.returncode,
                stdout=result.stdout,
                stderr=result.stderr,
            )
        value = self._parse(result.stdout)
        if value is None:
            raise OracleError(
                "no score found in oracle output",
                command=args,
                stdout=result.stdout,
                stderr=result.stderr,
            )
        return QualityScore.clipped(value)

    def score_many(self, pairs: Sequence[Tuple[Waveform, Waveform]]) -> List[QualityScore]:
        """Score pairs with up to ``max_concurrency`` tool processes at a time."""
        if not pairs:
            return []
        with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
            return list(pool.map(lambda p: self.score(*p), pairs))


def build_oracle(spec: OracleSpec) -> QualityOracle:
    """Oracle for a config section."""
    if spec.kind == "external_pesq":
        logger.info("Using external PESQ oracle: %s", " ".join(spec.command))
        return ExternalPesqOracle(
            spec.command, spec.score_pattern, spec.timeout_s, spec.max_concurrency
        )
    return SurrogateOracle(spec.gamma, spec.epsilon)
