"""Shared pytest fixtures for pesqnet-dns tests."""

import json
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np
import pytest
from scipy.signal import fftconvolve

from pesqnet_dns.core.models import UtteranceRecord, Waveform
from pesqnet_dns.core.settings import (
    FcrnConfig,
    PesqNetConfig,
    PhaseConfig,
    RunConfig,
    Stage2Config,
)
from pesqnet_dns.data.batching import TrainingCorpus
from pesqnet_dns.dsp.audio_io import quantize_pcm16, write_wav
from pesqnet_dns.oracle.quality import SurrogateOracle

FRAME = 384
HOP = 192


def speech_like(n_samples: int, seed: int = 0) -> np.ndarray:
    """Harmonic bursts separated by pauses, peak well below full scale."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_samples) / 16000.0
    f0 = rng.uniform(100.0, 220.0)
    tone = sum(np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) / k for k in range(1, 6))
    envelope = (np.sin(2 * np.pi * 3.0 * t) > -0.3).astype(float)
    return 0.1 * tone * envelope + 1e-3 * rng.standard_normal(n_samples)


def samples_for_frames(frames: int) -> int:
    """Signal length that yields exactly ``frames`` STFT frames."""
    return FRAME + (frames - 1) * HOP


@pytest.fixture
def make_record() -> Callable[..., UtteranceRecord]:
    """Factory for in-memory records that satisfy mixture = s_rev + noise exactly."""

    def _make(
        uid: str,
        frames: int = 10,
        reverb: bool = False,
        split: str = "train",
        seed: int = 0,
        snr_db: float = 5.0,
    ) -> UtteranceRecord:
        n = samples_for_frames(frames)
        rng = np.random.default_rng(seed + 1000)
        clean = quantize_pcm16(speech_like(n, seed))
        s_rev = clean
        if reverb:
            rir = np.zeros(400)
            rir[0] = 1.0
            rir[1:] = 0.3 * rng.standard_normal(399) * np.exp(-np.arange(1, 400) / 80.0)
            s_rev = quantize_pcm16(fftconvolve(clean, rir)[:n])
        noise = quantize_pcm16(0.03 * rng.standard_normal(n))
        return UtteranceRecord(
            uid=uid,
            clean=Waveform(clean),
            reverberated_clean=Waveform(s_rev),
            noise_segment=Waveform(noise),
            mixture=Waveform(s_rev + noise),
            snr_db=snr_db,
            level_dbov=-26.0,
            rir_id="rir-test" if reverb else None,
            split=split,
        )

    return _make


@pytest.fixture
def tiny_records(make_record: Callable[..., UtteranceRecord]) -> List[UtteranceRecord]:
    """Four training and two validation records of varying length."""
    return [
        make_record("utt-00000", frames=8, seed=0),
        make_record("utt-00001", frames=10, seed=1),
        make_record("utt-00002", frames=9, seed=2),
        make_record("utt-00003", frames=12, seed=3),
        make_record("utt-00004", frames=8, seed=4, split="val"),
        make_record("utt-00005", frames=11, seed=5, split="val"),
    ]


@pytest.fixture
def tiny_corpus(tiny_records: List[UtteranceRecord]) -> TrainingCorpus:
    """Spectra of the tiny records."""
    return TrainingCorpus.from_records(tiny_records)


@pytest.fixture
def tiny_fcrn_config() -> FcrnConfig:
    """Small FCRN that still takes the full 260-bin input."""
    return FcrnConfig(filters=4, kernel_height=3, pool_stages=1)


@pytest.fixture
def tiny_pesqnet_config() -> PesqNetConfig:
    """Small PESQNet with two kernel widths."""
    return PesqNetConfig(
        block_frames=4,
        kernel_widths=[1, 2],
        encoder_channels=[2],
        width_filters=2,
        blstm_hidden=2,
        fc_widths=[4, 1],
    )


@pytest.fixture
def surrogate_oracle() -> SurrogateOracle:
    """Deterministic in-process oracle."""
    return SurrogateOracle()


@pytest.fixture
def run_config(
    tmp_path: Path, tiny_fcrn_config: FcrnConfig, tiny_pesqnet_config: PesqNetConfig
) -> RunConfig:
    """RunConfig for a tiny workspace with short phases."""

    def phase(lr: float, beta: Optional[float] = None) -> PhaseConfig:
        return PhaseConfig(lr=lr, stop_lr=lr / 100, max_epochs=2, beta=beta)

    return RunConfig(
        workspace=tmp_path,
        fcrn=tiny_fcrn_config,
        pesqnet=tiny_pesqnet_config,
        pretrain_dns=phase(1e-3, 0.0),
        pretrain_pesqnet=phase(1e-3),
        finetune_dns=phase(1e-4, 0.9),
        finetune_pesqnet=phase(1e-4),
        stage2=Stage2Config(epochs=3, dns_lr=1e-5, pesqnet_lr=1e-5, audit=True),
    )


@pytest.fixture
def manifest_path(tmp_path: Path) -> Path:
    """Manifest with four clean files and two noise files on disk."""
    audio = tmp_path / "audio"
    for i in range(4):
        write_wav(audio / f"clean{i}.wav", Waveform(speech_like(samples_for_frames(10 + i), i)))
    rng = np.random.default_rng(99)
    write_wav(audio / "noise0.wav", Waveform(0.05 * rng.standard_normal(4000)))
    write_wav(audio / "noise1.wav", Waveform(0.05 * rng.standard_normal(9000)))

    lines = [
        {
            "kind": "header",
            "seed": 7,
            "reverb_fraction": 0.5,
            "snr_grid_db": [0, 5, 10, 15, 20],
            "max_image_order": 2,
        },
        {"clean": "audio/clean0.wav", "noise": "audio/noise0.wav", "split": "train"},
        {"clean": "audio/clean1.wav", "noise": "audio/noise1.wav", "split": "train"},
        {"clean": "audio/clean2.wav", "noise": "audio/noise0.wav", "split": "val"},
        {"clean": "audio/clean3.wav", "noise": "audio/noise1.wav", "split": "test", "snr_db": 3},
    ]
    path = tmp_path / "manifest.jsonl"
    path.write_text("\n".join(json.dumps(line) for line in lines) + "\n", encoding="utf-8")
    return path
