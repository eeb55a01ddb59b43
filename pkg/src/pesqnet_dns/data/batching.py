"""Spectra preparation and length-bucketed minibatches."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from pesqnet_dns.core.models import StftConfig, UtteranceRecord
from pesqnet_dns.core.settings import CorpusSettings
from pesqnet_dns.dsp.frontend import DEFAULT_STFT, stft
from pesqnet_dns.error_handling import CorpusError

logger = logging.getLogger(__name__)


@dataclass
class UtteranceSpectra:
    """Noisy, clean and reverberated-clean spectra of one record."""

    record: UtteranceRecord
    noisy: np.ndarray
    clean: np.ndarray
    reverb: np.ndarray

    @property
    def uid(self) -> str:
        """Record id."""
        return self.record.uid

    @property
    def num_frames(self) -> int:
        """Frame count L."""
        return int(self.noisy.shape[0])


def prepare_spectra(
    records: Sequence[UtteranceRecord], cfg: StftConfig = DEFAULT_STFT
) -> List[UtteranceSpectra]:
    """STFT of the mixture, clean and reverberated-clean components."""
    return [
        UtteranceSpectra(
            record=r,
            noisy=stft(r.mixture, cfg).data,
            clean=stft(r.clean, cfg).data,
            reverb=stft(r.reverberated_clean, cfg).data,
        )
        for r in records
    ]


@dataclass
class TrainingCorpus:
    """Training and validation spectra."""

    train: List[UtteranceSpectra]
    val: List[UtteranceSpectra] = field(default_factory=list)

    @classmethod
    def from_records(
        cls,
        records: Sequence[UtteranceRecord],
        settings: Optional[CorpusSettings] = None,
        reverberant: Optional[bool] = None,
    ) -> "TrainingCorpus":
        """Split by record split; ``reverberant`` filters on the reverb condition.

        Raises:
            CorpusError: If no training records remain.
        """
        settings = settings or CorpusSettings()
        if reverberant is not None:
            records = [r for r in records if r.is_reverberant == reverberant]
        train = [r for r in records if r.split == settings.train_split]
        val = [r for r in records if r.split == settings.val_split]
        if not train:
            raise CorpusError(
                "no training records", split=settings.train_split, reverberant=reverberant
            )
        if not val:
            logger.warning("No validation records; validating on the training split")
            val = train
        return cls(prepare_spectra(train), prepare_spectra(val))


@dataclass
class Minibatch:
    """Zero-padded complex spectra with a frame-validity mask."""

    index: int
    uids: List[str]
    noisy: torch.Tensor
    clean: torch.Tensor
    reverb: torch.Tensor
    frame_mask: torch.Tensor
    lengths: List[int]
    items: List[UtteranceSpectra]


def pad_stack(arrays: Sequence[np.ndarray], dtype: torch.dtype) -> torch.Tensor:
    """Stack (L_i, K) arrays into (B, max L, K), zero-padding along time."""
    frames = max(a.shape[0] for a in arrays)
    out = np.zeros((len(arrays), frames) + arrays[0].shape[1:], dtype=arrays[0].dtype)
    for i, a in enumerate(arrays):
        out[i, : a.shape[0]] = a
    return torch.as_tensor(out).to(dtype)


def complex_dtype(real_dtype: torch.dtype) -> torch.dtype:
    """Complex counterpart of a real floating dtype."""
    return torch.complex128 if real_dtype == torch.float64 else torch.complex64


def collate(
    items: Sequence[UtteranceSpectra], index: int = 0, dtype: torch.dtype = torch.float32
) -> Minibatch:
    """Build a minibatch from utterances."""
    cdtype = complex_dtype(dtype)
    lengths = [it.num_frames for it in items]
    frames = max(lengths)
    mask = torch.zeros(len(items), frames, dtype=torch.bool)
    for i, n in enumerate(lengths):
        mask[i, :n] = True
    return Minibatch(
        index=index,
        uids=[it.uid for it in items],
        noisy=pad_stack([it.noisy for it in items], cdtype),
        clean=pad_stack([it.clean for it in items], cdtype),
        reverb=pad_stack([it.reverb for it in items], cdtype),
        frame_mask=mask,
        lengths=lengths,
        items=list(items),
    )


def bucket_batches(
    keys: Sequence[Tuple[int, str]],
    batch_size: int = 3,
    seed: Optional[int] = None,
    epoch: int = 0,
) -> List[Tuple[int, List[int]]]:
    """Group item indices by (frames, uid) and order the groups for one epoch.

    The grouping depends only on the items; the order is drawn from
    ``(seed, epoch)`` when a seed is given and kept sorted otherwise.

    Returns:
        List of (batch id, member indices).
    """
    ordered = sorted(range(len(keys)), key=lambda i: keys[i])
    groups = [ordered[i : i + batch_size] for i in range(0, len(ordered), batch_size)]
    order = np.arange(len(groups))
    if seed is not None:
        order = np.random.default_rng([seed, epoch]).permutation(len(groups))
    return [(int(g), groups[g]) for g in order]


def make_minibatches(
    spectra: Sequence[UtteranceSpectra],
    batch_size: int = 3,
    seed: Optional[int] = None,
    epoch: int = 0,
    dtype: torch.dtype = torch.float32,
) -> List[Minibatch]:
    """Length-bucketed minibatches of spectra, see :func:`bucket_batches`."""
    keys = [(s.num_frames, s.uid) for s in spectra]
    return [
        collate([spectra[i] for i in members], index=g, dtype=dtype)
        for g, members in bucket_batches(keys, batch_size, seed, epoch)
    ]


@dataclass
class ScoredUtterance:
    """Enhanced amplitude spectrogram with its oracle score."""

    uid: str
    amp: np.ndarray
    target: float

    @property
    def num_frames(self) -> int:
        """Frame count L."""
        return int(self.amp.shape[0])


@dataclass
class ScoredBatch:
    """Zero-padded amplitudes with targets for PESQNet training."""

    index: int
    uids: List[str]
    amp: torch.Tensor
    lengths: List[int]
    targets: torch.Tensor


def make_scored_batches(
    items: Sequence[ScoredUtterance],
    batch_size: int = 3,
    seed: Optional[int] = None,
    epoch: int = 0,
    dtype: torch.dtype = torch.float32,
) -> List[ScoredBatch]:
    """Length-bucketed PESQNet minibatches."""
    keys = [(it.num_frames, it.uid) for it in items]
    batches = []
    for g, members in bucket_batches(keys, batch_size, seed, epoch):
        group = [items[i] for i in members]
        batches.append(
            ScoredBatch(
                index=g,
                uids=[it.uid for it in group],
                amp=pad_stack([it.amp for it in group], dtype),
                lengths=[it.num_frames for it in group],
                targets=torch.tensor([it.target for it in group], dtype=dtype),
            )
        )
    return batches
