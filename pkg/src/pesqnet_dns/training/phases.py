"""Plateau-scheduled training phases: pre-training and stage-1 fine-tuning.

Each phase trains one model with Adam, halves the learning rate on validation
plateaus, stops below the phase's stop rate and keeps the best-validation
weights. The other model, if any, stays fixed.
"""

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from pesqnet_dns.core.models import ComplexSpectrogram, NormStats, Waveform
from pesqnet_dns.core.settings import PhaseConfig, RunConfig
from pesqnet_dns.data.batching import (
    Minibatch,
    ScoredBatch,
    ScoredUtterance,
    TrainingCorpus,
    UtteranceSpectra,
    complex_dtype,
    make_minibatches,
    make_scored_batches,
)
from pesqnet_dns.dsp.frontend import DEFAULT_STFT, fit_length, istft_ola
from pesqnet_dns.error_handling import (
    MissingPrerequisiteError,
    ProtocolViolationError,
    TrainingDivergenceError,
)
from pesqnet_dns.models.fcrn import Fcrn, build_fcrn, enhance_spectrum, stats_for
from pesqnet_dns.models.normalization import compute_norm_stats
from pesqnet_dns.models.pesqnet import PesqNet, build_pesqnet
from pesqnet_dns.oracle.quality import QualityOracle
from pesqnet_dns.training.checkpoint import (
    DNS_PRETRAINED,
    DNS_STAGE1,
    PESQNET_PRETRAINED,
    PESQNET_STAGE1,
    load_fcrn,
    load_pesqnet,
    load_train_state,
    parameter_digest,
    save_checkpoint,
    save_train_state,
    state_path,
)
from pesqnet_dns.training.losses import loss_mse, loss_pesq
from pesqnet_dns.training.schedule import PlateauSchedule, make_adam

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    """One row of a phase's training history; epoch 0 is the untrained model."""

    epoch: int
    train_loss: float
    val_loss: float
    lr: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "lr": self.lr,
        }


@dataclass
class PhaseResult:
    """Outcome of a plateau-scheduled phase."""

    name: str
    history: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    checkpoint: Optional[Path] = None


def model_dtype(model: nn.Module) -> torch.dtype:
    """Floating dtype of a model's parameters."""
    return next(model.parameters()).dtype


def _weighted_mean(values: Sequence[Tuple[float, int]]) -> float:
    total = sum(n for _, n in values)
    return sum(v * n for v, n in values) / max(total, 1)


def _check_finite(value: float, phase: str, epoch: int, what: str, minibatch: Optional[int] = None) -> None:
    if not np.isfinite(value):
        raise TrainingDivergenceError(
            f"non-finite {what} in {phase}", phase=phase, epoch=epoch, minibatch=minibatch
        )


def run_plateau_phase(
    name: str,
    model: nn.Module,
    phase: PhaseConfig,
    make_batches: Callable[[int], Sequence[Any]],
    batch_loss: Callable[[Any], torch.Tensor],
    validate: Callable[[], float],
    save_best: Callable[[nn.Module, "PhaseResult"], Path],
    state_file: Optional[Path] = None,
    resume: bool = False,
    grad_clip: Optional[float] = None,
) -> PhaseResult:
    """Train ``model`` until the schedule stops, then save the best weights.

    ``make_batches(epoch)`` yields the minibatches of an epoch (each with an
    ``index``), ``batch_loss`` returns a differentiable minibatch loss and
    ``validate`` the validation loss of the current weights.

    Raises:
        TrainingDivergenceError: On a non-finite training or validation loss.
    """
    optimizer = make_adam(model.parameters(), phase.lr)
    schedule = PlateauSchedule.from_phase(optimizer, phase)
    result = PhaseResult(name=name)
    best_state: Dict[str, torch.Tensor]
    start = 1
    done = False

    saved = load_train_state(state_file) if (resume and state_file is not None) else None
    if saved is not None:
        model.load_state_dict(saved["model"])
        optimizer.load_state_dict(saved["optimizer"])
        schedule.load_state_dict(saved["scheduler"])
        best_state = saved["best_model"]
        result.history = [EpochRecord(**row) for row in saved["history"]]
        result.best_epoch = int(saved["best_epoch"])
        result.best_val_loss = float(saved["best_val_loss"])
        start = int(saved["epoch"]) + 1
        done = bool(saved["done"])
        logger.info("Resuming %s after epoch %d", name, start - 1)
    else:
        with torch.no_grad():
            train0 = _weighted_mean(
                [(float(batch_loss(b)), len(b.uids)) for b in make_batches(0)]
            )
        val0 = validate()
        _check_finite(val0, name, 0, "validation loss")
        schedule.set_baseline(val0)
        result.history.append(EpochRecord(0, train0, val0, schedule.lr))
        result.best_val_loss = val0
        best_state = copy.deepcopy(model.state_dict())
        logger.info("%s epoch 0: train %.5g, val %.5g", name, train0, val0)

    epoch = start
    while not done and not schedule.should_stop(epoch - 1):
        model.train()
        losses: List[Tuple[float, int]] = []
        for batch in make_batches(epoch):
            optimizer.zero_grad(set_to_none=True)
            loss = batch_loss(batch)
            value = float(loss.detach())
            _check_finite(value, name, epoch, "training loss", batch.index)
            loss.backward()
            if grad_clip is not None:
                nn.utils.clip_grad_norm_(model.parameters(), grad_clip)
            optimizer.step()
            losses.append((value, len(batch.uids)))
            logger.debug("%s epoch %d minibatch %d: %.5g", name, epoch, batch.index, value)

        train_loss = _weighted_mean(losses)
        val_loss = validate()
        _check_finite(val_loss, name, epoch, "validation loss")
        lr = schedule.lr
        schedule.step(val_loss)
        result.history.append(EpochRecord(epoch, train_loss, val_loss, lr))
        if val_loss < result.best_val_loss:
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
        logger.info(
            "%s epoch %d: train %.5g, val %.5g, lr %.3g", name, epoch, train_loss, val_loss, lr
        )
        done = schedule.should_stop(epoch)
        if state_file is not None:
            save_train_state(
                state_file,
                {
                    "model": model.state_dict(),
                    "optimizer": optimizer.state_dict(),
                    "scheduler": schedule.state_dict(),
                    "best_model": best_state,
                    "history": [r.to_dict() for r in result.history],
                    "best_epoch": result.best_epoch,
                    "best_val_loss": result.best_val_loss,
                    "epoch": epoch,
                    "done": done,
                },
            )
        epoch += 1

    model.load_state_dict(best_state)
    result.checkpoint = save_best(model, result)
    logger.info(
        "%s finished: best val %.5g at epoch %d -> %s",
        name,
        result.best_val_loss,
        result.best_epoch,
        result.checkpoint,
    )
    return result


def dns_batch_loss(
    model: Fcrn, stats: NormStats, beta: float
) -> Callable[[Minibatch], torch.Tensor]:
    """J_mse of a minibatch under ``model``."""
    mean, std = stats_for(model, stats)

    def _loss(batch: Minibatch) -> torch.Tensor:
        s_hat = enhance_spectrum(model, batch.noisy, mean, std)
        return loss_mse(s_hat, batch.clean, batch.reverb, beta, batch.frame_mask)

    return _loss


def dns_validation_loss(
    model: Fcrn,
    stats: NormStats,
    spectra: Sequence[UtteranceSpectra],
    beta: float,
    batch_size: int = 3,
) -> float:
    """Utterance-mean J_mse on ``spectra``."""
    loss = dns_batch_loss(model, stats, beta)
    model.eval()
    with torch.no_grad():
        return _weighted_mean(
            [
                (float(loss(b)), len(b.uids))
                for b in make_minibatches(spectra, batch_size, dtype=model_dtype(model))
            ]
        )


def pesqnet_batch_loss(model: PesqNet) -> Callable[[ScoredBatch], torch.Tensor]:
    """J_pesq of a minibatch under ``model``."""

    def _loss(batch: ScoredBatch) -> torch.Tensor:
        return loss_pesq(model(batch.amp, batch.lengths), batch.targets)

    return _loss


def pesqnet_validation_loss(
    model: PesqNet, items: Sequence[ScoredUtterance], batch_size: int = 3
) -> float:
    """Utterance-mean J_pesq on ``items``."""
    loss = pesqnet_batch_loss(model)
    model.eval()
    with torch.no_grad():
        return _weighted_mean(
            [
                (float(loss(b)), len(b.uids))
                for b in make_scored_batches(items, batch_size, dtype=model_dtype(model))
            ]
        )


def enhance_corpus(
    model: Fcrn, stats: NormStats, spectra: Sequence[UtteranceSpectra]
) -> List[Tuple[np.ndarray, Waveform]]:
    """Enhanced spectrum and waveform of every utterance; ``model`` is not changed."""
    dtype = model_dtype(model)
    mean, std = stats_for(model, stats)
    model.eval()
    out = []
    with torch.no_grad():
        for item in spectra:
            noisy = torch.as_tensor(item.noisy).to(complex_dtype(dtype))[None]
            s_hat = enhance_spectrum(model, noisy, mean, std)[0].cpu().numpy()
            s_hat = s_hat.astype(np.complex128)
            wave = istft_ola(ComplexSpectrogram(s_hat, DEFAULT_STFT), DEFAULT_STFT)
            out.append((s_hat, fit_length(wave, len(item.record.clean))))
    return out


def score_corpus(
    model: Fcrn,
    stats: NormStats,
    spectra: Sequence[UtteranceSpectra],
    oracle: QualityOracle,
) -> List[ScoredUtterance]:
    """PESQNet training targets: oracle scores of DNS-enhanced utterances.

    The reference is the dry clean speech of each record.
    """
    enhanced = enhance_corpus(model, stats, spectra)
    scores = oracle.score_many(
        [(wave, item.record.clean) for (_, wave), item in zip(enhanced, spectra)]
    )
    return [
        ScoredUtterance(uid=item.uid, amp=np.abs(spec), target=float(score))
        for (spec, _), item, score in zip(enhanced, spectra, scores)
    ]


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise MissingPrerequisiteError(f"{what} checkpoint not found: {path}", path=str(path))
    return path


def _extra(result: PhaseResult) -> Dict[str, Any]:
    return {
        "phase": result.name,
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
    }


def train_dns_phase(
    name: str,
    model: Fcrn,
    stats: NormStats,
    corpus: TrainingCorpus,
    phase: PhaseConfig,
    config: RunConfig,
    checkpoint: Path,
    resume: bool = False,
) -> PhaseResult:
    """DNS training on J_mse with beta from ``phase`` (0 if unset)."""
    beta = phase.beta if phase.beta is not None else 0.0
    batch_size = config.corpus.batch_size
    dtype = model_dtype(model)

    def _save(m: nn.Module, result: PhaseResult) -> Path:
        return save_checkpoint(checkpoint, m, "fcrn", config.fcrn, stats, _extra(result))

    return run_plateau_phase(
        name,
        model,
        phase,
        make_batches=lambda epoch: make_minibatches(
            corpus.train, batch_size, seed=config.seed, epoch=epoch, dtype=dtype
        ),
        batch_loss=dns_batch_loss(model, stats, beta),
        validate=lambda: dns_validation_loss(model, stats, corpus.val, beta, batch_size),
        save_best=_save,
        state_file=state_path(checkpoint),
        resume=resume,
        grad_clip=config.grad_clip,
    )


def train_pesqnet_phase(
    name: str,
    model: PesqNet,
    dns: Fcrn,
    stats: NormStats,
    corpus: TrainingCorpus,
    oracle: QualityOracle,
    phase: PhaseConfig,
    config: RunConfig,
    checkpoint: Path,
    resume: bool = False,
) -> PhaseResult:
    """PESQNet training on J_pesq against a fixed DNS.

    Raises:
        ProtocolViolationError: If the DNS parameters changed during the phase.
    """
    dns_digest = parameter_digest(dns)
    train_items = score_corpus(dns, stats, corpus.train, oracle)
    val_items = score_corpus(dns, stats, corpus.val, oracle)
    logger.info(
        "%s targets: mean oracle score %.3f (train), %.3f (val)",
        name,
        float(np.mean([it.target for it in train_items])),
        float(np.mean([it.target for it in val_items])),
    )
    batch_size = config.corpus.batch_size
    dtype = model_dtype(model)

    def _save(m: nn.Module, result: PhaseResult) -> Path:
        return save_checkpoint(
            checkpoint, m, "pesqnet", config.pesqnet, extra={**_extra(result), "dns": dns_digest}
        )

    result = run_plateau_phase(
        name,
        model,
        phase,
        make_batches=lambda epoch: make_scored_batches(
            train_items, batch_size, seed=config.seed, epoch=epoch, dtype=dtype
        ),
        batch_loss=pesqnet_batch_loss(model),
        validate=lambda: pesqnet_validation_loss(model, val_items, batch_size),
        save_best=_save,
        state_file=state_path(checkpoint),
        resume=resume,
        grad_clip=config.grad_clip,
    )
    if parameter_digest(dns) != dns_digest:
        raise ProtocolViolationError(
            f"{name} changed the fixed DNS", phase=name, expected=dns_digest
        )
    return result


def pretrain_dns(
    corpus: TrainingCorpus, config: RunConfig, resume: bool = False
) -> PhaseResult:
    """Pre-train the FCRN from scratch on the no-reverb corpus."""
    if any(s.record.is_reverberant for s in corpus.train):
        logger.warning("DNS pre-training corpus contains reverberant records")
    stats = compute_norm_stats(s.noisy for s in corpus.train)
    model = build_fcrn(config.fcrn, seed=config.seed)
    return train_dns_phase(
        "pretrain_dns",
        model,
        stats,
        corpus,
        config.pretrain_dns,
        config,
        config.checkpoints / DNS_PRETRAINED,
        resume,
    )


def pretrain_pesqnet(
    corpus: TrainingCorpus,
    config: RunConfig,
    oracle: QualityOracle,
    resume: bool = False,
) -> PhaseResult:
    """Pre-train PESQNet on oracle scores of the pre-trained DNS's outputs.

    Raises:
        MissingPrerequisiteError: If the pre-trained DNS is missing.
    """
    dns, stats, _ = load_fcrn(
        _require(config.checkpoints / DNS_PRETRAINED, "pre-trained DNS"), config.fcrn
    )
    model = build_pesqnet(config.pesqnet, seed=config.seed + 1)
    return train_pesqnet_phase(
        "pretrain_pesqnet",
        model,
        dns,
        stats,
        corpus,
        oracle,
        config.pretrain_pesqnet,
        config,
        config.checkpoints / PESQNET_PRETRAINED,
        resume,
    )


def finetune_stage1(
    corpus: TrainingCorpus,
    config: RunConfig,
    oracle: QualityOracle,
    resume: bool = False,
) -> Tuple[PhaseResult, PhaseResult]:
    """Adapt the DNS to the mixed corpus, then PESQNet to the adapted DNS.

    The DNS keeps the normalization statistics of pre-training.

    Raises:
        MissingPrerequisiteError: If a pre-trained checkpoint is missing.
    """
    dns_path = _require(config.checkpoints / DNS_PRETRAINED, "pre-trained DNS")
    pesqnet_path = _require(config.checkpoints / PESQNET_PRETRAINED, "pre-trained PESQNet")

    dns, stats, _ = load_fcrn(dns_path, config.fcrn)
    dns_result = train_dns_phase(
        "finetune1_dns",
        dns,
        stats,
        corpus,
        config.finetune_dns,
        config,
        config.checkpoints / DNS_STAGE1,
        resume,
    )

    adapted, stats, _ = load_fcrn(config.checkpoints / DNS_STAGE1, config.fcrn)
    pesqnet, _ = load_pesqnet(pesqnet_path, config.pesqnet)
    pesqnet_result = train_pesqnet_phase(
        "finetune1_pesqnet",
        pesqnet,
        adapted,
        stats,
        corpus,
        oracle,
        config.finetune_pesqnet,
        config,
        config.checkpoints / PESQNET_STAGE1,
        resume,
    )
    return dns_result, pesqnet_result
