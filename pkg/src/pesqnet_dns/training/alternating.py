"""Stage-2 alternating fine-tuning with PESQNet as the mediating loss.

Epochs alternate between the two networks. In odd epochs the DNS learns
through a frozen PESQNet: minibatch gradients of J_total are accumulated and
averaged, and the DNS takes a single optimizer step at the end of the epoch.
In even epochs PESQNet learns, with per-minibatch updates, to track fresh
oracle scores of the frozen DNS's outputs. Learning rates are fixed.
"""

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from pesqnet_dns.core.models import PESQ_MAX, CurvePoint, NormStats
from pesqnet_dns.core.settings import RunConfig, Stage2Config
from pesqnet_dns.data.batching import (
    TrainingCorpus,
    UtteranceSpectra,
    make_minibatches,
    make_scored_batches,
)
from pesqnet_dns.error_handling import MissingPrerequisiteError, ProtocolViolationError
from pesqnet_dns.models.fcrn import Fcrn, enhance_spectrum, stats_for
from pesqnet_dns.models.pesqnet import PesqNet
from pesqnet_dns.oracle.quality import QualityOracle
from pesqnet_dns.training.accumulation import GradientAccumulator
from pesqnet_dns.training.checkpoint import (
    DNS_STAGE1,
    PESQNET_STAGE1,
    load_fcrn,
    load_pesqnet,
    parameter_digest,
    save_checkpoint,
    stage2_names,
)
from pesqnet_dns.training.losses import loss_mse, loss_pesq, loss_pesqnet, loss_total
from pesqnet_dns.training.phases import (
    dns_validation_loss,
    model_dtype,
    score_corpus,
)
from pesqnet_dns.training.schedule import make_adam

logger = logging.getLogger(__name__)


@dataclass
class Stage2Result:
    """Curves, update counts and the selected model pair of a stage-2 run."""

    alpha: float
    curves: List[CurvePoint] = field(default_factory=list)
    selection: List[Tuple[int, float]] = field(default_factory=list)
    dns_epoch_losses: Dict[int, Tuple[float, float]] = field(default_factory=dict)
    best_tau: int = 0
    best_val_loss: float = float("inf")
    dns_updates: int = 0
    pesqnet_updates: int = 0
    best_dns_state: Optional[Dict[str, torch.Tensor]] = None
    best_pesqnet_state: Optional[Dict[str, torch.Tensor]] = None
    dns_checkpoint: Optional[Path] = None
    pesqnet_checkpoint: Optional[Path] = None


class ParameterAudit:
    """Hashes both parameter sets and checks that the frozen one never moves."""

    def __init__(self, dns: Fcrn, pesqnet: PesqNet, enabled: bool) -> None:
        self.dns = dns
        self.pesqnet = pesqnet
        self.enabled = enabled
        self.reference: Dict[str, str] = {}

    def begin(self) -> None:
        if self.enabled:
            self.reference = {
                "dns": parameter_digest(self.dns),
                "pesqnet": parameter_digest(self.pesqnet),
            }

    def check(self, frozen: str, tau: int, minibatch: Optional[int] = None) -> None:
        """Raise if ``frozen`` ("dns" or "pesqnet") changed since :meth:`begin`."""
        if not self.enabled:
            return
        model = self.dns if frozen == "dns" else self.pesqnet
        if parameter_digest(model) != self.reference[frozen]:
            raise ProtocolViolationError(
                f"{frozen} parameters changed while frozen", tau=tau, minibatch=minibatch
            )


def monitor_subset(spectra: Sequence[UtteranceSpectra], count: int) -> List[UtteranceSpectra]:
    """First ``count`` utterances by id, or all of them when ``count`` is 0."""
    ordered = sorted(spectra, key=lambda s: s.uid)
    return ordered if count == 0 else ordered[:count]


def oracle_selection_loss(
    dns: Fcrn,
    stats: NormStats,
    spectra: Sequence[UtteranceSpectra],
    oracle: QualityOracle,
    alpha: float,
    beta: float,
    batch_size: int = 3,
) -> float:
    """J_total on ``spectra`` with oracle scores in place of PESQNet estimates."""
    j_mse = dns_validation_loss(dns, stats, spectra, beta, batch_size)
    scored = score_corpus(dns, stats, spectra, oracle)
    scores = torch.tensor([it.target for it in scored], dtype=torch.float64)
    return float(loss_total(j_mse, float(loss_pesqnet(scores)), alpha))


def curve_point(
    tau: int,
    dns: Fcrn,
    stats: NormStats,
    pesqnet: PesqNet,
    spectra: Sequence[UtteranceSpectra],
    oracle: QualityOracle,
    alpha: float,
    beta: float,
    batch_size: int = 3,
) -> CurvePoint:
    """J_total as the DNS sees it, PESQNet MAE and mean oracle score on ``spectra``."""
    scored = score_corpus(dns, stats, spectra, oracle)
    dtype = model_dtype(pesqnet)
    pesqnet.eval()
    with torch.no_grad():
        estimates: List[float] = []
        order: List[str] = []
        for batch in make_scored_batches(scored, batch_size, dtype=dtype):
            estimates.extend(float(v) for v in pesqnet(batch.amp, batch.lengths))
            order.extend(batch.uids)
    by_uid = dict(zip(order, estimates))
    pesq_hat = np.array([by_uid[it.uid] for it in scored])
    targets = np.array([it.target for it in scored])
    j_mse = dns_validation_loss(dns, stats, spectra, beta, batch_size)
    j_pesqnet = float(np.mean((pesq_hat - PESQ_MAX) ** 2))
    return CurvePoint(
        tau=tau,
        j_total=float(loss_total(j_mse, j_pesqnet, alpha)),
        mae=float(np.mean(np.abs(pesq_hat - targets))),
        mean_oracle_score=float(np.mean(targets)),
    )


def run_alternating(
    dns: Fcrn,
    stats: NormStats,
    pesqnet: PesqNet,
    corpus: TrainingCorpus,
    oracle: QualityOracle,
    stage2: Stage2Config,
    batch_size: int = 3,
    seed: int = 0,
) -> Stage2Result:
    """Alternate DNS and PESQNet epochs for ``stage2.epochs`` epochs.

    The selected DNS is the one with the lowest oracle-substituted validation
    J_total among tau = 0 and every odd epoch; its partner is the PESQNet that
    was current at that point. On return both models hold the selected weights.

    Raises:
        TrainingDivergenceError: On a non-finite loss or accumulated gradient.
        ProtocolViolationError: If audit is on and a frozen model changed.
    """
    weights = stage2.loss_weights
    alpha, beta = weights.alpha, weights.beta
    dns_params = list(dns.parameters())
    pesqnet_params = list(pesqnet.parameters())
    dns_opt = make_adam(dns_params, stage2.dns_lr)
    pesqnet_opt = make_adam(pesqnet_params, stage2.pesqnet_lr)
    mean, std = stats_for(dns, stats)
    dtype = model_dtype(dns)
    monitor = monitor_subset(corpus.train, stage2.monitor_utterances)
    audit = ParameterAudit(dns, pesqnet, stage2.audit)
    result = Stage2Result(alpha=alpha)

    def _select(tau: int) -> None:
        val = oracle_selection_loss(dns, stats, corpus.val, oracle, alpha, beta, batch_size)
        result.selection.append((tau, val))
        if val < result.best_val_loss:
            result.best_val_loss = val
            result.best_tau = tau
            result.best_dns_state = copy.deepcopy(dns.state_dict())
            result.best_pesqnet_state = copy.deepcopy(pesqnet.state_dict())
        logger.info("Stage 2 tau=%d selection loss %.5g", tau, val)

    def _record(tau: int) -> None:
        point = curve_point(tau, dns, stats, pesqnet, monitor, oracle, alpha, beta, batch_size)
        result.curves.append(point)
        logger.info(
            "Stage 2 tau=%d: J_total %.5g, MAE %.4f, mean oracle %.4f",
            tau,
            point.j_total,
            point.mae,
            point.mean_oracle_score,
        )

    _record(0)
    _select(0)

    for tau in range(1, stage2.epochs + 1):
        audit.begin()
        if tau % 2 == 1:
            dns.train()
            pesqnet.eval()
            pesqnet.requires_grad_(False)
            accumulator = GradientAccumulator(dns_params, tau)
            totals: List[float] = []
            mses: List[float] = []
            batches = make_minibatches(
                corpus.train, batch_size, seed=seed, epoch=tau, dtype=dtype
            )
            for batch in batches:
                s_hat = enhance_spectrum(dns, batch.noisy, mean, std)
                j_mse = loss_mse(s_hat, batch.clean, batch.reverb, beta, batch.frame_mask)
                j_pesqnet = loss_pesqnet(pesqnet(s_hat.abs(), batch.lengths))
                j_total = loss_total(j_mse, j_pesqnet, alpha)
                accumulator.add(j_total, batch.index)
                totals.append(float(j_total.detach()))
                mses.append(float(j_mse.detach()))
                audit.check("dns", tau, batch.index)
                audit.check("pesqnet", tau, batch.index)
                logger.debug("tau=%d minibatch %d: J_total %.5g", tau, batch.index, totals[-1])
            accumulator.apply(dns_opt)
            pesqnet.requires_grad_(True)
            audit.check("pesqnet", tau)
            result.dns_updates += 1
            result.dns_epoch_losses[tau] = (float(np.mean(totals)), float(np.mean(mses)))
        else:
            pesqnet.train()
            items = score_corpus(dns, stats, corpus.train, oracle)
            losses: List[float] = []
            scored_batches = make_scored_batches(
                items, batch_size, seed=seed, epoch=tau, dtype=dtype
            )
            for batch in scored_batches:
                pesqnet_opt.zero_grad(set_to_none=True)
                loss = loss_pesq(pesqnet(batch.amp, batch.lengths), batch.targets)
                loss.backward()
                pesqnet_opt.step()
                losses.append(float(loss.detach()))
                result.pesqnet_updates += 1
                audit.check("dns", tau, batch.index)
            logger.debug("tau=%d PESQNet loss %.5g", tau, float(np.mean(losses)))

        _record(tau)
        if tau % 2 == 1:
            _select(tau)

    dns.load_state_dict(result.best_dns_state)
    pesqnet.load_state_dict(result.best_pesqnet_state)
    logger.info(
        "Stage 2 done: %d DNS and %d PESQNet updates, selected tau=%d",
        result.dns_updates,
        result.pesqnet_updates,
        result.best_tau,
    )
    return result


def finetune_stage2_alternating(
    corpus: TrainingCorpus,
    config: RunConfig,
    oracle: QualityOracle,
    alpha: Optional[float] = None,
) -> Stage2Result:
    """Load the stage-1 pair, run the alternating protocol and save the selection.

    Raises:
        MissingPrerequisiteError: If a stage-1 checkpoint is missing.
    """
    stage2 = config.stage2
    if alpha is not None:
        stage2 = stage2.model_copy(update={"alpha": alpha})
    for name in (DNS_STAGE1, PESQNET_STAGE1):
        path = config.checkpoints / name
        if not path.is_file():
            raise MissingPrerequisiteError(f"stage-1 checkpoint not found: {path}", path=str(path))

    dns, stats, _ = load_fcrn(config.checkpoints / DNS_STAGE1, config.fcrn)
    pesqnet, _ = load_pesqnet(config.checkpoints / PESQNET_STAGE1, config.pesqnet)
    result = run_alternating(
        dns, stats, pesqnet, corpus, oracle, stage2, config.corpus.batch_size, config.seed
    )

    dns_name, pesqnet_name = stage2_names(stage2.alpha)
    extra = {"alpha": stage2.alpha, "best_tau": result.best_tau, "best_val_loss": result.best_val_loss}
    result.dns_checkpoint = save_checkpoint(
        config.checkpoints / dns_name, dns, "fcrn", config.fcrn, stats, extra
    )
    result.pesqnet_checkpoint = save_checkpoint(
        config.checkpoints / pesqnet_name, pesqnet, "pesqnet", config.pesqnet, extra=extra
    )
    return result
