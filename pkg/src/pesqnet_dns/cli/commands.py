"""Subcommand implementations.

Every command validates its inputs, records the resolved config in each
artifact directory it writes to, and raises a :class:`PesqnetDnsError`
subclass on failure.
"""

import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from rich.console import Console

from pesqnet_dns.core.models import NormStats, UtteranceRecord
from pesqnet_dns.core.settings import ResolvedConfigStore, RunConfig
from pesqnet_dns.data.batching import TrainingCorpus
from pesqnet_dns.data.corpus import INDEX_FILE, build_corpus, corpus_digest, load_corpus
from pesqnet_dns.dsp.audio_io import read_wav, write_wav
from pesqnet_dns.error_handling import CorpusError, MissingPrerequisiteError
from pesqnet_dns.evaluation.report import (
    build_report,
    curves_export,
    history_export,
    scatter_export,
)
from pesqnet_dns.models.fcrn import Fcrn, build_fcrn, enhance_utterance
from pesqnet_dns.models.pesqnet import PesqNet
from pesqnet_dns.oracle.quality import build_oracle
from pesqnet_dns.training.alternating import finetune_stage2_alternating
from pesqnet_dns.training.checkpoint import (
    DNS_PRETRAINED,
    DNS_STAGE1,
    PESQNET_PRETRAINED,
    PESQNET_STAGE1,
    load_fcrn,
    load_pesqnet,
    stage2_names,
)
from pesqnet_dns.training.phases import (
    PhaseResult,
    finetune_stage1,
    pretrain_dns,
    pretrain_pesqnet,
)
from pesqnet_dns.ui.report_views import ReportViewsController

logger = logging.getLogger(__name__)

CommandHandler = Callable[[RunConfig, Console], None]


def record_config(config: RunConfig, run: str, *directories: Path) -> None:
    """Store the resolved config of ``run`` in every artifact directory.

    All directories are checked before any is written.
    """
    stores = [ResolvedConfigStore(d) for d in directories]
    for store in stores:
        store.check(run, config, force=config.force)
    for store in stores:
        store.record(run, config, force=True)


def training_records(config: RunConfig) -> List[UtteranceRecord]:
    """Records of the synthesized corpus.

    Raises:
        MissingPrerequisiteError: If ``synth`` has not been run.
    """
    index = config.corpus_dir / INDEX_FILE
    if not index.is_file():
        raise MissingPrerequisiteError(
            f"no synthesized corpus at {config.corpus_dir}; run synth first", path=str(index)
        )
    return load_corpus(config.corpus_dir)


def latest_checkpoints(config: RunConfig) -> Tuple[Path, Path]:
    """Most advanced (DNS, PESQNet) pair: stage 2, then stage 1, then pre-trained.

    Raises:
        MissingPrerequisiteError: If no complete pair exists.
    """
    candidates = [
        stage2_names(config.stage2.alpha),
        (DNS_STAGE1, PESQNET_STAGE1),
        (DNS_PRETRAINED, PESQNET_PRETRAINED),
    ]
    for dns_name, pesqnet_name in candidates:
        dns_path = config.checkpoints / dns_name
        pesqnet_path = config.checkpoints / pesqnet_name
        if dns_path.is_file() and pesqnet_path.is_file():
            return dns_path, pesqnet_path
    raise MissingPrerequisiteError(
        f"no trained DNS/PESQNet pair in {config.checkpoints}",
        path=str(config.checkpoints),
        expected=[name for pair in candidates for name in pair],
    )


def load_models(config: RunConfig) -> Tuple[Fcrn, NormStats, PesqNet]:
    """Load the most advanced checkpoint pair."""
    dns_path, pesqnet_path = latest_checkpoints(config)
    logger.info("Using %s and %s", dns_path.name, pesqnet_path.name)
    dns, stats, _ = load_fcrn(dns_path, config.fcrn)
    pesqnet, _ = load_pesqnet(pesqnet_path, config.pesqnet)
    return dns, stats, pesqnet


def _show_phase(result: PhaseResult, config: RunConfig, console: Console) -> None:
    history_export(result.history, config.outputs / f"history_{result.name}.csv")
    ReportViewsController(console).display_history(
        result.name, result.history, result.best_epoch
    )


def cmd_synth(config: RunConfig, console: Console) -> None:
    """Synthesize the corpus described by the manifest."""
    out_dir = config.corpus_dir
    record_config(config, "synth", out_dir)
    records = build_corpus(config.resolve(config.corpus.manifest), out_dir, config.workers)
    reverberant = sum(r.is_reverberant for r in records)
    console.print(
        f"Synthesized {len(records)} utterances ({reverberant} reverberant) "
        f"into {out_dir}, digest {corpus_digest(records)[:16]}"
    )


def cmd_pretrain_dns(config: RunConfig, console: Console) -> None:
    """Pre-train the DNS on the no-reverb subset."""
    corpus = TrainingCorpus.from_records(training_records(config), config.corpus, reverberant=False)
    record_config(config, "pretrain-dns", config.checkpoints, config.outputs)
    _show_phase(pretrain_dns(corpus, config, config.resume), config, console)


def cmd_pretrain_pesqnet(config: RunConfig, console: Console) -> None:
    """Pre-train PESQNet against the pre-trained DNS."""
    corpus = TrainingCorpus.from_records(training_records(config), config.corpus, reverberant=False)
    record_config(config, "pretrain-pesqnet", config.checkpoints, config.outputs)
    result = pretrain_pesqnet(corpus, config, build_oracle(config.oracle), config.resume)
    _show_phase(result, config, console)


def cmd_finetune1(config: RunConfig, console: Console) -> None:
    """Stage-1 fine-tuning on the mixed corpus."""
    corpus = TrainingCorpus.from_records(training_records(config), config.corpus)
    record_config(config, "finetune1", config.checkpoints, config.outputs)
    for result in finetune_stage1(corpus, config, build_oracle(config.oracle), config.resume):
        _show_phase(result, config, console)


def cmd_finetune2(config: RunConfig, console: Console, alpha: Optional[float] = None) -> None:
    """Stage-2 alternating fine-tuning for one alpha."""
    alpha = config.stage2.alpha if alpha is None else alpha
    corpus = TrainingCorpus.from_records(training_records(config), config.corpus)
    record_config(config, f"finetune2-alpha{alpha:g}", config.checkpoints, config.outputs)
    result = finetune_stage2_alternating(corpus, config, build_oracle(config.oracle), alpha)
    curves_export(result.curves, config.outputs / f"curves_alpha{alpha:g}.csv")
    ReportViewsController(console).display_curves(result.curves, result.best_tau)


def cmd_enhance(config: RunConfig, console: Console) -> None:
    """Denoise one WAV file.

    With ``--identity-mask`` no checkpoint is needed and the output equals the
    input up to framing.
    """
    noisy = read_wav(config.resolve(config.input_wav))
    if config.identity_mask:
        dns = build_fcrn(config.fcrn, seed=config.seed)
        k = config.fcrn.k_in
        stats = NormStats(mean=np.zeros((2, k)), std=np.ones((2, k)))
    else:
        dns_path, _ = latest_checkpoints(config)
        dns, stats, _ = load_fcrn(dns_path, config.fcrn)
    out_path = config.resolve(config.output_wav)
    record_config(config, "enhance", out_path.parent)
    write_wav(out_path, enhance_utterance(dns, stats, noisy, config.identity_mask))
    console.print(f"Wrote {out_path}")


def cmd_evaluate(config: RunConfig, console: Console) -> None:
    """Score noisy and enhanced test utterances and export the scatter data.

    Raises:
        CorpusError: If the test split is empty.
    """
    split = config.corpus.test_split
    records = [r for r in training_records(config) if r.split == split]
    if not records:
        raise CorpusError(f"corpus has no {split!r} records", split=split)
    dns, stats, pesqnet = load_models(config)
    report_path = config.resolve(config.report) if config.report else config.outputs / "report.csv"
    record_config(config, "evaluate", report_path.parent)
    report = build_report(
        records, dns, stats, pesqnet, build_oracle(config.oracle), config.identity_mask
    )
    scatter_export(report, report_path)
    ReportViewsController(console).display_report(report)
    console.print(f"Wrote {report_path}")


COMMAND_HANDLERS: Dict[str, CommandHandler] = {
    "synth": cmd_synth,
    "pretrain-dns": cmd_pretrain_dns,
    "pretrain-pesqnet": cmd_pretrain_pesqnet,
    "finetune1": cmd_finetune1,
    "finetune2": cmd_finetune2,
    "enhance": cmd_enhance,
    "evaluate": cmd_evaluate,
}
