"""Evaluation report and CSV exports of scatter, curve and history data."""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from pesqnet_dns.core.models import CurvePoint, NormStats, UtteranceRecord
from pesqnet_dns.dsp.frontend import stft
from pesqnet_dns.error_handling import ArtifactWriteError, SignalError, report_file_error
from pesqnet_dns.evaluation.metrics import delta_snr_seg, lcc, mae
from pesqnet_dns.models.fcrn import Fcrn, enhance_utterance
from pesqnet_dns.models.pesqnet import PesqNet, estimate_pesq
from pesqnet_dns.oracle.quality import QualityOracle

logger = logging.getLogger(__name__)

SCATTER_COLUMNS = ("uid", "condition", "pesq_true", "pesq_hat", "delta_snr_seg")
CURVE_COLUMNS = ("tau", "j_total", "mae", "mean_oracle_score")
HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "lr")
CONDITIONS = ("noisy/reverb", "noisy/no_reverb", "enhanced/reverb", "enhanced/no_reverb")


@dataclass(frozen=True)
class MetricRow:
    """One utterance under one condition.

    ``delta_snr_seg`` is only defined for enhanced no-reverb utterances.
    """

    uid: str
    condition: str
    pesq_true: float
    pesq_hat: float
    delta_snr_seg: Optional[float] = None


@dataclass(frozen=True)
class ConditionSummary:
    """Aggregates of the rows of one condition."""

    condition: str
    count: int
    mae: float
    lcc: Optional[float]
    mean_pesq_true: float
    mean_pesq_hat: float
    mean_delta_snr_seg: Optional[float]


@dataclass
class MetricReport:
    """Per-utterance rows; every aggregate is computed from them."""

    rows: List[MetricRow] = field(default_factory=list)

    def conditions(self) -> List[str]:
        """Conditions present, in canonical order."""
        present = {r.condition for r in self.rows}
        return [c for c in CONDITIONS if c in present] + sorted(present - set(CONDITIONS))

    def summarize(self, condition: Optional[str] = None) -> ConditionSummary:
        """Aggregate over one condition, or over all rows when None.

        LCC is None where it is undefined (fewer than two rows or no variance).
        """
        rows = [r for r in self.rows if condition is None or r.condition == condition]
        if not rows:
            raise SignalError("no rows to summarize", condition=condition)
        est = [r.pesq_hat for r in rows]
        ref = [r.pesq_true for r in rows]
        try:
            corr: Optional[float] = lcc(est, ref)
        except SignalError:
            corr = None
        deltas = [r.delta_snr_seg for r in rows if r.delta_snr_seg is not None]
        return ConditionSummary(
            condition=condition or "all",
            count=len(rows),
            mae=mae(est, ref),
            lcc=corr,
            mean_pesq_true=float(np.mean(ref)),
            mean_pesq_hat=float(np.mean(est)),
            mean_delta_snr_seg=float(np.mean(deltas)) if deltas else None,
        )

    def summaries(self) -> List[ConditionSummary]:
        """One summary per condition present."""
        return [self.summarize(c) for c in self.conditions()]


def build_report(
    records: Sequence[UtteranceRecord],
    dns: Fcrn,
    stats: NormStats,
    pesqnet: PesqNet,
    oracle: QualityOracle,
    identity_mask: bool = False,
) -> MetricReport:
    """Score noisy and enhanced versions of every record with oracle and PESQNet."""
    enhanced = [enhance_utterance(dns, stats, r.mixture, identity_mask) for r in records]
    pairs = [(r.mixture, r.clean) for r in records] + [
        (e, r.clean) for e, r in zip(enhanced, records)
    ]
    truth = [float(s) for s in oracle.score_many(pairs)]
    n = len(records)

    rows: List[MetricRow] = []
    for i, record in enumerate(records):
        suffix = record.condition
        rows.append(
            MetricRow(
                uid=record.uid,
                condition=f"noisy/{suffix}",
                pesq_true=truth[i],
                pesq_hat=float(estimate_pesq(pesqnet, stft(record.mixture).magnitude())),
            )
        )
    for i, (record, wave) in enumerate(zip(records, enhanced)):
        delta = None
        if not record.is_reverberant:
            delta = delta_snr_seg(record.clean, record.mixture, wave)
        rows.append(
            MetricRow(
                uid=record.uid,
                condition=f"enhanced/{record.condition}",
                pesq_true=truth[n + i],
                pesq_hat=float(estimate_pesq(pesqnet, stft(wave).magnitude())),
                delta_snr_seg=delta,
            )
        )
    logger.info("Evaluated %d utterances", n)
    return MetricReport(rows)


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(path: Union[str, Path], columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as e:
        report_file_error(e, path, "write")
        raise ArtifactWriteError(f"cannot write {path}", path=str(path)) from e
    return path


def _read_rows(path: Union[str, Path], columns: Sequence[str]) -> List[Dict[str, str]]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            if tuple(reader.fieldnames or ()) != tuple(columns):
                raise SignalError(
                    f"{path} does not have columns {', '.join(columns)}",
                    found=reader.fieldnames,
                )
            return list(reader)
    except OSError as e:
        report_file_error(e, path, "read")
        raise


def _opt_float(text: str) -> Optional[float]:
    return float(text) if text != "" else None


def scatter_export(report: MetricReport, path: Union[str, Path]) -> Path:
    """Write ``uid,condition,pesq_true,pesq_hat,delta_snr_seg``; one row per point."""
    return _write_rows(
        path,
        SCATTER_COLUMNS,
        ((r.uid, r.condition, r.pesq_true, r.pesq_hat, r.delta_snr_seg) for r in report.rows),
    )


def import_scatter(path: Union[str, Path]) -> MetricReport:
    """Read a file written by :func:`scatter_export`."""
    return MetricReport(
        [
            MetricRow(
                uid=row["uid"],
                condition=row["condition"],
                pesq_true=float(row["pesq_true"]),
                pesq_hat=float(row["pesq_hat"]),
                delta_snr_seg=_opt_float(row["delta_snr_seg"]),
            )
            for row in _read_rows(path, SCATTER_COLUMNS)
        ]
    )


def curves_export(curves: Sequence[CurvePoint], path: Union[str, Path]) -> Path:
    """Write ``tau,j_total,mae,mean_oracle_score``."""
    return _write_rows(
        path,
        CURVE_COLUMNS,
        ((c.tau, c.j_total, c.mae, c.mean_oracle_score) for c in curves),
    )


def import_curves(path: Union[str, Path]) -> List[CurvePoint]:
    """Read a file written by :func:`curves_export`."""
    return [
        CurvePoint(
            tau=int(row["tau"]),
            j_total=float(row["j_total"]),
            mae=float(row["mae"]),
            mean_oracle_score=float(row["mean_oracle_score"]),
        )
        for row in _read_rows(path, CURVE_COLUMNS)
    ]


def history_export(history: Sequence[Any], path: Union[str, Path]) -> Path:
    """Write a phase's ``epoch,train_loss,val_loss,lr`` history."""
    return _write_rows(
        path,
        HISTORY_COLUMNS,
        ([getattr(h, c) for c in HISTORY_COLUMNS] for h in history),
    )
