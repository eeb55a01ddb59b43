"""Checkpoint archives for both networks and resumable train state."""

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple, Union

import torch
from pydantic import BaseModel

from pesqnet_dns.core.models import NormStats
from pesqnet_dns.core.settings import FcrnConfig, PesqNetConfig
from pesqnet_dns.error_handling import CheckpointError, report_file_error
from pesqnet_dns.models.fcrn import Fcrn, build_fcrn
from pesqnet_dns.models.pesqnet import PesqNet, build_pesqnet

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

ModelKind = Literal["fcrn", "pesqnet"]

DNS_PRETRAINED = "dns_pretrained.pt"
PESQNET_PRETRAINED = "pesqnet_pretrained.pt"
DNS_STAGE1 = "dns_stage1.pt"
PESQNET_STAGE1 = "pesqnet_stage1.pt"


def stage2_names(alpha: float) -> Tuple[str, str]:
    """(dns, pesqnet) checkpoint file names of a stage-2 run."""
    return f"dns_stage2_alpha{alpha:g}.pt", f"pesqnet_stage2_alpha{alpha:g}.pt"


def state_path(checkpoint: Path) -> Path:
    """Train-state archive that belongs to ``checkpoint``."""
    return checkpoint.with_name(checkpoint.stem + ".state.pt")


def parameter_digest(state: Union[torch.nn.Module, Dict[str, torch.Tensor]]) -> str:
    """SHA-256 over parameter names and values."""
    if isinstance(state, torch.nn.Module):
        state = state.state_dict()
    digest = hashlib.sha256()
    for name in sorted(state):
        tensor = state[name].detach().cpu().contiguous()
        digest.update(name.encode("utf-8"))
        digest.update(str(tensor.dtype).encode("utf-8"))
        digest.update(tensor.numpy().tobytes())
    return digest.hexdigest()


@dataclass
class Checkpoint:
    """Loaded archive contents."""

    model_kind: ModelKind
    config: Dict[str, Any]
    state_dict: Dict[str, torch.Tensor]
    digest: str
    norm_stats: Optional[NormStats] = None
    extra: Dict[str, Any] = field(default_factory=dict)


def _atomic_save(obj: Any, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        torch.save(obj, tmp)
        tmp.replace(path)
    except OSError as e:
        report_file_error(e, path, "write")
        raise CheckpointError(f"cannot write {path}", path=str(path)) from e


def save_checkpoint(
    path: Union[str, Path],
    model: torch.nn.Module,
    kind: ModelKind,
    config: BaseModel,
    norm_stats: Optional[NormStats] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write config, statistics and parameters in one archive."""
    path = Path(path)
    state = {k: v.detach().cpu().clone() for k, v in model.state_dict().items()}
    payload: Dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "model_kind": kind,
        "config": config.model_dump(mode="json"),
        "norm_stats": None
        if norm_stats is None
        else {
            "mean": torch.as_tensor(norm_stats.mean),
            "std": torch.as_tensor(norm_stats.std),
        },
        "state_dict": state,
        "digest": parameter_digest(state),
        "extra": extra or {},
    }
    _atomic_save(payload, path)
    logger.debug("Saved %s checkpoint to %s", kind, path)
    return path


def load_checkpoint(
    path: Union[str, Path],
    kind: Optional[ModelKind] = None,
    expected_config: Optional[BaseModel] = None,
) -> Checkpoint:
    """Read and verify an archive.

    Raises:
        CheckpointError: If the file is unreadable or corrupted, of another kind
            or format version, its parameters do not match the stored digest, or
            its config differs from ``expected_config``.
    """
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        report_file_error(e, path, "load")
        raise CheckpointError(f"cannot load checkpoint {path}", path=str(path)) from e

    if not isinstance(payload, dict) or payload.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path} is not a format-{FORMAT_VERSION} checkpoint", path=str(path)
        )
    if kind is not None and payload.get("model_kind") != kind:
        raise CheckpointError(
            f"{path} holds a {payload.get('model_kind')} model, expected {kind}",
            path=str(path),
        )
    state = payload["state_dict"]
    if parameter_digest(state) != payload.get("digest"):
        raise CheckpointError(f"{path} failed its parameter digest check", path=str(path))
    if expected_config is not None:
        expected = expected_config.model_dump(mode="json")
        if payload["config"] != expected:
            changed = sorted(
                k for k in set(expected) | set(payload["config"])
                if expected.get(k) != payload["config"].get(k)
            )
            raise CheckpointError(
                f"{path} was trained with a different model config",
                path=str(path),
                changed=changed,
            )

    stats = None
    if payload.get("norm_stats") is not None:
        stats = NormStats(
            mean=payload["norm_stats"]["mean"].numpy(),
            std=payload["norm_stats"]["std"].numpy(),
        )
    return Checkpoint(
        model_kind=payload["model_kind"],
        config=payload["config"],
        state_dict=state,
        digest=payload["digest"],
        norm_stats=stats,
        extra=payload.get("extra") or {},
    )


def load_fcrn(
    path: Union[str, Path], expected_config: Optional[FcrnConfig] = None
) -> Tuple[Fcrn, NormStats, Checkpoint]:
    """Rebuild an FCRN and its normalization statistics from ``path``."""
    ckpt = load_checkpoint(path, "fcrn", expected_config)
    if ckpt.norm_stats is None:
        raise CheckpointError(f"{path} carries no normalization statistics", path=str(path))
    model = build_fcrn(FcrnConfig.model_validate(ckpt.config))
    model.load_state_dict(ckpt.state_dict)
    return model, ckpt.norm_stats, ckpt


def load_pesqnet(
    path: Union[str, Path], expected_config: Optional[PesqNetConfig] = None
) -> Tuple[PesqNet, Checkpoint]:
    """Rebuild a PESQNet from ``path``."""
    ckpt = load_checkpoint(path, "pesqnet", expected_config)
    model = build_pesqnet(PesqNetConfig.model_validate(ckpt.config))
    model.load_state_dict(ckpt.state_dict)
    return model, ckpt


def save_train_state(path: Union[str, Path], state: Dict[str, Any]) -> Path:
    """Persist optimizer, scheduler, epoch and history for ``--resume``."""
    path = Path(path)
    _atomic_save({"format_version": FORMAT_VERSION, **state}, path)
    return path


def load_train_state(path: Union[str, Path]) -> Optional[Dict[str, Any]]:
    """Train state saved by :func:`save_train_state`, or None if absent."""
    path = Path(path)
    if not path.exists():
        return None
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        report_file_error(e, path, "load")
        raise CheckpointError(f"cannot load train state {path}", path=str(path)) from e
    if state.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path} has an unknown train-state format", path=str(path))
    return state
