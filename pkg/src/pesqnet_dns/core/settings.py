"""Run configuration: YAML file, environment override and command-line flags."""

import logging
import os
import shlex
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict, SettingsError

from pesqnet_dns._version import get_build_version
from pesqnet_dns.core.models import PESQ_MAX
from pesqnet_dns.error_handling import (
    ConfigConflictError,
    ConfigValidationError,
    report_configuration_error,
)

logger = logging.getLogger(__name__)

ORACLE_COMMAND_ENV = "PESQNET_DNS_ORACLE_COMMAND"
RESOLVED_CONFIG_FILE = "resolved_config.yaml"

COMMANDS = (
    "synth",
    "pretrain-dns",
    "pretrain-pesqnet",
    "finetune1",
    "finetune2",
    "enhance",
    "evaluate",
)


class FcrnConfig(BaseModel):
    """FCRN denoiser hyperparameters."""

    filters: int = Field(default=88, gt=0, description="Filter kernel count F")
    kernel_height: int = Field(default=24, gt=0, description="Kernel height N (frequency)")
    k_in: int = Field(default=260, gt=0, description="Input frequency bins")
    c_in: int = Field(default=2, description="Input channels (real/imag)")
    c_out: int = Field(default=2, description="Output channels (real/imag)")
    pool_factor: int = Field(default=2, description="Maxpool/upsample factor")
    pool_stages: int = Field(default=2, ge=1, le=2, description="Pool/upsample stages")
    leaky_slope: float = Field(default=0.2, ge=0.0, lt=1.0)

    def problems(self) -> List[str]:
        """Cross-field problems (empty when the config is consistent)."""
        found = []
        if self.c_in != 2 or self.c_out != 2:
            found.append("fcrn.c_in and fcrn.c_out must both be 2 (real/imag)")
        if self.pool_factor != 2:
            found.append("fcrn.pool_factor must be 2")
        if self.k_in % (self.pool_factor**self.pool_stages):
            found.append(
                f"fcrn.k_in={self.k_in} is not divisible by "
                f"{self.pool_factor**self.pool_stages}"
            )
        return found


class PesqNetConfig(BaseModel):
    """PESQNet quality estimator hyperparameters."""

    block_frames: int = Field(default=16, gt=0, description="Frames per block W")
    kernel_widths: List[int] = Field(default_factory=lambda: [1, 2, 4, 8])
    k_in: int = Field(default=260, gt=0)
    encoder_channels: List[int] = Field(default_factory=lambda: [8, 16])
    freq_pool: bool = Field(default=True, description="Halve frequency after each encoder conv")
    width_filters: int = Field(default=16, gt=0, description="Filters per kernel width")
    blstm_hidden: int = Field(default=32, gt=0)
    fc_widths: List[int] = Field(default_factory=lambda: [128, 32, 1])
    blstm_scope: Literal["per_block", "across_blocks"] = "per_block"
    log_compress: bool = False
    leaky_slope: float = Field(default=0.2, ge=0.0, lt=1.0)

    def problems(self) -> List[str]:
        """Cross-field problems (empty when the config is consistent)."""
        found = []
        expected = [2**i for i in range(len(self.kernel_widths))]
        if not self.kernel_widths or self.kernel_widths != expected:
            found.append(
                f"pesqnet.kernel_widths must be {expected or [1, 2, 4, 8]}, got {self.kernel_widths}"
            )
        elif self.block_frames < max(self.kernel_widths):
            found.append(
                f"pesqnet.block_frames={self.block_frames} is smaller than the widest kernel"
            )
        if not self.encoder_channels or any(c <= 0 for c in self.encoder_channels):
            found.append("pesqnet.encoder_channels must be positive")
        elif self.freq_pool and self.k_in % (2 ** len(self.encoder_channels)):
            found.append(
                f"pesqnet.k_in={self.k_in} is not divisible by {2 ** len(self.encoder_channels)}"
            )
        if not self.fc_widths or self.fc_widths[-1] != 1:
            found.append("pesqnet.fc_widths must end in a single output unit")
        return found


class LossWeights(BaseModel):
    """Weights of the combined objectives."""

    alpha: float = Field(default=0.0, ge=0.0, le=1.0, description="MSE weight in J_total")
    beta: float = Field(default=0.0, ge=0.0, le=1.0, description="Joint-target weight in J_mse")
    pesq_max: float = PESQ_MAX

    @field_validator("pesq_max")
    @classmethod
    def validate_pesq_max(cls, v: float) -> float:
        """pesq_max is fixed by the score scale."""
        if v != PESQ_MAX:
            raise ValueError(f"pesq_max must be {PESQ_MAX}")
        return v


class PhaseConfig(BaseModel):
    """Adam plus plateau schedule for one training phase."""

    lr: float = Field(gt=0.0)
    stop_lr: float = Field(gt=0.0)
    patience_epochs: int = Field(default=5, ge=1)
    factor: float = Field(default=0.5, gt=0.0, lt=1.0)
    max_epochs: int = Field(default=200, ge=1)
    beta: Optional[float] = Field(default=None, ge=0.0, le=1.0)


class Stage2Config(BaseModel):
    """Alternating fine-tuning."""

    epochs: int = Field(default=25, ge=1)
    alpha: float = Field(default=0.0, ge=0.0, le=1.0)
    beta: float = Field(default=0.9, ge=0.0, le=1.0)
    dns_lr: float = Field(default=1e-6, gt=0.0)
    pesqnet_lr: float = Field(default=2e-6, gt=0.0)
    monitor_utterances: int = Field(default=0, ge=0, description="0 means all training utterances")
    audit: bool = False

    @property
    def loss_weights(self) -> LossWeights:
        """J_total and J_mse weights of this stage."""
        return LossWeights(alpha=self.alpha, beta=self.beta)


class OracleSpec(BaseModel):
    """Which ground-truth scorer to use and how to call it."""

    kind: Literal["surrogate", "external_pesq"] = "surrogate"
    command: List[str] = Field(
        default_factory=list,
        description="External command; {reference} and {degraded} are substituted",
    )
    score_pattern: str = r"(-?\d+(?:\.\d+)?)\s*$"
    timeout_s: float = Field(default=30.0, gt=0.0)
    max_concurrency: int = Field(default=4, ge=1)
    gamma: float = Field(default=1.0, gt=0.0)
    epsilon: float = Field(default=1e-6, gt=0.0)


class CorpusSettings(BaseModel):
    """Where the corpus comes from and how it is batched."""

    manifest: Optional[Path] = None
    directory: Path = Path("corpus")
    batch_size: int = Field(default=3, ge=1)
    train_split: str = "train"
    val_split: str = "val"
    test_split: str = "test"


def _phase(lr: float, stop_lr: float, beta: Optional[float] = None) -> PhaseConfig:
    return PhaseConfig(lr=lr, stop_lr=stop_lr, beta=beta)


class RunConfig(BaseSettings):
    """pesqnet-dns - PESQNet-mediated deep noise suppression training"""

    model_config = SettingsConfigDict(
        env_file=None,
        env_prefix="",
        case_sensitive=False,
        validate_default=True,
        extra="ignore",
        cli_prog_name="pesqnet-dns",
        cli_kebab_case=True,
        cli_implicit_flags=True,
        cli_exit_on_error=False,
        cli_avoid_json=True,
    )

    config: Optional[Path] = Field(default=None, description="YAML run-config file")
    workspace: Path = Field(default=Path("."), description="Root for all relative paths")
    checkpoint_dir: Path = Path("checkpoints")
    output_dir: Path = Path("outputs")

    seed: int = 0
    workers: int = Field(default=1, ge=1, description="Threads for corpus synthesis")

    corpus: CorpusSettings = Field(default_factory=CorpusSettings)
    fcrn: FcrnConfig = Field(default_factory=FcrnConfig)
    pesqnet: PesqNetConfig = Field(default_factory=PesqNetConfig)
    pretrain_dns: PhaseConfig = Field(default_factory=lambda: _phase(1e-4, 1e-5, 0.0))
    pretrain_pesqnet: PhaseConfig = Field(default_factory=lambda: _phase(2e-4, 1e-5))
    finetune_dns: PhaseConfig = Field(default_factory=lambda: _phase(2e-5, 1e-6, 0.9))
    finetune_pesqnet: PhaseConfig = Field(default_factory=lambda: _phase(5e-5, 1e-6))
    stage2: Stage2Config = Field(default_factory=Stage2Config)
    oracle: OracleSpec = Field(default_factory=OracleSpec)
    grad_clip: Optional[float] = Field(default=None, gt=0.0, description="Off by default")

    input_wav: Optional[Path] = None
    output_wav: Optional[Path] = None
    report: Optional[Path] = Field(default=None, description="Evaluation CSV path")
    identity_mask: bool = Field(default=False, description="Debug: force the mask to 1")

    resume: bool = False
    force: bool = Field(default=False, description="Overwrite artifacts with a differing config")

    log_level: str = Field(default="INFO", description="Logging level")
    log_file: Optional[Path] = Field(default=None, description="Log file path")
    debug: bool = Field(default=False, description="Equivalent to --log-level DEBUG")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        v_upper = v.upper()
        if v_upper not in valid_levels:
            raise ValueError(f"Invalid log level: {v}")
        return v_upper

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Any,
        init_settings: Any,
        env_settings: Any,
        dotenv_settings: Any,
        file_secret_settings: Any,
    ) -> Tuple[Any, ...]:
        """Init values only; YAML and env are merged into them by :meth:`load`."""
        _ = (settings_cls, env_settings, dotenv_settings, file_secret_settings)
        return (init_settings,)

    @classmethod
    def load(cls, argv: Sequence[str] = ()) -> "RunConfig":
        """Resolve defaults, YAML file, environment and flags (flags win).

        Raises:
            ConfigValidationError: Listing every problem found.
        """
        argv = list(argv)
        init_values: Dict[str, Any] = {}
        config_path = _scan_flag(argv, "--config")
        if config_path is not None:
            init_values = read_yaml_config(Path(config_path))

        env_command = os.environ.get(ORACLE_COMMAND_ENV)
        if env_command:
            oracle = dict(init_values.get("oracle") or {})
            oracle["command"] = shlex.split(env_command)
            init_values["oracle"] = oracle

        try:
            settings = cls(_cli_parse_args=argv, **init_values)
        except ValidationError as e:
            problems = [
                f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
            ]
            raise ConfigValidationError(problems) from e
        except SettingsError as e:
            raise ConfigValidationError([str(e)]) from e

        if settings.debug:
            settings.log_level = "DEBUG"
        return settings

    def resolve(self, path: Path) -> Path:
        """Resolve ``path`` against the workspace root."""
        path = Path(path)
        return path if path.is_absolute() else Path(self.workspace) / path

    @property
    def corpus_dir(self) -> Path:
        """Synthesized corpus directory."""
        return self.resolve(self.corpus.directory)

    @property
    def checkpoints(self) -> Path:
        """Checkpoint directory."""
        return self.resolve(self.checkpoint_dir)

    @property
    def outputs(self) -> Path:
        """Output directory for reports and curves."""
        return self.resolve(self.output_dir)

    def problems_for(self, command: str) -> List[str]:
        """Every cross-field problem that blocks ``command``."""
        problems: List[str] = []
        if command not in COMMANDS:
            problems.append(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
        problems.extend(self.fcrn.problems())
        problems.extend(self.pesqnet.problems())
        if self.fcrn.k_in != self.pesqnet.k_in:
            problems.append("fcrn.k_in and pesqnet.k_in must agree")

        for name in ("pretrain_dns", "pretrain_pesqnet", "finetune_dns", "finetune_pesqnet"):
            phase: PhaseConfig = getattr(self, name)
            if phase.stop_lr >= phase.lr:
                problems.append(f"{name}.stop_lr must be below {name}.lr")

        if command == "synth":
            if self.corpus.manifest is None:
                problems.append("synth needs --corpus.manifest")
            elif not self.resolve(self.corpus.manifest).is_file():
                problems.append(f"manifest {self.resolve(self.corpus.manifest)} does not exist")
        if command == "enhance":
            if self.input_wav is None:
                problems.append("enhance needs --input-wav")
            elif not self.resolve(self.input_wav).is_file():
                problems.append(f"input file {self.resolve(self.input_wav)} does not exist")
            if self.output_wav is None:
                problems.append("enhance needs --output-wav")
        if command in ("pretrain-pesqnet", "finetune1", "finetune2", "evaluate"):
            if self.oracle.kind == "external_pesq" and not self.oracle.command:
                problems.append(
                    f"oracle.kind=external_pesq needs oracle.command (or {ORACLE_COMMAND_ENV})"
                )
        return problems

    def validate_for(self, command: str) -> None:
        """Raise :class:`ConfigValidationError` if ``command`` cannot run."""
        problems = self.problems_for(command)
        if problems:
            raise ConfigValidationError(problems)

    def resolved_dict(self) -> Dict[str, Any]:
        """Config that defines a run's artifacts (runtime-only switches excluded)."""
        return self.model_dump(
            mode="json",
            exclude={
                "config",
                "resume",
                "force",
                "log_level",
                "log_file",
                "debug",
                "workers",
                "input_wav",
                "output_wav",
                "report",
            },
        )


def _scan_flag(argv: Sequence[str], flag: str) -> Optional[str]:
    for i, arg in enumerate(argv):
        if arg == flag and i + 1 < len(argv):
            return argv[i + 1]
        if arg.startswith(flag + "="):
            return arg.split("=", 1)[1]
    return None


def read_yaml_config(path: Path) -> Dict[str, Any]:
    """Load a YAML run-config file into a plain dict.

    Raises:
        ConfigValidationError: If the file is unreadable or not a mapping.
    """
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        report_configuration_error(e, config_file=path)
        raise ConfigValidationError([f"cannot read config file {path}: {e}"]) from e
    if not isinstance(data, dict):
        raise ConfigValidationError([f"config file {path} must hold a mapping"])
    return {str(k).replace("-", "_"): v for k, v in data.items()}


class ResolvedConfigStore:
    """Keeps the resolved config of every run in an artifact directory."""

    def __init__(self, directory: Path) -> None:
        """Initialize with the artifact directory."""
        self.directory = Path(directory)
        self.config_file = self.directory / RESOLVED_CONFIG_FILE

    def load(self) -> Dict[str, Any]:
        """Stored runs keyed by run name (empty if none)."""
        if not self.config_file.exists():
            return {}
        try:
            with open(self.config_file, encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
            return dict(data.get("runs", {}))
        except (OSError, yaml.YAMLError) as e:
            logger.warning(f"Failed to load resolved config: {e}")
            return {}

    def check(self, run: str, config: RunConfig, force: bool = False) -> None:
        """Refuse ``config`` if ``run`` was stored with a different one.

        Raises:
            ConfigConflictError: If the configs differ and ``force`` is false.
        """
        previous = self.load().get(run)
        resolved = config.resolved_dict()
        if previous is None or previous.get("config") == resolved:
            return
        changed = sorted(_diff_keys(previous.get("config", {}), resolved))
        if not force:
            raise ConfigConflictError(
                f"{self.config_file} holds a different config for {run!r}",
                path=str(self.config_file),
                changed=changed,
            )
        logger.warning(f"Overwriting config of {run!r} (changed: {', '.join(changed)})")

    def record(self, run: str, config: RunConfig, force: bool = False) -> None:
        """Store ``config`` under ``run`` after :meth:`check`."""
        self.check(run, config, force)
        runs = self.load()
        runs[run] = {"build": get_build_version(), "config": config.resolved_dict()}
        self.directory.mkdir(parents=True, exist_ok=True)
        temp_file = self.config_file.with_suffix(".tmp")
        with open(temp_file, "w", encoding="utf-8") as f:
            yaml.safe_dump({"runs": runs}, f, sort_keys=True)
        temp_file.replace(self.config_file)
        logger.debug(f"Saved resolved config of {run!r} to {self.config_file}")


def _diff_keys(old: Dict[str, Any], new: Dict[str, Any], prefix: str = "") -> List[str]:
    keys = []
    for key in set(old) | set(new):
        a, b = old.get(key), new.get(key)
        if isinstance(a, dict) and isinstance(b, dict):
            keys.extend(_diff_keys(a, b, f"{prefix}{key}."))
        elif a != b:
            keys.append(f"{prefix}{key}")
    return keys
