"""Plateau learning-rate schedule with a stop threshold."""

import logging
from typing import Any, Dict, Optional

import torch
from torch.optim.lr_scheduler import ReduceLROnPlateau

from pesqnet_dns.core.settings import PhaseConfig

logger = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def make_adam(params: Any, lr: float) -> torch.optim.Adam:
    """Adam with the default moment coefficients."""
    return torch.optim.Adam(params, lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS)


class PlateauSchedule:
    """Halve the learning rate after ``patience_epochs`` non-improving epochs.

    An epoch improves when its validation loss is strictly below the best so
    far. Training stops once the learning rate falls below ``stop_lr`` or
    ``max_epochs`` have run.
    """

    def __init__(
        self,
        optimizer: torch.optim.Optimizer,
        stop_lr: float,
        patience_epochs: int = 5,
        factor: float = 0.5,
        max_epochs: Optional[int] = None,
    ) -> None:
        self.optimizer = optimizer
        self.stop_lr = stop_lr
        self.max_epochs = max_epochs
        # torch counts bad epochs beyond patience, so patience - 1 reduces on the Nth
        self.scheduler = ReduceLROnPlateau(
            optimizer,
            mode="min",
            factor=factor,
            patience=patience_epochs - 1,
            threshold=0.0,
            threshold_mode="rel",
            cooldown=0,
            eps=0.0,
        )

    @classmethod
    def from_phase(cls, optimizer: torch.optim.Optimizer, phase: PhaseConfig) -> "PlateauSchedule":
        """Build from a phase config."""
        return cls(
            optimizer,
            stop_lr=phase.stop_lr,
            patience_epochs=phase.patience_epochs,
            factor=phase.factor,
            max_epochs=phase.max_epochs,
        )

    @property
    def lr(self) -> float:
        """Current learning rate."""
        return float(self.optimizer.param_groups[0]["lr"])

    def set_baseline(self, val_loss: float) -> None:
        """Make ``val_loss`` the best so far without counting it as an epoch."""
        self.scheduler.best = val_loss

    def step(self, val_loss: float) -> bool:
        """Feed one epoch's validation loss; True if the rate was reduced."""
        before = self.lr
        self.scheduler.step(val_loss)
        reduced = self.lr < before
        if reduced:
            logger.info("Learning rate reduced %.3g -> %.3g", before, self.lr)
        return reduced

    def should_stop(self, epochs_done: int) -> bool:
        """Stop criterion after ``epochs_done`` epochs."""
        if self.lr < self.stop_lr:
            return True
        return self.max_epochs is not None and epochs_done >= self.max_epochs

    def state_dict(self) -> Dict[str, Any]:
        """Scheduler state for resuming."""
        return self.scheduler.state_dict()

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        """Restore scheduler state."""
        self.scheduler.load_state_dict(state)
