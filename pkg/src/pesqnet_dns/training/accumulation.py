"""Epoch-level gradient accumulation for the alternating protocol."""

import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence

import torch

from pesqnet_dns.error_handling import ProtocolViolationError, TrainingDivergenceError

logger = logging.getLogger(__name__)

ActiveModel = Literal["dns", "pesqnet"]


@dataclass
class AlternationState:
    """Which model trains in epoch ``tau`` and what it has accumulated."""

    tau: int
    active_model: ActiveModel
    accumulated_gradient: Optional[List[torch.Tensor]] = None
    minibatch_count: int = 0

    @classmethod
    def for_epoch(cls, tau: int) -> "AlternationState":
        """Odd epochs train the DNS, even epochs PESQNet."""
        return cls(tau=tau, active_model="dns" if tau % 2 == 1 else "pesqnet")


def accumulate_gradient(
    state: AlternationState,
    minibatch_grad: Sequence[torch.Tensor],
    minibatch_id: Optional[int] = None,
) -> AlternationState:
    """Add one minibatch gradient to the running sum.

    Raises:
        ProtocolViolationError: If PESQNet is the active model.
        TrainingDivergenceError: If the gradient is not finite.
    """
    if state.active_model != "dns":
        raise ProtocolViolationError(
            "gradients are only accumulated in DNS epochs", tau=state.tau
        )
    if not all(torch.isfinite(g).all() for g in minibatch_grad):
        raise TrainingDivergenceError(
            "non-finite gradient", tau=state.tau, minibatch=minibatch_id
        )
    if state.accumulated_gradient is None:
        state.accumulated_gradient = [g.detach().clone() for g in minibatch_grad]
    else:
        for acc, g in zip(state.accumulated_gradient, minibatch_grad):
            acc.add_(g.detach())
    state.minibatch_count += 1
    return state


def finalize_gradient(state: AlternationState) -> List[torch.Tensor]:
    """Average of the accumulated gradients.

    Raises:
        ProtocolViolationError: If nothing was accumulated.
    """
    if state.accumulated_gradient is None or state.minibatch_count == 0:
        raise ProtocolViolationError("no minibatch gradient accumulated", tau=state.tau)
    return [g / state.minibatch_count for g in state.accumulated_gradient]


class GradientAccumulator:
    """Collects d(loss)/d(params) per minibatch and applies one averaged step."""

    def __init__(self, params: Sequence[torch.nn.Parameter], tau: int) -> None:
        self.params = list(params)
        self.state = AlternationState.for_epoch(tau)

    def add(self, loss: torch.Tensor, minibatch_id: Optional[int] = None) -> None:
        """Differentiate ``loss`` and accumulate without touching ``.grad``."""
        if not torch.isfinite(loss):
            raise TrainingDivergenceError(
                "non-finite loss", tau=self.state.tau, minibatch=minibatch_id
            )
        grads = torch.autograd.grad(loss, self.params)
        accumulate_gradient(self.state, grads, minibatch_id)

    def average(self) -> List[torch.Tensor]:
        """Averaged gradient."""
        return finalize_gradient(self.state)

    def apply(self, optimizer: torch.optim.Optimizer) -> List[torch.Tensor]:
        """Assign the averaged gradient and take a single optimizer step."""
        averaged = self.average()
        optimizer.zero_grad(set_to_none=True)
        for p, g in zip(self.params, averaged):
            p.grad = g.clone()
        optimizer.step()
        logger.debug(
            "Applied gradient averaged over %d minibatches (tau=%d)",
            self.state.minibatch_count,
            self.state.tau,
        )
        return averaged
