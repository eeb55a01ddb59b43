"""Tests for training objectives."""

import pytest
import torch

from pesqnet_dns.error_handling import ConfigValidationError, SignalError
from pesqnet_dns.training.losses import (
    loss_joint,
    loss_mse,
    loss_noise,
    loss_pesq,
    loss_pesqnet,
    loss_total,
    spectral_mse,
)


def rand_spec(*shape: int, seed: int = 0) -> torch.Tensor:
    """Random complex128 tensor."""
    g = torch.Generator().manual_seed(seed)
    return torch.complex(
        torch.randn(*shape, generator=g, dtype=torch.float64),
        torch.randn(*shape, generator=g, dtype=torch.float64),
    )


class TestSpectralMse:
    """Test cases for the per-utterance spectral distance."""

    def test_matches_definition(self) -> None:
        """Test (1 / (L K)) sum |a - b|^2 on the physical bins."""
        a, b = rand_spec(2, 5, 260), rand_spec(2, 5, 260, seed=1)
        expected = ((a - b)[..., :257].abs() ** 2).mean(dim=(-2, -1))
        torch.testing.assert_close(spectral_mse(a, b), expected)

    def test_padded_bins_ignored(self) -> None:
        """Test that differences in bins 257..259 do not count."""
        a = rand_spec(1, 4, 260)
        b = a.clone()
        b[..., 257:] += 10
        assert float(spectral_mse(a, b)) == 0.0

    def test_frame_mask_normalizes_by_valid_frames(self) -> None:
        """Test that padded frames neither add error nor dilute the mean."""
        a, b = rand_spec(1, 6, 260), rand_spec(1, 6, 260, seed=2)
        mask = torch.tensor([[True] * 4 + [False] * 2])
        torch.testing.assert_close(
            spectral_mse(a, b, mask), spectral_mse(a[:, :4], b[:, :4])
        )

    def test_shape_mismatch_raises(self) -> None:
        """Test the shape check."""
        with pytest.raises(SignalError):
            spectral_mse(rand_spec(1, 3, 260), rand_spec(1, 4, 260))


class TestLossMse:
    """Test cases for the weighted MSE objective."""

    def test_equal_targets_reduce_to_plain_mse(self) -> None:
        """Test that without reverberation J_mse equals the plain spectral MSE for any beta."""
        s_hat, s = rand_spec(2, 5, 260), rand_spec(2, 5, 260, seed=3)
        plain = spectral_mse(s_hat, s).mean()
        for beta in (0.0, 0.9, 1.0):
            torch.testing.assert_close(loss_mse(s_hat, s, s, beta), plain)

    def test_weighting(self) -> None:
        """Test beta * J_joint + (1 - beta) * J_noise."""
        s_hat, s, s_rev = rand_spec(1, 3, 260), rand_spec(1, 3, 260, seed=4), rand_spec(1, 3, 260, seed=5)
        expected = 0.9 * loss_joint(s_hat, s) + 0.1 * loss_noise(s_hat, s_rev)
        torch.testing.assert_close(loss_mse(s_hat, s, s_rev, 0.9), expected)

    def test_beta_out_of_range_raises(self) -> None:
        """Test that beta must lie in [0, 1]."""
        a = rand_spec(1, 2, 260)
        with pytest.raises(ConfigValidationError):
            loss_mse(a, a, a, 1.5)


class TestScoreLosses:
    """Test cases for the PESQ-scale objectives."""

    def test_loss_pesq(self) -> None:
        """Test the squared estimation error averaged over a batch."""
        assert float(loss_pesq(torch.tensor([2.0, 3.0]), torch.tensor([1.0, 3.0]))) == 0.5

    def test_loss_pesqnet_zero_at_maximum(self) -> None:
        """Test that the maximum score costs nothing."""
        assert float(loss_pesqnet(torch.tensor([4.64]))) == pytest.approx(0.0)
        assert loss_pesqnet(3.64) == pytest.approx(1.0)

    def test_loss_total_endpoints(self) -> None:
        """Test alpha = 1 and alpha = 0."""
        assert loss_total(2.0, 5.0, 1.0) == 2.0
        assert loss_total(2.0, 5.0, 0.0) == 5.0
        assert loss_total(2.0, 4.0, 0.5) == 3.0
        with pytest.raises(ConfigValidationError):
            loss_total(1.0, 1.0, -0.1)

    def test_loss_pesq_full_range(self) -> None:
        """Test the error between the scale ends and its symmetry."""
        assert loss_pesq(4.64, 1.04) == pytest.approx(12.96)
        a, b = torch.tensor([1.5, 4.0]), torch.tensor([3.0, 2.2])
        assert float(loss_pesq(a, b)) == float(loss_pesq(b, a))


def scalar_mse(a: torch.Tensor, b: torch.Tensor) -> float:
    """Plain-loop (1 / (L K)) sum |a - b|^2 for an L x K pair."""
    rows, cols = a.shape
    total = 0.0
    for i in range(rows):
        for k in range(cols):
            d = complex(a[i, k]) - complex(b[i, k])
            total += d.real**2 + d.imag**2
    return total / (rows * cols)


class TestLossValuesAndGradients:
    """Test cases for small hand-checkable instances."""

    def test_single_bin(self) -> None:
        """Test |3 + 4i|^2 for one frame and one bin."""
        s_hat = torch.tensor([[3 + 4j]], dtype=torch.complex128)
        assert float(loss_joint(s_hat, torch.zeros_like(s_hat))) == pytest.approx(25.0)

    def test_affine_weighting_against_loops(self) -> None:
        """Test beta = 0.9 against an explicit loop over a 2 x 4 instance."""
        s_hat, s, s_rev = rand_spec(2, 4, seed=6), rand_spec(2, 4, seed=7), rand_spec(2, 4, seed=8)
        expected = 0.9 * scalar_mse(s_hat, s) + 0.1 * scalar_mse(s_hat, s_rev)
        assert float(loss_mse(s_hat, s, s_rev, 0.9)) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gradient_matches_central_differences(self, seed: int) -> None:
        """Test d J_mse / d S_hat against central differences on both parts of every entry."""
        s_hat = rand_spec(2, 4, seed=seed).requires_grad_(True)
        s, s_rev = rand_spec(2, 4, seed=seed + 10), rand_spec(2, 4, seed=seed + 20)
        loss_mse(s_hat, s, s_rev, 0.9).backward()
        grad = s_hat.grad
        h = 1e-6
        base = s_hat.detach()
        for i in range(2):
            for k in range(4):
                for step, part in ((h, grad[i, k].real), (1j * h, grad[i, k].imag)):
                    plus, minus = base.clone(), base.clone()
                    plus[i, k] += step
                    minus[i, k] -= step
                    numeric = (
                        float(loss_mse(plus, s, s_rev, 0.9)) - float(loss_mse(minus, s, s_rev, 0.9))
                    ) / (2 * h)
                    assert numeric == pytest.approx(float(part), rel=1e-4, abs=1e-8)
