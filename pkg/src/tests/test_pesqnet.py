"""Tests for the PESQNet quality estimator."""

import numpy as np
import pytest
import torch

from pesqnet_dns.core.settings import PesqNetConfig
from pesqnet_dns.error_handling import ConfigValidationError, SignalError
from pesqnet_dns.models.pesqnet import (
    build_pesqnet,
    estimate_pesq,
    output_gate,
    split_blocks,
)


class TestOutputGate:
    """Test cases for the output squashing."""

    def test_range(self) -> None:
        """Test that the gate maps onto [1.04, 4.64]."""
        y = output_gate(torch.tensor([-1e3, 0.0, 1e3], dtype=torch.float64))
        assert y[0].item() == pytest.approx(1.04)
        assert y[1].item() == pytest.approx(2.84)
        assert y[2].item() == pytest.approx(4.64)

    def test_known_value(self) -> None:
        """Test 3.6 * 0.75 + 1.04 at ln 3."""
        assert output_gate(torch.tensor(np.log(3.0), dtype=torch.float64)).item() == pytest.approx(3.74)

    def test_strictly_increasing(self) -> None:
        """Test monotonicity on a sampled grid."""
        y = output_gate(torch.linspace(-20.0, 20.0, 401, dtype=torch.float64))
        assert torch.all(torch.diff(y) > 0)


class TestSplitBlocks:
    """Test cases for block segmentation."""

    def test_last_block_padded(self) -> None:
        """Test ceil(L / W) blocks with the tail zero-padded."""
        amp = torch.arange(10 * 3, dtype=torch.float32).reshape(10, 3)
        blocks, valid = split_blocks(amp, 4)
        assert blocks.shape == (3, 3, 4)
        assert valid.tolist() == [4, 4, 2]
        assert torch.equal(blocks[1, :, 0], amp[4])
        assert torch.all(blocks[2, :, 2:] == 0)

    def test_empty_raises(self) -> None:
        """Test that an empty spectrogram is rejected."""
        with pytest.raises(SignalError):
            split_blocks(torch.zeros(0, 3), 4)


class TestPesqNet:
    """Test cases for the network."""

    def test_scores_within_range(self, tiny_pesqnet_config: PesqNetConfig) -> None:
        """Test that every estimate lies in [1.04, 4.64]."""
        model = build_pesqnet(tiny_pesqnet_config, seed=0)
        amp = torch.rand(3, 9, 260) * 10
        scores = model(amp, [9, 5, 1])
        assert scores.shape == (3,)
        assert torch.all(scores >= 1.04)
        assert torch.all(scores <= 4.64)

    @pytest.mark.parametrize("scale", [1e3, 1e6])
    def test_scores_within_range_for_extreme_inputs(
        self, tiny_pesqnet_config: PesqNetConfig, scale: float
    ) -> None:
        """Test that the range bound holds for very loud inputs."""
        model = build_pesqnet(tiny_pesqnet_config, seed=0)
        with torch.no_grad():
            scores = model(torch.rand(3, 9, 260) * scale, [9, 5, 1])
        assert torch.all(torch.isfinite(scores))
        assert torch.all(scores >= 1.04)
        assert torch.all(scores <= 4.64)

    def test_block_order_does_not_matter(self, tiny_pesqnet_config: PesqNetConfig) -> None:
        """Test that permuting whole blocks leaves the per-block score unchanged."""
        model = build_pesqnet(tiny_pesqnet_config, seed=4)
        w = tiny_pesqnet_config.block_frames
        amp = torch.rand(4 * w, 260)
        permuted = amp.reshape(4, w, 260)[[2, 0, 3, 1]].reshape(4 * w, 260)
        with torch.no_grad():
            torch.testing.assert_close(model(amp[None], [4 * w]), model(permuted[None], [4 * w]))

    def test_padding_ignored(self, tiny_pesqnet_config: PesqNetConfig) -> None:
        """Test that frames past an utterance's length do not matter."""
        model = build_pesqnet(tiny_pesqnet_config, seed=1)
        amp = torch.rand(1, 7, 260)
        longer = torch.cat([amp, torch.rand(1, 5, 260)], dim=1)
        with torch.no_grad():
            torch.testing.assert_close(model(amp, [7]), model(longer, [7]))

    def test_short_utterance_below_widest_kernel(self, tiny_pesqnet_config: PesqNetConfig) -> None:
        """Test a single-frame input against width-2 kernels."""
        model = build_pesqnet(tiny_pesqnet_config)
        with torch.no_grad():
            score = model(torch.rand(1, 1, 260), [1])
        assert torch.isfinite(score).all()

    def test_across_blocks_scope(self, tiny_pesqnet_config: PesqNetConfig) -> None:
        """Test the BLSTM running over the block sequence."""
        cfg = tiny_pesqnet_config.model_copy(update={"blstm_scope": "across_blocks"})
        model = build_pesqnet(cfg)
        assert model(torch.rand(1, 9, 260), [9]).shape == (1,)

    def test_gradient_reaches_input(self, tiny_pesqnet_config: PesqNetConfig) -> None:
        """Test that a frozen PESQNet still passes gradients to its input."""
        model = build_pesqnet(tiny_pesqnet_config, seed=2)
        model.requires_grad_(False)
        amp = (torch.rand(1, 8, 260, dtype=torch.float32) + 0.1).requires_grad_(True)
        model(amp, [8]).sum().backward()
        assert amp.grad is not None
        assert all(p.grad is None for p in model.parameters())

    def test_directional_derivative(self, tiny_pesqnet_config: PesqNetConfig) -> None:
        """Test the input gradient against a central finite difference."""
        model = build_pesqnet(tiny_pesqnet_config, seed=3).double()
        amp = (torch.rand(1, 8, 260, dtype=torch.float64) + 0.1).requires_grad_(True)
        model(amp, [8]).sum().backward()
        direction = torch.randn_like(amp)
        h = 1e-6
        with torch.no_grad():
            plus = model(amp + h * direction, [8]).item()
            minus = model(amp - h * direction, [8]).item()
        numeric = (plus - minus) / (2 * h)
        analytic = float((amp.grad * direction).sum())
        assert numeric == pytest.approx(analytic, rel=1e-3, abs=1e-6)

    def test_invalid_kernel_widths(self) -> None:
        """Test that widths must be 1, 2, 4, ..."""
        with pytest.raises(ConfigValidationError):
            build_pesqnet(PesqNetConfig(kernel_widths=[1, 3]))

    def test_default_config_builds(self) -> None:
        """Test the default W=16 with widths 1, 2, 4, 8."""
        model = build_pesqnet(PesqNetConfig())
        assert len(model.width_convs) == 4


class TestEstimatePesq:
    """Test cases for single-utterance scoring."""

    def test_returns_quality_score(self, tiny_pesqnet_config: PesqNetConfig) -> None:
        """Test the numpy interface."""
        score = estimate_pesq(build_pesqnet(tiny_pesqnet_config), np.ones((6, 260)))
        assert 1.04 <= float(score) <= 4.64

    def test_negative_amplitude_raises(self, tiny_pesqnet_config: PesqNetConfig) -> None:
        """Test that amplitudes must be non-negative."""
        with pytest.raises(SignalError):
            estimate_pesq(build_pesqnet(tiny_pesqnet_config), -np.ones((6, 260)))
