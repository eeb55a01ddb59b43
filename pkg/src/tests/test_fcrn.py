"""Tests for the FCRN denoiser."""

import numpy as np
import pytest
import torch

from pesqnet_dns.core.models import ComplexMask, ComplexSpectrogram, NormStats, Waveform
from pesqnet_dns.core.settings import FcrnConfig
from pesqnet_dns.dsp.frontend import stft
from pesqnet_dns.error_handling import ConfigValidationError, SignalError
from pesqnet_dns.models.fcrn import (
    apply_mask,
    bound_mask,
    build_fcrn,
    enhance_spectrum,
    enhance_utterance,
    forward_mask,
)
from pesqnet_dns.training.checkpoint import parameter_digest

from .conftest import samples_for_frames, speech_like


def unit_stats(k: int = 260) -> NormStats:
    """Identity normalization."""
    return NormStats(mean=np.zeros((2, k)), std=np.ones((2, k)))


class TestBoundMask:
    """Test cases for the magnitude bound."""

    def test_magnitude_never_exceeds_one(self) -> None:
        """Test |M| <= 1 for large raw outputs."""
        raw = torch.randn(2, 2, 8, 5) * 50
        m = bound_mask(raw)
        mag = torch.sqrt(m[:, 0] ** 2 + m[:, 1] ** 2)
        assert float(mag.max()) <= 1.0

    def test_phase_preserved(self) -> None:
        """Test that the bound only rescales each complex entry."""
        raw = torch.tensor([[[[3.0]], [[4.0]]]])
        m = bound_mask(raw)
        assert m[0, 0, 0, 0] / m[0, 1, 0, 0] == pytest.approx(0.75)
        assert float(torch.sqrt(m[0, 0] ** 2 + m[0, 1] ** 2)) == pytest.approx(np.tanh(5.0))

    def test_zero_maps_to_zero_with_finite_gradient(self) -> None:
        """Test the small-magnitude branch at the origin."""
        raw = torch.zeros(1, 2, 1, 1, dtype=torch.float64, requires_grad=True)
        m = bound_mask(raw)
        m.sum().backward()
        assert torch.all(m == 0)
        assert torch.all(torch.isfinite(raw.grad))


class TestFcrn:
    """Test cases for the network itself."""

    def test_output_shape_and_bound(self, tiny_fcrn_config: FcrnConfig) -> None:
        """Test (B, 2, K, L) in and out with a bounded mask."""
        model = build_fcrn(tiny_fcrn_config, seed=0)
        out = model(torch.randn(2, 2, 260, 6))
        assert out.shape == (2, 2, 260, 6)
        assert float(torch.sqrt(out[:, 0] ** 2 + out[:, 1] ** 2).max()) <= 1.0

    def test_deterministic_init(self, tiny_fcrn_config: FcrnConfig) -> None:
        """Test that equal seeds give equal weights and the global RNG is untouched."""
        state = torch.random.get_rng_state()
        a = build_fcrn(tiny_fcrn_config, seed=3)
        b = build_fcrn(tiny_fcrn_config, seed=3)
        assert torch.equal(state, torch.random.get_rng_state())
        assert parameter_digest(a) == parameter_digest(b)
        assert parameter_digest(a) != parameter_digest(build_fcrn(tiny_fcrn_config, seed=4))

    def test_full_size_model_builds(self) -> None:
        """Test the default F=88, N=24 configuration."""
        model = build_fcrn(FcrnConfig())
        assert model.widths == [88, 176]

    def test_indivisible_bins_raise(self) -> None:
        """Test that k_in must be divisible by the pooling."""
        with pytest.raises(ConfigValidationError):
            build_fcrn(FcrnConfig(k_in=257))

    def test_wrong_input_shape_raises(self, tiny_fcrn_config: FcrnConfig) -> None:
        """Test the input shape check."""
        model = build_fcrn(tiny_fcrn_config)
        with pytest.raises(SignalError):
            model(torch.randn(1, 2, 257, 4))

    def test_frames_are_causal(self, tiny_fcrn_config: FcrnConfig) -> None:
        """Test that later frames do not change earlier mask frames."""
        model = build_fcrn(tiny_fcrn_config, seed=1)
        x = torch.randn(1, 2, 260, 6)
        y = x.clone()
        y[..., 4:] = torch.randn(1, 2, 260, 2)
        with torch.no_grad():
            torch.testing.assert_close(model(x)[..., :4], model(y)[..., :4])

    @pytest.mark.slow
    def test_gradcheck(self) -> None:
        """Test analytic gradients against finite differences in double precision."""
        cfg = FcrnConfig(filters=1, kernel_height=3, pool_stages=1)
        model = build_fcrn(cfg, seed=0).double()
        x = torch.randn(1, 2, 260, 2, dtype=torch.float64, requires_grad=True)
        assert torch.autograd.gradcheck(lambda t: model(t).sum(), (x,), eps=1e-6, atol=1e-4)


class TestEnhancement:
    """Test cases for mask application."""

    def test_enhance_spectrum_is_masked_product(self, tiny_fcrn_config: FcrnConfig) -> None:
        """Test S_hat = M * Y elementwise."""
        model = build_fcrn(tiny_fcrn_config, seed=0)
        noisy = torch.randn(1, 5, 260, dtype=torch.complex64)
        mean, std = torch.zeros(2, 260), torch.ones(2, 260)
        s_hat = enhance_spectrum(model, noisy, mean, std)
        assert s_hat.shape == noisy.shape
        assert torch.all(s_hat.abs() <= noisy.abs() + 1e-6)

    def test_forward_mask_layout(self, tiny_fcrn_config: FcrnConfig) -> None:
        """Test the (L, K, 2) single-utterance interface."""
        model = build_fcrn(tiny_fcrn_config)
        mask = forward_mask(model, np.zeros((7, 260, 2)))
        assert mask.data.shape == (7, 260)
        assert mask.max_magnitude <= 1.0
        with pytest.raises(SignalError):
            forward_mask(model, np.zeros((7, 257, 2)))

    def test_mask_bound_for_large_inputs(self, tiny_fcrn_config: FcrnConfig) -> None:
        """Test max |M| <= 1 on normalized inputs scaled by 1e3."""
        model = build_fcrn(tiny_fcrn_config, seed=2)
        rng = np.random.default_rng(0)
        for _ in range(5):
            mask = forward_mask(model, rng.standard_normal((6, 260, 2)) * 1e3)
            assert mask.max_magnitude <= 1.0 + 1e-6

    def test_identity_mask_reproduces_input(self, tiny_fcrn_config: FcrnConfig) -> None:
        """Test that a unit mask returns the input up to framing."""
        x = speech_like(samples_for_frames(12), seed=4)
        y = enhance_utterance(build_fcrn(tiny_fcrn_config), unit_stats(), Waveform(x), True)
        assert len(y) == len(x)
        np.testing.assert_allclose(y.samples[192:-192], x[192:-192], atol=1e-9)

    def test_output_keeps_input_length(self, tiny_fcrn_config: FcrnConfig) -> None:
        """Test that tail samples are returned as zeros."""
        x = speech_like(samples_for_frames(5) + 50, seed=2)
        y = enhance_utterance(build_fcrn(tiny_fcrn_config), unit_stats(), Waveform(x))
        assert len(y) == len(x)
        assert np.all(y.samples[-50:] == 0)

    def test_apply_mask_shape_mismatch(self) -> None:
        """Test that mask and spectrogram must agree in shape."""
        spec = stft(Waveform(speech_like(samples_for_frames(3))))
        with pytest.raises(SignalError):
            apply_mask(ComplexMask(np.ones((2, 260))), spec)
        assert isinstance(apply_mask(ComplexMask(np.ones((3, 260))), spec), ComplexSpectrogram)
