"""Neural networks: the FCRN denoiser and the PESQNet quality estimator."""

__all__: list[str] = []
