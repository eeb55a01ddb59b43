"""Signal front end: STFT/ISTFT and WAV I/O."""

__all__: list[str] = []
