"""Core package for pesqnet-dns.

Shared domain types (waveforms, spectrograms, rooms, scores) and the run
configuration.
"""

__all__: list[str] = []
