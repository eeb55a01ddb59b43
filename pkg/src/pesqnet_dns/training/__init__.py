"""Training package for pesqnet-dns.

Losses, schedules, checkpoints and the four training phases.
"""

__all__: list[str] = []
