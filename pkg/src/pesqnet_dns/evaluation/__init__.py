"""Evaluation package for pesqnet-dns."""

__all__: list[str] = []
