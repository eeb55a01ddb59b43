"""Data package for pesqnet-dns."""

# Import directly from modules without facade
__all__: list[str] = []
