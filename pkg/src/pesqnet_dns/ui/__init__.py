"""UI package for pesqnet-dns."""

# Direct imports without facade
__all__: list[str] = []
