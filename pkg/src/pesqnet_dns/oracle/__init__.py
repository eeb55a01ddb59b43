"""Ground-truth quality oracles."""

__all__: list[str] = []
