"""Wind-farm and storage sizing under wake effects and decision-dependent ambiguity."""

__version__ = "0.1.0"
