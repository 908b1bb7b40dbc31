"""Range conditions and reconstruction for half-time wave data."""

__version__ = "0.1.0"
