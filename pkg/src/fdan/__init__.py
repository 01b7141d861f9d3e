"""Feature distribution adaptation between a visual and an acoustic domain."""

__version__ = "0.1.0"
