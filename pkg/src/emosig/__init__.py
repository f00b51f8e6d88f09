"""Activity-robust emotion recognition from multi-channel physiological signals."""

__version__ = "0.1.0"
