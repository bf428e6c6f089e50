"""Detection-gated active snoring cancellation."""

__version__ = "0.1.0"
