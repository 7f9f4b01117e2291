"""Joint communication/sensing beamforming with NOMA-style sensing-interference cancellation."""

__version__ = "0.1.0"
