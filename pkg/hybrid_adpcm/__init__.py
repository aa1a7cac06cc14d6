"""ADPCM speech coder with a per-frame switched LPC/MLP predictor."""

__version__ = "0.1.0"
