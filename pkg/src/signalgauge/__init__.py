"""Measure the amount (ME) and quality (SNR) of signal in image datasets and
size CNNs accordingly."""

__version__ = "0.1.0"
