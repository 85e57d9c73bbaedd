"""Spectra of block-rescaled empirical covariance matrices."""

__version__ = "0.1.0"
