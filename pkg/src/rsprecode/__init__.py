"""Rate-splitting precoder design for the K-user multi-antenna Gaussian downlink."""

__version__ = "0.1.0"
