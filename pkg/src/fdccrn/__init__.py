"""Weighted sum-rate optimization for a wireless-powered cognitive relay
network assisted by full-duplex energy access points."""

__version__ = "0.1.0"
