"""Weighted sum-rate maximization for uplink CRAN with a massive-MIMO wireless fronthaul."""

__version__ = "0.1.0"
