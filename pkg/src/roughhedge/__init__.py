"""Pricing, hedging and back-testing of VIX options under lognormal, CIR and rough volatility models."""

__version__ = "0.1.0"
