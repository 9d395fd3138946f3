"""Predictive-modeling research engine for systematic value investing."""

__version__ = "0.1.0"
