"""Automated curriculum learning: a nonstationary bandit chooses which task a
small sequence model trains on next, rewarded by measured learning progress."""

__version__ = "0.1.0"
