"""Tight-binding screening of fluorescent point defects in monolayer hBN."""

__version__ = "0.1.0"
