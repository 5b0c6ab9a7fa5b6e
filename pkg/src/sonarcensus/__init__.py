"""Synthetic sonar scene simulation and multitask count estimation."""

__version__ = "0.1.0"
