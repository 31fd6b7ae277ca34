"""Adaptive integration schedules for the thermodynamic variational objective."""

__version__ = "0.1.0"
