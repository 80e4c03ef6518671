"""Behavioural alpha factors, dual-task return models and signal evaluation"""

__version__ = "0.1.0"
