"""Multitask fine-tuning and evaluation toolkit for the NEU-ESC corpus."""

__version__ = "0.1.0"
