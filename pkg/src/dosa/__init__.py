"""Dual-output spiking networks for (continual) multi-label learning."""

__version__ = "0.1.0"
