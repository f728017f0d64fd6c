"""Supervised variational autoencoder for in-finger vision, on a synthetic soft-finger plant."""

__version__ = "0.1.0"
