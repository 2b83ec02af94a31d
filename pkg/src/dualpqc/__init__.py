"""Dual-PQC quantum GAN on a dense statevector simulator."""

__version__ = "0.1.0"
