"""Photoacoustic tomography reconstruction toolkit with a dual-encoder Y-Net."""
__version__ = "0.1.0"
