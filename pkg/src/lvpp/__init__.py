"""Latent-variable proximal Galerkin finite elements for bound constraints."""

__version__ = "0.1.0"
