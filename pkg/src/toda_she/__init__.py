"""Stochastic heat equation on a lattice, determinantal multilayer fields and
their Toda / Wronskian structure, with numerical checks of the identities."""

__version__ = "0.1.0"

from ._backend import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]
