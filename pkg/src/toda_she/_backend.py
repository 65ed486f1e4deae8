"""Kernel backend selection.

The compiled extension is preferred; the numpy fallback is used when it is
missing or when ``TODA_SHE_BACKEND=python`` is set before import.
"""
import os

from . import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if os.environ.get("TODA_SHE_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"


def newton_rows(values, nodes):
    return kernels.newton_rows(values, nodes)


def det_lu(mats):
    return kernels.det_lu(mats)


def dd_det(values, xnodes, ynodes=None):
    return kernels.dd_det(values, xnodes, ynodes)


def ordered_minor_sum(F, G):
    if len(F) > 3:
        return _kernels_py.ordered_minor_sum(F, G)
    return kernels.ordered_minor_sum(F, G)
