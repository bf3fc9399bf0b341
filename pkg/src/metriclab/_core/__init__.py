"""Kernel backend selection.

The compiled backend is used when it imports; setting
``METRICLAB_PURE_PYTHON=1`` forces the pure-Python one.
"""

import os

if os.environ.get("METRICLAB_PURE_PYTHON", "") not in ("", "0"):
    from . import _pykernels as kernels
else:
    try:
        from . import _ckernels as kernels
    except ImportError:
        from . import _pykernels as kernels

from ._pykernels import UNJUDGED

BACKEND = kernels.BACKEND

__all__ = ["BACKEND", "UNJUDGED", "kernels"]
