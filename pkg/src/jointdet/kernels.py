"""Backend selection for the box kernels.

The compiled extension is preferred when importable; otherwise the NumPy
reference implementation takes over. ``JOINTDET_KERNELS=python`` forces the
fallback, ``JOINTDET_KERNELS=compiled`` makes a missing extension an error.
Both backends are bit-identical, so the choice never affects results.
"""

import os

from . import _kernels_py

_requested = os.environ.get("JOINTDET_KERNELS", "").strip().lower()

if _requested == "python":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _kernels_py
        BACKEND = "python"

pairwise_iou = _impl.pairwise_iou
nms_keep = _impl.nms_keep
nms_order = _impl.nms_order
