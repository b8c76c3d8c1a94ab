"""Kernel dispatch: the compiled extension when built, else pure Python.

``BACKEND`` names the implementation in use. Set ``PATCHERIZER_PURE=1`` to
force the fallback.
"""

import os

if os.environ.get("PATCHERIZER_PURE") == "1":
    from . import _kernels_py as _impl
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as _impl
        BACKEND = "python"

lcs_length = _impl.lcs_length
count_pairs = _impl.count_pairs
merge_pair = _impl.merge_pair
apply_merges = _impl.apply_merges

__all__ = ["BACKEND", "lcs_length", "count_pairs", "merge_pair", "apply_merges"]
