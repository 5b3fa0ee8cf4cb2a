"""Select the split/predict kernel backend at import.

The compiled extension is used when present. Set ``AROT_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

if os.environ.get("AROT_PURE_PYTHON", "") not in ("", "0"):
    from arot._kernels_py import best_split, predict, random_split, BACKEND
else:
    try:
        from arot._kernels import best_split, predict, random_split, BACKEND
    except ImportError:
        from arot._kernels_py import best_split, predict, random_split, BACKEND

__all__ = ["best_split", "random_split", "predict", "BACKEND"]
