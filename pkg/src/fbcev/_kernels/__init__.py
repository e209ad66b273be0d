"""Kernel backend selection.

The Cython extension is preferred when it was built; otherwise the NumPy
reference implementation is used.  Set FBCEV_PURE=1 to force the fallback
(used by the benchmark and the backend-equivalence tests).
"""

import os

if os.environ.get("FBCEV_PURE"):
    from ._ref import exp_dot_sums, psor_solve

    BACKEND = "python"
else:
    try:
        from ._core import exp_dot_sums, psor_solve

        BACKEND = "compiled"
    except ImportError:
        from ._ref import exp_dot_sums, psor_solve

        BACKEND = "python"

__all__ = ["exp_dot_sums", "psor_solve", "BACKEND"]
