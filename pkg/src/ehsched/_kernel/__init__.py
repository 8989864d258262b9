"""Numeric hot kernels with a compiled core and a pure-Python fallback.

The compiled extension (``_fast``, Cython) and ``_pure`` implement the same
two functions:

``v_star(gamma, eps)``
    Unique nonnegative root of ``(p + eps) = (1/gamma + p) * ln(1 + gamma*p)``.

``pour(taus, gammas, vstars, eps, target, data_target)``
    Common-glue-level allocation across cells until ``target`` energy (or
    data, with ``data_target=True``) is reached.

Set ``EHSCHED_PURE_PYTHON=1`` to force the fallback (used by the kernel
benchmark and for debugging).
"""

import os

if os.environ.get("EHSCHED_PURE_PYTHON") == "1":
    from ._pure import pour, v_star

    BACKEND = "pure"
else:
    try:
        from ._fast import pour, v_star  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from ._pure import pour, v_star  # type: ignore[no-redef]

        BACKEND = "pure"


def backend() -> str:
    """Name of the kernel implementation selected at import time."""
    return BACKEND


__all__ = ["v_star", "pour", "backend", "BACKEND"]
