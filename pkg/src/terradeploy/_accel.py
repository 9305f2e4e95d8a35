"""Backend selection for the numeric kernels.

The hot loops (terrain evaluation, LoS bisection, batched fitness and repair)
exist twice: numba-compiled scalar kernels in ``_kernels_nb`` and a pure
numpy implementation in ``_kernels_np``. ``TERRADEPLOY_NUMBA=0`` forces the
numpy path; otherwise numba is used whenever it imports.
"""

import os

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_FLAG = os.environ.get("TERRADEPLOY_NUMBA", "1").strip().lower()
USE_NUMBA = HAVE_NUMBA and _FLAG not in ("0", "false", "no", "off")


def get_backend(name=None):
    """Return the kernel module for ``name`` ("numba", "numpy" or None = default)."""
    if name is None:
        name = "numba" if USE_NUMBA else "numpy"
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        from . import _kernels_nb

        return _kernels_nb
    if name == "numpy":
        from . import _kernels_np

        return _kernels_np
    raise ValueError(f"unknown backend {name!r}")


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
