"""Kernel backend selection.

The compiled extension is preferred when built; the NumPy twin is the
fallback. ``GCRL_KERNELS=numpy`` or ``GCRL_KERNELS=cython`` forces a
backend (the latter raises if the extension is missing).
"""

import os

from gcrl.nn import _kernels_np

_requested = os.environ.get("GCRL_KERNELS", "auto").lower()

if _requested == "numpy":
    kernels = _kernels_np
elif _requested in ("auto", "cython"):
    try:
        from gcrl.nn import _kernels_cy as kernels  # type: ignore[no-redef]
    except ImportError:
        if _requested == "cython":
            raise ImportError(
                "GCRL_KERNELS=cython but the compiled extension is not "
                "available; build it with `pip install -e .` or "
                "`python setup.py build_ext --inplace`"
            )
        kernels = _kernels_np
else:
    raise ValueError(f"unknown GCRL_KERNELS value {_requested!r}")


def kernel_backend() -> str:
    """Name of the active kernel implementation ("cython" or "numpy")."""
    return kernels.BACKEND_NAME


def available_backends():
    """All importable kernel modules, compiled one first."""
    mods = []
    try:
        from gcrl.nn import _kernels_cy

        mods.append(_kernels_cy)
    except ImportError:
        pass
    mods.append(_kernels_np)
    return mods
