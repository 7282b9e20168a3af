"""Kernel dispatch: compiled extension when importable, numpy fallback otherwise.

Set ``MFGHOMOG_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("MFGHOMOG_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

KernelBracketFailure = _impl.KernelBracketFailure
f_inverse = _impl.f_inverse
f_inverse_array = _impl.f_inverse_array
solve_level = _impl.solve_level


def use_backend(name: str):
    """Switch implementations at runtime (``"cython"`` or ``"python"``); used by the benchmark."""
    global _impl, BACKEND, KernelBracketFailure, f_inverse, f_inverse_array, solve_level
    if name == "python":
        _impl = _kernels_py
    elif name == "cython":
        from . import _kernels as _impl  # noqa: F811  (raises if not built)
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name
    KernelBracketFailure = _impl.KernelBracketFailure
    f_inverse = _impl.f_inverse
    f_inverse_array = _impl.f_inverse_array
    solve_level = _impl.solve_level
