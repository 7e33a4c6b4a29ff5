"""Numba availability switch.

Hot kernels in :mod:`consmax._kernels` come in two flavours: an ``@njit``
version and a pure-numpy fallback. The fallback is selected when numba is
not importable or when the environment variable ``CONSMAX_NO_NUMBA`` is set
to anything other than ``""``/``"0"``. The flag is read once at import time.
"""

from __future__ import annotations

import functools
import os

_DISABLED = os.environ.get("CONSMAX_NO_NUMBA", "0") not in ("", "0")

try:
    if _DISABLED:
        raise ImportError("numba disabled via CONSMAX_NO_NUMBA")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):  # noqa: D103 - signature mirror of numba.njit
        def decorate(func):
            @functools.wraps(func)
            def wrapper(*a, **kw):
                return func(*a, **kw)

            return wrapper

        if args and callable(args[0]):
            return decorate(args[0])
        return decorate


__all__ = ["njit", "NUMBA_ENABLED"]
