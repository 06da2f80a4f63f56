"""Kernel backend selection.

Set ``SSDHEALTH_DISABLE_NUMBA=1`` to force the pure-numpy kernels. Numba is
used otherwise when importable.
"""

import os

_FALSEY = {"", "0", "false", "no", "off"}


def numba_requested() -> bool:
    return os.environ.get("SSDHEALTH_DISABLE_NUMBA", "").strip().lower() in _FALSEY


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = numba_requested() and numba_available()
BACKEND = "numba" if USE_NUMBA else "numpy"
