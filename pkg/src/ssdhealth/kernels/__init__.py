"""Hot numeric kernels, dispatched to numba or numpy.

Both implementations live side by side (``_numba`` and ``_numpy``) with the
same signatures; which one is re-exported here is decided once at import by
``ssdhealth._backend``. Tests and the benchmark import the two modules
directly to compare them.
"""

from .._backend import BACKEND, USE_NUMBA

if USE_NUMBA:
    from . import _numba as impl
else:
    from . import _numpy as impl

matmul = impl.matmul
sigmoid = impl.sigmoid
softmax_rows = impl.softmax_rows
gru_scan_forward = impl.gru_scan_forward
gru_scan_backward = impl.gru_scan_backward
mha_forward = impl.mha_forward
mha_backward = impl.mha_backward
layernorm_forward = impl.layernorm_forward
layernorm_backward = impl.layernorm_backward

__all__ = [
    "BACKEND",
    "matmul",
    "sigmoid",
    "softmax_rows",
    "gru_scan_forward",
    "gru_scan_backward",
    "mha_forward",
    "mha_backward",
    "layernorm_forward",
    "layernorm_backward",
]
