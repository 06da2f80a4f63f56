"""Dense 2-D float64 primitives.

A "matrix" here is simply a 2-D ``float64`` ndarray; row vectors are 1-D
arrays. Functions never mutate their inputs.
"""

import numpy as np

from . import kernels
from .errors import DimensionError, InvalidInputError

LAYER_NORM_EPS = 1e-5


def as_matrix(m, name="matrix"):
    a = np.asarray(m, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise DimensionError(f"{name} must be a non-empty 2-D matrix, got shape {a.shape}")
    return np.ascontiguousarray(a)


def matmul(a, b):
    """Matrix product with the inner index summed in ascending order."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return kernels.matmul(a, b)


def softmax_rows(m):
    m = as_matrix(m)
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("softmax_rows needs finite input")
    return kernels.softmax_rows(m)


def layer_norm(x, gain, bias, eps=LAYER_NORM_EPS):
    """Normalise one row vector: gain * (x - mean) / sqrt(var + eps) + bias.

    The variance is the population variance (divide by the length).
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    gain = np.asarray(gain, dtype=np.float64).ravel()
    bias = np.asarray(bias, dtype=np.float64).ravel()
    if not (x.size == gain.size == bias.size) or x.size == 0:
        raise DimensionError(
            f"layer_norm lengths differ: x={x.size}, gain={gain.size}, bias={bias.size}"
        )
    if eps <= 0:
        raise InvalidInputError(f"eps must be positive, got {eps}")
    y, _, _ = kernels.layernorm_forward(x.reshape(1, 1, -1), gain, bias, float(eps))
    return y.reshape(-1)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return kernels.sigmoid(x)


def tanh(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def _same_shape(a, b, op):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes differ {a.shape} vs {b.shape}")
    return a, b


def hadamard(a, b):
    a, b = _same_shape(a, b, "hadamard")
    return a * b


def add(a, b):
    a, b = _same_shape(a, b, "add")
    return a + b


def sub(a, b):
    a, b = _same_shape(a, b, "sub")
    return a - b


def scale(a, s):
    return np.asarray(a, dtype=np.float64) * float(s)


_UNARY = {"sigmoid": sigmoid, "tanh": tanh}
_BINARY = {"hadamard": hadamard, "add": add, "sub": sub}


def elementwise(op, *operands):
    """Apply a named map: sigmoid, tanh, hadamard, add, sub or scale."""
    if op in _UNARY:
        if len(operands) != 1:
            raise InvalidInputError(f"{op} takes one operand, got {len(operands)}")
        return _UNARY[op](operands[0])
    if op in _BINARY:
        if len(operands) != 2:
            raise InvalidInputError(f"{op} takes two operands, got {len(operands)}")
        return _BINARY[op](*operands)
    if op == "scale":
        if len(operands) != 2:
            raise InvalidInputError("scale takes (matrix, scalar)")
        return scale(*operands)
    raise InvalidInputError(f"unknown elementwise map {op!r}")
