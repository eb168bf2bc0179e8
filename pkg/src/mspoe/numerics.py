"""Dense float64 primitives: matmul, softmax, entropy, rms_norm.

Vectors and matrices are plain numpy arrays (1-D and 2-D, dtype float64).
"""

import numpy as np

from .errors import ShapeError, ValidationError

_PROB_TOL = 1e-9


def as_vector(v, name="v"):
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def as_matrix(a, name="a"):
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax(v, axis=-1):
    """Max-subtracted softmax along ``axis``.

    Accepts any array with a non-empty ``axis``; a 1-D input returns a
    probability vector.
    """
    x = np.asarray(v, dtype=np.float64)
    if x.size == 0 or x.shape[axis] == 0:
        raise ValidationError("softmax of an empty vector")
    if not np.all(np.isfinite(x)):
        raise ValidationError("softmax input must be finite")
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def masked_softmax(scores, mask):
    """Softmax over the entries where ``mask`` is True; masked entries get 0."""
    x = np.where(mask, scores, -np.inf)
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def check_distribution(p, name="p", tol=_PROB_TOL):
    p = as_vector(p, name)
    if p.size == 0:
        raise ValidationError(f"{name} is empty")
    if not np.all(np.isfinite(p)):
        raise ValidationError(f"{name} has non-finite entries")
    if np.any(p < 0):
        raise ValidationError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > tol:
        raise ValidationError(f"{name} sums to {p.sum()!r}, not 1")
    return p


def entropy(p):
    """Shannon entropy in nats with 0 * ln 0 = 0."""
    p = check_distribution(p)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def rms_norm(v, gain, eps=1e-6):
    """``v * gain / sqrt(mean(v**2) + eps)`` along the last axis."""
    v = np.asarray(v, dtype=np.float64)
    gain = as_vector(gain, "gain")
    if v.shape[-1] != gain.shape[0]:
        raise ShapeError(f"length mismatch: {v.shape[-1]} vs gain {gain.shape[0]}")
    if eps < 0:
        raise ValidationError("eps must be non-negative")
    ms = np.mean(v * v, axis=-1, keepdims=True)
    return v * gain / np.sqrt(ms + eps)


def silu(x):
    return x / (1.0 + np.exp(-x))
