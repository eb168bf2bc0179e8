"""Rotary position embeddings and the position-index mappings built on them.

Four mappings turn integer token positions into the (possibly fractional)
positions fed to the rotation:

* ``Standard``    identity
* ``Uniform(r)``  every position divided by one global ratio (PI)
* ``Grouped(g, w)`` Self-Extend style floor grouping beyond a local window
* ``MultiScale(assignment)`` a per-(layer, head) ratio
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AssignmentCoverageError, ConfigError, ShapeError


@dataclass(frozen=True)
class RopeParams:
    head_dim: int
    base: float = 10000.0

    def __post_init__(self):
        if self.head_dim <= 0 or self.head_dim % 2:
            raise ConfigError(f"head_dim must be a positive even integer, got {self.head_dim}")
        if not self.base > 0:
            raise ConfigError(f"rope base must be positive, got {self.base}")

    @property
    def theta(self):
        return theta_schedule(self)


def theta_schedule(params):
    """theta_k = base ** (-2k / head_dim) for k = 0 .. head_dim/2 - 1."""
    if params.head_dim % 2:
        raise ConfigError("head_dim must be even")
    k = np.arange(params.head_dim // 2, dtype=np.float64)
    return np.power(float(params.base), -2.0 * k / params.head_dim)


def rotate(x, position, params):
    """Rotate each (x[2k], x[2k+1]) plane by ``position * theta_k``.

    ``x`` has shape (..., head_dim); ``position`` broadcasts against the
    leading dimensions. Positions may be fractional.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.head_dim:
        raise ShapeError(f"expected last dim {params.head_dim}, got {x.shape[-1]}")
    pos = np.asarray(position, dtype=np.float64)[..., None]
    angle = pos * theta_schedule(params)
    cos, sin = np.cos(angle), np.sin(angle)
    even, odd = x[..., 0::2], x[..., 1::2]
    out = np.empty(np.broadcast_shapes(x.shape, angle.shape[:-1] + (params.head_dim,)))
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


def attention_score(q, k, q_pos, k_pos, params):
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.shape != (params.head_dim,) or k.shape != (params.head_dim,):
        raise ShapeError(f"q and k must both have length {params.head_dim}")
    return float(rotate(q, q_pos, params) @ rotate(k, k_pos, params))


def linear_ratio_schedule(n_heads, r_min=1.2, r_max=1.8):
    """Evenly spaced ratios r_i = r_min + (i-1)(r_max - r_min)/(n_heads - 1).

    A single head gets ``[r_min]``.
    """
    if n_heads < 1:
        raise ConfigError("n_heads must be >= 1")
    if r_min > r_max:
        raise ConfigError(f"r_min ({r_min}) exceeds r_max ({r_max})")
    if r_min <= 0:
        raise ConfigError("ratios must be positive")
    if n_heads == 1:
        return np.array([float(r_min)])
    step = (r_max - r_min) / (n_heads - 1)
    out = np.array([r_min + i * step for i in range(n_heads)], dtype=np.float64)
    out[-1] = r_max
    return out


@dataclass(frozen=True)
class RatioAssignment:
    """Per-layer, per-head scaling ratios. ``ratios[layer][head]``."""

    ratios: tuple

    def __post_init__(self):
        rows = tuple(tuple(float(r) for r in row) for row in self.ratios)
        if not rows or not rows[0]:
            raise ConfigError("ratio assignment must be non-empty")
        if any(len(row) != len(rows[0]) for row in rows):
            raise ConfigError("every layer must have the same number of heads")
        if any(not (r > 0 and math.isfinite(r)) for row in rows for r in row):
            raise ConfigError("every ratio must be positive and finite")
        object.__setattr__(self, "ratios", rows)

    @property
    def n_layers(self):
        return len(self.ratios)

    @property
    def n_heads(self):
        return len(self.ratios[0])

    @classmethod
    def constant(cls, n_layers, n_heads, value=1.0):
        return cls(tuple((value,) * n_heads for _ in range(n_layers)))

    def ratio(self, layer, head):
        if not (0 <= layer < self.n_layers and 0 <= head < self.n_heads):
            raise AssignmentCoverageError(
                f"assignment ({self.n_layers}x{self.n_heads}) has no entry for layer {layer}, head {head}"
            )
        return self.ratios[layer][head]

    def as_array(self):
        return np.array(self.ratios, dtype=np.float64)

    def to_dict(self):
        return {"n_layers": self.n_layers, "n_heads": self.n_heads, "ratios": [list(r) for r in self.ratios]}

    @classmethod
    def from_dict(cls, d):
        obj = cls(tuple(tuple(r) for r in d["ratios"]))
        if obj.n_layers != d["n_layers"] or obj.n_heads != d["n_heads"]:
            raise ConfigError("ratio document dimensions disagree with its ratios")
        return obj

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Standard:
    label = "rope"


@dataclass(frozen=True)
class Uniform:
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ConfigError(f"uniform ratio must be > 0, got {self.r}")

    @property
    def label(self):
        return f"pi:{self.r:g}"


@dataclass(frozen=True)
class Grouped:
    group: int
    window: int

    def __post_init__(self):
        if self.group < 1:
            raise ConfigError("group size must be >= 1")
        if self.window < 0:
            raise ConfigError("window must be >= 0")

    @property
    def label(self):
        return f"self-extend:{self.group},{self.window}"

    def relative(self, d):
        """Remapped query-key distance for true distance ``d`` (array ok)."""
        d = np.asarray(d)
        far = d // self.group + self.window - self.window // self.group
        return np.where(d <= self.window, d, far)


@dataclass(frozen=True)
class MultiScale:
    assignment: RatioAssignment = field(repr=False)
    label = "mspoe"

    def check_covers(self, n_layers, n_heads):
        a = self.assignment
        if (a.n_layers, a.n_heads) != (n_layers, n_heads):
            raise AssignmentCoverageError(
                f"assignment is {a.n_layers}x{a.n_heads} but the model has {n_layers}x{n_heads}"
            )


def head_ratio(spec, layer, head):
    """Scale divisor for one head, or None for non-separable (grouped) specs."""
    if isinstance(spec, Standard):
        return 1.0
    if isinstance(spec, Uniform):
        return spec.r
    if isinstance(spec, MultiScale):
        return spec.assignment.ratio(layer, head)
    if isinstance(spec, Grouped):
        return None
    raise ConfigError(f"unknown encoder spec {spec!r}")


def map_position(spec, layer, head, query_pos, key_pos):
    """Effective (query, key) positions for one attention pair."""
    if not 0 <= key_pos <= query_pos:
        raise ValueError(f"non-causal pair: key {key_pos} after query {query_pos}")
    q_eff, k_eff = map_positions(spec, layer, head, np.asarray(query_pos), np.asarray(key_pos))
    return float(q_eff), float(k_eff)


def map_positions(spec, layer, head, query_pos, key_pos):
    """Vectorised :func:`map_position`; arrays broadcast against each other."""
    r = head_ratio(spec, layer, head)
    q = np.asarray(query_pos)
    k = np.asarray(key_pos)
    if r is not None:
        return q / r, k / r
    # grouped: keep the query where it is and move the key so the distance is remapped
    q, k = np.broadcast_arrays(q, k)
    rel = spec.relative(q - k)
    return q.astype(np.float64), (q - rel).astype(np.float64)
