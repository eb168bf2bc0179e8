"""Head scoring and head-wise ratio assignment.

Each head's last-query attention row is reduced to one number; heads are
then ranked per layer and the highest-scoring head gets the smallest ratio
of the linear schedule.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ConfigError, SnapshotIncompleteError, ValidationError
from .numerics import check_distribution, entropy
from .posenc import RatioAssignment, linear_ratio_schedule

STRATEGIES = ("aware", "random", "sequential", "entropy")


@dataclass(frozen=True)
class ProfilerConfig:
    alpha: float = 3.0
    strategy: str = "aware"
    seed: int = None
    r_min: float = 1.2
    r_max: float = 1.8
    exclude_first_k: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.strategy == "random" and self.seed is None:
            raise ConfigError("the random strategy needs an explicit seed")
        if self.r_min > self.r_max:
            raise ConfigError("r_min must not exceed r_max")
        if self.exclude_first_k < 0:
            raise ConfigError("exclude_first_k must be >= 0")

    @property
    def label(self):
        return f"random:{self.seed}" if self.strategy == "random" else self.strategy


@dataclass(frozen=True)
class HeadScore:
    layer: int
    head: int
    score: float


def _count_above_mean(a, alpha):
    return int(np.count_nonzero(a >= alpha * (a.sum() / a.size)))


def position_awareness_score(attn, alpha=3.0):
    """Fraction of positions whose weight is at least ``alpha`` times the mean weight."""
    if len(attn) == 0:
        raise ValidationError("attention vector is empty")
    a = check_distribution(attn, "attention row")
    return _count_above_mean(a, alpha) / a.size


def position_awareness_score_normalized(attn, alpha=3.0):
    """Same score using mean = 1/l, valid because rows sum to one."""
    a = check_distribution(attn, "attention row")
    return int(np.count_nonzero(a >= alpha / a.size)) / a.size


def _check_snapshot(snapshot):
    if not snapshot.rows:
        raise SnapshotIncompleteError("snapshot has no layers")
    n_heads = max(r.shape[0] for r in snapshot.rows)
    for li, rows in enumerate(snapshot.rows):
        if rows.shape[0] != n_heads:
            raise SnapshotIncompleteError(f"snapshot missing (layer {li}, head {rows.shape[0]})")
        if rows.shape[1] != snapshot.context_len:
            raise SnapshotIncompleteError(f"layer {li} rows have length {rows.shape[1]}, expected {snapshot.context_len}")
    return n_heads


def _aware_score(row, cfg):
    a = np.asarray(row, dtype=np.float64)[cfg.exclude_first_k:]
    if cfg.exclude_first_k == 0:
        return position_awareness_score(a, cfg.alpha)
    if a.size == 0:
        raise ValidationError("exclude_first_k removes every position")
    if a.sum() <= 0:
        return 0.0
    return _count_above_mean(a, cfg.alpha) / a.size


def score_snapshot(snapshot, cfg):
    """Per-layer lists of :class:`HeadScore` under ``cfg.strategy``."""
    n_heads = _check_snapshot(snapshot)
    rng = np.random.default_rng(cfg.seed) if cfg.strategy == "random" else None
    out = []
    for li, rows in enumerate(snapshot.rows):
        if cfg.strategy == "aware":
            vals = [_aware_score(rows[h], cfg) for h in range(n_heads)]
        elif cfg.strategy == "entropy":
            vals = [entropy(rows[h]) for h in range(n_heads)]
        elif cfg.strategy == "sequential":
            vals = [float(n_heads - h) for h in range(n_heads)]
        else:
            vals = list(rng.random(n_heads))
        out.append([HeadScore(li, h, float(v)) for h, v in enumerate(vals)])
    return out


def rank_heads(values):
    """Head indices by descending score; ties keep ascending head index."""
    return sorted(range(len(values)), key=lambda h: (-values[h], h))


def assign_ratios(scores, cfg):
    """Highest score gets ``r_min``, lowest gets ``r_max``, per layer."""
    rows = []
    n_heads = len(scores[0])
    schedule = linear_ratio_schedule(n_heads, cfg.r_min, cfg.r_max)
    for li, layer in enumerate(scores):
        if len(layer) != n_heads or sorted(s.head for s in layer) != list(range(n_heads)):
            raise SnapshotIncompleteError(f"layer {li} scores do not cover heads 0..{n_heads - 1}")
        by_head = {s.head: s.score for s in layer}
        order = rank_heads([by_head[h] for h in range(n_heads)])
        ratios = [0.0] * n_heads
        for rank, h in enumerate(order):
            ratios[h] = float(schedule[rank])
        rows.append(tuple(ratios))
    return RatioAssignment(tuple(rows))


def scores_array(scores):
    return np.array([[s.score for s in layer] for layer in scores], dtype=np.float64)


class RatioProfiler(BaseEstimator, TransformerMixin):
    """Estimator wrapper: ``fit(snapshot)`` learns ``scores_`` and ``assignment_``.

    ``transform(snapshot)`` returns the (n_layers, n_heads) score matrix.
    """

    def __init__(self, alpha=3.0, strategy="aware", seed=None, r_min=1.2, r_max=1.8, exclude_first_k=0):
        self.alpha = alpha
        self.strategy = strategy
        self.seed = seed
        self.r_min = r_min
        self.r_max = r_max
        self.exclude_first_k = exclude_first_k

    def _config(self):
        return ProfilerConfig(**self.get_params())

    def fit(self, snapshot, y=None):
        cfg = self._config()
        self.scores_ = score_snapshot(snapshot, cfg)
        self.assignment_ = assign_ratios(self.scores_, cfg)
        self.n_layers_, self.n_heads_ = self.assignment_.n_layers, self.assignment_.n_heads
        return self

    def transform(self, snapshot):
        return scores_array(score_snapshot(snapshot, self._config()))
