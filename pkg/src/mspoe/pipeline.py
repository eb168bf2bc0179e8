"""End-to-end multi-scale inference.

Scoring prefill -> per-layer ratio assignment -> prefill under the assigned
ratios -> greedy decoding with the ratios frozen.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import ConfigError, SequenceLengthError
from .model import AttentionSnapshot, decode_from, forward_prefill
from .posenc import Grouped, MultiScale, RatioAssignment, Standard, Uniform, head_ratio
from .profiler import HeadScore, ProfilerConfig, assign_ratios, score_snapshot

SCORING_MODES = ("separate", "inplace")


@dataclass(frozen=True)
class PipelineConfig:
    profiler: ProfilerConfig = field(default_factory=ProfilerConfig)
    scoring_mode: str = "separate"
    encoder_baseline: object = field(default_factory=Standard)

    def __post_init__(self):
        if self.scoring_mode not in SCORING_MODES:
            raise ConfigError(f"scoring_mode must be one of {SCORING_MODES}")
        if self.scoring_mode == "inplace" and isinstance(self.encoder_baseline, Grouped):
            raise ConfigError("in-place scoring needs a per-head ratio baseline, not a grouped encoder")

    def to_dict(self):
        p = self.profiler
        return {
            "alpha": p.alpha, "strategy": p.label, "r_min": p.r_min, "r_max": p.r_max,
            "exclude_first_k": p.exclude_first_k, "scoring_mode": self.scoring_mode,
            "encoder_baseline": self.encoder_baseline.label,
        }


@dataclass
class GenerationResult:
    output_tokens: list
    ratio_assignment: RatioAssignment = None
    snapshot: AttentionSnapshot = None
    scores: list = None
    timing: dict = field(default_factory=dict)
    encoder_label: str = ""


def _check_room(model, prompt, max_new):
    if max_new < 0:
        raise ValueError("max_new must be >= 0")
    if len(prompt) + max_new > model.config.max_seq_len:
        raise SequenceLengthError(
            f"prompt ({len(prompt)}) + max_new ({max_new}) exceeds max_seq_len={model.config.max_seq_len}"
        )


def _continue(model, logits, cache, encoder, max_new):
    return decode_from(model, logits, cache, encoder, max_new) if max_new else []


def run_mspoe(model, prompt_tokens, cfg=None, max_new=1, assignment_override=None):
    """Generate ``max_new`` tokens with head-wise rescaled positions.

    ``assignment_override`` replaces the computed assignment before the
    generation prefill (the scoring pass still runs and is reported).
    """
    cfg = cfg or PipelineConfig()
    prompt = np.asarray(prompt_tokens, dtype=np.int64)
    _check_room(model, prompt, max_new)
    if cfg.scoring_mode == "inplace":
        return _run_inplace(model, prompt, cfg, max_new, assignment_override)

    timing = {}
    t0 = time.perf_counter()
    scoring = forward_prefill(model, prompt, cfg.encoder_baseline, capture=True)
    t1 = time.perf_counter()
    scores = score_snapshot(scoring.snapshot, cfg.profiler)
    assignment = assign_ratios(scores, cfg.profiler)
    if assignment_override is not None:
        assignment = assignment_override
    encoder = MultiScale(assignment)
    t2 = time.perf_counter()
    res = forward_prefill(model, prompt, encoder)
    t3 = time.perf_counter()
    out = _continue(model, res.logits, res.cache, encoder, max_new)
    t4 = time.perf_counter()
    timing.update(scoring_prefill=t1 - t0, assign=t2 - t1, prefill=t3 - t2, decode=t4 - t3)
    return GenerationResult(out, assignment, scoring.snapshot, scores, timing, "mspoe")


def _run_inplace(model, prompt, cfg, max_new, assignment_override):
    n_layers, n_heads = model.config.n_layers, model.config.n_heads
    base = [[head_ratio(cfg.encoder_baseline, li, h) for h in range(n_heads)] for li in range(n_layers)]
    assigned = [list(row) for row in base]
    scores = []

    def hook(layer, last_rows):
        snap = AttentionSnapshot([last_rows], last_rows.shape[1])
        # score_snapshot numbers a one-layer snapshot as layer 0; restore the real index
        layer_scores = [[HeadScore(layer, s.head, s.score) for s in score_snapshot(snap, cfg.profiler)[0]]]
        scores.extend(layer_scores)
        if assignment_override is not None:
            assigned[layer] = list(assignment_override.ratios[layer])
        else:
            assigned[layer] = list(assign_ratios(layer_scores, cfg.profiler).ratios[0])
        return MultiScale(RatioAssignment(tuple(map(tuple, assigned))))

    t0 = time.perf_counter()
    res = forward_prefill(model, prompt, cfg.encoder_baseline, capture=True, layer_hook=hook)
    t1 = time.perf_counter()
    encoder = res.encoder
    out = _continue(model, res.logits, res.cache, encoder, max_new)
    t2 = time.perf_counter()
    timing = {"scoring_prefill": t1 - t0, "decode": t2 - t1}
    return GenerationResult(out, encoder.assignment, res.snapshot, scores, timing, "mspoe")


def run_baseline(model, prompt_tokens, encoder, max_new=1, capture=False):
    prompt = np.asarray(prompt_tokens, dtype=np.int64)
    _check_room(model, prompt, max_new)
    t0 = time.perf_counter()
    res = forward_prefill(model, prompt, encoder, capture=capture)
    t1 = time.perf_counter()
    out = _continue(model, res.logits, res.cache, encoder, max_new)
    t2 = time.perf_counter()
    assignment = encoder.assignment if isinstance(encoder, MultiScale) else None
    return GenerationResult(out, assignment, res.snapshot, None,
                            {"prefill": t1 - t0, "decode": t2 - t1}, encoder.label)


def pi_encoder_for(profiler_cfg):
    """The PI baseline at the mean of the multi-scale ratio range."""
    return Uniform((profiler_cfg.r_min + profiler_cfg.r_max) / 2)


class MsPoEGenerator(BaseEstimator):
    """Estimator-style front end to :func:`run_mspoe`.

    ``fit(prompt)`` runs the scoring prefill and stores ``assignment_``,
    ``scores_`` and ``snapshot_``; ``predict()`` generates from the fitted
    prompt with those ratios frozen.
    """

    def __init__(self, model=None, alpha=3.0, strategy="aware", seed=None, r_min=1.2, r_max=1.8,
                 scoring_mode="separate", max_new=1):
        self.model = model
        self.alpha = alpha
        self.strategy = strategy
        self.seed = seed
        self.r_min = r_min
        self.r_max = r_max
        self.scoring_mode = scoring_mode
        self.max_new = max_new

    def _pipeline_config(self):
        prof = ProfilerConfig(alpha=self.alpha, strategy=self.strategy, seed=self.seed,
                              r_min=self.r_min, r_max=self.r_max)
        return PipelineConfig(profiler=prof, scoring_mode=self.scoring_mode)

    def fit(self, prompt, y=None):
        if self.model is None:
            raise ConfigError("MsPoEGenerator needs a model")
        res = run_mspoe(self.model, prompt, self._pipeline_config(), max_new=self.max_new)
        self.prompt_ = np.asarray(prompt, dtype=np.int64)
        self.assignment_ = res.ratio_assignment
        self.scores_ = res.scores
        self.snapshot_ = res.snapshot
        self.result_ = res
        return self

    def predict(self, prompt=None):
        if not hasattr(self, "assignment_"):
            raise NotFittedError("call fit(prompt) first")
        if prompt is None:
            return list(self.result_.output_tokens)
        return run_baseline(self.model, prompt, MultiScale(self.assignment_), self.max_new).output_tokens
