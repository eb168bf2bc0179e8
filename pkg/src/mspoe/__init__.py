"""Rotary-position transformer inference with head-wise multi-scale position rescaling."""

from .model import ModelConfig, TransformerModel, forward_decode_step, forward_prefill, greedy_generate
from .pipeline import MsPoEGenerator, PipelineConfig, run_baseline, run_mspoe
from .posenc import Grouped, MultiScale, RatioAssignment, RopeParams, Standard, Uniform
from .profiler import ProfilerConfig, RatioProfiler

__version__ = "0.1.0"
