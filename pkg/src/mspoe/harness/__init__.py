from .evaluate import EvalReport, evaluate, ratio_sweep
from .induction import InductionParams, build_induction_model
from .tasks import RetrievalTask, TaskFamily, Vocab, gen_kv_task, gen_mdqa_task

__all__ = [
    "EvalReport", "evaluate", "ratio_sweep", "InductionParams", "build_induction_model",
    "RetrievalTask", "TaskFamily", "Vocab", "gen_kv_task", "gen_mdqa_task",
]
