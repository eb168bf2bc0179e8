"""Position-sweep evaluation and the Average / Gap metrics."""

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..pipeline import PipelineConfig, run_baseline, run_mspoe
from ..posenc import Uniform

CSV_COLUMNS = ("encoder_label", "position", "accuracy", "average", "gap")


@dataclass
class EvalReport:
    per_position_accuracy: list
    average: float
    gap: float
    n_samples: int
    encoder_label: str
    config: dict = field(default_factory=dict)

    @classmethod
    def from_accuracies(cls, acc, n_samples, encoder_label, config=None):
        acc = [float(a) for a in acc]
        arr = np.array(acc)
        return cls(acc, float(arr.mean()), float(arr.max() - arr.min()), n_samples, encoder_label, config or {})

    def to_dict(self):
        return {
            "encoder_label": self.encoder_label,
            "per_position_accuracy": self.per_position_accuracy,
            "average": self.average,
            "gap": self.gap,
            "n_samples": self.n_samples,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["per_position_accuracy"]), d["average"], d["gap"], d["n_samples"],
                   d["encoder_label"], d.get("config", {}))

    def csv_rows(self):
        for i, a in enumerate(self.per_position_accuracy):
            yield {"encoder_label": self.encoder_label, "position": i, "accuracy": a,
                   "average": self.average, "gap": self.gap}


def reports_to_csv(reports):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerows(r.csv_rows())
    return buf.getvalue()


def reports_from_csv(text):
    """Rebuild per-label accuracy curves from :func:`reports_to_csv` output."""
    curves = {}
    for row in csv.DictReader(io.StringIO(text)):
        c = curves.setdefault(row["encoder_label"], {"acc": {}, "average": float(row["average"]), "gap": float(row["gap"])})
        c["acc"][int(row["position"])] = float(row["accuracy"])
    return {
        label: {"per_position_accuracy": [c["acc"][i] for i in sorted(c["acc"])], "average": c["average"], "gap": c["gap"]}
        for label, c in curves.items()
    }


def method_label(method):
    if isinstance(method, PipelineConfig):
        strat = method.profiler.label
        return "mspoe" if strat == "aware" else f"mspoe[{strat}]"
    return method.label


def make_runner(model, method, max_new):
    """A callable prompt -> generated tokens for an encoder spec or a pipeline config."""
    if isinstance(method, PipelineConfig):
        return lambda prompt: run_mspoe(model, prompt, method, max_new).output_tokens
    return lambda prompt: run_baseline(model, prompt, method, max_new).output_tokens


def default_workers():
    try:
        return max(0, int(os.environ.get("MSPE_THREADS", "0")))
    except ValueError:
        return 0


def evaluate(model, family, method, n_samples, seed0=0, workers=None):
    """Accuracy with the relevant item at each slot, ``n_samples`` seeds per slot.

    Sample ``s`` at every slot uses seed ``seed0 + s``, so each slot sees the
    same item sets in a different order. Exact match on the answer tokens.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    workers = default_workers() if workers is None else workers
    jobs = [(pos, seed0 + s) for pos in range(family.n_items) for s in range(n_samples)]

    def one(job):
        task = family.make(job[1], job[0])
        runner = make_runner(model, method, len(task.expected_answer))
        return tuple(runner(task.prompt_tokens)) == task.expected_answer

    if workers:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            hits = list(ex.map(one, jobs))  # map keeps job order
    else:
        hits = [one(j) for j in jobs]
    hits = np.array(hits, dtype=np.float64).reshape(family.n_items, n_samples)
    config = {"task": family.to_dict(), "method": method_label(method), "n_samples": n_samples, "seed0": seed0}
    if isinstance(method, PipelineConfig):
        config["pipeline"] = method.to_dict()
    return EvalReport.from_accuracies(hits.mean(axis=1), n_samples, method_label(method), config)


def ratio_sweep(model, family, ratios, n_samples, seed0=0, workers=None):
    """One report per uniform ratio in ``ratios``."""
    ratios = list(ratios)
    if not ratios:
        raise ValueError("ratio list is empty")
    if any(not r > 0 for r in ratios):
        raise ValueError("ratios must be > 0")
    return [evaluate(model, family, Uniform(float(r)), n_samples, seed0, workers) for r in ratios]


def save_reports(reports, json_path=None, csv_path=None, extra=None):
    if json_path:
        doc = {"reports": [r.to_dict() for r in reports]}
        if extra:
            doc.update(extra)
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(reports_to_csv(reports))
