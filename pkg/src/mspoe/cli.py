"""Command-line entry point: ``mspoe {run,profile,eval,sweep,gen-weights,inspect}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import csv
import json
import sys

import numpy as np

from .errors import MspeError
from .harness import fixtures
from .harness.evaluate import evaluate, ratio_sweep, save_reports
from .harness.tasks import TaskFamily, Vocab
from .model import ModelConfig, TransformerModel, random_weights
from .pipeline import PipelineConfig, run_baseline, run_mspoe
from .posenc import Grouped, Standard, Uniform
from .profiler import ProfilerConfig, assign_ratios, score_snapshot
from .weights import load_weights, save_weights

ENCODER_FORMS = ("rope", "pi:R", "self-extend:G,W", "mspoe")
DEFAULT_SWEEP = (0.5, 1.0, 1.5, 2.0, 2.5)


class UsageError(Exception):
    pass


def parse_encoder(text):
    """Parse ``--encoder``; returns an encoder spec or the string ``"mspoe"``."""
    try:
        if text == "rope":
            return Standard()
        if text == "mspoe":
            return "mspoe"
        if text.startswith("pi:"):
            return Uniform(float(text[3:]))
        if text.startswith("self-extend:"):
            g, w = text[len("self-extend:"):].split(",")
            return Grouped(int(g), int(w))
    except (ValueError, MspeError) as exc:
        raise UsageError(f"bad encoder {text!r}: {exc}; valid forms: {', '.join(ENCODER_FORMS)}") from exc
    raise UsageError(f"unknown encoder {text!r}; valid forms: {', '.join(ENCODER_FORMS)}")


def parse_strategy(text):
    if text in ("aware", "sequential", "entropy"):
        return text, None
    if text.startswith("random:"):
        try:
            return "random", int(text[len("random:"):])
        except ValueError:
            pass
    raise UsageError(f"bad strategy {text!r}; valid: aware, random:SEED, sequential, entropy")


def parse_floats(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc
    if not vals:
        raise UsageError("empty ratio list")
    return vals


def load_model_arg(name):
    """``induction`` names the shipped fixture; anything else is a weight path."""
    if name in fixtures.FIXTURES:
        return fixtures.load_fixture(name)
    cfg, w = load_weights(name)
    return TransformerModel(cfg, w), fixtures.vocab_from_sidecar(name) or _default_vocab(cfg)


def _default_vocab(cfg):
    third = cfg.vocab_size // 3
    return Vocab(range(0, third), range(third, 2 * third), range(2 * third, cfg.vocab_size))


def profiler_config(args):
    strategy, seed = parse_strategy(args.strategy)
    try:
        return ProfilerConfig(alpha=args.alpha, strategy=strategy, seed=seed, r_min=args.rmin, r_max=args.rmax,
                              exclude_first_k=getattr(args, "exclude_first_k", 0))
    except MspeError as exc:
        raise UsageError(str(exc)) from exc


def pipeline_config(args):
    return PipelineConfig(profiler=profiler_config(args), scoring_mode=args.scoring_mode)


def resolve_method(args):
    enc = parse_encoder(args.encoder)
    return pipeline_config(args) if enc == "mspoe" else enc


def task_family(args, vocab):
    n_items = args.n_items if args.n_items is not None else (8 if args.task == "kv" else 10)
    return TaskFamily(args.task, n_items, vocab, args.item_len, args.fact_offset)


def resolve_prompt(args, vocab):
    if args.prompt:
        try:
            return [int(t) for t in args.prompt.split(",")], None
        except ValueError as exc:
            raise UsageError(f"bad --prompt {args.prompt!r}") from exc
    task = task_family(args, vocab).make(args.seed, args.relevant_index)
    return list(task.prompt_tokens), task


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)


def _resolved(args):
    return {k: v for k, v in vars(args).items() if k != "func"}


def cmd_run(args):
    model, vocab = load_model_arg(args.model)
    prompt, task = resolve_prompt(args, vocab)
    method = resolve_method(args)
    max_new = args.max_new if args.max_new is not None else (len(task.expected_answer) if task else 1)
    if isinstance(method, PipelineConfig):
        res = run_mspoe(model, prompt, method, max_new)
    else:
        res = run_baseline(model, prompt, method, max_new, capture=bool(args.dump_snapshot))
    doc = {"config": _resolved(args), "prompt": prompt, "output_tokens": res.output_tokens,
           "timing": res.timing, "encoder_label": res.encoder_label}
    if task is not None:
        doc["expected_answer"] = list(task.expected_answer)
        doc["correct"] = tuple(res.output_tokens) == task.expected_answer
    if res.ratio_assignment is not None:
        doc["ratios"] = res.ratio_assignment.to_dict()
    if args.dump_snapshot and res.snapshot is not None:
        _write_json(args.dump_snapshot, res.snapshot.to_dict())
    if args.dump_ratios and res.ratio_assignment is not None:
        _write_json(args.dump_ratios, res.ratio_assignment.to_dict())
    if args.out:
        _write_json(args.out, doc)
    print(" ".join(map(str, res.output_tokens)))
    return 0


def cmd_profile(args):
    model, vocab = load_model_arg(args.model)
    prompt, _ = resolve_prompt(args, vocab)
    cfg = profiler_config(args)
    res = run_baseline(model, prompt, Standard(), max_new=0, capture=True)
    scores = score_snapshot(res.snapshot, cfg)
    assignment = assign_ratios(scores, cfg)
    rows = [(s.layer, s.head, s.score, assignment.ratio(s.layer, s.head)) for layer in scores for s in layer]
    doc = {"config": _resolved(args), "context_len": res.snapshot.context_len,
           "scores": [{"layer": l, "head": h, "score": s, "ratio": r} for l, h, s, r in rows],
           "ratios": assignment.to_dict()}
    if args.out_json:
        _write_json(args.out_json, doc)
    if args.out_csv:
        with open(args.out_csv, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("layer", "head", "score", "ratio"))
            w.writerows(rows)
    if args.dump_snapshot:
        _write_json(args.dump_snapshot, res.snapshot.to_dict())
    print("layer head score ratio")
    for l, h, s, r in rows:
        print(f"{l:5d} {h:4d} {s:.4f} {r:.4f}")
    return 0


def _print_summary(reports):
    print(f"{'encoder':<24} {'average':>8} {'gap':>8}")
    for r in reports:
        print(f"{r.encoder_label:<24} {r.average:8.4f} {r.gap:8.4f}")


def cmd_eval(args):
    model, vocab = load_model_arg(args.model)
    family = task_family(args, vocab)
    method = resolve_method(args)
    report = evaluate(model, family, method, args.n_samples, seed0=args.seed, workers=args.threads)
    report.config["cli"] = _resolved(args)
    save_reports([report], args.out_json, args.out_csv)
    _print_summary([report])
    return 0


def cmd_sweep(args):
    model, vocab = load_model_arg(args.model)
    family = task_family(args, vocab)
    ratios = parse_floats(args.ratios) if args.ratios is not None else list(DEFAULT_SWEEP)
    reports = ratio_sweep(model, family, ratios, args.n_samples, seed0=args.seed, workers=args.threads)
    save_reports(reports, args.out_json, args.out_csv, extra={"config": _resolved(args), "ratios": ratios})
    _print_summary(reports)
    return 0


def cmd_gen_weights(args):
    if args.kind == "induction":
        fixtures.write_fixture(args.out)
    else:
        cfg = ModelConfig(args.n_layers, args.n_heads, args.head_dim, args.mlp_dim, args.vocab_size,
                          args.max_seq_len, rope_base=args.rope_base)
        save_weights(args.out, cfg, random_weights(cfg, seed=args.seed))
    print(args.out)
    return 0


def cmd_inspect(args):
    cfg, w = load_weights(args.path)
    doc = {"config": cfg.to_dict(), "tensors": {
        name: {"shape": list(np.shape(a)), "mean": float(np.mean(a)), "absmax": float(np.max(np.abs(a)))}
        for name, a in w.named_tensors()
    }}
    print(json.dumps(doc, indent=2))
    return 0


def _add_model(p):
    p.add_argument("--model", default="induction", help="weight file path or fixture name (induction)")


def _add_task(p):
    p.add_argument("--task", choices=("kv", "mdqa"), default="kv")
    p.add_argument("--n-items", type=int, default=None, help="pairs (kv, default 8) or documents (mdqa, default 10)")
    p.add_argument("--item-len", type=int, default=4, help="tokens per mdqa document")
    p.add_argument("--fact-offset", type=int, default=None, help="fixed slot of the fact in each mdqa document")
    p.add_argument("--seed", type=int, default=0)


def _add_prompt(p):
    _add_task(p)
    p.add_argument("--prompt", default=None, help="comma-separated token ids; overrides --task")
    p.add_argument("--relevant-index", type=int, default=0)


def _add_mspoe(p):
    p.add_argument("--alpha", type=float, default=3.0)
    p.add_argument("--rmin", type=float, default=1.2)
    p.add_argument("--rmax", type=float, default=1.8)
    p.add_argument("--strategy", default="aware", help="aware | random:SEED | sequential | entropy")


def build_parser():
    parser = argparse.ArgumentParser(prog="mspoe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="generate with one encoder or the multi-scale pipeline")
    _add_model(p)
    _add_prompt(p)
    _add_mspoe(p)
    p.add_argument("--encoder", default="mspoe", help="rope | pi:R | self-extend:G,W | mspoe")
    p.add_argument("--scoring-mode", choices=("separate", "inplace"), default="separate")
    p.add_argument("--max-new", type=int, default=None)
    p.add_argument("--dump-snapshot", default=None)
    p.add_argument("--dump-ratios", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("profile", help="score heads and print the ratio assignment")
    _add_model(p)
    _add_prompt(p)
    _add_mspoe(p)
    p.add_argument("--exclude-first-k", type=int, default=0)
    p.add_argument("--out-json", default=None)
    p.add_argument("--out-csv", default=None)
    p.add_argument("--dump-snapshot", default=None)
    p.set_defaults(func=cmd_profile)

    for name, func, helptext in (("eval", cmd_eval, "position-sweep accuracy for one method"),
                                 ("sweep", cmd_sweep, "position-sweep accuracy across uniform ratios")):
        p = sub.add_parser(name, help=helptext)
        _add_model(p)
        _add_task(p)
        p.add_argument("--n-samples", type=int, default=100)
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: $MSPE_THREADS or 0)")
        p.add_argument("--out-json", default=None)
        p.add_argument("--out-csv", default=None)
        if name == "eval":
            _add_mspoe(p)
            p.add_argument("--encoder", default="rope", help="rope | pi:R | self-extend:G,W | mspoe")
            p.add_argument("--scoring-mode", choices=("separate", "inplace"), default="separate")
        else:
            p.add_argument("--ratios", default=None, help="comma-separated, default 0.5,1.0,1.5,2.0,2.5")
        p.set_defaults(func=func)

    p = sub.add_parser("gen-weights", help="write a weight file")
    p.add_argument("--kind", choices=("induction", "random"), default="induction")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-layers", type=int, default=2)
    p.add_argument("--n-heads", type=int, default=4)
    p.add_argument("--head-dim", type=int, default=8)
    p.add_argument("--mlp-dim", type=int, default=64)
    p.add_argument("--vocab-size", type=int, default=64)
    p.add_argument("--max-seq-len", type=int, default=256)
    p.add_argument("--rope-base", type=float, default=10000.0)
    p.set_defaults(func=cmd_gen_weights)

    p = sub.add_parser("inspect", help="print a weight file's config and tensor summary")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mspoe: error: {exc}", file=sys.stderr)
        return 2
    except (MspeError, OSError, ValueError) as exc:
        print(f"mspoe: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
