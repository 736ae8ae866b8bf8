"""Command-line interface: ``wikivandal <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluate as ev
from .features import ScalingSpec, SparseDataset, VocabMap, featurize_cases, read_dataset, write_dataset
from .ingest import DEFAULT_WINDOW, DumpParser, build_cases, read_cases, write_cases
from .model import TrainConfig, fit_pav, load_model, save_model, train
from .pipeline import (DEFAULT_C_VALUES, ExperimentConfig, SplitSpec, StageError, SweepResult, eval_float,
                       learning_curve, run_experiment, split_indices, sweep_C)
from .tokens import tokenize

log = logging.getLogger("wikivandal")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scaling", choices=("atan", "binary", "log-lin"), default="binary")
    p.add_argument("--c-value", type=eval_float, default=0.125)
    p.add_argument("--cost-fp", type=float, default=4.0, help="false-positive cost c10 (c01 = 1)")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--out-dir", type=Path, default=Path("."))


def _read_data(path, n_features=None) -> SparseDataset:
    """Load a dataset file; ids at or beyond ``n_features`` widen the space (models drop them)."""
    with open(path, encoding="utf-8") as fh:
        instances = read_dataset(fh)
    top = max((inst.features.ids[-1] + 1 for inst in instances if len(inst.features)), default=1)
    return SparseDataset.from_instances(instances, max(n_features or 0, top))


def _model_preds(model_path, data_path, calibrated=True) -> ev.PredictionSet:
    with open(model_path, encoding="utf-8") as fh:
        model, imap = load_model(fh)
    data = _read_data(data_path, model.n_features)
    p = model.predict_proba(data)
    if calibrated and imap is not None:
        p = imap.transform(p)
    return ev.PredictionSet(p, (data.labels > 0).astype(int))


def cmd_ingest(a):
    parser = DumpParser()
    out = open(a.output, "w", encoding="utf-8") if a.output else sys.stdout
    n = 0
    with open(a.dump, "rb") as fh:
        for page in parser.parse(fh):
            n += write_cases(build_cases(page, window=a.window), out)
    if a.output:
        out.close()
    log.info("%d cases written, %d revisions skipped", n, parser.skipped)


def cmd_tokenize(a):
    for tok in tokenize(a.text):
        print(tok)


def cmd_featurize(a):
    with open(a.cases, encoding="utf-8") as fh:
        cases = list(read_cases(fh))
    a.out_dir.mkdir(parents=True, exist_ok=True)
    if a.vocab:
        with open(a.vocab, encoding="utf-8") as fh:
            vocab = VocabMap.load(fh)
    else:
        vocab = VocabMap.build(cases)
        with open(a.out_dir / "vocab.tsv", "w", encoding="utf-8") as fh:
            vocab.save(fh)
    scaling = None
    if a.scaling_spec:
        with open(a.scaling_spec, encoding="utf-8") as fh:
            scaling = ScalingSpec.load(fh)
    instances, scaling = featurize_cases(cases, vocab, a.scaling if scaling is None else scaling.kind, scaling)
    if not a.scaling_spec:
        with open(a.out_dir / "scaling.txt", "w", encoding="utf-8") as fh:
            scaling.save(fh)
    with open(a.out_dir / a.name, "w", encoding="utf-8") as fh:
        write_dataset(instances, fh)


def cmd_split(a):
    lines = [ln for ln in Path(a.input).read_text(encoding="utf-8").splitlines(keepends=True) if ln.strip()]
    parts = split_indices(len(lines), SplitSpec(seed=a.seed))
    a.out_dir.mkdir(parents=True, exist_ok=True)
    stem, suffix = Path(a.input).stem, Path(a.input).suffix
    for name, idx in zip(("train", "valid", "test"), parts):
        with open(a.out_dir / f"{stem}.{name}{suffix}", "w", encoding="utf-8") as fh:
            fh.writelines(lines[i] for i in idx)


def cmd_train(a):
    n_features = a.n_features
    if a.vocab:
        with open(a.vocab, encoding="utf-8") as fh:
            n_features = VocabMap.load(fh).n_features
    data = _read_data(a.data, n_features)
    model = train(data, TrainConfig(C=a.c_value, bias=a.bias, tolerance=a.tolerance), scaling=a.scaling)
    imap = None
    if a.calibrate:
        imap = fit_pav(model.predict_proba(data), (data.labels > 0).astype(int))
    with open(a.output, "w", encoding="utf-8") as fh:
        save_model(fh, model, imap)


def cmd_calibrate(a):
    with open(a.model, encoding="utf-8") as fh:
        model, _ = load_model(fh)
    data = _read_data(a.data, model.n_features)
    imap = fit_pav(model.predict_proba(data), (data.labels > 0).astype(int))
    with open(a.output or a.model, "w", encoding="utf-8") as fh:
        save_model(fh, model, imap)


def cmd_sweep(a):
    tr = _read_data(a.train)
    va = _read_data(a.valid, tr.n_features)
    c_values = [eval_float(c) for c in a.c_values.split(",")] if a.c_values else DEFAULT_C_VALUES
    res = sweep_C(tr, va, c_values, scaling=a.scaling, deterministic=a.deterministic)
    ev.write_csv(sys.stdout, SweepResult.HEADER, res.rows())
    print(f"# best_C={res.best_C!r} best_C_uncalibrated={res.best_C_uncalibrated!r}", file=sys.stderr)


def cmd_evaluate(a):
    preds = _model_preds(a.model, a.data, not a.raw)
    thr = 0.5 if a.threshold is None else a.threshold
    acc = ev.accuracy_at(preds, thr)
    report = {
        "n": len(preds),
        "one_minus_rmse": 1.0 - ev.rmse(preds),
        "accuracy": acc,
        "accuracy_ci99": list(ev.wald_interval(acc, len(preds))),
        "threshold": thr,
        "auc_roc": ev.auc_roc(preds),
        "auc_pr": ev.auc_pr(preds),
        "confusion": ev.confusion_at(preds, thr).as_dict(),
    }
    json.dump(report, sys.stdout, indent=2, sort_keys=True)
    print()


def cmd_threshold(a):
    costs = ev.CostMatrix(c10=a.cost_fp, c01=1.0)
    theo = ev.theoretical_threshold(costs)
    out = {"theoretical_threshold": theo}
    if a.model and a.data:
        preds = _model_preds(a.model, a.data)
        emp, cost = ev.empirical_threshold(preds, costs)
        out.update(theoretical_cost=ev.cost_at(preds, theo, costs), empirical_threshold=emp, empirical_cost=cost)
    json.dump(out, sys.stdout, indent=2, sort_keys=True)
    print()


def cmd_learning_curve(a):
    tr = _read_data(a.train)
    va = _read_data(a.valid, tr.n_features)
    pts = learning_curve(tr, va, a.c_value, iterations=a.iterations, seed=a.seed)
    ev.write_csv(sys.stdout, ("train_size", "mean_one_minus_rmse", "std", "iterations", "clamped"),
                 [(p.train_size, p.mean_score, p.std, p.iterations, int(p.clamped)) for p in pts])


def cmd_reliability(a):
    ev.reliability_csv(sys.stdout, ev.reliability_bins(_model_preds(a.model, a.data, not a.raw)))


def cmd_roc(a):
    ev.roc_csv(sys.stdout, _model_preds(a.model, a.data, not a.raw))


def cmd_pr(a):
    ev.pr_csv(sys.stdout, _model_preds(a.model, a.data, not a.raw))


def cmd_synth(a):
    from .synth import synth_corpus

    a.out_dir.mkdir(parents=True, exist_ok=True)
    with open(a.out_dir / "corpus.xml", "w", encoding="utf-8") as fh, \
            open(a.out_dir / "corpus_truth.jsonl", "w", encoding="utf-8") as side:
        summary = synth_corpus(a.pages, a.rate, fh, side, seed=a.seed)
    json.dump(summary, sys.stdout)
    print()


def cmd_run(a):
    cfg = ExperimentConfig.load(a.config) if a.config else ExperimentConfig()
    if a.deterministic:
        cfg.deterministic = True
    metrics = run_experiment(cfg, a.out_dir)
    val = metrics["validation"]["calibrated"]
    print(f"best C {metrics['best_C']}: validation 1-RMSE {val['one_minus_rmse']:.4f}, "
          f"AUC-ROC {val['auc_roc']:.4f}; artifacts in {a.out_dir}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wikivandal", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        p = sub.add_parser(name, help=help)
        _common(p)
        p.set_defaults(func=fn, stage=name)
        return p

    p = add("ingest", cmd_ingest, "label cases from a revision dump (plain or gzip XML)")
    p.add_argument("dump")
    p.add_argument("-o", "--output", help="JSON-lines output (default stdout)")
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)

    p = add("tokenize", cmd_tokenize, "print the tokens of a text, one per line")
    p.add_argument("--text", required=True)

    p = add("featurize", cmd_featurize, "turn cases into a sparse dataset file")
    p.add_argument("cases")
    p.add_argument("--vocab", help="existing vocabulary (default: build from the cases)")
    p.add_argument("--scaling-spec", help="existing scaling file (default: fit on the cases)")
    p.add_argument("--name", default="dataset.txt")

    p = add("split", cmd_split, "random 50/25/25 split of a line-oriented file")
    p.add_argument("input")

    p = add("train", cmd_train, "train a logistic regression model")
    p.add_argument("data")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--bias", type=float, default=1.0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--n-features", type=int, default=None)
    p.add_argument("--vocab", help="vocabulary file fixing the feature-space size")
    p.add_argument("--calibrate", action="store_true", help="also fit isotonic calibration on the training data")

    p = add("calibrate", cmd_calibrate, "fit isotonic calibration and append it to a model file")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("-o", "--output")

    p = add("sweep", cmd_sweep, "sweep C and report RMSE (CSV on stdout)")
    p.add_argument("train")
    p.add_argument("valid")
    p.add_argument("--c-values", help="comma-separated; 2^k allowed (default 2^-5..2^11)")

    for name, fn, help in (("evaluate", cmd_evaluate, "metrics report (JSON)"),
                           ("reliability", cmd_reliability, "10-bin reliability table (CSV)"),
                           ("roc", cmd_roc, "ROC points (CSV)"),
                           ("pr", cmd_pr, "precision-recall points (CSV)")):
        p = add(name, fn, help)
        p.add_argument("model")
        p.add_argument("data")
        p.add_argument("--raw", action="store_true", help="skip isotonic calibration")

    p = add("threshold", cmd_threshold, "theoretical and empirical cost-sensitive thresholds")
    p.add_argument("model", nargs="?")
    p.add_argument("data", nargs="?")

    p = add("learning-curve", cmd_learning_curve, "validation 1-RMSE against training size (CSV)")
    p.add_argument("train")
    p.add_argument("valid")
    p.add_argument("--iterations", type=int, default=10)

    p = add("synth", cmd_synth, "generate a synthetic revision-history corpus")
    p.add_argument("--pages", type=int, default=2000)
    p.add_argument("--rate", type=float, default=0.43)

    p = add("run", cmd_run, "end-to-end experiment from a key = value config file")
    p.add_argument("--config")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except BrokenPipeError:
        # downstream reader went away (``| head``); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except StageError as err:
        print(f"wikivandal: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - diagnostics for the CLI user
        print(f"wikivandal: [{args.stage}] {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
