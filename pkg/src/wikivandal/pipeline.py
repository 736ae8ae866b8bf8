"""Experiment orchestration: splitting, C sweeps, learning curves, full runs."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence, TypeVar

import numpy as np

from . import evaluate as ev
from .features import SparseDataset, VocabMap, featurize_cases
from .ingest import DEFAULT_WINDOW, DumpParser, build_cases
from .model import ConvergenceError, IsotonicMap, LinearModel, TrainConfig, fit_pav, save_model, train

log = logging.getLogger(__name__)

T = TypeVar("T")

METRICS_SCHEMA_VERSION = 1
DEFAULT_C_VALUES = tuple(2.0 ** k for k in range(-5, 12))
INCOMPLETE_MARKER = "INCOMPLETE"


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.50
    valid_frac: float = 0.25
    test_frac: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if min(self.train_frac, self.valid_frac, self.test_frac) < 0:
            raise ValueError("split fractions must be nonnegative")
        if abs(self.train_frac + self.valid_frac + self.test_frac - 1.0) > 1e-12:
            raise ValueError("split fractions must sum to 1")


def split_indices(n: int, spec: SplitSpec = SplitSpec()) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded partition of ``range(n)``; floor sizes for train/valid, remainder to test."""
    if n < 4:
        raise ValueError(f"need at least 4 instances to split, got {n}")
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_train = math.floor(n * spec.train_frac)
    n_valid = math.floor(n * spec.valid_frac)
    return perm[:n_train], perm[n_train:n_train + n_valid], perm[n_train + n_valid:]


def split(items: Sequence[T], spec: SplitSpec = SplitSpec()) -> tuple[list[T], list[T], list[T]]:
    tr, va, te = split_indices(len(items), spec)
    return [items[i] for i in tr], [items[i] for i in va], [items[i] for i in te]


def _labels01(data: SparseDataset) -> np.ndarray:
    return (data.labels > 0).astype(np.int8)


@dataclass
class SweepRecord:
    C: float
    train_rmse: float = math.nan
    train_rmse_calibrated: float = math.nan
    valid_rmse: float = math.nan
    valid_rmse_calibrated: float = math.nan
    best_threshold: float = math.nan
    valid_accuracy: float = math.nan
    iterations: int = 0
    error: str | None = None


@dataclass
class SweepResult:
    records: list[SweepRecord]
    best_C: float | None
    best_C_uncalibrated: float | None
    best_model: LinearModel | None = field(default=None, repr=False)
    best_isotonic: IsotonicMap | None = field(default=None, repr=False)

    def rows(self):
        return [[r.C, r.train_rmse, r.train_rmse_calibrated, r.valid_rmse, r.valid_rmse_calibrated,
                 r.best_threshold, r.valid_accuracy, r.iterations, r.error or ""] for r in self.records]

    HEADER = ("C", "train_rmse", "train_rmse_calibrated", "valid_rmse", "valid_rmse_calibrated",
              "best_threshold", "valid_accuracy", "iterations", "error")


def evaluate_C(train_data: SparseDataset, valid: SparseDataset, C: float, bias: float = 1.0,
               tolerance: float = 1e-4, scaling: str = ""):
    """Train at one C, calibrate on the training split, score both splits."""
    model = train(train_data, TrainConfig(C=C, bias=bias, tolerance=tolerance), scaling=scaling)
    y_tr, y_va = _labels01(train_data), _labels01(valid)
    p_tr, p_va = model.predict_proba(train_data), model.predict_proba(valid)
    imap = fit_pav(p_tr, y_tr)
    c_tr, c_va = imap.transform(p_tr), imap.transform(p_va)
    thr, _ = ev.best_accuracy_threshold(ev.PredictionSet(c_tr, y_tr))
    rec = SweepRecord(
        C=C,
        train_rmse=ev.rmse(ev.PredictionSet(p_tr, y_tr)),
        train_rmse_calibrated=ev.rmse(ev.PredictionSet(c_tr, y_tr)),
        valid_rmse=ev.rmse(ev.PredictionSet(p_va, y_va)),
        valid_rmse_calibrated=ev.rmse(ev.PredictionSet(c_va, y_va)),
        best_threshold=thr,
        valid_accuracy=ev.accuracy_at(ev.PredictionSet(c_va, y_va), thr),
        iterations=model.iterations,
    )
    return rec, model, imap


def sweep_C(train_data: SparseDataset, valid: SparseDataset, c_values: Sequence[float] = DEFAULT_C_VALUES,
            bias: float = 1.0, tolerance: float = 1e-4, scaling: str = "",
            deterministic: bool = True, workers: int | None = None) -> SweepResult:
    """Train and evaluate each C; best C minimizes calibrated validation RMSE (ties: smaller C)."""
    c_values = sorted(float(c) for c in c_values)
    if not c_values:
        raise ValueError("no C values to sweep")
    if len(set(c_values)) != len(c_values):
        raise ValueError("C values must be distinct")
    if len(train_data) == 0 or len(valid) == 0:
        raise ValueError("empty training or validation split")

    def one(C):
        try:
            return evaluate_C(train_data, valid, C, bias, tolerance, scaling)
        except (ConvergenceError, ArithmeticError, ValueError) as err:
            log.warning("C=%g failed: %s", C, err)
            return SweepRecord(C=C, error=str(err)), None, None

    if deterministic or (workers or 1) <= 1:
        results = [one(C) for C in c_values]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, c_values))

    records = [r for r, _, _ in results]
    ok = [i for i, r in enumerate(records) if r.error is None]
    if not ok:
        return SweepResult(records, None, None)
    # min() keeps the first (smallest C) on ties
    best = min(ok, key=lambda i: records[i].valid_rmse_calibrated)
    best_raw = min(ok, key=lambda i: records[i].valid_rmse)
    return SweepResult(records, records[best].C, records[best_raw].C, results[best][1], results[best][2])


@dataclass
class LearningCurvePoint:
    train_size: int
    mean_score: float  # mean 1 - RMSE on the validation split
    std: float
    iterations: int
    clamped: bool = False


def learning_curve(train_data: SparseDataset, valid: SparseDataset, C: float,
                   sizes: Sequence[int] | None = None, iterations: int = 10, seed: int = 0,
                   bias: float = 1.0, tolerance: float = 1e-4) -> list[LearningCurvePoint]:
    """Uncalibrated validation 1 - RMSE against training-set size.

    Default sizes are the powers of ten below the training size plus the full
    size. Each size below full is sampled ``iterations`` times without
    replacement; the full size is trained once.
    """
    n = len(train_data)
    if sizes is None:
        sizes = [10 ** k for k in range(1, 64) if 10 ** k < n] + [n]
    rng = np.random.default_rng(seed)
    y_va = _labels01(valid)
    points = []
    for size in sizes:
        clamped = size > n
        size = min(int(size), n)
        reps = 1 if size == n else iterations
        scores = []
        for _ in range(reps):
            rows = np.sort(rng.choice(n, size=size, replace=False)) if size < n else np.arange(n)
            model = train(train_data.subset(rows), TrainConfig(C=C, bias=bias, tolerance=tolerance))
            scores.append(1.0 - ev.rmse(ev.PredictionSet(model.predict_proba(valid), y_va)))
        points.append(LearningCurvePoint(size, float(np.mean(scores)), float(np.std(scores)), reps, clamped))
    return points


@dataclass
class ExperimentConfig:
    """Experiment settings, read from a ``key = value`` text file."""

    corpus: str = ""  # dump path; empty means generate a synthetic corpus
    synth_pages: int = 2000
    synth_rate: float = 0.43
    synth_seed: int = 0
    window: int = DEFAULT_WINDOW
    scaling: str = "binary"
    c_values: tuple[float, ...] = DEFAULT_C_VALUES
    bias: float = 1.0
    tolerance: float = 1e-4
    seed: int = 0
    cost_fp: float = 4.0
    cost_fn: float = 1.0
    learning_curve: bool = False
    learning_curve_iterations: int = 10
    deterministic: bool = True
    workers: int = 1

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            kw[key] = _coerce(types[key], value)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def dump(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(repr(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        """SHA-256 of the normalized config (independent of file formatting)."""
        return hashlib.sha256(self.dump().encode("utf-8")).hexdigest()


def _coerce(type_name, value: str):
    t = str(type_name)
    if "tuple" in t:
        return tuple(float(eval_float(v)) for v in value.replace(",", " ").split())
    if "bool" in t:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if "int" in t:
        return int(value)
    if "float" in t:
        return eval_float(value)
    return value


def eval_float(text: str) -> float:
    """Parse a float, also accepting powers of two written ``2^k``."""
    text = text.strip()
    if text.startswith("2^"):
        return 2.0 ** float(text[2:])
    return float(text)


def _provenance(cfg: ExperimentConfig) -> str:
    return f"config_sha256={cfg.digest()} seed={cfg.seed}"


def _write_csv(path: Path, cfg: ExperimentConfig, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {_provenance(cfg)}\n")
        ev.write_csv(fh, header, rows)


def _load_cases(cfg: ExperimentConfig, out_dir: Path):
    if cfg.corpus:
        source = Path(cfg.corpus)
    else:
        from .synth import synth_corpus

        source = out_dir / "corpus.xml"
        with open(source, "w", encoding="utf-8") as fh, \
                open(out_dir / "corpus_truth.jsonl", "w", encoding="utf-8") as side:
            synth_corpus(cfg.synth_pages, cfg.synth_rate, fh, side, seed=cfg.synth_seed)
    parser = DumpParser()
    cases = []
    with open(source, "rb") as fh:
        for page in parser.parse(fh):
            cases.extend(build_cases(page, window=cfg.window))
    return cases, parser.skipped


def _prediction_metrics(preds: ev.PredictionSet, threshold: float) -> dict:
    acc = ev.accuracy_at(preds, threshold)
    lo, hi = ev.wald_interval(acc, len(preds))
    return {
        "one_minus_rmse": 1.0 - ev.rmse(preds),
        "accuracy": acc,
        "accuracy_ci99": [lo, hi],
        "threshold": threshold,
        "auc_roc": ev.auc_roc(preds),
        "auc_pr": ev.auc_pr(preds),
    }


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Run ingest -> featurize -> split -> sweep -> calibrate -> evaluate.

    Writes ``model.txt``, ``vocab.tsv``, ``scaling.txt``, ``metrics.json`` and
    CSV curves into ``out_dir``; returns the metrics dictionary. A file named
    ``INCOMPLETE`` stays in ``out_dir`` if any stage fails.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / INCOMPLETE_MARKER
    marker.write_text("run started; artifacts in this directory are partial\n")
    stage = "ingest"
    try:
        cases, skipped = _load_cases(cfg, out)
        if len(cases) < 4:
            raise ValueError(f"only {len(cases)} cases ingested")

        stage = "split"
        tr_cases, va_cases, te_cases = split(cases, SplitSpec(seed=cfg.seed))

        stage = "featurize"
        vocab = VocabMap.build(tr_cases)
        n_feat = vocab.n_features
        tr_inst, scaling = featurize_cases(tr_cases, vocab, cfg.scaling)
        va_inst, _ = featurize_cases(va_cases, vocab, cfg.scaling, scaling)
        te_inst, _ = featurize_cases(te_cases, vocab, cfg.scaling, scaling)
        train_data = SparseDataset.from_instances(tr_inst, n_feat)
        valid = SparseDataset.from_instances(va_inst, n_feat)
        test = SparseDataset.from_instances(te_inst, n_feat)

        stage = "sweep"
        sweep = sweep_C(train_data, valid, cfg.c_values, cfg.bias, cfg.tolerance, cfg.scaling,
                        deterministic=cfg.deterministic, workers=cfg.workers)
        if sweep.best_model is None:
            raise RuntimeError("every C value failed to train")
        model, imap = sweep.best_model, sweep.best_isotonic

        stage = "evaluate"
        y_tr, y_va, y_te = _labels01(train_data), _labels01(valid), _labels01(test)
        p_tr, p_va, p_te = (model.predict_proba(d) for d in (train_data, valid, test))
        c_tr, c_va, c_te = (imap.transform(p) for p in (p_tr, p_va, p_te))
        best_rec = next(r for r in sweep.records if r.C == sweep.best_C)
        thr = best_rec.best_threshold

        raw_va, cal_va = ev.PredictionSet(p_va, y_va), ev.PredictionSet(c_va, y_va)
        rel_raw, rel_cal = ev.reliability_bins(raw_va), ev.reliability_bins(cal_va)

        costs = ev.CostMatrix(c10=cfg.cost_fp, c01=cfg.cost_fn)
        emp_thr, emp_cost = ev.empirical_threshold(cal_va, costs)
        theo_thr = ev.theoretical_threshold(costs)
        threshold_rows = []
        for c10 in range(1, 51):
            cm = ev.CostMatrix(c10=float(c10), c01=cfg.cost_fn)
            t_emp, cost_emp = ev.empirical_threshold(cal_va, cm)
            t_theo = ev.theoretical_threshold(cm)
            threshold_rows.append((c10, t_theo, ev.cost_at(cal_va, t_theo, cm), t_emp, cost_emp))

        # majority-class baseline for McNemar
        majority = int(y_tr.mean() > 0.5)
        base_correct = y_va == majority
        model_correct = (c_va > thr) == (y_va == 1)

        test_preds = ev.PredictionSet(c_te, y_te)
        metrics = {
            "schema_version": METRICS_SCHEMA_VERSION,
            "config_sha256": cfg.digest(),
            "seed": cfg.seed,
            "scaling": cfg.scaling,
            "dataset": {
                "cases": len(cases),
                "skipped_revisions": skipped,
                "positive_fraction": float(np.mean([c.is_vandalism for c in cases])),
                "train": len(train_data), "valid": len(valid), "test": len(test),
                "vocabulary": len(vocab), "n_features": n_feat,
                "train_nnz": train_data.nnz,
            },
            "best_C": sweep.best_C,
            "best_C_uncalibrated": sweep.best_C_uncalibrated,
            "train": {
                "one_minus_rmse": 1.0 - ev.rmse(ev.PredictionSet(p_tr, y_tr)),
                "one_minus_rmse_calibrated": 1.0 - ev.rmse(ev.PredictionSet(c_tr, y_tr)),
                "rmse": ev.rmse(ev.PredictionSet(p_tr, y_tr)),
                "rmse_calibrated": ev.rmse(ev.PredictionSet(c_tr, y_tr)),
            },
            "validation": {
                "raw": _prediction_metrics(raw_va, thr),
                "calibrated": _prediction_metrics(cal_va, thr),
                "reliability_deviation_raw": ev.reliability_deviation(rel_raw),
                "reliability_deviation_calibrated": ev.reliability_deviation(rel_cal),
                "reliability_deviation_unweighted_raw": ev.reliability_deviation(rel_raw, weighted=False),
                "reliability_deviation_unweighted_calibrated": ev.reliability_deviation(rel_cal, weighted=False),
                "mcnemar_vs_baseline": ev.mcnemar_chi2(model_correct, base_correct),
            },
            "cost": {
                "c10": cfg.cost_fp, "c01": cfg.cost_fn,
                "theoretical_threshold": theo_thr,
                "theoretical_cost": ev.cost_at(cal_va, theo_thr, costs),
                "empirical_threshold": emp_thr,
                "empirical_cost": emp_cost,
            },
            "test": {
                **_prediction_metrics(test_preds, thr),
                "confusion_at_empirical_threshold": ev.confusion_at(test_preds, emp_thr).as_dict(),
            },
        }

        if cfg.learning_curve:
            stage = "learning-curve"
            pts = learning_curve(train_data, valid, sweep.best_C_uncalibrated,
                                 iterations=cfg.learning_curve_iterations, seed=cfg.seed,
                                 bias=cfg.bias, tolerance=cfg.tolerance)
            metrics["learning_curve"] = [asdict(p) for p in pts]
            _write_csv(out / "learning_curve.csv", cfg, ("train_size", "mean_one_minus_rmse", "std", "iterations", "clamped"),
                       [(p.train_size, p.mean_score, p.std, p.iterations, int(p.clamped)) for p in pts])

        stage = "write"
        prov = _provenance(cfg)
        with open(out / "model.txt", "w", encoding="utf-8") as fh:
            save_model(fh, model, imap, provenance=prov)
        with open(out / "vocab.tsv", "w", encoding="utf-8") as fh:
            fh.write(f"# {prov}\n")
            vocab.save(fh)
        with open(out / "scaling.txt", "w", encoding="utf-8") as fh:
            scaling.save(fh)
            fh.write(f"# {prov}\n")
        _write_csv(out / "sweep.csv", cfg, SweepResult.HEADER, sweep.rows())
        _write_csv(out / "roc.csv", cfg, ("fpr", "tpr"), ev.roc_points(cal_va))
        _write_csv(out / "pr.csv", cfg, ("recall", "precision"), ev.pr_points(cal_va))
        _write_csv(out / "reliability.csv", cfg,
                   ("bin", "count_raw", "mean_pred_raw", "frac_pos_raw", "count_cal", "mean_pred_cal", "frac_pos_cal"),
                   [(a.index, a.count, a.mean_pred, a.frac_pos, b.count, b.mean_pred, b.frac_pos)
                    for a, b in zip(rel_raw, rel_cal)])
        _write_csv(out / "thresholds.csv", cfg,
                   ("c10", "theoretical_threshold", "theoretical_cost", "empirical_threshold", "empirical_cost"),
                   threshold_rows)
        (out / "config.txt").write_text(cfg.dump(), encoding="utf-8")
        with open(out / "metrics.json", "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except Exception as err:
        raise StageError(stage, f"{type(err).__name__}: {err}") from err
    os.remove(marker)
    return metrics
