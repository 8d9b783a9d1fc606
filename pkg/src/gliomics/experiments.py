"""Grade-classification experiment grid and the repeated-run protocol.

One experiment is a grade subset (II-IV, III-IV, II-III or all three), a
feature matrix and a classifier name.  A run draws a fresh stratified
80/10/10 split, standardizes on the training rows, picks SVM
hyperparameters on the validation rows (or early-stops the network on
them), and scores the held-out test rows.  The protocol repeats runs with
consecutive seeds and reports mean and best accuracy plus AUC.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classify import (Kernel, TrainConfig, fit_standardizer,
                       select_svm_hyperparams, train_mlp, train_ova)
from .errors import GliomicsError
from .evaluate import SplitSpec, classification_report, roc_auc, stratified_split
from .features import KIND_LENGTHS, extract_all

EXPERIMENTS = (
    ("II-IV", (2, 4)),
    ("III-IV", (3, 4)),
    ("II-III", (2, 3)),
    ("all", (2, 3, 4)),
)

CLASSIFIERS = ("svm-linear", "svm-rbf", "ann")


@dataclass(frozen=True)
class RunResult:
    seed: int
    accuracy: float
    auc: float


@dataclass(frozen=True)
class ExperimentSummary:
    experiment: str
    classifier: str
    kind: str
    modality: str
    runs: tuple              # RunResult per seed, ascending
    mean_accuracy: float
    best_accuracy: float
    mean_auc: float
    best_auc: float


def _ovr_auc(scores: np.ndarray, truth: np.ndarray, classes) -> float:
    """Macro one-vs-rest AUC; falls back to accuracy-free NaN when a test
    split lacks a class entirely."""
    aucs = []
    for j, c in enumerate(classes):
        y = (truth == c).astype(int)
        if y.min() == y.max():
            continue
        _, a = roc_auc(scores[:, j], y)
        aucs.append(a)
    return float(np.mean(aucs)) if aucs else float("nan")


def run_once(X: np.ndarray, grades: np.ndarray, classifier: str,
             cfg: TrainConfig, seed: int) -> RunResult:
    """One split -> train -> test cycle; returns test accuracy and AUC."""
    if classifier not in CLASSIFIERS:
        raise GliomicsError(f"unknown classifier {classifier!r}")
    tr, va, te = stratified_split(grades, SplitSpec(seed=seed))
    std = fit_standardizer(X[tr])
    X_tr, X_va, X_te = std.apply(X[tr]), std.apply(X[va]), std.apply(X[te])
    y_tr, y_va, y_te = grades[tr], grades[va], grades[te]
    classes = sorted(np.unique(y_tr).tolist())

    run_cfg = TrainConfig(seed=seed, max_iters=cfg.max_iters,
                          cg_restart_interval=cfg.cg_restart_interval,
                          validation_patience=cfg.validation_patience,
                          svm_c_grid=cfg.svm_c_grid,
                          rbf_gamma_grid=cfg.rbf_gamma_grid,
                          smo_tolerance=cfg.smo_tolerance,
                          smo_max_passes=cfg.smo_max_passes)
    if classifier == "ann":
        model = train_mlp(X_tr, y_tr, X_va, y_va, run_cfg, seed=seed)
        pred = model.predict(X_te)
        scores = model.forward(X_te)
    else:
        kernel_name = "linear" if classifier == "svm-linear" else "rbf"
        _, _, model = select_svm_hyperparams(X_tr, y_tr, X_va, y_va,
                                             kernel_name, run_cfg)
        pred = model.predict(X_te)
        scores = model.decision_matrix(X_te)

    accuracy = float(np.mean(pred == y_te))
    if len(classes) == 2:
        pos = classes[1]
        col = classes.index(pos)
        y_bin = (y_te == pos).astype(int)
        if y_bin.min() == y_bin.max():
            auc = float("nan")
        else:
            if classifier == "ann":
                _, auc = roc_auc(scores[:, col], y_bin)
            else:
                # decision margin of the higher grade against the lower
                _, auc = roc_auc(scores[:, col] - scores[:, 1 - col], y_bin)
    else:
        auc = _ovr_auc(scores, y_te, classes)
    return RunResult(seed, accuracy, auc)


def run_experiment(X: np.ndarray, grades: np.ndarray, experiment: str,
                   classifier: str, cfg: TrainConfig = None,
                   n_runs: int = 100, seed0: int = 0,
                   kind: str = "", modality: str = "") -> ExperimentSummary:
    """The full repeated-run protocol for one Table row."""
    cfg = cfg or TrainConfig()
    wanted = dict(EXPERIMENTS).get(experiment)
    if wanted is None:
        raise GliomicsError(f"unknown experiment {experiment!r}")
    keep = np.isin(grades, wanted)
    X_sub, g_sub = np.asarray(X, dtype=np.float64)[keep], np.asarray(grades)[keep]
    runs = []
    for i in range(n_runs):
        try:
            runs.append(run_once(X_sub, g_sub, classifier, cfg, seed0 + i))
        except GliomicsError as exc:
            msg = (f"run {i} (seed {seed0 + i}) of {experiment}/{classifier} "
                   f"failed: {exc}")
            try:
                wrapped = type(exc)(msg)   # keep the class for exit-code mapping
            except TypeError:
                wrapped = GliomicsError(msg)
            raise wrapped from exc
    accs = np.array([r.accuracy for r in runs])
    aucs = np.array([r.auc for r in runs])
    finite = aucs[np.isfinite(aucs)]
    return ExperimentSummary(
        experiment, classifier, kind, modality, tuple(runs),
        float(accs.mean()), float(accs.max()),
        float(finite.mean()) if finite.size else float("nan"),
        float(finite.max()) if finite.size else float("nan"))


def cohort_feature_matrix(cohort, modality: str, kind: str):
    """Stack one feature vector per subject -> (X, grades)."""
    rows, grades = [], []
    for sub in cohort.subjects:
        vecs = extract_all(sub.volumes[modality], sub.labelmap)
        rows.append(vecs[kind].values)
        grades.append(sub.grade)
    return np.vstack(rows), np.asarray(grades)


def write_feature_table(path, rows, kind: str):
    """One CSV per feature kind: subject_id, modality, grade, kind, f000..

    ``rows`` iterates (subject_id, modality, grade, values).
    """
    n = KIND_LENGTHS[kind]
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "modality", "grade", "kind",
                         *[f"f{i:03d}" for i in range(n)]])
        for subject_id, modality, grade, values in rows:
            if len(values) != n:
                raise GliomicsError(
                    f"{kind} row for {subject_id}/{modality} has "
                    f"{len(values)} values, want {n}")
            writer.writerow([subject_id, modality, grade, kind,
                             *[f"{v:.12g}" for v in values]])
    return path


def read_feature_table(path):
    """Inverse of write_feature_table -> (meta rows, X, kind)."""
    path = Path(path)
    meta, vecs, kinds = [], [], set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(filter(lambda ln: not ln.startswith("#"), fh))
        fixed = ("subject_id", "modality", "grade", "kind")
        fcols = [c for c in (reader.fieldnames or []) if c not in fixed]
        for rec in reader:
            meta.append({"subject_id": rec["subject_id"],
                         "modality": rec["modality"],
                         "grade": int(rec["grade"]), "kind": rec["kind"]})
            kinds.add(rec["kind"])
            vecs.append([float(rec[c]) for c in fcols])
    if not meta:
        raise GliomicsError(f"feature table {path} is empty")
    if len(kinds) != 1:
        raise GliomicsError(f"feature table {path} mixes kinds {sorted(kinds)}")
    return meta, np.asarray(vecs, dtype=np.float64), kinds.pop()


def summary_csv_rows(summaries) -> list:
    """Flatten summaries into Table-shaped CSV rows (header first)."""
    out = [["kind", "modality", "classifier", "experiment",
            "mean_accuracy", "best_accuracy", "mean_auc", "best_auc"]]
    for s in summaries:
        out.append([s.kind, s.modality, s.classifier, s.experiment,
                    f"{s.mean_accuracy:.4f}", f"{s.best_accuracy:.4f}",
                    f"{s.mean_auc:.4f}", f"{s.best_auc:.4f}"])
    return out
