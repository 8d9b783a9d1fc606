"""Command-line pipeline: phantom generation, registration/subtraction,
feature extraction, volumetrics, training/evaluation and group statistics.

Every artifact embeds {tool_version, config_digest, seed} (JSON key or CSV
comment line) and contains no timestamps, so reruns with identical inputs
are byte-identical.  Files are written atomically (temp file + rename).

Exit codes: 0 success, 2 input/config problem, 3 registration failure,
4 training failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .classify import TrainConfig
from .errors import (ClassTooSmall, DivergedLoss, GliomicsError,
                     InsufficientOverlap, NoConvergence, NoImprovement,
                     SingleClass)
from .evaluate import SplitSpec
from .experiments import (CLASSIFIERS, EXPERIMENTS, read_feature_table,
                          run_experiment, summary_csv_rows)
from .features import KIND_LENGTHS, extract_all
from .phantom import generate_cohort, read_manifest, write_cohort
from .registration import (EsConfig, MiConfig, RigidTransform, register_rigid,
                           save_transform, subtraction_map)
from .stats import dunn_posthoc, kruskal_wallis
from .volume import load_labelmap, load_volume, save_volume
from .volumetrics import component_volumes, volume_ratios

log = logging.getLogger("gliomics")

_REGISTRATION_ERRORS = (InsufficientOverlap, NoImprovement)
_TRAINING_ERRORS = (NoConvergence, DivergedLoss, SingleClass, ClassTooSmall)


def _config_digest(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _provenance(seed: int, config: dict) -> dict:
    return {"tool_version": __version__, "config_digest": _config_digest(config),
            "seed": seed}


def _atomic_write(path: Path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.parent / (path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _write_json(path: Path, payload: dict):
    _atomic_write(path, (json.dumps(payload, sort_keys=True, indent=2) + "\n")
                  .encode())


def _write_csv(path: Path, rows, provenance: dict):
    buf = io.StringIO()
    buf.write(f"# tool_version={provenance['tool_version']} "
              f"config_digest={provenance['config_digest']} "
              f"seed={provenance['seed']}\n")
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow(row)
    _atomic_write(path, buf.getvalue().encode())


def _load_config(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise GliomicsError(f"config file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise GliomicsError(f"config {p} is not valid JSON: {exc}") from exc


def _train_config(config: dict, seed: int) -> TrainConfig:
    fields = dict(config.get("train", {}))
    fields.setdefault("seed", seed)
    for key in ("svm_c_grid", "rbf_gamma_grid"):
        if key in fields:
            fields[key] = tuple(fields[key])
    try:
        return TrainConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise GliomicsError(f"bad train config: {exc}") from exc


# ---------------------------------------------------------------- subtract

def cmd_subtract(args) -> int:
    pre = load_volume(args.pre)
    post = load_volume(args.post)
    out = Path(args.out)
    es = EsConfig(seed=args.seed)
    transform = register_rigid(post, pre, MiConfig(), es)
    sub = subtraction_map(pre, post, transform)
    config = {"pre": str(args.pre), "post": str(args.post), "es_seed": args.seed}
    prov = _provenance(args.seed, config)
    out.mkdir(parents=True, exist_ok=True)
    save_volume(sub, out / "subtraction.nii.gz")
    payload = transform.to_json()
    payload["provenance"] = prov
    _write_json(out / "transform.json", payload)
    log.info("wrote %s", out / "subtraction.nii.gz")
    return 0


# ---------------------------------------------------------------- features

def _extract_subject(row, modalities):
    lm = load_labelmap(row["labelmap"])
    out = {}
    for modality in modalities:
        v = load_volume(row[modality])
        vecs = extract_all(v, lm)
        out[modality] = {kind: fv.values for kind, fv in vecs.items()}
    return row["subject_id"], row["grade"], out


def cmd_features(args) -> int:
    rows, modalities = read_manifest(args.manifest)
    if not rows:
        raise GliomicsError(f"manifest {args.manifest} lists no subjects")
    kinds = args.kinds.split(",") if args.kinds else list(KIND_LENGTHS)
    for kind in kinds:
        if kind not in KIND_LENGTHS:
            raise GliomicsError(f"unknown feature kind {kind!r}")
    results = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {pool.submit(_extract_subject, r, modalities): r
                       for r in rows}
            for fut, row in futures.items():
                try:
                    results.append(fut.result())
                except GliomicsError as exc:
                    if not args.skip_errors:
                        raise
                    log.warning("skipping %s: %s", row["subject_id"], exc)
    else:
        for row in rows:
            try:
                results.append(_extract_subject(row, modalities))
            except GliomicsError as exc:
                if not args.skip_errors:
                    raise
                log.warning("skipping %s: %s", row["subject_id"], exc)
    if not results:
        raise GliomicsError("no subject could be processed")
    results.sort(key=lambda r: r[0])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {"manifest": str(args.manifest), "kinds": kinds,
              "modalities": modalities}
    prov = _provenance(args.seed, config)
    for kind in kinds:
        table_rows = [(sid, modality, grade, vecs[modality][kind])
                      for sid, grade, vecs in results
                      for modality in modalities]
        path = out / f"features_{kind}.csv"
        buf = io.StringIO()
        buf.write(f"# tool_version={prov['tool_version']} "
                  f"config_digest={prov['config_digest']} seed={prov['seed']}\n")
        writer = csv.writer(buf, lineterminator="\n")
        n = KIND_LENGTHS[kind]
        writer.writerow(["subject_id", "modality", "grade", "kind",
                         *[f"f{i:03d}" for i in range(n)]])
        for sid, modality, grade, values in table_rows:
            writer.writerow([sid, modality, grade, kind,
                             *[f"{v:.12g}" for v in values]])
        _atomic_write(path, buf.getvalue().encode())
        log.info("wrote %s (%d rows)", path, len(table_rows))
    return 0


# ------------------------------------------------------------- volumetrics

def cmd_volumetrics(args) -> int:
    rows, _ = read_manifest(args.manifest)
    if not rows:
        raise GliomicsError(f"manifest {args.manifest} lists no subjects")
    config = {"manifest": str(args.manifest),
              "include_edema": not args.exclude_edema}
    prov = _provenance(args.seed, config)
    table = [["subject_id", "grade",
              *[f"vol_mm3_label{k}" for k in range(1, 6)], "total_mm3",
              *[f"ratio_pct_label{k}" for k in range(1, 6)]]]
    for row in sorted(rows, key=lambda r: r["subject_id"]):
        lm = load_labelmap(row["labelmap"])
        cv = component_volumes(lm, include_edema=not args.exclude_edema)
        vr = volume_ratios(cv)
        if vr.degenerate:
            log.warning("subject %s has zero tumor volume", row["subject_id"])
        table.append([row["subject_id"], row["grade"],
                      *[f"{cv.volumes_mm3[k]:.6g}" for k in range(1, 6)],
                      f"{cv.total_mm3:.6g}",
                      *[f"{vr.ratios_pct[k]:.6g}" for k in range(1, 6)]])
    _write_csv(Path(args.out), table, prov)
    return 0


# -------------------------------------------------------------- train-eval

def cmd_train_eval(args) -> int:
    config = _load_config(args.config)
    classifiers = config.get("classifiers", list(CLASSIFIERS))
    experiments = config.get("experiments", [name for name, _ in EXPERIMENTS])
    n_runs = int(config.get("n_runs", args.runs))
    known_experiments = dict(EXPERIMENTS)
    for c in classifiers:
        if c not in CLASSIFIERS:
            raise GliomicsError(f"unknown classifier {c!r} in config")
    for e in experiments:
        if e not in known_experiments:
            raise GliomicsError(f"unknown experiment {e!r} in config")
    cfg = _train_config(config, args.seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(args.seed, {"config": config,
                                   "tables": [str(p) for p in args.features]})
    summaries = []
    for table_path in args.features:
        meta, X, kind = read_feature_table(table_path)
        by_modality = {}
        for i, m in enumerate(meta):
            by_modality.setdefault(m["modality"], []).append(i)
        for modality, idx in sorted(by_modality.items()):
            idx = sorted(idx, key=lambda i: meta[i]["subject_id"])
            Xm = X[idx]
            grades = np.array([meta[i]["grade"] for i in idx])
            for classifier in classifiers:
                for experiment in experiments:
                    s = run_experiment(Xm, grades, experiment, classifier,
                                       cfg, n_runs=n_runs, seed0=args.seed,
                                       kind=kind, modality=modality)
                    summaries.append(s)
                    report = {
                        "experiment": s.experiment, "classifier": s.classifier,
                        "kind": s.kind, "modality": s.modality,
                        "mean_accuracy": s.mean_accuracy,
                        "best_accuracy": s.best_accuracy,
                        "mean_auc": s.mean_auc, "best_auc": s.best_auc,
                        "per_run": [{"seed": r.seed, "accuracy": r.accuracy,
                                     "auc": r.auc} for r in s.runs],
                        "provenance": prov,
                    }
                    name = f"report_{kind}_{modality}_{classifier}_{experiment}.json"
                    _write_json(out / name, report)
    _write_csv(out / "summary.csv", summary_csv_rows(summaries), prov)
    log.info("wrote %s", out / "summary.csv")
    return 0


# ------------------------------------------------------------------- stats

def cmd_stats(args) -> int:
    path = Path(args.ratios)
    if not path.is_file():
        raise GliomicsError(f"ratios CSV not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(filter(lambda ln: not ln.startswith("#"), fh))
        rows = list(reader)
    if not rows or "grade" not in rows[0]:
        raise GliomicsError(f"{path} is not a volumetrics table (no grade column)")
    ratio_cols = [c for c in rows[0] if c.startswith("ratio_")]
    if not ratio_cols:
        raise GliomicsError(f"{path} has no ratio_* columns")
    grades = sorted({int(r["grade"]) for r in rows})
    if len(grades) < 3:
        raise GliomicsError(f"need all three grades, found {grades}")

    config = {"ratios": str(path)}
    prov = _provenance(args.seed, config)
    results = {}
    table = [["ratio", "h", "p_kw", "pair", "z", "p_adjusted", "significant"]]
    for col in ratio_cols:
        groups = [[float(r[col]) for r in rows if int(r["grade"]) == g]
                  for g in grades]
        kw = kruskal_wallis(groups)
        dunn = dunn_posthoc(groups)
        pair_rows = []
        for (i, j), z, p in zip(dunn.pairs, dunn.z, dunn.p_adjusted):
            pair = f"{grades[i]}-{grades[j]}"
            sig = bool(p < 0.05)
            pair_rows.append({"pair": pair, "z": z, "p_adjusted": p,
                              "significant": sig})
            table.append([col, f"{kw.h:.6g}", f"{kw.p_value:.6g}", pair,
                          f"{z:.6g}", f"{p:.6g}", str(sig).lower()])
        results[col] = {"h": kw.h, "p": kw.p_value,
                        "all_identical": kw.all_identical, "pairs": pair_rows}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "stats.json", {"provenance": prov, "ratios": results})
    _write_csv(out / "stats.csv", table, prov)
    return 0


# ----------------------------------------------------------------- phantom

def cmd_phantom(args) -> int:
    try:
        n_per_grade = tuple(int(x) for x in args.n_per_grade.split(","))
        dims = tuple(int(x) for x in args.dims.split(","))
    except ValueError as exc:
        raise GliomicsError(f"bad integer list: {exc}") from exc
    if len(n_per_grade) != 3 or len(dims) != 3:
        raise GliomicsError("n-per-grade and dims need exactly three values")
    cohort = generate_cohort(n_per_grade=n_per_grade, base_seed=args.seed,
                             dims=dims)
    out = Path(args.out)
    manifest = write_cohort(cohort, out, compress=not args.no_compress)
    prov = _provenance(args.seed, {"n_per_grade": n_per_grade, "dims": dims})
    _write_json(out / "provenance.json", prov)
    log.info("wrote %s (%d subjects)", manifest, len(cohort))
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gliomics",
        description="Glioma grading pipeline over NIfTI volumes and label maps.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--skip-errors", action="store_true",
                       help="skip unreadable subjects instead of aborting")

    p = sub.add_parser("subtract", help="register pre to post, write the "
                                        "positive-clamped difference")
    p.add_argument("pre")
    p.add_argument("post")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_subtract)

    p = sub.add_parser("features", help="extract feature CSVs from a manifest")
    p.add_argument("manifest")
    p.add_argument("--kinds", default=None,
                   help="comma list from v1,v2,v3,shape (default all)")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("volumetrics", help="per-subject component volumes "
                                           "and ratios")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--exclude-edema", action="store_true",
                   help="drop edema from the total-volume denominator")
    common(p)
    p.set_defaults(func=cmd_volumetrics)

    p = sub.add_parser("train-eval", help="run the experiment grid over "
                                          "feature tables")
    p.add_argument("features", nargs="+", help="per-kind feature CSV paths")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--runs", type=int, default=100)
    common(p)
    p.set_defaults(func=cmd_train_eval)

    p = sub.add_parser("stats", help="Kruskal-Wallis + Dunn over a "
                                     "volumetrics table")
    p.add_argument("ratios", help="volumetrics CSV")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("phantom", help="generate a synthetic cohort")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-per-grade", default="18,14,25")
    p.add_argument("--dims", default="32,32,32")
    p.add_argument("--no-compress", action="store_true")
    common(p)
    p.set_defaults(func=cmd_phantom)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("GLIOMICS_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _REGISTRATION_ERRORS as exc:
        log.error("registration failed: %s", exc)
        return 3
    except _TRAINING_ERRORS as exc:
        log.error("training failed: %s", exc)
        return 4
    except GliomicsError as exc:
        log.error("%s", exc)
        return 2
    except OSError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
