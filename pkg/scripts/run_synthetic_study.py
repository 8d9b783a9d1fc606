#!/usr/bin/env python3
"""End-to-end synthetic study: cohort -> features -> stats -> classifier grid.

Generates a graded phantom cohort, extracts V1/V2/V3/shape vectors per
modality, tests the volumetric ratios for grade separation, then sweeps the
classifier grid (linear SVM, RBF SVM, MLP) over the pairwise and three-class
experiments.  Prints one summary table; optionally writes artifacts to
--out for inspection.

Intended as the quick-look driver: full statistical detail lives in the
CLI (`gliomics train-eval`, `gliomics stats`), the acceptance checks in
tests/test_acceptance.py.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from gliomics.classify import TrainConfig
from gliomics.experiments import (CLASSIFIERS, EXPERIMENTS,
                                  cohort_feature_matrix, run_experiment)
from gliomics.phantom import generate_cohort, write_cohort
from gliomics.stats import dunn_posthoc, kruskal_wallis
from gliomics.volumetrics import label_ratios

LABEL_NAMES = {1: "edema", 2: "enhancing", 3: "non-enhancing",
               4: "cyst", 5: "necrosis"}


def ratio_stats(cohort):
    grades = cohort.grades()
    print("Kruskal-Wallis on volumetric ratios (grades II/III/IV):")
    for label in range(1, 6):
        vals = np.array([label_ratios(s.labelmap).ratios_pct[label]
                         for s in cohort.subjects])
        groups = [vals[grades == g] for g in (2, 3, 4)]
        kw = kruskal_wallis(groups)
        dunn = dunn_posthoc(groups)
        sig = [f"{'II III IV'.split()[i]}-{'II III IV'.split()[j]}"
               for (i, j), p in zip(dunn.pairs, dunn.p_adjusted) if p < 0.05]
        print(f"  {LABEL_NAMES[label]:<14} H={kw.h:7.3f}  p={kw.p_value:.2e}"
              f"  significant pairs: {', '.join(sig) if sig else 'none'}")


def classifier_grid(cohort, modality, kind, n_runs, seed):
    X, grades = cohort_feature_matrix(cohort, modality, kind)
    cfg = TrainConfig(seed=seed)
    print(f"\nClassifier grid on {kind} / {modality} "
          f"({n_runs} resampled runs each):")
    header = f"  {'experiment':<10}" + "".join(f"{c:>14}" for c in CLASSIFIERS)
    print(header)
    for experiment, _grades in EXPERIMENTS:
        cells = []
        for classifier in CLASSIFIERS:
            s = run_experiment(X, grades, experiment, classifier, cfg,
                               n_runs=n_runs, seed0=seed,
                               kind=kind, modality=modality)
            cells.append(f"{s.mean_accuracy:.2f}/{s.best_accuracy:.2f}")
        print(f"  {experiment:<10}" + "".join(f"{c:>14}" for c in cells))
    print("  (cells are mean/best test accuracy)")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-per-grade", default="18,14,25")
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--modality", default="t2")
    ap.add_argument("--kind", default="v2")
    ap.add_argument("--out", default=None,
                    help="also write the cohort as NIfTI + manifest here")
    args = ap.parse_args(argv)

    n_per_grade = tuple(int(x) for x in args.n_per_grade.split(","))
    t0 = time.time()
    cohort = generate_cohort(n_per_grade=n_per_grade, base_seed=args.seed)
    print(f"Generated {len(cohort)} subjects "
          f"({'/'.join(map(str, n_per_grade))} per grade) "
          f"in {time.time() - t0:.1f}s")
    if args.out:
        manifest = write_cohort(cohort, Path(args.out))
        print(f"Wrote cohort to {manifest.parent}")

    ratio_stats(cohort)
    classifier_grid(cohort, args.modality, args.kind, args.runs, args.seed)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
