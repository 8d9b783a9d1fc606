"""Deterministic synthetic cohort generator.

Each phantom is a nested-ellipsoid tumor (necrosis inside enhancing rim,
non-enhancing/cyst lobes, perilesional edema outermost) embedded in a noisy
background, with per-label component ratios realized exactly and voxel
intensities drawn from a two-component Gaussian mixture whose second
component's weight rises with grade.  That weight is the knob that makes
higher grades look more heterogeneous, which is what the intensity features
downstream are supposed to pick up.

Everything is seeded; identical seeds give bit-identical volumes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import InfeasibleRatios
from .volume import LabelMap, Volume, save_labelmap, save_volume

# Grade-wise per-label ratio medians (percent of total tumor volume) used as
# single-phantom targets.  The unallocated remainder of the tumor is assigned
# to the non-enhancing solid component (label 3).
MEDIAN_RATIOS = {
    2: {1: 0.0, 2: 0.16, 3: 96.91, 4: 0.0, 5: 0.0},
    3: {1: 2.75, 2: 7.03, 3: 86.67, 4: 0.0, 5: 0.0},
    4: {1: 43.47, 2: 41.18, 3: 7.83, 4: 0.0, 5: 1.30},
}

# Heterogeneity mixture weight per grade (second Gaussian component).
HETEROGENEITY = {2: 0.10, 3: 0.25, 4: 0.45}

# Per-modality, per-label intensity (mean, sd); label 0 is background.
DEFAULT_INTENSITIES = {
    "t1_pre": {0: (30, 4), 1: (65, 6), 2: (95, 7), 3: (88, 7),
               4: (45, 5), 5: (55, 6)},
    "t1_post": {0: (30, 4), 1: (65, 6), 2: (150, 9), 3: (90, 7),
                4: (46, 5), 5: (56, 6)},
    "t2": {0: (35, 4), 1: (160, 9), 2: (110, 8), 3: (120, 8),
           4: (170, 9), 5: (140, 9)},
}

# Cohort sampling model: per grade, per label, (P[label absent], low, high)
# of the uniform draw for the raw percent when present.  Calibrated so that
# grade II vs III have strongly overlapping edema/enhancing/necrosis ratio
# distributions (not separable by rank tests at cohort size) while grade IV
# is well separated from both; all supports sit inside the observed
# min/max ranges per grade.
COHORT_RATIO_MODEL = {
    2: {1: (0.50, 0.5, 12.0), 2: (0.30, 0.1, 6.0), 3: (0.0, 70.0, 100.0),
        4: (0.70, 0.5, 8.0), 5: (0.55, 0.2, 2.8)},
    3: {1: (0.45, 0.5, 14.0), 2: (0.28, 0.1, 7.0), 3: (0.0, 60.0, 100.0),
        4: (0.75, 0.5, 6.0), 5: (0.52, 0.2, 2.5)},
    4: {1: (0.0, 30.0, 75.0), 2: (0.0, 25.0, 60.0), 3: (0.0, 2.0, 15.0),
        4: (0.85, 0.5, 4.0), 5: (0.0, 0.8, 12.0)},
}

DEFAULT_MODALITIES = ("t1_pre", "t1_post", "t2")


@dataclass(frozen=True)
class PhantomSpec:
    grade: int
    ratios: dict = None               # label -> percent; defaults to medians
    dims: tuple = (32, 32, 32)
    spacing: tuple = (1.0, 1.0, 1.0)
    modalities: tuple = DEFAULT_MODALITIES
    intensities: dict = None          # modality -> label -> (mean, sd)
    heterogeneity: float = None       # second-component mixture weight
    heterogeneity_shift: float = 3.0  # second-component offset, in sd units
    envelope_fraction: float = 0.65   # tumor semi-axes as fraction of half-extent
    smooth_sigma: float = 0.5         # voxels
    seed: int = 0

    def __post_init__(self):
        if self.grade not in (2, 3, 4):
            raise ValueError(f"grade must be 2, 3 or 4, got {self.grade}")
        if any(d < 32 for d in self.dims):
            raise ValueError(f"dims must be at least 32 per axis, got {self.dims}")
        if self.ratios is None:
            object.__setattr__(self, "ratios", dict(MEDIAN_RATIOS[self.grade]))
        total = sum(self.ratios.values())
        if total > 100.0 + 1e-9:
            raise InfeasibleRatios(f"target ratios sum to {total:.2f} > 100")
        if self.intensities is None:
            object.__setattr__(self, "intensities",
                               {m: dict(DEFAULT_INTENSITIES[m]) for m in self.modalities})
        if self.heterogeneity is None:
            object.__setattr__(self, "heterogeneity", HETEROGENEITY[self.grade])


@dataclass(frozen=True)
class PhantomSubject:
    subject_id: str
    grade: int
    volumes: dict        # modality -> Volume
    labelmap: LabelMap
    spec: PhantomSpec


@dataclass(frozen=True)
class Cohort:
    subjects: tuple

    def __len__(self):
        return len(self.subjects)

    def grades(self) -> np.ndarray:
        return np.array([s.grade for s in self.subjects])


def _ellipsoid_radius(dims, spacing, center_idx, semi_axes_mm) -> np.ndarray:
    grids = np.ogrid[0:dims[0], 0:dims[1], 0:dims[2]]
    r2 = np.zeros(dims)
    for ax in range(3):
        r2 = r2 + (((grids[ax] - center_idx[ax]) * spacing[ax])
                   / semi_axes_mm[ax]) ** 2
    return np.sqrt(r2)


def _assign_labels(spec: PhantomSpec, rng: np.random.Generator) -> np.ndarray:
    dims, spacing = spec.dims, spec.spacing
    half_mm = np.asarray(dims) * np.asarray(spacing) / 2.0
    axes = spec.envelope_fraction * half_mm * rng.uniform(0.8, 1.0, size=3)
    center = (np.asarray(dims) - 1) / 2.0 + rng.uniform(-0.05, 0.05, size=3) * np.asarray(dims)
    r = _ellipsoid_radius(dims, spacing, center, axes)

    env_flat = np.flatnonzero((r <= 1.0).ravel())
    n_env = env_flat.size
    if n_env < 64:
        raise InfeasibleRatios(
            f"envelope holds only {n_env} voxels inside dims {dims}")

    counts = {}
    for lab in (1, 2, 4, 5):
        counts[lab] = int(round(spec.ratios.get(lab, 0.0) / 100.0 * n_env))
    n_rest = n_env - sum(counts.values())
    if n_rest < 0:
        raise InfeasibleRatios("per-label voxel counts exceed the envelope")
    counts[3] = n_rest  # non-enhancing absorbs the unallocated share

    r_env = r.ravel()[env_flat]
    order = env_flat[np.lexsort((env_flat, r_env))]  # inside-out, deterministic

    labels = np.zeros(int(np.prod(dims)), dtype=np.int16)
    pos = 0
    # strict radial nesting for the core; necrosis innermost, edema outermost
    for lab in (5, 2):
        labels[order[pos:pos + counts[lab]]] = lab
        pos += counts[lab]
    remaining = order[pos:]

    # non-enhancing and cyst become side lobes: bias the ordering score along
    # a random direction so they are not perfect concentric shells
    coords = np.stack(np.unravel_index(remaining, dims)).astype(float)
    centered = (coords - center[:, None]) * np.asarray(spacing)[:, None]
    rem_r = r.ravel()[remaining]
    taken = np.zeros(remaining.size, dtype=bool)
    for lab in (3, 4):
        if counts[lab] == 0:
            continue
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        score = rem_r + 0.35 * (direction @ centered) / max(axes.min(), 1e-9)
        score[taken] = np.inf
        pick = np.argsort(score, kind="stable")[:counts[lab]]
        labels[remaining[pick]] = lab
        taken[pick] = True
    labels[remaining[~taken]] = 1  # edema fills the outer remainder
    return labels.reshape(dims), r


def _synth_modality(labels: np.ndarray, table: dict, weight: float,
                    shift: float, sigma: float,
                    rng: np.random.Generator) -> np.ndarray:
    mean0, sd0 = table[0]
    arr = rng.normal(mean0, sd0, size=labels.shape)
    for lab in range(1, 6):
        mask = labels == lab
        n = int(mask.sum())
        if n == 0:
            continue
        mu, sd = table[lab]
        second = rng.random(n) < weight
        vals = rng.normal(mu, sd, size=n)
        vals[second] += shift * sd
        arr[mask] = vals
    if sigma > 0:
        arr = gaussian_filter(arr, sigma=sigma)
    return arr


def generate_phantom(spec: PhantomSpec):
    """Build (modality volumes, label map) realizing the spec's ratios.

    Component ratios land within round-off of the targets (well under the
    2 percent tolerance): label voxel counts are assigned exactly from the
    sorted ellipsoidal-radius order.
    """
    rng = np.random.default_rng(spec.seed)
    labels, _ = _assign_labels(spec, rng)
    affine = np.diag([*spec.spacing, 1.0])
    lm = LabelMap(labels, spec.spacing, affine)
    vols = {}
    for modality in spec.modalities:
        arr = _synth_modality(labels, spec.intensities[modality],
                              spec.heterogeneity, spec.heterogeneity_shift,
                              spec.smooth_sigma, rng)
        vols[modality] = Volume(arr, spec.spacing, affine)
    return vols, lm


def sample_cohort_ratios(grade: int, rng: np.random.Generator) -> dict:
    """Draw one subject's per-label ratios (percent, summing to 100)."""
    raw = {}
    for lab in range(1, 6):
        p_zero, lo, hi = COHORT_RATIO_MODEL[grade][lab]
        if rng.random() < p_zero:
            raw[lab] = 0.0
        else:
            raw[lab] = rng.uniform(lo, hi)
    total = sum(raw.values())
    return {lab: 100.0 * v / total for lab, v in raw.items()}


def generate_cohort(n_per_grade=(18, 14, 25), base_seed: int = 0,
                    dims=(32, 32, 32), spacing=(1.0, 1.0, 1.0),
                    modalities=DEFAULT_MODALITIES) -> Cohort:
    """Generate a graded cohort with per-subject jittered composition.

    ``n_per_grade`` maps onto grades (II, III, IV).  Subjects share one grid;
    each gets its own derived seed, so cohorts are reproducible and subjects
    independent.
    """
    if min(n_per_grade) < 3:
        raise ValueError("need at least 3 subjects per grade")
    subjects = []
    for grade, n in zip((2, 3, 4), n_per_grade):
        for i in range(n):
            seed_seq = np.random.SeedSequence([base_seed, grade, i])
            rng = np.random.default_rng(seed_seq)
            ratios = sample_cohort_ratios(grade, rng)
            het = float(np.clip(HETEROGENEITY[grade] + rng.uniform(-0.03, 0.03),
                                0.02, 0.6))
            spec = PhantomSpec(grade=grade, ratios=ratios, dims=dims,
                               spacing=spacing, modalities=modalities,
                               heterogeneity=het,
                               seed=int(rng.integers(2 ** 31)))
            vols, lm = generate_phantom(spec)
            subjects.append(PhantomSubject(f"g{grade}_{i:03d}", grade, vols, lm, spec))
    return Cohort(tuple(subjects))


def smooth_blob_volume(dims=(32, 32, 32), spacing=(1.0, 1.0, 1.0),
                       seed: int = 0, n_blobs: int = 30,
                       sigma_range=(1.5, 3.5)) -> Volume:
    """Structured test volume: a sum of random Gaussian bumps.

    Used as registration ground-truth material.  Bump widths around a couple
    of voxels give the mutual-information surface enough curvature in the
    rotation directions to resolve sub-degree errors.
    """
    rng = np.random.default_rng(seed)
    dims = tuple(dims)
    grids = np.meshgrid(*(np.arange(d) * s for d, s in zip(dims, spacing)),
                        indexing="ij")
    extent = np.asarray(dims) * np.asarray(spacing)
    arr = np.zeros(dims)
    for _ in range(n_blobs):
        pos = extent * rng.uniform(0.15, 0.85, size=3)
        sig = rng.uniform(*sigma_range) * float(np.mean(spacing))
        amp = rng.uniform(40.0, 120.0)
        d2 = sum((g - p) ** 2 for g, p in zip(grids, pos))
        arr += amp * np.exp(-d2 / (2.0 * sig * sig))
    return Volume(arr, spacing, np.diag([*spacing, 1.0]))


def write_cohort(cohort: Cohort, outdir, compress: bool = True) -> Path:
    """Write all volumes/label maps as NIfTI plus a manifest CSV.

    Returns the manifest path.  Manifest columns: subject_id, grade,
    labelmap, then one column per modality; paths are relative to the
    manifest's directory.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ext = ".nii.gz" if compress else ".nii"
    modalities = list(cohort.subjects[0].volumes)
    manifest = outdir / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "grade", "labelmap", *modalities])
        for sub in cohort.subjects:
            seg_name = f"{sub.subject_id}_seg{ext}"
            save_labelmap(sub.labelmap, outdir / seg_name)
            row = [sub.subject_id, str(sub.grade), seg_name]
            for modality in modalities:
                name = f"{sub.subject_id}_{modality}{ext}"
                save_volume(sub.volumes[modality], outdir / name)
                row.append(name)
            writer.writerow(row)
    return manifest


def read_manifest(path):
    """Parse a cohort manifest; returns (rows, modalities).

    Each row is a dict with subject_id, grade (int) and absolute paths for
    the label map and every modality.
    """
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(filter(lambda ln: not ln.startswith("#"), fh))
        if reader.fieldnames is None:
            return [], []
        fixed = {"subject_id", "grade", "labelmap"}
        modalities = [c for c in reader.fieldnames if c not in fixed]
        for rec in reader:
            row = {"subject_id": rec["subject_id"], "grade": int(rec["grade"]),
                   "labelmap": str((path.parent / rec["labelmap"]).resolve())}
            for m in modalities:
                row[m] = str((path.parent / rec[m]).resolve())
            rows.append(row)
    return rows, modalities
