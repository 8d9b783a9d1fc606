"""Intensity and shape feature extraction from labeled volumes.

Three intensity vectors are built from a volume plus its label map:

* ``v1`` (14): one block over the union of all tumor labels,
* ``v2`` (70): one block per label 1..5, absent labels left as zeros,
* ``v3`` (28): the label-2 and label-5 blocks only.

A block is the 10-bin normalized histogram over the region's own intensity
range plus min, max, mean and Shannon entropy of the histogram (bits).

The ``shape`` vector (20) holds four planar descriptors per label, averaged
over the label's 26-connected components with the measured slice areas as
weights.  Each component is measured on its largest-area axial slice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import GeometryMismatch, LengthMismatch, NegativeProbability
from .volume import LabelMap, Volume

TUMOR_LABELS = (1, 2, 3, 4, 5)
HIST_BINS = 10

KIND_LENGTHS = {"v1": 14, "v2": 70, "v3": 28, "shape": 20}


@dataclass(frozen=True)
class IntensityBlock:
    hist: np.ndarray
    min: float
    max: float
    mean: float
    entropy: float

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.hist, [self.min, self.max, self.mean,
                                           self.entropy]])


@dataclass(frozen=True)
class ShapeBlock:
    solidity: float
    eccentricity: float
    axis_ratio: float
    perimeter_ratio: float

    def to_array(self) -> np.ndarray:
        return np.array([self.solidity, self.eccentricity, self.axis_ratio,
                         self.perimeter_ratio])


@dataclass(frozen=True)
class FeatureVector:
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in KIND_LENGTHS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        vals = np.asarray(self.values, dtype=np.float64)
        want = KIND_LENGTHS[self.kind]
        if vals.shape != (want,):
            raise LengthMismatch(
                f"{self.kind} vector must have length {want}, got {vals.shape}")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.size


def _check_mask(v: Volume, mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.shape != v.dims:
        raise GeometryMismatch(
            f"mask shape {mask.shape} does not match volume dims {v.dims}")
    return mask.astype(bool)


def region_histogram(v: Volume, mask: np.ndarray, bins: int = HIST_BINS) -> np.ndarray:
    """Normalized histogram over the masked region's own [min, max] range.

    The last bin is closed so the maximum lands in bin ``bins - 1``.
    Constant regions put all mass in bin 0; empty regions give all zeros.
    """
    mask = _check_mask(v, mask)
    vals = v.data[mask]
    if vals.size == 0:
        return np.zeros(bins)
    lo, hi = float(vals.min()), float(vals.max())
    if hi <= lo:
        out = np.zeros(bins)
        out[0] = 1.0
        return out
    if not np.isfinite(hi - lo):
        # span overflows the float range; halving is exact and keeps ratios
        vals, lo, hi = vals * 0.5, lo * 0.5, hi * 0.5
    idx = ((vals - lo) * (bins / (hi - lo))).astype(np.int64)
    counts = np.bincount(np.clip(idx, 0, bins - 1), minlength=bins)
    return counts / vals.size


def shannon_entropy(p) -> float:
    """Entropy of a discrete distribution in bits; zero terms contribute 0."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0):
        raise NegativeProbability(f"negative probability {p.min()}")
    nz = p[p > 0]
    if nz.size == 0:
        return 0.0
    return float(-np.sum(nz * np.log2(nz)))


def intensity_block(v: Volume, mask: np.ndarray) -> IntensityBlock:
    mask = _check_mask(v, mask)
    vals = v.data[mask]
    if vals.size == 0:
        return IntensityBlock(np.zeros(HIST_BINS), 0.0, 0.0, 0.0, 0.0)
    hist = region_histogram(v, mask)
    return IntensityBlock(hist, float(vals.min()), float(vals.max()),
                          float(vals.mean()), shannon_entropy(hist))


def _require_match(v: Volume, lm: LabelMap):
    if v.dims != lm.dims:
        raise GeometryMismatch(
            f"volume dims {v.dims} vs label map dims {lm.dims}")


def build_v1(v: Volume, lm: LabelMap) -> FeatureVector:
    """One intensity block over the union of all tumor labels."""
    _require_match(v, lm)
    union = lm.data > 0
    return FeatureVector("v1", intensity_block(v, union).to_array())


def build_v2(v: Volume, lm: LabelMap) -> FeatureVector:
    """Per-label intensity blocks, labels 1..5 in order; absent -> zeros."""
    _require_match(v, lm)
    blocks = [intensity_block(v, lm.data == lab).to_array()
              for lab in TUMOR_LABELS]
    return FeatureVector("v2", np.concatenate(blocks))


def build_v3(v: Volume, lm: LabelMap) -> FeatureVector:
    """Intensity blocks for the enhancing (2) and necrotic (5) labels only."""
    _require_match(v, lm)
    blocks = [intensity_block(v, lm.data == lab).to_array() for lab in (2, 5)]
    return FeatureVector("v3", np.concatenate(blocks))


_STRUCT_26 = np.ones((3, 3, 3), dtype=bool)


def connected_components(mask: np.ndarray, connectivity: int = 26) -> list:
    """Split a boolean grid into maximal 26-connected components.

    Returns boolean masks ordered by decreasing voxel count, ties broken by
    the lexicographically smallest member voxel, so the ordering is
    deterministic for any input.
    """
    if connectivity != 26:
        raise ValueError("only 26-connectivity is supported")
    mask = np.asarray(mask).astype(bool)
    labeled, n = ndimage.label(mask, structure=_STRUCT_26)
    if n == 0:
        return []
    flat = labeled.ravel()
    sizes = np.bincount(flat, minlength=n + 1)
    ids, first = np.unique(flat, return_index=True)
    seed_of = dict(zip(ids.tolist(), first.tolist()))
    order = sorted(range(1, n + 1), key=lambda i: (-int(sizes[i]), seed_of[i]))
    return [labeled == i for i in order]


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull of 2D points, counter-clockwise, no duplicates."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                o, a = out[-2], out[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _hull_pixel_count(ij: np.ndarray) -> int:
    """Number of integer lattice points inside or on the hull of ``ij``."""
    hull = _convex_hull(ij)
    if len(hull) <= 2:
        # degenerate (point or segment): the hull covers exactly the
        # region's own pixels
        return len(np.unique(ij, axis=0))
    i0, j0 = ij.min(axis=0)
    i1, j1 = ij.max(axis=0)
    gi, gj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1),
                         indexing="ij")
    inside = np.ones(gi.shape, dtype=bool)
    for k in range(len(hull)):
        a = hull[k]
        b = hull[(k + 1) % len(hull)]
        cross = (b[0] - a[0]) * (gj - a[1]) - (b[1] - a[1]) * (gi - a[0])
        inside &= cross >= -1e-9
    return int(inside.sum())


def _boundary_perimeter(slice_mask: np.ndarray, sx: float, sy: float) -> float:
    """Total length of exposed pixel edges (cracked-edge perimeter)."""
    padded = np.pad(slice_mask.astype(np.int8), 1)
    faces_x = int(np.abs(np.diff(padded, axis=0)).sum())  # edges of length sy
    faces_y = int(np.abs(np.diff(padded, axis=1)).sum())  # edges of length sx
    return faces_x * sy + faces_y * sx


def ellipse_perimeter(a: float, b: float) -> float:
    """Ramanujan's first perimeter approximation for semi-axes a, b.

    Collapses to the circle circumference 2*pi*a when a == b.
    """
    return float(np.pi * (3.0 * (a + b) - np.sqrt((3.0 * a + b) * (a + 3.0 * b))))


def _measure_slice(slice_mask: np.ndarray, sx: float, sy: float):
    """Planar shape descriptors of a 2D mask; returns (ShapeBlock, area)."""
    ij = np.argwhere(slice_mask)
    n = len(ij)
    area = n * sx * sy
    x = ij[:, 0] * sx
    y = ij[:, 1] * sy
    # second central moments of the pixel set, corrected for pixel extent
    uxx = float(np.var(x)) + sx * sx / 12.0
    uyy = float(np.var(y)) + sy * sy / 12.0
    uxy = float(np.mean((x - x.mean()) * (y - y.mean())))
    common = np.sqrt((uxx - uyy) ** 2 + 4.0 * uxy * uxy)
    a = float(np.sqrt(2.0 * (uxx + uyy + common)))
    b = float(np.sqrt(max(2.0 * (uxx + uyy - common), 0.0)))
    if b <= 0.0 or n == 1:
        ecc, ratio = 0.0, 1.0
        b = a
    else:
        ecc = float(np.sqrt(max(a * a - b * b, 0.0)) / a)
        ratio = a / b
    ellipse_perim = ellipse_perimeter(a, b)
    boundary = _boundary_perimeter(slice_mask, sx, sy)
    solidity = n / _hull_pixel_count(ij)
    return ShapeBlock(solidity, ecc, ratio,
                      float(ellipse_perim / boundary)), area


def _component_shape(component: np.ndarray, spacing):
    """Pick the component's largest-area axial slice and measure it."""
    counts = component.sum(axis=(0, 1))
    k = int(np.argmax(counts))  # first maximal slice on ties
    return _measure_slice(component[:, :, k], float(spacing[0]),
                          float(spacing[1]))


def shape_features(component: np.ndarray, spacing) -> ShapeBlock:
    """Planar shape descriptors of one component (largest axial slice).

    Single-pixel slices fall back to eccentricity 0, axis_ratio 1 and
    solidity 1; the moment ellipse of one pixel is a circle, so those values
    also come out of the math.
    """
    component = np.asarray(component).astype(bool)
    if not component.any():
        raise ValueError("component must be non-empty")
    block, _ = _component_shape(component, spacing)
    return block


def shape_block(lm: LabelMap) -> FeatureVector:
    """Four shape descriptors per label, area-weighted over components.

    Weights are the measured slice areas; a label with no voxels contributes
    four zeros, mirroring the intensity vectors' zeros rule.
    """
    out = []
    for lab in TUMOR_LABELS:
        comps = connected_components(lm.data == lab)
        if not comps:
            out.append(np.zeros(4))
            continue
        blocks, weights = [], []
        for comp in comps:
            blk, area = _component_shape(comp, lm.spacing)
            blocks.append(blk.to_array())
            weights.append(area)
        w = np.asarray(weights) / np.sum(weights)
        out.append(np.sum(np.stack(blocks) * w[:, None], axis=0))
    return FeatureVector("shape", np.concatenate(out))


def extract_all(v: Volume, lm: LabelMap) -> dict:
    """All four feature vectors for one (volume, label map) pair."""
    return {"v1": build_v1(v, lm), "v2": build_v2(v, lm),
            "v3": build_v3(v, lm), "shape": shape_block(lm)}
