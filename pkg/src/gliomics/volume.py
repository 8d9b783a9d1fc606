"""Voxel-grid data model: scalar volumes, 5-label segmentations, resampling.

Volumes are immutable after construction (data arrays are frozen), so they
can be shared freely across threads.  All voxel data is held as float64
(int16 for label maps) regardless of the on-disk type.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from . import nifti
from .errors import GeometryMismatch, LabelOutOfRange, ModeMismatch, UnsupportedDatatype

MAX_LABEL = 5


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


def _check_geometry(dims, spacing, affine):
    if len(dims) != 3 or any(int(d) <= 0 for d in dims):
        raise ValueError(f"dims must be 3 positive integers, got {dims}")
    if len(spacing) != 3 or any(s <= 0 for s in spacing):
        raise ValueError(f"spacing must be 3 positive reals, got {spacing}")
    affine = np.asarray(affine, dtype=float)
    if affine.shape != (4, 4):
        raise ValueError(f"affine must be 4x4, got {affine.shape}")
    if abs(np.linalg.det(affine[:3, :3])) < 1e-12:
        raise ValueError("affine upper-left 3x3 block is singular")
    return affine


@dataclass(frozen=True)
class GridGeometry:
    """Grid shape, voxel size and voxel->world mapping, without the data."""

    dims: tuple
    spacing: tuple
    affine: np.ndarray

    def __post_init__(self):
        affine = _check_geometry(self.dims, self.spacing, self.affine)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "affine", _frozen(affine))

    def voxel_volume_mm3(self) -> float:
        return float(np.prod(self.spacing))

    def world_center(self) -> np.ndarray:
        idx = (np.asarray(self.dims, dtype=float) - 1.0) / 2.0
        return self.affine[:3, :3] @ idx + self.affine[:3, 3]

    def index_grid_world(self) -> np.ndarray:
        """World coordinates of every voxel centre, shape (3, nvox)."""
        ii = np.indices(self.dims, dtype=float).reshape(3, -1)
        return self.affine[:3, :3] @ ii + self.affine[:3, 3:4]

    def matches(self, other: "GridGeometry", tol: float = 1e-6) -> bool:
        return (self.dims == other.dims
                and np.allclose(self.spacing, other.spacing, atol=tol)
                and np.allclose(self.affine, other.affine, atol=tol))


@dataclass(frozen=True)
class Volume:
    """A 3D scalar image with spacing and a voxel->world affine."""

    data: np.ndarray
    spacing: tuple
    affine: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {data.shape}")
        affine = _check_geometry(data.shape, self.spacing, self.affine)
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "affine", _frozen(affine))

    @property
    def dims(self) -> tuple:
        return self.data.shape

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(self.dims, self.spacing, self.affine)

    def with_data(self, data: np.ndarray) -> "Volume":
        return Volume(data, self.spacing, self.affine)


@dataclass(frozen=True)
class LabelMap:
    """Integer segmentation over {0..5}: 1 edema, 2 enhancing, 3 non-enhancing
    solid, 4 cyst, 5 necrosis, 0 background."""

    data: np.ndarray
    spacing: tuple
    affine: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.data)
        if raw.ndim != 3:
            raise ValueError(f"label data must be 3D, got shape {raw.shape}")
        if np.issubdtype(raw.dtype, np.floating):
            nonint = raw != np.rint(raw)
            if nonint.any():
                idx = np.argwhere(nonint)[0]
                raise LabelOutOfRange(float(raw[tuple(idx)]), idx)
        bad = (raw < 0) | (raw > MAX_LABEL)
        if bad.any():
            idx = np.argwhere(bad)[0]
            raise LabelOutOfRange(raw[tuple(idx)].item(), idx)
        data = raw.astype(np.int16)
        affine = _check_geometry(data.shape, self.spacing, self.affine)
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "affine", _frozen(affine))

    @property
    def dims(self) -> tuple:
        return self.data.shape

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(self.dims, self.spacing, self.affine)

    def mask(self, label) -> np.ndarray:
        """Boolean mask of one label, or of their union if a sequence."""
        labels = np.atleast_1d(label)
        return np.isin(self.data, labels)


def load_volume(path) -> Volume:
    """Read a scalar NIfTI-1 volume (.nii or .nii.gz)."""
    parsed = nifti.read_nifti(path)
    return Volume(parsed.data, parsed.spacing, parsed.affine)


def save_volume(vol: Volume, path, dtype=np.float32) -> None:
    """Write a volume; float32 payloads round-trip bit-exactly."""
    nifti.write_nifti(path, vol.data, vol.spacing, vol.affine, dtype)


def load_labelmap(path) -> LabelMap:
    """Read an integer-typed NIfTI-1 segmentation and validate labels."""
    parsed = nifti.read_nifti(path)
    if not nifti.is_integer_code(parsed.datatype_code):
        raise UnsupportedDatatype(
            f"{path}: label maps require an integer datatype "
            f"(got code {parsed.datatype_code})")
    if parsed.scaled:
        raise UnsupportedDatatype(f"{path}: scaled label maps are not supported")
    return LabelMap(parsed.data, parsed.spacing, parsed.affine)


def save_labelmap(lm: LabelMap, path) -> None:
    nifti.write_nifti(path, lm.data, lm.spacing, lm.affine, np.uint8)


def _target_to_source_coords(src_affine, target: GridGeometry,
                             world_map: np.ndarray | None) -> np.ndarray:
    """Voxel coords in the source grid for every target voxel, shape (3, n)."""
    world = target.index_grid_world()
    if world_map is not None:
        m = np.asarray(world_map, dtype=float)
        world = m[:3, :3] @ world + m[:3, 3:4]
    inv = np.linalg.inv(src_affine)
    return inv[:3, :3] @ world + inv[:3, 3:4]


def resample(src, target: GridGeometry, mode: str | None = None,
             world_map: np.ndarray | None = None):
    """Resample a Volume or LabelMap onto ``target``.

    ``mode`` is "linear" or "nearest"; label maps only allow nearest (the
    default for them) so labels are never blended.  ``world_map`` optionally
    applies a 4x4 world->world transform (used to push an image through a
    registration result).  Samples falling outside the source grid are 0.
    """
    is_labels = isinstance(src, LabelMap)
    if mode is None:
        mode = "nearest" if is_labels else "linear"
    if mode not in ("linear", "nearest"):
        raise ValueError(f"unknown mode {mode!r}")
    if is_labels and mode == "linear":
        raise ModeMismatch("label maps must be resampled with nearest mode")

    coords = _target_to_source_coords(src.affine, target, world_map)
    order = 1 if mode == "linear" else 0
    out = map_coordinates(src.data.astype(np.float64), coords.reshape(3, -1),
                          order=order, mode="constant", cval=0.0)
    out = out.reshape(target.dims)
    if is_labels:
        return LabelMap(np.rint(out).astype(np.int16), target.spacing, target.affine)
    return Volume(out, target.spacing, target.affine)


def require_same_geometry(a, b, what: str = "inputs") -> None:
    if not a.geometry.matches(b.geometry):
        raise GeometryMismatch(f"{what} are on different grids: "
                               f"{a.dims}/{a.spacing} vs {b.dims}/{b.spacing}")
