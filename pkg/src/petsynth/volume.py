"""3D volume representation, file I/O, and preprocessing operations.

Volumes are dense float32 grids with millimetre spacing metadata. Two
on-disk formats are supported: a minimal NIfTI-1 subset (single-file .nii,
optionally gzipped, float32, dim[0]=3) and a dependency-free raw format
(JSON header + little-endian float32 payload) used for bit-exact fixtures.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates


class VolumeKind(str, Enum):
    T1 = "t1"
    PET_SUVR = "pet_suvr"
    MASK = "mask"
    LABELS = "labels"


class VolumeFormatError(ValueError):
    """Malformed header or unsupported encoding."""


class VolumeCorruptionError(ValueError):
    """Header and payload disagree."""


@dataclass(frozen=True)
class Volume:
    """Dense scalar grid indexed [x, y, z]; x varies fastest on disk."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    kind: VolumeKind = VolumeKind.T1

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"volume data must be 3D, got ndim={arr.ndim}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray, kind: VolumeKind | None = None) -> "Volume":
        return Volume(data=data, spacing=self.spacing, kind=kind or self.kind)


@dataclass(frozen=True)
class RegionInfo:
    name: str
    region_class: str  # grey | white | reference


@dataclass(frozen=True)
class LabelAtlas:
    """Integer label volume plus a region table.

    Every nonzero label present in the volume must appear in the table and
    at least one region must have class "reference".
    """

    labels: Volume
    table: dict[int, RegionInfo] = field(default_factory=dict)

    def __post_init__(self):
        present = set(np.unique(self.labels.data).astype(int)) - {0}
        missing = present - set(self.table)
        if missing:
            raise ValueError(f"labels present in volume but not in table: {sorted(missing)}")
        if not any(r.region_class == "reference" for r in self.table.values()):
            raise ValueError("atlas must contain at least one reference region")

    def region_ids(self, region_class: str | None = None) -> list[int]:
        ids = sorted(self.table)
        if region_class is None:
            return ids
        return [i for i in ids if self.table[i].region_class == region_class]

    def reference_mask(self) -> np.ndarray:
        ref_ids = self.region_ids("reference")
        return np.isin(self.labels.data.astype(int), ref_ids)


# ---------------------------------------------------------------------------
# NIfTI-1 I/O (float32, 3D subset)

_NIFTI_HDR_SIZE = 348
_NIFTI_DT_FLOAT32 = 16


def _write_nifti_bytes(v: Volume) -> bytes:
    nx, ny, nz = v.dims
    hdr = bytearray(_NIFTI_HDR_SIZE)
    struct.pack_into("<i", hdr, 0, _NIFTI_HDR_SIZE)  # sizeof_hdr
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)  # dim
    struct.pack_into("<h", hdr, 70, _NIFTI_DT_FLOAT32)  # datatype
    struct.pack_into("<h", hdr, 72, 32)  # bitpix
    struct.pack_into("<8f", hdr, 76, 0.0, *v.spacing, 0.0, 0.0, 0.0, 0.0)  # pixdim
    struct.pack_into("<f", hdr, 108, 352.0)  # vox_offset
    struct.pack_into("<f", hdr, 112, 1.0)  # scl_slope
    hdr[344:348] = b"n+1\x00"
    payload = np.asarray(v.data, dtype="<f4").ravel(order="F").tobytes()
    return bytes(hdr) + b"\x00\x00\x00\x00" + payload


def _read_nifti_bytes(raw: bytes, path: str) -> Volume:
    if len(raw) < _NIFTI_HDR_SIZE:
        raise VolumeFormatError(f"{path}: truncated NIfTI header")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != _NIFTI_HDR_SIZE:
        raise VolumeFormatError(f"{path}: bad sizeof_hdr {sizeof_hdr}")
    if raw[344:348] not in (b"n+1\x00", b"ni1\x00"):
        raise VolumeFormatError(f"{path}: missing NIfTI magic")
    dim = struct.unpack_from("<8h", raw, 40)
    if dim[0] != 3:
        raise VolumeFormatError(f"{path}: expected 3D volume, dim[0]={dim[0]}")
    nx, ny, nz = dim[1], dim[2], dim[3]
    (datatype,) = struct.unpack_from("<h", raw, 70)
    if datatype != _NIFTI_DT_FLOAT32:
        raise VolumeFormatError(f"{path}: unsupported datatype {datatype}")
    pixdim = struct.unpack_from("<8f", raw, 76)
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    offset = int(vox_offset) if vox_offset >= _NIFTI_HDR_SIZE else 352
    n = nx * ny * nz
    payload = raw[offset : offset + 4 * n]
    if len(payload) != 4 * n:
        raise VolumeCorruptionError(f"{path}: payload holds {len(payload) // 4} voxels, header says {n}")
    data = np.frombuffer(payload, dtype="<f4").reshape((nx, ny, nz), order="F")
    return Volume(data=data, spacing=(pixdim[1], pixdim[2], pixdim[3]))


# ---------------------------------------------------------------------------
# Raw format: <name>.json + <name>.f32


def _raw_paths(path: Path) -> tuple[Path, Path]:
    stem = path.with_suffix("")
    return stem.with_suffix(".json"), stem.with_suffix(".f32")


def save_volume(v: Volume, path: str | Path) -> Path:
    """Write a volume; format chosen by extension (.nii/.nii.gz or .json/.f32)."""
    path = Path(path)
    name = path.name
    if name.endswith(".nii.gz"):
        path.write_bytes(gzip.compress(_write_nifti_bytes(v)))
    elif name.endswith(".nii"):
        path.write_bytes(_write_nifti_bytes(v))
    elif name.endswith(".json") or name.endswith(".f32"):
        hdr_path, pay_path = _raw_paths(path)
        header = {
            "format": "petsynth-raw",
            "version": 1,
            "dims": list(v.dims),
            "spacing": list(v.spacing),
            "kind": v.kind.value,
            "dtype": "<f4",
        }
        hdr_path.write_text(json.dumps(header, indent=2) + "\n")
        pay_path.write_bytes(np.asarray(v.data, dtype="<f4").ravel(order="F").tobytes())
    else:
        raise VolumeFormatError(f"unrecognized volume extension: {name}")
    return path


def load_volume(path: str | Path, kind: VolumeKind | None = None) -> Volume:
    path = Path(path)
    name = path.name
    if name.endswith(".nii.gz"):
        v = _read_nifti_bytes(gzip.decompress(path.read_bytes()), str(path))
    elif name.endswith(".nii"):
        v = _read_nifti_bytes(path.read_bytes(), str(path))
    elif name.endswith(".json") or name.endswith(".f32"):
        hdr_path, pay_path = _raw_paths(path)
        try:
            header = json.loads(hdr_path.read_text())
        except json.JSONDecodeError as e:
            raise VolumeFormatError(f"{hdr_path}: malformed JSON header: {e}") from e
        if header.get("format") != "petsynth-raw":
            raise VolumeFormatError(f"{hdr_path}: not a petsynth-raw header")
        dims = tuple(int(d) for d in header["dims"])
        payload = pay_path.read_bytes()
        n = dims[0] * dims[1] * dims[2]
        if len(payload) != 4 * n:
            raise VolumeCorruptionError(
                f"{pay_path}: payload holds {len(payload) // 4} voxels, header says {n}"
            )
        data = np.frombuffer(payload, dtype="<f4").reshape(dims, order="F")
        v = Volume(data=data, spacing=tuple(header.get("spacing", (1, 1, 1))),
                   kind=VolumeKind(header.get("kind", "t1")))
    else:
        raise VolumeFormatError(f"unrecognized volume extension: {name}")
    if kind is not None:
        v = replace(v, kind=kind)
    return v


# ---------------------------------------------------------------------------
# Preprocessing operations


def min_max_normalize(v: Volume) -> Volume:
    """Affinely rescale intensities to [0, 1]; constant volumes map to zeros."""
    lo = float(v.data.min())
    hi = float(v.data.max())
    if hi == lo:
        return v.with_data(np.zeros(v.dims, dtype=np.float32))
    return v.with_data((v.data - lo) / (hi - lo))


def resize_trilinear(v: Volume, target: tuple[int, int, int]) -> Volume:
    """Corner-aligned trilinear resampling to `target` voxel counts.

    Sample i along an axis maps to source coordinate i*(N_src-1)/(N_dst-1),
    so identity targets reproduce the input exactly and physical extent is
    preserved through rescaled spacing.
    """
    if any(t < 2 for t in target):
        raise ValueError(f"target dims must be >= 2 per axis, got {target}")
    if tuple(target) == v.dims:
        return v
    src = v.dims
    axes = [np.linspace(0.0, s - 1.0, t) for s, t in zip(src, target)]
    grid = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([g.ravel() for g in grid])
    out = map_coordinates(v.data.astype(np.float64), coords, order=1, mode="nearest")
    new_spacing = tuple(
        sp * (s - 1) / (t - 1) if t > 1 else sp for sp, s, t in zip(v.spacing, src, target)
    )
    return Volume(data=out.reshape(target).astype(np.float32), spacing=new_spacing, kind=v.kind)


def suvr_normalize(pet: Volume, atlas: LabelAtlas) -> Volume:
    """Divide every voxel by the mean uptake over the reference region."""
    if atlas.labels.dims != pet.dims:
        raise ValueError(f"atlas dims {atlas.labels.dims} != pet dims {pet.dims}")
    ref = atlas.reference_mask()
    if not ref.any():
        raise ValueError("reference region has zero voxels")
    ref_mean = float(pet.data[ref].mean())
    if ref_mean <= 1e-12:
        raise ArithmeticError(f"reference-region mean {ref_mean} too small for SUVR normalization")
    return Volume(data=pet.data / ref_mean, spacing=pet.spacing, kind=VolumeKind.PET_SUVR)


def apply_mask(v: Volume, mask: Volume) -> Volume:
    """Zero out voxels where mask == 0."""
    if mask.dims != v.dims:
        raise ValueError(f"mask dims {mask.dims} != volume dims {v.dims}")
    return v.with_data(v.data * mask.data)
