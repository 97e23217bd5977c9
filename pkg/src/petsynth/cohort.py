"""Subject records, cohort CSV I/O, stratified splits, and the phantom cohort.

The phantom generator stands in for clinical data: a latent amyloid burden
``a ~ U[0,1]`` drives both the PET deposition pattern and the blood/cognitive
variables, while T1 anatomy varies independently of ``a``. Cortical regions
activate at staggered burden thresholds, so the *shape* of the regional SUVR
profile (not just its amplitude) carries the burden signal.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .volume import LabelAtlas, RegionInfo, Volume, VolumeKind, apply_mask, min_max_normalize, save_volume, suvr_normalize

# The 18 prompt variables, in fixed prompt order.
PROMPT_VARIABLES = (
    "age", "gender", "education",
    "abeta40", "abeta42", "t_tau", "p_tau181", "nfl",
    "abeta42_40_ratio", "ptau181_abeta42_ratio",
    "mmse", "moca_b", "avlt_ldr", "avlt_r", "aft", "bnt", "stt_a", "stt_b",
)

NA_VARIABLES = ("mmse", "moca_b", "avlt_ldr", "avlt_r", "aft", "bnt", "stt_a", "stt_b")

CSV_COLUMNS = ("id",) + PROMPT_VARIABLES + ("group", "abeta_positive", "t1_path", "pet_path")

_NUMERIC_COLUMNS = set(PROMPT_VARIABLES) - {"gender"}


class CohortSchemaError(ValueError):
    pass


class CohortParseError(ValueError):
    pass


@dataclass
class SubjectRecord:
    id: str
    age: float | None = None
    gender: str | None = None  # "female" | "male"
    education: float | None = None
    abeta40: float | None = None
    abeta42: float | None = None
    t_tau: float | None = None
    p_tau181: float | None = None
    nfl: float | None = None
    abeta42_40_ratio: float | None = None
    ptau181_abeta42_ratio: float | None = None
    mmse: float | None = None
    moca_b: float | None = None
    avlt_ldr: float | None = None
    avlt_r: float | None = None
    aft: float | None = None
    bnt: float | None = None
    stt_a: float | None = None
    stt_b: float | None = None
    group: str | None = None  # "CU" | "MCI" | "ADD"
    abeta_positive: bool | None = None
    t1_path: str | None = None
    pet_path: str | None = None
    latent_burden: float | None = None  # phantom ground truth, never serialized

    def fill_derived_ratios(self) -> None:
        if self.abeta42_40_ratio is None and self.abeta40 and self.abeta42 is not None:
            self.abeta42_40_ratio = self.abeta42 / self.abeta40
        if self.ptau181_abeta42_ratio is None and self.abeta42 and self.p_tau181 is not None:
            self.ptau181_abeta42_ratio = self.p_tau181 / self.abeta42


def save_cohort_csv(records: list[SubjectRecord], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for r in records:
            row = []
            for col in CSV_COLUMNS:
                v = getattr(r, col)
                if v is None:
                    row.append("")
                elif col == "abeta_positive":
                    row.append("1" if v else "0")
                elif isinstance(v, float):
                    row.append(repr(v))
                else:
                    row.append(str(v))
            w.writerow(row)
    return path


def load_cohort_csv(path: str | Path) -> list[SubjectRecord]:
    path = Path(path)
    with path.open(newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        unknown = [c for c in header if c not in CSV_COLUMNS]
        if unknown:
            raise CohortSchemaError(f"unknown columns: {unknown}")
        if "id" not in header:
            raise CohortSchemaError("missing required column: id")
        records: list[SubjectRecord] = []
        seen: set[str] = set()
        for i, row in enumerate(reader):
            rec = SubjectRecord(id=row["id"])
            if rec.id in seen:
                raise CohortSchemaError(f"duplicate id {rec.id!r} at row {i}")
            seen.add(rec.id)
            for col in header:
                if col == "id":
                    continue
                raw = (row[col] or "").strip()
                if raw == "":
                    continue
                if col in _NUMERIC_COLUMNS:
                    try:
                        setattr(rec, col, float(raw))
                    except ValueError as e:
                        raise CohortParseError(f"row {i}, column {col}: not numeric: {raw!r}") from e
                elif col == "abeta_positive":
                    if raw not in ("0", "1", "true", "false", "True", "False"):
                        raise CohortParseError(f"row {i}: bad label {raw!r}")
                    rec.abeta_positive = raw in ("1", "true", "True")
                else:
                    setattr(rec, col, raw)
            rec.fill_derived_ratios()
            records.append(rec)
    return records


def split_stratified(records: list[SubjectRecord], k_folds: int, seed: int) -> list[int]:
    """Deterministic stratified k-fold assignment, one fold index per record."""
    if k_folds < 2:
        raise ValueError(f"k_folds must be >= 2, got {k_folds}")
    if k_folds > len(records):
        raise ValueError(f"k_folds={k_folds} exceeds cohort size {len(records)}")
    for r in records:
        if r.abeta_positive is None:
            raise ValueError(f"record {r.id} has no abeta_positive label")
    rng = np.random.default_rng(seed)
    pos = [i for i, r in enumerate(records) if r.abeta_positive]
    neg = [i for i, r in enumerate(records) if not r.abeta_positive]
    rng.shuffle(pos)
    rng.shuffle(neg)
    assignment = [0] * len(records)
    # single continuing round-robin keeps both class and total counts within +-1
    slot = 0
    for idx in pos + neg:
        assignment[idx] = slot % k_folds
        slot += 1
    return assignment


# ---------------------------------------------------------------------------
# Phantom cohort


@dataclass(frozen=True)
class PhantomConfig:
    n_subjects: int = 60
    dims: tuple[int, int, int] = (32, 32, 32)
    seed: int = 0
    noise_sigma: float = 0.02
    positivity_threshold: float = 0.5
    missing_rate: float = 0.05

    def __post_init__(self):
        if not (0 <= self.missing_rate < 1):
            raise ValueError("missing_rate must be in [0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


# burden thresholds at which each of the 8 cortical octants starts to accumulate
_REGION_THRESHOLDS = (-0.2, 0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.75)
_RAMP_WIDTH = 0.25
_DEPOSITION_GAIN = 0.5

_GREY_IDS = (1, 2, 3, 4, 5, 6, 7, 8)
_WHITE_IDS = (11, 12, 13, 14)
_REFERENCE_ID = 99


def _template_geometry(dims):
    nx, ny, nz = dims
    u = np.linspace(-1, 1, nx)[:, None, None]
    v = np.linspace(-1, 1, ny)[None, :, None]
    w = np.linspace(-1, 1, nz)[None, None, :]
    return u, v, w


def _radial(u, v, w, radii):
    ru, rv, rw = radii
    return np.sqrt((u / ru) ** 2 + (v / rv) ** 2 + (w / rw) ** 2)


_BASE_RADII = (0.85, 0.9, 0.8)
_CORE_FRAC = 0.45


def build_phantom_atlas(dims: tuple[int, int, int]) -> LabelAtlas:
    """Fixed template atlas: 8 cortical octants, 4 core quadrants, 1 reference slab."""
    u, v, w = _template_geometry(dims)
    r = _radial(u, v, w, _BASE_RADII)
    brain = r <= 1.0
    reference = brain & (np.broadcast_to(w, r.shape) < -0.55)
    core = brain & (r < _CORE_FRAC) & ~reference
    shell = brain & (r >= _CORE_FRAC) & ~reference

    labels = np.zeros(r.shape, dtype=np.float32)
    uu = np.broadcast_to(u, r.shape)
    vv = np.broadcast_to(v, r.shape)
    ww = np.broadcast_to(w, r.shape)
    octant = (uu >= 0).astype(int) * 4 + (vv >= 0).astype(int) * 2 + (ww >= 0).astype(int)
    quadrant = (uu >= 0).astype(int) * 2 + (vv >= 0).astype(int)
    for k, rid in enumerate(_GREY_IDS):
        labels[shell & (octant == k)] = rid
    for k, rid in enumerate(_WHITE_IDS):
        labels[core & (quadrant == k)] = rid
    labels[reference] = _REFERENCE_ID

    table = {rid: RegionInfo(f"cortex_octant_{k}", "grey") for k, rid in enumerate(_GREY_IDS)}
    table.update({rid: RegionInfo(f"core_quadrant_{k}", "white") for k, rid in enumerate(_WHITE_IDS)})
    table[_REFERENCE_ID] = RegionInfo("inferior_reference", "reference")
    return LabelAtlas(labels=Volume(labels, kind=VolumeKind.LABELS), table=table)


def phantom_brain_mask(dims: tuple[int, int, int]) -> Volume:
    u, v, w = _template_geometry(dims)
    mask = (_radial(u, v, w, _BASE_RADII) <= 1.0).astype(np.float32)
    return Volume(mask, kind=VolumeKind.MASK)


def region_activation(a: float) -> np.ndarray:
    """Per-cortical-region deposition activation in [0, 1], staged in burden."""
    th = np.asarray(_REGION_THRESHOLDS)
    return np.clip((a - th) / _RAMP_WIDTH, 0.0, 1.0)


def _subject_volumes(a: float, dims, noise_sigma: float, rng: np.random.Generator,
                     atlas: LabelAtlas) -> tuple[Volume, Volume]:
    u, v, w = _template_geometry(dims)
    brain = _radial(u, v, w, _BASE_RADII) <= 1.0
    mask_vol = Volume(brain.astype(np.float32), kind=VolumeKind.MASK)

    # T1: per-subject tissue-boundary jitter, independent of burden
    jitter = rng.uniform(-0.05, 0.05, size=3)
    r_sub = _radial(u, v, w, tuple(b * (1 + j) for b, j in zip(_BASE_RADII, jitter)))
    core_edge = _CORE_FRAC * (1 + rng.uniform(-0.08, 0.08))
    t1 = np.full(brain.shape, 0.30)
    t1[r_sub < 1.0] = 0.55
    t1[r_sub < core_edge] = 0.80
    t1 += rng.normal(0.0, noise_sigma, size=brain.shape)
    t1_vol = apply_mask(min_max_normalize(Volume(t1, kind=VolumeKind.T1)), mask_vol)

    # PET: shell baselines on the template geometry plus staged cortical deposition
    labels = atlas.labels.data.astype(int)
    pet = np.zeros(brain.shape)
    pet[np.isin(labels, _WHITE_IDS)] = 0.55
    pet[np.isin(labels, _GREY_IDS)] = 0.45
    pet[labels == _REFERENCE_ID] = 0.50
    act = region_activation(a)
    for k, rid in enumerate(_GREY_IDS):
        pet[labels == rid] += _DEPOSITION_GAIN * act[k]
    noise = rng.normal(0.0, noise_sigma, size=brain.shape)
    pet = np.where(brain, pet + noise, 0.0)
    pet_vol = suvr_normalize(Volume(pet, kind=VolumeKind.PET_SUVR), atlas)
    pet_vol = apply_mask(pet_vol, mask_vol)
    return t1_vol, pet_vol


def _subject_record(idx: int, a: float, cfg: PhantomConfig,
                    rng: np.random.Generator) -> SubjectRecord:
    n = lambda: rng.normal()
    abeta40 = 196.0 * (1 + 0.05 * n())
    ratio = max(0.062 - 0.030 * a + 0.003 * n(), 0.01)
    abeta42 = ratio * abeta40
    p_tau181 = max(12.0 + 18.0 * a + 2.0 * n(), 0.5)
    rec = SubjectRecord(
        id=f"sub-{idx:04d}",
        age=float(round(60 + 12 * a + 4 * n())),
        gender="female" if rng.uniform() < 0.5 else "male",
        education=float(int(np.clip(round(12 + 3 * n()), 0, 22))),
        abeta40=abeta40,
        abeta42=abeta42,
        t_tau=max(180.0 + 120.0 * a + 15.0 * n(), 1.0),
        p_tau181=p_tau181,
        nfl=max(14.0 + 16.0 * a + 2.0 * n(), 0.5),
        abeta42_40_ratio=ratio,
        ptau181_abeta42_ratio=p_tau181 / abeta42,
        mmse=float(np.clip(round(29 - 9 * a + n()), 0, 30)),
        moca_b=float(np.clip(round(28 - 10 * a + n()), 0, 30)),
        avlt_ldr=float(np.clip(round(9 - 6 * a + n()), 0, 15)),
        avlt_r=float(np.clip(round(10 - 6 * a + n()), 0, 15)),
        aft=float(np.clip(round(20 - 8 * a + 1.5 * n()), 0, 40)),
        bnt=float(np.clip(round(26 - 6 * a + n()), 0, 30)),
        stt_a=max(45.0 + 40.0 * a + 5.0 * n(), 5.0),
        stt_b=max(110.0 + 80.0 * a + 10.0 * n(), 10.0),
        abeta_positive=bool(a > cfg.positivity_threshold),
        latent_burden=a,
    )
    rec.group = "CU" if a < 0.33 else ("MCI" if a < 0.66 else "ADD")
    # only neuropsychological scores are subject to missingness
    for name in NA_VARIABLES:
        if rng.uniform() < cfg.missing_rate:
            setattr(rec, name, None)
    return rec


def generate_phantom_cohort(cfg: PhantomConfig) -> tuple[list[SubjectRecord], dict[str, tuple[Volume, Volume]], LabelAtlas]:
    """Return (records, {subject id: (t1, pet)}, atlas), deterministic in cfg.seed."""
    atlas = build_phantom_atlas(cfg.dims)
    master = np.random.default_rng(cfg.seed)
    burdens = master.uniform(0.0, 1.0, size=cfg.n_subjects)
    records: list[SubjectRecord] = []
    volumes: dict[str, tuple[Volume, Volume]] = {}
    for idx in range(cfg.n_subjects):
        sub_rng = np.random.default_rng([cfg.seed, idx])
        a = float(burdens[idx])
        rec = _subject_record(idx, a, cfg, sub_rng)
        t1, pet = _subject_volumes(a, cfg.dims, cfg.noise_sigma, sub_rng, atlas)
        records.append(rec)
        volumes[rec.id] = (t1, pet)
    return records, volumes, atlas


def write_phantom_cohort(cfg: PhantomConfig, out_dir: str | Path) -> Path:
    """Materialize a phantom cohort: cohort.csv, atlas.nii(+regions), paired volumes."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records, volumes, atlas = generate_phantom_cohort(cfg)
    save_volume(atlas.labels, out_dir / "atlas.nii")
    import json

    regions = {str(rid): {"name": info.name, "class": info.region_class}
               for rid, info in sorted(atlas.table.items())}
    (out_dir / "atlas_regions.json").write_text(json.dumps(regions, indent=2) + "\n")
    for rec in records:
        t1, pet = volumes[rec.id]
        rec.t1_path = f"{rec.id}_t1.nii"
        rec.pet_path = f"{rec.id}_pet.nii"
        save_volume(t1, out_dir / rec.t1_path)
        save_volume(pet, out_dir / rec.pet_path)
    save_cohort_csv(records, out_dir / "cohort.csv")
    return out_dir


def load_phantom_atlas(cohort_dir: str | Path) -> LabelAtlas:
    import json

    from .volume import load_volume

    cohort_dir = Path(cohort_dir)
    labels = load_volume(cohort_dir / "atlas.nii", kind=VolumeKind.LABELS)
    regions = json.loads((cohort_dir / "atlas_regions.json").read_text())
    table = {int(rid): RegionInfo(info["name"], info["class"]) for rid, info in regions.items()}
    return LabelAtlas(labels=labels, table=table)
