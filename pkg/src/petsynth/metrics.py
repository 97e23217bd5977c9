"""Image-quality, regional-SUVR, agreement, and classification metrics."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d
from scipy.stats import rankdata

from .volume import LabelAtlas, Volume

PSNR_INF = float("inf")


def mse_metric(a: Volume | np.ndarray, b: Volume | np.ndarray) -> float:
    a = a.data if isinstance(a, Volume) else np.asarray(a)
    b = b.data if isinstance(b, Volume) else np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))


def psnr_metric(a: Volume | np.ndarray, b: Volume | np.ndarray, max_value: float = 1.0) -> float:
    mse = mse_metric(a, b)
    if mse < 1e-12:
        return PSNR_INF
    return 10.0 * math.log10(max_value**2 / mse)


def _gaussian_kernel(size: int = 7, sigma: float = 1.5) -> np.ndarray:
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2 * sigma**2))
    return k / k.sum()


def _local_mean(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # separable Gaussian window; borders later cropped to fully-contained windows
    out = x
    for axis in range(3):
        out = correlate1d(out, kernel, axis=axis, mode="constant")
    return out


def ssim_metric(a: Volume | np.ndarray, b: Volume | np.ndarray,
                window: int = 7, sigma: float = 1.5,
                k1: float = 0.01, k2: float = 0.03, max_value: float = 1.0) -> float:
    """Mean local SSIM over a 3D Gaussian window; only fully-contained windows count."""
    a = (a.data if isinstance(a, Volume) else np.asarray(a)).astype(np.float64)
    b = (b.data if isinstance(b, Volume) else np.asarray(b)).astype(np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if any(s < window for s in a.shape):
        raise ValueError(f"dims {a.shape} smaller than SSIM window {window}")
    kernel = _gaussian_kernel(window, sigma)
    c1 = (k1 * max_value) ** 2
    c2 = (k2 * max_value) ** 2
    mu_a = _local_mean(a, kernel)
    mu_b = _local_mean(b, kernel)
    mu_aa = _local_mean(a * a, kernel)
    mu_bb = _local_mean(b * b, kernel)
    mu_ab = _local_mean(a * b, kernel)
    var_a = mu_aa - mu_a**2
    var_b = mu_bb - mu_b**2
    cov = mu_ab - mu_a * mu_b
    ssim_map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    m = window // 2
    core = ssim_map[m:-m, m:-m, m:-m]
    return float(core.mean())


@dataclass(frozen=True)
class RegionalProfile:
    subject_id: str
    region_ids: tuple[int, ...]
    means: tuple[float, ...]

    def __post_init__(self):
        if len(self.region_ids) != len(self.means):
            raise ValueError("region_ids and means length mismatch")


def regional_profile(pet: Volume, atlas: LabelAtlas, subject_id: str = "") -> RegionalProfile:
    """Per-region mean SUVR in fixed region-id order; reference regions excluded."""
    if atlas.labels.dims != pet.dims:
        raise ValueError(f"atlas dims {atlas.labels.dims} != pet dims {pet.dims}")
    labels = atlas.labels.data.astype(int)
    ids, means = [], []
    for rid in atlas.region_ids():
        if atlas.table[rid].region_class == "reference":
            continue
        mask = labels == rid
        if not mask.any():
            warnings.warn(f"region {rid} ({atlas.table[rid].name}) has zero voxels; excluded")
            continue
        ids.append(rid)
        means.append(float(pet.data[mask].mean()))
    return RegionalProfile(subject_id=subject_id, region_ids=tuple(ids), means=tuple(means))


def regional_pearson(p: RegionalProfile, q: RegionalProfile) -> float:
    if p.region_ids != q.region_ids:
        raise ValueError("profiles have different region orderings")
    if len(p.means) < 3:
        raise ValueError("need at least 3 regions for a correlation")
    x = np.asarray(p.means, dtype=np.float64)
    y = np.asarray(q.means, dtype=np.float64)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ArithmeticError("correlation undefined for a constant profile")
    return float(np.corrcoef(x, y)[0, 1])


def regional_abs_error(profiles_syn: list[RegionalProfile],
                       profiles_real: list[RegionalProfile]) -> dict[int, float]:
    """Per-region mean over subjects of |syn - real| SUVR."""
    if len(profiles_syn) != len(profiles_real):
        raise ValueError("subject count mismatch")
    if not profiles_syn:
        raise ValueError("empty profile lists")
    region_ids = profiles_syn[0].region_ids
    acc = np.zeros(len(region_ids), dtype=np.float64)
    for ps, pr in zip(profiles_syn, profiles_real):
        if ps.subject_id != pr.subject_id:
            raise ValueError(f"unpaired subjects: {ps.subject_id} vs {pr.subject_id}")
        if ps.region_ids != region_ids or pr.region_ids != region_ids:
            raise ValueError("inconsistent region ordering across subjects")
        acc += np.abs(np.asarray(ps.means) - np.asarray(pr.means))
    acc /= len(profiles_syn)
    return {rid: float(e) for rid, e in zip(region_ids, acc)}


@dataclass(frozen=True)
class AgreementMatrix:
    """2x2 counts; rows = reference (positive, negative), cols = predicted."""

    counts: tuple[tuple[int, int], tuple[int, int]]

    def __post_init__(self):
        flat = [c for row in self.counts for c in row]
        if any(c < 0 for c in flat):
            raise ValueError("counts must be non-negative")
        if sum(flat) == 0:
            raise ValueError("agreement matrix must contain at least one case")

    @property
    def total(self) -> int:
        return sum(c for row in self.counts for c in row)

    @staticmethod
    def from_calls(reference: list[bool], predicted: list[bool]) -> "AgreementMatrix":
        if len(reference) != len(predicted):
            raise ValueError("length mismatch")
        tp = sum(1 for r, p in zip(reference, predicted) if r and p)
        fn = sum(1 for r, p in zip(reference, predicted) if r and not p)
        fp = sum(1 for r, p in zip(reference, predicted) if not r and p)
        tn = sum(1 for r, p in zip(reference, predicted) if not r and not p)
        return AgreementMatrix(counts=((tp, fn), (fp, tn)))


def cohen_kappa(m: AgreementMatrix) -> float:
    (a, b), (c, d) = m.counts
    n = m.total
    p_o = (a + d) / n
    p_e = ((a + b) * (a + c) + (c + d) * (b + d)) / (n * n)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


def auc_score(scores, labels) -> float:
    """AUC via the rank statistic with half-credit ties (Mann-Whitney form)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC requires at least one positive and one negative label")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def classification_metrics(scores, labels, threshold: float = 0.5) -> dict[str, float]:
    """AUC plus thresholded accuracy/sensitivity/specificity/F1.

    With single-class labels, AUC is reported as NaN; the other metrics
    are still computed.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    pred = scores >= threshold
    tp = int(np.sum(pred & labels))
    tn = int(np.sum(~pred & ~labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    n = len(labels)
    accuracy = (tp + tn) / n if n else float("nan")
    sensitivity = tp / (tp + fn) if (tp + fn) else float("nan")
    specificity = tn / (tn + fp) if (tn + fp) else float("nan")
    f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else float("nan")
    try:
        auc = auc_score(scores, labels)
    except ValueError:
        auc = float("nan")
    return {"auc": auc, "accuracy": accuracy, "sensitivity": sensitivity,
            "specificity": specificity, "f1": f1}


def _fmt(x) -> str:
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return repr(x) if isinstance(x, float) else str(x)


def emit_report(bundle: dict, out_dir: str | Path) -> dict[str, Path]:
    """Write metrics JSON plus per-region and per-subject CSVs with stable ordering.

    `bundle` keys: image_quality (per-subject dict of metric lists keyed by
    subject id), regional (per-region abs error dict), agreement, classification.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    summary: dict = {}
    per_subject = bundle.get("image_quality", {})
    if per_subject:
        subj_ids = sorted(per_subject)
        metric_names = sorted({k for v in per_subject.values() for k in v})
        summary["image_quality"] = {}
        for name in metric_names:
            vals = np.asarray([per_subject[s][name] for s in subj_ids], dtype=np.float64)
            finite = vals[np.isfinite(vals)]
            summary["image_quality"][name] = {
                "mean": float(finite.mean()) if finite.size else None,
                "std": float(finite.std(ddof=1)) if finite.size > 1 else 0.0,
                "n": int(vals.size),
            }
        subj_path = out_dir / "per_subject.csv"
        with subj_path.open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["subject_id"] + metric_names)
            for s in subj_ids:
                w.writerow([s] + [_fmt(per_subject[s][m]) for m in metric_names])
        written["per_subject"] = subj_path

    regional = bundle.get("regional", {})
    if regional:
        summary["regional"] = {str(k): regional[k] for k in sorted(regional)}
        reg_path = out_dir / "per_region.csv"
        with reg_path.open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["region_id", "mean_abs_error"])
            for rid in sorted(regional):
                w.writerow([rid, _fmt(regional[rid])])
        written["per_region"] = reg_path

    for key in ("agreement", "classification"):
        if key in bundle:
            summary[key] = bundle[key]

    json_path = out_dir / "report.json"
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written["report"] = json_path
    return written
