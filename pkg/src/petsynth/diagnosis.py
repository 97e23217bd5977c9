"""Amyloid-positivity classifiers and the fully automatic diagnosis pipeline.

Contains the volumetric residual "judge" classifier used for diagnostic
consistency checks, the two-layer clinical MLP that predicts positivity from
11 clinical variables (driving the prompt summary at inference), logit-level
fusion, and the end-to-end T1 -> synthetic PET -> diagnosis pipeline.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .cohort import SubjectRecord
from .metrics import AgreementMatrix, classification_metrics, cohen_kappa
from .models import GeneratorModel, generate
from .prompts import PromptVariant, TextEncoder, build_prompt, encode_text
from .training import cosine_lr, init_weights
from .volume import Volume

# The 11 clinical variables feeding the summary-prediction MLP
# (gender and the six sparsest neuropsychological scores are excluded).
CLINICAL_VARIABLES = (
    "age", "education", "abeta40", "abeta42", "abeta42_40_ratio",
    "t_tau", "p_tau181", "nfl", "ptau181_abeta42_ratio", "mmse", "moca_b",
)


class _ResidualBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int):
        super().__init__()
        self.conv1 = nn.Conv3d(in_ch, out_ch, 3, stride=stride, padding=1)
        self.bn1 = nn.BatchNorm3d(out_ch)
        self.conv2 = nn.Conv3d(out_ch, out_ch, 3, padding=1)
        self.bn2 = nn.BatchNorm3d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        self.skip = None
        if stride != 1 or in_ch != out_ch:
            self.skip = nn.Sequential(nn.Conv3d(in_ch, out_ch, 1, stride=stride),
                                      nn.BatchNorm3d(out_ch))

    def forward(self, x):
        identity = self.skip(x) if self.skip is not None else x
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + identity)


@dataclass(frozen=True)
class JudgeConfig:
    widths: tuple[int, int, int] = (16, 32, 64)
    lr: float = 1.0e-4
    weight_decay: float = 1.0e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epochs: int = 100
    batch_size: int = 16
    lr_min: float = 1.0e-7
    init_std: float = 0.02
    seed: int = 0


class JudgeModel(nn.Module):
    """Small volumetric residual classifier emitting a single logit."""

    def __init__(self, config: JudgeConfig = JudgeConfig()):
        super().__init__()
        self.config = config
        w1, w2, w3 = config.widths
        self.stem = nn.Sequential(nn.Conv3d(1, w1, 3, stride=2, padding=1),
                                  nn.BatchNorm3d(w1), nn.ReLU(inplace=True))
        self.stage1 = _ResidualBlock(w1, w1, stride=2)
        self.stage2 = _ResidualBlock(w1, w2, stride=2)
        self.stage3 = _ResidualBlock(w2, w3, stride=2)
        self.head = nn.Linear(w3, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 5 or x.shape[1] != 1:
            raise ValueError(f"expected [B, 1, X, Y, Z] input, got {tuple(x.shape)}")
        if any(s % 16 != 0 for s in x.shape[2:]):
            raise ValueError(f"input dims {tuple(x.shape[2:])} must be divisible by 16")
        x = self.stage3(self.stage2(self.stage1(self.stem(x))))
        x = x.mean(dim=(2, 3, 4))
        return self.head(x).squeeze(-1)


def train_judge(volumes: list[np.ndarray], labels: list[bool],
                cfg: JudgeConfig = JudgeConfig()) -> JudgeModel:
    """Train the judge classifier with BCE on (volume, positivity) pairs."""
    labels_arr = np.asarray(labels, dtype=bool)
    if labels_arr.all() or not labels_arr.any():
        raise ValueError("training fold contains a single class")
    model = JudgeModel(cfg)
    init_weights(model, std=cfg.init_std, seed=cfg.seed)
    model.train()
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr,
                            betas=(cfg.beta1, cfg.beta2), weight_decay=cfg.weight_decay)
    bce = nn.BCEWithLogitsLoss()
    y_all = torch.tensor(labels_arr, dtype=torch.float32)
    for epoch in range(cfg.epochs):
        lr_now = cosine_lr(min(epoch, cfg.epochs), cfg.lr, cfg.lr_min, cfg.epochs)
        for group in opt.param_groups:
            group["lr"] = lr_now
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(volumes))
        for b0 in range(0, len(order), cfg.batch_size):
            idx = order[b0 : b0 + cfg.batch_size]
            x = torch.stack([torch.from_numpy(volumes[i].copy()).float() for i in idx])[:, None]
            loss = bce(model(x), y_all[idx])
            if not math.isfinite(loss.item()):
                raise RuntimeError(f"non-finite judge loss at epoch {epoch}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
    model.eval()
    return model


def predict_judge(model: JudgeModel, pet: Volume | np.ndarray) -> tuple[float, float]:
    data = pet.data if isinstance(pet, Volume) else np.asarray(pet)
    model.eval()
    with torch.no_grad():
        logit = float(model(torch.from_numpy(data.copy()).float()[None, None]).item())
    return 1.0 / (1.0 + math.exp(-logit)), logit


# ---------------------------------------------------------------------------
# Clinical MLP


@dataclass
class ClinicalStats:
    medians: dict[str, float]
    means: dict[str, float]
    stds: dict[str, float]


def fit_clinical_stats(records: list[SubjectRecord]) -> ClinicalStats:
    medians, means, stds = {}, {}, {}
    for var in CLINICAL_VARIABLES:
        vals = np.asarray([getattr(r, var) for r in records if getattr(r, var) is not None],
                          dtype=np.float64)
        if vals.size == 0:
            raise ValueError(f"variable {var} is missing for every training record")
        medians[var] = float(np.median(vals))
        means[var] = float(vals.mean())
        stds[var] = float(vals.std()) or 1.0
    return ClinicalStats(medians, means, stds)


def clinical_vector(record: SubjectRecord, stats: ClinicalStats) -> np.ndarray:
    """Median-impute then standardize the 11-variable input."""
    out = np.empty(len(CLINICAL_VARIABLES), dtype=np.float32)
    for i, var in enumerate(CLINICAL_VARIABLES):
        v = getattr(record, var)
        if v is None:
            v = stats.medians[var]
        out[i] = (v - stats.means[var]) / stats.stds[var]
    return out


class ClinicalMLP(nn.Module):
    """11 -> 16 -> 1 logit predictor of amyloid positivity."""

    def __init__(self, hidden: int = 16):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(len(CLINICAL_VARIABLES), hidden),
                                 nn.ReLU(inplace=True), nn.Linear(hidden, 1))
        self.stats: ClinicalStats | None = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x).squeeze(-1)


def train_clinical_mlp(records: list[SubjectRecord], labels: list[bool],
                       epochs: int = 300, lr: float = 1.0e-2, seed: int = 0) -> ClinicalMLP:
    mlp = ClinicalMLP()
    init_weights(mlp, seed=seed)
    mlp.stats = fit_clinical_stats(records)
    x = torch.tensor(np.stack([clinical_vector(r, mlp.stats) for r in records]))
    y = torch.tensor(np.asarray(labels, dtype=np.float32))
    opt = torch.optim.AdamW(mlp.parameters(), lr=lr, weight_decay=1e-4)
    bce = nn.BCEWithLogitsLoss()
    mlp.train()
    for _ in range(epochs):
        loss = bce(mlp(x), y)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
    mlp.eval()
    return mlp


def predict_clinical(mlp: ClinicalMLP, record: SubjectRecord) -> tuple[float, float]:
    if mlp.stats is None:
        raise RuntimeError("clinical MLP not trained (no standardization stats)")
    x = torch.tensor(clinical_vector(record, mlp.stats))[None]
    mlp.eval()
    with torch.no_grad():
        logit = float(mlp(x).item())
    return 1.0 / (1.0 + math.exp(-logit)), logit


def predict_summary(mlp: ClinicalMLP, record: SubjectRecord) -> str:
    prob, _ = predict_clinical(mlp, record)
    return "positive" if prob >= 0.5 else "negative"


def fuse_logits(pet_logit: float, clinical_logit: float) -> float:
    """Unweighted mean of the two logits, mapped through a sigmoid."""
    if not (math.isfinite(pet_logit) and math.isfinite(clinical_logit)):
        raise ValueError("logits must be finite")
    return 1.0 / (1.0 + math.exp(-(pet_logit + clinical_logit) / 2.0))


# ---------------------------------------------------------------------------
# Full pipeline


def full_pipeline(t1: Volume, record: SubjectRecord, *, generator: GeneratorModel,
                  encoder: TextEncoder, clinical_mlp: ClinicalMLP, classifier: JudgeModel,
                  variant: PromptVariant = PromptVariant.SUMMARY_FIRST,
                  fuse_clinical: bool = False) -> dict:
    """T1 + clinical record -> synthetic PET -> positivity. Never touches real PET."""
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    summary = predict_summary(clinical_mlp, record)
    prompt = build_prompt(record, summary, variant)
    feature = encode_text(prompt, encoder)
    timings["prompt_encode"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    synthetic = generate(t1, feature, generator)
    timings["synthesis"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    prob, logit = predict_judge(classifier, synthetic)
    if fuse_clinical:
        _, clin_logit = predict_clinical(clinical_mlp, record)
        prob = fuse_logits(logit, clin_logit)
    timings["classification"] = time.perf_counter() - t0

    return {
        "id": record.id,
        "synthetic_pet": synthetic,
        "summary": summary,
        "probability": prob,
        "positive": prob >= 0.5,
        "stage_timings": timings,
    }


def consistency_eval(judge: JudgeModel, paired: list[tuple[str, Volume, Volume]]) -> dict:
    """Compare judge calls on real vs synthetic PET per subject.

    `paired` entries are (subject_id, real_pet, synthetic_pet).
    """
    if not paired:
        raise ValueError("no paired volumes")
    p_real, p_syn = [], []
    for _sid, real, syn in paired:
        p_real.append(predict_judge(judge, real)[0])
        p_syn.append(predict_judge(judge, syn)[0])
    real_calls = [p >= 0.5 for p in p_real]
    syn_calls = [p >= 0.5 for p in p_syn]
    matrix = AgreementMatrix.from_calls(real_calls, syn_calls)
    metrics = classification_metrics(np.asarray(p_syn), np.asarray(real_calls))
    return {"matrix": matrix, "kappa": cohen_kappa(matrix), "metrics": metrics,
            "p_real": p_real, "p_syn": p_syn}
