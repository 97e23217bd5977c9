"""Global-context prompt construction and text encoding.

A prompt is a summary amyloid-status sentence plus a fixed-order list of 18
clinical clauses; four variants control where (or whether) the summary
appears. Encoding is pluggable: a deterministic hashed-token encoder used by
all tests, and a cache-backed adapter for embeddings precomputed offline by
an external transformer.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Protocol

import numpy as np

from .cohort import SubjectRecord


class PromptVariant(str, Enum):
    SUMMARY_FIRST = "summary_first"
    SUMMARY_LAST = "summary_last"
    SUMMARY_ONLY = "summary_only"
    SUMMARY_EXCLUDED = "summary_excluded"


# (record field, prompt name, renderer) in fixed prompt order
def _conc(v):  # concentrations
    return f"{v:.2f} pg/mL"


def _ratio(v):
    return f"{v:.4f}"


def _score(v):
    return f"{int(round(v))}"


def _seconds(v):
    return f"{v:.1f} s"


def _years(v):
    return f"{int(round(v))} years"


_CLAUSE_SPEC: list[tuple[str, str]] = [
    ("age", "Age"), ("gender", "Gender"), ("education", "Education"),
    ("abeta40", "Aβ40"), ("abeta42", "Aβ42"), ("t_tau", "T-Tau"),
    ("p_tau181", "P-Tau 181"), ("nfl", "NFL"),
    ("abeta42_40_ratio", "Aβ42/40"), ("ptau181_abeta42_ratio", "P-Tau 181/Aβ42"),
    ("mmse", "MMSE"), ("moca_b", "MoCA-B"),
    ("avlt_ldr", "AVLT-N5"), ("avlt_r", "AVLT-N7"),
    ("aft", "AFT"), ("bnt", "BNT"), ("stt_a", "STT-A"), ("stt_b", "STT-B"),
]

_RENDERERS = {
    "age": _years, "education": _years,
    "abeta40": _conc, "abeta42": _conc, "t_tau": _conc, "p_tau181": _conc, "nfl": _conc,
    "abeta42_40_ratio": _ratio, "ptau181_abeta42_ratio": _ratio,
    "mmse": _score, "moca_b": _score, "avlt_ldr": _score, "avlt_r": _score,
    "aft": _score, "bnt": _score,
    "stt_a": _seconds, "stt_b": _seconds,
}

SUMMARY_SENTENCES = {
    "positive": "The Aβ-PET is positive.",
    "negative": "The Aβ-PET is negative.",
}


@dataclass(frozen=True)
class GlobalContextPrompt:
    summary: str | None
    clauses: tuple[tuple[str, str], ...] | None
    variant: PromptVariant
    rendered: str

    @property
    def prompt_hash(self) -> str:
        return hashlib.sha256(self.rendered.encode("utf-8")).hexdigest()


def _render_value(field: str, value) -> str:
    if value is None:
        return "None"
    if field == "gender":
        return str(value)
    return _RENDERERS[field](value)


def build_prompt(record: SubjectRecord, summary: str | None,
                 variant: PromptVariant | str) -> GlobalContextPrompt:
    variant = PromptVariant(variant)
    if variant is PromptVariant.SUMMARY_EXCLUDED:
        summary_sentence = None
    else:
        if summary not in SUMMARY_SENTENCES:
            raise ValueError(
                f"variant {variant.value} needs summary 'positive' or 'negative', got {summary!r}")
        summary_sentence = SUMMARY_SENTENCES[summary]

    if variant is PromptVariant.SUMMARY_ONLY:
        clauses = None
        rendered = summary_sentence
    else:
        clauses = tuple((name, _render_value(field, getattr(record, field)))
                        for field, name in _CLAUSE_SPEC)
        body = "; ".join(f"{name}: {value}" for name, value in clauses)
        if variant is PromptVariant.SUMMARY_FIRST:
            rendered = f"{summary_sentence} {body}"
        elif variant is PromptVariant.SUMMARY_LAST:
            rendered = f"{body} {summary_sentence}"
        else:  # summary_excluded
            rendered = body
    return GlobalContextPrompt(summary=summary_sentence, clauses=clauses,
                               variant=variant, rendered=rendered)


@dataclass(frozen=True)
class TextFeature:
    values: np.ndarray
    encoder_id: str
    prompt_hash: str

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if not np.all(np.isfinite(arr)):
            raise ValueError("text feature contains non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


class EncoderError(RuntimeError):
    pass


class TextEncoder(Protocol):
    encoder_id: str
    dim: int

    def encode(self, text: str) -> np.ndarray: ...


def _token_hash(token: str) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")


def fallback_encode(text: str, d: int) -> np.ndarray:
    """Deterministic hashed-token embedding: position-weighted mean of
    per-token pseudo-random Gaussian vectors, L2-normalized."""
    if d < 8:
        raise ValueError(f"embedding dim must be >= 8, got {d}")
    tokens = re.findall(r"\w+", text.lower())
    if not tokens:
        return np.zeros(d, dtype=np.float32)
    acc = np.zeros(d, dtype=np.float64)
    for pos, tok in enumerate(tokens):
        rng = np.random.default_rng(_token_hash(tok))
        acc += rng.standard_normal(d) / (1.0 + pos)
    acc /= len(tokens)
    norm = np.linalg.norm(acc)
    if norm > 0:
        acc /= norm
    return acc.astype(np.float32)


class FallbackEncoder:
    """In-process stand-in for the pretrained biomedical text encoder."""

    def __init__(self, dim: int = 768):
        self.dim = dim
        self.encoder_id = f"fallback-hash-v1-d{dim}"

    def encode(self, text: str) -> np.ndarray:
        return fallback_encode(text, self.dim)


class CachedEncoder:
    """Reads precomputed embeddings from a JSON-lines cache keyed by prompt hash.

    Cache lines: {"prompt_hash": ..., "encoder_id": ..., "vector": [...]}.
    Populate offline with any transformer; inference never loads model weights.
    """

    def __init__(self, cache_path: str | Path, encoder_id: str, dim: int):
        self.encoder_id = encoder_id
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}
        path = Path(cache_path)
        if path.exists():
            for line in path.read_text().splitlines():
                if not line.strip():
                    continue
                entry = json.loads(line)
                if entry.get("encoder_id") != encoder_id:
                    continue
                vec = np.asarray(entry["vector"], dtype=np.float32)
                self._cache[entry["prompt_hash"]] = vec

    def encode(self, text: str) -> np.ndarray:
        key = hashlib.sha256(text.encode("utf-8")).hexdigest()
        if key not in self._cache:
            raise EncoderError(f"embedding cache miss for prompt_hash {key}")
        vec = self._cache[key]
        if vec.shape[0] != self.dim:
            raise EncoderError(f"cached vector dim {vec.shape[0]} != configured {self.dim}")
        return vec


def encode_text(prompt: GlobalContextPrompt, encoder: TextEncoder) -> TextFeature:
    try:
        values = encoder.encode(prompt.rendered)
    except EncoderError:
        raise
    except Exception as e:
        raise EncoderError(f"encoder failed on prompt_hash {prompt.prompt_hash}: {e}") from e
    if values.shape != (encoder.dim,):
        raise EncoderError(f"encoder returned shape {values.shape}, expected ({encoder.dim},)")
    return TextFeature(values=values, encoder_id=encoder.encoder_id,
                       prompt_hash=prompt.prompt_hash)


def write_embedding_cache(prompts: list[GlobalContextPrompt], encoder: TextEncoder,
                          cache_path: str | Path) -> int:
    """Offline helper: encode prompts and append them to a JSONL cache."""
    path = Path(cache_path)
    n = 0
    with path.open("a") as f:
        for p in prompts:
            vec = encoder.encode(p.rendered)
            f.write(json.dumps({"prompt_hash": p.prompt_hash,
                                "encoder_id": encoder.encoder_id,
                                "vector": [float(x) for x in vec]}) + "\n")
            n += 1
    return n
