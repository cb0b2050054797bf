"""Embedding providers and the semantic band filter.

The deterministic provider derives unit vectors purely from token
hashes, so the whole filtering pipeline is reproducible offline and
bit-exact across platforms (component construction is elementwise and
all float sums run in index order). A live HTTP provider implements the
same interface against a remote /embed endpoint.

The band filter accepts a candidate whose mean similarity to its k
nearest seed records lies inside [tau_low, tau_high]: below is
off-domain, above is a near-copy of the seed set.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .hashing import GOLDEN_GAMMA, hash64
from .records import QARecord
from .textnorm import canonical

DETERMINISTIC_DIM = 64

_U64 = np.uint64


class EmptyTextError(ValueError):
    pass


@dataclass(frozen=True)
class Embedding:
    values: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


@dataclass(frozen=True)
class FilterConfig:
    tau_low: float = 0.55
    tau_high: float = 0.95
    k_nn: int = 5
    target: str = "question_only"  # or "pair"

    def __post_init__(self):
        if not 0 <= self.tau_low < self.tau_high <= 1:
            raise ValueError("need 0 <= tau_low < tau_high <= 1")
        if self.target not in ("question_only", "pair"):
            raise ValueError(f"unknown filter target {self.target!r}")


def _ordered_norm(values) -> float:
    """L2 norm with the sum of squares accumulated in index order."""
    acc = 0.0
    for v in values:
        acc += float(v) * float(v)
    return math.sqrt(acc)


def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> _U64(30))
    z = z * _U64(0xBF58476D1CE4E5B9)
    z = z ^ (z >> _U64(27))
    z = z * _U64(0x94D049BB133111EB)
    z = z ^ (z >> _U64(31))
    return z


class DeterministicProvider:
    """Hash-derived token and sentence embeddings (dim 64).

    Token component i is a uniform value in [-1, 1) seeded by the token
    hash advanced by i golden-gamma steps; token vectors are unit
    normalized and a sentence embedding is the unit-normalized mean of
    its token vectors in token order.
    """

    name = "deterministic"
    dim = DETERMINISTIC_DIM

    def __init__(self):
        self._token_cache: dict[str, np.ndarray] = {}
        self._offsets = (
            np.arange(DETERMINISTIC_DIM, dtype=np.int64).astype(_U64)
            * _U64(GOLDEN_GAMMA)
        )

    def token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is not None:
            return vec
        states = _mix64_np(_U64(hash64(token)) + self._offsets)
        raw = (states >> _U64(11)).astype(np.float64) * 2.0**-53 * 2.0 - 1.0
        vec = raw / _ordered_norm(raw)
        vec.setflags(write=False)
        if len(self._token_cache) > 500_000:
            self._token_cache.clear()
        self._token_cache[token] = vec
        return vec

    def token_vectors(self, tokens: list[str], seed: int = 0) -> np.ndarray:
        """Per-token unit vectors; non-contextual, so the seed is unused."""
        out = np.empty((len(tokens), DETERMINISTIC_DIM), dtype=np.float64)
        for i, token in enumerate(tokens):
            out[i] = self.token_vector(token)
        return out

    def embed_canonical(self, canon_text: str) -> np.ndarray:
        tokens = canon_text.split()
        if not tokens:
            raise EmptyTextError("no tokens after canonicalization")
        acc = np.zeros(DETERMINISTIC_DIM, dtype=np.float64)
        for token in tokens:
            acc += self.token_vector(token)
        acc /= len(tokens)
        norm = _ordered_norm(acc)
        if norm == 0.0:
            raise EmptyTextError("degenerate zero-norm embedding")
        return acc / norm

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        out = np.empty((len(texts), DETERMINISTIC_DIM), dtype=np.float64)
        for i, text in enumerate(texts):
            out[i] = self.embed_canonical(canonical(text))
        return out


class HttpProvider:
    """Client for a remote embedding service.

    Wire contract: POST {endpoint}/embed with {"texts": [...]} returns
    {"vectors": [[...], ...], "dim": d}. Vectors are renormalized on
    ingest so downstream code can rely on unit norm.
    """

    name = "http"

    def __init__(self, endpoint: str, auth_env: str | None = None, timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self._token = None
        if auth_env:
            self._token = os.environ.get(auth_env)
            if not self._token:
                raise RuntimeError(f"auth env var {auth_env} is not set")
        self.dim: int | None = None

    def _headers(self) -> dict:
        if self._token:
            return {"Authorization": f"Bearer {self._token}"}
        return {}

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        import httpx

        response = httpx.post(
            f"{self.endpoint}/embed",
            json={"texts": texts},
            headers=self._headers(),
            timeout=self.timeout,
        )
        response.raise_for_status()
        payload = response.json()
        vectors = np.asarray(payload["vectors"], dtype=np.float64)
        self.dim = int(payload["dim"])
        if vectors.shape != (len(texts), self.dim):
            raise ValueError("embedding service returned a mismatched shape")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding service returned non-finite components")
        norms = np.sqrt((vectors * vectors).sum(axis=1))
        if np.any(norms == 0.0):
            raise ValueError("embedding service returned a zero vector")
        return vectors / norms[:, None]

    def embed_canonical(self, canon_text: str) -> np.ndarray:
        if not canon_text.split():
            raise EmptyTextError("no tokens after canonicalization")
        return self.embed_texts([canon_text])[0]

    def token_vectors(self, tokens: list[str], seed: int = 0) -> np.ndarray:
        return self.embed_texts(list(tokens))


def embed_deterministic(text: str) -> Embedding:
    """Deterministic sentence embedding of a text's canonical form."""
    provider = DeterministicProvider()
    return Embedding(values=tuple(provider.embed_canonical(canonical(text))))


def cosine(a: Embedding | np.ndarray, b: Embedding | np.ndarray) -> float:
    va = a.as_array() if isinstance(a, Embedding) else np.asarray(a, dtype=np.float64)
    vb = b.as_array() if isinstance(b, Embedding) else np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise ValueError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    return float(va @ vb)


class SeedIndex:
    """Read-only matrix of seed embeddings for exact k-NN scans."""

    def __init__(self, ids: list[str], matrix: np.ndarray):
        if len(ids) == 0:
            raise ValueError("seed index must not be empty")
        self.ids = ids
        self.matrix = matrix

    def __len__(self) -> int:
        return len(self.ids)


def _filter_text(record: QARecord, target: str) -> str:
    if target == "pair":
        return record.question + "\n" + record.answer
    return record.question


def build_seed_index(
    seeds: list[QARecord], provider, config: FilterConfig | None = None
) -> SeedIndex:
    cfg = config or FilterConfig()
    texts = [_filter_text(r, cfg.target) for r in seeds]
    return SeedIndex(ids=[r.id for r in seeds], matrix=provider.embed_texts(texts))


def _topk_mean(similarities: np.ndarray, k: int) -> float:
    k = min(k, len(similarities))
    if k == len(similarities):
        top = np.sort(similarities)[::-1]
    else:
        top = np.sort(np.partition(similarities, len(similarities) - k)[-k:])[::-1]
    acc = 0.0
    for v in top:
        acc += float(v)
    return acc / k


def seed_similarity(
    candidate: np.ndarray | Embedding, index: SeedIndex, config: FilterConfig | None = None
) -> float:
    """Mean cosine of the k_nn nearest seeds (exact full scan)."""
    cfg = config or FilterConfig()
    vec = candidate.as_array() if isinstance(candidate, Embedding) else candidate
    return _topk_mean(index.matrix @ vec, cfg.k_nn)


def seed_similarity_batch(
    candidates: np.ndarray, index: SeedIndex, config: FilterConfig | None = None
) -> np.ndarray:
    """seed_similarity for many candidates, scanned in GEMM-sized chunks."""
    cfg = config or FilterConfig()
    out = np.empty(candidates.shape[0], dtype=np.float64)
    chunk = max(1, 8_000_000 // max(1, len(index)))
    for start in range(0, candidates.shape[0], chunk):
        block = candidates[start : start + chunk] @ index.matrix.T
        for row in range(block.shape[0]):
            out[start + row] = _topk_mean(block[row], cfg.k_nn)
    return out


class FilterOutcome(str, Enum):
    ACCEPT = "accept"
    OFF_DOMAIN = "off_domain"
    NEAR_COPY = "near_copy"


@dataclass(frozen=True)
class FilterDecision:
    outcome: FilterOutcome
    similarity: float


def band_decision(similarity: float, config: FilterConfig) -> FilterOutcome:
    if similarity < config.tau_low:
        return FilterOutcome.OFF_DOMAIN
    if similarity > config.tau_high:
        return FilterOutcome.NEAR_COPY
    return FilterOutcome.ACCEPT


def semantic_filter(
    record: QARecord,
    index: SeedIndex,
    config: FilterConfig,
    provider=None,
) -> FilterDecision:
    """Band-filter one record against the seed index.

    The similarity is recorded in the record's metrics regardless of the
    outcome; bounds are inclusive on the accept side.
    """
    provider = provider or DeterministicProvider()
    vec = provider.embed_canonical(canonical(_filter_text(record, config.target)))
    similarity = seed_similarity(vec, index, config)
    record.metrics["semantic_sim"] = similarity
    return FilterDecision(outcome=band_decision(similarity, config), similarity=similarity)
