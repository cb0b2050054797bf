"""Exact and near-duplicate detection with MinHash/LSH.

Duplicate text is the canonical question/answer pair joined by U+241F,
so the same question with a genuinely different answer survives. Exact
duplicates collapse by content id; near duplicates are found by LSH
banding over 128-permutation MinHash sketches and every candidate pair
is verified with the exact Jaccard over character shingle sets before
anything is removed. Records in the protected subset are never evicted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hashing import FNV_OFFSET_BASIS, FNV_PRIME, MASK64, hash64, mix64
from .records import CurationStatus, QARecord, Stage, State

_U64 = np.uint64


class EmptyInputError(ValueError):
    pass


class IdCollisionError(ValueError):
    """Same 16-hex id but different canonical content."""


@dataclass(frozen=True)
class DedupConfig:
    shingle_k: int = 5
    num_perms: int = 128
    bands: int = 16
    rows: int = 8
    jaccard_threshold: float = 0.80
    master_seed: int = 0

    def __post_init__(self):
        if self.bands * self.rows != self.num_perms:
            raise ValueError("bands * rows must equal num_perms")
        if not 0 < self.jaccard_threshold <= 1:
            raise ValueError("jaccard_threshold must be in (0, 1]")


@dataclass
class Sketch:
    signature: np.ndarray  # uint64, length num_perms
    shingle_count: int


@dataclass(frozen=True)
class DuplicatePair:
    kept_id: str
    removed_id: str
    kind: str  # "exact" | "near"
    jaccard: float

    def to_dict(self) -> dict:
        return {
            "kept_id": self.kept_id,
            "removed_id": self.removed_id,
            "kind": self.kind,
            "jaccard": self.jaccard,
        }


def shingles(text: str, k: int = 5) -> set[str]:
    """All overlapping character k-grams; short texts yield themselves."""
    if len(text) < k:
        return {text}
    return {text[i : i + k] for i in range(len(text) - k + 1)}


def jaccard(a: set[str], b: set[str]) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> _U64(30))
    z = z * _U64(0xBF58476D1CE4E5B9)
    z = z ^ (z >> _U64(27))
    z = z * _U64(0x94D049BB133111EB)
    z = z ^ (z >> _U64(31))
    return z


def hash64_batch(strings: list[str]) -> np.ndarray:
    """Vectorized FNV-1a 64 over many strings, bit-equal to hash64.

    Strings are grouped by UTF-8 byte length so the per-byte fold runs
    as column-wise numpy ops.
    """
    out = np.empty(len(strings), dtype=_U64)
    encoded = [s.encode("utf-8") for s in strings]
    by_len: dict[int, list[int]] = {}
    for idx, raw in enumerate(encoded):
        by_len.setdefault(len(raw), []).append(idx)
    for length, idxs in by_len.items():
        if length == 0:
            out[np.asarray(idxs)] = _U64(FNV_OFFSET_BASIS)
            continue
        block = np.frombuffer(
            b"".join(encoded[i] for i in idxs), dtype=np.uint8
        ).reshape(len(idxs), length)
        state = np.full(len(idxs), FNV_OFFSET_BASIS, dtype=_U64)
        prime = _U64(FNV_PRIME)
        for col in range(length):
            state = (state ^ block[:, col].astype(_U64)) * prime
        out[np.asarray(idxs)] = state
    return out


def permutation_seeds(config: DedupConfig) -> np.ndarray:
    base = (config.master_seed + np.arange(config.num_perms, dtype=np.int64)).astype(
        _U64
    )
    return _mix64_np(base)


def minhash_from_hashes(
    shingle_hashes: np.ndarray, seeds: np.ndarray
) -> np.ndarray:
    """signature[j] = min over shingles s of mix64(hash(s) XOR seed_j)."""
    mixed = _mix64_np(shingle_hashes[:, None] ^ seeds[None, :])
    return mixed.min(axis=0)


def minhash(shingle_set: set[str], config: DedupConfig) -> Sketch:
    if not shingle_set:
        raise EmptyInputError("cannot sketch an empty shingle set")
    hashes = hash64_batch(sorted(shingle_set))
    seeds = permutation_seeds(config)
    return Sketch(
        signature=minhash_from_hashes(hashes, seeds),
        shingle_count=len(shingle_set),
    )


def signature_match_fraction(a: Sketch, b: Sketch) -> float:
    """Fraction of equal signature slots; unbiased Jaccard estimator."""
    if len(a.signature) != len(b.signature):
        raise ValueError("signature length mismatch")
    return float(np.count_nonzero(a.signature == b.signature)) / len(a.signature)


def band_keys(signature: np.ndarray, config: DedupConfig) -> list[int]:
    """One mixing-fold key per band over its r signature rows."""
    rows = signature.reshape(config.bands, config.rows)
    keys = []
    for band_idx in range(config.bands):
        acc = mix64(band_idx)
        for value in rows[band_idx]:
            acc = mix64(acc ^ int(value))
        keys.append(acc)
    return keys


def _band_keys_matrix(signatures: np.ndarray, config: DedupConfig) -> np.ndarray:
    """Band keys for many signatures at once; bit-equal to band_keys."""
    n = signatures.shape[0]
    rows = signatures.reshape(n, config.bands, config.rows)
    acc = _mix64_np(np.arange(config.bands, dtype=np.int64).astype(_U64))
    acc = np.broadcast_to(acc, (n, config.bands)).copy()
    for r in range(config.rows):
        acc = _mix64_np(acc ^ rows[:, :, r])
    return acc


def sketch_texts(texts: list[str], config: DedupConfig) -> np.ndarray:
    """MinHash signatures for many canonical texts; rows align with input.

    Works in bounded chunks so corpus-scale inputs stay within memory.
    """
    seeds = permutation_seeds(config)
    signatures = np.empty((len(texts), config.num_perms), dtype=_U64)
    chunk_budget = 200_000  # shingles per flattened chunk
    start = 0
    while start < len(texts):
        end = start
        shingle_lists = []
        total = 0
        while end < len(texts) and (total == 0 or total < chunk_budget):
            sh = sorted(shingles(texts[end], config.shingle_k))
            shingle_lists.append(sh)
            total += len(sh)
            end += 1
        flat: list[str] = []
        boundaries = [0]
        for sh in shingle_lists:
            flat.extend(sh)
            boundaries.append(len(flat))
        hashes = hash64_batch(flat)
        mixed = _mix64_np(hashes[:, None] ^ seeds[None, :])
        mins = np.minimum.reduceat(mixed, np.asarray(boundaries[:-1]), axis=0)
        signatures[start:end] = mins
        start = end
    return signatures


def find_duplicates(
    records: list[QARecord],
    protected: set[int],
    config: DedupConfig,
    texts: list[str] | None = None,
) -> list[DuplicatePair]:
    """Two-stage duplicate removal over records in insertion order.

    Exact stage groups by content id; the near stage buckets surviving
    records by LSH band keys and verifies candidates with exact Jaccard.
    Removed records get a rejected status (exact_dup / near_dup) with the
    pair's Jaccard stored in metrics. `protected` holds the list indices
    of records that must never be removed (the real subset); among
    unprotected duplicates the earliest-inserted record is kept.
    """
    if texts is None:
        texts = [r.dedup_text() for r in records]
    ledger: list[DuplicatePair] = []
    removed = [False] * len(records)

    def winner_loser(i: int, j: int) -> tuple[int, int] | None:
        pi = i in protected
        pj = j in protected
        if pi and pj:
            return None
        if pj and not pi:
            return j, i
        return i, j  # protected-i or earliest-insertion wins

    def mark_removed(idx: int, kept_idx: int, kind: str, score: float) -> None:
        removed[idx] = True
        rec = records[idx]
        rec.metrics["jaccard_max"] = score
        rec.status = CurationStatus(
            state=State.REJECTED,
            rejected_stage=Stage.EXACT_DUP if kind == "exact" else Stage.NEAR_DUP,
            reason=f"duplicate of {records[kept_idx].id}",
        )
        ledger.append(
            DuplicatePair(
                kept_id=records[kept_idx].id,
                removed_id=rec.id,
                kind=kind,
                jaccard=score,
            )
        )

    # Exact stage: same id means same canonical content (or a hash collision,
    # which is a hard error).
    by_id: dict[str, list[int]] = {}
    for idx, rec in enumerate(records):
        by_id.setdefault(rec.id, []).append(idx)
    for rec_id, idxs in by_id.items():
        if len(idxs) < 2:
            continue
        base = texts[idxs[0]]
        for idx in idxs[1:]:
            if texts[idx] != base:
                raise IdCollisionError(
                    f"id {rec_id} maps to two different canonical contents"
                )
        protected_members = [i for i in idxs if i in protected]
        keeper = protected_members[0] if protected_members else idxs[0]
        for idx in idxs:
            if idx != keeper:
                mark_removed(idx, keeper, "exact", 1.0)

    # Near stage over exact-stage survivors.
    survivors = [i for i in range(len(records)) if not removed[i]]
    if len(survivors) < 2:
        return ledger
    signatures = sketch_texts([texts[i] for i in survivors], config)
    keys = _band_keys_matrix(signatures, config)
    buckets: dict[tuple[int, int], list[int]] = {}
    for pos, rec_idx in enumerate(survivors):
        for band_idx in range(config.bands):
            buckets.setdefault((band_idx, int(keys[pos, band_idx])), []).append(
                rec_idx
            )
    candidate_pairs: set[tuple[int, int]] = set()
    for members in buckets.values():
        if len(members) < 2:
            continue
        for a_pos in range(len(members)):
            for b_pos in range(a_pos + 1, len(members)):
                i, j = members[a_pos], members[b_pos]
                candidate_pairs.add((i, j) if i < j else (j, i))

    shingle_cache: dict[int, set[str]] = {}

    def shingle_set(idx: int) -> set[str]:
        if idx not in shingle_cache:
            shingle_cache[idx] = shingles(texts[idx], config.shingle_k)
        return shingle_cache[idx]

    for i, j in sorted(candidate_pairs):
        if removed[i] or removed[j]:
            continue
        score = jaccard(shingle_set(i), shingle_set(j))
        if score < config.jaccard_threshold:
            continue
        resolution = winner_loser(i, j)
        if resolution is None:
            continue  # both protected: keep both
        keeper, loser = resolution
        mark_removed(loser, keeper, "near", score)
    return ledger


def lsh_candidate_pairs(
    texts: list[str], config: DedupConfig
) -> set[tuple[int, int]]:
    """Index positions of pairs sharing at least one LSH band bucket."""
    signatures = sketch_texts(texts, config)
    keys = _band_keys_matrix(signatures, config)
    buckets: dict[tuple[int, int], list[int]] = {}
    for idx in range(len(texts)):
        for band_idx in range(config.bands):
            buckets.setdefault((band_idx, int(keys[idx, band_idx])), []).append(idx)
    pairs: set[tuple[int, int]] = set()
    for members in buckets.values():
        for a_pos in range(len(members)):
            for b_pos in range(a_pos + 1, len(members)):
                pairs.add((members[a_pos], members[b_pos]))
    return pairs
