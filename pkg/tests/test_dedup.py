"""MinHash/LSH behavior against brute-force and statistical oracles."""

from __future__ import annotations

import random

import numpy as np
import pytest

from qaforge.dedup import (
    DedupConfig,
    EmptyInputError,
    IdCollisionError,
    band_keys,
    find_duplicates,
    hash64_batch,
    jaccard,
    lsh_candidate_pairs,
    minhash,
    shingles,
    signature_match_fraction,
    sketch_texts,
)
from qaforge.hashing import hash64
from qaforge.records import QARecord, Source, State

CFG = DedupConfig(master_seed=0xD4D0)


def brute_jaccard(a: str, b: str, k: int = 5) -> float:
    """Independent oracle: enumerate shingle sets with plain slicing."""
    sa = {a[i : i + k] for i in range(max(1, len(a) - k + 1))} if len(a) >= k else {a}
    sb = {b[i : i + k] for i in range(max(1, len(b) - k + 1))} if len(b) >= k else {b}
    return len(sa & sb) / len(sa | sb)


class TestShingles:
    def test_definition(self):
        assert shingles("abcdef", 5) == {"abcde", "bcdef"}

    def test_short_input_is_single_shingle(self):
        assert shingles("abc", 5) == {"abc"}

    def test_hand_enumerated_jaccard(self):
        # {"abcde","bcdef"} vs {"abcde","bcdeg"}: one shared of three total
        value = jaccard(shingles("abcdef", 5), shingles("abcdeg", 5))
        assert value == pytest.approx(1 / 3)
        assert value == pytest.approx(brute_jaccard("abcdef", "abcdeg"))


class TestHashBatch:
    def test_matches_scalar_hash(self):
        strings = ["", "a", "abcde", "إسهال شديد", "نص أطول من ثمانية بايت"]
        assert [int(v) for v in hash64_batch(strings)] == [hash64(s) for s in strings]


class TestMinhash:
    def test_identical_sets_identical_signatures(self):
        a = minhash(shingles("نص تجريبي للمطابقة", 5), CFG)
        b = minhash(shingles("نص تجريبي للمطابقة", 5), CFG)
        assert (a.signature == b.signature).all()
        assert a.shingle_count == b.shingle_count

    def test_empty_set_rejected(self):
        with pytest.raises(EmptyInputError):
            minhash(set(), CFG)

    def test_sketch_texts_matches_single_path(self):
        texts = ["ألم في البطن من يومين", "صداع نصفي مزعج", "كحة مستمرة مع بلغم"]
        batch = sketch_texts(texts, CFG)
        for row, text in zip(batch, texts):
            single = minhash(shingles(text, CFG.shingle_k), CFG)
            assert (row == single.signature).all()

    def _random_pair(self, rng: random.Random) -> tuple[set[str], set[str], float]:
        shared = rng.randint(5, 120)
        a_only = rng.randint(0, 80)
        b_only = rng.randint(0, 80)
        pool = iter(f"shingle-{i}-{rng.random():.10f}" for i in range(10_000))
        shared_set = {next(pool) for _ in range(shared)}
        set_a = shared_set | {next(pool) + "A" for _ in range(a_only)}
        set_b = shared_set | {next(pool) + "B" for _ in range(b_only)}
        return set_a, set_b, len(set_a & set_b) / len(set_a | set_b)

    def test_match_fraction_estimates_jaccard(self):
        """Monte-Carlo: E[fraction of equal slots] = Jaccard, within 0.1."""
        rng = random.Random(11)
        deviations = []
        for _ in range(100):
            set_a, set_b, true_j = self._random_pair(rng)
            estimate = signature_match_fraction(minhash(set_a, CFG), minhash(set_b, CFG))
            deviations.append(abs(estimate - true_j))
        assert max(deviations) <= 0.1
        assert sum(deviations) / len(deviations) < 0.04

    def test_single_shared_shingle_one_third(self):
        # disjoint except one shingle: J = 1/3
        set_a = {"shared", "only-a-1"}
        set_b = {"shared", "only-b-1"}
        estimate = signature_match_fraction(minhash(set_a, CFG), minhash(set_b, CFG))
        assert abs(estimate - 1 / 3) <= 0.1


class TestBanding:
    def test_candidate_probability_formula(self):
        # P(candidate | J) = 1 - (1 - J^r)^b
        j, b, r = 0.85, 16, 8
        assert 1 - (1 - j**r) ** b >= 0.97

    def test_monte_carlo_collision_rate_near_formula(self):
        rng = random.Random(5)
        hits = 0
        trials = 200
        for _ in range(trials):
            shared = [f"s{idx}-{rng.random():.8f}" for idx in range(170)]
            a_extra = [f"a{idx}-{rng.random():.8f}" for idx in range(15)]
            b_extra = [f"b{idx}-{rng.random():.8f}" for idx in range(15)]
            sig_a = minhash(set(shared + a_extra), CFG)
            sig_b = minhash(set(shared + b_extra), CFG)
            keys_a = band_keys(sig_a.signature, CFG)
            keys_b = band_keys(sig_b.signature, CFG)
            if any(x == y for x, y in zip(keys_a, keys_b)):
                hits += 1
        # true J = 170/200 = 0.85, formula gives 0.9938
        assert hits / trials >= 0.95


def _record(question: str, answer: str, source=Source.MOCK) -> QARecord:
    return QARecord(question=question, answer=answer, source=source)


class TestFindDuplicates:
    def test_exact_duplicate_removed(self):
        a = _record("سؤال عن ألم البطن المستمر", "جواب الطبيب عن العلاج المناسب")
        b = _record("سؤال عن ألم البطن المستمر", "جواب الطبيب عن العلاج المناسب")
        keeper = _record("سؤال مختلف تماماً عن الصداع", "إجابة أخرى مختلفة عن الدواء")
        ledger = find_duplicates([a, b, keeper], set(), CFG)
        assert len(ledger) == 1
        assert ledger[0].kind == "exact"
        assert ledger[0].jaccard == 1.0
        assert b.status.state == State.REJECTED
        assert a.status.state != State.REJECTED

    def test_protected_record_always_wins(self):
        synth = _record("نفس الشكوى عن الحرارة عند الأطفال", "نفس النصيحة عن الخافض والسوائل")
        real = QARecord(
            question="نفس الشكوى عن الحرارة عند الأطفال",
            answer="نفس النصيحة عن الخافض والسوائل",
            source=Source.REAL,
        )
        ledger = find_duplicates([synth, real], {real.id}, CFG)
        assert len(ledger) == 1
        assert ledger[0].removed_id == synth.id
        assert real.status.state != State.REJECTED

    def test_near_duplicate_detected_and_verified(self):
        base = "عندي حرقان شديد في المعدة بعد كل وجبة دسمة وخصوصا في الليل عند النوم"
        near = base.replace("وجبة", "وجبه").replace("الليل", "السهر")
        a = _record(base, "ينصح بتقليل الدهون والمتابعة مع طبيب الباطنية عند الحاجة")
        b = _record(near, "ينصح بتقليل الدهون والمتابعة مع طبيب الباطنية عند الحاجة")
        other = _record(
            "ابني يعاني من كحة ناشفة مزعجة أثناء النوم كل ليلة تقريبا",
            "يفضل عرضه على طبيب أطفال لتقييم حساسية الصدر وفحص التنفس",
        )
        ledger = find_duplicates([a, b, other], set(), CFG)
        assert [(p.kind, p.removed_id) for p in ledger] == [("near", b.id)]
        assert ledger[0].jaccard >= CFG.jaccard_threshold
        # emitted jaccard equals the brute-force oracle value
        assert ledger[0].jaccard == pytest.approx(
            brute_jaccard(a.dedup_text(), b.dedup_text())
        )

    def test_same_question_different_answer_kept(self):
        a = _record("ما سبب الصداع النصفي المتكرر عندي؟", "السبب الأول المحتمل هو قلة النوم والتوتر المستمر طوال اليوم")
        b = _record("ما سبب الصداع النصفي المتكرر عندي؟", "قد يكون السبب حساسية من بعض الأطعمة مثل الشوكولاتة والقهوة")
        ledger = find_duplicates([a, b], set(), CFG)
        assert ledger == []

    def test_id_collision_with_differing_content_raises(self):
        a = _record("سؤال أول عن الموضوع الصحي", "جواب أول مفصل عن الحالة")
        b = _record("سؤال ثاني مختلف كلياً هنا", "جواب ثاني مختلف تماماً عنه")
        b.id = a.id  # simulate a 64-bit collision
        with pytest.raises(IdCollisionError):
            find_duplicates([a, b], set(), CFG)

    def test_determinism(self):
        records1 = [_record(f"سؤال رقم {i} عن حالة صحية ما", f"جواب رقم {i} عن الحالة") for i in range(30)]
        records2 = [_record(f"سؤال رقم {i} عن حالة صحية ما", f"جواب رقم {i} عن الحالة") for i in range(30)]
        ledger1 = find_duplicates(records1, set(), CFG)
        ledger2 = find_duplicates(records2, set(), CFG)
        assert [p.to_dict() for p in ledger1] == [p.to_dict() for p in ledger2]

    def test_protected_pair_both_survive(self):
        a = QARecord(question="سؤال حقيقي متكرر في البيانات", answer="جواب حقيقي متكرر في البيانات", source=Source.REAL)
        b = QARecord(question="سؤال حقيقي متكرر في البيانات", answer="جواب حقيقي متكرر في البيانات", source=Source.REAL)
        ledger = find_duplicates([a, b], {a.id, b.id}, CFG)
        assert ledger == []
        assert a.status.state != State.REJECTED
        assert b.status.state != State.REJECTED


class TestLshCandidates:
    def test_identical_texts_always_collide(self):
        texts = ["نص متطابق تماما للفحص هنا"] * 2 + ["نص آخر مختلف كليا عن السابق"]
        pairs = lsh_candidate_pairs(texts, CFG)
        assert (0, 1) in pairs
