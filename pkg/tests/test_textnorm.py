"""Normalization rules, idempotence, and the language guard."""

from __future__ import annotations

import random

from hypothesis import given
from hypothesis import strategies as st

from qaforge.textnorm import (
    LangGuardConfig,
    LangOutcome,
    canonical,
    surface_clean,
    verify_language,
)

FORBIDDEN_CANONICAL = (
    "ـ",  # tatweel
    "آ",
    "أ",
    "إ",
    "ٱ",  # alef variants
    "ة",  # teh marbuta
    "ى",  # alef maqsura
) + tuple(chr(cp) for cp in range(0x064B, 0x0660))


class TestSurfaceClean:
    def test_strips_emoji_url_hashtag(self):
        assert surface_clean("إسهال شديد 😷 http://x.y #صحة") == "إسهال شديد"

    def test_empty(self):
        assert surface_clean("") == ""

    def test_collapses_punctuation_and_whitespace(self):
        assert surface_clean("ألم  في   البطن؟؟؟") == "ألم في البطن؟"

    def test_removes_mentions_and_emails(self):
        assert surface_clean("راسلوني @dr_ali أو على a.b@mail.com شكراً") == "راسلوني أو على شكراً"

    def test_removes_www_tokens(self):
        assert surface_clean("زوروا www.example.com/page الآن") == "زوروا الآن"

    def test_preserves_hamza_and_teh_marbuta(self):
        assert surface_clean("أمّة إلى مستشفى") == "أمّة إلى مستشفى"

    def test_removes_tatweel(self):
        assert surface_clean("جـــداً") == "جداً"

    def test_mixed_terminal_punctuation_not_collapsed(self):
        # only runs of the *same* mark collapse
        assert surface_clean("صح؟!؟") == "صح؟!؟"


class TestCanonical:
    def test_diacritics_and_hamza_fold(self):
        assert canonical("إسهالٌ") == "اسهال"

    def test_alef_maqsura(self):
        assert canonical("مستشفى") == "مستشفي"

    def test_eastern_digits(self):
        assert canonical("٥ أيام") == "5 ايام"

    def test_teh_marbuta(self):
        assert canonical("معدة") == "معده"

    def test_latin_lowercased_punctuation_removed(self):
        assert canonical("Vitamin-D مهم!") == "vitamind مهم"

    def test_same_canonical_for_variant_spellings(self):
        assert canonical("أيام") == canonical("ايام") == canonical("آيام")


ARABIC_SAMPLE = "عندي صداع شديد ومستمر من يومين"


class TestVerifyLanguage:
    def test_pure_arabic_passes(self):
        verdict = verify_language("عندي صداع مستمر منذ ثلاثة ايام")
        assert verdict.outcome == LangOutcome.PASS
        assert verdict.arabic_ratio == 1.0

    def test_code_switch_detected(self):
        verdict = verify_language("عندي صداع since yesterday تقريبا")
        assert verdict.outcome == LangOutcome.CODE_SWITCH
        assert verdict.latin_run_max == 9

    def test_insufficient_letters(self):
        verdict = verify_language("123 ؟؟")
        assert verdict.outcome == LangOutcome.INSUFFICIENT_LETTERS
        assert verdict.letter_count == 0

    def test_short_latin_runs_tolerated(self):
        # runs below L=4 are allowed as long as the ratio holds
        verdict = verify_language("عندي نقص فيتامين d12 وتعب مستمر وخمول دائم")
        assert verdict.latin_run_max == 1
        assert verdict.outcome == LangOutcome.PASS

    def test_non_arabic_majority(self):
        cfg = LangGuardConfig(latin_run_max=100)  # isolate the ratio rule
        verdict = verify_language("this is mostly english نص", cfg)
        assert verdict.outcome == LangOutcome.NON_ARABIC

    def test_pass_implies_thresholds(self):
        cfg = LangGuardConfig()
        verdict = verify_language(ARABIC_SAMPLE, cfg)
        assert verdict.outcome == LangOutcome.PASS
        assert verdict.arabic_ratio >= cfg.arabic_ratio_min
        assert verdict.latin_run_max < cfg.latin_run_max
        assert verdict.letter_count >= cfg.min_letters


def _fuzz_strings(count: int, seed: int = 2024) -> list[str]:
    rng = random.Random(seed)
    pools = [
        "ابتثجحخدذرزسشصضطظعغفقكلمنهوي",
        "أإآةىؤئء",
        "ًٌٍَُِّْـ",
        "abcXYZ",
        "0123456789٠١٢٣٤٥٦٧٨٩",
        "?!؟؛.,#@:/ \n\t",
        "😷🤒🏥✅☀",
        "http://x.y www.z.a user@mail.co #وسم @mention",
    ]
    strings = []
    for _ in range(count):
        parts = []
        for _ in range(rng.randint(0, 12)):
            pool = pools[rng.randrange(len(pools))]
            if pool.startswith("http"):
                parts.append(rng.choice(pool.split()))
            else:
                parts.append("".join(rng.choice(pool) for _ in range(rng.randint(1, 6))))
        strings.append(rng.choice(["", " "]).join(parts))
    return strings


class TestProperties:
    def test_idempotence_on_seeded_fuzz(self):
        for text in _fuzz_strings(2000):
            cleaned = surface_clean(text)
            assert surface_clean(cleaned) == cleaned
            canon = canonical(text)
            assert canonical(canon) == canon

    def test_canonical_of_cleaned_equals_canonical(self):
        for text in _fuzz_strings(1000, seed=7):
            assert canonical(surface_clean(text)) == canonical(text)

    def test_canonical_has_no_forbidden_codepoints(self):
        for text in _fuzz_strings(1000, seed=13):
            canon = canonical(text)
            for ch in FORBIDDEN_CANONICAL:
                assert ch not in canon

    @given(st.text(max_size=80))
    def test_idempotence_hypothesis(self, text):
        cleaned = surface_clean(text)
        assert surface_clean(cleaned) == cleaned
        canon = canonical(text)
        assert canonical(canon) == canon

    @given(st.integers(10, 40))
    def test_long_arabic_always_passes(self, n):
        text = "ص" * n  # n Arabic letters, no Latin
        assert verify_language(text).outcome == LangOutcome.PASS
