"""Two-tier Arabic text normalization and language verification.

Surface cleaning is what stored training text goes through: it strips
web noise (URLs, mentions, hashtags, emoji) but keeps the orthography
natural (hamza forms, teh marbuta, diacritics untouched).

The canonical form is a stricter, destructive normalization used only
for hashing, dedup keys, and language statistics. It is never stored
as training text.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from enum import Enum

TATWEEL = "ـ"

# Surface cleaning (R2): web noise removed in this order.
_URL_RE = re.compile(r"[A-Za-z][A-Za-z0-9+.-]*://\S+|www\.\S+")
_EMAIL_RE = re.compile(r"\S+@\S+\.\S+")
_MENTION_RE = re.compile(r"@\w+")
_HASHTAG_RE = re.compile(r"#\w+")

# Runs of the same terminal punctuation mark collapse to one (R5).
_REPEATED_TERMINAL_RE = re.compile(r"([?!؟؛.])\1+")
_WHITESPACE_RE = re.compile(r"\s+")

_EMOJI_BLOCKS = ((0x1F300, 0x1FAFF), (0x2600, 0x27BF))

# Canonical tier (N1-N5): diacritics stripped, variant letters folded.
_DIACRITICS_RE = re.compile(r"[ً-ٰٟ]")
_CANONICAL_MAP = str.maketrans(
    {
        "ى": "ي",  # alef maqsura -> yeh
        "ة": "ه",  # teh marbuta -> heh
        "آ": "ا",  # alef madda -> alef
        "أ": "ا",  # alef hamza above -> alef
        "إ": "ا",  # alef hamza below -> alef
        "ٱ": "ا",  # alef wasla -> alef
    }
)
_EASTERN_DIGITS = str.maketrans("٠١٢٣٤٥٦٧٨٩", "0123456789")
_ASCII_LOWER = str.maketrans(
    "ABCDEFGHIJKLMNOPQRSTUVWXYZ", "abcdefghijklmnopqrstuvwxyz"
)

_ARABIC_LETTER_RANGES = (
    (0x0600, 0x06FF),
    (0x0750, 0x077F),
    (0x08A0, 0x08FF),
    (0xFB50, 0xFDFF),
    (0xFE70, 0xFEFF),
)
_LATIN_LETTER_RANGES = ((0x0041, 0x005A), (0x0061, 0x007A), (0x00C0, 0x024F))


def _strip_symbols_and_controls(text: str) -> str:
    """Drop emoji/symbol codepoints and control chars except newline (R3)."""
    out = []
    for ch in text:
        if ch == "\n":
            out.append(ch)
            continue
        cp = ord(ch)
        cat = unicodedata.category(ch)
        if cat in ("So", "Sk") or cat == "Cc":
            continue
        if any(lo <= cp <= hi for lo, hi in _EMOJI_BLOCKS):
            continue
        out.append(ch)
    return "".join(out)


def _surface_clean_pass(text: str) -> str:
    text = unicodedata.normalize("NFC", text)
    text = _URL_RE.sub(" ", text)
    text = _EMAIL_RE.sub(" ", text)
    text = _MENTION_RE.sub(" ", text)
    text = _HASHTAG_RE.sub(" ", text)
    text = _strip_symbols_and_controls(text)
    text = text.replace(TATWEEL, "")
    text = _REPEATED_TERMINAL_RE.sub(r"\1", text)
    return _WHITESPACE_RE.sub(" ", text).strip()


def surface_clean(text: str) -> str:
    """Clean stored text: NFC, web-noise removal, punctuation/space tidy-up.

    Destructive letter mappings belong to :func:`canonical`, not here.
    The pass repeats until stable: removals can expose new matches (an
    emoji dropped out of "@😷user" leaves a mention) or merge combining
    marks that NFC then reorders, and the result must be a fixpoint.
    """
    for _ in range(4):
        cleaned = _surface_clean_pass(text)
        if cleaned == text:
            return cleaned
        text = cleaned
    return text


def _remove_punctuation(text: str) -> str:
    return "".join(ch for ch in text if not unicodedata.category(ch).startswith("P"))


def canonical(text: str) -> str:
    """Canonical form for hashing, dedup and language statistics.

    Applies :func:`surface_clean`, then strips Arabic diacritics, folds
    alef/teh-marbuta/alef-maqsura variants, maps Eastern Arabic digits to
    ASCII, lowercases Latin, removes punctuation and collapses whitespace.
    Iterated to a fixpoint for the same reason as surface_clean.
    """
    for _ in range(4):
        canon = _canonical_pass(text)
        if canon == text:
            return canon
        text = canon
    return text


def _canonical_pass(text: str) -> str:
    text = surface_clean(text)
    text = _DIACRITICS_RE.sub("", text)
    text = text.translate(_CANONICAL_MAP)
    text = text.translate(_EASTERN_DIGITS)
    text = text.translate(_ASCII_LOWER)
    text = _remove_punctuation(text)
    return _WHITESPACE_RE.sub(" ", text).strip()


def is_arabic_letter(ch: str) -> bool:
    if not unicodedata.category(ch).startswith("L"):
        return False
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _ARABIC_LETTER_RANGES)


def is_latin_letter(ch: str) -> bool:
    if not unicodedata.category(ch).startswith("L"):
        return False
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _LATIN_LETTER_RANGES)


class LangOutcome(str, Enum):
    PASS = "pass"
    CODE_SWITCH = "code_switch"
    INSUFFICIENT_LETTERS = "insufficient_letters"
    NON_ARABIC = "non_arabic"


@dataclass(frozen=True)
class LangGuardConfig:
    arabic_ratio_min: float = 0.90
    latin_run_max: int = 4
    min_letters: int = 10


@dataclass(frozen=True)
class LangVerdict:
    arabic_ratio: float
    letter_count: int
    latin_run_max: int
    outcome: LangOutcome


def verify_language(text: str, config: LangGuardConfig | None = None) -> LangVerdict:
    """Classify a surface-cleaned text by its Arabic-letter statistics.

    Statistics are computed on the canonical form. Outcome precedence:
    insufficient_letters, then code_switch, then non_arabic, then pass.
    """
    return language_stats(canonical(text), config)


def language_stats(canon: str, config: LangGuardConfig | None = None) -> LangVerdict:
    """verify_language for text that is already in canonical form."""
    cfg = config or LangGuardConfig()

    letters = 0
    arabic = 0
    run = 0
    longest_run = 0
    for ch in canon:
        if is_latin_letter(ch):
            run += 1
            longest_run = max(longest_run, run)
        else:
            run = 0
        if unicodedata.category(ch).startswith("L"):
            letters += 1
            if is_arabic_letter(ch):
                arabic += 1

    ratio = arabic / letters if letters else 0.0
    if letters < cfg.min_letters:
        outcome = LangOutcome.INSUFFICIENT_LETTERS
    elif longest_run >= cfg.latin_run_max:
        outcome = LangOutcome.CODE_SWITCH
    elif ratio < cfg.arabic_ratio_min:
        outcome = LangOutcome.NON_ARABIC
    else:
        outcome = LangOutcome.PASS
    return LangVerdict(
        arabic_ratio=ratio,
        letter_count=letters,
        latin_run_max=longest_run,
        outcome=outcome,
    )
