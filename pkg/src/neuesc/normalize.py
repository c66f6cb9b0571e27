"""Text curation: teen-code/acronym expansion and noise cleanup.

Cleaning runs before expansion so that shorthand glued to punctuation
("qtkd?") still matches a lexicon key. The composed pipeline is idempotent
for any lexicon whose expansions are clean text free of lexicon keys.
"""

from __future__ import annotations

import importlib.resources
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

_EMOJI_RANGES = (
    (0x1F000, 0x1FAFF),  # emoji, symbols, pictographs
    (0x2600, 0x27BF),  # misc symbols, dingbats
    (0x2B00, 0x2BFF),
    (0xFE00, 0xFE0F),  # variation selectors
    (0x1F1E6, 0x1F1FF),  # regional indicators
    (0x2190, 0x21FF),  # arrows
)


def _is_emoji(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _EMOJI_RANGES)


@dataclass(frozen=True)
class NormalizationConfig:
    strip_emoji: bool = True
    strip_special_symbols: bool = True
    collapse_repeats_at: int = 2
    unicode_form: str = "NFC"
    keep_symbols: str = ""  # punctuation exempt from special-symbol removal

    def __post_init__(self):
        if self.collapse_repeats_at < 2:
            raise ValueError("collapse_repeats_at must be >= 2")


class AcronymLexicon:
    """Case-insensitive shorthand -> expansion mapping.

    Keys are single whitespace-free tokens. Expansions must not themselves
    contain lexicon keys, which keeps single-pass expansion idempotent.
    """

    def __init__(self, entries: dict[str, str]):
        normalized: dict[str, str] = {}
        for key, expansion in entries.items():
            k = key.strip().lower()
            if not k or any(ch.isspace() for ch in k):
                raise ValueError(f"lexicon key {key!r} must be a single token")
            if k == expansion.strip().lower():
                raise ValueError(f"lexicon key {key!r} maps to itself")
            normalized[k] = expansion.strip()
        for key, expansion in normalized.items():
            for token in expansion.lower().split():
                if token in normalized:
                    raise ValueError(
                        f"expansion of {key!r} contains lexicon key {token!r}"
                    )
        self._entries = normalized

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, token: str) -> bool:
        return token.lower() in self._entries

    def get(self, token: str) -> str | None:
        return self._entries.get(token.lower())

    def items(self):
        return self._entries.items()

    @classmethod
    def from_file(cls, path: str | Path) -> "AcronymLexicon":
        """Load a two-column UTF-8 file: shorthand TAB expansion."""
        entries: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                if "\t" not in line:
                    raise ValueError(f"{path}:{lineno}: expected TAB-separated columns")
                key, expansion = line.split("\t", 1)
                entries[key] = expansion
        return cls(entries)

    @classmethod
    def empty(cls) -> "AcronymLexicon":
        return cls({})


def default_lexicon() -> AcronymLexicon:
    """The lexicon shipped with the package (a reconstruction; see README)."""
    ref = importlib.resources.files("neuesc").joinpath("data/acronyms.tsv")
    with importlib.resources.as_file(ref) as path:
        return AcronymLexicon.from_file(path)


def expand_acronyms(text: str, lexicon: AcronymLexicon) -> str:
    """Replace whole tokens whose lowercase form is a lexicon key.

    Single pass: expansions are not themselves re-expanded.
    """
    out = []
    for token in text.split():
        expansion = lexicon.get(token)
        out.append(expansion if expansion is not None else token)
    return " ".join(out)


def clean_text(text: str, config: NormalizationConfig | None = None) -> str:
    """Unicode-normalize, drop emoji and special symbols, collapse repeats."""
    config = config or NormalizationConfig()
    text = unicodedata.normalize(config.unicode_form, text)
    kept = []
    for ch in text:
        if config.strip_emoji and _is_emoji(ch):
            continue
        if config.strip_special_symbols:
            cat = unicodedata.category(ch)
            is_word = cat[0] in ("L", "M", "N") or ch.isspace()
            if not is_word and ch not in config.keep_symbols:
                continue
        kept.append(ch)
    text = "".join(kept)
    n = config.collapse_repeats_at
    text = re.sub(r"(.)\1{%d,}" % n, lambda m: m.group(1) * n, text)
    return re.sub(r"\s+", " ", text).strip()


def normalize_pipeline(
    text: str,
    lexicon: AcronymLexicon | None = None,
    config: NormalizationConfig | None = None,
) -> str:
    """clean_text then expand_acronyms."""
    lexicon = lexicon if lexicon is not None else AcronymLexicon.empty()
    return expand_acronyms(clean_text(text, config), lexicon)
