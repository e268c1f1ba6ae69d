"""Transcript normalization into the WORD / PUNCT token alphabet.

The rule inventory (numbers, dates, times, currency, abbreviations) is
documented in docs/normalization.md.
"""
from __future__ import annotations

import enum
import re
import unicodedata
from dataclasses import dataclass, field

from .errors import EncodingError, UnsupportedNumberError


class TokenKind(str, enum.Enum):
    WORD = "WORD"
    PUNCT = "PUNCT"
    SILENCE = "SILENCE"


PUNCT_WORDS = {
    ",": "<COMMA>",
    ".": "<PERIOD>",
    "?": "<QUESTIONMARK>",
    "!": "<EXCLAMATIONMARK>",
}
SPECIAL_WORDS = frozenset(PUNCT_WORDS.values())
SILENCE_WORD = "<SIL>"

WORD_RE = re.compile(r"[A-Z][A-Z']*")


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str

    @property
    def is_word(self) -> bool:
        return self.kind is TokenKind.WORD


def token_from_text(text: str) -> Token:
    if text in SPECIAL_WORDS:
        return Token(TokenKind.PUNCT, text)
    if text == SILENCE_WORD:
        return Token(TokenKind.SILENCE, text)
    return Token(TokenKind.WORD, text)


@dataclass(frozen=True)
class TokenSeq:
    tokens: tuple[Token, ...] = ()
    raw_spans: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if len(self.tokens) != len(self.raw_spans):
            raise ValueError("tokens and raw_spans differ in length")

    def __len__(self):
        return len(self.tokens)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return TokenSeq(self.tokens[i], self.raw_spans[i])
        return self.tokens[i]

    def __iter__(self):
        return iter(self.tokens)

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]

    def words(self) -> list[str]:
        return [t.text for t in self.tokens if t.kind is TokenKind.WORD]

    def word_positions(self) -> list[int]:
        return [i for i, t in enumerate(self.tokens) if t.kind is TokenKind.WORD]

    def render(self) -> str:
        return " ".join(t.text for t in self.tokens)

    def to_json(self) -> dict:
        return {"tokens": self.texts, "spans": [list(s) for s in self.raw_spans]}

    @classmethod
    def from_json(cls, d: dict) -> "TokenSeq":
        return cls(tuple(token_from_text(t) for t in d["tokens"]),
                   tuple((int(a), int(b)) for a, b in d["spans"]))

    @classmethod
    def from_texts(cls, texts) -> "TokenSeq":
        """Build a sequence with synthetic spans, one character cell per token."""
        if isinstance(texts, str):
            texts = texts.split()
        toks, spans, pos = [], [], 0
        for t in texts:
            toks.append(token_from_text(t))
            spans.append((pos, pos + len(t)))
            pos += len(t) + 1
        return cls(tuple(toks), tuple(spans))


# ---------------------------------------------------------------------------
# number reading

_ONES = ["ZERO", "ONE", "TWO", "THREE", "FOUR", "FIVE", "SIX", "SEVEN", "EIGHT",
         "NINE", "TEN", "ELEVEN", "TWELVE", "THIRTEEN", "FOURTEEN", "FIFTEEN",
         "SIXTEEN", "SEVENTEEN", "EIGHTEEN", "NINETEEN"]
_TENS = ["", "", "TWENTY", "THIRTY", "FORTY", "FIFTY", "SIXTY", "SEVENTY",
         "EIGHTY", "NINETY"]
_SCALES = [(10 ** 12, "TRILLION"), (10 ** 9, "BILLION"), (10 ** 6, "MILLION"),
           (10 ** 3, "THOUSAND")]
_ORDINAL_IRREGULAR = {
    "ONE": "FIRST", "TWO": "SECOND", "THREE": "THIRD", "FIVE": "FIFTH",
    "EIGHT": "EIGHTH", "NINE": "NINTH", "TWELVE": "TWELFTH",
}
_MAX_CARDINAL = 10 ** 15 - 1

_INT_RE = re.compile(r"[0-9]+")
_GROUPED_RE = re.compile(r"[0-9]{1,3}(?:,[0-9]{3})+")
_DECIMAL_RE = re.compile(r"([0-9]+|[0-9]{1,3}(?:,[0-9]{3})+)\.([0-9]+)")
_ORDINAL_RE = re.compile(r"([0-9]+)(st|nd|rd|th)", re.IGNORECASE)


def _below_thousand(n: int) -> list[str]:
    out = []
    if n >= 100:
        out += [_ONES[n // 100], "HUNDRED"]
        n %= 100
    if n >= 20:
        out.append(_TENS[n // 10])
        n %= 10
        if n:
            out.append(_ONES[n])
    elif n or not out:
        out.append(_ONES[n])
    return out


def cardinal(n: int) -> list[str]:
    if n < 0 or n > _MAX_CARDINAL:
        raise UnsupportedNumberError(str(n))
    if n == 0:
        return ["ZERO"]
    out = []
    for scale, name in _SCALES:
        if n >= scale:
            out += _below_thousand(n // scale) + [name]
            n %= scale
    if n:
        out += _below_thousand(n)
    return out


def ordinal(n: int) -> list[str]:
    words = cardinal(n)
    last = words[-1]
    if last in _ORDINAL_IRREGULAR:
        last = _ORDINAL_IRREGULAR[last]
    elif last.endswith("Y"):
        last = last[:-1] + "IETH"
    else:
        last += "TH"
    return words[:-1] + [last]


def year_reading(n: int) -> list[str]:
    """Read a four digit year as spoken: 1984 -> NINETEEN EIGHTY FOUR."""
    if not 1000 <= n <= 9999:
        raise UnsupportedNumberError(str(n))
    hi, lo = divmod(n, 100)
    if hi % 10 == 0 and lo < 10:
        # 2000..2009, 1000..1009 read as cardinals
        return cardinal(n)
    if lo == 0:
        return cardinal(hi) + ["HUNDRED"]
    if lo < 10:
        return cardinal(hi) + ["OH", _ONES[lo]]
    return cardinal(hi) + cardinal(lo)


def _is_year_like(s: str) -> bool:
    return len(s) == 4 and s.isdigit() and 1100 <= int(s) <= 2099


def expand_number(s: str, year: bool | None = None) -> list[str]:
    """Spoken English reading of an integer, grouped integer, decimal,
    ordinal or four digit year.

    ``year=None`` reads bare four digit numbers in 1100..2099 as years.
    Leading zeros are not read as cardinals; callers fall back to
    digit-by-digit reading on UnsupportedNumberError.
    """
    m = _ORDINAL_RE.fullmatch(s)
    if m:
        digits = m.group(1)
        if len(digits) > 1 and digits[0] == "0":
            raise UnsupportedNumberError(s)
        return ordinal(int(digits))
    m = _DECIMAL_RE.fullmatch(s)
    if m:
        whole, frac = m.groups()
        return expand_number(whole, year=False) + ["POINT"] + [_ONES[int(d)] for d in frac]
    if _GROUPED_RE.fullmatch(s):
        return cardinal(int(s.replace(",", "")))
    if _INT_RE.fullmatch(s):
        if len(s) > 1 and s[0] == "0":
            raise UnsupportedNumberError(s)
        if year or (year is None and _is_year_like(s)):
            return year_reading(int(s))
        return cardinal(int(s))
    raise UnsupportedNumberError(s)


def digit_reading(s: str) -> list[str]:
    out = []
    for ch in s:
        if ch.isdigit() and ch in "0123456789":
            out.append(_ONES[int(ch)])
        elif ch == ".":
            out.append("POINT")
    return out


def _read_number(s: str, year: bool | None = None) -> list[str]:
    try:
        return expand_number(s, year=year)
    except UnsupportedNumberError:
        return digit_reading(s)


# ---------------------------------------------------------------------------
# scanner

_MONTHS = ["JANUARY", "FEBRUARY", "MARCH", "APRIL", "MAY", "JUNE", "JULY",
           "AUGUST", "SEPTEMBER", "OCTOBER", "NOVEMBER", "DECEMBER"]
_LETTER = r"[^\W\d_]"
_NUM = r"[0-9]{1,3}(?:,[0-9]{3})+(?:\.[0-9]+)?|[0-9]+(?:\.[0-9]+)?"

_SCANNER = re.compile(
    r"(?P<special><(?:COMMA|PERIOD|QUESTIONMARK|EXCLAMATIONMARK)>)"
    r"|(?P<iso>(?<![0-9])[0-9]{4}-[0-9]{1,2}-[0-9]{1,2}(?![0-9]))"
    r"|(?P<usdate>(?<![0-9])[0-9]{1,2}/[0-9]{1,2}/[0-9]{4}(?![0-9]))"
    r"|(?P<mdate>\b(?:" + "|".join(_MONTHS) + r")\s+[0-9]{1,2}(?:st|nd|rd|th)?"
    r"(?:,?\s+[0-9]{4})?(?![0-9]))"
    r"|(?P<time>(?<![0-9])[0-9]{1,2}:[0-9]{2}(?![0-9]))"
    r"|(?P<money>\$(?:" + _NUM + r"))"
    r"|(?P<percent>(?:" + _NUM + r")%)"
    r"|(?P<ordinal>(?<![0-9])[0-9]+(?:st|nd|rd|th)\b)"
    r"|(?P<number>" + _NUM + r")"
    r"|(?P<abbrev>(?<!" + _LETTER + r")(?:" + _LETTER + r"\.){2,})"
    r"|(?P<word>" + _LETTER + r"+(?:['’]" + _LETTER + r"+)*)"
    r"|(?P<punct>[,.!?])",
    re.IGNORECASE,
)


def _clean_word(text: str) -> str:
    text = text.replace("’", "'").upper()
    text = unicodedata.normalize("NFKD", text)
    text = re.sub(r"[^A-Z']", "", text)
    text = re.sub(r"'+", "'", text).strip("'")
    return text


def _date_words(month: int, day: int, year: int | None) -> list[str] | None:
    if not (1 <= month <= 12 and 1 <= day <= 31):
        return None
    out = [_MONTHS[month - 1]] + ordinal(day)
    if year is not None:
        out += _read_number(str(year), year=True)
    return out


def _expand_match(kind: str, text: str) -> list[str]:
    if kind == "iso":
        y, mo, d = text.split("-")
        words = _date_words(int(mo), int(d), int(y))
        if words is None:
            return _read_number(y) + _read_number(mo, False) + _read_number(d, False)
        return words
    if kind == "usdate":
        mo, d, y = text.split("/")
        words = _date_words(int(mo), int(d), int(y))
        if words is None:
            return _read_number(mo, False) + _read_number(d, False) + _read_number(y)
        return words
    if kind == "mdate":
        m = re.match(r"([A-Za-z]+)\s+([0-9]{1,2})(?:st|nd|rd|th)?(?:,?\s+([0-9]{4}))?",
                     text, re.IGNORECASE)
        month = _MONTHS.index(m.group(1).upper()) + 1
        day = int(m.group(2))
        year = int(m.group(3)) if m.group(3) else None
        words = _date_words(month, day, year)
        if words is None:
            words = [m.group(1).upper()] + _read_number(m.group(2), False)
            if year is not None:
                words += _read_number(m.group(3))
        return words
    if kind == "time":
        h, mi = text.split(":")
        hour, minute = int(h), int(mi)
        if hour > 23 or minute > 59:
            return _read_number(h, False) + _read_number(mi, False)
        words = cardinal(hour)
        if minute == 0:
            return words + ["O'CLOCK"]
        if minute < 10:
            return words + ["OH", _ONES[minute]]
        return words + cardinal(minute)
    if kind == "money":
        amount = text[1:].replace(",", "")
        dollars, _, cents = amount.partition(".")
        d = int(dollars)
        c = int(cents[:2].ljust(2, "0")) if cents else 0
        if cents and len(cents) > 2:
            return _read_number(amount, False) + ["DOLLARS"]
        out = []
        if d or not c:
            out += _read_number(dollars, False) + ["DOLLAR" if d == 1 else "DOLLARS"]
        if c:
            out += cardinal(c) + ["CENT" if c == 1 else "CENTS"]
        return out
    if kind == "percent":
        return _read_number(text[:-1], False) + ["PERCENT"]
    if kind in ("ordinal", "number"):
        return _read_number(text)
    if kind == "abbrev":
        return [w for w in (_clean_word(ch) for ch in text if ch != ".") if w]
    if kind == "word":
        w = _clean_word(text)
        return [w] if w else []
    raise AssertionError(kind)


def map_punctuation(c: str) -> Token | None:
    """Map one of the four kept punctuation marks to its special word."""
    special = PUNCT_WORDS.get(c)
    return Token(TokenKind.PUNCT, special) if special else None


def normalize_text(raw) -> TokenSeq:
    """Normalize a raw transcript into WORD and PUNCT tokens.

    Accepts ``str`` or UTF-8 ``bytes``; every output token carries the
    character span of the raw text it was produced from.
    """
    if isinstance(raw, (bytes, bytearray)):
        try:
            raw = bytes(raw).decode("utf-8")
        except UnicodeDecodeError as e:
            raise EncodingError(str(e)) from e
    try:
        raw.encode("utf-8")
    except UnicodeEncodeError as e:
        raise EncodingError(str(e)) from e

    tokens, spans = [], []
    for m in _SCANNER.finditer(raw):
        kind = m.lastgroup
        span = m.span()
        if kind == "special":
            tokens.append(Token(TokenKind.PUNCT, m.group().upper()))
            spans.append(span)
        elif kind == "punct":
            tokens.append(map_punctuation(m.group()))
            spans.append(span)
        else:
            for w in _expand_match(kind, m.group()):
                tokens.append(Token(TokenKind.WORD, w))
                spans.append(span)
    return TokenSeq(tuple(tokens), tuple(spans))


def render(seq: TokenSeq) -> str:
    return seq.render()
