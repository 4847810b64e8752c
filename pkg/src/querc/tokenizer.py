"""Dialect-tolerant lexical tokenizer and corpus vocabulary.

The tokenizer is deliberately grammar-free: it splits on whitespace and SQL
punctuation, lowercases bare identifiers and keywords, strips comments, and
(by default) collapses literals to the placeholders ``<num>`` and ``<str>``.
Anything it cannot classify passes through verbatim as an opaque token, so
unfamiliar dialect syntax never fails.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

NUM_TOKEN = "<num>"
STR_TOKEN = "<str>"

UNK, SOS, EOS, PAD = "<unk>", "<sos>", "<eos>", "<pad>"
SPECIAL_TOKENS = (UNK, SOS, EOS, PAD)
UNK_ID, SOS_ID, EOS_ID, PAD_ID = 0, 1, 2, 3

# Two-character operators kept whole so joined output re-tokenizes identically.
_TWO_CHAR_OPS = {"<=", ">=", "<>", "!=", "||", "::", ":=", "->", "=>"}
_PUNCT = set("()[]{},;.*=+-/%<>!?:|&^~")
_IDENT_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_BODY = _IDENT_START | set("0123456789$#")
_DIGITS = set("0123456789")
_QUOTES = set("'\"`")


@dataclass(frozen=True)
class TokenizerOptions:
    normalize_literals: bool = True
    max_sequence_length: int = 256

    def __post_init__(self):
        if self.max_sequence_length < 1:
            raise ValueError("max_sequence_length must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "normalize_literals": self.normalize_literals,
            "max_sequence_length": self.max_sequence_length,
        }

    @classmethod
    def from_json_dict(cls, doc) -> "TokenizerOptions":
        return cls(
            normalize_literals=bool(doc["normalize_literals"]),
            max_sequence_length=int(doc["max_sequence_length"]),
        )


@dataclass(frozen=True)
class TokenSequence:
    """Normalized token stream; source_length is the pre-truncation count."""

    tokens: tuple[str, ...]
    source_length: int

    def __post_init__(self):
        if any(t == "" for t in self.tokens):
            raise ValueError("empty-string tokens are not allowed")

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def _scan_number(text: str, i: int) -> int:
    n = len(text)
    while i < n and text[i] in _DIGITS:
        i += 1
    if i < n and text[i] == "." and i + 1 < n and text[i + 1] in _DIGITS:
        i += 1
        while i < n and text[i] in _DIGITS:
            i += 1
    elif i < n and text[i] == ".":
        i += 1
    if i < n and text[i] in "eE":
        j = i + 1
        if j < n and text[j] in "+-":
            j += 1
        if j < n and text[j] in _DIGITS:
            i = j
            while i < n and text[i] in _DIGITS:
                i += 1
    return i


def _scan_quoted(text: str, i: int, quote: str) -> tuple[str, int]:
    """Scan from the opening quote; returns (body, index past closing quote).

    A doubled quote inside the body is the escaped quote character. An
    unterminated quote swallows the rest of the text (dialect tolerance).
    """
    n = len(text)
    body: list[str] = []
    i += 1
    while i < n:
        c = text[i]
        if c == quote:
            if i + 1 < n and text[i + 1] == quote:
                body.append(quote)
                i += 2
                continue
            return "".join(body), i + 1
        body.append(c)
        i += 1
    return "".join(body), n


def tokenize(query_text: str, options: TokenizerOptions = TokenizerOptions()) -> TokenSequence:
    """Lex a query into normalized tokens.

    Deterministic and total: unknown byte runs become opaque tokens rather
    than errors. Raises ValueError only for an entirely empty query_text.
    """
    if not query_text or not query_text.strip():
        raise ValueError("query_text must be non-empty")
    text = query_text
    n = len(text)
    tokens: list[str] = []
    i = 0
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c == "-" and text.startswith("--", i):
            nl = text.find("\n", i)
            i = n if nl < 0 else nl + 1
            continue
        if c == "/" and text.startswith("/*", i):
            end = text.find("*/", i + 2)
            i = n if end < 0 else end + 2
            continue
        if text.startswith(NUM_TOKEN, i):
            tokens.append(NUM_TOKEN)
            i += len(NUM_TOKEN)
            continue
        if text.startswith(STR_TOKEN, i):
            tokens.append(STR_TOKEN)
            i += len(STR_TOKEN)
            continue
        if c == "'":
            start = i
            _, i = _scan_quoted(text, i, "'")
            tokens.append(STR_TOKEN if options.normalize_literals else text[start:i])
            continue
        if c in '"`':
            body, i = _scan_quoted(text, i, c)
            if body:
                tokens.append(body)  # quoted identifier: case kept, quotes stripped
            continue
        if c in _DIGITS or (c == "." and i + 1 < n and text[i + 1] in _DIGITS):
            start = i
            i = _scan_number(text, i)
            tokens.append(NUM_TOKEN if options.normalize_literals else text[start:i])
            continue
        if c in _IDENT_START:
            start = i
            i += 1
            while i < n and text[i] in _IDENT_BODY:
                i += 1
            tokens.append(text[start:i].lower())
            continue
        pair = text[i : i + 2]
        if pair in _TWO_CHAR_OPS:
            tokens.append(pair)
            i += 2
            continue
        if c in _PUNCT:
            tokens.append(c)
            i += 1
            continue
        # Opaque run: absorb until whitespace or a recognized boundary.
        start = i
        while i < n and not text[i].isspace() and text[i] not in _PUNCT and text[i] not in _QUOTES:
            i += 1
        tokens.append(text[start:i])
    source_length = len(tokens)
    return TokenSequence(tuple(tokens[: options.max_sequence_length]), source_length)


class Vocabulary:
    """Dense token<->id bijection with frequencies.

    Ids 0..3 are the specials (UNK, SOS, EOS, PAD); real tokens follow in
    descending frequency order, ties broken lexicographically. The UNK slot
    accumulates the total count of tokens dropped by the min_count cutoff.
    """

    def __init__(self, tokens: Sequence[str], frequencies: Sequence[int], min_count: int):
        if tuple(tokens[:4]) != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the special tokens")
        if len(tokens) != len(frequencies):
            raise ValueError("tokens and frequencies must align")
        self.tokens = tuple(tokens)
        self.frequencies = tuple(int(f) for f in frequencies)
        self.min_count = int(min_count)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id_of(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def to_json_dict(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "frequencies": list(self.frequencies),
            "min_count": self.min_count,
        }

    @classmethod
    def from_json_dict(cls, doc) -> "Vocabulary":
        return cls(doc["tokens"], doc["frequencies"], doc["min_count"])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self.tokens == other.tokens
            and self.frequencies == other.frequencies
            and self.min_count == other.min_count
        )


def build_vocabulary(corpus: Iterable[TokenSequence], min_count: int = 2) -> Vocabulary:
    """Count tokens across the corpus and assign dense ids.

    Tokens below min_count are dropped (they encode to UNK); the dropped mass
    is recorded under UNK so sampling distributions can account for it.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    seen = False
    for seq in corpus:
        seen = True
        counts.update(seq.tokens)
    if not seen:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = [(tok, c) for tok, c in counts.items() if c >= min_count]
    kept.sort(key=lambda item: (-item[1], item[0]))
    dropped_mass = sum(c for _, c in counts.items() if c < min_count)
    tokens = list(SPECIAL_TOKENS) + [tok for tok, _ in kept]
    freqs = [dropped_mass, 0, 0, 0] + [c for _, c in kept]
    return Vocabulary(tokens, freqs, min_count)


def encode(vocab: Vocabulary, seq: TokenSequence) -> np.ndarray:
    """Map tokens to ids (unknown tokens to UNK); length is preserved."""
    return np.fromiter((vocab.id_of(t) for t in seq.tokens), dtype=np.int64, count=len(seq.tokens))
