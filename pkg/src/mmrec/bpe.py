"""Byte-level byte-pair-encoding tokenizer.

Training starts from the 256-byte base alphabet and greedily merges the most
frequent adjacent symbol pair until the vocabulary budget is exhausted or no
pair reaches the frequency cut-off. Whitespace is the pre-tokenization
boundary: merges never cross words, and whitespace runs are kept as plain
byte tokens, so decode(encode(x)) == x for any string. Ties between
equal-frequency pairs break toward the lexicographically smallest pair, which
makes training deterministic for a given corpus and config.

Symbols are stored as strings over a printable stand-in alphabet (one
character per byte value), so merge rules serialize directly into the JSON
vocabulary file (version "bpe-v1").
"""

from __future__ import annotations

import json
import re
from collections import Counter

SPECIAL_TOKENS = ("<s>", "</s>", "<pad>", "<unk>", "<mask>")
BOS_ID, EOS_ID, PAD_ID, UNK_ID, MASK_ID = range(5)

VOCAB_FORMAT_VERSION = "bpe-v1"

_WORD_RE = re.compile(r"\S+|\s+")
_SPECIAL_RE = re.compile("(" + "|".join(re.escape(t) for t in SPECIAL_TOKENS) + ")")


class VocabularyError(ValueError):
    pass


def _bytes_to_chars() -> dict[int, str]:
    """Bijection from byte values to printable characters.

    Printable bytes map to themselves; the rest are relocated above U+0100 so
    every symbol renders as a clean string in the vocabulary file.
    """
    keep = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(0xA1, 0xAD))
        + list(range(0xAE, 0x100))
    )
    mapping = {}
    shifted = 0
    for b in range(256):
        if b in keep:
            mapping[b] = chr(b)
        else:
            mapping[b] = chr(0x100 + shifted)
            shifted += 1
    return mapping


_BYTE_TO_CHAR = _bytes_to_chars()
_CHAR_TO_BYTE = {c: b for b, c in _BYTE_TO_CHAR.items()}
_BYTE_ALPHABET = tuple(_BYTE_TO_CHAR[b] for b in range(256))


def _word_to_symbols(word: str) -> tuple[str, ...]:
    return tuple(_BYTE_TO_CHAR[b] for b in word.encode("utf-8"))


def _symbols_to_text(symbols) -> str:
    data = bytes(_CHAR_TO_BYTE[c] for sym in symbols for c in sym)
    return data.decode("utf-8", errors="strict")


class Vocabulary:
    """Trained merge rules plus the derived token<->id tables.

    Ids 0..4 are the special tokens, 5..260 the byte alphabet, and every
    merge appends one token in training order.
    """

    def __init__(self, merges: list[tuple[str, str]]):
        self.merges = list(merges)
        self.merge_rank = {pair: i for i, pair in enumerate(self.merges)}
        if len(self.merge_rank) != len(self.merges):
            raise VocabularyError("duplicate merge rule")
        tokens = list(SPECIAL_TOKENS) + list(_BYTE_ALPHABET)
        self.token_to_id = {tok: i for i, tok in enumerate(tokens)}
        for left, right in self.merges:
            merged = left + right
            # two merge paths can spell the same string; they share one id
            if merged not in self.token_to_id:
                self.token_to_id[merged] = len(tokens)
                tokens.append(merged)
        self.id_to_token = tokens

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset(range(len(SPECIAL_TOKENS)))

    # -- encoding ----------------------------------------------------------

    def _merge_word(self, symbols: list[str]) -> list[str]:
        while len(symbols) >= 2:
            best_rank = None
            best_i = -1
            for i in range(len(symbols) - 1):
                rank = self.merge_rank.get((symbols[i], symbols[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
                    best_i = i
            if best_rank is None:
                break
            symbols[best_i : best_i + 2] = [symbols[best_i] + symbols[best_i + 1]]
        return symbols

    def encode(self, text: str) -> list[int]:
        """Encode arbitrary UTF-8 text. Special-token literals map to their
        fixed ids; everything else is byte-level BPE. Never produces <unk>."""
        ids: list[int] = []
        for segment in _SPECIAL_RE.split(text):
            if not segment:
                continue
            if segment in self.token_to_id and segment in SPECIAL_TOKENS:
                ids.append(self.token_to_id[segment])
                continue
            for word in _WORD_RE.findall(segment):
                symbols = self._merge_word(list(_word_to_symbols(word)))
                ids.extend(self.token_to_id[s] for s in symbols)
        return ids

    def decode(self, ids) -> str:
        out = []
        pending: list[str] = []
        n_special = len(SPECIAL_TOKENS)
        for i in ids:
            if not 0 <= i < len(self.id_to_token):
                raise VocabularyError(f"unknown token id {i}")
            if i < n_special:
                if pending:
                    out.append(_symbols_to_text(pending))
                    pending = []
                out.append(self.id_to_token[i])
            else:
                pending.append(self.id_to_token[i])
        if pending:
            out.append(_symbols_to_text(pending))
        return "".join(out)

    def decode_token(self, token_id: int) -> str:
        """Surface text of a single token (specials decode to their literal)."""
        return self.decode([token_id])

    # -- persistence ---------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "version": VOCAB_FORMAT_VERSION,
            "specials": list(SPECIAL_TOKENS),
            "merges": [[l, r] for l, r in self.merges],
        }
        return json.dumps(doc, ensure_ascii=True)

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        doc = json.loads(text)
        if doc.get("version") != VOCAB_FORMAT_VERSION:
            raise VocabularyError(f"unsupported vocabulary version {doc.get('version')!r}")
        if tuple(doc.get("specials", ())) != SPECIAL_TOKENS:
            raise VocabularyError("unexpected special-token set")
        return cls([(l, r) for l, r in doc["merges"]])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())
            f.write("\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(f.read())


def train_bpe(lines, vocab_size: int, min_frequency: int = 2) -> Vocabulary:
    """Train merge rules on an iterable of surface-text lines.

    Greedy: at each step merge the pair with the highest total frequency
    (counted once per occurrence, weighted by word frequency); ties go to the
    lexicographically smallest pair. Stops at vocab_size or when no pair
    occurs at least min_frequency times.
    """
    base = len(SPECIAL_TOKENS) + 256
    if vocab_size <= base:
        raise VocabularyError(f"vocab_size must exceed {base}")
    if min_frequency < 1:
        raise VocabularyError("min_frequency must be >= 1")

    word_freq = Counter()
    for line in lines:
        for word in _WORD_RE.findall(line):
            if not word.isspace():
                word_freq[word] += 1
    if not word_freq:
        raise VocabularyError("empty corpus")

    # unique words as symbol sequences, with occurrence counts
    words = [(list(_word_to_symbols(w)), n) for w, n in sorted(word_freq.items())]

    merges: list[tuple[str, str]] = []
    token_count = base
    seen_tokens = set(SPECIAL_TOKENS) | set(_BYTE_ALPHABET)
    while token_count < vocab_size:
        pair_freq = Counter()
        for symbols, n in words:
            for pair in zip(symbols, symbols[1:]):
                pair_freq[pair] += n
        if not pair_freq:
            break
        top = max(pair_freq.values())
        if top < min_frequency:
            break
        best = min(p for p, n in pair_freq.items() if n == top)
        merges.append(best)
        merged = best[0] + best[1]
        if merged not in seen_tokens:
            seen_tokens.add(merged)
            token_count += 1
        for symbols, _ in words:
            i = 0
            while i < len(symbols) - 1:
                if (symbols[i], symbols[i + 1]) == best:
                    symbols[i : i + 2] = [merged]
                else:
                    i += 1
    return Vocabulary(merges)
