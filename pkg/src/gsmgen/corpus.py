"""Closed-vocabulary tokenization, sequence packing and binary serialization.

The grammar has a finite lexicon, so the tokenizer is an exact
whitespace/punctuation splitter over a frozen vocabulary: words from the
vocabulary packs and sentence templates, single letters, numerals 0-22,
punctuation, the possessive "'s", [BACK], and an explicit problem separator.
Out-of-vocabulary material is an error (it signals grammar drift), and
detokenize(tokenize(t)) == t for canonically spaced text.

Packing concatenates whole problems with separator tokens and truncates each
sequence only at its right edge; a problem whose own text exceeds the context
length is discarded. Token-level loss masks are carried through from the
character mask spans of augmented samples.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from random import Random
from typing import Iterable, Sequence

from .errors import TokenizeError
from .graphgen import _UNIVERSES
from .semantics import MODULUS

SEP_TOKEN = "<sep>"
BACK_TOKEN = "[BACK]"

_TEMPLATE_WORDS = (
    "The the number of each equals more than times as much sum and difference "
    "Define so Answer How many does have").split()

_PUNCT = [".", ";", ":", "?", ",", "'s", "=", "+", "-", "*"]


def _pack_words() -> set[str]:
    words: set[str] = set()
    for pack in _UNIVERSES.values():
        names = list(pack["categories"]) + [i for pool in pack["items"] for i in pool]
        for name in names:
            for chunk in name.split(" "):
                words.add(chunk[:-2] if chunk.endswith("'s") else chunk)
    return words


def _build_vocab() -> list[str]:
    words = _pack_words()
    words.update(_TEMPLATE_WORDS)
    words.update(chr(c) for c in range(ord("a"), ord("z") + 1))
    words.update(chr(c) for c in range(ord("A"), ord("Z") + 1))
    words.update(str(n) for n in range(MODULUS))
    return [SEP_TOKEN, BACK_TOKEN] + sorted(words | set(_PUNCT))


VOCAB: list[str] = _build_vocab()
TOKEN_ID: dict[str, int] = {tok: i for i, tok in enumerate(VOCAB)}

_TOKEN_RE = re.compile(r"\[BACK\]|<sep>|'s|[A-Za-z]+|\d+|[.;:?,=+*-]")
_NO_SPACE_BEFORE = {".", ";", ":", "?", ",", "'s"}


@dataclass(frozen=True)
class TokenStream:
    ids: tuple[int, ...]
    mask: tuple[bool, ...]   # True = loss-masked

    def __len__(self) -> int:
        return len(self.ids)


def tokenize(text: str, mask_spans: Sequence[tuple[int, int]] = ()) -> TokenStream:
    ids: list[int] = []
    mask: list[bool] = []
    pos = 0
    for m in _TOKEN_RE.finditer(text):
        gap = text[pos:m.start()]
        if gap.strip():
            raise TokenizeError(f"unexpected material {gap.strip()!r}", pos)
        tok = m.group(0)
        tid = TOKEN_ID.get(tok)
        if tid is None:
            raise TokenizeError(f"out-of-vocabulary token {tok!r}", m.start())
        ids.append(tid)
        mask.append(any(m.start() < e and m.end() > s for s, e in mask_spans))
        pos = m.end()
    if text[pos:].strip():
        raise TokenizeError(f"unexpected material {text[pos:].strip()!r}", pos)
    return TokenStream(tuple(ids), tuple(mask))


def detokenize(ids: Iterable[int]) -> str:
    parts: list[str] = []
    for tid in ids:
        tok = VOCAB[tid]
        if tok in _NO_SPACE_BEFORE or not parts:
            parts.append(tok)
        else:
            parts.append(" " + tok)
    return "".join(parts)


# ----------------------------- packing -----------------------------

@dataclass(frozen=True)
class PackedSequence:
    ids: tuple[int, ...]
    mask: tuple[bool, ...]

    def __len__(self) -> int:
        return len(self.ids)


def _sample_tokens(sample) -> TokenStream:
    """Tokenize an AugmentedSample's full text with shifted mask spans."""
    if sample.problem_text is None:
        return tokenize(sample.text, sample.mask_spans)
    shift = len(sample.problem_text) + 1
    spans = [(s + shift, e + shift) for s, e in sample.mask_spans]
    return tokenize(sample.full_text, spans)


def pack(samples: Sequence, context_len: int, seed: int) -> list[PackedSequence]:
    """Pack augmented samples into sequences of at most `context_len` tokens.

    Samples are shuffled by seed, then concatenated whole (separated by the
    problem separator); the sample that overflows a sequence is right-truncated
    to fill it exactly and the next sequence starts with the following sample.
    A sample longer than `context_len` on its own is dropped.
    """
    if context_len <= 0:
        raise ValueError("context_len must be positive")
    order = list(samples)
    Random(f"pack:{seed}").shuffle(order)
    sep = TOKEN_ID[SEP_TOKEN]
    sequences: list[PackedSequence] = []
    cur_ids: list[int] = []
    cur_mask: list[bool] = []

    def flush() -> None:
        if cur_ids:
            sequences.append(PackedSequence(tuple(cur_ids), tuple(cur_mask)))
            cur_ids.clear()
            cur_mask.clear()

    for sample in order:
        stream = _sample_tokens(sample)
        if len(stream) > context_len:
            continue  # discard rule: the problem alone exceeds the window
        need = len(stream) + (1 if cur_ids else 0)
        if len(cur_ids) + need <= context_len:
            if cur_ids:
                cur_ids.append(sep)
                cur_mask.append(False)
            cur_ids.extend(stream.ids)
            cur_mask.extend(stream.mask)
            continue
        fill = context_len - len(cur_ids) - 1
        if fill > 0:
            cur_ids.append(sep)
            cur_mask.append(False)
            cur_ids.extend(stream.ids[:fill])
            cur_mask.extend(stream.mask[:fill])
            flush()
        else:
            flush()
            cur_ids.extend(stream.ids)
            cur_mask.extend(stream.mask)
    flush()
    return sequences


def fits_eval_window(problem_text: str, canonical_solution_text: str,
                     context_len: int) -> bool:
    """Evaluation-set filter: judged on the error-free ground-truth solution
    length, never on the augmented (error-including) length."""
    return len(tokenize(f"{problem_text} {canonical_solution_text}")) <= context_len


# ----------------------------- binary format -----------------------------

BIN_MAGIC = b"GSMPK1\x00\x00"
MASK_MAGIC = b"GSMMSK1\x00"
BIN_VERSION = 1


def write_packed(path: str, sequences: Sequence[PackedSequence], context_len: int) -> None:
    """Write ids as little-endian u32 with a sidecar mask bitmap at path+'.mask'.

    Layout: magic, u32 version, u32 context_len, u64 n_sequences, u64 n_tokens,
    u32 lengths[n_sequences], u32 ids[n_tokens]. The sidecar holds the magic,
    u64 n_tokens, then one bit per token (LSB-first within each byte).
    """
    lengths = [len(s) for s in sequences]
    n_tokens = sum(lengths)
    with open(path, "wb") as fh:
        fh.write(BIN_MAGIC)
        fh.write(struct.pack("<IIQQ", BIN_VERSION, context_len, len(sequences), n_tokens))
        fh.write(struct.pack(f"<{len(lengths)}I", *lengths))
        for s in sequences:
            fh.write(struct.pack(f"<{len(s.ids)}I", *s.ids))
    bits = bytearray((n_tokens + 7) // 8)
    i = 0
    for s in sequences:
        for flag in s.mask:
            if flag:
                bits[i >> 3] |= 1 << (i & 7)
            i += 1
    with open(path + ".mask", "wb") as fh:
        fh.write(MASK_MAGIC)
        fh.write(struct.pack("<Q", n_tokens))
        fh.write(bytes(bits))


def read_packed(path: str) -> tuple[list[PackedSequence], int]:
    with open(path, "rb") as fh:
        if fh.read(8) != BIN_MAGIC:
            raise ValueError("bad magic in packed file")
        version, context_len, n_sequences, n_tokens = struct.unpack("<IIQQ", fh.read(24))
        if version != BIN_VERSION:
            raise ValueError(f"unsupported version {version}")
        lengths = struct.unpack(f"<{n_sequences}I", fh.read(4 * n_sequences))
        ids = struct.unpack(f"<{n_tokens}I", fh.read(4 * n_tokens))
    with open(path + ".mask", "rb") as fh:
        if fh.read(8) != MASK_MAGIC:
            raise ValueError("bad magic in mask sidecar")
        (mask_tokens,) = struct.unpack("<Q", fh.read(8))
        if mask_tokens != n_tokens:
            raise ValueError("mask sidecar does not match packed file")
        bits = fh.read()
    sequences = []
    pos = 0
    for n in lengths:
        mask = tuple(bool(bits[(pos + j) >> 3] & (1 << ((pos + j) & 7))) for j in range(n))
        sequences.append(PackedSequence(tuple(ids[pos:pos + n]), mask))
        pos += n
    return sequences, context_len
