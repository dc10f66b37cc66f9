"""Hashing tokenizer: no learned vocabulary, no external assets.

Text is lowercased and split on non-alphanumeric characters; each token is
hashed (CRC32, stable across processes) into [2, vocab_size). Id 0 is the
CLS slot the encoder prepends, id 1 is reserved for padding.
"""

from __future__ import annotations

import re
import zlib

CLS_ID = 0
PAD_ID = 1
_WORD_RE = re.compile(r"[a-z0-9]+")


def hash_token(token: str, vocab_size: int) -> int:
    return 2 + zlib.crc32(token.encode("utf-8")) % (vocab_size - 2)


def tokenize(text: str, vocab_size: int, max_len: int) -> list[int]:
    """Token ids for ``text``, truncated to max_len - 1 (the CLS slot is added
    later by the encoder)."""
    if vocab_size < 3:
        raise ValueError(f"vocab_size must be at least 3, got {vocab_size}")
    words = _WORD_RE.findall(text.lower())[: max_len - 1]
    return [hash_token(w, vocab_size) for w in words]
