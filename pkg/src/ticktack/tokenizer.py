"""Deterministic whitespace/digit tokenizer with a frequency-built vocabulary.

Words are lowercased, digit runs are split into single digits (so any year
costs at most five tokens and the vocabulary stays small), and punctuation
marks are single tokens.  Token character spans are preserved so year
mentions can be mapped back onto token positions.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from typing import Iterable

from .errors import TokenizationError

_TOKEN_RE = re.compile(r"[A-Za-z]+|[0-9]|[^\sA-Za-z0-9]")

UNK = "<unk>"


def split_with_spans(text: str) -> list[tuple[str, int, int]]:
    """Surface tokens with their (start, end) character offsets."""
    return [(m.group(0).lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


class Tokenizer:
    """Maps text to integer ids over a fixed vocabulary."""

    def __init__(self, tokens: list[str]):
        self.id_to_token = list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    @property
    def vocab_size(self) -> int:
        return len(self.id_to_token)

    @classmethod
    def build(cls, texts: Iterable[str], max_size: int = 512, include_unk: bool = True) -> "Tokenizer":
        """Build a vocabulary from the most frequent tokens.

        Ties break alphabetically so the result is independent of text
        order.  ``max_size`` caps the total size including the unknown
        token.
        """
        counts = Counter()
        for text in texts:
            counts.update(tok for tok, _, _ in split_with_spans(text))
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        vocab = [UNK] if include_unk else []
        for tok, _ in ranked:
            if len(vocab) >= max_size:
                break
            vocab.append(tok)
        return cls(vocab)

    def encode_with_spans(self, text: str) -> tuple[list[int], list[tuple[int, int]]]:
        ids, spans = [], []
        unk_id = self.token_to_id.get(UNK)
        for tok, start, end in split_with_spans(text):
            tok_id = self.token_to_id.get(tok, unk_id)
            if tok_id is None:
                raise TokenizationError(f"token {tok!r} not in vocabulary and no {UNK} entry")
            ids.append(tok_id)
            spans.append((start, end))
        return ids, spans

    def encode(self, text: str) -> list[int]:
        return self.encode_with_spans(text)[0]

    def decode(self, ids: Iterable[int]) -> str:
        return " ".join(self.id_to_token[i] for i in ids)

    def to_json(self) -> str:
        return json.dumps(self.id_to_token, ensure_ascii=False)

    @classmethod
    def from_json(cls, payload: str) -> "Tokenizer":
        return cls(json.loads(payload))
