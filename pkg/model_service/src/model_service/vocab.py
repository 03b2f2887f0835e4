"""Whitespace tokenization with character offsets and a closed vocabulary."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)


def tokenize(text: str) -> list[tuple[str, int, int]]:
    """Whitespace tokens as (token, start, end) character offsets."""
    out = []
    i = 0
    n = len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        out.append((text[i:j], i, j))
        i = j
    return out


@dataclass(frozen=True)
class Vocab:
    itos: tuple[str, ...]

    @property
    def stoi(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def bos_id(self) -> int:
        return 1

    @property
    def eos_id(self) -> int:
        return 2

    @property
    def unk_id(self) -> int:
        return 3

    def encode(self, tokens: Iterable[str]) -> list[int]:
        stoi = self.stoi
        unk = self.unk_id
        return [stoi.get(t, unk) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            if i == self.eos_id:
                break
            if i in (self.pad_id, self.bos_id):
                continue
            out.append(self.itos[i])
        return out


def build_vocab(texts: Iterable[str]) -> Vocab:
    seen: dict[str, None] = {}
    for text in texts:
        for tok, _, _ in tokenize(text):
            seen.setdefault(tok, None)
    return Vocab(itos=SPECIALS + tuple(sorted(seen)))
