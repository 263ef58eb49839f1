"""Word-level vocabulary over the closed synthetic grammar.

Text token IDs occupy [0, K_text); image token ID = VQ index + K_text, a
bijection with the quantizer's index space. "###" is an atomic token so the
response key tokenizes to a fixed three-token sequence; other punctuation
splits into single-character tokens.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

PAD, EOS, UNK = "<pad>", "<eos>", "<unk>"
SPECIALS = (PAD, EOS, UNK)

_TOKEN_RE = re.compile(r"###|[A-Za-z0-9']+|[^\sA-Za-z0-9']")
_NO_SPACE_BEFORE = {".", ",", ":", ";", "?", "!", ">", ")", "-"}
_NO_SPACE_AFTER = {"<", "(", "-"}


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def detokenize(tokens: Sequence[str]) -> str:
    out: list[str] = []
    for tok in tokens:
        if out and tok not in _NO_SPACE_BEFORE and out[-1] not in _NO_SPACE_AFTER:
            out.append(" ")
        out.append(tok)
    return "".join(out)


@dataclass
class Vocab:
    text_tokens: list[str]
    k_img: int = 0
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.text_tokens)}
        if len(self.index) != len(self.text_tokens):
            raise ValueError("duplicate tokens in vocabulary")

    @property
    def k_text(self) -> int:
        return len(self.text_tokens)

    @property
    def total(self) -> int:
        return self.k_text + self.k_img

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def eos_id(self) -> int:
        return self.index[EOS]

    @property
    def unk_id(self) -> int:
        return self.index[UNK]

    def with_images(self, k_img: int) -> "Vocab":
        if k_img < 0:
            raise ValueError("k_img must be non-negative")
        return Vocab(list(self.text_tokens), k_img)

    def encode(self, text: str) -> list[int]:
        unk = self.unk_id
        return [self.index.get(t, unk) for t in tokenize(text)]

    def decode(self, ids: Sequence[int]) -> str:
        return detokenize([self.token_string(i) for i in ids])

    def token_string(self, token_id: int) -> str:
        if 0 <= token_id < self.k_text:
            return self.text_tokens[token_id]
        if self.k_text <= token_id < self.total:
            return f"VQ{token_id - self.k_text:03d}"
        raise ValueError(f"token id {token_id} out of range [0, {self.total})")

    def is_image_id(self, token_id: int) -> bool:
        return self.k_text <= token_id < self.total


def build_text_vocab(texts: Iterable[str]) -> Vocab:
    """Deterministic vocabulary: specials first, then sorted unique tokens."""
    seen: set[str] = set()
    for text in texts:
        seen.update(tokenize(text))
    seen.difference_update(SPECIALS)
    return Vocab(list(SPECIALS) + sorted(seen))


def ids_from_image_tokens(indices: Sequence[int], vocab: Vocab) -> list[int]:
    """Offset VQ indices into the unified ID space: id = index + K_text."""
    out = []
    for pos, idx in enumerate(indices):
        if not 0 <= idx < vocab.k_img:
            raise ValueError(f"VQ index {idx} at position {pos} out of range [0, {vocab.k_img})")
        out.append(idx + vocab.k_text)
    return out


def image_tokens_from_ids(ids: Sequence[int], vocab: Vocab) -> list[int]:
    """Inverse offset; rejects text IDs inside an image span by position."""
    out = []
    for pos, token_id in enumerate(ids):
        if token_id < vocab.k_text:
            raise ValueError(f"text token inside image span at position {pos} (id {token_id})")
        if token_id >= vocab.total:
            raise ValueError(f"token id {token_id} at position {pos} out of range")
        out.append(token_id - vocab.k_text)
    return out
