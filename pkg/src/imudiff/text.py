"""Prompt embeddings.

Real sentence embeddings are supplied as a JSON map ``{text: [floats]}``.
``stub_embed`` is a deterministic, NON-SEMANTIC fallback: a signed hashed
bag of words over lower-cased content tokens, L2-normalised. Two prompts
are similar only when they share words.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

import numpy as np

STUB_DIM = 96

STOPWORDS = frozenset(
    "a an the is are was be being person someone somebody man woman they he she "
    "his her their it its on in at of to with and or while then for from by as".split()
)


def tokenize(text: str) -> list[str]:
    return [t for t in re.findall(r"[a-z]+", text.lower()) if t not in STOPWORDS]


def _bucket(token: str, dim: int) -> tuple[int, float]:
    h = hashlib.md5(token.encode("utf-8")).digest()
    idx = int.from_bytes(h[:4], "little") % dim
    sign = 1.0 if h[4] & 1 else -1.0
    return idx, sign


def stub_embed(text: str, dim: int = STUB_DIM) -> np.ndarray:
    v = np.zeros(dim)
    for tok in tokenize(text):
        i, s = _bucket(tok, dim)
        v[i] += s
    n = np.linalg.norm(v)
    if n == 0:
        # no content words: fall back to hashing the raw text
        i, s = _bucket(text.strip().lower() or "<empty>", dim)
        v[i] = s
        n = 1.0
    return v / n


class Embedder:
    """Look up precomputed embeddings, optionally falling back to the stub."""

    def __init__(self, table: dict | None = None, allow_stub: bool = True, dim: int | None = None):
        self.table = {k: np.asarray(v, dtype=float) for k, v in (table or {}).items()}
        self.allow_stub = allow_stub
        dims = {v.size for v in self.table.values()}
        if len(dims) > 1:
            raise ValueError("embeddings have inconsistent dimensions")
        self.dim = dims.pop() if dims else (dim or STUB_DIM)

    @classmethod
    def from_file(cls, path, allow_stub: bool = True) -> "Embedder":
        return cls(json.loads(Path(path).read_text()), allow_stub)

    def __call__(self, text: str) -> np.ndarray:
        if text in self.table:
            return self.table[text]
        if not self.allow_stub:
            raise KeyError(f"no embedding for prompt {text!r} and stub disabled")
        return stub_embed(text, self.dim)

    def dump(self, path, texts):
        Path(path).write_text(json.dumps({t: self(t).tolist() for t in texts}, sort_keys=True, indent=1))
