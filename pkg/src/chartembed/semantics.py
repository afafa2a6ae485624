"""Word-level semantics of a chart fact.

Seven fact fields carry dataset-specific text: subspace fields (1), subspace
values (2), the breakdown field (3), the measure field (4), the focus field
(5), the focus value (6), and meta descriptors (7). Words extracted from
these locations are mapped to pretrained 100-dim vectors, pooled to 10 dims
by interval averaging, tagged with a 7-dim location one-hot, and packed into
a fixed 25x17 block.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np

from .facts import (
    ChartFact,
    MetaAssociation,
    MetaCategorization,
    MetaDifference,
    MetaExtreme,
    MetaInfo,
    MetaNone,
    MetaRank,
    MetaTrend,
)

WORD_DIM = 100
POOLED_DIM = 10
LOCATION_COUNT = 7
SEMANTIC_SLOTS = 25
TOKEN_DIM = POOLED_DIM + LOCATION_COUNT

LOC_SUBSPACE_FIELD = 1
LOC_SUBSPACE_VALUE = 2
LOC_BREAKDOWN_FIELD = 3
LOC_MEASURE_FIELD = 4
LOC_FOCUS_FIELD = 5
LOC_FOCUS_VALUE = 6
LOC_META = 7


@dataclass(frozen=True)
class Token:
    word: str
    location: int


class VectorStoreError(ValueError):
    """Raised for malformed vector-store files or dimension mismatches."""


# camelCase boundaries: lower/digit followed by upper, or an acronym end
# (HTTPServer -> HTTP Server).
_CAMEL = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")
_SEPARATORS = re.compile(r"[^0-9A-Za-z]+")


def split_words(text: str) -> list[str]:
    """Split a field string into words.

    Whitespace, underscores, hyphens, and all other punctuation separate
    words; camelCase boundaries split too. Pure-number tokens survive.
    """
    out: list[str] = []
    for chunk in _SEPARATORS.split(text):
        if not chunk:
            continue
        out.extend(p for p in _CAMEL.split(chunk) if p)
    return out


def meta_words(meta: MetaInfo) -> list[str]:
    """The semantic text carried by a meta variant."""
    if isinstance(meta, MetaNone):
        return []
    if isinstance(meta, MetaTrend):
        return split_words(meta.direction.value)
    if isinstance(meta, MetaCategorization):
        return split_words(f"{meta.count} categories")
    if isinstance(meta, MetaDifference):
        return split_words(meta.relation.value)
    if isinstance(meta, MetaRank):
        out: list[str] = []
        for entry in meta.top3:
            out.extend(split_words(entry))
        return out
    if isinstance(meta, MetaExtreme):
        return split_words(meta.extreme.value)
    if isinstance(meta, MetaAssociation):
        return split_words(meta.sign.value)
    raise TypeError(f"unknown meta variant {type(meta).__name__}")


def extract_tokens(fact: ChartFact) -> list[Token]:
    """All semantic words of a fact, visited in location order 1..7.

    Chart type and fact type are structural and contribute nothing here.
    Duplicate words are kept.
    """
    tokens: list[Token] = []

    def emit(text: str, location: int) -> None:
        for word in split_words(text):
            tokens.append(Token(word, location))

    for filt in fact.subspace:
        emit(filt.field, LOC_SUBSPACE_FIELD)
    for filt in fact.subspace:
        emit(filt.value, LOC_SUBSPACE_VALUE)
    if fact.breakdown is not None:
        emit(fact.breakdown.name, LOC_BREAKDOWN_FIELD)
    if fact.measure is not None:
        emit(fact.measure.field, LOC_MEASURE_FIELD)
    if fact.focus is not None:
        emit(fact.focus.field.name, LOC_FOCUS_FIELD)
        emit(fact.focus.value, LOC_FOCUS_VALUE)
    for word in meta_words(fact.meta):
        tokens.append(Token(word, LOC_META))
    return tokens


def _oov_vector(word: str, dim: int) -> np.ndarray:
    # Deterministic unit vector seeded by the lowercase word bytes, so
    # out-of-vocabulary words stay distinguishable and stable across runs.
    digest = hashlib.sha256(word.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.default_rng(seed)
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


class VectorStore:
    """Immutable word -> vector mapping with a deterministic OOV fallback.

    Lookups are case-insensitive: keys are folded to lowercase at load and
    query words are folded at lookup.
    """

    def __init__(self, vectors: dict[str, np.ndarray], dim: int = WORD_DIM):
        for word, vec in vectors.items():
            if vec.shape != (dim,):
                raise VectorStoreError(
                    f"vector for {word!r} has shape {vec.shape}, expected ({dim},)"
                )
        self._vectors = {w.lower(): np.asarray(v, dtype=np.float64) for w, v in vectors.items()}
        self.dim = dim

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._vectors

    def lookup(self, word: str) -> np.ndarray:
        key = word.lower()
        hit = self._vectors.get(key)
        if hit is not None:
            return hit
        return _oov_vector(key, self.dim)


def load_vector_store(path: str, dim: int = WORD_DIM) -> VectorStore:
    """Load a plain-text store: one `word v1 .. v100` entry per line.

    The first occurrence of a word wins; the embedding width is fixed at
    100 and anything else is rejected.
    """
    if dim != WORD_DIM:
        raise VectorStoreError(f"embedding dimension is fixed at {WORD_DIM}, got {dim}")
    vectors: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != dim + 1:
                raise VectorStoreError(
                    f"{path}:{lineno}: expected a word and {dim} components, "
                    f"got {len(parts)} fields"
                )
            word = parts[0].lower()
            if word in vectors:
                continue
            try:
                vectors[word] = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise VectorStoreError(f"{path}:{lineno}: {exc}") from None
    return VectorStore(vectors, dim)


def pool_word(vec: np.ndarray) -> np.ndarray:
    """Average a 100-dim vector over 10 fixed windows of width 10."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (WORD_DIM,):
        raise ValueError(f"expected a ({WORD_DIM},) vector, got {vec.shape}")
    return vec.reshape(POOLED_DIM, WORD_DIM // POOLED_DIM).mean(axis=1)


def _max_pool_word(vec: np.ndarray) -> np.ndarray:
    return vec.reshape(POOLED_DIM, WORD_DIM // POOLED_DIM).max(axis=1)


def _location_onehot(location: int) -> np.ndarray:
    onehot = np.zeros(LOCATION_COUNT, dtype=np.float64)
    onehot[location - 1] = 1.0
    return onehot


SEMANTIC_MODES = (
    "interval-average",
    "none",
    "words-average",
    "word-max",
    "words-max",
)


def semantic_shape(mode: str) -> tuple[int, int]:
    """Block shape produced by each pooling mode."""
    if mode in ("interval-average", "word-max"):
        return (SEMANTIC_SLOTS, TOKEN_DIM)
    if mode == "none":
        return (SEMANTIC_SLOTS, WORD_DIM + LOCATION_COUNT)
    if mode in ("words-average", "words-max"):
        return (1, WORD_DIM + LOCATION_COUNT)
    raise ValueError(f"unknown semantic mode {mode!r}")


def encode_semantics(
    tokens: list[Token],
    store: VectorStore,
    mode: str = "interval-average",
    use_locations: bool = True,
) -> np.ndarray:
    """Assemble the semantic block under a given pooling mode.

    At most the first 25 tokens are used. Per-word modes fill one row per
    token (pooled or raw vector plus location one-hot); across-word modes
    reduce all kept rows to a single 107-dim row.
    """
    rows, cols = semantic_shape(mode)
    kept = tokens[:SEMANTIC_SLOTS]
    block = np.zeros((rows, cols), dtype=np.float64)
    if not kept:
        return block

    vecs = np.stack([store.lookup(t.word) for t in kept])
    locs = np.stack([_location_onehot(t.location) for t in kept])
    if not use_locations:
        locs = np.zeros_like(locs)

    if mode == "interval-average":
        for i, vec in enumerate(vecs):
            block[i] = np.concatenate([pool_word(vec), locs[i]])
    elif mode == "word-max":
        for i, vec in enumerate(vecs):
            block[i] = np.concatenate([_max_pool_word(vec), locs[i]])
    elif mode == "none":
        block[: len(kept)] = np.concatenate([vecs, locs], axis=1)
    elif mode == "words-average":
        block[0] = np.concatenate([vecs.mean(axis=0), locs.mean(axis=0)])
    elif mode == "words-max":
        block[0] = np.concatenate([vecs.max(axis=0), locs.max(axis=0)])
    return block


def build_semantic_block(tokens: list[Token], store: VectorStore) -> np.ndarray:
    """The standard 25x17 block: interval-averaged words + location one-hots."""
    return encode_semantics(tokens, store, "interval-average", True)
