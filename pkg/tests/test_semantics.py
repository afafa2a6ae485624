from __future__ import annotations

import numpy as np
import pytest

from chartembed.facts import ChartFact, ChartType, FactType, FieldRef, FieldType, Filter, Focus
from chartembed.semantics import (
    LOC_BREAKDOWN_FIELD,
    LOC_FOCUS_FIELD,
    LOC_FOCUS_VALUE,
    LOC_MEASURE_FIELD,
    LOC_META,
    LOC_SUBSPACE_FIELD,
    LOC_SUBSPACE_VALUE,
    SEMANTIC_SLOTS,
    Token,
    VectorStore,
    VectorStoreError,
    build_semantic_block,
    encode_semantics,
    extract_tokens,
    load_vector_store,
    pool_word,
    split_words,
)

# The canonical segmentation example: raw field strings on the left, the
# flattened word list on the right.
RAW_FIELDS = ["Country name", "City name", "Year", "Student population", "Year", "2018"]
SPLIT_WORDS = ["Country", "name", "City", "name", "Year", "Student", "population", "Year", "2018"]


def test_field_segmentation_example_verbatim():
    out: list[str] = []
    for raw in RAW_FIELDS:
        out.extend(split_words(raw))
    assert out == SPLIT_WORDS


@pytest.mark.parametrize(
    "text,expected",
    [
        ("snake_case_name", ["snake", "case", "name"]),
        ("camelCaseName", ["camel", "Case", "Name"]),
        ("GDPGrowth", ["GDP", "Growth"]),
        ("year-over-year", ["year", "over", "year"]),
        ("U.S. total", ["U", "S", "total"]),
        ("Q1-2020", ["Q1", "2020"]),
        ("2018", ["2018"]),
        ("", []),
        ("   ", []),
    ],
)
def test_split_words_rules(text, expected):
    assert split_words(text) == expected


def test_extract_tokens_example(example_fact):
    tokens = extract_tokens(example_fact)
    assert [(t.word, t.location) for t in tokens] == [
        ("Country", LOC_SUBSPACE_FIELD),
        ("City", LOC_SUBSPACE_FIELD),
        ("China", LOC_SUBSPACE_VALUE),
        ("Guizhou", LOC_SUBSPACE_VALUE),
        ("Location", LOC_BREAKDOWN_FIELD),
        ("Population", LOC_MEASURE_FIELD),
        ("lower", LOC_META),
    ]


def test_extract_tokens_empty_fact(minimal_fact):
    assert extract_tokens(minimal_fact) == []


def test_extract_tokens_keeps_duplicates_and_focus_locations():
    fact = ChartFact(
        type_c=ChartType.LINE,
        type_f=FactType.VALUE,
        subspace=(Filter("Country name", "China", FieldType.GEOGRAPHICAL),),
        breakdown=FieldRef("Year", FieldType.TEMPORAL),
        focus=Focus(FieldRef("Year", FieldType.TEMPORAL), "2018"),
    )
    tokens = extract_tokens(fact)
    assert [(t.word, t.location) for t in tokens] == [
        ("Country", LOC_SUBSPACE_FIELD),
        ("name", LOC_SUBSPACE_FIELD),
        ("China", LOC_SUBSPACE_VALUE),
        ("Year", LOC_BREAKDOWN_FIELD),
        ("Year", LOC_FOCUS_FIELD),
        ("2018", LOC_FOCUS_VALUE),
    ]


def test_structural_words_never_leak_into_tokens():
    fact = ChartFact(type_c=ChartType.PIE, type_f=FactType.TREND)
    assert extract_tokens(fact) == []


def test_store_lookup_verbatim_and_case_insensitive(store):
    hit = store.lookup("country")
    assert hit.shape == (100,)
    assert np.array_equal(store.lookup("Country"), hit)
    assert np.array_equal(store.lookup("COUNTRY"), hit)


def test_oov_vectors_deterministic_and_unit_norm():
    a = VectorStore({})
    b = VectorStore({})
    v1 = a.lookup("2018")
    v2 = b.lookup("2018")
    assert np.array_equal(v1, v2)
    assert np.isclose(np.linalg.norm(v1), 1.0)
    assert not np.array_equal(a.lookup("2018"), a.lookup("2019"))


def test_store_rejects_bad_dimensions(tmp_path):
    path = tmp_path / "vectors.txt"
    path.write_text("word 1.0 2.0\n", encoding="utf-8")
    with pytest.raises(VectorStoreError, match="expected a word and 100"):
        load_vector_store(str(path))
    with pytest.raises(VectorStoreError, match="fixed at 100"):
        load_vector_store(str(path), dim=10)


def test_store_first_occurrence_wins(tmp_path):
    path = tmp_path / "vectors.txt"
    first = "dup " + " ".join(["1.0"] * 100)
    second = "DUP " + " ".join(["2.0"] * 100)
    path.write_text(first + "\n" + second + "\n", encoding="utf-8")
    store = load_vector_store(str(path))
    assert len(store) == 1
    assert store.lookup("dup")[0] == 1.0


def test_pool_word_constant():
    assert np.allclose(pool_word(np.full(100, 0.4)), np.full(10, 0.4))


def test_pool_word_arange():
    expected = np.arange(4.5, 100, 10.0)
    assert np.allclose(pool_word(np.arange(100.0)), expected)
    assert expected[0] == 4.5 and expected[-1] == 94.5


def test_pool_word_linearity(rng):
    for _ in range(20):
        x = rng.normal(size=100)
        y = rng.normal(size=100)
        a, b = rng.normal(size=2)
        assert np.allclose(pool_word(a * x + b * y), a * pool_word(x) + b * pool_word(y))


def test_pool_word_rejects_wrong_shape():
    with pytest.raises(ValueError):
        pool_word(np.zeros(99))


def test_block_empty(empty_store):
    block = build_semantic_block([], empty_store)
    assert block.shape == (25, 17)
    assert not block.any()


def test_block_nine_token_example(empty_store):
    locations = [1, 1, 1, 1, 3, 4, 4, 5, 6]
    tokens = [Token(w, loc) for w, loc in zip(SPLIT_WORDS, locations)]
    block = build_semantic_block(tokens, empty_store)
    populated = np.abs(block).sum(axis=1) > 0
    assert populated[:9].all()
    assert not populated[9:].any()
    for i, token in enumerate(tokens):
        onehot = block[i, 10:]
        assert onehot.sum() == 1.0
        assert onehot[token.location - 1] == 1.0
        assert np.allclose(block[i, :10], pool_word(empty_store.lookup(token.word)))


def test_block_truncates_to_first_25(empty_store):
    tokens = [Token(f"word{i}", 1 + i % 7) for i in range(30)]
    block = build_semantic_block(tokens, empty_store)
    assert (np.abs(block).sum(axis=1) > 0).all()
    expected_last = np.concatenate(
        [
            pool_word(empty_store.lookup("word24")),
            np.eye(7)[tokens[24].location - 1],
        ]
    )
    assert np.allclose(block[SEMANTIC_SLOTS - 1], expected_last)


def test_block_deterministic(empty_store):
    tokens = [Token("alpha", 1), Token("beta", 4)]
    assert np.array_equal(
        build_semantic_block(tokens, empty_store), build_semantic_block(tokens, empty_store)
    )


def test_encode_semantics_mode_shapes(empty_store):
    tokens = [Token("alpha", 1), Token("beta", 4), Token("gamma", 7)]
    assert encode_semantics(tokens, empty_store, "interval-average").shape == (25, 17)
    assert encode_semantics(tokens, empty_store, "word-max").shape == (25, 17)
    assert encode_semantics(tokens, empty_store, "none").shape == (25, 107)
    assert encode_semantics(tokens, empty_store, "words-average").shape == (1, 107)
    assert encode_semantics(tokens, empty_store, "words-max").shape == (1, 107)


def test_encode_semantics_aggregate_modes(empty_store):
    tokens = [Token("alpha", 1), Token("beta", 4)]
    vecs = np.stack([empty_store.lookup("alpha"), empty_store.lookup("beta")])
    avg = encode_semantics(tokens, empty_store, "words-average")[0]
    assert np.allclose(avg[:100], vecs.mean(axis=0))
    assert np.allclose(avg[100:], np.array([0.5, 0, 0, 0.5, 0, 0, 0]))
    mx = encode_semantics(tokens, empty_store, "words-max")[0]
    assert np.allclose(mx[:100], vecs.max(axis=0))
    assert np.allclose(mx[100:], np.array([1, 0, 0, 1, 0, 0, 0]))


def test_encode_semantics_no_locations(empty_store):
    tokens = [Token("alpha", 2)]
    block = encode_semantics(tokens, empty_store, "interval-average", use_locations=False)
    assert not block[:, 10:].any()
    assert block[0, :10].any()


def test_word_max_pooling_is_windowed_max(empty_store):
    vec = empty_store.lookup("alpha")
    block = encode_semantics([Token("alpha", 1)], empty_store, "word-max")
    assert np.allclose(block[0, :10], vec.reshape(10, 10).max(axis=1))
