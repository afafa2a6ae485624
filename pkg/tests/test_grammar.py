from __future__ import annotations

import numpy as np
import pytest

from chartembed.factgen import random_fact
from chartembed.facts import (
    Aggregation,
    AssociationSign,
    ChartFact,
    ChartType,
    ExtremeKind,
    FactType,
    FieldRef,
    FieldType,
    Filter,
    Focus,
    MeasureSpec,
    MetaAssociation,
    MetaExtreme,
)
from chartembed.grammar import (
    MAX_DERIVATION_LENGTH,
    MAX_SEQUENCE_LENGTH,
    MIN_DERIVATION_LENGTH,
    RULE_COUNT,
    RULES,
    GrammarError,
    RuleSequence,
    decode_skeleton,
    derive_rules,
    encode_one_hot,
    fact_skeleton,
    grammar_dump,
)


def test_rule_table_has_sixty_rules():
    assert len(RULES) == RULE_COUNT == 60
    assert [r.id for r in RULES] == list(range(60))


def test_rule_group_cardinalities():
    by_lhs: dict[str, int] = {}
    for rule in RULES:
        by_lhs[rule.lhs] = by_lhs.get(rule.lhs, 0) + 1
    assert by_lhs == {
        "Root": 1,
        "ChartType": 15,
        "FactType": 10,
        "Subspace": 3,
        "Filter": 4,
        "Breakdown": 2,
        "BreakdownField": 2,
        "Measure": 5,
        "Focus": 2,
        "FocusField": 4,
        "Meta": 12,
    }


def test_grammar_dump_matches_snapshot(data_dir):
    expected = (data_dir / "grammar_dump.txt").read_text(encoding="utf-8")
    assert grammar_dump() == expected


def test_example_fact_derivation(example_fact):
    seq = derive_rules(example_fact)
    assert len(seq) == 11
    steps = [(RULES[i].lhs, RULES[i].rhs) for i in seq]
    assert steps == [
        ("Root", "ChartType FactType Subspace Breakdown Measure Focus Meta"),
        ("ChartType", "vertical bar chart"),
        ("FactType", "difference"),
        ("Subspace", "Filter Filter+"),
        ("Filter", "geographical"),
        ("Filter", "geographical"),
        ("Breakdown", "BreakdownField"),
        ("BreakdownField", "categorical"),
        ("Measure", "sum"),
        ("Focus", "<absent>"),
        ("Meta", "difference lower"),
    ]


def test_minimal_fact_derivation(minimal_fact):
    seq = derive_rules(minimal_fact)
    assert len(seq) == MIN_DERIVATION_LENGTH == 8
    steps = [RULES[i].lhs for i in seq]
    assert steps == [
        "Root", "ChartType", "FactType", "Subspace", "Breakdown", "Measure",
        "Focus", "Meta",
    ]
    # Absent measure maps onto the count rule.
    assert RULES[seq.ids[5]].rhs == "count"


def test_maximal_fact_derivation():
    fact = ChartFact(
        type_c=ChartType.SCATTER,
        type_f=FactType.ASSOCIATION,
        subspace=(
            Filter("a", "1", FieldType.TEMPORAL),
            Filter("b", "2", FieldType.NUMERICAL),
            Filter("c", "3", FieldType.GEOGRAPHICAL),
        ),
        breakdown=FieldRef("year", FieldType.TEMPORAL),
        measure=MeasureSpec("score", Aggregation.AVERAGE),
        focus=Focus(FieldRef("year", FieldType.TEMPORAL), "2020"),
        meta=MetaAssociation(AssociationSign.POSITIVE),
    )
    assert len(derive_rules(fact)) == MAX_DERIVATION_LENGTH == 13


def test_derivation_length_bounds_on_random_facts():
    rng = np.random.default_rng(4)
    for _ in range(200):
        seq = derive_rules(random_fact(rng))
        assert MIN_DERIVATION_LENGTH <= len(seq) <= MAX_DERIVATION_LENGTH <= MAX_SEQUENCE_LENGTH


def test_derive_rejects_invalid_fact():
    fact = ChartFact(
        type_c=ChartType.LINE, type_f=FactType.TREND, meta=MetaExtreme(ExtremeKind.MAX)
    )
    with pytest.raises(GrammarError, match="invalid fact"):
        derive_rules(fact)


def test_one_hot_shape_and_padding(example_fact):
    seq = derive_rules(example_fact)
    matrix = encode_one_hot(seq)
    assert matrix.shape == (16, 60)
    assert matrix.sum() == len(seq)
    for row in range(16):
        if row < len(seq):
            assert matrix[row].sum() == 1.0
            assert matrix[row, seq.ids[row]] == 1.0
        else:
            assert not matrix[row].any()
    assert set(np.unique(matrix)) <= {0.0, 1.0}


def test_one_hot_rejects_empty_and_oversized():
    with pytest.raises(GrammarError, match="empty"):
        encode_one_hot(RuleSequence(()))
    with pytest.raises(GrammarError, match="exceeds"):
        encode_one_hot(RuleSequence((0,) * 17))


def test_decode_roundtrip_on_example(example_fact):
    seq = derive_rules(example_fact)
    assert decode_skeleton(seq) == fact_skeleton(example_fact)


def test_decode_roundtrip_on_random_facts():
    rng = np.random.default_rng(8)
    for _ in range(200):
        fact = random_fact(rng)
        assert decode_skeleton(derive_rules(fact)) == fact_skeleton(fact)


def test_decode_rejects_truncated_sequence(example_fact):
    seq = derive_rules(example_fact)
    with pytest.raises(GrammarError, match="ill-formed"):
        decode_skeleton(RuleSequence(seq.ids[:-1]))


def test_decode_rejects_trailing_rules(example_fact):
    seq = derive_rules(example_fact)
    with pytest.raises(GrammarError, match="ill-formed"):
        decode_skeleton(RuleSequence(seq.ids + (0,)))


def test_decode_rejects_wrong_start(example_fact):
    seq = derive_rules(example_fact)
    with pytest.raises(GrammarError, match="ill-formed"):
        decode_skeleton(RuleSequence((5,) + seq.ids[1:]))
