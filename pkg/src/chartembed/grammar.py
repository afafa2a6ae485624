"""Fixed 60-rule grammar over chart-fact structure.

Every valid chart fact admits exactly one leftmost derivation over this
grammar, walked in the canonical seven-part order. The derivation is a
sequence of 8 to 13 rule ids, encoded as a 16-row one-hot matrix (one row
per derivation step, zero rows as padding).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .facts import (
    Aggregation,
    ChartFact,
    ChartType,
    FactType,
    FieldType,
    MetaAssociation,
    MetaCategorization,
    MetaDifference,
    MetaExtreme,
    MetaInfo,
    MetaNone,
    MetaRank,
    MetaTrend,
    validate_fact,
)

RULE_COUNT = 60
MAX_SEQUENCE_LENGTH = 16
MIN_DERIVATION_LENGTH = 8
MAX_DERIVATION_LENGTH = 13


class GrammarError(ValueError):
    """Raised for invalid facts or ill-formed rule sequences."""


@dataclass(frozen=True)
class Rule:
    id: int
    lhs: str
    rhs: str


def _build_rules() -> tuple[Rule, ...]:
    rules: list[Rule] = []

    def add(lhs: str, rhs: str) -> None:
        rules.append(Rule(len(rules), lhs, rhs))

    add("Root", "ChartType FactType Subspace Breakdown Measure Focus Meta")
    for ct in ChartType:
        add("ChartType", ct.value)
    for ft in FactType:
        add("FactType", ft.value)
    add("Subspace", "<empty>")
    add("Subspace", "Filter")
    add("Subspace", "Filter Filter+")
    for field_type in FieldType:
        add("Filter", field_type.value)
    add("Breakdown", "<absent>")
    add("Breakdown", "BreakdownField")
    add("BreakdownField", FieldType.TEMPORAL.value)
    add("BreakdownField", FieldType.CATEGORICAL.value)
    for agg in Aggregation:
        add("Measure", agg.value)
    add("Focus", "<absent>")
    add("Focus", "FocusField")
    for field_type in FieldType:
        add("FocusField", field_type.value)
    add("Meta", "<none>")
    add("Meta", "trend increasing")
    add("Meta", "trend decreasing")
    add("Meta", "trend no-trend")
    add("Meta", "categorization count")
    add("Meta", "difference lower")
    add("Meta", "difference higher")
    add("Meta", "rank top3")
    add("Meta", "extreme max")
    add("Meta", "extreme min")
    add("Meta", "association positive")
    add("Meta", "association negative")
    assert len(rules) == RULE_COUNT
    return tuple(rules)


RULES: tuple[Rule, ...] = _build_rules()

ROOT_RULE = 0
_CHART_TYPE_BASE = 1
_FACT_TYPE_BASE = 16
SUBSPACE_EMPTY, SUBSPACE_SINGLE, SUBSPACE_MULTI = 26, 27, 28
_FILTER_BASE = 29
BREAKDOWN_ABSENT, BREAKDOWN_PRESENT = 33, 34
BREAKDOWN_TEMPORAL, BREAKDOWN_CATEGORICAL = 35, 36
_MEASURE_BASE = 37
FOCUS_ABSENT, FOCUS_PRESENT = 42, 43
_FOCUS_FIELD_BASE = 44
META_BASE = 48

_CHART_TYPE_ID = {ct: _CHART_TYPE_BASE + i for i, ct in enumerate(ChartType)}
_FACT_TYPE_ID = {ft: _FACT_TYPE_BASE + i for i, ft in enumerate(FactType)}
_FIELD_TYPE_OFFSET = {ft: i for i, ft in enumerate(FieldType)}
_AGGREGATION_ID = {agg: _MEASURE_BASE + i for i, agg in enumerate(Aggregation)}

_META_LABELS = tuple(RULES[META_BASE + i].rhs for i in range(12))
_META_LABEL_ID = {label: META_BASE + i for i, label in enumerate(_META_LABELS)}


def meta_label(meta: MetaInfo) -> str:
    """The rule-level label of a meta variant (payload collapsed for
    categorization and rank, whose descriptors are unbounded)."""
    if isinstance(meta, MetaNone):
        return "<none>"
    if isinstance(meta, MetaTrend):
        return f"trend {meta.direction.value}"
    if isinstance(meta, MetaCategorization):
        return "categorization count"
    if isinstance(meta, MetaDifference):
        return f"difference {meta.relation.value}"
    if isinstance(meta, MetaRank):
        return "rank top3"
    if isinstance(meta, MetaExtreme):
        return f"extreme {meta.extreme.value}"
    if isinstance(meta, MetaAssociation):
        return f"association {meta.sign.value}"
    raise TypeError(f"unknown meta variant {type(meta).__name__}")


@dataclass(frozen=True)
class RuleSequence:
    """An ordered leftmost derivation, as rule ids."""

    ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


@dataclass(frozen=True)
class FactSkeleton:
    """The structural part of a fact: everything the grammar can express."""

    chart_type: ChartType
    fact_type: FactType
    filter_field_types: tuple[FieldType, ...]
    breakdown: FieldType | None
    aggregation: Aggregation
    focus: FieldType | None
    meta: str


def fact_skeleton(fact: ChartFact) -> FactSkeleton:
    """Project a fact onto its structural skeleton (semantics dropped)."""
    return FactSkeleton(
        chart_type=fact.type_c,
        fact_type=fact.type_f,
        filter_field_types=tuple(f.field_type for f in fact.subspace),
        breakdown=fact.breakdown.field_type if fact.breakdown else None,
        aggregation=fact.measure.aggregation if fact.measure else Aggregation.COUNT,
        focus=fact.focus.field.field_type if fact.focus else None,
        meta=meta_label(fact.meta),
    )


def derive_rules(fact: ChartFact) -> RuleSequence:
    """Leftmost derivation of the fact's structure, in canonical order."""
    report = validate_fact(fact)
    if not report.ok:
        details = "; ".join(f"{v.field}: {v.message}" for v in report.violations)
        raise GrammarError(f"cannot derive an invalid fact: {details}")

    ids = [ROOT_RULE, _CHART_TYPE_ID[fact.type_c], _FACT_TYPE_ID[fact.type_f]]

    n_filters = len(fact.subspace)
    if n_filters == 0:
        ids.append(SUBSPACE_EMPTY)
    elif n_filters == 1:
        ids.append(SUBSPACE_SINGLE)
    else:
        ids.append(SUBSPACE_MULTI)
    for filt in fact.subspace:
        ids.append(_FILTER_BASE + _FIELD_TYPE_OFFSET[filt.field_type])

    if fact.breakdown is None:
        ids.append(BREAKDOWN_ABSENT)
    else:
        ids.append(BREAKDOWN_PRESENT)
        ids.append(
            BREAKDOWN_TEMPORAL
            if fact.breakdown.field_type is FieldType.TEMPORAL
            else BREAKDOWN_CATEGORICAL
        )

    # An absent measure means no aggregation beyond counting rows.
    agg = fact.measure.aggregation if fact.measure else Aggregation.COUNT
    ids.append(_AGGREGATION_ID[agg])

    if fact.focus is None:
        ids.append(FOCUS_ABSENT)
    else:
        ids.append(FOCUS_PRESENT)
        ids.append(_FOCUS_FIELD_BASE + _FIELD_TYPE_OFFSET[fact.focus.field.field_type])

    ids.append(_META_LABEL_ID[meta_label(fact.meta)])
    return RuleSequence(tuple(ids))


def encode_one_hot(seq: RuleSequence) -> np.ndarray:
    """16x60 matrix: row i one-hot for seq[i], remaining rows zero."""
    if len(seq) == 0:
        raise GrammarError("empty rule sequence")
    if len(seq) > MAX_SEQUENCE_LENGTH:
        raise GrammarError(
            f"sequence of {len(seq)} rules exceeds the {MAX_SEQUENCE_LENGTH}-row limit"
        )
    matrix = np.zeros((MAX_SEQUENCE_LENGTH, RULE_COUNT), dtype=np.float64)
    for row, rule_id in enumerate(seq):
        if not 0 <= rule_id < RULE_COUNT:
            raise GrammarError(f"rule id {rule_id} out of range")
        matrix[row, rule_id] = 1.0
    return matrix


class _SequenceReader:
    def __init__(self, ids: tuple[int, ...]):
        self.ids = ids
        self.pos = 0

    def take(self, what: str) -> int:
        if self.pos >= len(self.ids):
            raise GrammarError(f"ill-formed sequence: ended while expecting {what}")
        rule_id = self.ids[self.pos]
        self.pos += 1
        return rule_id

    def done(self) -> None:
        if self.pos != len(self.ids):
            raise GrammarError(
                f"ill-formed sequence: {len(self.ids) - self.pos} trailing rule(s)"
            )


def decode_skeleton(seq: RuleSequence) -> FactSkeleton:
    """Invert derive_rules back to the structural skeleton."""
    reader = _SequenceReader(tuple(seq))

    def expect(rule_id: int, lo: int, hi: int, what: str) -> int:
        if not lo <= rule_id <= hi:
            raise GrammarError(
                f"ill-formed sequence: rule {rule_id} where {what} was expected"
            )
        return rule_id

    expect(reader.take("Root"), ROOT_RULE, ROOT_RULE, "the Root rule")
    ct_id = expect(reader.take("ChartType"), _CHART_TYPE_BASE, 15, "a ChartType rule")
    chart_type = list(ChartType)[ct_id - _CHART_TYPE_BASE]
    ft_id = expect(reader.take("FactType"), _FACT_TYPE_BASE, 25, "a FactType rule")
    fact_type = list(FactType)[ft_id - _FACT_TYPE_BASE]

    sub_id = expect(reader.take("Subspace"), SUBSPACE_EMPTY, SUBSPACE_MULTI, "a Subspace rule")
    filter_types: list[FieldType] = []
    if sub_id == SUBSPACE_SINGLE:
        fid = expect(reader.take("Filter"), _FILTER_BASE, _FILTER_BASE + 3, "a Filter rule")
        filter_types.append(list(FieldType)[fid - _FILTER_BASE])
    elif sub_id == SUBSPACE_MULTI:
        while reader.pos < len(reader.ids) and _FILTER_BASE <= reader.ids[reader.pos] <= _FILTER_BASE + 3:
            filter_types.append(list(FieldType)[reader.take("Filter") - _FILTER_BASE])
        if len(filter_types) < 2:
            raise GrammarError("ill-formed sequence: multi subspace with < 2 filters")

    bd_id = expect(reader.take("Breakdown"), BREAKDOWN_ABSENT, BREAKDOWN_PRESENT, "a Breakdown rule")
    breakdown = None
    if bd_id == BREAKDOWN_PRESENT:
        bft = expect(
            reader.take("BreakdownField"),
            BREAKDOWN_TEMPORAL,
            BREAKDOWN_CATEGORICAL,
            "a BreakdownField rule",
        )
        breakdown = FieldType.TEMPORAL if bft == BREAKDOWN_TEMPORAL else FieldType.CATEGORICAL

    agg_id = expect(reader.take("Measure"), _MEASURE_BASE, _MEASURE_BASE + 4, "a Measure rule")
    aggregation = list(Aggregation)[agg_id - _MEASURE_BASE]

    fc_id = expect(reader.take("Focus"), FOCUS_ABSENT, FOCUS_PRESENT, "a Focus rule")
    focus = None
    if fc_id == FOCUS_PRESENT:
        fft = expect(
            reader.take("FocusField"),
            _FOCUS_FIELD_BASE,
            _FOCUS_FIELD_BASE + 3,
            "a FocusField rule",
        )
        focus = list(FieldType)[fft - _FOCUS_FIELD_BASE]

    meta_id = expect(reader.take("Meta"), META_BASE, META_BASE + 11, "a Meta rule")
    reader.done()

    return FactSkeleton(
        chart_type=chart_type,
        fact_type=fact_type,
        filter_field_types=tuple(filter_types),
        breakdown=breakdown,
        aggregation=aggregation,
        focus=focus,
        meta=_META_LABELS[meta_id - META_BASE],
    )


def grammar_dump() -> str:
    """Stable debug listing: one `id<TAB>lhs<TAB>rhs` line per rule."""
    return "\n".join(f"{r.id}\t{r.lhs}\t{r.rhs}" for r in RULES) + "\n"
