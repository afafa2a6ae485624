"""Multi-view visualization corpora: loading, splitting, and sampling.

A corpus is a list of multi-view visualizations (data stories or
dashboards), each an ordered list of at least three charts. Training
quadruples pair every window of three consecutive charts with negatives
drawn from other visualizations, preferring the same dataset, then the same
domain, then anywhere.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .encoder import EncodedChart, EncoderConfig, encode_chart
from .facts import ChartFact, FactParseError, fact_from_dict, fact_to_dict, validate_fact
from .learning import TrainingSample
from .semantics import VectorStore

log = logging.getLogger(__name__)

MIN_CHARTS = 3

DOMAINS = (
    "economy",
    "sports",
    "society",
    "health",
    "politics",
    "industry",
    "recreation",
    "food",
    "education",
    "ecology",
)

KINDS = ("data-story", "dashboard")

NEGATIVE_POLICIES = ("same-dataset-first", "any")


class CorpusError(ValueError):
    """Raised for malformed or invalid corpus files."""


@dataclass(frozen=True)
class MultiViewVis:
    id: str
    dataset_id: str
    domain: str
    kind: str
    charts: tuple[tuple[str, ChartFact], ...]  # (chart_id, fact), in order


@dataclass(frozen=True)
class Corpus:
    visualizations: tuple[MultiViewVis, ...]

    def __len__(self) -> int:
        return len(self.visualizations)

    @property
    def chart_count(self) -> int:
        return sum(len(v.charts) for v in self.visualizations)

    def dataset_ids(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for vis in self.visualizations:
            seen.setdefault(vis.dataset_id, None)
        return tuple(seen)


def _vis_from_dict(obj: dict, where: str, strict: bool) -> Optional[MultiViewVis]:
    required = ("id", "dataset_id", "domain", "kind", "charts")
    unknown = set(obj) - set(required)
    if unknown:
        raise CorpusError(f"{where}: unknown keys {sorted(unknown)}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise CorpusError(f"{where}: missing keys {missing}")
    if obj["domain"] not in DOMAINS:
        raise CorpusError(f"{where}: unknown domain {obj['domain']!r}")
    if obj["kind"] not in KINDS:
        raise CorpusError(f"{where}: unknown kind {obj['kind']!r}")

    charts: list[tuple[str, ChartFact]] = []
    seen_ids: set[str] = set()
    problems: list[str] = []
    for pos, chart_obj in enumerate(obj["charts"]):
        cwhere = f"{where}.charts[{pos}]"
        if set(chart_obj) != {"chart_id", "fact"}:
            raise CorpusError(f"{cwhere}: expected exactly 'chart_id' and 'fact'")
        chart_id = chart_obj["chart_id"]
        if not isinstance(chart_id, str) or not chart_id:
            raise CorpusError(f"{cwhere}: chart_id must be a non-empty string")
        if chart_id in seen_ids:
            raise CorpusError(f"{cwhere}: duplicate chart id {chart_id!r}")
        seen_ids.add(chart_id)
        try:
            fact = fact_from_dict(chart_obj["fact"], where=f"{cwhere}.fact")
        except FactParseError as exc:
            problems.append(str(exc))
            continue
        report = validate_fact(fact)
        if not report.ok:
            details = "; ".join(f"{v.field}: {v.message}" for v in report.violations)
            problems.append(f"{cwhere}: invalid fact ({details})")
            continue
        charts.append((chart_id, fact))

    if problems:
        if strict:
            raise CorpusError(
                f"{where} ({obj['id']!r}): invalid charts:\n  " + "\n  ".join(problems)
            )
        for problem in problems:
            log.warning("dropping chart: %s", problem)

    if len(charts) < MIN_CHARTS:
        message = (
            f"{where} ({obj['id']!r}): {len(charts)} valid charts, "
            f"minimum chart number is {MIN_CHARTS}"
        )
        if strict:
            raise CorpusError(message)
        log.warning("dropping visualization: %s", message)
        return None

    return MultiViewVis(
        id=obj["id"],
        dataset_id=obj["dataset_id"],
        domain=obj["domain"],
        kind=obj["kind"],
        charts=tuple(charts),
    )


def corpus_from_dict(obj: dict, strict: bool = True) -> Corpus:
    if not isinstance(obj, dict) or set(obj) != {"visualizations"}:
        raise CorpusError("corpus must be an object with a 'visualizations' list")
    visualizations: list[MultiViewVis] = []
    vis_ids: set[str] = set()
    chart_ids: dict[str, str] = {}
    for i, vis_obj in enumerate(obj["visualizations"]):
        vis = _vis_from_dict(vis_obj, f"visualizations[{i}]", strict)
        if vis is None:
            continue
        if vis.id in vis_ids:
            raise CorpusError(f"duplicate visualization id {vis.id!r}")
        vis_ids.add(vis.id)
        for chart_id, _ in vis.charts:
            if chart_id in chart_ids:
                raise CorpusError(
                    f"chart id {chart_id!r} appears in both {chart_ids[chart_id]!r} "
                    f"and {vis.id!r}; chart ids must be globally unique"
                )
            chart_ids[chart_id] = vis.id
        visualizations.append(vis)
    return Corpus(tuple(visualizations))


def load_corpus(path: str, strict: bool = True) -> Corpus:
    """Load and validate a corpus JSON file.

    Strict mode (the default) rejects the whole file on any invalid chart;
    lenient mode drops offending charts (and visualizations that fall below
    the three-chart minimum) with warnings.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return corpus_from_dict(obj, strict=strict)


def corpus_to_dict(corpus: Corpus) -> dict:
    return {
        "visualizations": [
            {
                "id": vis.id,
                "dataset_id": vis.dataset_id,
                "domain": vis.domain,
                "kind": vis.kind,
                "charts": [
                    {"chart_id": chart_id, "fact": fact_to_dict(fact)}
                    for chart_id, fact in vis.charts
                ],
            }
            for vis in corpus.visualizations
        ]
    }


def save_corpus(corpus: Corpus, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(corpus_to_dict(corpus), fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def split_corpus(corpus: Corpus, test_fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Split at the dataset level; all visualizations of one dataset land on
    the same side. Deterministic for a fixed seed."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    datasets = list(corpus.dataset_ids())
    if len(datasets) < 2:
        raise CorpusError("corpus too small to split: need at least two datasets")

    by_dataset: dict[str, list[MultiViewVis]] = {d: [] for d in datasets}
    for vis in corpus.visualizations:
        by_dataset[vis.dataset_id].append(vis)

    rng = np.random.default_rng(seed)
    order = [datasets[i] for i in rng.permutation(len(datasets))]
    target = test_fraction * len(corpus.visualizations)
    test_sets: set[str] = set()
    test_count = 0
    for dataset in order:
        if test_count >= target or len(test_sets) == len(datasets) - 1:
            break
        test_sets.add(dataset)
        test_count += len(by_dataset[dataset])

    train_vis = tuple(v for v in corpus.visualizations if v.dataset_id not in test_sets)
    test_vis = tuple(v for v in corpus.visualizations if v.dataset_id in test_sets)
    if not train_vis or not test_vis:
        raise CorpusError("split left one side empty; adjust test_fraction")
    return Corpus(train_vis), Corpus(test_vis)


@dataclass(frozen=True)
class SampleSet:
    """Deduplicated training quadruples with their encoded inputs."""

    samples: tuple[TrainingSample, ...]
    config: EncoderConfig

    def __len__(self) -> int:
        return len(self.samples)

    def id_quadruples(self) -> tuple[tuple[str, str, str, str], ...]:
        return tuple(
            (s.prev_id, s.mid_id, s.next_id, s.negative_id) for s in self.samples
        )


@dataclass(frozen=True)
class _ChartRef:
    chart_id: str
    vis_id: str
    dataset_id: str
    domain: str
    fact: ChartFact


def build_samples(
    train: Corpus,
    store: VectorStore,
    negatives_per_window: int = 1,
    policy: str = "same-dataset-first",
    seed: int = 0,
    config: EncoderConfig = EncoderConfig(),
) -> SampleSet:
    """Construct training quadruples from every three-chart window.

    For each visualization with charts c_1..c_n, windows are
    (c_{i-1}, c_i, c_{i+1}) for i = 2..n-1. Negatives come from other
    visualizations; under same-dataset-first they prefer the same dataset,
    then the same domain, then anywhere. Duplicate id-quadruples are removed.
    """
    if not train.visualizations:
        raise CorpusError("empty training corpus")
    if policy not in NEGATIVE_POLICIES:
        raise ValueError(f"unknown negative policy {policy!r}")
    if negatives_per_window < 1:
        raise ValueError("negatives_per_window must be >= 1")
    if len(train.visualizations) < 2:
        raise CorpusError(
            "no eligible negatives: need at least two visualizations"
        )

    refs: list[_ChartRef] = []
    for vis in train.visualizations:
        for chart_id, fact in vis.charts:
            refs.append(_ChartRef(chart_id, vis.id, vis.dataset_id, vis.domain, fact))
    refs.sort(key=lambda r: r.chart_id)

    encoded: dict[str, EncodedChart] = {
        r.chart_id: encode_chart(r.fact, store, config) for r in refs
    }
    rng = np.random.default_rng(seed)

    def pick_negatives(vis: MultiViewVis) -> list[_ChartRef]:
        others = [r for r in refs if r.vis_id != vis.id]
        if policy == "same-dataset-first":
            tiers = [
                [r for r in others if r.dataset_id == vis.dataset_id],
                [r for r in others if r.dataset_id != vis.dataset_id and r.domain == vis.domain],
                [r for r in others if r.dataset_id != vis.dataset_id and r.domain != vis.domain],
            ]
        else:
            tiers = [others]
        chosen: list[_ChartRef] = []
        for tier in tiers:
            if len(chosen) >= negatives_per_window:
                break
            want = min(negatives_per_window - len(chosen), len(tier))
            if want == 0:
                continue
            picks = rng.choice(len(tier), size=want, replace=False)
            chosen.extend(tier[int(i)] for i in sorted(picks))
        return chosen

    samples: list[TrainingSample] = []
    seen: set[tuple[str, str, str, str]] = set()
    for vis in train.visualizations:
        charts = vis.charts
        for i in range(1, len(charts) - 1):
            prev_id, _ = charts[i - 1]
            mid_id, _ = charts[i]
            next_id, _ = charts[i + 1]
            for neg in pick_negatives(vis):
                quad = (prev_id, mid_id, next_id, neg.chart_id)
                if quad in seen:
                    continue
                seen.add(quad)
                samples.append(
                    TrainingSample(
                        prev=encoded[prev_id],
                        mid=encoded[mid_id],
                        next=encoded[next_id],
                        negative=encoded[neg.chart_id],
                        prev_id=prev_id,
                        mid_id=mid_id,
                        next_id=next_id,
                        negative_id=neg.chart_id,
                        vis_id=vis.id,
                        negative_vis_id=neg.vis_id,
                    )
                )
    return SampleSet(samples=tuple(samples), config=config)


_CALLIOPE_AGGREGATIONS = {
    "count": "count",
    "cnt": "count",
    "sum": "sum",
    "total": "sum",
    "avg": "average",
    "average": "average",
    "mean": "average",
    "min": "minimum",
    "minimum": "minimum",
    "max": "maximum",
    "maximum": "maximum",
}

_CALLIOPE_FIELD_TYPES = {
    "temporal": "temporal",
    "time": "temporal",
    "date": "temporal",
    "numerical": "numerical",
    "numeric": "numerical",
    "number": "numerical",
    "categorical": "categorical",
    "category": "categorical",
    "string": "categorical",
    "geographical": "geographical",
    "geo": "geographical",
    "geographic": "geographical",
}


def _calliope_field_type(raw: str, where: str) -> str:
    try:
        return _CALLIOPE_FIELD_TYPES[str(raw).lower()]
    except KeyError:
        raise CorpusError(f"{where}: unknown field type {raw!r}") from None


def _calliope_meta(fact_type: str, raw, where: str):
    if raw in (None, "", []):
        return None
    if fact_type == "trend":
        direction = str(raw).lower().replace(" ", "-")
        return {"kind": "trend", "direction": direction}
    if fact_type == "categorization":
        text = str(raw).split()[0]
        return {"kind": "categorization", "count": int(text)}
    if fact_type == "difference":
        return {"kind": "difference", "relation": str(raw).lower()}
    if fact_type == "rank":
        entries = raw if isinstance(raw, list) else [p for p in str(raw).split(",") if p]
        return {"kind": "rank", "top3": [str(e).strip() for e in entries][:3]}
    if fact_type == "extreme":
        return {"kind": "extreme", "extreme": str(raw).lower()}
    if fact_type == "association":
        return {"kind": "association", "sign": str(raw).lower()}
    log.warning("%s: dropping meta %r for fact type %r", where, raw, fact_type)
    return None


def import_calliope(obj: dict) -> dict:
    """Convert a story-list export (5-part facts plus chart/meta) into the
    native corpus layout. The expected input shape is documented in the
    README; unknown aggregations or field types are rejected."""
    if "stories" not in obj:
        raise CorpusError("expected a top-level 'stories' list")
    visualizations = []
    for s_idx, story in enumerate(obj["stories"]):
        where = f"stories[{s_idx}]"
        charts = []
        for c_idx, item in enumerate(story.get("facts", [])):
            cwhere = f"{where}.facts[{c_idx}]"
            subspace = [
                {
                    "field": str(f.get("field", "")),
                    "value": str(f.get("value", "")),
                    "field_type": _calliope_field_type(
                        f.get("type", f.get("field_type", "categorical")), cwhere
                    ),
                }
                for f in item.get("subspace", [])
            ]
            breakdown = None
            raw_breakdown = item.get("breakdown")
            if isinstance(raw_breakdown, list):
                raw_breakdown = raw_breakdown[0] if raw_breakdown else None
            if raw_breakdown:
                breakdown = {
                    "field": str(raw_breakdown.get("field", raw_breakdown)),
                    "field_type": _calliope_field_type(
                        raw_breakdown.get("type", "categorical")
                        if isinstance(raw_breakdown, dict)
                        else "categorical",
                        cwhere,
                    ),
                }
            measure = None
            raw_measure = item.get("measure")
            if isinstance(raw_measure, list):
                raw_measure = raw_measure[0] if raw_measure else None
            if raw_measure:
                agg_raw = str(raw_measure.get("aggregate", "sum")).lower()
                if agg_raw not in _CALLIOPE_AGGREGATIONS:
                    raise CorpusError(f"{cwhere}: unknown aggregation {agg_raw!r}")
                measure = {
                    "field": str(raw_measure.get("field", "")),
                    "aggregation": _CALLIOPE_AGGREGATIONS[agg_raw],
                }
            focus = None
            raw_focus = item.get("focus")
            if isinstance(raw_focus, list):
                raw_focus = raw_focus[0] if raw_focus else None
            if raw_focus:
                focus = {
                    "field": str(raw_focus.get("field", "")),
                    "field_type": _calliope_field_type(
                        raw_focus.get("type", "categorical"), cwhere
                    ),
                    "value": str(raw_focus.get("value", "")),
                }
            fact_type = str(item.get("fact_type", item.get("type", ""))).lower()
            charts.append(
                {
                    "chart_id": item.get("chart_id", f"{story.get('story_id', s_idx)}-c{c_idx}"),
                    "fact": {
                        "type_c": str(item.get("chart", "table")).lower(),
                        "type_f": fact_type,
                        "subspace": subspace,
                        "breakdown": breakdown,
                        "measure": measure,
                        "focus": focus,
                        "meta": _calliope_meta(fact_type, item.get("meta"), cwhere),
                    },
                }
            )
        visualizations.append(
            {
                "id": str(story.get("story_id", f"story-{s_idx}")),
                "dataset_id": str(story.get("dataset", f"dataset-{s_idx}")),
                "domain": str(story.get("topic", story.get("domain", "society"))).lower(),
                "kind": str(story.get("kind", "data-story")),
                "charts": charts,
            }
        )
    return {"visualizations": visualizations}
