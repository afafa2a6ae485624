"""Command-line surface.

Subcommands wire the modules into reproducible workflows: validate, train,
embed, nearest, eval, ablate, gradcheck, and import. Exit codes are stable:
0 success, 1 domain failure, 2 usage or I/O failure. Every mutating command
writes a run manifest (config snapshot, seeds, input digests) next to its
primary output, and all randomness flows from the single --seed flag.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from typing import Optional

import numpy as np

from . import __version__
from .corpus import (
    Corpus,
    CorpusError,
    build_samples,
    corpus_from_dict,
    import_calliope,
    load_corpus,
    save_corpus,
    split_corpus,
)
from .encoder import (
    CheckpointError,
    EncoderConfig,
    EncoderError,
    encode_chart,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .evaluation import (
    ABLATION_VARIANTS,
    EvaluationError,
    ablation_csv,
    build_index,
    compute_metrics,
    load_index,
    metrics_json,
    nearest,
    render_ablation_table,
    render_metrics,
    run_ablation,
    save_index,
)
from .factgen import random_fact
from .learning import (
    HyperParams,
    TrainingDivergedError,
    TrainingSample,
    grad_check,
    history_csv,
    train,
)
from .semantics import VectorStore, VectorStoreError, load_vector_store

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2

GRADCHECK_THRESHOLD = 1e-4


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(
    path: str,
    command: str,
    config: dict,
    inputs: dict[str, str],
    outputs: list[str],
    wall_ms: float,
) -> None:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "config": config,
        "inputs": {
            name: {"path": p, "sha256": _sha256(p)} for name, p in inputs.items()
        },
        "outputs": outputs,
        "wall_ms": wall_ms,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, ensure_ascii=False, indent=1)
        fh.write("\n")


VECTORS_ENV = "CHARTEMBED_VECTORS"


def _resolve_vectors(explicit: Optional[str]) -> Optional[str]:
    """Explicit path wins; the CHARTEMBED_VECTORS environment key is the
    fallback."""
    return explicit or os.environ.get(VECTORS_ENV)


def _check_embedding_dim(dim: int) -> Optional[str]:
    if dim != 100:
        return f"--embedding-dim is fixed at 100, got {dim}"
    return None


def _load_config_file(path: Optional[str]) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ValueError("config file must hold a JSON object")
    return obj


def _resolve(args: argparse.Namespace, file_config: dict, name: str, default):
    """Flag wins over config file, config file over default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in file_config:
        return file_config[name]
    return default


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        corpus = load_corpus(args.corpus, strict=True)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CorpusError as exc:
        for line in str(exc).splitlines():
            print(f"violation: {line.strip()}", file=sys.stderr)
        return EXIT_DOMAIN
    print(
        f"ok: {len(corpus)} visualizations, {corpus.chart_count} charts, "
        f"{len(corpus.dataset_ids())} datasets"
    )
    return EXIT_OK


def _hyper_from(args: argparse.Namespace, file_config: dict) -> HyperParams:
    return HyperParams(
        alpha=float(_resolve(args, file_config, "alpha", 0.5)),
        beta=float(_resolve(args, file_config, "beta", 10.0)),
        margin=float(_resolve(args, file_config, "margin", 1.0)),
        learning_rate=float(_resolve(args, file_config, "lr", 0.01)),
        batch_size=int(_resolve(args, file_config, "batch", 128)),
        epochs=int(_resolve(args, file_config, "epochs", 10)),
        dropout=float(_resolve(args, file_config, "dropout", 0.1)),
        seed=int(_resolve(args, file_config, "seed", 0)),
    )


def cmd_train(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    problem = _check_embedding_dim(args.embedding_dim)
    if problem:
        print(f"error: {problem}", file=sys.stderr)
        return EXIT_USAGE
    try:
        file_config = _load_config_file(args.config)
        hyper = _hyper_from(args, file_config)
        test_fraction = float(_resolve(args, file_config, "test_fraction", 0.1))
        negatives = int(_resolve(args, file_config, "negatives", 1))
        policy = _resolve(args, file_config, "policy", "same-dataset-first")
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        store = load_vector_store(args.vectors)
        corpus = load_corpus(args.corpus, strict=not args.lenient)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, VectorStoreError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN

    outputs = [args.out]
    try:
        if test_fraction > 0.0:
            train_corpus, test_corpus = split_corpus(corpus, test_fraction, hyper.seed)
            save_corpus(train_corpus, args.out + ".train-corpus.json")
            save_corpus(test_corpus, args.out + ".test-corpus.json")
            outputs += [args.out + ".train-corpus.json", args.out + ".test-corpus.json"]
        else:
            train_corpus = corpus

        config = EncoderConfig(dropout=hyper.dropout)
        sample_set = build_samples(train_corpus, store, negatives, policy, hyper.seed, config)
        log.info("built %d training samples", len(sample_set))
        params = init_params(hyper.seed, config)
        params, history = train(sample_set, hyper, params)
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (CorpusError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN

    hyper_dict = {
        "alpha": hyper.alpha,
        "beta": hyper.beta,
        "margin": hyper.margin,
        "lr": hyper.learning_rate,
        "batch": hyper.batch_size,
        "epochs": hyper.epochs,
        "dropout": hyper.dropout,
        "seed": hyper.seed,
        "test_fraction": test_fraction,
        "negatives": negatives,
        "policy": policy,
        "samples": len(sample_set),
    }
    save_checkpoint(params, path=args.out, extras=hyper_dict)
    with open(args.out + ".history.csv", "w", encoding="utf-8") as fh:
        fh.write(history_csv(history))
    outputs.append(args.out + ".history.csv")
    _write_manifest(
        args.out + ".manifest.json",
        "train",
        hyper_dict,
        {"corpus": args.corpus, "vectors": args.vectors},
        outputs,
        (time.perf_counter() - started) * 1000.0,
    )
    if history:
        print(
            f"trained {hyper.epochs} epochs over {len(sample_set)} samples; "
            f"final loss {history[-1].total:.6f}"
        )
    else:
        print(f"wrote initial parameters (0 epochs) for {len(sample_set)} samples")
    print(f"checkpoint: {args.out}")
    return EXIT_OK


def cmd_embed(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    problem = _check_embedding_dim(args.embedding_dim)
    if problem:
        print(f"error: {problem}", file=sys.stderr)
        return EXIT_USAGE
    vectors = _resolve_vectors(args.vectors)
    if not vectors:
        print(
            f"error: no vector store given (use --vectors or set {VECTORS_ENV})",
            file=sys.stderr,
        )
        return EXIT_USAGE
    try:
        params, _ = load_checkpoint(args.checkpoint)
        store = load_vector_store(vectors)
        corpus = load_corpus(args.corpus, strict=True)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckpointError, CorpusError, VectorStoreError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    try:
        index = build_index(corpus, params, store)
    except (EncoderError, EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    save_index(index, args.out)
    _write_manifest(
        args.out + ".manifest.json",
        "embed",
        {"checkpoint": args.checkpoint},
        {"corpus": args.corpus, "vectors": vectors, "checkpoint": args.checkpoint},
        [args.out],
        (time.perf_counter() - started) * 1000.0,
    )
    print(f"embedded {len(index)} charts -> {args.out}")
    return EXIT_OK


def cmd_nearest(args: argparse.Namespace) -> int:
    try:
        index = load_index(args.index)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    try:
        ranked = nearest(index, args.anchor, scope=args.scope, k=args.k)
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    for rank, (chart_id, distance) in enumerate(ranked, start=1):
        print(f"{rank}\t{chart_id}\t{distance:.6f}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        index = load_index(args.index)
        report = compute_metrics(index, gap2=args.gap2, gap3=args.gap3)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    if args.json:
        print(json.dumps(metrics_json(report), indent=1))
    else:
        print(render_metrics(report), end="")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    if args.variants == "all":
        variants = list(ABLATION_VARIANTS)
    else:
        variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    unknown = [v for v in variants if v not in ABLATION_VARIANTS]
    if unknown or not variants:
        print(
            f"error: unknown variants {unknown}; choose from {list(ABLATION_VARIANTS)}",
            file=sys.stderr,
        )
        return EXIT_USAGE

    problem = _check_embedding_dim(args.embedding_dim)
    if problem:
        print(f"error: {problem}", file=sys.stderr)
        return EXIT_USAGE
    try:
        file_config = _load_config_file(args.config)
        hyper = _hyper_from(args, file_config)
        test_fraction = float(_resolve(args, file_config, "test_fraction", 0.0))
        store = load_vector_store(args.vectors)
        corpus = load_corpus(args.corpus, strict=True)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, VectorStoreError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN

    try:
        if test_fraction > 0.0:
            train_corpus, eval_corpus = split_corpus(corpus, test_fraction, hyper.seed)
        else:
            train_corpus = eval_corpus = corpus
        results = run_ablation(
            train_corpus, eval_corpus, store, hyper, variants, hyper.seed,
        )
    except (CorpusError, EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN

    print(render_ablation_table(results), end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(ablation_csv(results))
        _write_manifest(
            args.out + ".manifest.json",
            "ablate",
            {
                "variants": variants,
                "seed": hyper.seed,
                "epochs": hyper.epochs,
                "test_fraction": test_fraction,
            },
            {"corpus": args.corpus, "vectors": args.vectors},
            [args.out],
            (time.perf_counter() - started) * 1000.0,
        )
    failed = [r.variant for r in results if r.metrics is None]
    if failed:
        print(f"warning: failed variants: {failed}", file=sys.stderr)
    return EXIT_OK


def _gradcheck_sample(seed: int, config: EncoderConfig) -> TrainingSample:
    rng = np.random.default_rng(seed)
    store = VectorStore({})  # deterministic OOV vectors for every word
    charts = [encode_chart(random_fact(rng), store, config) for _ in range(4)]
    return TrainingSample(prev=charts[0], mid=charts[1], next=charts[2], negative=charts[3])


def cmd_gradcheck(args: argparse.Namespace) -> int:
    if not 1e-7 <= args.epsilon <= 1e-3:
        print(
            f"warning: epsilon {args.epsilon:g} is outside the reliable central-"
            "difference window [1e-7, 1e-3]; expect larger reported error",
            file=sys.stderr,
        )
    config = EncoderConfig()
    params = init_params(args.seed, config)
    sample = _gradcheck_sample(args.seed, config)
    hyper = HyperParams(seed=args.seed)
    error = grad_check(
        sample,
        params,
        hyper,
        epsilon=args.epsilon,
        n_coords=args.coords,
        seed=args.seed,
        corrupt=args.inject_fault,
    )
    print(f"max relative error: {error:.3e} over {args.coords} coordinates")
    if error < GRADCHECK_THRESHOLD:
        print("gradients OK")
        return EXIT_OK
    print(f"error: gradient check failed (threshold {GRADCHECK_THRESHOLD:g})", file=sys.stderr)
    return EXIT_DOMAIN


def cmd_grammar(args: argparse.Namespace) -> int:
    from .grammar import grammar_dump

    print(grammar_dump(), end="")
    return EXIT_OK


def cmd_import(args: argparse.Namespace) -> int:
    if args.format != "calliope":
        print(f"error: unknown import format {args.format!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with open(args.input, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        converted = import_calliope(obj)
        corpus = corpus_from_dict(converted, strict=not args.lenient)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    save_corpus(corpus, args.out)
    print(f"imported {len(corpus)} visualizations -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chartembed",
        description="Chart embeddings: train, index, retrieve, and evaluate.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="strict-mode corpus validation")
    p.add_argument("corpus")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("corpus")
    p.add_argument("vectors", help="word-vector store (text format)")
    p.add_argument("out", help="checkpoint output path")
    p.add_argument("--alpha", type=float, help="pair-distance weight (default 0.5)")
    p.add_argument("--beta", type=float, help="hinge-loss weight (default 10.0)")
    p.add_argument("--margin", type=float, help="hinge margin (default 1.0)")
    p.add_argument("--lr", type=float, help="learning rate (default 0.01)")
    p.add_argument("--batch", type=int, help="batch size (default 128)")
    p.add_argument("--epochs", type=int, help="epochs (default 10)")
    p.add_argument("--dropout", type=float, help="dropout rate (default 0.1)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--test-fraction", dest="test_fraction", type=float,
                   help="held-out fraction, split by dataset; 0 trains on all (default 0.1)")
    p.add_argument("--negatives", type=int, help="negatives per window (default 1)")
    p.add_argument("--policy", choices=["same-dataset-first", "any"],
                   help="negative sampling policy (default same-dataset-first)")
    p.add_argument("--config", help="JSON config file; flags win on conflict")
    p.add_argument("--lenient", action="store_true", help="drop invalid charts instead of failing")
    p.add_argument("--embedding-dim", dest="embedding_dim", type=int, default=100,
                   help="word-vector width; fixed at 100")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="embed a corpus with a trained checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("corpus")
    p.add_argument("out", help="embedding index output path (TSV)")
    p.add_argument("--vectors", help=f"word-vector store (or set ${VECTORS_ENV})")
    p.add_argument("--embedding-dim", dest="embedding_dim", type=int, default=100,
                   help="word-vector width; fixed at 100")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("nearest", help="retrieve nearest charts from an index")
    p.add_argument("index")
    p.add_argument("anchor")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--scope", choices=["same-dataset", "all"], default="same-dataset")
    p.set_defaults(func=cmd_nearest)

    p = sub.add_parser("eval", help="retrieval metrics over an index")
    p.add_argument("index")
    p.add_argument("--gap2", type=int, default=2, help="position gap for top-2 (default 2)")
    p.add_argument("--gap3", type=int, default=3, help="position gap for top-3 (default 3)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate ablation variants")
    p.add_argument("corpus")
    p.add_argument("vectors")
    p.add_argument("--variants", default="all",
                   help="comma-separated variant names, or 'all'")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--test-fraction", dest="test_fraction", type=float,
                   help="eval on a held-out split; 0 evaluates on the training corpus (default 0)")
    p.add_argument("--config", help="JSON config file; flags win on conflict")
    p.add_argument("--out", help="write the results CSV here")
    p.add_argument("--embedding-dim", dest="embedding_dim", type=int, default=100,
                   help="word-vector width; fixed at 100")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="compare analytic vs numeric gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--coords", type=int, default=200)
    p.add_argument("--inject-fault", action="store_true",
                   help="corrupt one gradient to prove the check can fail")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("grammar", help="print the 60-rule table (stable debug dump)")
    p.set_defaults(func=cmd_grammar)

    p = sub.add_parser("import", help="convert an external export to the corpus schema")
    p.add_argument("input")
    p.add_argument("out")
    p.add_argument("--format", default="calliope", help="input layout (only 'calliope')")
    p.add_argument("--lenient", action="store_true")
    p.set_defaults(func=cmd_import)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
