from __future__ import annotations

import json

import pytest

from chartembed.cli import main
from chartembed.corpus import load_corpus
from chartembed.encoder import load_checkpoint, load_checkpoint_extras, params_equal
from chartembed.evaluation import load_index


@pytest.fixture(scope="module")
def trained(tmp_path_factory, fixture_corpus_path, fixture_vectors_path):
    """One short training run shared by the CLI tests that need a model."""
    out = tmp_path_factory.mktemp("cli") / "model.ckpt"
    code = main(
        [
            "train", fixture_corpus_path, fixture_vectors_path, str(out),
            "--epochs", "2", "--seed", "3", "--test-fraction", "0",
        ]
    )
    assert code == 0
    return str(out)


@pytest.fixture(scope="module")
def index_path(trained, tmp_path_factory, fixture_corpus_path, fixture_vectors_path):
    out = tmp_path_factory.mktemp("cli-index") / "index.tsv"
    code = main(
        ["embed", trained, fixture_corpus_path, str(out), "--vectors", fixture_vectors_path]
    )
    assert code == 0
    return str(out)


def test_validate_ok(fixture_corpus_path, capsys):
    assert main(["validate", fixture_corpus_path]) == 0
    assert "10 visualizations" in capsys.readouterr().out


def test_validate_two_chart_story(tmp_path, capsys):
    bad = {
        "visualizations": [
            {
                "id": "v0",
                "dataset_id": "d",
                "domain": "economy",
                "kind": "data-story",
                "charts": [
                    {
                        "chart_id": f"c{i}",
                        "fact": {
                            "type_c": "table", "type_f": "value", "subspace": [],
                            "breakdown": None, "measure": None, "focus": None,
                            "meta": None,
                        },
                    }
                    for i in range(2)
                ],
            }
        ]
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad), encoding="utf-8")
    assert main(["validate", str(path)]) == 1
    assert "minimum chart number" in capsys.readouterr().err


def test_validate_missing_file():
    assert main(["validate", "/nonexistent/corpus.json"]) == 2


def test_train_outputs(trained):
    params, config = load_checkpoint(trained)
    assert config.output_dim == 540
    extras = load_checkpoint_extras(trained)
    assert extras["epochs"] == 2 and extras["seed"] == 3
    with open(trained + ".history.csv", encoding="utf-8") as fh:
        lines = fh.read().strip().splitlines()
    assert lines[0] == "epoch,interp_term,pair_term,l1,l2,total,wall_ms"
    assert len(lines) == 3
    with open(trained + ".manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    assert manifest["command"] == "train"
    assert set(manifest["inputs"]) == {"corpus", "vectors"}
    for block in manifest["inputs"].values():
        assert len(block["sha256"]) == 64


def test_train_zero_epochs_writes_initial_params(
    tmp_path, fixture_corpus_path, fixture_vectors_path
):
    out = tmp_path / "zero.ckpt"
    code = main(
        [
            "train", fixture_corpus_path, fixture_vectors_path, str(out),
            "--epochs", "0", "--seed", "11", "--test-fraction", "0",
        ]
    )
    assert code == 0
    params, config = load_checkpoint(str(out))
    from chartembed.encoder import EncoderConfig, init_params

    assert params_equal(params, init_params(11, EncoderConfig(dropout=0.1)))


def test_train_bad_vectors_path(tmp_path, fixture_corpus_path):
    out = tmp_path / "model.ckpt"
    code = main(["train", fixture_corpus_path, "/nonexistent/vectors.txt", str(out)])
    assert code == 2


def test_train_reproducible_checkpoints(
    tmp_path, fixture_corpus_path, fixture_vectors_path
):
    args = ["--epochs", "2", "--seed", "9", "--test-fraction", "0"]
    out_a = tmp_path / "a.ckpt"
    out_b = tmp_path / "b.ckpt"
    assert main(["train", fixture_corpus_path, fixture_vectors_path, str(out_a)] + args) == 0
    assert main(["train", fixture_corpus_path, fixture_vectors_path, str(out_b)] + args) == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_train_split_writes_corpora(tmp_path, fixture_corpus_path, fixture_vectors_path):
    out = tmp_path / "model.ckpt"
    code = main(
        [
            "train", fixture_corpus_path, fixture_vectors_path, str(out),
            "--epochs", "1", "--test-fraction", "0.2",
        ]
    )
    assert code == 0
    train_corpus = load_corpus(str(out) + ".train-corpus.json")
    test_corpus = load_corpus(str(out) + ".test-corpus.json")
    assert len(train_corpus) + len(test_corpus) == 10
    assert not set(train_corpus.dataset_ids()) & set(test_corpus.dataset_ids())


def test_config_file_flags_win(tmp_path, fixture_corpus_path, fixture_vectors_path):
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({"epochs": 1, "seed": 21}), encoding="utf-8")
    out = tmp_path / "model.ckpt"
    code = main(
        [
            "train", fixture_corpus_path, fixture_vectors_path, str(out),
            "--config", str(config_path), "--seed", "22", "--test-fraction", "0",
        ]
    )
    assert code == 0
    extras = load_checkpoint_extras(str(out))
    assert extras["epochs"] == 1  # from the config file
    assert extras["seed"] == 22  # flag beats config file


def test_embed_row_count(index_path, fixture_corpus):
    index = load_index(index_path)
    assert len(index) == fixture_corpus.chart_count
    with open(index_path, encoding="utf-8") as fh:
        header = fh.readline().split("\t")
    assert header[:4] == ["chart_id", "story_id", "position", "dataset_id"]
    assert len(header) == 4 + 540


def test_embed_byte_identical_reruns(
    tmp_path, trained, fixture_corpus_path, fixture_vectors_path
):
    out_a = tmp_path / "a.tsv"
    out_b = tmp_path / "b.tsv"
    for out in (out_a, out_b):
        code = main(
            ["embed", trained, fixture_corpus_path, str(out), "--vectors", fixture_vectors_path]
        )
        assert code == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_embed_empty_corpus(tmp_path, trained, fixture_vectors_path):
    corpus = tmp_path / "empty.json"
    corpus.write_text('{"visualizations": []}', encoding="utf-8")
    out = tmp_path / "index.tsv"
    code = main(
        ["embed", trained, str(corpus), str(out), "--vectors", fixture_vectors_path]
    )
    assert code == 0
    assert out.read_text(encoding="utf-8").startswith("chart_id\tstory_id")


def test_embed_manifest(index_path):
    with open(index_path + ".manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    assert manifest["command"] == "embed"


def test_embed_bad_vectors_dimension(tmp_path, trained, fixture_corpus_path):
    vectors = tmp_path / "short.txt"
    vectors.write_text("word 1.0 2.0 3.0\n", encoding="utf-8")
    out = tmp_path / "index.tsv"
    code = main(
        ["embed", trained, fixture_corpus_path, str(out), "--vectors", str(vectors)]
    )
    assert code == 1


def test_nearest_rows(index_path, capsys):
    assert main(["nearest", index_path, "s00c0", "--k", "3"]) == 0
    rows = capsys.readouterr().out.strip().splitlines()
    assert len(rows) == 3
    rank, chart_id, distance = rows[0].split("\t")
    assert rank == "1"
    assert chart_id.startswith("s0")
    float(distance)


def test_nearest_unknown_anchor(index_path):
    assert main(["nearest", index_path, "nope"]) == 1


def test_nearest_k_exceeds_candidates(index_path, capsys):
    assert main(["nearest", index_path, "s00c0", "--k", "999"]) == 0
    rows = capsys.readouterr().out.strip().splitlines()
    assert len(rows) == 9  # the dataset holds two five-chart stories


def test_eval_text_and_json(index_path, capsys):
    assert main(["eval", index_path]) == 0
    out = capsys.readouterr().out
    assert "co-occurrence" in out
    assert main(["eval", index_path, "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert set(payload) >= {"top2", "top3", "cooccurrence", "n_anchors"}
    assert len(payload["details"]) == 50


def test_eval_gap_flags(index_path, capsys):
    assert main(["eval", index_path, "--gap2", "1", "--gap3", "4", "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["gap2"] == 1 and payload["gap3"] == 4


def test_eval_empty_index(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("chart_id\tstory_id\tposition\tdataset_id\n", encoding="utf-8")
    assert main(["eval", str(path)]) == 1


def test_ablate_single_variant(tmp_path, fixture_corpus_path, fixture_vectors_path, capsys):
    out = tmp_path / "ablation.csv"
    code = main(
        [
            "ablate", fixture_corpus_path, fixture_vectors_path,
            "--variants", "full", "--epochs", "1", "--seed", "0",
            "--out", str(out),
        ]
    )
    assert code == 0
    assert "full" in capsys.readouterr().out
    lines = out.read_text(encoding="utf-8").strip().splitlines()
    assert lines[0] == "variant,top2,top3,cooccurrence,wall_ms,peak_bytes"
    assert len(lines) == 2


def test_ablate_unknown_variant(fixture_corpus_path, fixture_vectors_path):
    code = main(
        ["ablate", fixture_corpus_path, fixture_vectors_path, "--variants", "bogus"]
    )
    assert code == 2


def test_gradcheck_ok(capsys):
    assert main(["gradcheck", "--seed", "0", "--coords", "60"]) == 0
    assert "gradients OK" in capsys.readouterr().out


def test_gradcheck_injected_fault():
    assert main(["gradcheck", "--seed", "0", "--coords", "60", "--inject-fault"]) == 1


def test_gradcheck_epsilon_warning(capsys):
    main(["gradcheck", "--seed", "0", "--coords", "10", "--epsilon", "1e-2"])
    assert "outside the reliable" in capsys.readouterr().err


def test_embedding_dim_is_fixed(fixture_corpus_path, fixture_vectors_path, tmp_path):
    out = tmp_path / "model.ckpt"
    code = main(
        [
            "train", fixture_corpus_path, fixture_vectors_path, str(out),
            "--embedding-dim", "50",
        ]
    )
    assert code == 2


def test_embed_vectors_env_fallback(
    monkeypatch, trained, tmp_path, fixture_corpus_path, fixture_vectors_path
):
    out = tmp_path / "index.tsv"
    monkeypatch.delenv("CHARTEMBED_VECTORS", raising=False)
    assert main(["embed", trained, fixture_corpus_path, str(out)]) == 2
    monkeypatch.setenv("CHARTEMBED_VECTORS", fixture_vectors_path)
    assert main(["embed", trained, fixture_corpus_path, str(out)]) == 0
    assert load_index(str(out)).ids()


def test_import_calliope(tmp_path, data_dir):
    out = tmp_path / "imported.json"
    code = main(["import", str(data_dir / "calliope_sample.json"), str(out)])
    assert code == 0
    corpus = load_corpus(str(out))
    assert len(corpus) == 3


def test_grammar_dump_command(capsys, data_dir):
    assert main(["grammar"]) == 0
    out = capsys.readouterr().out
    assert out == (data_dir / "grammar_dump.txt").read_text(encoding="utf-8")


def test_import_unknown_format(tmp_path, data_dir):
    out = tmp_path / "imported.json"
    code = main(
        ["import", str(data_dir / "calliope_sample.json"), str(out), "--format", "vega"]
    )
    assert code == 2
