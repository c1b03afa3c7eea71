import numpy as np
import pytest

from senseforge import cli
from senseforge.corpus import build_vocab, read_tokens
from senseforge.modelio import load_model, save_model
from senseforge.synth import TopicCorpusSpec, write_topic_corpus
from senseforge.trainer import ModelParams, TrainConfig, init_params


@pytest.fixture(scope="module")
def corpus_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "corpus.txt"
    write_topic_corpus(path, TopicCorpusSpec(n_topics=4, words_per_topic=10, seed=2), 20000)
    return path


@pytest.fixture(scope="module")
def trained_model(corpus_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_model") / "model.bin"
    rc = cli.main([
        "train", "--corpus", str(corpus_path), "--output", str(out),
        "--dim", "8", "--epochs", "1", "--min-count", "1", "--seed", "3",
    ])
    assert rc == 0
    return out


def run(argv, capsys):
    rc = cli.main(argv)
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def test_train_flag_defaults_match_config():
    parser = cli.build_parser()
    args = parser.parse_args(["train"])
    cfg = TrainConfig(dim=1)
    assert args.dim == 300
    assert args.senses == 3
    assert args.window == cfg.window == 5
    assert args.epochs == cfg.epochs == 5
    assert args.lr == cfg.initial_lr == 0.01
    assert args.batch == cfg.batch == 512
    assert args.negatives == cfg.negatives == 5
    assert args.subsample == cfg.subsample == 1e-4
    assert args.mode == "gasi-beta"
    assert args.temperature == 0.5
    assert args.beta == 0.4


def test_missing_corpus_is_usage_error(capsys):
    rc, _, err = run(["train"], capsys)
    assert rc == 2
    assert "corpus" in err


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2


def test_missing_model_file_exits_1(capsys):
    rc, _, err = run(["info", "--model", "/nonexistent/model.bin"], capsys)
    assert rc == 1
    assert "error:" in err


def test_train_writes_loadable_model(trained_model):
    params, vocab, mask = load_model(trained_model)
    assert params.d == 8 and params.K == 3
    assert mask is None
    assert len(vocab) > 0


def test_train_deterministic_across_invocations(corpus_path, tmp_path):
    outs = []
    for name in ("a.bin", "b.bin"):
        out = tmp_path / name
        rc = cli.main([
            "train", "--corpus", str(corpus_path), "--output", str(out),
            "--dim", "6", "--epochs", "1", "--min-count", "1", "--seed", "11",
        ])
        assert rc == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_env_var_overrides_default(corpus_path, tmp_path, monkeypatch):
    monkeypatch.setenv("SENSEFORGE_DIM", "4")
    monkeypatch.setenv("SENSEFORGE_SENSES", "2")
    out = tmp_path / "env.bin"
    rc = cli.main([
        "train", "--corpus", str(corpus_path), "--output", str(out),
        "--epochs", "1", "--min-count", "1",
    ])
    assert rc == 0
    params, _, _ = load_model(out)
    assert params.d == 4 and params.K == 2


def test_cli_flag_beats_env_var(monkeypatch):
    monkeypatch.setenv("SENSEFORGE_DIM", "4")
    args = cli.build_parser().parse_args(["train", "--dim", "16"])
    assert args.dim == 16


def test_info_round_trip(trained_model, capsys):
    rc, out, _ = run(["info", "--model", str(trained_model)], capsys)
    assert rc == 0
    fields = dict(line.split("\t") for line in out.splitlines())
    assert fields["senses"] == "3"
    assert fields["dim"] == "8"
    assert fields["has_mask"] == "0"


def test_prune_lambda_zero_noop(trained_model, tmp_path, capsys):
    mask_path = tmp_path / "mask.txt"
    rc, out, _ = run([
        "prune", "--model", str(trained_model), "--lambda", "0",
        "--output", str(mask_path),
    ], capsys)
    assert rc == 0
    fields = dict(line.split("\t") for line in out.splitlines())
    assert fields["lambda"] == "0.000000"
    assert fields["senses_removed"] == "0"
    assert any(key.startswith("decile_") for key in fields)


def test_prune_estimates_lambda(trained_model, tmp_path, capsys):
    mask_path = tmp_path / "mask.txt"
    rc, out, _ = run([
        "prune", "--model", str(trained_model), "--output", str(mask_path),
    ], capsys)
    assert rc == 0
    lam = float(dict(line.split("\t") for line in out.splitlines())["lambda"])
    assert 0.0 < lam < 2.0
    assert mask_path.exists()


def test_retrain_all_ones_mask_matches_train(corpus_path, tmp_path):
    plain = tmp_path / "plain.bin"
    rc = cli.main([
        "train", "--corpus", str(corpus_path), "--output", str(plain),
        "--dim", "6", "--epochs", "1", "--min-count", "1", "--seed", "5",
    ])
    assert rc == 0
    params, vocab, _ = load_model(plain)
    mask_path = tmp_path / "ones.txt"
    from senseforge.pruning import save_mask

    save_mask(np.ones((len(vocab), params.K), dtype=bool), vocab, 0.0, mask_path)
    again = tmp_path / "retrained.bin"
    rc = cli.main([
        "retrain", "--model", str(plain), "--mask", str(mask_path),
        "--corpus", str(corpus_path), "--output", str(again),
        "--epochs", "1", "--min-count", "1", "--seed", "5",
    ])
    assert rc == 0
    p2, _, m2 = load_model(again)
    assert np.array_equal(p2.S, params.S)
    assert np.array_equal(p2.C, params.C)
    assert m2 is not None and m2.all()


def test_neighbors_output_format(trained_model, capsys):
    _, vocab, _ = load_model(trained_model)
    word = vocab.words[0]
    rc, out, _ = run([
        "neighbors", "--model", str(trained_model), "--word", word, "--top", "3",
    ], capsys)
    assert rc == 0
    lines = out.splitlines()
    assert len(lines) == 9  # 3 senses x top 3
    for line in lines:
        left, right, sim = line.split("\t")
        assert left.startswith(word + "#")
        assert "#" in right
        float(sim)


def test_neighbors_oov_word_exits_1(trained_model, capsys):
    rc, _, err = run([
        "neighbors", "--model", str(trained_model), "--word", "zzzznope",
    ], capsys)
    assert rc == 1
    assert "zzzznope" in err


def test_eval_sim_output(trained_model, tmp_path, capsys):
    _, vocab, _ = load_model(trained_model)
    w = vocab.words
    ds = tmp_path / "pairs.txt"
    ds.write_text(
        f"{w[0]} {w[1]} 9.0\n{w[0]} {w[2]} 5.0\n{w[1]} {w[3]} 3.0\n{w[2]} {w[4]} 1.0\n"
    )
    rc, out, _ = run(["eval-sim", "--model", str(trained_model), "--dataset", str(ds)], capsys)
    assert rc == 0
    metric, rho, cov = out.strip().split("\t")
    assert metric == "maxsim"
    assert -1.0 <= float(rho) <= 1.0
    assert float(cov) == 1.0


def test_eval_contextual_output(trained_model, tmp_path, capsys):
    _, vocab, _ = load_model(trained_model)
    w = vocab.words
    ds = tmp_path / "ctx.txt"
    lines = []
    for i, score in enumerate([8.0, 6.0, 3.0, 1.0]):
        a, b = w[i], w[i + 1]
        lines.append(
            f"{i}\t{a}\tn\t{b}\tn\t"
            f"{w[5]} <b> {a} </b> {w[6]}\t{w[7]} <b> {b} </b> {w[8]}\t{score}"
        )
    ds.write_text("\n".join(lines) + "\n")
    rc, out, _ = run(
        ["eval-contextual", "--model", str(trained_model), "--dataset", str(ds)], capsys
    )
    assert rc == 0
    got = dict(line.split("\t")[:2] for line in out.splitlines())
    assert set(got) == {"maxsimc", "avgsimc"}


def test_eval_wic_output(trained_model, tmp_path, capsys):
    _, vocab, _ = load_model(trained_model)
    w = vocab.words
    ds = tmp_path / "wic.txt"
    ds.write_text(
        f"{w[0]}\tN\t1-1\t{w[3]} {w[0]} {w[4]}\t{w[5]} {w[0]} {w[6]}\n"
        f"{w[1]}\tN\t0-0\t{w[1]} {w[7]}\t{w[1]} {w[8]}\n"
    )
    gold = tmp_path / "gold.txt"
    gold.write_text("T\nF\n")
    rc, out, _ = run([
        "eval-wic", "--model", str(trained_model), "--dataset", str(ds),
        "--gold", str(gold),
    ], capsys)
    assert rc == 0
    metric, acc, _ = out.strip().split("\t")
    assert metric == "wic_accuracy"
    assert 0.0 <= float(acc) <= 1.0


def test_eval_wic_requires_gold_labels(trained_model, tmp_path, capsys):
    with pytest.raises(SystemExit):
        cli.main(["eval-wic", "--model", str(trained_model), "--dataset", "x"])


def test_export_tasks(trained_model, tmp_path, capsys):
    out_csv = tmp_path / "tasks.csv"
    rc, out, _ = run([
        "export-tasks", "--model", str(trained_model), "--n-words", "5",
        "--per-sense", "2", "--output", str(out_csv),
    ], capsys)
    assert rc == 0
    n_tasks = int(out.split("\t")[1])
    assert n_tasks > 0
    assert len(out_csv.read_text().splitlines()) == n_tasks + 1


def test_empty_corpus_runtime_error(tmp_path, capsys):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    rc, _, err = run([
        "train", "--corpus", str(empty), "--output", str(tmp_path / "m.bin"),
    ], capsys)
    assert rc == 1
    assert "empty vocabulary" in err
