"""CLI: flag plumbing, environment fallbacks, config-file precedence, and a
train -> eval -> predict -> complete round trip on a tiny corpus."""

import json

import pytest

from hierolm.cli import build_parser, main

from conftest import FIXED_LINE


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus.txt"
    corpus.write_text("".join(FIXED_LINE + "\n" for _ in range(30)),
                      encoding="utf-8")
    return root


@pytest.fixture(scope="module")
def trained(workdir):
    ckpt = workdir / "model.hlm"
    metrics = workdir / "metrics.jsonl"
    rc = main([
        "train", "--corpus", str(workdir / "corpus.txt"),
        "--arch", "lstm", "--embed-size", "16", "--hidden-size", "16",
        "--batch-size", "16", "--lr", "1e-2", "--max-epochs", "60",
        "--seed", "0", "--out", str(ckpt), "--metrics", str(metrics),
    ])
    assert rc == 0
    return ckpt, metrics


def run(capsys, argv):
    rc = main(argv)
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


# -- parser shape ---------------------------------------------------------------

def test_parser_lists_all_subcommands():
    parser = build_parser()
    text = parser.format_help()
    for cmd in ("train", "eval", "predict", "complete", "sweep", "serve",
                "repl", "synth"):
        assert cmd in text


def test_missing_required_flags_exit_with_usage_error():
    for argv in (["train"], ["predict"], ["complete"], ["repl"],
                 ["eval", "--ckpt", "x.hlm"], ["sweep", "--corpus", "c.txt"],
                 ["synth"]):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == 2


def test_bad_ratio_flag_is_rejected(workdir):
    with pytest.raises(SystemExit):
        main(["train", "--corpus", str(workdir / "corpus.txt"),
              "--ratios", "1,1"])


# -- train ----------------------------------------------------------------------

def test_train_emits_summary_and_metrics(trained, workdir, capsys):
    # the module fixture already ran training; re-check its artifacts
    ckpt, metrics = trained
    assert ckpt.exists()
    lines = metrics.read_text().strip().splitlines()
    rows = [json.loads(line) for line in lines]
    assert [r["epoch"] for r in rows] == list(range(1, len(rows) + 1))
    assert all({"epoch", "lr", "train_loss", "val_ppl", "decay_count"}
               <= set(r) for r in rows)


def test_train_env_fallback_and_flag_precedence(workdir, capsys, monkeypatch):
    monkeypatch.setenv("HIEROLM_MAX_EPOCHS", "3")
    out = workdir / "env.hlm"
    rc, stdout, _ = run(capsys, [
        "train", "--corpus", str(workdir / "corpus.txt"),
        "--arch", "rnn", "--embed-size", "8", "--hidden-size", "8",
        "--out", str(out), "--metrics", str(workdir / "env.jsonl")])
    assert rc == 0
    assert json.loads(stdout.strip().splitlines()[-1])["epochs"] == 3

    rc, stdout, _ = run(capsys, [
        "train", "--corpus", str(workdir / "corpus.txt"),
        "--arch", "rnn", "--embed-size", "8", "--hidden-size", "8",
        "--max-epochs", "4",  # explicit flag beats the environment
        "--out", str(out), "--metrics", str(workdir / "env.jsonl")])
    assert json.loads(stdout.strip().splitlines()[-1])["epochs"] == 4


def test_train_config_file_below_env(workdir, capsys, monkeypatch):
    cfg = workdir / "train.toml"
    cfg.write_text('architecture = "rnn"\nembed_size = 8\nhidden_size = 8\n'
                   "max_epochs = 2\n", encoding="utf-8")
    out = workdir / "cfg.hlm"
    argv = ["train", "--corpus", str(workdir / "corpus.txt"),
            "--config", str(cfg), "--out", str(out),
            "--metrics", str(workdir / "cfg.jsonl")]
    rc, stdout, _ = run(capsys, argv)
    assert rc == 0
    assert json.loads(stdout.strip().splitlines()[-1])["epochs"] == 2

    monkeypatch.setenv("HIEROLM_MAX_EPOCHS", "3")  # env beats the file
    rc, stdout, _ = run(capsys, argv)
    assert json.loads(stdout.strip().splitlines()[-1])["epochs"] == 3


def test_train_rejects_unknown_config_keys(workdir):
    cfg = workdir / "bad.toml"
    cfg.write_text("no_such_setting = 1\n", encoding="utf-8")
    with pytest.raises(SystemExit):
        main(["train", "--corpus", str(workdir / "corpus.txt"),
              "--config", str(cfg)])


def test_bad_env_value_is_a_usage_error(workdir, monkeypatch):
    monkeypatch.setenv("HIEROLM_MAX_EPOCHS", "many")
    with pytest.raises(SystemExit) as info:
        main(["train", "--corpus", str(workdir / "corpus.txt"),
              "--arch", "rnn", "--embed-size", "8", "--hidden-size", "8",
              "--out", "x.hlm"])
    assert info.value.code == 2


# -- eval -----------------------------------------------------------------------

def test_eval_json_document(trained, workdir, capsys):
    ckpt, _ = trained
    rc, stdout, _ = run(capsys, [
        "eval", "--ckpt", str(ckpt), "--corpus", str(workdir / "corpus.txt"),
        "--json"])
    assert rc == 0
    doc = json.loads(stdout)
    assert set(doc) == {"eval", "multishot", "length_buckets"}
    assert doc["eval"]["accuracy"] == 1.0
    assert doc["eval"]["perplexity"] < 1.05
    assert doc["multishot"]["per_shot"] == [1.0] * 4
    assert len(doc["length_buckets"]["buckets"]) == 5


def test_eval_text_tables_and_pca(trained, workdir, capsys):
    ckpt, _ = trained
    pca = workdir / "emb.csv"
    rc, stdout, stderr = run(capsys, [
        "eval", "--ckpt", str(ckpt), "--corpus", str(workdir / "corpus.txt"),
        "--split", "all", "--pca", str(pca)])
    assert rc == 0
    assert "perplexity" in stdout
    assert "joint_accuracy" in stdout
    assert "[21,inf]" in stdout
    lines = pca.read_text().strip().splitlines()
    assert lines[0] == "token,x,y"
    assert len(lines) == 7  # six study tokens after the specials
    assert "wrote PCA projection" in stderr


# -- predict / complete ----------------------------------------------------------

def test_predict_table_and_json(trained, capsys):
    ckpt, _ = trained
    rc, stdout, _ = run(capsys, [
        "predict", "--ckpt", str(ckpt), "--context", "Htp dj", "-k", "3"])
    assert rc == 0
    lines = stdout.strip().splitlines()
    assert lines[0].split() == ["token", "probability"]
    assert len(lines) == 5  # header, rule, three candidates
    assert lines[2].split()[0] == "nswt"

    rc, stdout, _ = run(capsys, [
        "predict", "--ckpt", str(ckpt), "--context", "Htp dj",
        "-k", "3", "--json"])
    doc = json.loads(stdout)
    assert [c["token"] for c in doc["candidates"]][0] == "nswt"


def test_predict_warns_on_oov_context(trained, capsys):
    ckpt, _ = trained
    rc, _, stderr = run(capsys, [
        "predict", "--ckpt", str(ckpt), "--context", "Htp qqq"])
    assert rc == 0
    assert "out of vocabulary" in stderr


def test_predict_env_k(trained, capsys, monkeypatch):
    ckpt, _ = trained
    monkeypatch.setenv("HIEROLM_K", "2")
    rc, stdout, _ = run(capsys, [
        "predict", "--ckpt", str(ckpt), "--context", "Htp", "--json"])
    assert len(json.loads(stdout)["candidates"]) == 2


def test_complete_round_trip(trained, capsys):
    ckpt, _ = trained
    rc, stdout, stderr = run(capsys, [
        "complete", "--ckpt", str(ckpt), "--context", "Htp", "--steps", "30"])
    assert rc == 0
    assert stdout.strip() == " ".join(FIXED_LINE.split()[1:])
    assert "(end of sentence)" in stderr

    rc, stdout, _ = run(capsys, [
        "complete", "--ckpt", str(ckpt), "--context", "Htp",
        "--steps", "2", "--json"])
    doc = json.loads(stdout)
    assert doc["generated"] == ["dj", "nswt"]
    assert doc["terminated_by_eos"] is False


# -- synth ----------------------------------------------------------------------

def test_synth_builtin_to_stdout(capsys):
    rc, stdout, _ = run(capsys, ["synth", "--spec", "offering", "-n", "25",
                                 "--seed", "3"])
    assert rc == 0
    lines = stdout.strip().splitlines()
    assert len(lines) == 25
    rc, again, _ = run(capsys, ["synth", "--spec", "offering", "-n", "25",
                                "--seed", "3"])
    assert again == stdout


def test_synth_to_file_and_bad_spec(workdir, capsys):
    out = workdir / "sample.txt"
    rc, stdout, stderr = run(capsys, [
        "synth", "--spec", "offering", "-n", "10", "--out", str(out)])
    assert rc == 0
    assert stdout == ""
    assert "wrote 10 sentences" in stderr
    assert len(out.read_text().strip().splitlines()) == 10
    with pytest.raises(SystemExit):
        main(["synth", "--spec", "no-such-grammar"])


def test_synth_custom_toml(workdir, capsys):
    spec = workdir / "tiny.toml"
    spec.write_text(
        'name = "tiny"\n\n'
        "[[templates]]\nweight = 1.0\nitems = [\"$X\", \"c\"]\n\n"
        "[slots.X]\nfills = [\"a\", \"b\"]\n",
        encoding="utf-8")
    rc, stdout, _ = run(capsys, ["synth", "--spec", str(spec), "-n", "8"])
    assert rc == 0
    for line in stdout.strip().splitlines():
        assert line in ("a c", "b c")


# -- sweep ----------------------------------------------------------------------

def test_sweep_grid(workdir, capsys):
    grid = workdir / "grid.toml"
    grid.write_text(
        "[grid]\nhidden_size = [8, 12]\n"
        "[base]\narchitecture = \"rnn\"\nembed_size = 8\nhidden_size = 8\n"
        "batch_size = 16\nmax_epochs = 2\n",
        encoding="utf-8")
    rc, stdout, _ = run(capsys, [
        "sweep", "--corpus", str(workdir / "corpus.txt"),
        "--grid", str(grid), "--json"])
    assert rc == 0
    rows = json.loads(stdout)
    assert len(rows) == 2
    assert {r["hidden_size"] for r in rows} == {8, 12}
    accs = [r["test_accuracy"] for r in rows]
    assert accs == sorted(accs, reverse=True)

    table = workdir / "sweep.txt"
    rc, stdout, _ = run(capsys, [
        "sweep", "--corpus", str(workdir / "corpus.txt"),
        "--grid", str(grid), "--out", str(table)])
    assert rc == 0
    assert "test_accuracy" in table.read_text()


def test_sweep_rejects_gridless_file(workdir):
    empty = workdir / "empty.toml"
    empty.write_text("[base]\nmax_epochs = 1\n", encoding="utf-8")
    with pytest.raises(SystemExit):
        main(["sweep", "--corpus", str(workdir / "corpus.txt"),
              "--grid", str(empty)])
