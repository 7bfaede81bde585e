import json
import zipfile

import pytest

from phrasebreak import cli
from phrasebreak.corpus import read_corpus, write_corpus
from phrasebreak.model import rule_based_predict

import synth


def run(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_alignment(path, blocks):
    lines = []
    for utt_id, words in blocks:
        lines.append(f"# id={utt_id}")
        for surface, start, end in words:
            lines.append(f"{surface}\t{start}\t{end}")
        lines.append("")
    path.write_text("\n".join(lines), encoding="utf-8")


def corpus_dir_with_split(tmp_path, size=30, seed=88):
    utterances, _ = synth.synthetic_corpus(size, seed=seed)
    n_train = size - 10
    directory = tmp_path / "corpus"
    directory.mkdir()
    write_corpus(utterances[:n_train], directory / "train.tsv")
    write_corpus(utterances[n_train : n_train + 5], directory / "validation.tsv")
    write_corpus(utterances[n_train + 5 :], directory / "test.tsv")
    return directory, utterances


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------


def test_corpus_from_alignment_thresholds(tmp_path, capsys):
    src = tmp_path / "aligned.txt"
    write_alignment(src, [("a1", [("今日", 0, 400), ("晴れ", 700, 1100)])])

    out = tmp_path / "out"
    code, stdout, _ = run(
        ["corpus", "--in", str(src), "--out", str(out)], capsys
    )
    assert code == 0
    assert "utterances=1 tokens=2 breaks=1" in stdout
    [utt] = read_corpus(out / "corpus.tsv")
    assert list(utt.labels) == [1, 0]  # 300 ms silence > default 200

    code, _, _ = run(
        ["corpus", "--in", str(src), "--out", str(tmp_path / "out2"), "--threshold-ms", "400"],
        capsys,
    )
    assert code == 0
    [utt] = read_corpus(tmp_path / "out2" / "corpus.tsv")
    assert list(utt.labels) == [0, 0]


def test_corpus_split_writes_partition(tmp_path, capsys):
    src = tmp_path / "aligned.txt"
    blocks = [
        (f"u{i}", [("犬", 0, 100), ("が", 120, 200), ("走る", 500, 800)])
        for i in range(6)
    ]
    write_alignment(src, blocks)
    out = tmp_path / "built"
    code, stdout, _ = run(
        ["corpus", "--in", str(src), "--out", str(out), "--split", "4,1,1", "--seed", "9"],
        capsys,
    )
    assert code == 0
    assert "split: train=4 validation=1 test=1 seed=9" in stdout
    assert len(read_corpus(out / "train.tsv")) == 4
    assert len(read_corpus(out / "validation.tsv")) == 1
    assert len(read_corpus(out / "test.tsv")) == 1
    manifest = json.loads((out / "manifest.json").read_text())
    ids = manifest["split"]["ids"]
    assert sorted(ids["train"] + ids["validation"] + ids["test"]) == sorted(
        b[0] for b in blocks
    )
    assert manifest["annotator"]


def test_corpus_missing_input_is_usage_error(tmp_path, capsys):
    code, _, stderr = run(
        ["corpus", "--in", str(tmp_path / "nope.txt"), "--out", str(tmp_path / "o")], capsys
    )
    assert code == 2
    assert "not found" in stderr


def test_corpus_tsv_passthrough_is_bit_exact(tmp_path, capsys):
    utterances, _ = synth.synthetic_corpus(5, seed=4)
    src = tmp_path / "labeled.tsv"
    write_corpus(utterances, src)
    out = tmp_path / "rebuilt"
    code, _, _ = run(
        ["corpus", "--in", str(src), "--out", str(out), "--format", "tsv"], capsys
    )
    assert code == 0
    assert (out / "corpus.tsv").read_bytes() == src.read_bytes()


def test_corpus_bad_alignment_line_reports_location(tmp_path, capsys):
    src = tmp_path / "aligned.txt"
    src.write_text("# id=a\n今日\t0\n", encoding="utf-8")
    code, _, stderr = run(
        ["corpus", "--in", str(src), "--out", str(tmp_path / "o")], capsys
    )
    assert code == 1
    assert ":2:" in stderr


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One quick real training run shared by the predict/eval tests."""
    tmp_path = tmp_path_factory.mktemp("trained")
    directory, utterances = corpus_dir_with_split(tmp_path)
    out = tmp_path / "run"
    code = cli.main(
        [
            "train", "--system", "bilstm-tokens",
            "--corpus", str(directory), "--out", str(out),
            "--lr", "2e-3", "--batch-size", "8",
            "--max-epochs", "2", "--patience", "2",
            "--classifier-hidden", "16", "--seed", "1",
        ]
    )
    assert code == 0
    return directory, out, utterances


def test_train_writes_artifacts(trained, capsys):
    _, out, _ = trained
    assert (out / "checkpoint.zip").is_file()
    assert (out / "train_report.txt").read_text().count("epoch=") == 2
    report = json.loads((out / "train_report.json").read_text())
    assert report["best_epoch"] in (1, 2)
    assert len(report["epochs"]) == 2


def test_train_rule_based_is_rejected(capsys):
    with pytest.raises(SystemExit) as err:
        cli.main(["train", "--system", "rule-based", "--corpus", "x", "--out", "y"])
    assert err.value.code == 2
    assert "rule-based requires no training" in capsys.readouterr().err


def test_train_unknown_system_is_rejected(capsys):
    with pytest.raises(SystemExit) as err:
        cli.main(["train", "--system", "transformer-xl", "--corpus", "x", "--out", "y"])
    assert err.value.code == 2


def test_train_lm_system_requires_lm_flag(tmp_path, capsys):
    directory, _ = corpus_dir_with_split(tmp_path, size=12)
    code, _, stderr = run(
        ["train", "--system", "lm", "--corpus", str(directory), "--out", str(tmp_path / "o")],
        capsys,
    )
    assert code == 2
    assert "--lm" in stderr


def test_train_missing_corpus_dir(tmp_path, capsys):
    code, _, stderr = run(
        [
            "train", "--system", "bilstm-tokens",
            "--corpus", str(tmp_path / "missing"), "--out", str(tmp_path / "o"),
        ],
        capsys,
    )
    assert code == 2
    assert "corpus directory" in stderr


def test_train_config_file_defaults_and_flag_override(tmp_path, capsys):
    directory, _ = corpus_dir_with_split(tmp_path, size=14, seed=6)
    config = tmp_path / "train.cfg"
    config.write_text(
        "# defaults for smoke training\n"
        "lr = 2e-3\n"
        "batch-size = 8\n"
        "max-epochs = 3\n"
        "patience = 3\n"
        "classifier-hidden = 16\n",
        encoding="utf-8",
    )
    out = tmp_path / "o1"
    code, _, _ = run(
        [
            "train", "--system", "bilstm-tokens", "--corpus", str(directory),
            "--out", str(out), "--config", str(config),
        ],
        capsys,
    )
    assert code == 0
    assert json.loads((out / "train_report.json").read_text())["epochs"][-1]["epoch"] == 3

    # explicit flag beats the config value
    out2 = tmp_path / "o2"
    code, _, _ = run(
        [
            "train", "--system", "bilstm-tokens", "--corpus", str(directory),
            "--out", str(out2), "--config", str(config), "--max-epochs", "1", "--patience", "1",
        ],
        capsys,
    )
    assert code == 0
    assert len(json.loads((out2 / "train_report.json").read_text())["epochs"]) == 1


def test_config_unknown_key_is_usage_error(tmp_path, capsys):
    directory, _ = corpus_dir_with_split(tmp_path, size=12, seed=7)
    config = tmp_path / "bad.cfg"
    config.write_text("learning-rate = 0.1\n", encoding="utf-8")
    code, _, stderr = run(
        [
            "train", "--system", "bilstm-tokens", "--corpus", str(directory),
            "--out", str(tmp_path / "o"), "--config", str(config),
        ],
        capsys,
    )
    assert code == 2
    assert "unknown config key" in stderr


def test_config_malformed_line_is_usage_error(tmp_path, capsys):
    config = tmp_path / "bad.cfg"
    config.write_text("just some words\n", encoding="utf-8")
    code, _, stderr = run(
        [
            "train", "--system", "bilstm-tokens", "--corpus", str(tmp_path),
            "--out", str(tmp_path / "o"), "--config", str(config),
        ],
        capsys,
    )
    assert code == 2
    assert "key=value" in stderr


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------


def test_predict_rule_based_markup(tmp_path, capsys):
    src = tmp_path / "input.txt"
    src.write_text("今日は、晴れ。\n", encoding="utf-8")
    code, stdout, _ = run(
        ["predict", "--system", "rule-based", "--in", str(src)], capsys
    )
    assert code == 0
    assert stdout == "今日 は 、<pause/> 晴れ 。\n"


def test_predict_empty_input(tmp_path, capsys):
    src = tmp_path / "empty.txt"
    src.write_text("", encoding="utf-8")
    code, stdout, _ = run(
        ["predict", "--system", "rule-based", "--in", str(src)], capsys
    )
    assert code == 0
    assert stdout == ""


def test_predict_tsv_output_appends_label_column(tmp_path, capsys):
    utterances, _ = synth.synthetic_corpus(4, seed=13)
    src = tmp_path / "gold.tsv"
    write_corpus(utterances, src)
    out = tmp_path / "pred.tsv"
    code, _, _ = run(
        [
            "predict", "--system", "rule-based", "--in", str(src),
            "--format", "tsv", "--out", str(out),
        ],
        capsys,
    )
    assert code == 0
    predicted = cli.read_predicted_labels(out)
    for utt in utterances:
        surfaces, labels = predicted[utt.id]
        assert surfaces == [t.surface for t in utt.tokens]
        assert labels == list(rule_based_predict(utt.tokens).labels)
    # gold column is preserved next to the appended prediction
    first_token_line = out.read_text(encoding="utf-8").splitlines()[1]
    assert len(first_token_line.split("\t")) == 6


def test_predict_from_checkpoint(trained, tmp_path, capsys):
    directory, out, utterances = trained
    src = tmp_path / "batch.tsv"
    write_corpus(utterances[-5:], src)
    dest = tmp_path / "pred.tsv"
    code, _, _ = run(
        [
            "predict", "--checkpoint", str(out / "checkpoint.zip"),
            "--in", str(src), "--format", "tsv", "--out", str(dest),
        ],
        capsys,
    )
    assert code == 0
    predicted = cli.read_predicted_labels(dest)
    assert len(predicted) == 5
    for utt in utterances[-5:]:
        surfaces, labels = predicted[utt.id]
        assert len(labels) == len(utt.tokens)
        assert set(labels) <= {0, 1}


def tampered_checkpoint(source, dest):
    with zipfile.ZipFile(source) as src, zipfile.ZipFile(dest, "w") as out:
        for name in src.namelist():
            data = src.read(name)
            if name == "fingerprints.json":
                prints = json.loads(data)
                prints["annotator"] = "someone-else/9.9"
                data = json.dumps(prints).encode("utf-8")
            out.writestr(name, data)
    return dest


def test_predict_strict_rejects_annotator_mismatch(trained, tmp_path, capsys):
    _, out, _ = trained
    bad = tampered_checkpoint(out / "checkpoint.zip", tmp_path / "bad.zip")
    src = tmp_path / "input.txt"
    src.write_text("今日は、晴れ。\n", encoding="utf-8")
    code, _, stderr = run(
        ["predict", "--checkpoint", str(bad), "--in", str(src), "--strict"], capsys
    )
    assert code == 1
    assert "annotator" in stderr

    # lenient mode only warns
    with pytest.warns(UserWarning):
        code = cli.main(["predict", "--checkpoint", str(bad), "--in", str(src)])
    assert code == 0
    capsys.readouterr()


def test_predict_missing_checkpoint(tmp_path, capsys):
    src = tmp_path / "input.txt"
    src.write_text("今日は、晴れ。\n", encoding="utf-8")
    code, _, stderr = run(
        ["predict", "--checkpoint", str(tmp_path / "none.zip"), "--in", str(src)], capsys
    )
    assert code == 2
    assert "checkpoint" in stderr


def test_detect_input_format():
    assert cli.detect_input_format("# id=u1\n犬\t名詞\t-1\troot\n") == "tsv"
    assert cli.detect_input_format("今日は晴れ。\n") == "text"
    assert cli.detect_input_format("") == "text"


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def test_eval_pred_and_checkpoint_agree(trained, tmp_path, capsys):
    directory, out, utterances = trained
    gold = tmp_path / "gold.tsv"
    write_corpus(utterances[-5:], gold)

    pred = tmp_path / "pred.tsv"
    assert cli.main(
        [
            "predict", "--checkpoint", str(out / "checkpoint.zip"),
            "--in", str(gold), "--format", "tsv", "--out", str(pred),
        ]
    ) == 0

    dir_a = tmp_path / "via_pred"
    code, stdout, _ = run(
        ["eval", "--pred", str(pred), "--gold", str(gold), "--out", str(dir_a)], capsys
    )
    assert code == 0
    assert "== overall ==" in stdout
    assert "with punctuation" in stdout

    dir_b = tmp_path / "via_ckpt"
    code, _, _ = run(
        [
            "eval", "--checkpoint", str(out / "checkpoint.zip"),
            "--gold", str(gold), "--out", str(dir_b),
        ],
        capsys,
    )
    assert code == 0
    report_a = json.loads((dir_a / "report.json").read_text())
    report_b = json.loads((dir_b / "report.json").read_text())
    assert report_a == report_b
    assert (dir_a / "report.txt").is_file()


def test_eval_misaligned_predictions_name_the_utterance(tmp_path, capsys):
    utterances, _ = synth.synthetic_corpus(2, seed=21)
    gold = tmp_path / "gold.tsv"
    write_corpus(utterances, gold)
    pred = tmp_path / "pred.tsv"
    lines = []
    for utt in utterances:
        lines.append(f"# id={utt.id}")
        for token in utt.tokens:
            lines.append(f"{token.surface}x\t0")
        lines.append("")
    pred.write_text("\n".join(lines), encoding="utf-8")
    code, _, stderr = run(["eval", "--pred", str(pred), "--gold", str(gold)], capsys)
    assert code == 1
    assert utterances[0].id in stderr
    assert "align" in stderr


def test_eval_missing_utterance(tmp_path, capsys):
    utterances, _ = synth.synthetic_corpus(2, seed=22)
    gold = tmp_path / "gold.tsv"
    write_corpus(utterances, gold)
    pred = tmp_path / "pred.tsv"
    lines = [f"# id={utterances[0].id}"]
    lines += [f"{t.surface}\t0" for t in utterances[0].tokens]
    pred.write_text("\n".join(lines) + "\n", encoding="utf-8")
    code, _, stderr = run(["eval", "--pred", str(pred), "--gold", str(gold)], capsys)
    assert code == 1
    assert utterances[1].id in stderr


def test_eval_rule_based_round_trip_matches_library(tmp_path, capsys):
    from phrasebreak.evaluator import evaluate_system, report_to_dict

    utterances, _ = synth.synthetic_corpus(10, seed=23)
    gold = tmp_path / "gold.tsv"
    write_corpus(utterances, gold)
    pred = tmp_path / "pred.tsv"
    assert cli.main(
        [
            "predict", "--system", "rule-based", "--in", str(gold),
            "--format", "tsv", "--out", str(pred),
        ]
    ) == 0
    out = tmp_path / "report"
    code, _, _ = run(["eval", "--pred", str(pred), "--gold", str(gold), "--out", str(out)], capsys)
    assert code == 0
    expected = report_to_dict(
        evaluate_system(lambda u: list(rule_based_predict(u.tokens).labels), utterances)
    )
    assert json.loads((out / "report.json").read_text()) == expected
