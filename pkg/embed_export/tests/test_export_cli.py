"""Exit codes and output of the command line front end."""

import json

import pytest

from embed_export.cli import main

CORPUS = """\
#doc d1
swelling\tB
reduced\tO
#types: Physiological
pain\tB
#types: Physiological
"""


def write_corpus(tmp_path):
    path = tmp_path / "corpus.txt"
    path.write_text(CORPUS, encoding="utf-8")
    return path


class TestExportCommand:
    def test_export_then_verify(self, tmp_path, tiny_model, capsys):
        corpus = write_corpus(tmp_path)
        out = tmp_path / "vectors.jsonl"
        rc = main(["export", "--corpus", str(corpus), "--model", tiny_model,
                   "--out", str(out)])
        assert rc == 0
        assert "wrote 2 records of dimension 16" in capsys.readouterr().out
        preamble = json.loads(out.read_text().split("\n")[0])
        assert preamble == {"dim": 16}

        rc = main(["verify", "--corpus", str(corpus), "--file", str(out)])
        assert rc == 0
        assert capsys.readouterr().out.strip() == "ok"

    def test_missing_corpus(self, tmp_path, capsys):
        rc = main(["export", "--corpus", str(tmp_path / "absent.txt"),
                   "--model", "irrelevant", "--out", str(tmp_path / "o")])
        assert rc == 3
        assert "error:" in capsys.readouterr().err

    def test_malformed_corpus(self, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("#doc d\nx\n#types:\n", encoding="utf-8")
        rc = main(["export", "--corpus", str(bad), "--model", "irrelevant",
                   "--out", str(tmp_path / "o")])
        assert rc == 5
        assert "token<TAB>tag" in capsys.readouterr().err

    def test_export_error(self, tmp_path, tiny_model, capsys):
        lines = ["#doc d"] + ["pain\tO"] * 15 + ["#types:"]
        long = tmp_path / "long.txt"
        long.write_text("\n".join(lines) + "\n", encoding="utf-8")
        rc = main(["export", "--corpus", str(long), "--model", tiny_model,
                   "--out", str(tmp_path / "o")])
        assert rc == 4
        assert "split the sentence upstream" in capsys.readouterr().err

    def test_bad_layer_argument(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as err:
            main(["export", "--corpus", "c", "--model", "m", "--out", "o",
                  "--layer", "ultimate"])
        assert err.value.code == 2


class TestVerifyCommand:
    def test_mismatch_lists_offenders(self, tmp_path, capsys):
        corpus = write_corpus(tmp_path)
        vectors = tmp_path / "vectors.jsonl"
        vectors.write_text(
            json.dumps({"dim": 3}) + "\n" +
            json.dumps({"doc_id": "d1", "sentence_index": 0,
                        "vectors": [[0.1, 0.2, 0.3]] * 2}) + "\n",
            encoding="utf-8")
        rc = main(["verify", "--corpus", str(corpus), "--file", str(vectors)])
        assert rc == 1
        err = capsys.readouterr().err
        assert "missing record for document 'd1' sentence 1" in err

    def test_missing_file(self, tmp_path, capsys):
        corpus = write_corpus(tmp_path)
        rc = main(["verify", "--corpus", str(corpus),
                   "--file", str(tmp_path / "absent.jsonl")])
        assert rc == 3
        assert "error:" in capsys.readouterr().err
