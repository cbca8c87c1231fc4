import json
import sys

import numpy as np
import pytest

from seqattrib.cli import main
from seqattrib.report import render_report
from seqattrib.core import AttributionMatrix
from seqattrib.toymodel import make_toy_corpus, make_toy_instance, toy_generate

from conftest import make_instance


@pytest.fixture
def toy_instance_file(tmp_path):
    spec = toy_generate(13, d=4, T=2, V=4)
    inst = make_toy_instance(spec, seed=13, name="cli-toy")
    path = tmp_path / "instance.json"
    path.write_text(json.dumps(inst.to_dict()))
    return path


@pytest.fixture
def corpus_file(tmp_path):
    path = tmp_path / "corpus.jsonl"
    lines = [json.dumps(i.to_dict()) for i in make_toy_corpus(seed=42, n=5)]
    path.write_text("\n".join(lines) + "\n")
    return path


class TestExplainCommand:
    def test_writes_json_and_html(self, toy_instance_file, tmp_path):
        out = tmp_path / "phi.json"
        html = tmp_path / "phi.html"
        rc = main(
            [
                "explain",
                "--instance", str(toy_instance_file),
                "--method", "lerg_s",
                "--samples", "200",
                "--seed", "42",
                "--toy",
                "--out", str(out),
                "--html", str(html),
            ]
        )
        assert rc == 0
        payload = json.loads(out.read_text())
        assert payload["method"] == "lerg_s"
        assert payload["seed"] == 42
        assert len(payload["phi"]) == 4
        assert "manifest" in payload
        doc = html.read_text()
        assert "<html" in doc and "run-manifest" in doc
        assert "http://" not in doc and "https://" not in doc  # self-contained

    def test_invalid_instance_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"input_tokens": []}')
        rc = main(["explain", "--instance", str(bad), "--method", "lime", "--toy"])
        assert rc == 2

    def test_unknown_method_exit_2(self, toy_instance_file):
        rc = main(
            ["explain", "--instance", str(toy_instance_file), "--method", "nope", "--toy"]
        )
        assert rc == 2

    def test_unreachable_bridge_exit_3(self, toy_instance_file, monkeypatch):
        monkeypatch.delenv("SEQATTRIB_BRIDGE_CMD", raising=False)
        rc = main(
            ["explain", "--instance", str(toy_instance_file), "--method", "lime"]
        )
        assert rc == 3

    def test_attention_without_support_exit_3(self, toy_instance_file, tmp_path):
        bridge = tmp_path / "noattn.py"
        bridge.write_text(
            "import json,sys\n"
            'print(json.dumps({"type":"hello","mask_token":"<mask>","supports_attention":False,"max_batch":8}),flush=True)\n'
            "for line in sys.stdin:\n"
            "    m=json.loads(line)\n"
            '    print(json.dumps({"type":"error","id":m.get("id"),"message":"attention not supported"}),flush=True)\n'
        )
        rc = main(
            [
                "explain",
                "--instance", str(toy_instance_file),
                "--method", "attention",
                "--bridge-cmd", f"{sys.executable} {bridge}",
            ]
        )
        assert rc == 3


class TestEvaluateCommand:
    def test_row_count_contract(self, corpus_file, tmp_path):
        out_dir = tmp_path / "eval"
        rc = main(
            [
                "evaluate",
                "--corpus", str(corpus_file),
                "--methods", "lime,kernel_shap,lerg_s,lerg_l,attention",
                "--k", "5,10,20,30,40,50",
                "--samples", "24",
                "--toy",
                "--out-dir", str(out_dir),
            ]
        )
        assert rc == 0
        lines = (out_dir / "curves.csv").read_text().splitlines()
        assert lines[0].startswith("# manifest:")
        assert lines[1] == "method,K,mean_sufficiency_ppl,mean_necessity_delta_ppl,n_instances"
        assert len(lines) == 2 + 5 * 6

    def test_unknown_method_lists_valid(self, corpus_file, tmp_path, capsys):
        rc = main(
            [
                "evaluate",
                "--corpus", str(corpus_file),
                "--methods", "limee",
                "--toy",
                "--out-dir", str(tmp_path / "x"),
            ]
        )
        assert rc == 2
        err = capsys.readouterr().err
        assert "lerg_s" in err and "kernel_shap" in err

    def test_byte_identical_reruns(self, corpus_file, tmp_path):
        args = [
            "evaluate",
            "--corpus", str(corpus_file),
            "--methods", "lime,attention",
            "--samples", "16",
            "--seed", "42",
            "--toy",
        ]
        assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
        assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "curves.csv").read_bytes() == (
            tmp_path / "b" / "curves.csv"
        ).read_bytes()

    def test_empty_corpus_exit_2(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        rc = main(
            ["evaluate", "--corpus", str(empty), "--methods", "lime", "--toy",
             "--out-dir", str(tmp_path / "out")]
        )
        assert rc == 2


class TestBridgeCheckCommand:
    def test_builtin_toy_bridge_passes(self, capsys):
        rc = main(
            ["bridge-check", "--bridge-cmd", f"{sys.executable} -m seqattrib.toy_bridge"]
        )
        out = capsys.readouterr().out
        assert rc == 0
        assert "FAIL" not in out and "PASS" in out

    def test_positive_logprob_bridge_fails(self, tmp_path, capsys):
        bridge = tmp_path / "pos.py"
        bridge.write_text(
            "import json,sys\n"
            'print(json.dumps({"type":"hello","mask_token":"<m>","supports_attention":False,"max_batch":8}),flush=True)\n'
            "for line in sys.stdin:\n"
            "    m=json.loads(line)\n"
            '    print(json.dumps({"type":"score_result","id":m["id"],"logprobs":[0.2]*len(m["output_tokens"])}),flush=True)\n'
        )
        rc = main(["bridge-check", "--bridge-cmd", f"{sys.executable} {bridge}"])
        assert rc == 1
        assert "FAIL" in capsys.readouterr().out

    def test_truncating_bridge_fails(self, tmp_path, capsys):
        bridge = tmp_path / "short.py"
        bridge.write_text(
            "import json,sys\n"
            'print(json.dumps({"type":"hello","mask_token":"<m>","supports_attention":False,"max_batch":8}),flush=True)\n'
            "for line in sys.stdin:\n"
            "    m=json.loads(line)\n"
            '    print(json.dumps({"type":"score_result","id":m["id"],"logprobs":[-1.0]}),flush=True)\n'
        )
        rc = main(["bridge-check", "--bridge-cmd", f"{sys.executable} {bridge}"])
        assert rc == 1


class TestMakeCorpus:
    def test_writes_corpus(self, tmp_path):
        out = tmp_path / "corpus.jsonl"
        rc = main(["make-corpus", "--out", str(out), "--seed", "42", "--n", "20"])
        assert rc == 0
        assert len(out.read_text().splitlines()) == 20


class TestHtmlReport:
    def test_all_zero_phi_renders_without_color(self):
        inst = make_instance(3, ("A",))
        matrix = AttributionMatrix(np.zeros((3, 1)), "lime", 0)
        doc = render_report(inst, matrix)
        assert "rgba" not in doc  # max|phi| = 0: every token uncolored

    def test_polarity_classes(self):
        inst = make_instance(2, ("A",))
        matrix = AttributionMatrix(np.array([[1.0], [-1.0]]), "lime", 0)
        doc = render_report(inst, matrix)
        assert "rgba(59, 118, 229, 1.000)" in doc  # positive: blue, full opacity
        assert "rgba(220, 53, 53, 1.000)" in doc  # negative: red, full opacity
