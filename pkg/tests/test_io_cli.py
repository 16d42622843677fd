import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from docstruct.cli import run_cli
from docstruct.errors import ValidationError
from docstruct.io import (
    format_report,
    load_corpus,
    load_document,
    load_tensors,
    save_tensors,
    serialize_document,
    write_corpus,
    write_report,
)
from docstruct.scorer import ScorerParams


def run(args, tmp_path, name="out.json"):
    out = tmp_path / name
    code = run_cli(list(args) + ["-o", str(out)])
    return code, (json.loads(out.read_text()) if code == 0 and out.exists() else None)


# -- documents ----------------------------------------------------------------

def test_minimal_document():
    d = load_document('{"id":"d1","sentences":[{"tokens":["a"]}]}')
    assert d.n_sentences == 1 and d.coref_clusters == () and d.generated_summary is None


def test_bad_mention_names_index():
    text = json.dumps({"id": "x", "sentences": [["a"], ["b"], ["c"]],
                       "coref_clusters": [[{"sent": 5, "start": 0, "end": 1}]]})
    with pytest.raises(ValidationError, match="5"):
        load_document(text)


@pytest.mark.parametrize("text", ["{not json", '{"id": "x"}', '{"id": "x", "sentences": [[1]]}', "[]"])
def test_malformed_documents(text):
    with pytest.raises(ValidationError):
        load_document(text)


def test_unknown_fields_warn(caplog):
    with caplog.at_level(logging.WARNING):
        d = load_document('{"id":"d","sentences":[["a"]],"mood":"happy"}')
    assert d.n_sentences == 1
    assert "mood" in caplog.text


def test_corpus_round_trip(micro_corpus_path, graph_corpus_path, tmp_path):
    for path in (micro_corpus_path, graph_corpus_path):
        docs = load_corpus(path)
        write_corpus(docs, tmp_path / "rt.jsonl")
        assert load_corpus(tmp_path / "rt.jsonl") == docs


token = st.text(alphabet="abcxyz", min_size=1, max_size=4)


@st.composite
def documents(draw):
    sents = draw(st.lists(st.lists(token, min_size=1, max_size=5), min_size=1, max_size=4))
    mention = st.integers(0, len(sents) - 1).flatmap(
        lambda s: st.integers(0, len(sents[s]) - 1).map(lambda a: {"sent": s, "start": a, "end": a + 1}))
    obj = {"id": draw(token), "sentences": [{"tokens": s} for s in sents],
           "coref_clusters": draw(st.lists(st.lists(mention, min_size=1, max_size=3), max_size=3))}
    if draw(st.booleans()):
        obj["generated_summary"] = draw(st.lists(st.lists(token, min_size=1, max_size=4), min_size=1, max_size=2))
    return obj


@settings(max_examples=60, deadline=None)
@given(documents())
def test_round_trip_property(obj):
    d = load_document(json.dumps(obj))
    assert load_document(serialize_document(d)) == d


# -- parameter files ---------------------------------------------------------------

def test_param_round_trip(tmp_path):
    p = ScorerParams.init(6, seed=4)
    save_tensors(p.named(), tmp_path / "p.bin")
    back = ScorerParams.from_named(load_tensors(tmp_path / "p.bin"))
    for k, v in p.named().items():
        assert back.named()[k].tobytes() == v.tobytes()


def test_param_bad_magic_and_truncation(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"NOTMAGIC")
    with pytest.raises(ValidationError, match="magic"):
        load_tensors(tmp_path / "bad.bin")
    save_tensors({"w": np.ones((3, 3))}, tmp_path / "p.bin")
    (tmp_path / "cut.bin").write_bytes((tmp_path / "p.bin").read_bytes()[:-5])
    with pytest.raises(ValidationError, match="truncated"):
        load_tensors(tmp_path / "cut.bin")


# -- reports -------------------------------------------------------------------------

def test_report_formatting():
    text = format_report({"b": 1 / 3, "a": [np.float64(2.0), float("nan")], "z": np.int64(4), "t": True})
    assert list(json.loads(text)) == ["b", "a", "z", "t"]
    assert json.loads(text) == {"b": 0.333333, "a": [2.0, None], "z": 4, "t": True}
    assert text.endswith("\n")


def test_write_report_deterministic_and_unwritable(tmp_path):
    rep = {"x": np.arange(3) / 7}
    write_report(rep, tmp_path / "a.json")
    write_report(rep, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    with pytest.raises(ValidationError):
        write_report(rep, tmp_path / "missing" / "dir" / "r.json")


# -- CLI ---------------------------------------------------------------------------------

def test_cli_usage_errors(capsys):
    assert run_cli([]) == 2
    assert run_cli(["frobnicate"]) == 2
    assert run_cli(["graph", "x.jsonl", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_cli_version(capsys):
    assert run_cli(["--version"]) == 0


def test_cli_bad_inputs(tmp_path, micro_corpus_path):
    assert run_cli(["analyze", str(tmp_path / "nope.jsonl")]) == 2
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "sentences": [["x"]]}\n{oops\n')
    assert run_cli(["graph", str(bad)]) == 2
    assert run_cli(["analyze", str(micro_corpus_path), "--ngrams", "a,b"]) == 2
    assert run_cli(["induce", str(micro_corpus_path), "--jobs", "0"]) == 2


def test_cli_gradcheck_exit_codes(tmp_path):
    code, rep = run(["gradcheck", "--component", "mtt", "--tol", "1e-4"], tmp_path)
    assert code == 0 and rep["aggregate"]["passed"]
    # an impossible tolerance turns the check into a numerical failure
    assert run_cli(["gradcheck", "--component", "mtt", "--tol", "1e-300", "-o", str(tmp_path / "f.json")]) == 3


def test_cli_induce_single_sentence(tmp_path, graph_corpus_path):
    code, rep = run(["induce", str(graph_corpus_path), "--include-marginals"], tmp_path)
    assert code == 0
    single = rep["documents"][1]
    assert single["depth"] == 1 and single["root_probabilities"] == [1.0]
    assert single["tree"] == {"root": 0, "parent": [None]}
    three = rep["documents"][0]
    assert sum(three["root_probabilities"]) == pytest.approx(1.0, abs=1e-5)


def test_cli_induce_with_scores_and_params(tmp_path, graph_corpus_path):
    f = np.zeros((3, 3))
    f[0, 1] = f[1, 2] = 5.0
    scores = tmp_path / "s.jsonl"
    scores.write_text(json.dumps({"id": "coref3", "f": f.tolist(), "r": [5.0, 0.0, 0.0]}) + "\n"
                      + json.dumps({"id": "single", "f": [[0.0]], "r": [0.0]}) + "\n")
    code, rep = run(["induce", str(graph_corpus_path), "--scores", str(scores)], tmp_path)
    assert code == 0
    assert rep["documents"][0]["tree"]["parent"] == [None, 0, 1]
    assert rep["documents"][0]["depth"] == 3

    save_tensors(ScorerParams.init(4, seed=0).named(), tmp_path / "p.bin")
    assert run_cli(["induce", str(graph_corpus_path), "--params", str(tmp_path / "p.bin")]) == 2
    doc = {"id": "v", "sentences": [["a"], ["b"]], "structure_vectors": [[1, 0, 0, 0], [0, 1, 0, 0]]}
    corpus = tmp_path / "v.jsonl"
    corpus.write_text(json.dumps(doc) + "\n")
    code, rep = run(["induce", str(corpus), "--params", str(tmp_path / "p.bin")], tmp_path)
    assert code == 0 and rep["config"]["source"] == "params"


def test_cli_analyze_hand_values(tmp_path, micro_corpus_path):
    code, rep = run(["analyze", str(micro_corpus_path), "--min-copy-len", "4"], tmp_path)
    assert code == 0
    docs = {d["id"]: d for d in rep["documents"]}
    copy = docs["copy"]
    assert (copy["mean_copy_length"], copy["sentence_coverage"]) == (4.0, 1.0)
    assert copy["layout_histogram"] == [0.5, 0.5]
    assert f"{sum(copy['layout_histogram']):.6f}" == "1.000000"
    assert docs["catmat"]["novel_ngram_rate"]["3"] == 0.75
    assert docs["rouge1"]["rouge"]["rouge-1"]["f1"] == 0.8
    assert docs["rougel"]["rouge"]["rouge-l"]["f1"] == round(6 / 7, 6)
    assert "rouge" not in rep["aggregate"] or set(rep["aggregate"]["rouge"]) <= {"rouge-1", "rouge-2", "rouge-l"}


def test_cli_analyze_reference_skips(tmp_path, micro_corpus_path):
    code, rep = run(["analyze", str(micro_corpus_path), "--summary", "reference"], tmp_path)
    assert code == 0
    assert sum("skipped" in d for d in rep["documents"]) == 2
    assert rep["aggregate"]["n_documents"] == 2


def test_cli_empty_corpus(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    for cmd in ("induce", "graph", "analyze", "compare"):
        code, rep = run([cmd, str(empty)], tmp_path, f"{cmd}.json")
        assert code == 0
        assert rep["documents"] == [] and rep["aggregate"]["empty"] is True


def test_cli_graph(tmp_path, graph_corpus_path):
    code, rep = run(["graph", str(graph_corpus_path)], tmp_path)
    assert code == 0
    three, single = rep["documents"]
    assert three["counts"][0][1:] == [2, 1]
    assert three["k"][0][1:] == [0.666611, 0.333389]
    assert single["k"] is None and single["degenerate"]
    code, ner = run(["graph", str(graph_corpus_path), "--use-ner"], tmp_path, "ner.json")
    assert ner["config"]["graph"] == "ner"
    # Rouhani appears in all three sentences, Obama only in the first
    assert ner["documents"][0]["counts"][0][1:] == [1, 1]
    code, both = run(["graph", str(graph_corpus_path), "--merge"], tmp_path, "both.json")
    assert both["documents"][0]["counts"][0][1:] == [3, 2]


def test_cli_compare(tmp_path, graph_corpus_path):
    trees = tmp_path / "t.jsonl"
    trees.write_text('{"id": "coref3", "parent": [null, 0, 1]}\n{"id": "single", "parent": [null]}\n')
    code, rep = run(["compare", str(graph_corpus_path), "--trees", str(trees)], tmp_path)
    assert code == 0
    three, single = rep["documents"]
    # tree edges 0-1, 1-2 all lie in the coreference graph, which also has 0-2
    assert (three["precision"], three["recall"]) == (1.0, pytest.approx(2 / 3, abs=1e-6))
    assert not single["precision_defined"]
    code, rep2 = run(["induce", str(graph_corpus_path)], tmp_path, "induce.json")
    code, rep3 = run(["compare", str(graph_corpus_path), "--trees", str(tmp_path / "induce.json")], tmp_path, "c2.json")
    assert code == 0 and rep3["documents"][0]["tree"] == rep2["documents"][0]["tree"]


def test_cli_train_small(tmp_path):
    params = tmp_path / "p.bin"
    code, rep = run(["train", "--n-docs", "6", "--n-sentences", "4", "--epochs", "5",
                     "--params-out", str(params)], tmp_path)
    assert code == 0
    assert rep["config"]["seed"] == 17 and rep["config"]["d_struct"] == 16
    assert len(rep["loss_trace"]) == 6
    assert set(load_tensors(params)) == {"Fp", "Fc", "Wa", "Fr"}


def test_cli_text_format(tmp_path, micro_corpus_path, capsys):
    assert run_cli(["analyze", str(micro_corpus_path), "--format", "text"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("docstruct") and "mean_copy_length" in out


def test_cli_jobs_and_repeat_identical(tmp_path, micro_corpus_path, graph_corpus_path):
    for cmd, corpus in (("analyze", micro_corpus_path), ("graph", graph_corpus_path),
                        ("induce", graph_corpus_path), ("compare", graph_corpus_path)):
        outs = []
        for k, jobs in enumerate(("1", "4", "1")):
            path = tmp_path / f"{cmd}{k}.json"
            assert run_cli([cmd, str(corpus), "--jobs", jobs, "-o", str(path)]) == 0
            outs.append(path.read_bytes())
        assert outs[0] == outs[1] == outs[2]
