"""Command-line entry point.

Exit codes: 0 success, 2 bad input or usage, 3 numerical failure (including
a failed gradient check).
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .analysis import DEFAULT_MIN_COPY_LEN, analyze_document, tree_depth, leaf_proportion, tree_depth_stats
from .errors import NumericalError, ValidationError
from .graph import (
    DEFAULT_EPSILON,
    build_coref_counts,
    build_ner_counts,
    edge_precision_recall,
    merge_counts,
    normalize_adjacency,
)
from .gradcheck import COMPONENTS, gradient_check
from .io import load_corpus, load_tensors, save_tensors, write_report
from .scorer import ScorerParams, score_edges
from .trainer import TrainConfig, train
from .trees import Arborescence, EdgeScores, cle_decode, marginals

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
TOOL = "docstruct"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(f"{self.prog}: {message}")


def _pmap(fn, items, jobs):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _header(command, config):
    return {"tool": TOOL, "version": __version__, "command": command, "config": config}


def _tree_dict(tree):
    return {"root": tree.root, "parent": list(tree.parent)}


# -- score sources -------------------------------------------------------------

def _score_source(args):
    """Return a function doc -> EdgeScores based on --params/--scores flags."""
    if getattr(args, "params", None) and getattr(args, "scores", None):
        raise ValidationError("--params and --scores are mutually exclusive")
    if getattr(args, "params", None):
        params = ScorerParams.from_named(load_tensors(args.params))

        def from_params(doc):
            if doc.structure_vectors is None:
                raise ValidationError(f"document {doc.id!r} has no structure_vectors to score")
            return score_edges(np.array(doc.structure_vectors), params)
        return from_params
    if getattr(args, "scores", None):
        table = {}
        with open(args.scores, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    table[str(rec["id"])] = EdgeScores(rec["f"], rec["r"])
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ValidationError(f"{args.scores}:{lineno}: bad score record ({exc})") from None

        def from_table(doc):
            if doc.id not in table:
                raise ValidationError(f"no scores for document {doc.id!r}")
            s = table[doc.id]
            if s.n != doc.n_sentences:
                raise ValidationError(f"scores for {doc.id!r} cover {s.n} sentences, document has {doc.n_sentences}")
            return s
        return from_table
    return lambda doc: EdgeScores.zeros(doc.n_sentences)


# -- commands ------------------------------------------------------------------

def cmd_induce(args):
    docs = load_corpus(args.corpus)
    scorer = _score_source(args)

    def one(doc):
        s = scorer(doc)
        m = marginals(s)
        tree = cle_decode(s)
        entry = {
            "id": doc.id,
            "n_sentences": doc.n_sentences,
            "logZ": m.logZ,
            "root_probabilities": m.a_root,
            "tree": _tree_dict(tree),
            "depth": tree_depth(tree),
            "leaf_proportion": leaf_proportion(tree),
        }
        if args.include_marginals:
            entry["marginals"] = m.a
        return entry, tree

    results = _pmap(one, docs, args.jobs)
    stats = tree_depth_stats([t for _, t in results])
    report = _header("induce", {"seed": args.seed, "source": "params" if args.params else
                                "scores" if args.scores else "uniform"})
    report["documents"] = [e for e, _ in results]
    report["aggregate"] = {
        "n_documents": len(docs),
        "depth_histogram": stats.depth_histogram,
        "mean_depth": stats.mean_depth,
        "leaf_proportion": stats.leaf_proportion,
        "empty": not docs,
    }
    return report


def _graph_for(doc, kind):
    if kind == "coref":
        return build_coref_counts(doc)
    if kind == "ner":
        return build_ner_counts(doc)
    return merge_counts(build_coref_counts(doc), build_ner_counts(doc))


def _graph_kind(args):
    if getattr(args, "merge", False):
        return "both"
    if getattr(args, "use_ner", False):
        return "ner"
    return getattr(args, "graph", None) or "coref"


def cmd_graph(args):
    docs = load_corpus(args.corpus)
    kind = _graph_kind(args)

    def one(doc):
        g = _graph_for(doc, kind)
        entry = {"id": doc.id, "n_sentences": doc.n_sentences, "n_edges": len(g.edges()), "counts": g.counts}
        if doc.n_sentences >= 2:
            entry["k"] = normalize_adjacency(g, args.epsilon).k
        else:
            entry["k"] = None
            entry["degenerate"] = True
        return entry

    entries = _pmap(one, docs, args.jobs)
    report = _header("graph", {"seed": args.seed, "epsilon": args.epsilon, "graph": kind})
    report["documents"] = entries
    n_edges = [e["n_edges"] for e in entries]
    report["aggregate"] = {
        "n_documents": len(docs),
        "mean_edges": sum(n_edges) / len(n_edges) if n_edges else 0.0,
        "empty": not docs,
    }
    return report


def _mean(values):
    values = [v for v in values if v is not None]
    return sum(values) / len(values) if values else None


def cmd_analyze(args):
    docs = load_corpus(args.corpus)
    try:
        n_values = tuple(int(x) for x in args.ngrams.split(",") if x.strip())
    except ValueError:
        raise ValidationError(f"--ngrams must be a comma-separated list of integers, got {args.ngrams!r}") from None
    if not n_values or min(n_values) < 1:
        raise ValidationError("--ngrams needs positive orders")

    def one(doc):
        return doc, analyze_document(doc, args.summary, args.min_copy_len, n_values)

    entries = []
    reports = []
    for doc, rep in _pmap(one, docs, args.jobs):
        if rep is None:
            entries.append({"id": doc.id, "skipped": f"no {args.summary} summary"})
            continue
        reports.append(rep)
        entries.append({
            "id": doc.id,
            "summary_length": rep.summary_length,
            "n_copied_spans": rep.n_copied_spans,
            "mean_copy_length": rep.mean_copy_length,
            "sentence_coverage": rep.sentence_coverage,
            "layout_histogram": rep.layout_histogram,
            "novel_ngram_rate": {str(n): rep.novel_ngram_rate[n] for n in n_values},
            "novel_sentence_rate": rep.novel_sentence_rate,
            "rouge": {k: {"precision": v.precision, "recall": v.recall, "f1": v.f1}
                      for k, v in rep.rouge.items()},
        })
    report = _header("analyze", {"seed": args.seed, "min_copy_len": args.min_copy_len,
                                 "ngrams": list(n_values), "summary": args.summary})
    report["documents"] = entries
    report["aggregate"] = _aggregate_metrics(reports, n_values)
    return report


def _aggregate_metrics(reports, n_values):
    spans = sum(r.n_copied_spans for r in reports)
    width = max((len(r.layout_histogram) for r in reports), default=0)
    layout = [0.0] * width
    for r in reports:
        for k, w in enumerate(r.layout_histogram):
            layout[k] += w * r.n_copied_spans
    agg = {
        "n_documents": len(reports),
        "empty": not reports,
        "n_copied_spans": spans,
        "mean_copy_length": sum(r.mean_copy_length * r.n_copied_spans for r in reports) / spans if spans else 0.0,
        "sentence_coverage": _mean([r.sentence_coverage for r in reports]),
        "layout_histogram": [x / spans for x in layout] if spans else [],
        "mean_summary_length": _mean([r.summary_length for r in reports]),
        "novel_ngram_rate": {str(n): _mean([r.novel_ngram_rate[n] for r in reports]) for n in n_values},
        "novel_sentence_rate": _mean([r.novel_sentence_rate for r in reports]),
        "rouge": {},
    }
    for key in ("rouge-1", "rouge-2", "rouge-l"):
        vals = [r.rouge[key] for r in reports if key in r.rouge]
        if vals:
            agg["rouge"][key] = {
                "precision": _mean([v.precision for v in vals]),
                "recall": _mean([v.recall for v in vals]),
                "f1": _mean([v.f1 for v in vals]),
            }
    return agg


def _load_trees(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
        records = obj["documents"] if isinstance(obj, dict) and "documents" in obj else [obj]
    except json.JSONDecodeError:
        try:
            records = [json.loads(line) for line in text.splitlines() if line.strip()]
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: malformed trees file ({exc})") from None
    out = {}
    for rec in records:
        try:
            t = rec.get("tree", rec)
            out[str(rec["id"])] = Arborescence.from_parents(t["parent"])
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValidationError(f"{path}: bad tree record ({exc})") from None
    return out


def cmd_compare(args):
    docs = load_corpus(args.corpus)
    kind = _graph_kind(args)
    if args.trees:
        table = _load_trees(args.trees)

        def tree_for(doc):
            if doc.id not in table:
                raise ValidationError(f"no tree for document {doc.id!r}")
            return table[doc.id]
    else:
        scorer = _score_source(args)

        def tree_for(doc):
            return cle_decode(scorer(doc))

    def one(doc):
        tree = tree_for(doc)
        ov = edge_precision_recall(tree, _graph_for(doc, kind))
        return {
            "id": doc.id,
            "tree": _tree_dict(tree),
            "precision": ov.precision,
            "recall": ov.recall,
            "precision_defined": ov.precision_defined,
            "recall_defined": ov.recall_defined,
            "n_tree_edges": ov.n_tree_edges,
            "n_graph_edges": ov.n_graph_edges,
            "n_shared": ov.n_shared,
        }

    entries = _pmap(one, docs, args.jobs)
    report = _header("compare", {"seed": args.seed, "graph": kind})
    report["documents"] = entries
    report["aggregate"] = {
        "n_documents": len(docs),
        "empty": not docs,
        "precision": _mean([e["precision"] for e in entries if e["precision_defined"]]),
        "recall": _mean([e["recall"] for e in entries if e["recall_defined"]]),
    }
    return report


def cmd_train(args):
    cfg = TrainConfig(
        n_docs=args.n_docs, n_sentences=args.n_sentences,
        d_struct=args.d_struct or 2 * (args.n_sentences + args.n_sentences),
        noise_sigma=args.noise_sigma, lr=args.lr, accumulator_init=args.accumulator_init,
        epochs=args.epochs, seed=args.seed, clip_norm=args.clip_norm,
    )
    result = train(cfg)
    if args.params_out:
        save_tensors(result.params.named(), args.params_out)
    report = _header("train", cfg.as_dict())
    report["aggregate"] = {
        "initial_loss": result.initial_loss,
        "final_loss": result.final_loss,
        "loss_ratio": result.final_loss / result.initial_loss,
        "initial_uas": result.initial_uas,
        "final_uas": result.final_uas,
    }
    report["loss_trace"] = list(result.losses)
    return report


def cmd_gradcheck(args):
    components = COMPONENTS if args.component == "all" else (args.component,)
    checks = []
    for comp in components:
        modes = ("children", "literal") if comp == "fusion" and args.child_mode == "both" else (
            (args.child_mode if comp == "fusion" else "children"),)
        for mode in modes:
            for k in range(args.trials):
                rep = gradient_check(comp, seed=args.seed + k, tol=args.tol, child_mode=mode)
                checks.append({
                    "component": rep.component, "seed": rep.seed, "max_rel_error": rep.max_rel_error,
                    "worst": rep.worst, "n_checked": rep.n_checked, "passed": rep.passed,
                })
    report = _header("gradcheck", {"seed": args.seed, "tol": args.tol, "trials": args.trials,
                                   "component": args.component, "child_mode": args.child_mode})
    report["checks"] = checks
    report["aggregate"] = {
        "max_rel_error": max(c["max_rel_error"] for c in checks),
        "passed": all(c["passed"] for c in checks),
    }
    return report


# -- parser ----------------------------------------------------------------------

def build_parser():
    p = _Parser(prog=TOOL, description="Sentence-structure induction and summary analysis.")
    p.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("-o", "--output", default="-", help="report destination (default stdout)")
        sp.add_argument("--format", choices=("json", "text"), default="json")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--jobs", type=int, default=1, help="worker threads; output order is fixed")
        sp.add_argument("-v", "--verbose", action="store_true")

    def scoring(sp):
        sp.add_argument("--params", help="scorer parameter file (uses documents' structure_vectors)")
        sp.add_argument("--scores", help="JSONL of {id, f, r} raw edge/root scores")

    sp = sub.add_parser("induce", help="tree marginals, decoded trees and depth statistics")
    sp.add_argument("corpus")
    scoring(sp)
    sp.add_argument("--include-marginals", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_induce)

    sp = sub.add_parser("graph", help="coreference/entity sentence graphs and normalized adjacency")
    sp.add_argument("corpus")
    sp.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    sp.add_argument("--use-ner", action="store_true", help="entity graph instead of coreference")
    sp.add_argument("--merge", action="store_true", help="sum coreference and entity graphs")
    common(sp)
    sp.set_defaults(func=cmd_graph)

    sp = sub.add_parser("analyze", help="copying, coverage, layout, novelty and ROUGE")
    sp.add_argument("corpus")
    sp.add_argument("--min-copy-len", type=int, default=DEFAULT_MIN_COPY_LEN)
    sp.add_argument("--ngrams", default="1,2,3,4")
    sp.add_argument("--summary", choices=("generated", "reference"), default="generated")
    common(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("compare", help="edge precision/recall of trees against explicit graphs")
    sp.add_argument("corpus")
    sp.add_argument("--trees", help="induce report or JSONL of {id, parent}")
    scoring(sp)
    sp.add_argument("--graph", choices=("coref", "ner", "both"), default="coref")
    sp.add_argument("--use-ner", action="store_true")
    sp.add_argument("--merge", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("train", help="planted-tree recovery with the bilinear scorer")
    sp.add_argument("--n-docs", type=int, default=200)
    sp.add_argument("--n-sentences", type=int, default=8)
    sp.add_argument("--d-struct", type=int, default=0, help="default 2*(2*n_sentences)")
    sp.add_argument("--noise-sigma", type=float, default=0.1)
    sp.add_argument("--lr", type=float, default=0.15)
    sp.add_argument("--accumulator-init", type=float, default=0.1)
    sp.add_argument("--epochs", type=int, default=300)
    sp.add_argument("--clip-norm", type=float, default=2.0)
    sp.add_argument("--params-out")
    common(sp)
    sp.set_defaults(func=cmd_train, seed=17)

    sp = sub.add_parser("gradcheck", help="finite-difference check of analytic gradients")
    sp.add_argument("--component", choices=COMPONENTS + ("all",), default="all")
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.add_argument("--trials", type=int, default=1)
    sp.add_argument("--child-mode", choices=("children", "literal", "both"), default="both")
    common(sp)
    sp.set_defaults(func=cmd_gradcheck)
    return p


def _text_summary(report):
    lines = [f"{report['tool']} {report['version']} {report['command']}"]
    for key, value in report.get("aggregate", {}).items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        lines.append(f"  {key:<22} {value}")
    return "\n".join(lines) + "\n"


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        report = args.func(args)
        if args.format == "text":
            text = _text_summary(report)
            if args.output in (None, "-"):
                sys.stdout.write(text)
            else:
                with open(args.output, "w", encoding="utf-8") as fh:
                    fh.write(text)
        else:
            write_report(report, args.output)
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.command == "gradcheck" and not report["aggregate"]["passed"]:
        return EXIT_NUMERIC
    return EXIT_OK


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
