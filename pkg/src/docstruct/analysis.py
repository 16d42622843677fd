"""Copying, coverage, layout, novelty, ROUGE and tree-shape statistics.

All token comparisons are case-folded. Copied spans stay inside one source
sentence but may run across summary sentences; n-grams never cross a
sentence boundary on either side.
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .errors import ValidationError

DEFAULT_MIN_COPY_LEN = 4
DEFAULT_NGRAMS = (1, 2, 3, 4)


def _fold(tokens):
    return [t.casefold() for t in tokens]


def _flatten(sentences):
    return [t for s in sentences for t in s]


@dataclass(frozen=True)
class CopiedSpan:
    summary_start: int
    summary_end: int
    source_sentence: int
    source_offset: int

    @property
    def length(self):
        return self.summary_end - self.summary_start


def find_copied_spans(source, summary, min_len=DEFAULT_MIN_COPY_LEN):
    """Greedy longest-match copy detection.

    ``source`` is a Document (or a list of token lists) and ``summary`` a flat
    token sequence. At each summary position the longest run found verbatim
    in one source sentence is taken (earliest sentence/offset on ties); runs
    of at least ``min_len`` are emitted and skipped over, otherwise the scan
    moves one token.
    """
    if min_len < 1:
        raise ValidationError(f"min_len must be >= 1, got {min_len}")
    sents = getattr(source, "sentences", source)
    src = [_fold(s) for s in sents]
    summ = _fold(summary)
    positions = {}
    for si, sent in enumerate(src):
        for off, tok in enumerate(sent):
            positions.setdefault(tok, []).append((si, off))

    spans = []
    i = 0
    while i < len(summ):
        best_len, best_at = 0, None
        for si, off in positions.get(summ[i], ()):
            sent = src[si]
            k = 0
            while i + k < len(summ) and off + k < len(sent) and sent[off + k] == summ[i + k]:
                k += 1
            if k > best_len:
                best_len, best_at = k, (si, off)
        if best_len >= min_len:
            spans.append(CopiedSpan(i, i + best_len, best_at[0], best_at[1]))
            i += best_len
        else:
            i += 1
    return spans


@dataclass(frozen=True)
class CopyStats:
    mean_copy_length: float
    sentence_coverage: float
    layout_histogram: tuple
    has_spans: bool


def copy_stats(spans, n_sentences):
    if not spans:
        return CopyStats(0.0, 0.0, (), False)
    mean = sum(s.length for s in spans) / len(spans)
    covered = {s.source_sentence for s in spans}
    counts = [0] * n_sentences
    for s in spans:
        counts[s.source_sentence] += 1
    hist = tuple(c / len(spans) for c in counts)
    return CopyStats(mean, len(covered) / n_sentences, hist, True)


def ngrams(tokens, n):
    return [tuple(tokens[k:k + n]) for k in range(len(tokens) - n + 1)]


def _contains(seq, sub):
    m = len(sub)
    return any(seq[k:k + m] == sub for k in range(len(seq) - m + 1))


@dataclass(frozen=True)
class NoveltyRates:
    ngram: dict
    sentence: Optional[float]

    @property
    def sentence_copy_rate(self):
        return None if self.sentence is None else 1.0 - self.sentence


def novel_ngram_rates(source, summary_sentences, n_values=DEFAULT_NGRAMS):
    """Fraction of summary n-grams (with multiplicity) absent from the source.

    A rate is None when the summary has no n-grams of that order. The
    sentence rate is the fraction of summary sentences that do not occur as a
    contiguous run inside a single source sentence.
    """
    sents = [_fold(s) for s in getattr(source, "sentences", source)]
    summ = [_fold(s) for s in summary_sentences if len(s)]
    rates = {}
    for n in n_values:
        if n < 1:
            raise ValidationError(f"n-gram order must be >= 1, got {n}")
        src_grams = {g for s in sents for g in ngrams(s, n)}
        grams = [g for s in summ for g in ngrams(s, n)]
        rates[n] = sum(g not in src_grams for g in grams) / len(grams) if grams else None
    if summ:
        novel = sum(not any(_contains(s, x) for s in sents) for x in summ)
        sent_rate = novel / len(summ)
    else:
        sent_rate = None
    return NoveltyRates(rates, sent_rate)


class Rouge(NamedTuple):
    precision: float
    recall: float
    f1: float
    defined: bool = True


def _prf(overlap, n_cand, n_ref):
    p = overlap / n_cand
    r = overlap / n_ref
    return Rouge(p, r, 0.0 if p + r == 0 else 2 * p * r / (p + r))


def rouge_n(reference, candidate, n):
    if n < 1:
        raise ValidationError(f"ROUGE order must be >= 1, got {n}")
    ref = Counter(ngrams(_fold(reference), n))
    cand = Counter(ngrams(_fold(candidate), n))
    if not ref or not cand:
        return Rouge(0.0, 0.0, 0.0, defined=False)
    overlap = sum((ref & cand).values())
    return _prf(overlap, sum(cand.values()), sum(ref.values()))


def lcs_length(a, b):
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(reference, candidate):
    ref, cand = _fold(reference), _fold(candidate)
    if not ref or not cand:
        return Rouge(0.0, 0.0, 0.0, defined=False)
    return _prf(lcs_length(ref, cand), len(cand), len(ref))


@dataclass(frozen=True)
class TreeStats:
    depth_histogram: dict
    mean_depth: float
    leaf_proportion: float
    n_trees: int


def tree_depth(tree):
    return max(tree.depths())


def leaf_proportion(tree):
    kids = tree.children()
    return sum(not k for k in kids) / tree.n


def tree_depth_stats(trees):
    """Depth histogram, mean depth and mean per-tree leaf proportion."""
    trees = list(trees)
    if not trees:
        return TreeStats({}, 0.0, 0.0, 0)
    depths = [tree_depth(t) for t in trees]
    hist = Counter(depths)
    return TreeStats(
        {d: hist[d] / len(trees) for d in sorted(hist)},
        sum(depths) / len(trees),
        sum(leaf_proportion(t) for t in trees) / len(trees),
        len(trees),
    )


@dataclass
class MetricsReport:
    summary_length: int = 0
    mean_copy_length: float = 0.0
    n_copied_spans: int = 0
    sentence_coverage: float = 0.0
    layout_histogram: tuple = ()
    novel_ngram_rate: dict = field(default_factory=dict)
    novel_sentence_rate: Optional[float] = None
    rouge: dict = field(default_factory=dict)


def analyze_document(doc, summary="generated", min_copy_len=DEFAULT_MIN_COPY_LEN,
                     n_values=DEFAULT_NGRAMS):
    """Full metrics for one document's generated (or reference) summary.

    ROUGE is reported only for the generated summary against a reference.
    Returns None when the requested summary is absent.
    """
    sentences = doc.generated_summary if summary == "generated" else doc.reference_summary
    if sentences is None:
        return None
    flat = _flatten(sentences)
    spans = find_copied_spans(doc, flat, min_copy_len)
    cs = copy_stats(spans, doc.n_sentences)
    nov = novel_ngram_rates(doc, sentences, n_values)
    rouge = {}
    if summary == "generated" and doc.reference_summary is not None:
        ref = _flatten(doc.reference_summary)
        rouge = {
            "rouge-1": rouge_n(ref, flat, 1),
            "rouge-2": rouge_n(ref, flat, 2),
            "rouge-l": rouge_l(ref, flat),
        }
    return MetricsReport(
        summary_length=len(flat),
        mean_copy_length=cs.mean_copy_length,
        n_copied_spans=len(spans),
        sentence_coverage=cs.sentence_coverage,
        layout_histogram=cs.layout_histogram,
        novel_ngram_rate=nov.ngram,
        novel_sentence_rate=nov.sentence,
        rouge=rouge,
    )
