"""Annotated source documents.

Token spans are end-exclusive: a mention ``(sent, start, end)`` covers
``sentences[sent][start:end]``.
"""

from dataclasses import dataclass, field
from typing import Optional

from .errors import ValidationError


@dataclass(frozen=True)
class Mention:
    sent: int
    start: int
    end: int


@dataclass(frozen=True)
class Entity:
    sent: int
    start: int
    end: int
    text: str
    type: str = ""


@dataclass(frozen=True)
class Document:
    id: str
    sentences: tuple
    coref_clusters: tuple = ()
    entities: tuple = ()
    reference_summary: Optional[tuple] = None
    generated_summary: Optional[tuple] = None
    structure_vectors: Optional[tuple] = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(tuple(s) for s in self.sentences))
        object.__setattr__(self, "coref_clusters", tuple(tuple(c) for c in self.coref_clusters))
        object.__setattr__(self, "entities", tuple(self.entities))
        for name in ("reference_summary", "generated_summary"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(tuple(s) for s in value))
        if self.structure_vectors is not None:
            object.__setattr__(
                self, "structure_vectors", tuple(tuple(float(x) for x in v) for v in self.structure_vectors)
            )
        self.validate()

    @property
    def n_sentences(self):
        return len(self.sentences)

    def validate(self):
        if not self.sentences:
            raise ValidationError(f"document {self.id!r} has no sentences")
        for k, cluster in enumerate(self.coref_clusters):
            for m, mention in enumerate(cluster):
                self._check_span(mention, f"cluster {k} mention {m}")
        for k, ent in enumerate(self.entities):
            self._check_span(ent, f"entity {k} ({ent.text!r})")
        if self.structure_vectors is not None:
            if len(self.structure_vectors) != self.n_sentences:
                raise ValidationError(
                    f"document {self.id!r}: {len(self.structure_vectors)} structure vectors "
                    f"for {self.n_sentences} sentences"
                )
            if len({len(v) for v in self.structure_vectors}) > 1:
                raise ValidationError(f"document {self.id!r}: structure vectors differ in width")

    def _check_span(self, span, label):
        n = self.n_sentences
        if not 0 <= span.sent < n:
            raise ValidationError(
                f"document {self.id!r}: {label} has sentence index {span.sent}, "
                f"but the document has {n} sentences"
            )
        length = len(self.sentences[span.sent])
        if not (0 <= span.start <= span.end <= length):
            raise ValidationError(
                f"document {self.id!r}: {label} span [{span.start}, {span.end}) "
                f"is outside sentence {span.sent} of length {length}"
            )

    def mention_sentences(self):
        """For each cluster, the set of sentences holding one of its mentions."""
        return [frozenset(m.sent for m in cluster) for cluster in self.coref_clusters]
