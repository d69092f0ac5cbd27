"""Noun-phrase annotations for prompts.

Two ways to obtain an annotation: parse a prompt written in the benchmark
template grammar::

    prompt  := ["a" "photo" "of"] phrase ("and" phrase)*
    phrase  := ("a" | "an") adjective* noun

or load an explicit JSON annotation for anything else. Indices are word
positions; articles and conjunctions are never part of a noun-phrase span.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import jsonschema

from .errors import AnnotationIndexError, OverlapError, ParseError, SchemaError

ARTICLES = frozenset({"a", "an"})
CONJUNCTION = "and"
PREFIX = ("a", "photo", "of")

ANNOTATION_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["token_count", "nps"],
    "properties": {
        "token_count": {"type": "integer", "minimum": 1},
        "nps": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["span", "object_index", "attribute_indices"],
                "properties": {
                    "span": {
                        "type": "array",
                        "items": {"type": "integer", "minimum": 0},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                    "object_index": {"type": "integer", "minimum": 0},
                    "attribute_indices": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                },
            },
        },
        "eot_index": {"type": ["integer", "null"], "minimum": 0},
        "pad_indices": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    },
}


@dataclass(frozen=True)
class NounPhrase:
    start: int
    end: int  # exclusive
    object_index: int
    attribute_indices: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "attribute_indices", tuple(int(i) for i in self.attribute_indices))
        if not 0 <= self.start < self.end:
            raise SchemaError(f"empty or reversed span [{self.start}, {self.end})")
        if not self.start <= self.object_index < self.end:
            raise AnnotationIndexError(f"object index {self.object_index} outside span [{self.start}, {self.end})")
        for i in self.attribute_indices:
            if not self.start <= i < self.end:
                raise AnnotationIndexError(f"attribute index {i} outside span [{self.start}, {self.end})")
            if i == self.object_index:
                raise SchemaError(f"index {i} is both object and attribute")
        if len(set(self.attribute_indices)) != len(self.attribute_indices):
            raise SchemaError("duplicate attribute indices")

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    @property
    def indices(self) -> list[int]:
        """Token positions in the span, in prompt order."""
        return list(range(self.start, self.end))

    @property
    def size(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class PromptAnnotation:
    token_count: int
    nps: tuple[NounPhrase, ...]
    eot_index: int | None = None
    pad_indices: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "nps", tuple(self.nps))
        object.__setattr__(self, "pad_indices", tuple(int(i) for i in self.pad_indices))
        n = self.token_count
        if n < 1:
            raise SchemaError("token_count must be >= 1")
        ordered = sorted(self.nps, key=lambda np_: np_.start)
        for a, b in zip(ordered, ordered[1:]):
            if b.start < a.end:
                raise OverlapError(f"spans {a.span} and {b.span} overlap")
        for np_ in self.nps:
            if np_.end > n:
                raise AnnotationIndexError(f"span {np_.span} exceeds token_count {n}")
        aux = list(self.pad_indices) + ([self.eot_index] if self.eot_index is not None else [])
        if len(set(aux)) != len(aux):
            raise SchemaError("EOT/PAD indices repeat")
        for i in aux:
            if not 0 <= i < n:
                raise AnnotationIndexError(f"EOT/PAD index {i} outside {n} tokens")
            if any(np_.start <= i < np_.end for np_ in self.nps):
                raise OverlapError(f"EOT/PAD index {i} lies inside a noun phrase")

    @property
    def object_indices(self) -> list[int]:
        return [np_.object_index for np_ in self.nps]

    @property
    def aux_indices(self) -> list[int]:
        """EOT and PAD positions, sorted."""
        aux = list(self.pad_indices)
        if self.eot_index is not None:
            aux.append(self.eot_index)
        return sorted(aux)

    def to_dict(self) -> dict:
        return {
            "token_count": self.token_count,
            "nps": [
                {
                    "span": [np_.start, np_.end],
                    "object_index": np_.object_index,
                    "attribute_indices": list(np_.attribute_indices),
                }
                for np_ in self.nps
            ],
            "eot_index": self.eot_index,
            "pad_indices": list(self.pad_indices),
        }


def inter_np_pairs(annotation: PromptAnnotation) -> list[tuple[int, int]]:
    """Unordered object-index pairs drawn from distinct noun phrases."""
    return list(itertools.combinations(annotation.object_indices, 2))


def load_annotation(document) -> PromptAnnotation:
    """Build a validated annotation from JSON text, bytes or a parsed dict."""
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from None
    try:
        jsonschema.validate(document, ANNOTATION_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise SchemaError(f"{path or '<root>'}: {exc.message}") from None
    nps = [
        NounPhrase(
            start=e["span"][0],
            end=e["span"][1],
            object_index=e["object_index"],
            attribute_indices=tuple(e["attribute_indices"]),
        )
        for e in document["nps"]
    ]
    return PromptAnnotation(
        token_count=document["token_count"],
        nps=tuple(nps),
        eot_index=document.get("eot_index"),
        pad_indices=tuple(document.get("pad_indices", [])),
    )


def dump_annotation(annotation: PromptAnnotation) -> str:
    return json.dumps(annotation.to_dict(), sort_keys=True, indent=2) + "\n"


@dataclass(frozen=True)
class Lexicon:
    adjectives: frozenset[str]
    nouns: frozenset[str]

    @classmethod
    def from_words(cls, adjectives: Iterable[str], nouns: Iterable[str]) -> "Lexicon":
        return cls(frozenset(w.lower() for w in adjectives), frozenset(w.lower() for w in nouns))

    @classmethod
    def from_dict(cls, d: Mapping) -> "Lexicon":
        return cls.from_words(d.get("adjectives", ()), d.get("nouns", ()))


# Attribute and object vocabulary of the color/texture/shape benchmark prompts.
DEFAULT_LEXICON = Lexicon.from_words(
    adjectives="""
        red orange yellow green blue purple pink brown black white gray grey gold silver
        big small large tiny tall short round square triangular oval rectangular
        cubic spherical cylindrical conical hexagonal circular
        wooden metallic plastic glass leather fabric fluffy furry rubber ceramic
        soft hard smooth rough shiny velvet
    """.split(),
    nouns="""
        apple banana bowl vase cat dog bird horse car bicycle chair table cup book
        clock bench sheep cow bear elephant giraffe zebra bottle spoon fork knife
        shoes hat grapefruit pencil bag box ball phone lamp pillow sofa bed flower
        tree house door window train bus boat plane kite umbrella
    """.split(),
)


def tokenize(prompt: str) -> list[str]:
    return prompt.lower().replace(",", " ").split()


def parse_template_prompt(
    tokens,
    lexicon: Lexicon = DEFAULT_LEXICON,
    *,
    eot: bool = False,
    pad: int = 0,
) -> PromptAnnotation:
    """Parse a template-grammar prompt into noun phrases.

    ``tokens`` is a word list or a whitespace-separated string. Inside a
    phrase the last word is the head noun and the words before it are
    adjectives, so a word listed as both adjective and noun still parses
    deterministically. With ``eot``/``pad`` the annotation reserves one EOT
    slot and ``pad`` PAD slots after the words.

    Raises:
        ParseError: with the offending word position.
    """
    words = tokenize(tokens) if isinstance(tokens, str) else [w.lower() for w in tokens]
    if not words:
        raise ParseError("empty prompt", 0)
    pos = 0
    if tuple(words[:3]) == PREFIX and len(words) > 3 and words[3] in ARTICLES:
        pos = 3

    nps = []
    while True:
        if pos >= len(words) or words[pos] not in ARTICLES:
            raise ParseError("expected 'a' or 'an'", pos)
        pos += 1
        start = pos
        while pos < len(words) and words[pos] != CONJUNCTION:
            if words[pos] in ARTICLES:
                raise ParseError(f"unexpected article {words[pos]!r}", pos)
            pos += 1
        end = pos
        if end == start:
            raise ParseError("noun phrase without a noun", start)
        for i in range(start, end - 1):
            if words[i] not in lexicon.adjectives:
                raise ParseError(f"{words[i]!r} is not a known adjective", i)
        if words[end - 1] not in lexicon.nouns:
            raise ParseError(f"{words[end - 1]!r} is not a known noun", end - 1)
        nps.append(NounPhrase(start, end, end - 1, tuple(range(start, end - 1))))
        if pos == len(words):
            break
        pos += 1  # "and"
        if pos == len(words):
            raise ParseError("dangling 'and'", pos - 1)

    n = len(words)
    eot_index = n if eot else None
    first_pad = n + (1 if eot else 0)
    pads = tuple(range(first_pad, first_pad + pad))
    return PromptAnnotation(first_pad + pad, tuple(nps), eot_index, pads)
