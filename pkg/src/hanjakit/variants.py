"""Character-morphology relations and the equivalence index built from them.

Variant, simplified and interchangeable relations merge characters into one
class for scoring; each class has a single representative (the canonical
"jungja" form). Confusable pairs look alike but differ in sound and meaning,
so they are kept aside for diagnostics and never merge classes.

Table format (UTF-8 TSV)::

    kind<TAB>char_a<TAB>char_b[<TAB>note]

with kind one of representative, variant, simplified, interchangeable,
confusable. A ``representative`` row declares char_a the representative of
char_b's class. Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Iterable, Mapping, Optional, Union


class VariantTableError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateRelation(VariantTableError):
    pass


class ConflictingRepresentative(ValueError):
    pass


class RelationKind(str, Enum):
    VARIANT = "variant"
    SIMPLIFIED = "simplified"
    INTERCHANGEABLE = "interchangeable"
    CONFUSABLE = "confusable"


MERGING_KINDS = frozenset({RelationKind.VARIANT, RelationKind.SIMPLIFIED, RelationKind.INTERCHANGEABLE})


@dataclass(frozen=True)
class VariantRelation:
    kind: RelationKind
    a: str
    b: str
    note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", RelationKind(self.kind))
        if self.a == self.b:
            raise ValueError(f"relation endpoints must differ, got {self.a!r} twice")
        if not self.a or not self.b:
            raise ValueError("relation endpoints must be non-empty")

    @property
    def key(self) -> tuple:
        return (self.kind, frozenset((self.a, self.b)))


@dataclass
class VariantTable:
    relations: list[VariantRelation] = field(default_factory=list)
    # member -> declared representative
    representatives: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.relations)

    def classes(self) -> set:
        out = set()
        for rel in self.relations:
            out.update((rel.a, rel.b))
        for member, rep in self.representatives.items():
            out.update((member, rep))
        return out

    def to_tsv(self) -> str:
        lines = [f"representative\t{rep}\t{member}" for member, rep in self.representatives.items()]
        for rel in self.relations:
            row = f"{rel.kind.value}\t{rel.a}\t{rel.b}"
            lines.append(f"{row}\t{rel.note}" if rel.note else row)
        return "\n".join(lines) + "\n" if lines else ""


def load_variant_table(raw: Union[bytes, str]) -> VariantTable:
    text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    table = VariantTable()
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) < 3:
            raise VariantTableError(f"expected kind<TAB>a<TAB>b[<TAB>note], got {line!r}", lineno)
        kind, a, b = (c.strip() for c in cols[:3])
        note = "\t".join(cols[3:]).strip()
        if not a or not b:
            raise VariantTableError("empty character field", lineno)
        if kind == "representative":
            prev = table.representatives.get(b)
            if prev is not None and prev != a:
                raise ConflictingRepresentative(f"line {lineno}: {b!r} already has representative {prev!r}")
            if prev == a:
                raise DuplicateRelation(f"duplicate representative row {a!r} {b!r}", lineno)
            table.representatives[b] = a
            continue
        try:
            rkind = RelationKind(kind)
        except ValueError:
            raise VariantTableError(f"unknown relation kind {kind!r}", lineno) from None
        if a == b:
            raise VariantTableError(f"relation endpoints must differ, got {a!r} twice", lineno)
        rel = VariantRelation(rkind, a, b, note)
        if rel.key in seen:
            raise DuplicateRelation(f"duplicate {kind} relation between {a!r} and {b!r}", lineno)
        seen.add(rel.key)
        table.relations.append(rel)
    return table


def sample_table() -> VariantTable:
    """Small illustrative table shipped with the package (not a reference dataset)."""
    raw = resources.files("hanjakit").joinpath("data/variants_sample.tsv").read_bytes()
    return load_variant_table(raw)


class DisjointSet:
    def __init__(self):
        self.parent = {}
        self.rank = {}

    def add(self, e):
        if e not in self.parent:
            self.parent[e] = e
            self.rank[e] = 0

    def find(self, e):
        self.add(e)
        root = e
        while self.parent[root] != root:
            root = self.parent[root]
        # path compression
        while self.parent[e] != root:
            self.parent[e], e = root, self.parent[e]
        return root

    def union(self, x, y):
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return
        if self.rank[rx] < self.rank[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        if self.rank[rx] == self.rank[ry]:
            self.rank[rx] += 1

    def groups(self) -> list[set]:
        out = collections.defaultdict(set)
        for e in self.parent:
            out[self.find(e)].add(e)
        return list(out.values())


@dataclass(frozen=True)
class EquivalenceIndex:
    """Immutable class -> representative map plus the confusable pair set."""

    representative_of: Mapping[str, str] = field(default_factory=dict)
    confusables: frozenset = frozenset()

    def normalize(self, c: str) -> str:
        return self.representative_of.get(c, c)

    def are_equivalent(self, a: str, b: str) -> bool:
        return a == b or self.normalize(a) == self.normalize(b)

    def is_confusable(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self.confusables

    def confusable_pairs(self) -> frozenset:
        """Unordered pairs as frozensets; test membership with ``frozenset((x, y))``."""
        return self.confusables

    def components(self) -> list[frozenset]:
        groups = collections.defaultdict(set)
        for c, rep in self.representative_of.items():
            groups[rep].add(c)
        return sorted((frozenset(g) for g in groups.values()), key=min)

    def __contains__(self, c: str) -> bool:
        return c in self.representative_of

    def __len__(self) -> int:
        return len(self.representative_of)


def compile_equivalence(table: VariantTable) -> EquivalenceIndex:
    """Union variant/simplified/interchangeable edges into classes.

    A class's representative is its declared one, else its smallest member
    by codepoint order. A representative row also joins its two characters.
    """
    ds = DisjointSet()
    confusables = set()
    for rel in table.relations:
        if rel.kind in MERGING_KINDS:
            ds.union(rel.a, rel.b)
        else:
            confusables.add(frozenset((rel.a, rel.b)))
    for member, rep in table.representatives.items():
        ds.union(member, rep)

    declared = collections.defaultdict(set)
    for member, rep in table.representatives.items():
        declared[ds.find(rep)].add(rep)

    rep_of = {}
    for group in ds.groups():
        root = ds.find(next(iter(group)))
        reps = declared.get(root, set())
        if len(reps) > 1:
            raise ConflictingRepresentative(
                f"class {sorted(group)} has several declared representatives: {sorted(reps)}"
            )
        rep = next(iter(reps)) if reps else min(group)
        for c in group:
            rep_of[c] = rep
    return EquivalenceIndex(dict(sorted(rep_of.items())), frozenset(confusables))


def build_index(relations: Iterable[tuple[str, str, str]], representatives: Optional[dict] = None) -> EquivalenceIndex:
    """Shortcut for tests and scripts: ``[(kind, a, b), ...]`` -> index."""
    table = VariantTable([VariantRelation(k, a, b) for k, a, b in relations], dict(representatives or {}))
    return compile_equivalence(table)
