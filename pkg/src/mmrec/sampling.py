"""Test-sample generation for the three modeling scenarios.

Global renaming masks each named element with the whole metamodel as
context. Local renaming restricts the context to the element's own class
plus the classes connected to it by an association in either direction.
Incremental construction replays how a modeler would build the metamodel
from a root class, predicting every element from what exists so far; an
association appears only once both endpoint classes have been constructed.

Context snapshots are plain Metamodel values assembled without corpus
validation, because a partial context may legitimately reference classes
that are not part of it.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass

from .metamodel import AssociationDef, ClassDef, Metamodel
from .surface import ElementRef, mask_element, element_refs

KINDS = ("class", "attribute", "association")


@dataclass(frozen=True)
class TestSample:
    __test__ = False  # keep pytest from collecting this as a test class

    context: tuple[str, ...]
    ground_truth: str
    kind: str
    context_size: int
    metamodel_id: str

    def to_json_obj(self, strategy: str) -> dict:
        return {
            "context": list(self.context),
            "ground_truth": self.ground_truth,
            "kind": self.kind,
            "context_size": self.context_size,
            "metamodel_id": self.metamodel_id,
            "strategy": strategy,
        }


def sample_from_json_obj(obj: dict) -> TestSample:
    return TestSample(
        context=tuple(obj["context"]),
        ground_truth=obj["ground_truth"],
        kind=obj["kind"],
        context_size=obj["context_size"],
        metamodel_id=obj["metamodel_id"],
    )


def _sample(snapshot: Metamodel, ref: ElementRef, source_id: str) -> TestSample:
    context, ground_truth = mask_element(snapshot, ref)
    return TestSample(
        context=tuple(context),
        ground_truth=ground_truth,
        kind=ref.kind,
        context_size=snapshot.element_count() - 1,
        metamodel_id=source_id,
    )


# ---------------------------------------------------------------------------
# Renaming scenarios
# ---------------------------------------------------------------------------


def sample_global(m: Metamodel) -> list[TestSample]:
    """One sample per named element, full metamodel as context."""
    return [_sample(m, ref, m.id) for ref in element_refs(m)]


def _neighborhood(m: Metamodel, class_name: str) -> list[str]:
    """The class plus every class linked to it by an association, any direction."""
    keep = {class_name}
    for cls in m.classes:
        for assoc in cls.associations:
            if cls.name == class_name:
                keep.add(assoc.target_class)
            if assoc.target_class == class_name:
                keep.add(cls.name)
    return [c.name for c in m.classes if c.name in keep]


def local_context(m: Metamodel, ref: ElementRef) -> tuple[Metamodel, ElementRef]:
    """Restrict a metamodel to the association neighborhood of the class that
    declares the referenced element; returns the snapshot and the rebased ref."""
    own = m.classes[ref.class_index]
    keep = _neighborhood(m, own.name)
    sub_classes = tuple(c for c in m.classes if c.name in keep)
    snapshot = Metamodel(id=m.id, classes=sub_classes)
    sub_ref = ElementRef(
        kind=ref.kind,
        class_index=next(i for i, c in enumerate(sub_classes) if c.name == own.name),
        member_index=ref.member_index,
    )
    return snapshot, sub_ref


def sample_local(m: Metamodel) -> list[TestSample]:
    """One sample per named element, context limited to the association
    neighborhood of the element's own class (attributes and associations use
    the class that declares them)."""
    samples = []
    for ref in element_refs(m):
        snapshot, sub_ref = local_context(m, ref)
        samples.append(_sample(snapshot, sub_ref, m.id))
    return samples


# ---------------------------------------------------------------------------
# Incremental construction
# ---------------------------------------------------------------------------


class _Construction:
    """Mutable partial metamodel in construction order."""

    def __init__(self, m: Metamodel, source_id: str):
        self.full = m
        self.source_id = source_id
        self.order: list[str] = []  # constructed class names
        self.attrs: dict[str, list] = {}
        self.assocs: dict[str, list] = {}
        self.samples: list[TestSample] = []

    def snapshot(self) -> Metamodel:
        classes = tuple(
            ClassDef(
                name=name,
                attributes=tuple(self.attrs[name]),
                associations=tuple(self.assocs[name]),
            )
            for name in self.order
        )
        return Metamodel(id=self.full.id, classes=classes)

    def class_ref(self, name: str, kind: str, member_index: int = 0) -> ElementRef:
        return ElementRef(kind, self.order.index(name), member_index)

    def place_class(self, cls: ClassDef, predicted: bool) -> None:
        self.order.append(cls.name)
        self.attrs[cls.name] = []
        self.assocs[cls.name] = []
        if predicted:
            # the class enters the context empty; its name is the slot
            self.samples.append(
                _sample(self.snapshot(), self.class_ref(cls.name, "class"), self.source_id)
            )
        for attr in cls.attributes:
            self.attrs[cls.name].append(attr)
            self.samples.append(
                _sample(
                    self.snapshot(),
                    self.class_ref(cls.name, "attribute", len(self.attrs[cls.name]) - 1),
                    self.source_id,
                )
            )

    def emit_ready_associations(self, emitted: set) -> None:
        """Emit every not-yet-emitted association whose endpoints both exist."""
        built = set(self.order)
        for ci, cls in enumerate(self.full.classes):
            if cls.name not in built:
                continue
            for si, assoc in enumerate(cls.associations):
                key = (ci, si)
                if key in emitted or assoc.target_class not in built:
                    continue
                emitted.add(key)
                self.assocs[cls.name].append(assoc)
                self.samples.append(
                    _sample(
                        self.snapshot(),
                        self.class_ref(cls.name, "association", len(self.assocs[cls.name]) - 1),
                        self.source_id,
                    )
                )


def _incoming_counts(m: Metamodel) -> dict[str, int]:
    counts = {c.name: 0 for c in m.classes}
    for cls in m.classes:
        for assoc in cls.associations:
            counts[assoc.target_class] += 1
    return counts


def _linked(m: Metamodel, name: str) -> list[str]:
    linked = []
    for cls in m.classes:
        for assoc in cls.associations:
            if cls.name == name and assoc.target_class != name:
                linked.append(assoc.target_class)
            elif assoc.target_class == name and cls.name != name:
                linked.append(cls.name)
    # declaration order, no duplicates
    seen = set()
    ordered = []
    for c in m.classes:
        if c.name in linked and c.name not in seen:
            seen.add(c.name)
            ordered.append(c.name)
    return ordered


def sample_incremental(m: Metamodel, seed: int) -> list[TestSample]:
    """Simulated construction starting from a root class.

    The root is the first class without incoming associations (fewest
    incoming on ties) and is never predicted. At each step a random
    not-yet-built class linked to the current one is built: its name is
    sampled, then its attributes, then every association both of whose
    endpoints now exist. When the current class has no unbuilt neighbors,
    construction falls back to the unbuilt class with fewest incoming
    associations. Deterministic for a given (metamodel, seed).
    """
    if not m.classes:
        return []
    rng = random.Random(seed)
    incoming = _incoming_counts(m)
    root = min(m.classes, key=lambda c: incoming[c.name]).name

    state = _Construction(m, m.id)
    emitted: set = set()
    state.place_class(m.class_named(root), predicted=False)
    state.emit_ready_associations(emitted)

    current = root
    built = {root}
    while len(built) < len(m.classes):
        candidates = [c for c in _linked(m, current) if c not in built]
        if candidates:
            chosen = rng.choice(candidates)
        else:
            unbuilt = [c.name for c in m.classes if c.name not in built]
            chosen = min(unbuilt, key=lambda n: incoming[n])
        state.place_class(m.class_named(chosen), predicted=True)
        built.add(chosen)
        state.emit_ready_associations(emitted)
        current = chosen
    return state.samples


# ---------------------------------------------------------------------------
# Corpus-level driving
# ---------------------------------------------------------------------------

STRATEGIES = ("global", "local", "incremental")


def metamodel_seed(base_seed: int, metamodel_id: str) -> int:
    digest = hashlib.sha256(f"{base_seed}:{metamodel_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def sample_corpus(metamodels, strategy: str, seed: int = 0) -> list[TestSample]:
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    samples = []
    for m in metamodels:
        if strategy == "global":
            samples.extend(sample_global(m))
        elif strategy == "local":
            samples.extend(sample_local(m))
        else:
            samples.extend(sample_incremental(m, metamodel_seed(seed, m.id)))
    return samples


def write_samples(samples, strategy: str, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in samples:
            f.write(json.dumps(s.to_json_obj(strategy), ensure_ascii=False))
            f.write("\n")


def read_samples(path) -> list[TestSample]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(sample_from_json_obj(json.loads(line)))
    return out
