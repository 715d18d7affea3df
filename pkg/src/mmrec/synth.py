"""Synthetic metamodel corpora for desk-scale experiments.

Three domain vocabularies (state machines, petri nets, a library catalog)
share a few identifiers but are mostly distinct, so a context-aware model can
separate them while a global frequency ranking cannot. A small number of
rare class names is injected on top: some appear in exactly two metamodels
and some in exactly one, which populates the low-occurrence evaluation bins.

Generation is fully driven by one seeded RNG; the same (specs, n, seed)
yields byte-identical corpora.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .metamodel import AssociationDef, AttributeDef, ClassDef, Metamodel, make_metamodel


@dataclass(frozen=True)
class ClassConcept:
    name: str
    attribute_pool: tuple[tuple[str, str], ...] = ()  # (name, type)


@dataclass(frozen=True)
class SyntheticDomainSpec:
    name: str
    root: str
    concepts: tuple[ClassConcept, ...]
    # (source concept, association name, target concept, containment)
    association_pool: tuple[tuple[str, str, str, bool], ...]
    min_classes: int = 3
    max_classes: int = 6

    def concept(self, name: str) -> ClassConcept:
        for c in self.concepts:
            if c.name == name:
                return c
        raise KeyError(name)


def _c(name: str, *attrs) -> ClassConcept:
    return ClassConcept(name=name, attribute_pool=tuple(attrs))


STATE_MACHINES = SyntheticDomainSpec(
    name="state-machines",
    root="StateMachine",
    concepts=(
        _c("StateMachine", ("name", "EString")),
        _c("State", ("name", "EString"), ("isInitial", "EBoolean"),
           ("isFinal", "EBoolean"), ("entryAction", "EString")),
        _c("Transition", ("trigger", "EString"), ("priority", "EInt")),
        _c("Event", ("name", "EString"), ("payload", "EString")),
        _c("Guard", ("expression", "EString")),
        _c("Action", ("name", "EString"), ("script", "EString")),
        _c("Region", ("name", "EString")),
        _c("CompositeState", ("name", "EString")),
        _c("PseudoState", ("kind", "EString")),
        _c("Timer", ("duration", "EInt")),
    ),
    association_pool=(
        ("StateMachine", "states", "State", True),
        ("StateMachine", "transitions", "Transition", True),
        ("StateMachine", "events", "Event", True),
        ("StateMachine", "regions", "Region", True),
        ("Transition", "source", "State", False),
        ("Transition", "target", "State", False),
        ("Transition", "event", "Event", False),
        ("Transition", "guard", "Guard", False),
        ("Transition", "effect", "Action", False),
        ("State", "outgoing", "Transition", False),
        ("State", "incoming", "Transition", False),
        ("Region", "substates", "State", True),
        ("CompositeState", "regions", "Region", True),
        ("Event", "timer", "Timer", False),
        ("PseudoState", "owner", "Region", False),
    ),
)

PETRI_NETS = SyntheticDomainSpec(
    name="petri-nets",
    root="PetriNet",
    concepts=(
        _c("PetriNet", ("name", "EString")),
        _c("Place", ("name", "EString"), ("tokens", "EInt"), ("capacity", "EInt")),
        _c("Transition", ("name", "EString"), ("delay", "EInt")),
        _c("Arc", ("weight", "EInt")),
        _c("Token", ("color", "EString")),
        _c("Marking", ("timestamp", "EInt")),
        _c("InhibitorArc", ("weight", "EInt")),
        _c("NamedElement", ("name", "EString")),
        _c("Net", ("label", "EString")),
        _c("Node", ("name", "EString")),
    ),
    association_pool=(
        ("PetriNet", "places", "Place", True),
        ("PetriNet", "transitions", "Transition", True),
        ("PetriNet", "arcs", "Arc", True),
        ("Arc", "sourcePlace", "Place", False),
        ("Arc", "targetTransition", "Transition", False),
        ("InhibitorArc", "place", "Place", False),
        ("Marking", "heldTokens", "Token", True),
        ("Marking", "place", "Place", False),
        ("Place", "marking", "Marking", False),
        ("Token", "position", "Place", False),
        ("Net", "nodes", "Node", True),
        ("Node", "outgoingArc", "Arc", False),
        ("Node", "incomingArc", "Arc", False),
        ("Transition", "consumes", "Place", False),
        ("Transition", "produces", "Place", False),
    ),
)

LIBRARY_CATALOG = SyntheticDomainSpec(
    name="library-catalog",
    root="Library",
    concepts=(
        _c("Library", ("name", "EString"), ("address", "EString")),
        _c("Book", ("title", "EString"), ("isbn", "EString"), ("pages", "EInt")),
        _c("Author", ("name", "EString"), ("birthYear", "EInt")),
        _c("Member", ("name", "EString"), ("email", "EString"), ("memberId", "EString")),
        _c("Loan", ("dueDate", "EString"), ("returned", "EBoolean")),
        _c("Catalog", ("name", "EString")),
        _c("Publisher", ("name", "EString"), ("city", "EString")),
        _c("Shelf", ("code", "EString")),
        _c("Reservation", ("madeOn", "EString")),
        _c("Librarian", ("name", "EString"), ("staffId", "EString")),
    ),
    association_pool=(
        ("Library", "books", "Book", True),
        ("Library", "members", "Member", True),
        ("Library", "catalog", "Catalog", True),
        ("Library", "shelves", "Shelf", True),
        ("Book", "authors", "Author", False),
        ("Book", "publisher", "Publisher", False),
        ("Loan", "book", "Book", False),
        ("Loan", "borrower", "Member", False),
        ("Member", "loans", "Loan", True),
        ("Member", "reservations", "Reservation", True),
        ("Reservation", "book", "Book", False),
        ("Catalog", "entries", "Book", False),
        ("Shelf", "books", "Book", False),
        ("Librarian", "manages", "Loan", False),
    ),
)

DEFAULT_DOMAINS = (STATE_MACHINES, PETRI_NETS, LIBRARY_CATALOG)

# Injected low-frequency class names (see module docstring).
RARE_PAIR_COUNT = 30
SINGLETON_COUNT = 20
MAX_CLASSES_HARD = 15


def _rare_names(rng: random.Random, count: int, tag: str) -> list[str]:
    syllables = ["Vor", "Zan", "Qua", "Mek", "Tul", "Rix", "Nol", "Bex", "Gam", "Hax"]
    names = []
    seen = set()
    while len(names) < count:
        name = "".join(rng.choice(syllables) for _ in range(2)) + tag + str(len(names))
        if name not in seen:
            seen.add(name)
            names.append(name)
    return names


def generate_metamodel(spec: SyntheticDomainSpec, rng: random.Random, mm_id: str) -> Metamodel:
    n_classes = rng.randint(spec.min_classes, spec.max_classes)
    others = [c.name for c in spec.concepts if c.name != spec.root]
    chosen = [spec.root] if rng.random() < 0.9 else []
    chosen += rng.sample(others, min(n_classes - len(chosen), len(others)))
    chosen_set = set(chosen)
    # keep the domain's concept order so structure stays regular
    ordered = [c.name for c in spec.concepts if c.name in chosen_set]

    classes = []
    for name in ordered:
        concept = spec.concept(name)
        attrs = [
            AttributeDef(an, at) for an, at in concept.attribute_pool if rng.random() < 0.65
        ]
        assocs = [
            AssociationDef(assoc_name, target, containment)
            for source, assoc_name, target, containment in spec.association_pool
            if source == name and target in chosen_set and rng.random() < 0.65
        ]
        classes.append(ClassDef(name=name, attributes=tuple(attrs), associations=tuple(assocs)))
    if len(classes) < 2:  # tiny draw: pad with one more concept
        for c in spec.concepts:
            if c.name not in chosen_set:
                classes.append(ClassDef(name=c.name))
                break
    return make_metamodel(id=mm_id, classes=classes)


def generate_corpus(n: int, seed: int, domains=DEFAULT_DOMAINS,
                    rare_pairs: int = RARE_PAIR_COUNT,
                    singletons: int = SINGLETON_COUNT) -> list[Metamodel]:
    """Generate n eligible metamodels cycling through the domain specs."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = random.Random(seed)
    metamodels = [
        generate_metamodel(domains[i % len(domains)], rng, f"mm_{i:04d}.json")
        for i in range(n)
    ]

    def inject(name: str, mm_index: int) -> None:
        m = metamodels[mm_index]
        if len(m.classes) >= MAX_CLASSES_HARD:
            return
        attrs = ()
        if rng.random() < 0.5:
            attrs = (AttributeDef("label", "EString"),)
        metamodels[mm_index] = make_metamodel(
            id=m.id, classes=m.classes + (ClassDef(name=name, attributes=attrs),)
        )

    for name in _rare_names(rng, rare_pairs, "Duo"):
        first, second = rng.sample(range(n), 2) if n >= 2 else (0, 0)
        inject(name, first)
        if second != first:
            inject(name, second)
    for name in _rare_names(rng, singletons, "Solo"):
        inject(name, rng.randrange(n))
    return metamodels
