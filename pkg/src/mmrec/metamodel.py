"""In-memory metamodel representation, Ecore/XMI and canonical JSON parsing.

A metamodel here is the unit of the corpus: an ordered list of classes,
each with ordered attributes and outgoing associations. Element order is
preserved exactly as it appears in the source serialization, and identifier
casing is never normalized (downstream evaluation is exact-match).
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass


class MetamodelError(ValueError):
    """Raised for malformed input or invariant violations while parsing."""


def _check_identifier(text: str, what: str) -> str:
    if not isinstance(text, str) or not text:
        raise MetamodelError(f"{what} must be a non-empty string, got {text!r}")
    if any(ch.isspace() for ch in text):
        raise MetamodelError(f"{what} must not contain whitespace: {text!r}")
    return text


@dataclass(frozen=True)
class AttributeDef:
    name: str
    type_name: str


@dataclass(frozen=True)
class AssociationDef:
    name: str
    target_class: str
    is_containment: bool = False


@dataclass(frozen=True)
class ClassDef:
    name: str
    attributes: tuple[AttributeDef, ...] = ()
    associations: tuple[AssociationDef, ...] = ()


@dataclass(frozen=True)
class Metamodel:
    """Validated metamodel value. Construct via :func:`make_metamodel`."""

    id: str
    classes: tuple[ClassDef, ...] = ()

    def class_named(self, name: str) -> ClassDef:
        for cls in self.classes:
            if cls.name == name:
                return cls
        raise KeyError(name)

    def element_count(self) -> int:
        """Classes + attributes + associations."""
        return sum(1 + len(c.attributes) + len(c.associations) for c in self.classes)


@dataclass(frozen=True)
class CorpusStats:
    identifier_count: int
    type_count: int
    hapax_count: int


def make_metamodel(id: str, classes) -> Metamodel:
    """Build a Metamodel and enforce its invariants.

    Raises MetamodelError on duplicate class names, dangling association
    targets, duplicate attribute names within a class, or invalid identifiers.
    """
    classes = tuple(classes)
    names = set()
    for cls in classes:
        _check_identifier(cls.name, "class name")
        if cls.name in names:
            raise MetamodelError(f"duplicate class name {cls.name!r}")
        names.add(cls.name)
    for cls in classes:
        attr_names = set()
        for attr in cls.attributes:
            _check_identifier(attr.name, f"attribute name in class {cls.name!r}")
            _check_identifier(attr.type_name, f"attribute type in class {cls.name!r}")
            if attr.name in attr_names:
                raise MetamodelError(
                    f"duplicate attribute name {attr.name!r} in class {cls.name!r}"
                )
            attr_names.add(attr.name)
        for assoc in cls.associations:
            _check_identifier(assoc.name, f"association name in class {cls.name!r}")
            if assoc.target_class not in names:
                raise MetamodelError(
                    f"association {assoc.name!r} in class {cls.name!r} targets "
                    f"undeclared class {assoc.target_class!r}"
                )
    return Metamodel(id=id, classes=classes)


# ---------------------------------------------------------------------------
# XMI / Ecore parsing
# ---------------------------------------------------------------------------

_XSI = "{http://www.w3.org/2001/XMLSchema-instance}"


def _local_tag(elem: ET.Element) -> str:
    tag = elem.tag
    return tag.rsplit("}", 1)[-1] if "}" in tag else tag


def _xsi_type(elem: ET.Element) -> str:
    # "ecore:EClass" -> "EClass"
    t = elem.get(_XSI + "type", "")
    return t.rsplit(":", 1)[-1]


def _etype_name(feature: ET.Element) -> str | None:
    """Resolve a feature's eType to a bare class/datatype name.

    Handles both the attribute form (eType="#//State" or
    "ecore:EDataType http://...Ecore#//EString") and the child-element form
    (<eType href="..."/>). Only the last fragment segment is kept.
    """
    ref = feature.get("eType")
    if ref is None:
        for child in feature:
            if _local_tag(child) == "eType":
                ref = child.get("href")
                break
    if ref is None:
        return None
    # drop a leading "prefix:Type " qualifier if present
    ref = ref.split()[-1]
    frag = ref.rsplit("#", 1)[-1]
    return frag.rstrip("/").rsplit("/", 1)[-1] or None


def _iter_eclasses(pkg: ET.Element):
    """Yield EClass elements of a package, descending into nested EPackages."""
    for child in pkg:
        tag = _local_tag(child)
        if tag == "eClassifiers" and _xsi_type(child) == "EClass":
            yield child
        elif tag == "eSubpackages" or (tag == "eClassifiers" and _xsi_type(child) == "EPackage"):
            yield from _iter_eclasses(child)


def parse_xmi(data: bytes, id: str = "") -> Metamodel:
    """Parse an Ecore/XMI document into a Metamodel.

    Classes, attributes and references are kept in document order. Supported
    Ecore features beyond that (operations, annotations, generics, supertype
    edges) are ignored. Containment references are parsed as ordinary
    associations with the containment flag set.
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise MetamodelError(f"malformed XML: {exc}") from exc
    if _local_tag(root) != "EPackage":
        raise MetamodelError(f"expected EPackage root, got {_local_tag(root)!r}")

    classes = []
    for eclass in _iter_eclasses(root):
        name = eclass.get("name")
        if not name:
            raise MetamodelError("class with empty name")
        attributes = []
        associations = []
        for feat in eclass:
            if _local_tag(feat) != "eStructuralFeatures":
                continue
            kind = _xsi_type(feat)
            fname = feat.get("name")
            if kind == "EAttribute":
                if not fname:
                    raise MetamodelError(f"attribute with empty name in class {name!r}")
                attributes.append(
                    AttributeDef(name=fname, type_name=_etype_name(feat) or "EString")
                )
            elif kind == "EReference":
                if not fname:
                    raise MetamodelError(f"reference with empty name in class {name!r}")
                target = _etype_name(feat)
                if target is None:
                    raise MetamodelError(
                        f"reference {fname!r} in class {name!r} has no resolvable target"
                    )
                associations.append(
                    AssociationDef(
                        name=fname,
                        target_class=target,
                        is_containment=feat.get("containment") == "true",
                    )
                )
            # other feature kinds are present-but-ignored
        classes.append(
            ClassDef(name=name, attributes=tuple(attributes), associations=tuple(associations))
        )
    return make_metamodel(id=id, classes=classes)


# ---------------------------------------------------------------------------
# Canonical JSON format
# ---------------------------------------------------------------------------

_CLASS_KEYS = {"name", "attributes", "associations"}
_ATTR_KEYS = {"name", "type"}
_ASSOC_KEYS = {"name", "target", "containment"}


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise MetamodelError(f"unknown field(s) {sorted(unknown)} in {where}")


def parse_canonical(text: str | bytes) -> Metamodel:
    """Parse the canonical JSON metamodel format.

    Schema: {"id": str, "classes": [{"name", "attributes": [{"name","type"}],
    "associations": [{"name","target","containment"}]}]}. The "id" field may
    be omitted on input. Unknown fields are rejected.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MetamodelError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MetamodelError("canonical document must be a JSON object")
    _reject_unknown(doc, {"id", "classes"}, "document")
    mm_id = doc.get("id", "")
    if not isinstance(mm_id, str):
        raise MetamodelError("'id' must be a string")
    raw_classes = doc.get("classes")
    if not isinstance(raw_classes, list):
        raise MetamodelError("'classes' must be a list")

    classes = []
    for i, rc in enumerate(raw_classes):
        if not isinstance(rc, dict):
            raise MetamodelError(f"class #{i} must be an object")
        _reject_unknown(rc, _CLASS_KEYS, f"class #{i}")
        attributes = []
        for j, ra in enumerate(rc.get("attributes", [])):
            if not isinstance(ra, dict):
                raise MetamodelError(f"attribute #{j} of class #{i} must be an object")
            _reject_unknown(ra, _ATTR_KEYS, f"attribute #{j} of class #{i}")
            attributes.append(AttributeDef(name=ra.get("name"), type_name=ra.get("type")))
        associations = []
        for j, rs in enumerate(rc.get("associations", [])):
            if not isinstance(rs, dict):
                raise MetamodelError(f"association #{j} of class #{i} must be an object")
            _reject_unknown(rs, _ASSOC_KEYS, f"association #{j} of class #{i}")
            containment = rs.get("containment", False)
            if not isinstance(containment, bool):
                raise MetamodelError("'containment' must be a boolean")
            associations.append(
                AssociationDef(
                    name=rs.get("name"),
                    target_class=rs.get("target"),
                    is_containment=containment,
                )
            )
        classes.append(
            ClassDef(
                name=rc.get("name"),
                attributes=tuple(attributes),
                associations=tuple(associations),
            )
        )
    return make_metamodel(id=mm_id, classes=classes)


def serialize_canonical(m: Metamodel, indent: int | None = None) -> str:
    """Render a Metamodel back to the canonical JSON format."""
    doc = {
        "id": m.id,
        "classes": [
            {
                "name": c.name,
                "attributes": [{"name": a.name, "type": a.type_name} for a in c.attributes],
                "associations": [
                    {"name": s.name, "target": s.target_class, "containment": s.is_containment}
                    for s in c.associations
                ],
            }
            for c in m.classes
        ],
    }
    return json.dumps(doc, indent=indent, ensure_ascii=False)


# ---------------------------------------------------------------------------
# Corpus filtering and statistics
# ---------------------------------------------------------------------------

MIN_CLASSES = 2
MAX_CLASSES = 15


def is_corpus_eligible(m: Metamodel, min_classes: int = MIN_CLASSES,
                       max_classes: int = MAX_CLASSES) -> bool:
    """True iff the class count lies within the corpus bounds (inclusive)."""
    return min_classes <= len(m.classes) <= max_classes


def iter_identifiers(m: Metamodel):
    """All named elements of a metamodel: class, attribute, association names."""
    for cls in m.classes:
        yield cls.name
        for attr in cls.attributes:
            yield attr.name
        for assoc in cls.associations:
            yield assoc.name


def corpus_stats(corpus) -> CorpusStats:
    counts = Counter()
    for m in corpus:
        counts.update(iter_identifiers(m))
    return CorpusStats(
        identifier_count=sum(counts.values()),
        type_count=len(counts),
        hapax_count=sum(1 for c in counts.values() if c == 1),
    )
