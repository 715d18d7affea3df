"""Metamodel trees and their flattened surface text.

A metamodel is first turned into a tree that keeps the lexical and structural
information the language model learns from: one CLS subtree per class holding
the name, the attribute rows and the outgoing association rows, in source
order. The tree is then flattened into a parenthesized prefix form::

    ( MM ( CLS ( NAME State ) ( ATTRS ( ATTR EBoolean isFinal ) ) ( ASSOCS ) ) )

Tokens are whitespace separated. ATTR rows carry the type then the name;
ASSOC rows carry the target class name then the association name. Empty
ATTRS/ASSOCS nodes are emitted so absence stays visible. Identifiers that
would collide with a structural token (a keyword, a parenthesis, the mask
sentinel) or that start with the escape marker are prefixed with "@", which
keeps flatten/parse a lossless round trip.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .metamodel import Metamodel

MASK_TOKEN = "<mask>"

KW_MODEL = "MM"
KW_CLS = "CLS"
KW_NAME = "NAME"
KW_ATTRS = "ATTRS"
KW_ATTR = "ATTR"
KW_ASSOCS = "ASSOCS"
KW_ASSOC = "ASSOC"

KEYWORDS = frozenset({KW_MODEL, KW_CLS, KW_NAME, KW_ATTRS, KW_ATTR, KW_ASSOCS, KW_ASSOC})
STRUCTURAL_TOKENS = KEYWORDS | {"(", ")"}
_RESERVED = STRUCTURAL_TOKENS | {MASK_TOKEN}


class SurfaceError(ValueError):
    """Raised when surface text does not conform to the grammar."""


class NodeKind(Enum):
    MODEL = "MODEL"
    CLS = "CLS"
    NAME = "NAME"
    ATTRS = "ATTRS"
    ATTR = "ATTR"
    ASSOCS = "ASSOCS"
    ASSOC = "ASSOC"
    LEAF = "LEAF"
    MASK = "MASK"  # masked identifier slot; never produced by build_tree


@dataclass(frozen=True)
class TreeNode:
    kind: NodeKind
    text: str = ""  # LEAF only
    children: tuple["TreeNode", ...] = ()

    def count_nodes(self) -> int:
        return 1 + sum(c.count_nodes() for c in self.children)


@dataclass(frozen=True)
class ElementRef:
    """Addresses one named element: a class, or a member of a class."""

    kind: str  # "class" | "attribute" | "association"
    class_index: int
    member_index: int = 0


def _leaf(text: str) -> TreeNode:
    return TreeNode(NodeKind.LEAF, text=text)


MASK_LEAF = TreeNode(NodeKind.MASK)


def build_tree(m: Metamodel) -> TreeNode:
    """Build the metamodel tree, preserving source order everywhere."""
    cls_nodes = []
    for cls in m.classes:
        attrs = tuple(
            TreeNode(NodeKind.ATTR, children=(_leaf(a.type_name), _leaf(a.name)))
            for a in cls.attributes
        )
        assocs = tuple(
            TreeNode(NodeKind.ASSOC, children=(_leaf(s.target_class), _leaf(s.name)))
            for s in cls.associations
        )
        cls_nodes.append(
            TreeNode(
                NodeKind.CLS,
                children=(
                    TreeNode(NodeKind.NAME, children=(_leaf(cls.name),)),
                    TreeNode(NodeKind.ATTRS, children=attrs),
                    TreeNode(NodeKind.ASSOCS, children=assocs),
                ),
            )
        )
    return TreeNode(NodeKind.MODEL, children=tuple(cls_nodes))


def escape_identifier(text: str) -> str:
    if text in _RESERVED or text.startswith("@"):
        return "@" + text
    return text


def unescape_identifier(token: str) -> str:
    return token[1:] if token.startswith("@") else token


_NODE_KEYWORD = {
    NodeKind.MODEL: KW_MODEL,
    NodeKind.CLS: KW_CLS,
    NodeKind.NAME: KW_NAME,
    NodeKind.ATTRS: KW_ATTRS,
    NodeKind.ATTR: KW_ATTR,
    NodeKind.ASSOCS: KW_ASSOCS,
    NodeKind.ASSOC: KW_ASSOC,
}


def flatten(t: TreeNode) -> list[str]:
    """Flatten a tree into its surface token list."""
    out: list[str] = []
    _flatten_into(t, out)
    return out


def _flatten_into(node: TreeNode, out: list) -> None:
    if node.kind is NodeKind.MASK:
        out.append(MASK_TOKEN)
        return
    if node.kind is NodeKind.LEAF:
        out.append(escape_identifier(node.text))
        return
    out.append("(")
    out.append(_NODE_KEYWORD[node.kind])
    for child in node.children:
        _flatten_into(child, out)
    out.append(")")


def surface_to_text(tokens) -> str:
    return " ".join(tokens)


def text_to_surface(text: str) -> list[str]:
    return text.split()


class _TokenCursor:
    def __init__(self, tokens):
        self.tokens = list(tokens)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            raise SurfaceError("unexpected end of input")
        self.pos += 1
        return tok

    def expect(self, token: str):
        tok = self.next()
        if tok != token:
            raise SurfaceError(f"expected {token!r} at position {self.pos - 1}, got {tok!r}")


_KEYWORD_NODE = {v: k for k, v in _NODE_KEYWORD.items()}

# which child keywords a node accepts, in grammar order
_CHILD_KEYWORDS = {
    NodeKind.MODEL: (KW_CLS,),
    NodeKind.CLS: (KW_NAME, KW_ATTRS, KW_ASSOCS),
    NodeKind.ATTRS: (KW_ATTR,),
    NodeKind.ASSOCS: (KW_ASSOC,),
}
_LEAF_COUNT = {NodeKind.NAME: 1, NodeKind.ATTR: 2, NodeKind.ASSOC: 2}


def parse_surface(tokens) -> TreeNode:
    """Parse surface tokens back into the tree that produced them."""
    cur = _TokenCursor(tokens)
    tree = _parse_node(cur, expect_kw=KW_MODEL)
    if cur.peek() is not None:
        raise SurfaceError(f"trailing tokens after position {cur.pos}")
    return tree


def _parse_identifier(cur: _TokenCursor) -> TreeNode:
    tok = cur.next()
    if tok in ("(", ")"):
        raise SurfaceError(f"expected identifier at position {cur.pos - 1}, got {tok!r}")
    if tok == MASK_TOKEN:
        return MASK_LEAF
    if tok in KEYWORDS:
        raise SurfaceError(f"keyword {tok!r} out of position at {cur.pos - 1}")
    return _leaf(unescape_identifier(tok))


def _parse_node(cur: _TokenCursor, expect_kw: str) -> TreeNode:
    cur.expect("(")
    kw = cur.next()
    if kw != expect_kw:
        raise SurfaceError(f"expected keyword {expect_kw!r}, got {kw!r}")
    kind = _KEYWORD_NODE[kw]

    children = []
    leaf_count = _LEAF_COUNT.get(kind)
    if leaf_count is not None:
        for _ in range(leaf_count):
            children.append(_parse_identifier(cur))
        cur.expect(")")
        return TreeNode(kind, children=tuple(children))

    if kind is NodeKind.CLS:
        for child_kw in _CHILD_KEYWORDS[kind]:
            children.append(_parse_node(cur, expect_kw=child_kw))
        cur.expect(")")
        return TreeNode(kind, children=tuple(children))

    # MODEL / ATTRS / ASSOCS: zero or more children of a single kind
    (child_kw,) = _CHILD_KEYWORDS[kind]
    while cur.peek() == "(":
        children.append(_parse_node(cur, expect_kw=child_kw))
    cur.expect(")")
    return TreeNode(kind, children=tuple(children))


# ---------------------------------------------------------------------------
# Masking one element
# ---------------------------------------------------------------------------


def _resolve_leaf_path(m: Metamodel, ref: ElementRef) -> tuple[int, ...]:
    """Path of child indices from the MODEL root to the leaf holding the name."""
    if not 0 <= ref.class_index < len(m.classes):
        raise IndexError(f"class_index {ref.class_index} out of range")
    cls = m.classes[ref.class_index]
    if ref.kind == "class":
        return (ref.class_index, 0, 0)  # CLS -> NAME -> leaf
    if ref.kind == "attribute":
        if not 0 <= ref.member_index < len(cls.attributes):
            raise IndexError(f"attribute index {ref.member_index} out of range")
        return (ref.class_index, 1, ref.member_index, 1)  # ATTR -> name leaf
    if ref.kind == "association":
        if not 0 <= ref.member_index < len(cls.associations):
            raise IndexError(f"association index {ref.member_index} out of range")
        return (ref.class_index, 2, ref.member_index, 1)  # ASSOC -> name leaf
    raise ValueError(f"unknown element kind {ref.kind!r}")


def _replace_at_path(node: TreeNode, path: tuple[int, ...], new_leaf: TreeNode) -> TreeNode:
    if not path:
        return new_leaf
    i = path[0]
    children = list(node.children)
    children[i] = _replace_at_path(children[i], path[1:], new_leaf)
    return replace(node, children=tuple(children))


def mask_element(m: Metamodel, ref: ElementRef) -> tuple[list[str], str]:
    """Flatten the metamodel with exactly one name leaf replaced by the mask.

    Returns (context tokens, ground-truth identifier). For attributes the
    type token stays visible; for associations the target class token stays
    visible. Only the name is masked.
    """
    tree = build_tree(m)
    path = _resolve_leaf_path(m, ref)
    node = tree
    for i in path:
        node = node.children[i]
    ground_truth = node.text
    masked = _replace_at_path(tree, path, MASK_LEAF)
    return flatten(masked), ground_truth


def element_refs(m: Metamodel):
    """Every named element of the metamodel, in source order."""
    for ci, cls in enumerate(m.classes):
        yield ElementRef("class", ci)
        for ai in range(len(cls.attributes)):
            yield ElementRef("attribute", ci, ai)
        for si in range(len(cls.associations)):
            yield ElementRef("association", ci, si)
