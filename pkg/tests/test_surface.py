import random

import pytest
from hypothesis import given, settings, strategies as st

from mmrec.metamodel import AttributeDef, ClassDef, make_metamodel
from mmrec.surface import (
    MASK_TOKEN,
    ElementRef,
    NodeKind,
    SurfaceError,
    build_tree,
    element_refs,
    escape_identifier,
    flatten,
    mask_element,
    parse_surface,
    unescape_identifier,
)

from conftest import random_metamodel


class TestBuildTree:
    def test_empty_member_groups_retained(self):
        m = make_metamodel("x", [ClassDef("A"), ClassDef("B")])
        tree = build_tree(m)
        cls = tree.children[0]
        name, attrs, assocs = cls.children
        assert attrs.kind is NodeKind.ATTRS and attrs.children == ()
        assert assocs.kind is NodeKind.ASSOCS and assocs.children == ()

    def test_fsm_shape(self, fsm):
        tree = build_tree(fsm)
        assert len(tree.children) == 3
        transition = tree.children[2]
        assocs = transition.children[2]
        assert len(assocs.children) == 2
        for assoc in assocs.children:
            assert assoc.children[0].text == "State"

    def test_node_count_closed_form(self):
        rng = random.Random(0)
        for _ in range(20):
            m = random_metamodel(rng)
            expected = 1 + sum(
                5 + 3 * len(c.attributes) + 3 * len(c.associations) for c in m.classes
            )
            assert build_tree(m).count_nodes() == expected


class TestFlatten:
    def test_single_class_exact_tokens(self):
        m = make_metamodel("x", [ClassDef("State"), ClassDef("Other")])
        tokens = flatten(build_tree(m))
        assert tokens[:11] == [
            "(", "MM", "(", "CLS", "(", "NAME", "State", ")", "(", "ATTRS", ")",
        ]
        assert tokens[11:14] == ["(", "ASSOCS", ")"]

    def test_attribute_row_renders_type_then_name(self):
        cls = ClassDef("State", (AttributeDef("isFinal", "EBoolean"),))
        tokens = flatten(build_tree(make_metamodel("x", [cls, ClassDef("B")])))
        row = tokens[tokens.index("ATTR") - 1 :][:5]
        assert row == ["(", "ATTR", "EBoolean", "isFinal", ")"]

    def test_balanced_parentheses(self):
        rng = random.Random(1)
        for _ in range(20):
            tokens = flatten(build_tree(random_metamodel(rng)))
            depth = 0
            for t in tokens:
                depth += t == "("
                depth -= t == ")"
                assert depth >= 0
            assert depth == 0


class TestRoundTrip:
    def test_100_random_metamodels(self):
        rng = random.Random(2)
        for _ in range(100):
            tree = build_tree(random_metamodel(rng))
            assert parse_surface(flatten(tree)) == tree

    def test_keyword_identifiers_escaped_and_restored(self):
        cls = ClassDef("MM", (AttributeDef("ATTR", "CLS"),))
        m = make_metamodel("x", [cls, ClassDef("(")])
        tokens = flatten(build_tree(m))
        assert "@MM" in tokens and "@ATTR" in tokens and "@CLS" in tokens and "@(" in tokens
        assert parse_surface(tokens) == build_tree(m)

    @given(st.text(alphabet=st.characters(blacklist_categories=("Zs", "Cc", "Cs")), min_size=1))
    def test_escape_unescape_identity(self, ident):
        assert unescape_identifier(escape_identifier(ident)) == ident

    def test_escaped_token_never_structural(self):
        for ident in ["MM", "CLS", "(", ")", "<mask>", "@", "@@x"]:
            escaped = escape_identifier(ident)
            assert escaped not in {"(", ")", "MM", "CLS", "NAME", "ATTRS",
                                   "ATTR", "ASSOCS", "ASSOC", "<mask>"}


class TestParseErrors:
    def test_unbalanced(self):
        with pytest.raises(SurfaceError):
            parse_surface(["(", "MM"])

    def test_keyword_out_of_position(self):
        with pytest.raises(SurfaceError):
            parse_surface(["(", "MM", "(", "NAME", "x", ")", ")"])

    def test_keyword_in_identifier_slot(self):
        with pytest.raises(SurfaceError, match="out of position"):
            parse_surface(["(", "MM", "(", "CLS", "(", "NAME", "ATTRS", ")",
                           "(", "ATTRS", ")", "(", "ASSOCS", ")", ")", ")"])

    def test_trailing_tokens(self):
        m = make_metamodel("x", [ClassDef("A"), ClassDef("B")])
        with pytest.raises(SurfaceError, match="trailing"):
            parse_surface(flatten(build_tree(m)) + [")"])


class TestMasking:
    def test_class_mask_on_fsm(self, fsm):
        context, gt = mask_element(fsm, ElementRef("class", 0))
        assert gt == "FSM"
        full = flatten(build_tree(fsm))
        assert len(context) == len(full)
        diffs = [i for i, (a, b) in enumerate(zip(full, context)) if a != b]
        assert len(diffs) == 1
        assert context[diffs[0]] == MASK_TOKEN and full[diffs[0]] == "FSM"

    def test_attribute_mask_keeps_type(self, fsm):
        context, gt = mask_element(fsm, ElementRef("attribute", 1, 0))
        assert gt == "isFinal"
        assert "EBoolean" in context and "isFinal" not in context

    def test_association_mask_keeps_target(self, fsm):
        context, gt = mask_element(fsm, ElementRef("association", 2, 1))
        assert gt == "target"
        # NAME leaf, FSM's "states" target and both Transition targets stay
        assert context.count("State") == 4
        assert "target" not in context

    def test_every_element_masks_exactly_once(self):
        rng = random.Random(3)
        m = random_metamodel(rng, nasty=False)
        refs = list(element_refs(m))
        assert len(refs) == m.element_count()
        for ref in refs:
            context, gt = mask_element(m, ref)
            assert context.count(MASK_TOKEN) == 1
            assert gt
            parse_surface(context)  # masked contexts stay grammatical

    def test_unmask_restores_byte_for_byte(self):
        rng = random.Random(4)
        for _ in range(20):
            m = random_metamodel(rng)
            full = flatten(build_tree(m))
            for ref in element_refs(m):
                context, gt = mask_element(m, ref)
                restored = [escape_identifier(gt) if t == MASK_TOKEN else t for t in context]
                assert restored == full

    def test_unresolvable_ref(self, fsm):
        with pytest.raises(IndexError):
            mask_element(fsm, ElementRef("class", 9))
        with pytest.raises(IndexError):
            mask_element(fsm, ElementRef("attribute", 0, 0))
        with pytest.raises(ValueError):
            mask_element(fsm, ElementRef("widget", 0))

    def test_masked_context_roundtrips_through_parse(self, fsm):
        context, _ = mask_element(fsm, ElementRef("class", 1))
        assert flatten(parse_surface(context)) == list(context)
