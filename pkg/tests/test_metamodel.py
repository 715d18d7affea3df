import json
import random

import pytest

from mmrec.metamodel import (
    AssociationDef,
    AttributeDef,
    ClassDef,
    CorpusStats,
    MetamodelError,
    corpus_stats,
    is_corpus_eligible,
    iter_identifiers,
    make_metamodel,
    parse_canonical,
    parse_xmi,
    serialize_canonical,
)
from mmrec import synth

from conftest import FSM_ECORE, fsm_metamodel, random_metamodel


class TestParseXmi:
    def test_fsm_transition_references_state_twice(self):
        m = parse_xmi(FSM_ECORE, id="fsm.ecore")
        transition = m.class_named("Transition")
        assert [a.target_class for a in transition.associations] == ["State", "State"]
        assert [a.name for a in transition.associations] == ["source", "target"]

    def test_fsm_matches_hand_built_fixture(self):
        assert parse_xmi(FSM_ECORE, id="fsm.ecore") == fsm_metamodel()

    def test_containment_flag_parsed(self):
        m = parse_xmi(FSM_ECORE)
        assert m.class_named("FSM").associations[0].is_containment
        assert not m.class_named("Transition").associations[0].is_containment

    def test_attribute_type_resolved_from_href_child(self):
        m = parse_xmi(FSM_ECORE)
        assert m.class_named("State").attributes == (AttributeDef("isFinal", "EBoolean"),)

    def test_supertypes_and_operations_and_enums_ignored(self):
        m = parse_xmi(FSM_ECORE)
        # eSuperTypes, eOperations, eAnnotations, EEnum leave no trace
        assert [c.name for c in m.classes] == ["FSM", "State", "Transition"]

    def test_empty_package_is_valid(self):
        m = parse_xmi(b'<ecore:EPackage xmlns:ecore="http://www.eclipse.org/emf/2002/Ecore" name="p"/>')
        assert m.classes == ()

    def test_malformed_xml(self):
        with pytest.raises(MetamodelError, match="malformed XML"):
            parse_xmi(b"<EPackage><oops>")

    def test_non_epackage_root(self):
        with pytest.raises(MetamodelError, match="EPackage"):
            parse_xmi(b"<Other/>")

    def test_dangling_reference_target(self):
        doc = b"""<ecore:EPackage xmlns:ecore="http://www.eclipse.org/emf/2002/Ecore"
            xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" name="p">
          <eClassifiers xsi:type="ecore:EClass" name="A">
            <eStructuralFeatures xsi:type="ecore:EReference" name="b" eType="#//Missing"/>
          </eClassifiers>
        </ecore:EPackage>"""
        with pytest.raises(MetamodelError, match="undeclared class"):
            parse_xmi(doc)

    def test_class_with_empty_name(self):
        doc = b"""<ecore:EPackage xmlns:ecore="http://www.eclipse.org/emf/2002/Ecore"
            xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" name="p">
          <eClassifiers xsi:type="ecore:EClass"/>
        </ecore:EPackage>"""
        with pytest.raises(MetamodelError, match="empty name"):
            parse_xmi(doc)

    def test_parse_is_deterministic(self):
        assert parse_xmi(FSM_ECORE, id="x") == parse_xmi(FSM_ECORE, id="x")

    def test_nested_subpackage_classes_collected(self):
        doc = b"""<ecore:EPackage xmlns:ecore="http://www.eclipse.org/emf/2002/Ecore"
            xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" name="p">
          <eClassifiers xsi:type="ecore:EClass" name="A"/>
          <eSubpackages name="sub">
            <eClassifiers xsi:type="ecore:EClass" name="B">
              <eStructuralFeatures xsi:type="ecore:EReference" name="a" eType="#//A"/>
            </eClassifiers>
          </eSubpackages>
        </ecore:EPackage>"""
        m = parse_xmi(doc)
        assert [c.name for c in m.classes] == ["A", "B"]


class TestInvariants:
    def test_duplicate_class_name(self):
        with pytest.raises(MetamodelError, match="duplicate class name"):
            make_metamodel("x", [ClassDef("A"), ClassDef("A")])

    def test_duplicate_attribute_name(self):
        cls = ClassDef("A", (AttributeDef("n", "EString"), AttributeDef("n", "EInt")))
        with pytest.raises(MetamodelError, match="duplicate attribute"):
            make_metamodel("x", [cls])

    def test_whitespace_identifier_rejected(self):
        with pytest.raises(MetamodelError, match="whitespace"):
            make_metamodel("x", [ClassDef("has space")])


class TestCanonical:
    def test_empty_classes_document(self):
        m = parse_canonical('{"classes": []}')
        assert m.classes == () and m.id == ""

    def test_cross_parser_equivalence_on_fsm(self):
        from_xmi = parse_xmi(FSM_ECORE, id="fsm.ecore")
        from_json = parse_canonical(serialize_canonical(from_xmi))
        assert from_json == from_xmi

    def test_dangling_target_rejected(self):
        doc = {"id": "x", "classes": [
            {"name": "A", "attributes": [],
             "associations": [{"name": "b", "target": "Nope", "containment": False}]},
        ]}
        with pytest.raises(MetamodelError, match="undeclared class"):
            parse_canonical(json.dumps(doc))

    def test_unknown_field_rejected(self):
        with pytest.raises(MetamodelError, match="unknown field"):
            parse_canonical('{"classes": [], "extra": 1}')
        with pytest.raises(MetamodelError, match="unknown field"):
            parse_canonical('{"classes": [{"name": "A", "abstract": true}]}')

    def test_duplicate_class_rejected(self):
        doc = {"classes": [{"name": "A"}, {"name": "A"}]}
        with pytest.raises(MetamodelError, match="duplicate class name"):
            parse_canonical(json.dumps(doc))

    def test_invalid_json(self):
        with pytest.raises(MetamodelError, match="invalid JSON"):
            parse_canonical("{nope")

    def test_serialize_parse_identity(self):
        rng = random.Random(5)
        for _ in range(25):
            m = random_metamodel(rng)
            doc = serialize_canonical(m)
            assert serialize_canonical(parse_canonical(doc)) == doc

    def test_indent_variant_parses_equal(self, fsm):
        assert parse_canonical(serialize_canonical(fsm, indent=2)) == fsm


class TestEligibility:
    @pytest.mark.parametrize("n,expected", [(1, False), (2, True), (15, True), (16, False)])
    def test_class_count_bounds(self, n, expected):
        m = make_metamodel("x", [ClassDef(f"C{i}") for i in range(n)])
        assert is_corpus_eligible(m) is expected


class TestCorpusStats:
    def test_hand_enumeration(self):
        m1 = make_metamodel("1", [ClassDef("A")])
        m2 = make_metamodel("2", [ClassDef("A", (AttributeDef("B", "EString"),))])
        assert corpus_stats([m1, m2]) == CorpusStats(3, 2, 1)

    def test_empty_corpus(self):
        assert corpus_stats([]) == CorpusStats(0, 0, 0)

    def test_against_recount_oracle(self):
        corpus = synth.generate_corpus(50, seed=3)
        stats = corpus_stats(corpus)

        counts = {}
        for m in corpus:
            for name in iter_identifiers(m):
                counts[name] = counts.get(name, 0) + 1
        assert stats.identifier_count == sum(counts.values())
        assert stats.type_count == len(counts)
        assert stats.hapax_count == sum(1 for v in counts.values() if v == 1)

    def test_count_ordering_property(self):
        rng = random.Random(9)
        for _ in range(20):
            stats = corpus_stats([random_metamodel(rng) for _ in range(rng.randint(0, 5))])
            assert stats.hapax_count <= stats.type_count <= stats.identifier_count
