import random

import pytest
import torch

from mmrec import bpe, training
from mmrec.metamodel import AssociationDef, AttributeDef, ClassDef, make_metamodel
from mmrec.model import ModelConfig, init_model

torch.set_num_threads(1)

FSM_ECORE = b"""<?xml version="1.0" encoding="UTF-8"?>
<ecore:EPackage xmi:version="2.0" xmlns:xmi="http://www.omg.org/XMI"
    xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance"
    xmlns:ecore="http://www.eclipse.org/emf/2002/Ecore"
    name="fsm" nsURI="http://example.org/fsm" nsPrefix="fsm">
  <eClassifiers xsi:type="ecore:EClass" name="FSM">
    <eAnnotations source="ignored"/>
    <eStructuralFeatures xsi:type="ecore:EReference" name="states" eType="#//State"
        containment="true" upperBound="-1"/>
    <eOperations name="run"/>
  </eClassifiers>
  <eClassifiers xsi:type="ecore:EClass" name="State" eSuperTypes="#//FSM">
    <eStructuralFeatures xsi:type="ecore:EAttribute" name="isFinal">
      <eType xsi:type="ecore:EDataType" href="http://www.eclipse.org/emf/2002/Ecore#//EBoolean"/>
    </eStructuralFeatures>
  </eClassifiers>
  <eClassifiers xsi:type="ecore:EClass" name="Transition">
    <eStructuralFeatures xsi:type="ecore:EReference" name="source" eType="#//State"/>
    <eStructuralFeatures xsi:type="ecore:EReference" name="target" eType="#//State"/>
  </eClassifiers>
  <eClassifiers xsi:type="ecore:EEnum" name="Kind"/>
</ecore:EPackage>
"""


def fsm_metamodel(mm_id="fsm.ecore"):
    return make_metamodel(
        mm_id,
        [
            ClassDef("FSM", (), (AssociationDef("states", "State", True),)),
            ClassDef("State", (AttributeDef("isFinal", "EBoolean"),), ()),
            ClassDef(
                "Transition",
                (),
                (AssociationDef("source", "State"), AssociationDef("target", "State")),
            ),
        ],
    )


@pytest.fixture
def fsm():
    return fsm_metamodel()


# identifiers that stress the surface grammar: keyword and paren collisions,
# escape-marker prefixes, the mask literal, unicode
NASTY_NAMES = [
    "MM", "CLS", "NAME", "ATTRS", "ATTR", "ASSOCS", "ASSOC",
    "(", ")", "<mask>", "@", "@@", "@MM", "@thing",
    "Überklasse", "état", "普通", "x", "_",
]
PLAIN_NAMES = [
    "State", "Place", "Book", "Transition", "Node", "Edge", "Item", "Thing",
    "name", "value", "kind", "weight", "source", "target", "owner", "label",
]
TYPE_NAMES = ["EString", "EInt", "EBoolean", "EFloat"]


def random_metamodel(rng: random.Random, mm_id="random", nasty=True):
    pool = PLAIN_NAMES + (NASTY_NAMES if nasty else [])
    n_classes = rng.randint(1, 6)
    class_names = []
    while len(class_names) < n_classes:
        name = rng.choice(pool) + (str(rng.randrange(100)) if rng.random() < 0.5 else "")
        if name not in class_names:
            class_names.append(name)
    classes = []
    for name in class_names:
        attr_names = rng.sample(pool, rng.randint(0, 3))
        attrs = tuple(
            AttributeDef(a + str(i), rng.choice(TYPE_NAMES + pool))
            for i, a in enumerate(attr_names)
        )
        assocs = tuple(
            AssociationDef(rng.choice(pool), rng.choice(class_names), rng.random() < 0.3)
            for _ in range(rng.randint(0, 3))
        )
        classes.append(ClassDef(name, attrs, assocs))
    return make_metamodel(mm_id, classes)


# two-class shape: the second class's name is the only varying slot, so both
# rename and pending-class requests reproduce the training context exactly
OVERFIT_BASE = (
    "( MM "
    "( CLS ( NAME PetriNet ) ( ATTRS ( ATTR EString name ) ) ( ASSOCS ) ) "
    "( CLS ( NAME {slot} ) ( ATTRS ) ( ASSOCS ) ) "
    ")"
)


@pytest.fixture(scope="session")
def overfit_bundle(tmp_path_factory):
    """A tiny converged model on a corpus whose second class is always Place.

    Shared by mask-filling and service tests; training takes a few seconds.
    """
    lines = [OVERFIT_BASE.format(slot="Place")] * 8
    vocab = bpe.train_bpe(lines, vocab_size=320, min_frequency=1)
    cfg = ModelConfig(
        num_layers=1, hidden_size=32, ffn_size=64, num_heads=2,
        dropout_rate=0.0, attention_dropout_rate=0.0,
        max_sequence_length=128, vocab_size=len(vocab), seed=11,
    )
    model = init_model(cfg)
    seqs = training.prepare_sequences(vocab, lines * 4, cfg.max_sequence_length)
    tc = training.TrainConfig(batch_size=8, max_epochs=60, learning_rate=3e-3,
                              validation_fraction=0.25, early_stop_patience=60)
    ckpt = training.train(model, seqs, tc, seed=11)

    out = tmp_path_factory.mktemp("overfit")
    ckpt_path = out / "model.ckpt"
    vocab_path = out / "vocab.json"
    ckpt.save(ckpt_path)
    vocab.save(vocab_path)
    return {
        "lines": lines,
        "vocab": vocab,
        "checkpoint": ckpt,
        "ckpt_path": ckpt_path,
        "vocab_path": vocab_path,
    }
