"""Acceptance suite: every release criterion, one pass/fail line each.

The desk-scale criteria share one end-to-end pipeline run on a 200-metamodel
synthetic corpus (three domains, 20 held-out metamodels). Set
MMREC_ACCEPTANCE_DIR to a writable directory to reuse its artifacts across
pytest invocations; stages are content-addressed and skip themselves when
nothing changed.
"""

import math
import os
import random
import re
import time
from pathlib import Path

import pytest
import torch

from mmrec import bpe, pipeline, sampling, surface, training
from mmrec.evaluation import ScoredRecord, mrr_at_k, recall_at_k
from mmrec.fill import fill_mask_topk
from mmrec.model import ModelConfig, init_model
from mmrec.pipeline import PipelineConfig
from mmrec.training import TrainConfig, apply_mlm_masking, prepare_sequences, train

from conftest import random_metamodel


def report(name: str, detail: str = ""):
    print(f"\nACCEPTANCE {name}: PASS" + (f"  ({detail})" if detail else ""))


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------


def _random_unicode(rng: random.Random, max_len=40) -> str:
    chars = []
    for _ in range(rng.randint(0, max_len)):
        cp = rng.randrange(0x10FFFF + 1)
        while 0xD800 <= cp <= 0xDFFF:  # surrogates are not encodable
            cp = rng.randrange(0x10FFFF + 1)
        chars.append(chr(cp))
    return "".join(chars)


def test_tokenizer_round_trip_1000_random_strings():
    vocab = bpe.train_bpe(
        ["( MM ( CLS ( NAME State ) ( ATTRS ) ( ASSOCS ) ) )"] * 4,
        vocab_size=400, min_frequency=2,
    )
    rng = random.Random(2024)
    start = time.perf_counter()
    for _ in range(1000):
        text = _random_unicode(rng)
        assert vocab.decode(vocab.encode(text)) == text
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    report("tokenizer-round-trip", f"1000 strings in {elapsed:.2f}s")


def test_bpe_determinism_bounds_and_merge_frequencies(tmp_path):
    corpus = pipeline.synth.generate_corpus(50, seed=13)
    lines = [
        surface.surface_to_text(surface.flatten(surface.build_tree(m))) for m in corpus
    ]
    vocab_size, min_frequency = 1200, 2

    paths = []
    for i in range(2):
        vocab = bpe.train_bpe(lines, vocab_size, min_frequency)
        path = tmp_path / f"vocab{i}.json"
        vocab.save(path)
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()

    vocab = bpe.Vocabulary.load(paths[0])
    assert len(vocab) <= vocab_size

    # independent recount: replay every merge over the raw corpus and verify
    # the pair occurred at least min_frequency times when it was applied
    byte_alphabet = vocab.id_to_token[5 : 5 + 256]
    words = []
    for line in lines:
        for word in re.findall(r"\S+", line):
            words.append([byte_alphabet[b] for b in word.encode("utf-8")])
    for left, right in vocab.merges:
        occurrences = 0
        for word in words:
            i = 0
            while i < len(word) - 1:
                if word[i] == left and word[i + 1] == right:
                    occurrences += 1
                    i += 2  # non-overlapping, as in training
                else:
                    i += 1
        assert occurrences >= min_frequency, f"merge {(left, right)} seen {occurrences}x"
        merged = left + right
        for word in words:
            i = 0
            while i < len(word) - 1:
                if word[i] == left and word[i + 1] == right:
                    word[i : i + 2] = [merged]
                else:
                    i += 1
    report("bpe-determinism-and-bounds",
           f"{len(vocab.merges)} merges, vocab {len(vocab)} <= {vocab_size}")


# ---------------------------------------------------------------------------
# Surface grammar
# ---------------------------------------------------------------------------


def test_surface_round_trip_500_metamodels():
    rng = random.Random(99)
    for _ in range(500):
        tree = surface.build_tree(random_metamodel(rng, nasty=True))
        assert surface.parse_surface(surface.flatten(tree)) == tree
    report("surface-round-trip", "500 metamodels incl. keyword collisions")


# ---------------------------------------------------------------------------
# Masking and gradients
# ---------------------------------------------------------------------------


def test_masking_statistics():
    rng = torch.Generator().manual_seed(77)
    ids = torch.randint(5, 600, (100, 120))  # 12,000 candidate positions
    ids[:, 0] = 0
    ids[:, -1] = 1
    ids[:, 50] = 2  # plant specials among the candidates
    masked, labels = apply_mlm_masking(ids, 0.15, rng, vocab_size=600)
    candidates = ids >= 5
    fraction = (labels != training.IGNORE_INDEX)[candidates].float().mean().item()
    assert abs(fraction - 0.15) <= 0.01
    special = ids < 5
    assert (labels[special] == training.IGNORE_INDEX).all()
    assert torch.equal(masked[special], ids[special])
    report("masking-statistics", f"selected fraction {fraction:.4f}")


def test_gradient_correctness():
    cfg = ModelConfig(
        num_layers=1, hidden_size=8, ffn_size=16, num_heads=2,
        dropout_rate=0.0, attention_dropout_rate=0.0,
        max_sequence_length=16, vocab_size=300, seed=21,
    )
    model = init_model(cfg).double()
    model.eval()
    torch.manual_seed(21)
    ids = torch.randint(5, 300, (2, 8))
    masked = ids.clone()
    masked[:, ::2] = 4
    labels = ids.clone()
    labels[:, 1::2] = -100

    def loss_fn():
        logits = model(masked)
        return torch.nn.functional.cross_entropy(
            logits.view(-1, 300), labels.view(-1), ignore_index=-100
        )

    loss_fn().backward()
    rng = random.Random(5)
    params = list(model.named_parameters())
    h = 1e-5
    worst = 0.0
    for _ in range(20):
        name, p = params[rng.randrange(len(params))]
        idx = rng.randrange(p.numel())
        flat = p.detach().view(-1)
        orig = flat[idx].item()
        with torch.no_grad():
            flat[idx] = orig + h
            up = loss_fn().item()
            flat[idx] = orig - h
            down = loss_fn().item()
            flat[idx] = orig
        fd = (up - down) / (2 * h)
        an = p.grad.view(-1)[idx].item()
        # denominator floored at 1e-6: near-zero entries sit at the finite
        # difference roundoff floor
        rel = abs(fd - an) / max(abs(fd), abs(an), 1e-6)
        worst = max(worst, rel)
        assert rel < 1e-4, f"{name}[{idx}]: rel error {rel}"
    report("gradient-correctness", f"worst relative error {worst:.2e}")


def test_overfit_sanity():
    start = time.perf_counter()
    line = "( MM ( CLS ( NAME State ) ( ATTRS ( ATTR EBoolean isFinal ) ) ( ASSOCS ) ) )"
    vocab = bpe.train_bpe([line], vocab_size=300, min_frequency=1)
    cfg = ModelConfig(
        num_layers=1, hidden_size=32, ffn_size=64, num_heads=2,
        dropout_rate=0.0, attention_dropout_rate=0.0,
        max_sequence_length=64, vocab_size=len(vocab), seed=8,
    )
    model = init_model(cfg)
    seqs = prepare_sequences(vocab, [line] * 32, 64)
    ckpt = train(
        model, seqs,
        TrainConfig(batch_size=8, max_epochs=90, learning_rate=3e-3,
                    validation_fraction=0.125, early_stop_patience=90),
        seed=8,
    )
    final_loss = ckpt.training_log[-1]["train_loss"]
    assert final_loss < 0.1

    trained = ckpt.build_model()
    seq = seqs[0]
    hits = total = 0
    with torch.no_grad():
        for pos, token in enumerate(seq):
            if token < 5:
                continue
            probe = list(seq)
            probe[pos] = bpe.MASK_ID
            logits = trained(torch.tensor([probe]))
            hits += int(logits[0, pos].argmax()) == token
            total += 1
    elapsed = time.perf_counter() - start
    assert hits == total
    assert elapsed < 300
    report("overfit-sanity",
           f"loss {final_loss:.4f}, {hits}/{total} masks recovered in {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def test_metric_oracle_equivalence():
    rng = random.Random(123)
    sample_stub = sampling.TestSample(
        context=("(", "MM", "<mask>", ")"), ground_truth="gt", kind="class",
        context_size=1, metamodel_id="m",
    )
    for _ in range(1000):
        n = rng.randint(1, 15)
        run = []
        for _ in range(n):
            rank = rng.choice([None, 1, 2, 3, 4, 6, 9, 14, 25])
            candidates = [f"w{j}" for j in range(25)]
            if rank is not None:
                candidates[rank - 1] = "gt"
            run.append(ScoredRecord.from_candidates(sample_stub, candidates))
        k = rng.choice([1, 5, 10, 20])
        hits, rr = 0, 0.0
        for record in run:
            for pos, text in enumerate(record.candidates[:k], start=1):
                if text == record.sample.ground_truth:
                    hits += 1
                    rr += 1.0 / pos
                    break
        assert recall_at_k(run, k) == hits / n
        assert mrr_at_k(run, k) == rr / n

    # worked example: the correct recommendation always at rank 2 yields 0.5
    run = [
        ScoredRecord.from_candidates(sample_stub, ["other", "gt", "x"]) for _ in range(7)
    ]
    assert mrr_at_k(run, 5) == pytest.approx(0.5)
    report("metric-oracle-equivalence", "1000 runs + rank-2 worked example")


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


def test_sampler_counts_and_monotonicity():
    corpus = pipeline.synth.generate_corpus(100, seed=31)
    for m in corpus:
        total = m.element_count()
        global_samples = sampling.sample_global(m)
        local_samples = sampling.sample_local(m)
        incr_samples = sampling.sample_incremental(m, seed=5)

        assert len(global_samples) == total
        assert len(incr_samples) == total - 1
        sizes = [s.context_size for s in incr_samples]
        assert sizes == sorted(sizes)
        for g, l in zip(global_samples, local_samples):
            assert l.context_size <= g.context_size
            g_classes = {c.children[0].children[0].text
                         for c in surface.parse_surface(list(g.context)).children}
            l_classes = {c.children[0].children[0].text
                         for c in surface.parse_surface(list(l.context)).children}
            assert l_classes <= g_classes
        for s in global_samples + local_samples + incr_samples:
            assert list(s.context).count(surface.MASK_TOKEN) == 1
    report("sampler-counts-and-monotonicity", "100 metamodels, all three strategies")


# ---------------------------------------------------------------------------
# Desk-scale end-to-end criteria
# ---------------------------------------------------------------------------

DESK_SEED = 7


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    base = os.environ.get("MMREC_ACCEPTANCE_DIR")
    base_dir = Path(base) if base else tmp_path_factory.mktemp("desk")
    corpus_dir = base_dir / "corpus"
    if not corpus_dir.exists():
        pipeline.run_generate_synthetic(corpus_dir, 200, seed=DESK_SEED)
    cfg = PipelineConfig(
        corpus_dir=str(corpus_dir),
        output_dir=str(base_dir / "out"),
        vocab_size=4000,
        min_frequency=2,
        model_preset="desk",
        train=TrainConfig(batch_size=32, max_epochs=100, learning_rate=1e-3,
                          early_stop_patience=12),
        strategy="global",
        ks=(1, 5, 10, 20),
        seed=DESK_SEED,
        max_subwords=4,
        beam_width=10,
    )
    start = time.perf_counter()
    reports = pipeline.run_end_to_end(cfg)
    elapsed = time.perf_counter() - start
    return {"cfg": cfg, "reports": reports, "elapsed": elapsed, "dir": base_dir}


def test_desk_learning_signal(desk_run):
    model_report = desk_run["reports"]["model"]
    baseline_report = desk_run["reports"]["baseline"]
    model_class = model_report.per_kind["class"]
    baseline_class = baseline_report.per_kind["class"]
    assert model_class.count > 0

    margin = model_class.recall_at[5] - baseline_class.recall_at[5]
    assert margin >= 0.10, (
        f"model class R@5 {model_class.recall_at[5]:.3f} vs baseline "
        f"{baseline_class.recall_at[5]:.3f}"
    )
    for block in (model_report.overall, model_class):
        ks = sorted(block.recall_at)
        values = [block.recall_at[k] for k in ks]
        assert values == sorted(values)
    assert desk_run["elapsed"] < 1800
    report(
        "desk-learning-signal",
        f"class R@5 model {model_class.recall_at[5]:.3f} vs baseline "
        f"{baseline_class.recall_at[5]:.3f} (+{margin * 100:.1f}pp), "
        f"e2e {desk_run['elapsed']:.0f}s",
    )


def test_occurrence_bin_trend(desk_run):
    bins = {b.label: b.metrics for b in desk_run["reports"]["model"].occurrence_bins}
    hapax = bins["[1,1]"]
    frequent = bins["[11,inf)"]
    assert hapax.count > 0 and frequent.count > 0
    assert frequent.recall_at[10] > hapax.recall_at[10]
    report(
        "occurrence-bin-trend",
        f"R@10 frequent {frequent.recall_at[10]:.3f} (n={frequent.count}) > "
        f"hapax {hapax.recall_at[10]:.3f} (n={hapax.count})",
    )


def test_service_determinism_and_latency(desk_run):
    import json

    from fastapi.testclient import TestClient

    from mmrec.service import ServiceState, create_app

    out_dir = Path(desk_run["cfg"].output_dir)
    app = create_app(
        ServiceState(max_subwords=4, beam_width=10),
        checkpoint_path=out_dir / "model.ckpt",
        vocab_path=out_dir / "vocab.json",
    )
    with open(out_dir / "encoded.jsonl", encoding="utf-8") as f:
        first_record = json.loads(f.readline())
    request = {
        "metamodel": json.loads(first_record["canonical"]),
        "target": {"kind": "class", "class_index": 0},
        "k": 5,
    }
    with TestClient(app) as client:
        warm = client.post("/v1/recommend", json=request)
        assert warm.status_code == 200
        start = time.perf_counter()
        first = client.post("/v1/recommend", json=request)
        latency = time.perf_counter() - start
        second = client.post("/v1/recommend", json=request)
    assert first.content == second.content
    assert latency < 1.0
    assert len(first.json()["candidates"]) == 5
    report("service-determinism-and-latency",
           f"identical bodies, k=5 in {latency * 1000:.0f}ms")
