"""End-to-end pipeline: ingest, split, tokenize, train, sample, evaluate.

Every stage persists its outputs under the configured output directory and
records a content hash of its effective inputs in a stamp file; re-running
with an unchanged configuration skips the stage. Stage failures surface as
PipelineError with the stage name in the message.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field, asdict
from pathlib import Path

from . import evaluation, fill, sampling, surface, synth, training
from .bpe import Vocabulary, train_bpe
from .metamodel import (
    Metamodel,
    MetamodelError,
    is_corpus_eligible,
    parse_canonical,
    parse_xmi,
    serialize_canonical,
)
from .model import init_model, preset_config
from .training import Checkpoint, TrainConfig


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    corpus_dir: str = "corpus"
    output_dir: str = "out"
    min_classes: int = 2
    max_classes: int = 15
    train_ratio: float = 0.8
    val_ratio: float = 0.1
    test_ratio: float = 0.1
    vocab_size: int = 4000
    min_frequency: int = 2
    model_preset: str = "desk"
    train: TrainConfig = field(default_factory=TrainConfig)
    strategy: str = "global"
    ks: tuple = evaluation.DEFAULT_KS
    seed: int = 0
    max_subwords: int = 6
    beam_width: int = 10

    def validate(self) -> "PipelineConfig":
        if not 2 <= self.min_classes <= self.max_classes:
            raise ValueError("filter bounds must satisfy 2 <= min <= max")
        if abs(self.train_ratio + self.val_ratio + self.test_ratio - 1.0) > 1e-9:
            raise ValueError("split ratios must sum to 1")
        if self.strategy not in sampling.STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        self.train.validate()
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ks"] = list(self.ks)
        return d


def parse_config_text(text: str) -> dict:
    """Parse flat `key = value` configuration lines.

    Values: quoted strings, booleans, ints, floats, or [v, v, ...] lists.
    Dotted keys address the nested training section (train.batch_size).
    """
    def parse_value(raw: str):
        raw = raw.strip()
        if raw.startswith("[") and raw.endswith("]"):
            inner = raw[1:-1].strip()
            return [parse_value(v) for v in inner.split(",")] if inner else []
        if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
            return raw[1:-1]
        if raw in ("true", "false"):
            return raw == "true"
        try:
            return int(raw)
        except ValueError:
            pass
        try:
            return float(raw)
        except ValueError:
            return raw

    out = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {ln}: expected key = value")
        key, _, raw = stripped.partition("=")
        out[key.strip()] = parse_value(raw)
    return out


def config_from_mapping(mapping: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    train_fields = set(TrainConfig().to_dict())
    for key, value in mapping.items():
        if key.startswith("train."):
            name = key[len("train."):]
            if name not in train_fields:
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg.train, name, value)
        elif key == "ks":
            cfg.ks = tuple(value)
        elif hasattr(cfg, key) and key != "train":
            setattr(cfg, key, value)
        else:
            raise ValueError(f"unknown config key {key!r}")
    return cfg.validate()


def load_config(path) -> PipelineConfig:
    return config_from_mapping(parse_config_text(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Stage plumbing
# ---------------------------------------------------------------------------


def _digest_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _digest_file(path: Path) -> str:
    return _digest_bytes(path.read_bytes())


def _stage_key(stage: str, params: dict, input_paths: list[Path]) -> str:
    payload = {
        "stage": stage,
        "params": params,
        "inputs": [[str(p), _digest_file(p)] for p in input_paths],
    }
    return _digest_bytes(json.dumps(payload, sort_keys=True).encode("utf-8"))


def _fresh(out_dir: Path, stage: str, key: str, outputs: list[Path]) -> bool:
    stamp = out_dir / f"{stage}.stamp"
    return (
        stamp.exists()
        and stamp.read_text().strip() == key
        and all(p.exists() for p in outputs)
    )


def _write_stamp(out_dir: Path, stage: str, key: str) -> None:
    (out_dir / f"{stage}.stamp").write_text(key + "\n")


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

CORPUS_SUFFIXES = (".json", ".ecore", ".xmi")


def _load_metamodel_file(path: Path, rel_id: str) -> Metamodel:
    data = path.read_bytes()
    if path.suffix == ".json":
        m = parse_canonical(data.decode("utf-8"))
        return Metamodel(id=rel_id, classes=m.classes)
    return parse_xmi(data, id=rel_id)


def run_ingest(config: PipelineConfig) -> dict:
    """Parse and filter the corpus directory.

    Writes manifest.json (per-file status with reject reasons) and
    encoded.jsonl (surface line + canonical form per kept metamodel).
    Returns the manifest object.
    """
    corpus_dir = Path(config.corpus_dir)
    out_dir = Path(config.output_dir)
    if not corpus_dir.is_dir():
        raise PipelineError("ingest", f"corpus directory {corpus_dir} does not exist")
    out_dir.mkdir(parents=True, exist_ok=True)

    files = sorted(
        p for p in corpus_dir.rglob("*") if p.is_file() and p.suffix in CORPUS_SUFFIXES
    )
    params = {"min_classes": config.min_classes, "max_classes": config.max_classes}
    key = _stage_key("ingest", params, files)
    manifest_path = out_dir / "manifest.json"
    encoded_path = out_dir / "encoded.jsonl"
    if _fresh(out_dir, "ingest", key, [manifest_path, encoded_path]):
        return json.loads(manifest_path.read_text())

    entries = []
    with open(encoded_path, "w", encoding="utf-8") as enc:
        for path in files:
            rel = path.relative_to(corpus_dir).as_posix()
            try:
                m = _load_metamodel_file(path, rel)
            except MetamodelError as exc:
                entries.append({"path": rel, "status": "rejected", "reason": f"parse-error: {exc}"})
                continue
            if not is_corpus_eligible(m, config.min_classes, config.max_classes):
                entries.append(
                    {"path": rel, "status": "rejected", "reason": "class-count",
                     "classes": len(m.classes)}
                )
                continue
            line = surface.surface_to_text(surface.flatten(surface.build_tree(m)))
            enc.write(json.dumps(
                {"id": rel, "line": line, "canonical": serialize_canonical(m)},
                ensure_ascii=False,
            ))
            enc.write("\n")
            entries.append({"path": rel, "status": "kept", "classes": len(m.classes)})

    manifest = {"corpus_dir": str(corpus_dir), "entries": entries}
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    _write_stamp(out_dir, "ingest", key)
    return manifest


def _read_encoded(out_dir: Path) -> dict[str, dict]:
    encoded_path = out_dir / "encoded.jsonl"
    if not encoded_path.exists():
        raise PipelineError("split", "missing encoded corpus; run ingest first")
    records = {}
    with open(encoded_path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                obj = json.loads(line)
                records[obj["id"]] = obj
    return records


def run_split(config: PipelineConfig) -> dict:
    """Deterministic disjoint train/val/test split of the kept metamodels."""
    out_dir = Path(config.output_dir)
    manifest_path = out_dir / "manifest.json"
    if not manifest_path.exists():
        raise PipelineError("split", "missing manifest; run ingest first")
    params = {
        "ratios": [config.train_ratio, config.val_ratio, config.test_ratio],
        "seed": config.seed,
    }
    key = _stage_key("split", params, [manifest_path])
    splits_path = out_dir / "splits.json"
    if _fresh(out_dir, "split", key, [splits_path]):
        return json.loads(splits_path.read_text())

    manifest = json.loads(manifest_path.read_text())
    ids = [e["path"] for e in manifest["entries"] if e["status"] == "kept"]
    n_parts = sum(1 for r in (config.train_ratio, config.val_ratio, config.test_ratio) if r > 0)
    if len(ids) < n_parts:
        raise PipelineError("split", f"only {len(ids)} files for {n_parts} splits")

    order = list(ids)
    random.Random(config.seed).shuffle(order)
    n = len(order)
    n_val = int(math.floor(config.val_ratio * n))
    n_test = int(math.floor(config.test_ratio * n))
    splits = {
        "val": sorted(order[:n_val]),
        "test": sorted(order[n_val : n_val + n_test]),
        "train": sorted(order[n_val + n_test :]),
    }
    splits_path.write_text(json.dumps(splits, indent=2) + "\n")
    _write_stamp(out_dir, "split", key)
    return splits


def run_train_tokenizer(config: PipelineConfig) -> Vocabulary:
    out_dir = Path(config.output_dir)
    splits_path = out_dir / "splits.json"
    encoded_path = out_dir / "encoded.jsonl"
    for p, hint in ((splits_path, "split"), (encoded_path, "ingest")):
        if not p.exists():
            raise PipelineError("train-tokenizer", f"missing {p.name}; run {hint} first")
    params = {"vocab_size": config.vocab_size, "min_frequency": config.min_frequency}
    key = _stage_key("train-tokenizer", params, [splits_path, encoded_path])
    vocab_path = out_dir / "vocab.json"
    if _fresh(out_dir, "train-tokenizer", key, [vocab_path]):
        return Vocabulary.load(vocab_path)

    splits = json.loads(splits_path.read_text())
    records = _read_encoded(out_dir)
    lines = [records[i]["line"] for i in splits["train"]]
    try:
        vocab = train_bpe(lines, config.vocab_size, config.min_frequency)
    except ValueError as exc:
        raise PipelineError("train-tokenizer", str(exc)) from exc
    vocab.save(vocab_path)
    _write_stamp(out_dir, "train-tokenizer", key)
    return vocab


def run_train(config: PipelineConfig, log=None) -> Checkpoint:
    out_dir = Path(config.output_dir)
    needed = {
        "vocab.json": "train-tokenizer",
        "splits.json": "split",
        "encoded.jsonl": "ingest",
    }
    for name, hint in needed.items():
        if not (out_dir / name).exists():
            raise PipelineError("train", f"missing {name}; run {hint} first")
    params = {
        "preset": config.model_preset,
        "train": config.train.to_dict(),
        "seed": config.seed,
    }
    inputs = [out_dir / n for n in needed]
    key = _stage_key("train", params, inputs)
    ckpt_path = out_dir / "model.ckpt"
    freq_path = out_dir / "train_freq.json"
    if _fresh(out_dir, "train", key, [ckpt_path, freq_path]):
        return Checkpoint.load(ckpt_path)

    vocab = Vocabulary.load(out_dir / "vocab.json")
    splits = json.loads((out_dir / "splits.json").read_text())
    records = _read_encoded(out_dir)

    model_cfg = preset_config(config.model_preset, vocab_size=len(vocab), seed=config.seed)
    model = init_model(model_cfg)
    train_seqs = training.prepare_sequences(
        vocab, [records[i]["line"] for i in splits["train"]], model_cfg.max_sequence_length
    )
    val_seqs = training.prepare_sequences(
        vocab, [records[i]["line"] for i in splits["val"]], model_cfg.max_sequence_length
    )
    try:
        ckpt = training.train(
            model, train_seqs, config.train,
            val_sequences=val_seqs or None, seed=config.seed, log=log,
        )
    except training.TrainingError as exc:
        raise PipelineError("train", str(exc)) from exc
    ckpt.save(ckpt_path)

    train_models = [parse_canonical(records[i]["canonical"]) for i in splits["train"]]
    freq_path.write_text(json.dumps(fill.build_frequency_table(train_models), indent=2) + "\n")
    _write_stamp(out_dir, "train", key)
    return ckpt


def run_sample(config: PipelineConfig) -> list[sampling.TestSample]:
    out_dir = Path(config.output_dir)
    splits_path = out_dir / "splits.json"
    if not splits_path.exists():
        raise PipelineError("sample", "missing splits.json; run split first")
    params = {"strategy": config.strategy, "seed": config.seed}
    key = _stage_key("sample", params, [splits_path, out_dir / "encoded.jsonl"])
    samples_path = out_dir / f"samples-{config.strategy}.jsonl"
    if _fresh(out_dir, f"sample-{config.strategy}", key, [samples_path]):
        return sampling.read_samples(samples_path)

    splits = json.loads(splits_path.read_text())
    records = _read_encoded(out_dir)
    test_models = [parse_canonical(records[i]["canonical"]) for i in splits["test"]]
    samples = sampling.sample_corpus(test_models, config.strategy, config.seed)
    sampling.write_samples(samples, config.strategy, samples_path)
    _write_stamp(out_dir, f"sample-{config.strategy}", key)
    return samples


def score_with_model(ckpt: Checkpoint, vocab: Vocabulary, samples, k: int,
                     max_subwords: int, beam_width: int, progress=None):
    model = ckpt.build_model()
    run = []
    for i, sample in enumerate(samples):
        candidates = fill.fill_mask_topk(
            model, vocab, list(sample.context), k, max_subwords, beam_width
        )
        run.append(evaluation.ScoredRecord.from_candidates(sample, [c.text for c in candidates]))
        if progress is not None and (i + 1) % 50 == 0:
            progress(f"scored {i + 1}/{len(samples)} samples")
    return run


def score_with_baseline(freq_table: dict, samples, k: int):
    by_kind = {
        kind: [c.text for c in fill.baseline_rank(freq_table, kind, k)]
        for kind in sampling.KINDS
    }
    return [
        evaluation.ScoredRecord.from_candidates(s, by_kind[s.kind]) for s in samples
    ]


def run_evaluate(config: PipelineConfig, progress=None) -> dict:
    """Score the sampled contexts with the trained model and the frequency
    baseline, then write both reports. Returns {"model": ..., "baseline": ...}."""
    out_dir = Path(config.output_dir)
    ckpt_path = out_dir / "model.ckpt"
    if not ckpt_path.exists():
        raise PipelineError("evaluate", "missing checkpoint; run train first")
    vocab_path = out_dir / "vocab.json"
    if not vocab_path.exists():
        raise PipelineError("evaluate", "missing vocabulary; run train-tokenizer first")
    samples_path = out_dir / f"samples-{config.strategy}.jsonl"
    if not samples_path.exists():
        raise PipelineError("evaluate", f"missing {samples_path.name}; run sample first")
    freq_path = out_dir / "train_freq.json"
    if not freq_path.exists():
        raise PipelineError("evaluate", "missing train_freq.json; run train first")

    params = {
        "ks": list(config.ks),
        "max_subwords": config.max_subwords,
        "beam_width": config.beam_width,
        "strategy": config.strategy,
    }
    inputs = [ckpt_path, vocab_path, samples_path, freq_path]
    key = _stage_key("evaluate", params, inputs)
    report_path = out_dir / f"report-{config.strategy}.json"
    baseline_path = out_dir / f"baseline-report-{config.strategy}.json"
    if _fresh(out_dir, f"evaluate-{config.strategy}", key, [report_path, baseline_path]):
        return {
            "model": evaluation.load_report(report_path),
            "baseline": evaluation.load_report(baseline_path),
        }

    ckpt = Checkpoint.load(ckpt_path)
    vocab = Vocabulary.load(vocab_path)
    samples = sampling.read_samples(samples_path)
    freq_table = json.loads(freq_path.read_text())
    k_max = max(config.ks)

    model_run = score_with_model(
        ckpt, vocab, samples, k_max, config.max_subwords, config.beam_width, progress
    )
    baseline_run = score_with_baseline(freq_table, samples, k_max)

    model_report = evaluation.build_report(model_run, config.ks, train_freq_table=freq_table)
    baseline_report = evaluation.build_report(baseline_run, config.ks, train_freq_table=freq_table)
    evaluation.emit_report(model_report, report_path)
    evaluation.emit_report(baseline_report, baseline_path)
    _write_stamp(out_dir, f"evaluate-{config.strategy}", key)
    return {"model": model_report, "baseline": baseline_report}


def run_generate_synthetic(out_dir, n: int, seed: int,
                           rare_pairs: int = synth.RARE_PAIR_COUNT,
                           singletons: int = synth.SINGLETON_COUNT) -> list[str]:
    """Write n synthetic canonical metamodels into a corpus directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metamodels = synth.generate_corpus(n, seed, rare_pairs=rare_pairs, singletons=singletons)
    paths = []
    for m in metamodels:
        path = out / m.id
        path.write_text(serialize_canonical(m, indent=2) + "\n", encoding="utf-8")
        paths.append(str(path))
    return paths


def run_end_to_end(config: PipelineConfig, log=None) -> dict:
    """Chain every stage and return the evaluation reports."""
    config.validate()
    run_ingest(config)
    run_split(config)
    run_train_tokenizer(config)
    run_train(config, log=log)
    run_sample(config)
    return run_evaluate(config, progress=log)
