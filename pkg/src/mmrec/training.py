"""Masked-token training: corruption, the loop, and checkpoint files.

Masking follows the usual convention: each non-special position is selected
independently at the configured rate, and a selected position becomes the
mask token with probability 0.8, a random ordinary token with 0.1, or stays
unchanged with 0.1. Labels exist only at selected positions.

Checkpoints are single files (version "ckpt-v1"): a JSON header line with the
model config, a shape manifest and the training log, followed by the raw
parameter data as little-endian float32 in manifest order.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, asdict, replace

import numpy as np
import torch

from .bpe import BOS_ID, EOS_ID, PAD_ID, Vocabulary
from .model import MaskedConceptModel, ModelConfig, init_model
from . import surface

IGNORE_INDEX = -100
N_SPECIALS = 5
CHECKPOINT_VERSION = "ckpt-v1"


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 100
    learning_rate: float = 3e-4
    validation_fraction: float = 0.10
    early_stop_patience: int = 5

    def validate(self) -> "TrainConfig":
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if min(self.batch_size, self.max_epochs, self.early_stop_patience) <= 0:
            raise ValueError("batch_size, max_epochs, early_stop_patience must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


class TrainingError(RuntimeError):
    pass


def apply_mlm_masking(batch: torch.Tensor, mask_rate: float, rng: torch.Generator,
                      vocab_size: int, mask_id: int = 4,
                      n_specials: int = N_SPECIALS) -> tuple[torch.Tensor, torch.Tensor]:
    """Corrupt a padded id batch for masked-token training.

    Returns (masked ids, labels); labels hold the original id at selected
    positions and IGNORE_INDEX elsewhere. Special tokens (ids below
    n_specials, which includes padding) are never selected.
    """
    candidates = batch >= n_specials
    selected = candidates & (torch.rand(batch.shape, generator=rng) < mask_rate)

    labels = torch.full_like(batch, IGNORE_INDEX)
    labels[selected] = batch[selected]

    masked = batch.clone()
    action = torch.rand(batch.shape, generator=rng)
    to_mask = selected & (action < 0.8)
    to_random = selected & (action >= 0.8) & (action < 0.9)
    masked[to_mask] = mask_id
    if to_random.any():
        randoms = torch.randint(n_specials, vocab_size, batch.shape, generator=rng)
        masked[to_random] = randoms[to_random]
    # remaining 10% keep the original token
    return masked, labels


def pad_batch(sequences: list[list[int]], pad_id: int = PAD_ID) -> tuple[torch.Tensor, torch.Tensor]:
    """Right-pad sequences into (ids, attention_mask) tensors."""
    width = max(len(s) for s in sequences)
    ids = torch.full((len(sequences), width), pad_id, dtype=torch.long)
    mask = torch.zeros((len(sequences), width), dtype=torch.long)
    for i, seq in enumerate(sequences):
        ids[i, : len(seq)] = torch.tensor(seq, dtype=torch.long)
        mask[i, : len(seq)] = 1
    return ids, mask


def encode_line(vocab: Vocabulary, line: str, max_len: int) -> list[int]:
    """Encode one surface line as <s> ... </s>, shortening structurally if needed.

    A line that would exceed max_len loses trailing class subtrees first, then
    trailing member rows of its last class; only if a bare single class still
    does not fit are raw ids cut.
    """
    ids = [BOS_ID] + vocab.encode(line) + [EOS_ID]
    if len(ids) <= max_len:
        return ids

    tree = surface.parse_surface(surface.text_to_surface(line))
    while True:
        classes = list(tree.children)
        if len(classes) > 1:
            tree = replace(tree, children=tuple(classes[:-1]))
        else:
            cls = classes[0]
            name, attrs, assocs = cls.children
            if assocs.children:
                assocs = replace(assocs, children=assocs.children[:-1])
            elif attrs.children:
                attrs = replace(attrs, children=attrs.children[:-1])
            else:
                return ids[:max_len]
            tree = replace(tree, children=(replace(cls, children=(name, attrs, assocs)),))
        ids = [BOS_ID] + vocab.encode(surface.surface_to_text(surface.flatten(tree))) + [EOS_ID]
        if len(ids) <= max_len:
            return ids


def prepare_sequences(vocab: Vocabulary, lines, max_len: int) -> list[list[int]]:
    return [encode_line(vocab, line, max_len) for line in lines]


def split_validation(sequences: list, fraction: float, seed: int) -> tuple[list, list]:
    """Deterministically hold out floor(fraction * N) sequences."""
    order = list(range(len(sequences)))
    random.Random(seed).shuffle(order)
    n_val = int(math.floor(fraction * len(sequences)))
    val_idx = set(order[:n_val])
    train = [sequences[i] for i in range(len(sequences)) if i not in val_idx]
    val = [sequences[i] for i in sorted(val_idx)]
    return train, val


@dataclass
class Checkpoint:
    config: ModelConfig
    parameters: dict[str, np.ndarray]
    training_log: list[dict]

    def save(self, path) -> None:
        manifest = [
            {"name": name, "shape": list(arr.shape)} for name, arr in self.parameters.items()
        ]
        header = {
            "version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "manifest": manifest,
            "training_log": self.training_log,
        }
        with open(path, "wb") as f:
            f.write(json.dumps(header).encode("utf-8"))
            f.write(b"\n")
            for arr in self.parameters.values():
                f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as f:
            header_line = f.readline()
            blob = f.read()
        header = json.loads(header_line)
        if header.get("version") != CHECKPOINT_VERSION:
            raise TrainingError(f"unsupported checkpoint version {header.get('version')!r}")
        params: dict[str, np.ndarray] = {}
        offset = 0
        for entry in header["manifest"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
            params[entry["name"]] = arr.reshape(shape).copy()
            offset += count * 4
        if offset != len(blob):
            raise TrainingError("checkpoint parameter blob has trailing bytes")
        return cls(
            config=ModelConfig.from_dict(header["config"]),
            parameters=params,
            training_log=header["training_log"],
        )

    def build_model(self) -> MaskedConceptModel:
        model = MaskedConceptModel(self.config)
        state = {k: torch.from_numpy(v.copy()) for k, v in self.parameters.items()}
        model.load_state_dict(state)
        model.eval()
        return model


def _state_to_numpy(model: MaskedConceptModel) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy().astype(np.float32) for k, v in model.state_dict().items()}


def _mlm_loss(model, ids, attn, labels):
    logits = model(ids, attn)
    return torch.nn.functional.cross_entropy(
        logits.view(-1, logits.size(-1)), labels.view(-1), ignore_index=IGNORE_INDEX
    )


def _epoch_batches(sequences, batch_size, order):
    for start in range(0, len(order), batch_size):
        chunk = [sequences[i] for i in order[start : start + batch_size]]
        yield pad_batch(chunk)


def train(model: MaskedConceptModel, sequences: list[list[int]],
          train_config: TrainConfig, val_sequences: list[list[int]] | None = None,
          seed: int | None = None, log=None) -> Checkpoint:
    """Train by masked prediction and return the best-validation checkpoint.

    `sequences` are tokenized id lists (already fitted to the model's
    max_sequence_length). When no validation set is supplied, a
    validation_fraction share of the input is held out deterministically.
    Runs single threaded so that fixed seeds reproduce the loss log exactly.
    """
    train_config.validate()
    if not sequences:
        raise TrainingError("empty training corpus")
    torch.set_num_threads(1)
    cfg = model.config
    seed = cfg.seed if seed is None else seed

    if val_sequences is None:
        train_seqs, val_seqs = split_validation(
            sequences, train_config.validation_fraction, seed
        )
        if not train_seqs:
            raise TrainingError("validation split left no training sequences")
    else:
        train_seqs, val_seqs = sequences, val_sequences

    # Fixed validation corruption: comparable loss across epochs.
    val_rng = torch.Generator().manual_seed(seed + 0x5EED)
    val_batches = []
    for ids, attn in _epoch_batches(val_seqs, train_config.batch_size, range(len(val_seqs))):
        masked, labels = apply_mlm_masking(ids, cfg.mask_rate, val_rng, cfg.vocab_size)
        val_batches.append((masked, attn, labels))

    optimizer = torch.optim.Adam(model.parameters(), lr=train_config.learning_rate)
    rng = torch.Generator().manual_seed(seed)

    best_val = math.inf
    best_state = _state_to_numpy(model)
    since_best = 0
    training_log: list[dict] = []

    for epoch in range(train_config.max_epochs):
        model.train()
        order = torch.randperm(len(train_seqs), generator=rng).tolist()
        total, batches = 0.0, 0
        for ids, attn in _epoch_batches(train_seqs, train_config.batch_size, order):
            masked, labels = apply_mlm_masking(ids, cfg.mask_rate, rng, cfg.vocab_size)
            if (labels != IGNORE_INDEX).sum() == 0:
                continue
            loss = _mlm_loss(model, masked, attn, labels)
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite training loss at epoch {epoch}: {loss.item()!r} "
                    f"(lr={train_config.learning_rate}, batch={ids.shape})"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item()
            batches += 1
        train_loss = total / max(batches, 1)

        model.eval()
        with torch.no_grad():
            val_total, val_count = 0.0, 0
            for masked, attn, labels in val_batches:
                n = int((labels != IGNORE_INDEX).sum())
                if n == 0:
                    continue
                val_total += _mlm_loss(model, masked, attn, labels).item() * n
                val_count += n
            val_loss = val_total / val_count if val_count else train_loss

        training_log.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        if log is not None:
            log(f"epoch {epoch}: train {train_loss:.4f}  val {val_loss:.4f}")

        if val_loss < best_val:
            best_val = val_loss
            best_state = _state_to_numpy(model)
            since_best = 0
        else:
            since_best += 1
            if since_best >= train_config.early_stop_patience:
                break

    return Checkpoint(config=cfg, parameters=best_state, training_log=training_log)
