"""Top-k identifier prediction for a masked slot, plus the frequency baseline.

Whole identifiers may span several subword tokens, so candidates come from
iterated mask filling: the slot's mask is replaced by a growing subword
prefix followed by a fresh mask, a beam of the best prefixes is kept, and
every prefix reached along the way is scored as a complete candidate by the
sum of its subword log-probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .bpe import BOS_ID, EOS_ID, MASK_ID, Vocabulary
from .model import MaskedConceptModel
from .training import pad_batch
from . import surface


@dataclass(frozen=True)
class Candidate:
    text: str
    score: float


class FillError(ValueError):
    pass


def _context_ids(vocab: Vocabulary, context_tokens, max_len: int) -> list[int]:
    """Encode a masked context, dropping whole classes if it cannot fit.

    Classes after the masked one go first, then classes before it; the class
    holding the mask is never dropped.
    """
    def encode(tokens):
        return [BOS_ID] + vocab.encode(surface.surface_to_text(tokens)) + [EOS_ID]

    ids = encode(context_tokens)
    if len(ids) <= max_len:
        return ids

    tree = surface.parse_surface(context_tokens)

    def holds_mask(cls) -> bool:
        return surface.MASK_TOKEN in surface.flatten(cls)

    keep = list(tree.children)
    while len(keep) > 1:
        drop = len(keep) - 1 if not holds_mask(keep[-1]) else 0
        keep.pop(drop)
        pruned = surface.TreeNode(tree.kind, children=tuple(keep))
        ids = encode(surface.flatten(pruned))
        if len(ids) <= max_len:
            return ids
    raise FillError(
        f"context does not fit the model's sequence limit even reduced to the "
        f"masked class (limit {max_len})"
    )


def _valid_next_token(vocab: Vocabulary, token_id: int) -> bool:
    if token_id in vocab.special_ids:
        return False
    # identifier pieces never contain whitespace bytes
    try:
        piece = vocab.decode([token_id])
    except Exception:
        return True  # partial UTF-8 is fine mid-identifier
    return not any(ch.isspace() for ch in piece)


def _candidate_text(vocab: Vocabulary, prefix: tuple[int, ...]) -> str | None:
    try:
        raw = vocab.decode(list(prefix))
    except Exception:
        return None  # bytes do not form valid UTF-8: not a finished identifier
    if not raw or any(ch.isspace() for ch in raw):
        return None
    if raw in surface.STRUCTURAL_TOKENS or raw == surface.MASK_TOKEN:
        return None
    return surface.unescape_identifier(raw)


def fill_mask_topk(model: MaskedConceptModel, vocab: Vocabulary, context_tokens,
                   k: int, max_subwords: int = 6, beam_width: int = 10) -> list[Candidate]:
    """Rank whole-identifier candidates for the single masked slot.

    Candidates are deduplicated by surface text (best score wins), sorted by
    descending score, and structural tokens are discarded. Raises FillError
    unless the context contains exactly one mask token.
    """
    n_masks = sum(1 for t in context_tokens if t == surface.MASK_TOKEN)
    if n_masks != 1:
        raise FillError(f"context must contain exactly one mask token, found {n_masks}")
    if k <= 0:
        return []

    torch.set_num_threads(1)
    model.eval()
    ids = _context_ids(vocab, context_tokens, model.config.max_sequence_length)
    slot = ids.index(MASK_ID)
    max_len = model.config.max_sequence_length

    beams: list[tuple[float, tuple[int, ...]]] = [(0.0, ())]
    best: dict[str, float] = {}

    with torch.no_grad():
        for depth in range(max_subwords):
            if slot + depth >= max_len - 1:
                break  # a longer prefix would push the mask past the limit
            inputs = []
            for _score, prefix in beams:
                seq = ids[:slot] + list(prefix) + [MASK_ID] + ids[slot + 1 :]
                inputs.append(seq[:max_len])
            batch, attn = pad_batch(inputs)
            logits = model(batch, attn)
            expansions: list[tuple[float, tuple[int, ...]]] = []
            for bi, (score, prefix) in enumerate(beams):
                pos = slot + len(prefix)
                logprobs = torch.log_softmax(logits[bi, pos], dim=-1)
                top = torch.topk(logprobs, min(beam_width * 2, logprobs.numel()))
                taken = 0
                for lp, tid in zip(top.values.tolist(), top.indices.tolist()):
                    if not _valid_next_token(vocab, tid):
                        continue
                    expansions.append((score + lp, prefix + (tid,)))
                    taken += 1
                    if taken >= beam_width:
                        break
            expansions.sort(key=lambda e: (-e[0], e[1]))
            beams = expansions[:beam_width]
            if not beams:
                break
            for score, prefix in beams:
                text = _candidate_text(vocab, prefix)
                if text is not None and (text not in best or score > best[text]):
                    best[text] = score

    ranked = sorted(best.items(), key=lambda item: (-item[1], item[0]))
    return [Candidate(text=t, score=s) for t, s in ranked[:k]]


def build_frequency_table(metamodels) -> dict[str, dict[str, int]]:
    """Per-kind identifier counts over a training corpus."""
    table = {"class": {}, "attribute": {}, "association": {}}
    for m in metamodels:
        for cls in m.classes:
            table["class"][cls.name] = table["class"].get(cls.name, 0) + 1
            for a in cls.attributes:
                table["attribute"][a.name] = table["attribute"].get(a.name, 0) + 1
            for s in cls.associations:
                table["association"][s.name] = table["association"].get(s.name, 0) + 1
    return table


def baseline_rank(freq_table: dict[str, dict[str, int]], kind: str, k: int) -> list[Candidate]:
    """Most frequent identifiers of one element kind; ties alphabetical."""
    if kind not in freq_table:
        raise KeyError(f"unknown element kind {kind!r}")
    ranked = sorted(freq_table[kind].items(), key=lambda item: (-item[1], item[0]))
    return [Candidate(text=t, score=float(n)) for t, n in ranked[: max(k, 0)]]
