"""Transformer encoder for masked-identifier prediction.

The architecture is assembled from first principles (learned token and
absolute position embeddings, post-norm self-attention blocks, gelu FFN, a
linear vocabulary head) rather than imported, so initialization and the
forward pass stay fully deterministic under a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import torch
from torch import nn


@dataclass
class ModelConfig:
    num_layers: int = 2
    hidden_size: int = 128
    ffn_size: int = 512
    num_heads: int = 4
    dropout_rate: float = 0.1
    attention_dropout_rate: float = 0.1
    activation: str = "gelu"
    positional_embedding: str = "absolute"
    max_sequence_length: int = 256
    vocab_size: int = 4000
    mask_rate: float = 0.15
    seed: int = 0

    def validate(self) -> "ModelConfig":
        if self.hidden_size % self.num_heads != 0:
            raise ValueError("hidden_size must be divisible by num_heads")
        if not (0 <= self.dropout_rate < 1 and 0 <= self.attention_dropout_rate < 1):
            raise ValueError("dropout rates must lie in [0, 1)")
        if not 0 < self.mask_rate < 1:
            raise ValueError("mask_rate must lie in (0, 1)")
        if self.activation != "gelu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.positional_embedding != "absolute":
            raise ValueError(f"unsupported positional embedding {self.positional_embedding!r}")
        if min(self.num_layers, self.hidden_size, self.ffn_size, self.num_heads,
               self.max_sequence_length, self.vocab_size) <= 0:
            raise ValueError("sizes must be positive")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d).validate()


# Desk-scale default for experiments that must run on a workstation, a micro
# preset for smoke runs, and the full-size configuration kept by name.
PRESETS = {
    "desk": ModelConfig(),
    "micro": ModelConfig(
        num_layers=1,
        hidden_size=32,
        ffn_size=64,
        num_heads=2,
        dropout_rate=0.0,
        attention_dropout_rate=0.0,
        max_sequence_length=512,
        vocab_size=600,
    ),
    "paper-full": ModelConfig(
        num_layers=12,
        hidden_size=768,
        ffn_size=3072,
        num_heads=12,
        max_sequence_length=512,
        vocab_size=30000,
    ),
}


def preset_config(name: str, vocab_size: int | None = None, seed: int | None = None) -> ModelConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown model preset {name!r} (have {sorted(PRESETS)})")
    cfg = ModelConfig(**PRESETS[name].to_dict())
    if vocab_size is not None:
        cfg.vocab_size = vocab_size
    if seed is not None:
        cfg.seed = seed
    return cfg.validate()


class SelfAttention(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.num_heads = cfg.num_heads
        self.head_dim = cfg.hidden_size // cfg.num_heads
        self.query = nn.Linear(cfg.hidden_size, cfg.hidden_size)
        self.key = nn.Linear(cfg.hidden_size, cfg.hidden_size)
        self.value = nn.Linear(cfg.hidden_size, cfg.hidden_size)
        self.out = nn.Linear(cfg.hidden_size, cfg.hidden_size)
        self.attn_dropout = nn.Dropout(cfg.attention_dropout_rate)

    def forward(self, x, attention_mask=None):
        b, t, h = x.shape

        def split(proj):
            return proj.view(b, t, self.num_heads, self.head_dim).transpose(1, 2)

        q, k, v = split(self.query(x)), split(self.key(x)), split(self.value(x))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if attention_mask is not None:
            # mask padded keys; queries at padded positions are ignored by the loss
            pad = attention_mask[:, None, None, :] == 0
            scores = scores.masked_fill(pad, float("-inf"))
        weights = self.attn_dropout(torch.softmax(scores, dim=-1))
        ctx = (weights @ v).transpose(1, 2).reshape(b, t, h)
        return self.out(ctx)


class EncoderBlock(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.attention = SelfAttention(cfg)
        self.attn_norm = nn.LayerNorm(cfg.hidden_size)
        self.ffn = nn.Sequential(
            nn.Linear(cfg.hidden_size, cfg.ffn_size),
            nn.GELU(),
            nn.Linear(cfg.ffn_size, cfg.hidden_size),
        )
        self.ffn_norm = nn.LayerNorm(cfg.hidden_size)
        self.dropout = nn.Dropout(cfg.dropout_rate)

    def forward(self, x, attention_mask=None):
        x = self.attn_norm(x + self.dropout(self.attention(x, attention_mask)))
        x = self.ffn_norm(x + self.dropout(self.ffn(x)))
        return x


class MaskedConceptModel(nn.Module):
    """Encoder stack with a vocabulary head, trained by masked prediction."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config.validate()
        self.token_embedding = nn.Embedding(config.vocab_size, config.hidden_size)
        self.position_embedding = nn.Embedding(config.max_sequence_length, config.hidden_size)
        self.embed_norm = nn.LayerNorm(config.hidden_size)
        self.embed_dropout = nn.Dropout(config.dropout_rate)
        self.blocks = nn.ModuleList(EncoderBlock(config) for _ in range(config.num_layers))
        self.lm_head = nn.Linear(config.hidden_size, config.vocab_size)

    def forward(self, token_ids, attention_mask=None):
        """token_ids: (batch, seq) int64. Returns logits (batch, seq, vocab)."""
        b, t = token_ids.shape
        if t > self.config.max_sequence_length:
            raise ValueError(
                f"sequence length {t} exceeds max_sequence_length "
                f"{self.config.max_sequence_length}"
            )
        positions = torch.arange(t, device=token_ids.device)
        x = self.token_embedding(token_ids) + self.position_embedding(positions)[None, :, :]
        x = self.embed_dropout(self.embed_norm(x))
        for block in self.blocks:
            x = block(x, attention_mask)
        return self.lm_head(x)


def init_model(config: ModelConfig, seed: int | None = None) -> MaskedConceptModel:
    """Build a model with deterministic parameter initialization.

    The same (config, seed) always yields bitwise-identical parameters:
    weights are drawn from one seeded generator in registration order.
    """
    model = MaskedConceptModel(config)
    g = torch.Generator().manual_seed(config.seed if seed is None else seed)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if "norm" in name:
                p.fill_(1.0 if name.endswith("weight") else 0.0)
            elif name.endswith("bias"):
                p.fill_(0.0)
            else:
                p.copy_(torch.normal(0.0, 0.02, p.shape, generator=g))
    return model
