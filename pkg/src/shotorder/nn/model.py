"""Micro video transformer for shot ordering.

Token layout: ``[cls | k * segments * patches visual tokens | 4 cinematology tokens]``.
The encoder is a plain pre-norm transformer; the classification head reads
the class token and emits k! ordering logits.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..errors import DimensionError, NumericError
from .config import CATEGORIES, CinematologyInput, ModelConfig


def _trunc_normal_(t, std=0.02):
    nn.init.trunc_normal_(t, std=std, a=-2 * std, b=2 * std)


class Attention(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.last_weights = None
        self.record = False

    def forward(self, x):
        B, T, D = x.shape
        h = self.heads
        qkv = self.qkv(x).reshape(B, T, 3, h, D // h).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        if self.record:
            scores = (q @ k.transpose(-2, -1)) * (1.0 / math.sqrt(D // h))
            weights = scores.softmax(dim=-1)
            self.last_weights = weights.detach()
            out = weights @ v
        else:
            out = F.scaled_dot_product_attention(q, k, v)
        out = out.transpose(1, 2).reshape(B, T, D)
        return self.proj(out)


class Block(nn.Module):
    def __init__(self, dim, heads, hidden):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class ShotOrderTransformer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        # submodule constructors draw default inits from the global generator;
        # keep construction side-effect free
        with torch.random.fork_rng(devices=[]):
            self._build(config)

    def _build(self, config: ModelConfig):
        self.config = c = config
        D = c.embed_dim
        patch_dim = c.patch_size * c.patch_size * c.channels
        self.patch_embed = nn.Linear(patch_dim, D)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, D))
        # positional terms indexed by (shot slot, segment, patch position)
        self.pos_cls = nn.Parameter(torch.zeros(1, 1, D))
        self.pos_slot = nn.Parameter(torch.zeros(c.k, D))
        self.pos_segment = nn.Parameter(torch.zeros(c.segments_per_shot, D))
        self.pos_patch = nn.Parameter(torch.zeros(c.patches_per_frame, D))
        self.cine_proj = nn.ModuleList(
            nn.Linear(c.k * card + c.num_genres, D) for card in c.category_cardinalities
        )
        self.pos_cine = nn.Parameter(torch.zeros(len(CATEGORIES), D))
        self.blocks = nn.ModuleList(Block(D, c.num_heads, c.mlp_hidden) for _ in range(c.num_layers))
        self.norm = nn.LayerNorm(D)
        self.head = nn.Linear(D, c.num_classes)
        self.reset_parameters(c.seed)

    def reset_parameters(self, seed):
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            for name, p in self.named_parameters():
                if name.endswith("bias"):
                    nn.init.zeros_(p)
                elif "norm" in name:
                    nn.init.ones_(p)
                else:
                    _trunc_normal_(p, self.config.init_std)

    # -- token builders -------------------------------------------------

    def patch_embed_tokens(self, frames: torch.Tensor) -> torch.Tensor:
        """frames: (B, k, S, H, W, C) -> (B, 1 + k*S*P, D) including the class token."""
        c = self.config
        B, k, S, H, W, C = frames.shape
        if (k, H, W, C) != (c.k, c.frame_height, c.frame_width, c.channels) or S > c.segments_per_shot:
            raise DimensionError(
                f"frames {tuple(frames.shape)} do not match config "
                f"(k={c.k}, S<={c.segments_per_shot}, {c.frame_height}x{c.frame_width}x{c.channels})"
            )
        p = c.patch_size
        x = frames.reshape(B, k, S, H // p, p, W // p, p, C)
        x = x.permute(0, 1, 2, 3, 5, 4, 6, 7).reshape(B, k, S, (H // p) * (W // p), p * p * C)
        tok = self.patch_embed(x)
        pos = (
            self.pos_slot[:, None, None, :]
            + self.pos_segment[None, :S, None, :]
            + self.pos_patch[None, None, :, :]
        )
        tok = (tok + pos).reshape(B, -1, c.embed_dim)
        cls = (self.cls_token + self.pos_cls).expand(B, -1, -1)
        return torch.cat([cls, tok], dim=1)

    def cinematology_tokens(self, categories, genre) -> torch.Tensor:
        """categories: 4 tensors (B, k, card_c); genre: (B, G) -> (B, 4, D)."""
        c = self.config
        toks = []
        for proj, vecs, card in zip(self.cine_proj, categories, c.category_cardinalities):
            if vecs.shape[1:] != (c.k, card):
                raise DimensionError(f"category block {tuple(vecs.shape)} does not match (k={c.k}, {card})")
            flat = torch.cat([vecs.reshape(vecs.shape[0], -1), genre], dim=1)
            toks.append(proj(flat))
        return torch.stack(toks, dim=1) + self.pos_cine

    def forward(self, frames, cine=None, check_finite=True):
        x = self.patch_embed_tokens(frames)
        if self.config.use_cinematology:
            if cine is None:
                raise DimensionError("use_cinematology is set but no cinematology input was given")
            x = torch.cat([x, self.cinematology_tokens(*cine)], dim=1)
        for i, block in enumerate(self.blocks):
            x = block(x)
            if check_finite and not torch.isfinite(x).all():
                raise NumericError(f"non-finite activations after block {i}")
        logits = self.head(self.norm(x[:, 0]))
        if check_finite and not torch.isfinite(logits).all():
            raise NumericError("non-finite activations in classification head")
        return logits

    def record_attention(self, flag=True):
        for b in self.blocks:
            b.attn.record = flag
            b.attn.last_weights = None

    def attention_maps(self):
        return [b.attn.last_weights for b in self.blocks]


def collate_cinematology(items: list[CinematologyInput], config: ModelConfig, dtype=torch.float32):
    for it in items:
        it.check(config)
    cats = [
        torch.from_numpy(np.stack([it.categories[i] for it in items])).to(dtype)
        for i in range(len(CATEGORIES))
    ]
    genre = torch.from_numpy(np.stack([it.genre_vector for it in items])).to(dtype)
    return cats, genre


def parameter_count(config: ModelConfig) -> int:
    return sum(p.numel() for p in ShotOrderTransformer(config).parameters())
