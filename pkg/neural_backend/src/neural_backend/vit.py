"""A small frozen Vision Transformer used as a fixed feature extractor.

The engine optimizes the output image against ViT features; the
transformer itself is never trained. Without downloadable pretrained
weights, the encoder is randomly initialized from the job seed: random
projections still separate appearance statistics from spatial structure
well enough to drive desk-scale transfers, and the fixed seed keeps every
job reproducible.
"""

from __future__ import annotations

import torch
from torch import nn


class Block(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim * 2), nn.GELU(), nn.Linear(dim * 2, dim)
        )

    def forward(self, x):
        h = self.norm1(x)
        attn_out, _ = self.attn(h, h, h, need_weights=False)
        x = x + attn_out
        return x + self.mlp(self.norm2(x))


class TinyViT(nn.Module):
    """Patch embedding + class token + two attention blocks."""

    def __init__(self, patch: int = 8, dim: int = 64, heads: int = 4,
                 depth: int = 2, seed: int = 0):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        with torch.random.fork_rng():
            torch.manual_seed(int(generator.initial_seed()))
            self.patch = patch
            self.embed = nn.Conv2d(3, dim, kernel_size=patch, stride=patch)
            self.cls_token = nn.Parameter(torch.randn(1, 1, dim) * 0.02)
            self.blocks = nn.ModuleList([Block(dim, heads) for _ in range(depth)])
            self.norm = nn.LayerNorm(dim)
        for p in self.parameters():
            p.requires_grad_(False)
        self._pos_cache: dict[tuple[int, int], torch.Tensor] = {}

    def _positional(self, h: int, w: int, dim: int) -> torch.Tensor:
        key = (h, w)
        if key not in self._pos_cache:
            ys = torch.linspace(-1, 1, h).view(h, 1).expand(h, w).reshape(-1)
            xs = torch.linspace(-1, 1, w).view(1, w).expand(h, w).reshape(-1)
            freqs = torch.arange(1, dim // 4 + 1, dtype=torch.float32)
            enc = torch.cat([
                torch.sin(ys[:, None] * freqs), torch.cos(ys[:, None] * freqs),
                torch.sin(xs[:, None] * freqs), torch.cos(xs[:, None] * freqs),
            ], dim=1)
            if enc.shape[1] < dim:
                enc = torch.nn.functional.pad(enc, (0, dim - enc.shape[1]))
            pos = torch.cat([torch.zeros(1, dim), enc[:, :dim]], dim=0)
            self._pos_cache[key] = pos.unsqueeze(0)
        return self._pos_cache[key]

    def forward(self, image: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """image: (1, 3, H, W) in [0, 1] -> (cls (1, D), patch tokens (1, N, D))."""
        grid = self.embed(image)
        _, dim, gh, gw = grid.shape
        tokens = grid.flatten(2).transpose(1, 2)
        cls = self.cls_token.expand(tokens.shape[0], -1, -1)
        x = torch.cat([cls, tokens], dim=1) + self._positional(gh, gw, dim)
        for block in self.blocks:
            x = block(x)
        x = self.norm(x)
        return x[:, 0], x[:, 1:]
