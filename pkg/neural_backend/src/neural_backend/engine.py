"""Appearance transfer by direct image optimization against ViT features.

Objective structure follows the splicing recipe: pull the output's global
appearance (class token plus token statistics) toward the style image
while pinning the self-similarity of its patch tokens to the content
image, with a small pixel-space identity term that anchors the output when
content and style coincide. The feature extractor is frozen; only the
output pixels are optimized, with Adam at the configured learning rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .params import NeuralJobParams
from .vit import TinyViT

APPEARANCE_WEIGHT = 1.0
STRUCTURE_WEIGHT = 1.0
IDENTITY_WEIGHT = 0.1


@dataclass
class LossRow:
    epoch: int
    total: float
    appearance: float
    structure: float
    identity: float


def _self_similarity(tokens: torch.Tensor) -> torch.Tensor:
    normed = torch.nn.functional.normalize(tokens, dim=-1)
    return normed @ normed.transpose(1, 2)


def _appearance_stats(cls: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
    return torch.cat([cls, tokens.mean(dim=1), tokens.std(dim=1)], dim=1)


class TransferEngine:
    def __init__(self, params: NeuralJobParams, seed: int):
        self.params = params
        self.device = torch.device(params.device)
        self.vit = TinyViT(seed=seed).to(self.device)
        self.seed = seed

    def run(self, content: torch.Tensor, style: torch.Tensor,
            on_checkpoint=None) -> tuple[torch.Tensor, list[LossRow]]:
        """content/style: (1, 3, H, W) floats in [0, 1]. Returns the
        optimized image and one loss row per epoch."""
        torch.manual_seed(self.seed)
        content = content.to(self.device)
        style = style.to(self.device)
        with torch.no_grad():
            style_cls, style_tokens = self.vit(style)
            style_app = _appearance_stats(style_cls, style_tokens)
            content_cls, content_tokens = self.vit(content)
            content_sim = _self_similarity(content_tokens)

        output = content.clone().requires_grad_(True)
        optimizer = torch.optim.Adam([output], lr=self.params.learning_rate)
        rows: list[LossRow] = []
        checkpoints = set(self.params.checkpoint_epochs)
        for epoch in range(1, self.params.epochs + 1):
            optimizer.zero_grad()
            out_cls, out_tokens = self.vit(output)
            appearance = torch.nn.functional.mse_loss(
                _appearance_stats(out_cls, out_tokens), style_app)
            structure = torch.nn.functional.mse_loss(
                _self_similarity(out_tokens), content_sim)
            identity = torch.nn.functional.mse_loss(output, content)
            total = (APPEARANCE_WEIGHT * appearance
                     + STRUCTURE_WEIGHT * structure
                     + IDENTITY_WEIGHT * identity)
            total.backward()
            optimizer.step()
            rows.append(LossRow(
                epoch=epoch,
                total=float(total.detach()),
                appearance=float(appearance.detach()),
                structure=float(structure.detach()),
                identity=float(identity.detach()),
            ))
            if on_checkpoint is not None and epoch in checkpoints:
                on_checkpoint(epoch, output.detach().clamp(0, 1))
        return output.detach().clamp(0, 1), rows
