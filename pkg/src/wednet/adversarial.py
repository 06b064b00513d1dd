"""Weather discriminator with gradient reversal for branch invariance."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from wednet.datamodel import CONDITION_CLASSES, ValidationError


class _ReverseGrad(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x: torch.Tensor, strength: float) -> torch.Tensor:
        ctx.strength = strength
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad: torch.Tensor):
        return grad * (-ctx.strength), None


def grad_reverse(x: torch.Tensor, strength: float = 1.0) -> torch.Tensor:
    """Identity on the forward pass; scales the gradient by -strength on the way back."""
    return _ReverseGrad.apply(x, strength)


class WeatherDiscriminator(nn.Module):
    """Classify the weather condition from pooled intrinsic representations.

    The gradient reversal sits between the pooled features and the branch that
    produced them, so the classifier itself learns normally while the encoder
    upstream is pushed toward weather-invariant features.
    """

    def __init__(self, width: int, hidden: int = 64, grl_strength: float = 1.0) -> None:
        super().__init__()
        if grl_strength < 0:
            raise ValidationError(f"gradient reversal strength must be >= 0, got {grl_strength}")
        self.grl_strength = grl_strength
        self.mlp = nn.Sequential(
            nn.Linear(width, hidden),
            nn.ReLU(),
            nn.Linear(hidden, len(CONDITION_CLASSES)),
        )

    def forward(self, h: torch.Tensor, labels: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if labels.min() < 0 or labels.max() >= len(CONDITION_CLASSES):
            raise ValidationError(
                f"condition labels must index {CONDITION_CLASSES}, got range"
                f" [{int(labels.min())}, {int(labels.max())}]"
            )
        pooled = grad_reverse(h, self.grl_strength).mean(dim=(1, 2))
        logits = self.mlp(pooled)
        return F.cross_entropy(logits, labels), logits
