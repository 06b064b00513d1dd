"""Learnable pattern memory: softmax retrieval over a bank of prototype slots."""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from wednet.datamodel import ValidationError


class MemoryBank(nn.Module):
    """A bank of learned prototype rows queried by projected hidden states.

    Retrieval is a softmax over slot similarities, so every retrieved vector
    is a convex combination of slot rows.  ``forward`` fuses the retrieved
    pattern back into the input with a residual add + layer norm.
    """

    def __init__(self, width: int, n_slots: int = 16) -> None:
        super().__init__()
        bound = 1.0 / math.sqrt(width)
        self.slots = nn.Parameter(torch.empty(n_slots, width).uniform_(-bound, bound))
        self.query = nn.Linear(width, width, bias=True)
        self.norm = nn.LayerNorm(width)

    def retrieval_weights(self, h: torch.Tensor) -> torch.Tensor:
        if h.shape[-1] != self.slots.shape[1]:
            raise ValidationError(
                f"hidden width {h.shape[-1]} != memory width {self.slots.shape[1]}"
            )
        return torch.softmax(self.query(h) @ self.slots.transpose(0, 1), dim=-1)

    def retrieve(self, h: torch.Tensor) -> torch.Tensor:
        return self.retrieval_weights(h) @ self.slots

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        return self.norm(h + self.retrieve(h))
