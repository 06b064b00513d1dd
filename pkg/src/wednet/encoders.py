"""Dual-branch spatio-temporal encoders.

The intrinsic encoder runs self-attention over the flow stream; the
weather-induced encoder runs cross-attention with flow-side queries against
weather-side keys/values.  Each block applies a temporal sub-layer followed
by a spatial sub-layer, both post-norm residual transformer units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from wednet.datamodel import NumericalError


@dataclass
class AttentionBundle:
    """Head- and block-averaged attention maps, each row-stochastic.

    Temporal maps have shape (parcels, steps, steps); spatial maps
    (steps, parcels, parcels).  ``map[..., q, k]`` is the weight that query
    position q places on key position k, i.e. the influence of k on q.
    """

    self_temporal: np.ndarray
    self_spatial: np.ndarray
    cross_temporal: np.ndarray | None = None
    cross_spatial: np.ndarray | None = None

    def named_maps(self) -> dict[str, np.ndarray]:
        out = {"self_temporal": self.self_temporal, "self_spatial": self.self_spatial}
        if self.cross_temporal is not None:
            out["cross_temporal"] = self.cross_temporal
        if self.cross_spatial is not None:
            out["cross_spatial"] = self.cross_spatial
        return out


class AttentionLayer(nn.Module):
    """One attention sub-layer: multi-head attention + output projection,
    residual, norm, then feed-forward with a second residual + norm.

    ``axis`` picks the mixing dimension: "time" attends across steps within
    each parcel, "space" across parcels within each step.  Returns the
    sub-layer output and the head-averaged attention probabilities.
    """

    def __init__(self, width: int, n_heads: int, axis: str, ffn_factor: int = 4, dropout: float = 0.1) -> None:
        super().__init__()
        if axis not in ("time", "space"):
            raise ValueError(f"axis must be 'time' or 'space', got {axis!r}")
        if width % n_heads != 0:
            raise ValueError(f"width {width} not divisible by {n_heads} heads")
        self.axis = axis
        self.n_heads = n_heads
        self.head_dim = width // n_heads
        self.w_q = nn.Linear(width, width, bias=False)
        self.w_k = nn.Linear(width, width, bias=False)
        self.w_v = nn.Linear(width, width, bias=False)
        self.w_o = nn.Linear(width, width, bias=False)
        self.attn_drop = nn.Dropout(dropout)
        self.norm1 = nn.LayerNorm(width)
        self.norm2 = nn.LayerNorm(width)
        self.ffn = nn.Sequential(
            nn.Linear(width, ffn_factor * width),
            nn.GELU(),
            nn.Dropout(dropout),
            nn.Linear(ffn_factor * width, width),
        )

    def _split_heads(self, x: torch.Tensor) -> torch.Tensor:
        b, t, n, _ = x.shape
        x = x.view(b, t, n, self.n_heads, self.head_dim)
        if self.axis == "time":
            return x.permute(0, 2, 3, 1, 4)  # (B, N, H, T, hd)
        return x.permute(0, 1, 3, 2, 4)  # (B, T, H, N, hd)

    def _merge_heads(self, x: torch.Tensor) -> torch.Tensor:
        if self.axis == "time":
            x = x.permute(0, 3, 1, 2, 4)  # (B, T, N, H, hd)
        else:
            x = x.permute(0, 1, 3, 2, 4)
        b, t, n = x.shape[:3]
        return x.reshape(b, t, n, self.n_heads * self.head_dim)

    def forward(self, q_src: torch.Tensor, kv_src: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        q = self._split_heads(self.w_q(q_src))
        k = self._split_heads(self.w_k(kv_src))
        v = self._split_heads(self.w_v(kv_src))
        logits = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        probs = torch.softmax(logits, dim=-1)
        mixed = self._merge_heads(self.attn_drop(probs) @ v)
        attended = self.norm1(q_src + self.w_o(mixed))
        out = self.norm2(attended + self.ffn(attended))
        return out, probs.mean(dim=2)  # head-averaged map


class EncoderBlock(nn.Module):
    """Temporal sub-layer followed by spatial sub-layer.

    Self-attention (``kv=None``) feeds each sub-layer's output into the next
    as both query and key/value; cross-attention keeps ``kv`` fixed as the
    key/value source for both sub-layers.
    """

    def __init__(self, width: int, n_heads: int, ffn_factor: int = 4, dropout: float = 0.1) -> None:
        super().__init__()
        self.temporal = AttentionLayer(width, n_heads, "time", ffn_factor, dropout)
        self.spatial = AttentionLayer(width, n_heads, "space", ffn_factor, dropout)

    def forward(
        self, x: torch.Tensor, kv: torch.Tensor | None = None
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        x, a_t = self.temporal(x, x if kv is None else kv)
        x, a_s = self.spatial(x, x if kv is None else kv)
        return x, a_t, a_s


class EncoderStack(nn.Module):
    """A stack of encoder blocks sharing one key/value sourcing mode."""

    def __init__(self, width: int, n_heads: int, n_blocks: int, ffn_factor: int = 4, dropout: float = 0.1) -> None:
        super().__init__()
        self.n_blocks = n_blocks
        for b in range(n_blocks):
            self.add_module(f"block{b}", EncoderBlock(width, n_heads, ffn_factor, dropout))

    def blocks(self):
        return (getattr(self, f"block{b}") for b in range(self.n_blocks))

    def forward(
        self, x: torch.Tensor, kv: torch.Tensor | None = None
    ) -> tuple[torch.Tensor, list[torch.Tensor], list[torch.Tensor]]:
        temporal_maps, spatial_maps = [], []
        for b, block in enumerate(self.blocks()):
            x, a_t, a_s = block(x, kv)
            if not torch.isfinite(x).all():
                raise NumericalError(f"non-finite activations leaving encoder block {b}")
            temporal_maps.append(a_t)
            spatial_maps.append(a_s)
        return x, temporal_maps, spatial_maps


def average_maps(maps: list[torch.Tensor]) -> np.ndarray:
    """Mean over blocks for a single-sample batch; returns a numpy map."""
    stacked = torch.stack([m[0] for m in maps], dim=0)
    return stacked.mean(dim=0).detach().cpu().numpy()
