"""Input embeddings: feature projection plus adaptive and periodic lookup tables."""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from wednet.datamodel import ValidationError

TOD_VOCAB = 24  # hourly granularity
DOW_VOCAB = 7


def _table(rows: int, width: int) -> nn.Parameter:
    bound = 1.0 / math.sqrt(width)
    return nn.Parameter(torch.empty(rows, width).uniform_(-bound, bound))


class StreamEmbedding(nn.Module):
    """Embed one input stream (flow or weather) into hidden width.

    The output concatenates, in order: a learned linear projection of the raw
    features, a per-step adaptive table, a per-parcel adaptive table, and
    time-of-day / day-of-week periodic tables.  Only the first block depends
    on the input values; the rest are position and calendar lookups.
    """

    def __init__(
        self,
        in_features: int,
        hist_len: int,
        n_parcels: int,
        feat_width: int = 12,
        adapt_width: int = 18,
        tod_width: int = 12,
        dow_width: int = 12,
    ) -> None:
        super().__init__()
        self.in_features = in_features
        self.proj = nn.Linear(in_features, feat_width)
        self.temporal_table = _table(hist_len, adapt_width)
        self.spatial_table = _table(n_parcels, adapt_width)
        self.tod_table = _table(TOD_VOCAB, tod_width)
        self.dow_table = _table(DOW_VOCAB, dow_width)
        self.width = feat_width + 2 * adapt_width + tod_width + dow_width

    def forward(self, x: torch.Tensor, tod: torch.Tensor, dow: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4:
            raise ValidationError(f"expected (batch, steps, parcels, features) input, got {tuple(x.shape)}")
        b, t, n, d = x.shape
        if d != self.in_features:
            raise ValidationError(f"input has {d} features, embedding expects {self.in_features}")
        if t != self.temporal_table.shape[0]:
            raise ValidationError(f"window length {t} != embedded length {self.temporal_table.shape[0]}")
        if n != self.spatial_table.shape[0]:
            raise ValidationError(f"parcel count {n} != embedded count {self.spatial_table.shape[0]}")
        if tod.min() < 0 or tod.max() >= TOD_VOCAB:
            raise ValidationError("time_of_day index outside 0..23")
        if dow.min() < 0 or dow.max() >= DOW_VOCAB:
            raise ValidationError("day_of_week index outside 0..6")
        parts = [
            self.proj(x),
            self.temporal_table[None, :, None, :].expand(b, t, n, -1),
            self.spatial_table[None, None, :, :].expand(b, t, n, -1),
            self.tod_table[tod][:, :, None, :].expand(b, t, n, -1),
            self.dow_table[dow][:, :, None, :].expand(b, t, n, -1),
        ]
        return torch.cat(parts, dim=-1)
