"""Adaptive gated fusion of the two branches, prediction head, and objective."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from wednet.datamodel import NumericalError, ValidationError


class AdaptiveFusion(nn.Module):
    """Sigmoid-gated convex combination of intrinsic and weather branches.

    The gate sees both branch states and emits a per-position, per-feature
    weight alpha in (0, 1); the fused state is alpha * intrinsic +
    (1 - alpha) * weather.
    """

    def __init__(self, width: int) -> None:
        super().__init__()
        self.proj = nn.Linear(2 * width, width)

    def forward(self, h_intr: torch.Tensor, h_weat: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if h_intr.shape != h_weat.shape:
            raise ValidationError(
                f"branch shapes differ: {tuple(h_intr.shape)} vs {tuple(h_weat.shape)}"
            )
        alpha = torch.sigmoid(self.proj(torch.cat([h_intr, h_weat], dim=-1)))
        return alpha * h_intr + (1.0 - alpha) * h_weat, alpha


class FlowPredictor(nn.Module):
    """Parcel-shared MLP from the flattened history representation to the forecast."""

    def __init__(self, width: int, hist_len: int, horizon: int, n_features: int, hidden: int = 256) -> None:
        super().__init__()
        self.horizon = horizon
        self.n_features = n_features
        self.net = nn.Sequential(
            nn.Linear(hist_len * width, hidden),
            nn.ReLU(),
            nn.Linear(hidden, horizon * n_features),
        )

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        b, t, n, d = h.shape
        flat = h.permute(0, 2, 1, 3).reshape(b, n, t * d)
        out = self.net(flat).view(b, n, self.horizon, self.n_features)
        return out.permute(0, 2, 1, 3)  # (B, T', N, d_f)


@dataclass(frozen=True)
class LossReport:
    """Scalar breakdown of one objective evaluation; total = pre + eta * dis."""

    loss_pre: float
    loss_dis: float
    eta: float
    total: float


def compute_loss(
    prediction: torch.Tensor,
    target: torch.Tensor,
    loss_dis: torch.Tensor | None,
    eta: float,
) -> tuple[torch.Tensor, LossReport]:
    """Mean absolute error plus the weighted adversarial term.

    With eta == 0 (or no discriminator) the total is exactly the prediction
    loss and the adversarial value is diagnostic only.
    """
    if eta < 0:
        raise ValidationError(f"eta must be >= 0, got {eta}")
    if prediction.shape != target.shape:
        raise ValidationError(
            f"prediction shape {tuple(prediction.shape)} != target {tuple(target.shape)}"
        )
    if not torch.isfinite(prediction).all():
        raise NumericalError("non-finite prediction entries")
    if not torch.isfinite(target).all():
        raise NumericalError("non-finite target entries")
    loss_pre = (prediction - target).abs().mean()
    dis_value = 0.0 if loss_dis is None else float(loss_dis.detach())
    if loss_dis is not None and eta > 0:
        total = loss_pre + eta * loss_dis
    else:
        total = loss_pre
    # the report recombines its own float64 parts so total stays reproducible
    # from them regardless of the tensor dtype
    pre_value = float(loss_pre.detach())
    return total, LossReport(pre_value, dis_value, float(eta), pre_value + eta * dis_value)
