"""Model assembly: configuration, forward pass over all variants, checkpoints."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from wednet import container
from wednet.adversarial import WeatherDiscriminator
from wednet.datamodel import ValidationError
from wednet.embed import StreamEmbedding
from wednet.encoders import AttentionBundle, EncoderStack, average_maps
from wednet.fusion import AdaptiveFusion, FlowPredictor
from wednet.memory import MemoryBank

VARIANTS = ("full", "no_weather", "self_attn_weather", "no_memory", "no_discriminator")


@dataclass(frozen=True)
class ModelConfig:
    n_parcels: int
    hist_len: int = 12
    horizon: int = 12
    flow_features: int = 2
    weather_features: int = 3
    feat_width: int = 12
    adapt_width: int = 18
    tod_width: int = 12
    dow_width: int = 12
    n_blocks: int = 4
    n_heads: int = 4
    ffn_factor: int = 4
    dropout: float = 0.1
    memory_slots: int = 16
    disc_hidden: int = 64
    pred_hidden: int = 256
    grl_strength: float = 1.0
    variant: str = "full"

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.hidden_width % self.n_heads != 0:
            raise ValidationError(
                f"hidden width {self.hidden_width} not divisible by {self.n_heads} heads"
            )

    @property
    def hidden_width(self) -> int:
        return self.feat_width + 2 * self.adapt_width + self.tod_width + self.dow_width

    @property
    def has_weather(self) -> bool:
        return self.variant != "no_weather"

    @property
    def has_memory(self) -> bool:
        return self.variant != "no_memory"

    @property
    def has_discriminator(self) -> bool:
        return self.variant != "no_discriminator"

    @classmethod
    def compact(cls, n_parcels: int, **overrides) -> "ModelConfig":
        """Desk-scale configuration for single-core CPU experiments; same code
        path, smaller widths, and no dropout (the mask RNG dominates runtime
        at this scale)."""
        base = dict(
            n_parcels=n_parcels,
            feat_width=8,
            adapt_width=8,
            tod_width=6,
            dow_width=6,
            n_blocks=1,
            n_heads=4,
            dropout=0.0,
            memory_slots=8,
            disc_hidden=32,
            pred_hidden=96,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def reduced(cls, n_parcels: int = 4, hist_len: int = 3, **overrides) -> "ModelConfig":
        """Minimal width-8 configuration used by gradient-oracle tests."""
        base = dict(
            n_parcels=n_parcels,
            hist_len=hist_len,
            horizon=2,
            feat_width=2,
            adapt_width=2,
            tod_width=1,
            dow_width=1,
            n_blocks=1,
            n_heads=1,
            ffn_factor=2,
            dropout=0.0,
            memory_slots=2,
            disc_hidden=8,
            pred_hidden=16,
        )
        base.update(overrides)
        return cls(**base)


@dataclass
class ModelOutput:
    prediction: torch.Tensor  # (B, T', N, d_f)
    loss_dis: torch.Tensor | None = None
    logits: torch.Tensor | None = None
    alpha: torch.Tensor | None = None
    h_intr: torch.Tensor | None = None
    h_weat: torch.Tensor | None = None
    self_temporal: list[torch.Tensor] = field(default_factory=list)
    self_spatial: list[torch.Tensor] = field(default_factory=list)
    cross_temporal: list[torch.Tensor] = field(default_factory=list)
    cross_spatial: list[torch.Tensor] = field(default_factory=list)


class WEDNet(nn.Module):
    """Weather-effect disentanglement network.

    Two encoder branches produce an intrinsic and a weather-induced
    representation; each is enhanced by its own memory bank; an adaptive gate
    fuses them for the predictor while a gradient-reversed discriminator
    pushes the intrinsic branch toward weather invariance.  Ablation variants
    remove components structurally (the parameters do not exist).
    """

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.cfg = cfg
        w = cfg.hidden_width
        embeds = {"flow": StreamEmbedding(
            cfg.flow_features, cfg.hist_len, cfg.n_parcels,
            cfg.feat_width, cfg.adapt_width, cfg.tod_width, cfg.dow_width,
        )}
        if cfg.has_weather:
            embeds["weather"] = StreamEmbedding(
                cfg.weather_features, cfg.hist_len, cfg.n_parcels,
                cfg.feat_width, cfg.adapt_width, cfg.tod_width, cfg.dow_width,
            )
        self.embed = nn.ModuleDict(embeds)
        self.istenc = EncoderStack(w, cfg.n_heads, cfg.n_blocks, cfg.ffn_factor, cfg.dropout)
        if cfg.has_weather:
            if cfg.variant == "self_attn_weather":
                self.mix = nn.Linear(2 * w, w)
            self.wstenc = EncoderStack(w, cfg.n_heads, cfg.n_blocks, cfg.ffn_factor, cfg.dropout)
        if cfg.has_memory:
            banks = {"intr": MemoryBank(w, cfg.memory_slots)}
            if cfg.has_weather:
                banks["weat"] = MemoryBank(w, cfg.memory_slots)
            self.mem = nn.ModuleDict(banks)
        if cfg.has_weather:
            self.gate = AdaptiveFusion(w)
        self.pred = FlowPredictor(w, cfg.hist_len, cfg.horizon, cfg.flow_features, cfg.pred_hidden)
        # Constructed last so variants without it share the init RNG stream
        # for every other module.
        if cfg.has_discriminator:
            self.disc = WeatherDiscriminator(w, cfg.disc_hidden, cfg.grl_strength)

    def forward(
        self,
        flow: torch.Tensor,
        weather: torch.Tensor | None,
        tod: torch.Tensor,
        dow: torch.Tensor,
        condition: torch.Tensor | None = None,
        collect_attention: bool = False,
    ) -> ModelOutput:
        cfg = self.cfg
        h_f = self.embed["flow"](flow, tod, dow)
        h_intr, self_t, self_s = self.istenc(h_f)

        h_weat, cross_t, cross_s = None, [], []
        if cfg.has_weather:
            if weather is None:
                raise ValidationError(f"variant {cfg.variant!r} requires a weather tensor")
            h_w = self.embed["weather"](weather, tod, dow)
            if cfg.variant == "self_attn_weather":
                mixed = self.mix(torch.cat([h_f, h_w], dim=-1))
                h_weat, cross_t, cross_s = self.wstenc(mixed)
            else:
                h_weat, cross_t, cross_s = self.wstenc(h_f, kv=h_w)

        loss_dis, logits = None, None
        if cfg.has_discriminator and condition is not None:
            loss_dis, logits = self.disc(h_intr, condition)

        hi = self.mem["intr"](h_intr) if cfg.has_memory else h_intr
        alpha = None
        if cfg.has_weather:
            hw = self.mem["weat"](h_weat) if cfg.has_memory else h_weat
            h_fuse, alpha = self.gate(hi, hw)
        else:
            h_fuse = hi
        prediction = self.pred(h_fuse)

        out = ModelOutput(
            prediction=prediction,
            loss_dis=loss_dis,
            logits=logits,
            alpha=alpha,
            h_intr=h_intr,
            h_weat=h_weat,
        )
        if collect_attention:
            out.self_temporal, out.self_spatial = self_t, self_s
            out.cross_temporal, out.cross_spatial = cross_t, cross_s
        return out

    def attention_bundle(
        self,
        flow: torch.Tensor,
        weather: torch.Tensor | None,
        tod: torch.Tensor,
        dow: torch.Tensor,
    ) -> AttentionBundle:
        """Head- and block-averaged maps for one sample (batch of one), eval mode."""
        if flow.shape[0] != 1:
            raise ValidationError("attention extraction expects a single-sample batch")
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                out = self.forward(flow, weather, tod, dow, collect_attention=True)
        finally:
            self.train(was_training)
        return AttentionBundle(
            self_temporal=average_maps(out.self_temporal),
            self_spatial=average_maps(out.self_spatial),
            cross_temporal=average_maps(out.cross_temporal) if out.cross_temporal else None,
            cross_spatial=average_maps(out.cross_spatial) if out.cross_spatial else None,
        )

    def parameter_groups(self) -> dict[str, list[str]]:
        """Parameter names keyed by top-level component."""
        groups: dict[str, list[str]] = {}
        for name, _ in self.named_parameters():
            top = name.split(".")[0]
            if top in ("embed", "mem"):
                top = ".".join(name.split(".")[:2])
            groups.setdefault(top, []).append(name)
        return groups


def build_model(cfg: ModelConfig, seed: int | None = None, dtype: torch.dtype = torch.float32) -> WEDNet:
    """Construct a model with a deterministic parameter init."""
    if seed is not None:
        torch.manual_seed(seed)
    return WEDNet(cfg).to(dtype)


def save_checkpoint(path: str | Path, model: WEDNet, extra_meta: dict | None = None) -> Path:
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    meta = {
        "kind": "checkpoint",
        "model_config": asdict(model.cfg),
        **(extra_meta or {}),
    }
    return container.save_blobs(path, arrays, meta)


def load_checkpoint(path: str | Path, dtype: torch.dtype = torch.float32) -> tuple[WEDNet, dict]:
    arrays, meta = container.load_blobs(path)
    if meta.get("kind") != "checkpoint":
        raise ValidationError(f"{path} does not hold a checkpoint (kind={meta.get('kind')!r})")
    cfg = ModelConfig(**meta["model_config"])
    model = WEDNet(cfg).to(dtype)
    state = {k: torch.from_numpy(np.ascontiguousarray(v)).to(dtype) for k, v in arrays.items()}
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise ValidationError(f"checkpoint does not match its recorded configuration: {exc}") from exc
    model.eval()
    return model, meta


def variant_config(cfg: ModelConfig, variant: str) -> ModelConfig:
    return replace(cfg, variant=variant)
