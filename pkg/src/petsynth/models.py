"""Generator, discriminator, fusion blocks, and adversarial losses.

The generator is a 3-level 3D U-Net whose bottleneck features are modulated
channel-wise by the text feature (scale gamma, shift beta). The discriminator
consumes the channel-concatenated (T1, PET) pair, projects the text feature
to 32 channels, tiles it spatially, and concatenates it with the image
features before the classification head.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

EPS = 1e-7


@dataclass(frozen=True)
class GeneratorConfig:
    channels: tuple[int, int, int] = (16, 32, 64)
    bottleneck: int = 128
    text_dim: int = 768
    film_hidden: int | None = None  # default text_dim // 4
    use_batchnorm: bool = True

    @property
    def hidden(self) -> int:
        return self.film_hidden if self.film_hidden is not None else max(self.text_dim // 4, 4)


@dataclass(frozen=True)
class DiscriminatorConfig:
    channels: tuple[int, int, int, int] = (16, 32, 64, 128)
    text_dim: int = 768
    text_channels: int = 32
    use_batchnorm: bool = True


class FilmBlock(nn.Module):
    """Two-layer MLP mapping a text feature to per-channel (gamma, beta).

    gamma is emitted as 1 + raw output so zero weights give identity
    modulation.
    """

    def __init__(self, text_dim: int, channels: int, hidden: int | None = None):
        super().__init__()
        hidden = hidden or max(text_dim // 4, 4)
        self.channels = channels
        self.mlp = nn.Sequential(
            nn.Linear(text_dim, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, 2 * channels),
        )

    def forward(self, text: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        raw = self.mlp(text)
        raw_gamma, beta = raw.chunk(2, dim=-1)
        return 1.0 + raw_gamma, beta


def film_modulate(features: torch.Tensor, text: torch.Tensor, block: FilmBlock) -> torch.Tensor:
    """Apply out[c] = gamma[c] * f[c] + beta[c] with (gamma, beta) = block(text)."""
    if features.dim() != 5:
        raise ValueError(f"expected [B, C, X, Y, Z] features, got shape {tuple(features.shape)}")
    if features.shape[1] != block.channels:
        raise ValueError(f"feature channels {features.shape[1]} != FiLM channels {block.channels}")
    gamma, beta = block(text)
    gamma = gamma.view(*gamma.shape, 1, 1, 1)
    beta = beta.view(*beta.shape, 1, 1, 1)
    return gamma * features + beta


class DoubleConv(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, use_batchnorm: bool = True):
        super().__init__()
        layers: list[nn.Module] = []
        for i, (ci, co) in enumerate([(in_ch, out_ch), (out_ch, out_ch)]):
            layers.append(nn.Conv3d(ci, co, kernel_size=3, padding=1))
            if use_batchnorm:
                layers.append(nn.BatchNorm3d(co))
            layers.append(nn.ReLU(inplace=True))
        self.block = nn.Sequential(*layers)

    def forward(self, x):
        return self.block(x)


class GeneratorModel(nn.Module):
    """3-level U-Net with text-modulated bottleneck and sigmoid head."""

    def __init__(self, config: GeneratorConfig = GeneratorConfig()):
        super().__init__()
        self.config = config
        c1, c2, c3 = config.channels
        cb = config.bottleneck
        bn = config.use_batchnorm
        self.enc1 = DoubleConv(1, c1, bn)
        self.enc2 = DoubleConv(c1, c2, bn)
        self.enc3 = DoubleConv(c2, c3, bn)
        self.pool = nn.MaxPool3d(2)
        self.bottleneck = DoubleConv(c3, cb, bn)
        self.film = FilmBlock(config.text_dim, cb, config.hidden)
        self.dec3 = DoubleConv(cb + c3, c3, bn)
        self.dec2 = DoubleConv(c3 + c2, c2, bn)
        self.dec1 = DoubleConv(c2 + c1, c1, bn)
        self.head = nn.Conv3d(c1, 1, kernel_size=1)

    @staticmethod
    def _up(x):
        return F.interpolate(x, scale_factor=2, mode="trilinear", align_corners=False)

    def forward(self, t1: torch.Tensor, text: torch.Tensor) -> torch.Tensor:
        if t1.dim() != 5 or t1.shape[1] != 1:
            raise ValueError(f"expected [B, 1, X, Y, Z] input, got {tuple(t1.shape)}")
        if any(s % 8 != 0 for s in t1.shape[2:]):
            raise ValueError(f"input dims {tuple(t1.shape[2:])} must be divisible by 8 "
                             "(three pooling levels)")
        if text.shape != (t1.shape[0], self.config.text_dim):
            raise ValueError(f"expected text shape ({t1.shape[0]}, {self.config.text_dim}), "
                             f"got {tuple(text.shape)}")
        s1 = self.enc1(t1)
        s2 = self.enc2(self.pool(s1))
        s3 = self.enc3(self.pool(s2))
        b = self.bottleneck(self.pool(s3))
        b = film_modulate(b, text, self.film)
        x = self.dec3(torch.cat([self._up(b), s3], dim=1))
        x = self.dec2(torch.cat([self._up(x), s2], dim=1))
        x = self.dec1(torch.cat([self._up(x), s1], dim=1))
        return torch.sigmoid(self.head(x))


class DiscriminatorModel(nn.Module):
    """4-block strided CNN over (T1, PET) pairs with tiled-text fusion."""

    def __init__(self, config: DiscriminatorConfig = DiscriminatorConfig()):
        super().__init__()
        self.config = config
        chans = config.channels
        bn = config.use_batchnorm
        blocks: list[nn.Module] = []
        in_ch = 2
        for co in chans:
            blocks.append(nn.Conv3d(in_ch, co, kernel_size=3, stride=2, padding=1))
            if bn:
                blocks.append(nn.BatchNorm3d(co))
            blocks.append(nn.LeakyReLU(0.2, inplace=True))
            in_ch = co
        self.trunk = nn.Sequential(*blocks)
        self.text_proj = nn.Linear(config.text_dim, config.text_channels)
        self.post = nn.Conv3d(chans[-1] + config.text_channels, chans[-1], kernel_size=3, padding=1)
        self.fc = nn.Linear(chans[-1], 1)

    def fuse(self, features: torch.Tensor, text: torch.Tensor) -> torch.Tensor:
        """Project text to 32 channels, tile over space, concat with image features."""
        if features.dim() != 5:
            raise ValueError(f"expected [B, C, X, Y, Z] features, got {tuple(features.shape)}")
        if text.shape != (features.shape[0], self.config.text_dim):
            raise ValueError(f"expected text shape ({features.shape[0]}, {self.config.text_dim}), "
                             f"got {tuple(text.shape)}")
        proj = self.text_proj(text)
        tiled = proj.view(*proj.shape, 1, 1, 1).expand(-1, -1, *features.shape[2:])
        return torch.cat([features, tiled], dim=1)

    def forward(self, pet: torch.Tensor, t1: torch.Tensor, text: torch.Tensor) -> torch.Tensor:
        if pet.shape != t1.shape:
            raise ValueError(f"pet shape {tuple(pet.shape)} != t1 shape {tuple(t1.shape)}")
        divisor = 2 ** len(self.config.channels)
        if any(s % divisor != 0 for s in pet.shape[2:]):
            raise ValueError(f"input dims {tuple(pet.shape[2:])} must be divisible by "
                             f"{divisor} ({len(self.config.channels)} stride-2 blocks)")
        x = self.trunk(torch.cat([pet, t1], dim=1))
        x = self.fuse(x, text)
        x = F.leaky_relu(self.post(x), 0.2)
        x = x.mean(dim=(2, 3, 4))
        return torch.sigmoid(self.fc(x)).squeeze(-1)


def disc_fuse(features: torch.Tensor, text: torch.Tensor, d: DiscriminatorModel) -> torch.Tensor:
    return d.fuse(features, text)


# ---------------------------------------------------------------------------
# Losses (probabilities clamped to [EPS, 1 - EPS])


def _clamp(p: torch.Tensor) -> torch.Tensor:
    return p.clamp(EPS, 1.0 - EPS)


def loss_g(d_fake: torch.Tensor) -> torch.Tensor:
    """Adversarial generator loss: mean of -log D(fake)."""
    return -torch.log(_clamp(d_fake)).mean()


def loss_mse(y_hat: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    if y_hat.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(y_hat.shape)} vs {tuple(y.shape)}")
    return ((y - y_hat) ** 2).mean()


def loss_g_total(lg: torch.Tensor, lmse: torch.Tensor, lam: float = 10.0) -> torch.Tensor:
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return lg + lam * lmse


def loss_d(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """Discriminator loss: mean of -log D(real) - log(1 - D(fake))."""
    return (-torch.log(_clamp(d_real)) - torch.log(1.0 - _clamp(d_fake))).mean()


# ---------------------------------------------------------------------------
# Volume-level inference wrappers


def generate(t1, text_feature, g: GeneratorModel):
    """Synthesize a PET-SUVR volume from a T1 volume and a text feature."""
    from .volume import Volume, VolumeKind

    x = torch.from_numpy(t1.data.copy()).to(next(g.parameters()).dtype)[None, None]
    t = torch.from_numpy(text_feature.values.copy()).to(x.dtype)[None]
    was_training = g.training
    g.eval()
    with torch.no_grad():
        out = g(x, t)
    if was_training:
        g.train()
    return Volume(out[0, 0].numpy(), spacing=t1.spacing, kind=VolumeKind.PET_SUVR)


def discriminate(pet, t1, text_feature, d: DiscriminatorModel) -> float:
    """Probability that a PET volume is real, given its T1 and text context."""
    dtype = next(d.parameters()).dtype
    p = torch.from_numpy(pet.data.copy()).to(dtype)[None, None]
    x = torch.from_numpy(t1.data.copy()).to(dtype)[None, None]
    t = torch.from_numpy(text_feature.values.copy()).to(dtype)[None]
    was_training = d.training
    d.eval()
    with torch.no_grad():
        out = d(p, x, t)
    if was_training:
        d.train()
    return float(out.item())


# ---------------------------------------------------------------------------
# Checkpoint container

CHECKPOINT_VERSION = 1


def save_checkpoint(path, model: nn.Module, kind: str, extra: dict | None = None) -> None:
    if isinstance(model, GeneratorModel):
        cfg = model.config.__dict__
    elif isinstance(model, DiscriminatorModel):
        cfg = model.config.__dict__
    else:
        cfg = getattr(model, "config", None)
        cfg = cfg.__dict__ if hasattr(cfg, "__dict__") else (cfg or {})
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "kind": kind,
        "config": dict(cfg),
        "params": {k: v.detach().to(torch.float32).cpu() for k, v in model.state_dict().items()},
    }
    if extra:
        payload["extra"] = extra
    torch.save(payload, path)


def load_checkpoint(path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('format_version')}")
    return payload


def load_generator(path) -> GeneratorModel:
    payload = load_checkpoint(path)
    if payload["kind"] != "generator":
        raise ValueError(f"checkpoint kind {payload['kind']!r} is not a generator")
    cfg = payload["config"]
    cfg["channels"] = tuple(cfg["channels"])
    model = GeneratorModel(GeneratorConfig(**cfg))
    model.load_state_dict(payload["params"])
    model.eval()
    return model


def load_discriminator(path) -> DiscriminatorModel:
    payload = load_checkpoint(path)
    if payload["kind"] != "discriminator":
        raise ValueError(f"checkpoint kind {payload['kind']!r} is not a discriminator")
    cfg = payload["config"]
    cfg["channels"] = tuple(cfg["channels"])
    model = DiscriminatorModel(DiscriminatorConfig(**cfg))
    model.load_state_dict(payload["params"])
    model.eval()
    return model
