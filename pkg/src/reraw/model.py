"""The RGB-to-RAW network.

Four pieces, composed in :class:`ReRawModel`:

* a color reconstruction trunk turning a (2P+2)x(2P+2) RGB patch into a
  PxP latent using only valid convolutions, so every latent site has a
  receptive field of exactly 4x4 input pixels (this locality is what makes
  tiled full-image inference exact);
* a global context encoder squeezing the downscaled full image into a
  vector that multiplicatively modulates the latent;
* a bank of independent prediction heads, one per gamma value, each
  emitting a sigmoid-bounded candidate raw patch in gamma space;
* a scaling encoder predicting softmax weights that convexly combine the
  re-linearized candidates into the final raw patch.

All spatial tensors are NCHW. Candidate values live in [0, 1] so the
1/gamma re-linearization stays in [0, 1].
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import torch
from torch import nn

from .errors import CheckpointError, ConfigError, ShapeError

CONTEXT_SIZE = 128
DEGAMMA_CLAMP_EPS = 1e-6
CHECKPOINT_VERSION = 1


def default_gamma_ladder(n_heads: int) -> tuple[float, ...]:
    """Evenly spaced ladder ending at 1: n=10 gives 0.1, 0.2, ..., 1.0."""
    return tuple((i + 1) / n_heads for i in range(n_heads))


@dataclass(frozen=True)
class ReRawConfig:
    n_heads: int = 10
    gammas: tuple[float, ...] = field(default=())
    trunk_width: int = 128
    stem_channels: int = 96
    n_residual_blocks: int = 8
    context_dim: int = 128
    use_context_encoder: bool = True
    use_scaling_encoder: bool = True
    encoder_width: int = 32
    encoder_blocks: int = 8
    norm: str = "batch"

    def __post_init__(self):
        if self.n_heads < 1:
            raise ConfigError(f"n_heads must be >= 1, got {self.n_heads}")
        if not self.gammas:
            object.__setattr__(self, "gammas", default_gamma_ladder(self.n_heads))
        else:
            object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        if len(self.gammas) != self.n_heads:
            raise ConfigError(
                f"gamma ladder length {len(self.gammas)} != n_heads {self.n_heads}"
            )
        if any(not 0 < g <= 1 for g in self.gammas):
            raise ConfigError(f"gammas must lie in (0, 1], got {self.gammas}")
        if self.stem_channels % 3:
            raise ConfigError(f"stem_channels must be divisible by 3, got {self.stem_channels}")
        if self.use_context_encoder and self.context_dim != self.trunk_width:
            raise ConfigError(
                "context_dim must equal trunk_width for multiplicative modulation, "
                f"got {self.context_dim} vs {self.trunk_width}"
            )
        if self.norm not in ("batch", "none"):
            raise ConfigError(f"norm must be 'batch' or 'none', got {self.norm!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gammas"] = list(self.gammas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ReRawConfig":
        d = dict(d)
        if d.get("gammas"):
            d["gammas"] = tuple(d["gammas"])
        return cls(**d)


def _norm_layer(kind: str, channels: int) -> nn.Module:
    return nn.BatchNorm2d(channels) if kind == "batch" else nn.Identity()


class ResidualPointwiseBlock(nn.Module):
    """1x1 conv -> norm -> ReLU with an additive skip; spatially pointwise."""

    def __init__(self, width: int, norm: str):
        super().__init__()
        self.conv = nn.Conv2d(width, width, 1, bias=norm == "none")
        self.norm = _norm_layer(norm, width)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        return x + self.act(self.norm(self.conv(x)))


class ColorReconstructionNet(nn.Module):
    """Valid-convolution trunk: (B, 3, 2P+2, 2P+2) -> (B, width, P, P)."""

    def __init__(self, cfg: ReRawConfig):
        super().__init__()
        bias = cfg.norm == "none"
        self.stem = nn.Sequential(
            nn.Conv2d(3, cfg.stem_channels, 3, stride=1, padding=0, groups=3, bias=bias),
            _norm_layer(cfg.norm, cfg.stem_channels),
            nn.ReLU(inplace=True),
        )
        self.down = nn.Sequential(
            nn.Conv2d(cfg.stem_channels, cfg.trunk_width, 2, stride=2, padding=0, bias=bias),
            _norm_layer(cfg.norm, cfg.trunk_width),
            nn.ReLU(inplace=True),
        )
        self.blocks = nn.Sequential(
            *[ResidualPointwiseBlock(cfg.trunk_width, cfg.norm) for _ in range(cfg.n_residual_blocks)]
        )

    def forward(self, rgb_patch):
        if rgb_patch.dim() != 4 or rgb_patch.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, S, S) patch, got {tuple(rgb_patch.shape)}")
        h, w = rgb_patch.shape[2], rgb_patch.shape[3]
        if h < 4 or w < 4 or h % 2 or w % 2:
            raise ShapeError(f"patch sides must be even and >= 4, got {h}x{w}")
        return self.blocks(self.down(self.stem(rgb_patch)))


class ResidualEncoderBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, stride: int, norm: str):
        super().__init__()
        bias = norm == "none"
        self.body = nn.Sequential(
            nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1, bias=bias),
            _norm_layer(norm, c_out),
            nn.ReLU(inplace=True),
            nn.Conv2d(c_out, c_out, 3, padding=1, bias=bias),
            _norm_layer(norm, c_out),
        )
        if stride != 1 or c_in != c_out:
            self.skip = nn.Sequential(
                nn.Conv2d(c_in, c_out, 1, stride=stride, bias=bias),
                _norm_layer(norm, c_out),
            )
        else:
            self.skip = nn.Identity()
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.act(self.body(x) + self.skip(x))


class ResidualEncoder(nn.Module):
    """Small residual image encoder: (B, 3, 128, 128) -> (B, out_dim)."""

    def __init__(self, out_dim: int, width: int, blocks: int, norm: str):
        super().__init__()
        bias = norm == "none"
        self.stem = nn.Sequential(
            nn.Conv2d(3, width, 3, stride=2, padding=1, bias=bias),
            _norm_layer(norm, width),
            nn.ReLU(inplace=True),
        )
        n_stages = min(4, max(1, blocks))
        per_stage = [blocks // n_stages] * n_stages
        for i in range(blocks % n_stages):
            per_stage[i] += 1
        stages = []
        c_in = width
        for s in range(n_stages):
            c_out = width * min(2**s, 4)
            for b in range(per_stage[s]):
                stride = 2 if (s > 0 and b == 0) else 1
                stages.append(ResidualEncoderBlock(c_in, c_out, stride, norm))
                c_in = c_out
        self.stages = nn.Sequential(*stages)
        self.head = nn.Linear(c_in, out_dim)

    def forward(self, image):
        if image.dim() != 4 or image.shape[1] != 3 or image.shape[2] != CONTEXT_SIZE or image.shape[3] != CONTEXT_SIZE:
            raise ShapeError(
                f"expected (B, 3, {CONTEXT_SIZE}, {CONTEXT_SIZE}) context, got {tuple(image.shape)}"
            )
        x = self.stages(self.stem(image))
        return self.head(x.mean(dim=(2, 3)))


class MultiHeadGammaPredictor(nn.Module):
    """n independent pointwise heads, each latent -> sigmoid-bounded (B, 4, P, P)."""

    def __init__(self, cfg: ReRawConfig):
        super().__init__()
        self.heads = nn.ModuleList(
            [
                nn.Sequential(
                    *[ResidualPointwiseBlock(cfg.trunk_width, cfg.norm) for _ in range(cfg.n_residual_blocks)],
                    nn.Conv2d(cfg.trunk_width, 4, 1),
                    nn.Sigmoid(),
                )
                for _ in range(cfg.n_heads)
            ]
        )

    def forward(self, latent):
        return torch.stack([head(latent) for head in self.heads], dim=1)


def compose_raw(
    candidates: torch.Tensor,
    alpha: torch.Tensor,
    gammas: Sequence[float],
    clamp_eps: float = DEGAMMA_CLAMP_EPS,
) -> torch.Tensor:
    """Re-linearize each candidate by x**(1/gamma_i) and mix with alpha.

    Candidates are clamped to [clamp_eps, 1] before the power to keep the
    large 1/gamma exponents numerically stable; gamma == 1 passes the
    candidate through untouched. The output is a convex combination of
    [0, 1] values, hence itself in [0, 1].
    """
    n = candidates.shape[1]
    if alpha.shape[-1] != n or len(gammas) != n:
        raise ShapeError(
            f"{n} candidates vs alpha {tuple(alpha.shape)} vs {len(gammas)} gammas"
        )
    out = torch.zeros_like(candidates[:, 0])
    for i, g in enumerate(gammas):
        if g == 1.0:
            lin = candidates[:, i]
        else:
            lin = candidates[:, i].clamp(clamp_eps, 1.0) ** (1.0 / g)
        out = out + alpha[:, i].view(-1, *([1] * (out.dim() - 1))) * lin
    return out


class ReRawModel(nn.Module):
    """Full patch-to-raw model; forward returns (final, candidates, alpha)."""

    def __init__(self, config: ReRawConfig):
        super().__init__()
        self.config = config
        self.trunk = ColorReconstructionNet(config)
        self.gamma_heads = MultiHeadGammaPredictor(config)
        if config.use_context_encoder:
            self.context_encoder = ResidualEncoder(
                config.context_dim, config.encoder_width, config.encoder_blocks, config.norm
            )
        else:
            self.context_encoder = None
        if config.use_scaling_encoder:
            self.scaling_encoder = ResidualEncoder(
                config.n_heads, config.encoder_width, config.encoder_blocks, config.norm
            )
        else:
            self.scaling_encoder = None
        self.register_buffer("gammas", torch.tensor(config.gammas, dtype=torch.float32))

    def context_features(self, context: torch.Tensor):
        """Per-image features: (modulation vector or None, mixing weights)."""
        ctx_vec = self.context_encoder(context) if self.context_encoder is not None else None
        if self.scaling_encoder is not None:
            alpha = torch.softmax(self.scaling_encoder(context), dim=-1)
        else:
            alpha = torch.full(
                (context.shape[0], self.config.n_heads),
                1.0 / self.config.n_heads,
                dtype=context.dtype,
                device=context.device,
            )
        return ctx_vec, alpha

    def predict_from_features(self, rgb_patch, ctx_vec, alpha):
        latent = self.trunk(rgb_patch)
        if ctx_vec is not None:
            latent = latent * ctx_vec[:, :, None, None]
        candidates = self.gamma_heads(latent)
        final = compose_raw(candidates, alpha, self.config.gammas)
        return final, candidates, alpha

    def forward(self, rgb_patch, context):
        ctx_vec, alpha = self.context_features(context)
        return self.predict_from_features(rgb_patch, ctx_vec, alpha)


def expected_patch_input_size(raw_patch_size: int) -> int:
    """Side of the RGB input producing a raw_patch_size output: 2P + 2."""
    return 2 * raw_patch_size + 2


def center_crop(patch: torch.Tensor, size: int) -> torch.Tensor:
    """Center-crop the spatial dims of an NCHW tensor."""
    h, w = patch.shape[-2], patch.shape[-1]
    if h < size or w < size:
        raise ShapeError(f"cannot crop {h}x{w} to {size}")
    top, left = (h - size) // 2, (w - size) // 2
    return patch[..., top : top + size, left : left + size]


def save_checkpoint(path: str | Path, model: ReRawModel, extra: dict | None = None) -> None:
    torch.save(
        {
            "format_version": CHECKPOINT_VERSION,
            "model_config": model.config.to_dict(),
            "state_dict": model.state_dict(),
            "extra": extra or {},
        },
        path,
    )


def load_checkpoint(path: str | Path) -> tuple[ReRawModel, dict]:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot load checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path} is not a supported checkpoint")
    config = ReRawConfig.from_dict(payload["model_config"])
    model = ReRawModel(config)
    try:
        model.load_state_dict(payload["state_dict"])
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint/config mismatch in {path}: {exc}") from exc
    model.eval()
    return model, payload.get("extra", {})


def checkpoint_hash(path: str | Path) -> str:
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return digest[:16]
