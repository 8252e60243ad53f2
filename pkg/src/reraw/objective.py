"""Loss functions and the composite multi-head training objective.

The hard-log loss ``-mean(ln(1 - |pred - target| + eps))`` behaves like L1
for small errors but grows without bound (up to the epsilon cap) as the
per-pixel error approaches 1, so badly reconstructed pixels dominate the
gradient. L1 and plain MSE are available as ablation alternatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import torch

from .errors import ConfigError, ShapeError

LOSS_KINDS = ("l1", "l2", "hln")
DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class LossConfig:
    kind: str = "hln"
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"loss kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")


def _check_same_shape(pred: torch.Tensor, target: torch.Tensor) -> None:
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {tuple(pred.shape)} vs target {tuple(target.shape)}")


def hard_log_loss(pred: torch.Tensor, target: torch.Tensor, epsilon: float = DEFAULT_EPSILON) -> torch.Tensor:
    """``-mean(ln(1 - |pred - target| + eps))`` with |error| capped at 1.

    Minimum is ``-ln(1 + eps)`` (slightly below zero) at pred == target; a
    fully wrong pixel contributes ``-ln(eps)``.
    """
    _check_same_shape(pred, target)
    err = (pred - target).abs().clamp(max=1.0)
    return -torch.log1p(epsilon - err).mean()


def l1_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    _check_same_shape(pred, target)
    return (pred - target).abs().mean()


def l2_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    _check_same_shape(pred, target)
    return ((pred - target) ** 2).mean()


def resolve_loss(cfg: LossConfig) -> Callable[[torch.Tensor, torch.Tensor], torch.Tensor]:
    if cfg.kind == "l1":
        return l1_loss
    if cfg.kind == "l2":
        return l2_loss
    eps = cfg.epsilon
    return lambda pred, target: hard_log_loss(pred, target, eps)


def make_gamma_targets(raw_target: torch.Tensor, gammas: Sequence[float]) -> torch.Tensor:
    """Per-head targets ``target ** gamma_i``, stacked on a new dim 1.

    Input (B, C, H, W) in [0, 1] -> output (B, n, C, H, W). The gamma = 1
    entry equals the target exactly; 0 and 1 are fixed points of every head.
    """
    g = torch.as_tensor(tuple(gammas), dtype=raw_target.dtype, device=raw_target.device)
    return raw_target.unsqueeze(1) ** g.view(1, -1, *([1] * (raw_target.dim() - 1)))


def composite_loss(
    final_pred: torch.Tensor,
    final_target: torch.Tensor,
    candidates: torch.Tensor,
    gamma_targets: torch.Tensor,
    loss_fn: Callable[[torch.Tensor, torch.Tensor], torch.Tensor],
) -> torch.Tensor:
    """Final-patch loss plus the unnormalized sum of per-head candidate losses."""
    if candidates.shape != gamma_targets.shape:
        raise ShapeError(
            f"candidates {tuple(candidates.shape)} vs gamma targets {tuple(gamma_targets.shape)}"
        )
    total = loss_fn(final_pred, final_target)
    for i in range(candidates.shape[1]):
        total = total + loss_fn(candidates[:, i], gamma_targets[:, i])
    return total
