"""
Heatmap losses

Every map (uv and uz of every joint) contributes its mean squared error over pixels, and maps
are averaged with equal weight.
"""
from typing import Sequence, Tuple, Union

import torch

from nowcast.exceptions import InvalidArgumentError
from nowcast.spdh import SPDHMaps


MapsLike = Union[torch.Tensor, SPDHMaps]


def _as_tensor(maps: MapsLike) -> torch.Tensor:
    if isinstance(maps, SPDHMaps):
        return torch.from_numpy(maps.stacked())

    return maps


def loss_rpe(pred: MapsLike, gt: MapsLike) -> torch.Tensor:
    """
    Present-time heatmap loss: per-map MSE over pixels, averaged over all maps (and the batch)

    Keyword arguments:
    pred -- predicted maps, shape (..., 2J, h, w) or SPDHMaps
    gt -- target maps of the same shape
    """
    pred = _as_tensor(pred)

    gt = _as_tensor(gt)

    if pred.shape != gt.shape:
        raise InvalidArgumentError(f"prediction {tuple(pred.shape)} and target {tuple(gt.shape)} shapes differ")

    return ((pred - gt) ** 2).mean(dim=(-2, -1)).mean()


def loss_rpf(pred: Union[torch.Tensor, Sequence[SPDHMaps]], gt: Union[torch.Tensor, Sequence[SPDHMaps]],
             future_count: int = None) -> torch.Tensor:
    """
    Forecasting loss: the present-time loss of each future step k = 1..T, averaged over T.

    Keyword arguments:
    pred -- per-step SPDHMaps, or a tensor (B, T, 2J, h, w), or (B, T 2J, h, w) with future_count
    gt -- targets laid out like pred
    future_count -- T, required for the channel-stacked tensor layout (default: None)
    """
    if not isinstance(pred, torch.Tensor):
        if len(pred) != len(gt):
            raise InvalidArgumentError(f"{len(pred)} predicted steps for {len(gt)} target steps")

        return torch.stack([loss_rpe(step, target) for step, target in zip(pred, gt)]).mean()

    if pred.shape != gt.shape:
        raise InvalidArgumentError(f"prediction {tuple(pred.shape)} and target {tuple(gt.shape)} shapes differ")

    if pred.dim() == 4:
        if not future_count or pred.shape[1] % future_count:
            raise InvalidArgumentError(f"{pred.shape[1]} channels cannot be split into {future_count} steps")

        shape = (pred.shape[0], future_count, pred.shape[1] // future_count) + tuple(pred.shape[2:])

        pred, gt = pred.reshape(shape), gt.reshape(shape)

    per_step = ((pred - gt) ** 2).mean(dim=(-2, -1)).mean(dim=-1)

    return per_step.mean(dim=0).mean()


def total_loss(rpe: torch.Tensor, rpf: torch.Tensor, weights: Tuple[float, float] = (1.0, 1.0)) -> torch.Tensor:
    """
    Weighted sum w1 rpe + w2 rpf. Weights (1, 0) train estimation alone.

    Keyword arguments:
    rpe -- the present-time loss
    rpf -- the forecasting loss
    weights -- (w1, w2) (default: (1, 1))
    """
    return weights[0] * rpe + weights[1] * rpf
