"""Voxel-overlap and volume agreement metrics.

All scores are ratios of the four confusion tallies between an automatic
mask A and a manual (ground-truth) mask M on a common grid. Degenerate
inputs raise instead of returning sentinel scores: an empty hippocampus in
this pipeline signals a bug, not a 0.0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BothMasksEmpty,
    EmptyAutomaticMask,
    EmptyManualMask,
    ZeroManualVolume,
)
from .volume import BinaryMask, check_compatible


@dataclass(frozen=True)
class ConfusionCounts:
    """TP/FP/FN/TN voxel tallies between an automatic and a manual mask."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n_auto(self) -> int:
        return self.tp + self.fp

    @property
    def n_manual(self) -> int:
        return self.tp + self.fn

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class VolumePair:
    """Automatic and manual volumes in a common unit."""

    v_auto: float
    v_manual: float
    unit: str  # "voxels" | "mm3"


@dataclass(frozen=True)
class OverlapResult:
    dice: float
    precision: float
    similarity: float
    sensitivity: float
    ravd: float


def confusion_counts(a: BinaryMask, m: BinaryMask) -> ConfusionCounts:
    """Tally TP = |A∩M|, FP = |A∖M|, FN = |M∖A|, TN = remainder."""
    check_compatible(a, m)
    tp = int(np.count_nonzero(a.bits & m.bits))
    fp = int(np.count_nonzero(a.bits & ~m.bits))
    fn = int(np.count_nonzero(~a.bits & m.bits))
    total = a.bits.size
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=total - tp - fp - fn)


def dice(c: ConfusionCounts) -> float:
    """2|A∩M| / (|A| + |M|); 1.0 means complete overlap."""
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        raise BothMasksEmpty("dice undefined: both masks are empty")
    return 2 * c.tp / denom


def precision(c: ConfusionCounts) -> float:
    """TP / (TP + FP): fraction of automatic voxels that are correct."""
    if c.tp + c.fp == 0:
        raise EmptyAutomaticMask("precision undefined: automatic mask is empty")
    return c.tp / (c.tp + c.fp)


def similarity(c: ConfusionCounts) -> float:
    """TP / (TP + FP + FN): the Jaccard index of A and M."""
    denom = c.tp + c.fp + c.fn
    if denom == 0:
        raise BothMasksEmpty("similarity undefined: both masks are empty")
    return c.tp / denom


def sensitivity(c: ConfusionCounts) -> float:
    """TP / (TP + FN): fraction of ground-truth voxels recovered."""
    if c.tp + c.fn == 0:
        raise EmptyManualMask("sensitivity undefined: manual mask is empty")
    return c.tp / (c.tp + c.fn)


def volume(mask: BinaryMask, unit: str = "mm3") -> float:
    """Mask volume as a voxel count or in mm³ (count × sx·sy·sz)."""
    count = mask.count
    if unit == "voxels":
        return float(count)
    if unit == "mm3":
        sx, sy, sz = mask.spacing
        return count * sx * sy * sz
    raise ValueError(f"unknown volume unit {unit!r}")


def ravd(v: VolumePair) -> float:
    """Signed relative volume difference (V_A − V_M) / V_M.

    Negative when the automatic segmentation is smaller than the manual
    one. The ratio is unit-invariant.
    """
    if v.v_manual <= 0:
        raise ZeroManualVolume(f"manual volume {v.v_manual} must be positive")
    return (v.v_auto - v.v_manual) / v.v_manual


def normalized_volume_difference(v: VolumePair) -> float:
    """|V_A − V_M| / V_M, the unsigned variant of the volume ratio."""
    return abs(ravd(v))


def overlap_result(c: ConfusionCounts, v: VolumePair) -> OverlapResult:
    """Bundle the four overlap scores and the signed volume ratio."""
    return OverlapResult(
        dice=dice(c),
        precision=precision(c),
        similarity=similarity(c),
        sensitivity=sensitivity(c),
        ravd=ravd(v),
    )
