"""Annotation-economics arithmetic for crowd-sourced and expert labeling.

All currency outputs are rounded half-up to whole units; hour estimates are
returned unrounded (callers round for display). Cost is linear in hours and
rate, hours linear in image count and redundancy.

A note on expert totals: 66,039 images split evenly between midwater ($1 per
image) and benthic ($3 per image) habitats comes to $132,078 by this
arithmetic. A commonly cited figure of ~$165,100 for that same corpus is not
reproducible from those inputs; this module computes, it does not reconcile.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Optional

DEFAULT_MIDWATER_RATE_PER_IMAGE = 1.0
DEFAULT_BENTHIC_RATE_PER_IMAGE = 3.0


class CostModelError(ValueError):
    pass


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if value is None or value <= 0:
            raise CostModelError(f"{name} must be > 0, got {value}")


def _round_currency(amount: float) -> int:
    return int(Decimal(repr(amount)).quantize(Decimal("1"), rounding=ROUND_HALF_UP))


def estimate_hours(images: float, images_per_hour: float,
                   redundancy: float = 1.0) -> float:
    """Worker hours to label ``images`` at a fixed rate, with each image seen
    by ``redundancy`` independent workers."""
    _require_positive(images=images, images_per_hour=images_per_hour,
                      redundancy=redundancy)
    return images * redundancy / images_per_hour


def estimate_cost(hours: float, hourly_rate: float) -> int:
    """Labor cost in whole currency units (half-up)."""
    _require_positive(hours=hours, hourly_rate=hourly_rate)
    return _round_currency(hours * hourly_rate)


def expert_cost(
    midwater_images: float,
    benthic_images: float,
    midwater_rate_per_image: float = DEFAULT_MIDWATER_RATE_PER_IMAGE,
    benthic_rate_per_image: float = DEFAULT_BENTHIC_RATE_PER_IMAGE,
) -> int:
    """Expert annotation cost as a per-image linear combination over the two
    habitat regimes."""
    if midwater_images < 0 or benthic_images < 0:
        raise CostModelError("image counts must be >= 0")
    _require_positive(midwater_rate_per_image=midwater_rate_per_image,
                      benthic_rate_per_image=benthic_rate_per_image)
    return _round_currency(midwater_images * midwater_rate_per_image
                           + benthic_images * benthic_rate_per_image)


@dataclass(frozen=True)
class LaborSpec:
    """Either (images, images_per_hour, redundancy) or direct hours, plus an
    hourly rate."""

    hourly_rate: float
    images: Optional[float] = None
    images_per_hour: Optional[float] = None
    redundancy: float = 1.0
    hours: Optional[float] = None

    def __post_init__(self):
        _require_positive(hourly_rate=self.hourly_rate)
        if self.hours is None and (self.images is None or self.images_per_hour is None):
            raise CostModelError(
                "specify hours directly, or images with images_per_hour"
            )

    def total_hours(self) -> float:
        if self.hours is not None:
            _require_positive(hours=self.hours)
            return self.hours
        return estimate_hours(self.images, self.images_per_hour, self.redundancy)

    def total_cost(self) -> int:
        return estimate_cost(self.total_hours(), self.hourly_rate)
