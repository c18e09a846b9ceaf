"""Area / aspect-ratio classification on the 7x5 resolution grid.

Area bins are half-open intervals ``[lo, hi)`` built on a 384x384 pixel
unit. Ratio bins use ``r = width / height``::

    BW: r > 4    AW: 2 < r <= 4    NM: 1/2 <= r <= 2
    AH: 1/4 <= r < 1/2             BH: r < 1/4

Ratio boundaries are compared with integer cross-multiplication, so images
sitting exactly on a boundary always classify the same way.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

from .errors import ValidationError

UNIT = 384

#: Lower bounds (inclusive) of area bins A..G in pixels.
AREA_BOUNDS: tuple[int, ...] = (
    1,
    100 * 100,
    UNIT**2,
    (2 * UNIT) ** 2,
    (3 * UNIT) ** 2,
    (4 * UNIT) ** 2,
    (5 * UNIT) ** 2,
)


class AreaBin(IntEnum):
    A = 0
    B = 1
    C = 2
    D = 3
    E = 4
    F = 5
    G = 6

    @property
    def lower(self) -> int:
        return AREA_BOUNDS[self]

    @property
    def upper(self) -> int | None:
        """Exclusive upper bound, ``None`` for the unbounded G bin."""
        return AREA_BOUNDS[self + 1] if self < AreaBin.G else None


class RatioBin(IntEnum):
    # Values give the top-to-bottom row order used in every emitted grid.
    BW = 0
    AW = 1
    NM = 2
    AH = 3
    BH = 4


@dataclass(frozen=True)
class ImageDims:
    width: int
    height: int

    def __post_init__(self) -> None:
        for name in ("width", "height"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValidationError(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise ValidationError(f"{name} must be >= 1, got {value}")

    def area(self) -> int:
        return self.width * self.height

    def ratio(self) -> float:
        return self.width / self.height


class GridCell(NamedTuple):
    area: AreaBin
    ratio: RatioBin

    def label(self) -> str:
        return f"({self.ratio.name},{self.area.name})"


ALL_CELLS: tuple[GridCell, ...] = tuple(GridCell(a, r) for a in AreaBin for r in RatioBin)


def area_bin_of(area: int) -> AreaBin:
    if area < 1:
        raise ValidationError(f"area must be >= 1, got {area}")
    return AreaBin(bisect.bisect_right(AREA_BOUNDS, area) - 1)


def classify_area(dims: ImageDims) -> AreaBin:
    return area_bin_of(dims.area())


def classify_ratio(dims: ImageDims) -> RatioBin:
    w, h = dims.width, dims.height
    if w > 4 * h:
        return RatioBin.BW
    if w > 2 * h:
        return RatioBin.AW
    if 2 * w >= h:
        return RatioBin.NM
    if 4 * w >= h:
        return RatioBin.AH
    return RatioBin.BH


def classify(dims: ImageDims) -> GridCell:
    return GridCell(classify_area(dims), classify_ratio(dims))

