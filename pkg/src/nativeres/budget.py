"""Per-image token budgeting for native-resolution encoding.

Images are snapped to a grid of merged cells of ``patch_size * merge`` pixels
(28 px by default). Token caps are post-merge counts: a planned image of
``u x v`` merged cells yields ``(2u) * (2v)`` patches before the 2x2 merger
and ``u * v`` tokens after it.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Literal

from .errors import SideNotAlignedError, ValidationError
from .taxonomy import ImageDims

_HALF = Fraction(1, 2)


@dataclass(frozen=True)
class BudgetConfig:
    patch_size: int = 14
    merge: int = 2
    min_tokens: int = 4
    max_tokens: int = 2048
    max_res: int | None = None

    def __post_init__(self) -> None:
        if self.patch_size < 1 or self.merge < 1:
            raise ValidationError("patch_size and merge must be >= 1")
        if not 1 <= self.min_tokens <= self.max_tokens:
            raise ValidationError(f"need 1 <= min_tokens <= max_tokens, got {self.min_tokens}, {self.max_tokens}")
        if self.max_res is not None:
            if self.max_res < self.unit:
                raise ValidationError(f"max_res must be >= {self.unit}")
            if (self.max_res // self.unit) ** 2 < self.min_tokens:
                raise ValidationError("max_res too small to reach min_tokens")

    @property
    def unit(self) -> int:
        """Side of one merged cell in pixels."""
        return self.patch_size * self.merge

    @property
    def max_cells_per_side(self) -> int | None:
        return None if self.max_res is None else self.max_res // self.unit


@dataclass(frozen=True)
class PatchPlan:
    source: ImageDims
    planned: ImageDims
    grid: tuple[int, int]  # (rows, cols) in patches
    pre_merge_tokens: int
    post_merge_tokens: int
    scaled: Literal["none", "down", "up", "fixed"] = "none"

    def to_dict(self) -> dict[str, Any]:
        return {
            "source": [self.source.width, self.source.height],
            "planned": [self.planned.width, self.planned.height],
            "grid": list(self.grid),
            "pre_merge_tokens": self.pre_merge_tokens,
            "post_merge_tokens": self.post_merge_tokens,
            "scaled": self.scaled,
        }


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + _HALF)


def _cells(xw: Fraction, xh: Fraction, s: Fraction) -> tuple[int, int]:
    return max(1, _round_half_up(xw * s)), max(1, _round_half_up(xh * s))


def _step(x: Fraction, k: int) -> Fraction:
    """Scale at which ``round(x * s)`` steps from ``k`` to ``k + 1``."""
    return (k + _HALF) / x


def _last_true(lo: int, hi: int, pred: Callable[[int], bool]) -> int | None:
    """Largest ``k`` in ``[lo, hi]`` with ``pred(k)``, for ``pred`` true-then-false."""
    best = None
    while lo <= hi:
        mid = (lo + hi) // 2
        if pred(mid):
            best, lo = mid, mid + 1
        else:
            hi = mid - 1
    return best


def _first_true(lo: int, hi: int, pred: Callable[[int], bool]) -> int | None:
    """Smallest ``k`` in ``[lo, hi]`` with ``pred(k)``, for ``pred`` false-then-true."""
    best = None
    while lo <= hi:
        mid = (lo + hi) // 2
        if pred(mid):
            best, hi = mid, mid - 1
        else:
            lo = mid + 1
    return best


def _fallback(xw: Fraction, xh: Fraction, cfg: BudgetConfig) -> tuple[int, int]:
    # Only reached when a single rounding step jumps over [min_tokens, max_tokens].
    lim = cfg.max_cells_per_side or cfg.max_tokens
    target = math.log(xw / xh)
    best = None
    for u in range(1, min(lim, cfg.max_tokens) + 1):
        lo_v = max(1, -(-cfg.min_tokens // u))
        hi_v = min(lim, cfg.max_tokens // u)
        if lo_v > hi_v:
            continue
        for v in {lo_v, hi_v, min(hi_v, max(lo_v, round(u * xh / xw)))}:
            key = (abs(math.log(u / v) - target), -u * v, u)
            if best is None or key < best[0]:
                best = (key, (u, v))
    assert best is not None
    return best[1]


def plan(dims: ImageDims, cfg: BudgetConfig | None = None) -> PatchPlan:
    """Resize decision and token counts for one image.

    Sides are rounded to the nearest merged cell (ties up, at least one cell).
    If that exceeds ``max_tokens`` or ``max_res`` the image is scaled down
    uniformly by the largest factor whose rounded grid fits; if it falls
    below ``min_tokens`` it is scaled up by the smallest factor that reaches
    it.
    """
    cfg = cfg or BudgetConfig()
    xw = Fraction(dims.width, cfg.unit)
    xh = Fraction(dims.height, cfg.unit)
    lim = cfg.max_cells_per_side

    def fits(uv: tuple[int, int]) -> bool:
        u, v = uv
        return u * v <= cfg.max_tokens and (lim is None or (u <= lim and v <= lim))

    # The grid only changes at the rounding steps of either side and grows
    # with the scale, so the best scale is always one of those steps and
    # each side's steps can be binary-searched.
    scaled = "none"
    u, v = _cells(xw, xh, Fraction(1))
    if not fits((u, v)):
        scaled = "down"
        best = None
        for x in (xw, xh):
            k = _last_true(0, math.floor(x - _HALF), lambda k, x=x: fits(_cells(xw, xh, _step(x, k))))
            if k is not None and (best is None or _step(x, k) > best):
                best = _step(x, k)
        u, v = (1, 1) if best is None else _cells(xw, xh, best)
    elif u * v < cfg.min_tokens:
        scaled = "up"
        hi = Fraction(math.isqrt(cfg.min_tokens - 1) + 2) / min(xw, xh)
        best = None
        for x in (xw, xh):

            def enough(k: int, x: Fraction = x) -> bool:
                cu, cv = _cells(xw, xh, _step(x, k))
                return cu * cv >= cfg.min_tokens

            k = _first_true(math.ceil(x - _HALF), math.floor(hi * x - _HALF), enough)
            if k is not None and (best is None or _step(x, k) < best):
                best = _step(x, k)
        if best is not None:
            u, v = _cells(xw, xh, best)
    if not (fits((u, v)) and u * v >= cfg.min_tokens):
        u, v = _fallback(xw, xh, cfg)

    rows, cols = v * cfg.merge, u * cfg.merge
    return PatchPlan(
        source=dims,
        planned=ImageDims(u * cfg.unit, v * cfg.unit),
        grid=(rows, cols),
        pre_merge_tokens=rows * cols,
        post_merge_tokens=u * v,
        scaled=scaled,  # type: ignore[arg-type]
    )


def max_square_side(cap: int, cfg: BudgetConfig | None = None) -> int:
    """Largest square side (pixels, cell-aligned) whose post-merge token count is <= ``cap``."""
    cfg = cfg or BudgetConfig()
    if cap < 1:
        raise ValidationError("cap must be >= 1")
    return math.isqrt(cap) * cfg.unit


def fixed_res_plan(dims: ImageDims, side: int, cfg: BudgetConfig | None = None) -> PatchPlan:
    """Fixed-resolution baseline: every image becomes ``side x side``.

    The grid may be odd (378 px gives 27x27 patches); the post-merge count
    then assumes the merger pads the grid to even, i.e. ``ceil(g / merge)**2``.
    """
    cfg = cfg or BudgetConfig()
    if side < cfg.patch_size or side % cfg.patch_size:
        raise SideNotAlignedError(f"side {side} is not a positive multiple of patch_size {cfg.patch_size}")
    g = side // cfg.patch_size
    return PatchPlan(
        source=dims,
        planned=ImageDims(side, side),
        grid=(g, g),
        pre_merge_tokens=g * g,
        post_merge_tokens=math.ceil(g / cfg.merge) ** 2,
        scaled="fixed",
    )
