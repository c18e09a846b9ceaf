"""Patch n' Pack: bin-pack variable-length patch sequences into fixed-capacity rows.

Each packed row records ``cu_seqlens``, the cumulative member lengths
starting at 0, which is what a variable-length attention kernel needs to keep
every image's attention inside its own segment. Sequences are never split.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from .errors import DimensionMismatchError, SequenceExceedsCapacityError, ValidationError

Policy = Literal["first_fit", "first_fit_decreasing", "best_fit"]
POLICIES: tuple[str, ...] = ("first_fit", "first_fit_decreasing", "best_fit")

#: Context lengths used for pretraining / SFT-1 and SFT-2.
DEFAULT_CAPACITY = 4096
SFT2_CAPACITY = 5120


@dataclass(frozen=True)
class PatchSequence:
    id: str
    length: int
    payload: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValidationError(f"sequence {self.id!r}: length must be >= 1")
        if self.payload is not None and (self.payload.ndim != 2 or self.payload.shape[0] != self.length):
            raise DimensionMismatchError(
                f"sequence {self.id!r}: payload shape {self.payload.shape} does not match length {self.length}"
            )


@dataclass
class PackedSequence:
    members: list[PatchSequence] = field(default_factory=list)

    @property
    def load(self) -> int:
        return sum(m.length for m in self.members)

    @property
    def ids(self) -> list[str]:
        return [m.id for m in self.members]

    @property
    def cu_seqlens(self) -> list[int]:
        cu = [0]
        for m in self.members:
            cu.append(cu[-1] + m.length)
        return cu

    def to_dict(self) -> dict[str, Any]:
        return {"ids": self.ids, "cu_seqlens": self.cu_seqlens, "total": self.load}


@dataclass
class PackedBatch:
    capacity: int
    bins: list[PackedSequence]

    def to_records(self) -> list[dict[str, Any]]:
        return [{"bin": i, **b.to_dict()} for i, b in enumerate(self.bins)]


def pack(seqs: Sequence[PatchSequence], capacity: int = DEFAULT_CAPACITY, policy: Policy = "first_fit_decreasing") -> PackedBatch:
    """Place every sequence into exactly one bin of size ``capacity``.

    ``first_fit`` keeps input order; ``first_fit_decreasing`` sorts by length
    descending (stable on input index); ``best_fit`` places each sequence, in
    input order, into the open bin with the least remaining room that fits.
    """
    if capacity < 1:
        raise ValidationError("capacity must be >= 1")
    if policy not in POLICIES:
        raise ValidationError(f"unknown packing policy {policy!r}; choose from {', '.join(POLICIES)}")
    for s in seqs:
        if s.length > capacity:
            raise SequenceExceedsCapacityError(s.id, s.length, capacity)

    order = list(seqs)
    if policy == "first_fit_decreasing":
        order = sorted(order, key=lambda s: -s.length)  # sorted() is stable

    bins: list[PackedSequence] = []
    loads: list[int] = []
    for s in order:
        target = -1
        if policy == "best_fit":
            room = capacity + 1
            for i, load in enumerate(loads):
                free = capacity - load
                if s.length <= free < room:
                    target, room = i, free
        else:
            target = next((i for i, load in enumerate(loads) if load + s.length <= capacity), -1)
        if target < 0:
            bins.append(PackedSequence())
            loads.append(0)
            target = len(bins) - 1
        bins[target].members.append(s)
        loads[target] += s.length
    return PackedBatch(capacity=capacity, bins=bins)


@dataclass(frozen=True)
class PackStats:
    bins: int
    sequences: int
    total_tokens: int
    capacity: int
    utilization: float
    naive_padded_tokens: int
    naive_utilization: float
    waste_ratio_saved: float

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def stats(batch: PackedBatch, original: Sequence[PatchSequence]) -> PackStats:
    """Packed-vs-padded comparison.

    Naive padding pads every sequence to the longest one. ``waste_ratio_saved``
    is the fraction of naive padding slots that packing avoids (negative when
    packing wastes more than padding would).
    """
    packed = Counter((m.id, m.length) for b in batch.bins for m in b.members)
    if packed != Counter((s.id, s.length) for s in original):
        raise ValidationError("packed batch does not contain exactly the original sequences")
    total = sum(s.length for s in original)
    slots = len(batch.bins) * batch.capacity
    naive = len(original) * max((s.length for s in original), default=0)
    naive_waste = naive - total
    packed_waste = slots - total
    return PackStats(
        bins=len(batch.bins),
        sequences=len(original),
        total_tokens=total,
        capacity=batch.capacity,
        utilization=total / slots if slots else 0.0,
        naive_padded_tokens=naive,
        naive_utilization=total / naive if naive else 0.0,
        waste_ratio_saved=(naive_waste - packed_waste) / naive_waste if naive_waste else 0.0,
    )


def concat_payloads(batch: PackedBatch) -> list[np.ndarray]:
    """Concatenate member payloads per bin; rows ``[cu[i], cu[i+1])`` are member ``i``."""
    dims = set()
    for b in batch.bins:
        for m in b.members:
            if m.payload is None:
                raise ValidationError(f"sequence {m.id!r} has no payload")
            dims.add(m.payload.shape[1])
    if len(dims) > 1:
        raise DimensionMismatchError(f"payload feature dims differ: {sorted(dims)}")
    return [np.concatenate([m.payload for m in b.members], axis=0) for b in batch.bins]  # type: ignore[misc]


def split_packed(packed: np.ndarray, cu_seqlens: Sequence[int]) -> list[np.ndarray]:
    return [packed[a:b] for a, b in zip(cu_seqlens[:-1], cu_seqlens[1:])]
