"""Dataset manifests, grid distributions, balance audits and augmentation plans.

A manifest is line-delimited JSON, one record per line::

    {"id": "img-0001", "image_path": "images/0001.png", "width": 640,
     "height": 480, "question": "...", "answers": ["..."], "answer_type": "number"}

``width``/``height`` may be omitted, in which case they are probed from the
image header (``image_path`` is resolved relative to the manifest directory).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Literal

import numpy as np

from .errors import (
    DecodeError,
    InfeasibleTargetError,
    MissingDimsError,
    ParseError,
    ValidationError,
)
from .io import iter_jsonl
from .probe import probe_dims
from .taxonomy import ALL_CELLS, AreaBin, GridCell, ImageDims, RatioBin, classify

ANSWER_TYPES = ("number", "date", "identifier", "phrase", "address", "sentence")


@dataclass(frozen=True)
class Record:
    id: str
    image_path: str
    question: str
    answers: tuple[str, ...]
    width: int | None = None
    height: int | None = None
    answer_type: str | None = None

    def __post_init__(self) -> None:
        if not self.answers:
            raise ValidationError(f"record {self.id!r}: answers must be non-empty")
        if (self.width is None) != (self.height is None):
            raise ValidationError(f"record {self.id!r}: width and height must be given together")
        if self.width is not None:
            ImageDims(self.width, self.height)  # type: ignore[arg-type]
        if self.answer_type is not None and self.answer_type not in ANSWER_TYPES:
            raise ValidationError(f"record {self.id!r}: unknown answer_type {self.answer_type!r}")

    @property
    def dims(self) -> ImageDims | None:
        if self.width is None or self.height is None:
            return None
        return ImageDims(self.width, self.height)

    @classmethod
    def from_dict(cls, obj: Any) -> Record:
        if not isinstance(obj, dict):
            raise ValidationError("record must be a JSON object")
        unknown = set(obj) - {"id", "image_path", "width", "height", "question", "answers", "answer_type"}
        if unknown:
            raise ValidationError(f"unknown fields {sorted(unknown)}")
        for key in ("id", "image_path", "question", "answers"):
            if key not in obj:
                raise ValidationError(f"missing required field {key!r}")
        for key in ("id", "image_path", "question"):
            if not isinstance(obj[key], str):
                raise ValidationError(f"field {key!r} must be a string")
        answers = obj["answers"]
        if not isinstance(answers, list) or not all(isinstance(a, str) for a in answers):
            raise ValidationError("field 'answers' must be a list of strings")
        answer_type = obj.get("answer_type")
        if answer_type is not None and not isinstance(answer_type, str):
            raise ValidationError("field 'answer_type' must be a string")
        return cls(
            id=obj["id"],
            image_path=obj["image_path"],
            question=obj["question"],
            answers=tuple(answers),
            width=obj.get("width"),
            height=obj.get("height"),
            answer_type=answer_type,
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "id": self.id,
            "image_path": self.image_path,
            "question": self.question,
            "answers": list(self.answers),
        }
        if self.width is not None:
            out["width"] = self.width
            out["height"] = self.height
        if self.answer_type is not None:
            out["answer_type"] = self.answer_type
        return out


def load_manifest(path: str | os.PathLike[str]) -> list[Record]:
    """Load every record of a line-delimited manifest in file order.

    Raises ``ParseError`` carrying the 1-based line number of the first
    malformed line.
    """
    records = []
    seen: set[str] = set()
    for lineno, obj in iter_jsonl(path):
        try:
            record = Record.from_dict(obj)
        except ValidationError as exc:
            raise ParseError(lineno, str(exc)) from None
        if record.id in seen:
            raise ParseError(lineno, f"duplicate record id {record.id!r}")
        seen.add(record.id)
        records.append(record)
    return records


def resolve_dims(record: Record, root: str | os.PathLike[str] | None = None) -> ImageDims:
    """Return the record's dimensions, probing the image header if absent."""
    dims = record.dims
    if dims is not None:
        return dims
    path = Path(root or ".") / record.image_path
    if not path.is_file():
        raise MissingDimsError(record.id)
    return probe_dims(path)


# ---------------------------------------------------------------------------
# Distribution


@dataclass
class Distribution:
    """Cell counts indexed ``counts[area, ratio]`` (7 x 5)."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((len(AreaBin), len(RatioBin)), dtype=np.int64))

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (len(AreaBin), len(RatioBin)):
            raise ValidationError(f"distribution must be 7x5, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValidationError("distribution counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __getitem__(self, cell: GridCell) -> int:
        return int(self.counts[cell.area, cell.ratio])

    def __add__(self, other: Distribution) -> Distribution:
        return Distribution(self.counts + other.counts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Distribution):
            return NotImplemented
        return bool(np.array_equal(self.counts, other.counts))

    @classmethod
    def uniform(cls, per_cell: int) -> Distribution:
        return cls(np.full((len(AreaBin), len(RatioBin)), per_cell, dtype=np.int64))

    @classmethod
    def spread(cls, total: int) -> Distribution:
        """Spread ``total`` as evenly as possible; remainders go to the first cells in lexical order."""
        base, extra = divmod(total, len(ALL_CELLS))
        counts = np.full((len(AreaBin), len(RatioBin)), base, dtype=np.int64)
        for cell in ALL_CELLS[:extra]:
            counts[cell.area, cell.ratio] += 1
        return cls(counts)

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "rows": [r.name for r in RatioBin],
            "columns": [a.name for a in AreaBin],
            "counts": self.counts.T.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> Distribution:
        try:
            grid = np.asarray(obj["counts"], dtype=np.int64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad distribution document: {exc}") from None
        if grid.shape != (len(RatioBin), len(AreaBin)):
            raise ValidationError(f"distribution counts must be 5x7 (ratio rows), got {grid.shape}")
        return cls(grid.T)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["ratio", *(a.name for a in AreaBin)])
        for r in RatioBin:
            writer.writerow([r.name, *(int(self.counts[a, r]) for a in AreaBin)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> Distribution:
        rows = [row for row in csv.reader(io.StringIO(text)) if row and not row[0].startswith("#")]
        if not rows or [c.strip() for c in rows[0][1:]] != [a.name for a in AreaBin]:
            raise ValidationError("distribution CSV header must be: ratio,A,B,C,D,E,F,G")
        counts = np.zeros((len(AreaBin), len(RatioBin)), dtype=np.int64)
        seen = set()
        for row in rows[1:]:
            name = row[0].strip()
            if name not in RatioBin.__members__ or len(row) != 1 + len(AreaBin):
                raise ValidationError(f"bad distribution CSV row {row!r}")
            seen.add(name)
            try:
                counts[:, RatioBin[name]] = [int(v) for v in row[1:]]
            except ValueError:
                raise ValidationError(f"non-integer count in row {row!r}") from None
        if seen != set(RatioBin.__members__):
            raise ValidationError("distribution CSV must contain rows BW, AW, NM, AH, BH")
        return cls(counts)


def load_distribution(path: str | os.PathLike[str]) -> Distribution:
    """Read a distribution from its CSV or JSON form (chosen by extension)."""
    text = Path(path).read_text(encoding="utf-8")
    if str(path).lower().endswith(".json"):
        try:
            return Distribution.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc.msg}") from None
    return Distribution.from_csv(text)


def distribution(records: Iterable[Record], root: str | os.PathLike[str] | None = None) -> Distribution:
    dist = Distribution()
    for record in records:
        cell = classify(resolve_dims(record, root))
        dist.counts[cell.area, cell.ratio] += 1
    return dist


# ---------------------------------------------------------------------------
# Balance audit


@dataclass(frozen=True)
class BalanceReport:
    total: int
    expected_per_cell: float
    max_count: int
    min_count: int
    tolerance: float
    deviating: tuple[tuple[GridCell, int], ...]

    @property
    def balanced(self) -> bool:
        return not self.deviating

    def to_dict(self) -> dict[str, Any]:
        return {
            "balanced": self.balanced,
            "total": self.total,
            "expected_per_cell": self.expected_per_cell,
            "max_count": self.max_count,
            "min_count": self.min_count,
            "tolerance": self.tolerance,
            "deviating": [
                {"area": c.area.name, "ratio": c.ratio.name, "count": n} for c, n in self.deviating
            ],
        }


def audit_balance(dist: Distribution, tolerance: float) -> BalanceReport:
    """Flag cells whose count deviates from ``total / 35`` by more than ``tolerance`` (relative)."""
    if tolerance < 0:
        raise ValidationError("tolerance must be >= 0")
    expected = dist.total / len(ALL_CELLS)
    deviating = []
    for cell in ALL_CELLS:
        n = dist[cell]
        rel = abs(n - expected) / expected if expected else 0.0
        if rel > tolerance:
            deviating.append((cell, n))
    return BalanceReport(
        total=dist.total,
        expected_per_cell=expected,
        max_count=int(dist.counts.max()),
        min_count=int(dist.counts.min()),
        tolerance=tolerance,
        deviating=tuple(deviating),
    )


# ---------------------------------------------------------------------------
# Augmentation

Transform = Literal["none", "pad", "resize"]

# Pad / resize anchor points inside each bin.
_REP_RATIO = {
    RatioBin.BW: Fraction(9, 2),
    RatioBin.AW: Fraction(3),
    RatioBin.NM: Fraction(1),
    RatioBin.AH: Fraction(1, 3),
    RatioBin.BH: Fraction(2, 9),
}
# Midpoint of each bin's side range; A uses 50px.
_REP_SIDE = {
    AreaBin.A: 50,
    AreaBin.B: 242,
    AreaBin.C: 576,
    AreaBin.D: 960,
    AreaBin.E: 1344,
    AreaBin.F: 1728,
    AreaBin.G: 2112,
}


@dataclass(frozen=True)
class AugmentationPlan:
    record_id: str
    source: ImageDims
    transform: Transform
    target: ImageDims
    cell: GridCell
    fill: int = 0

    def __post_init__(self) -> None:
        if classify(self.target) != self.cell:
            raise ValidationError(
                f"plan for {self.record_id!r}: {self.target} does not classify into {self.cell.label()}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.record_id,
            "transform": self.transform,
            "source": [self.source.width, self.source.height],
            "target": [self.target.width, self.target.height],
            "cell": {"area": self.cell.area.name, "ratio": self.cell.ratio.name},
            "fill": self.fill,
        }


def _pad_dims(src: ImageDims, ratio: RatioBin) -> ImageDims:
    want = _REP_RATIO[ratio]
    w, h = src.width, src.height
    if want * h > w:
        return ImageDims(math.ceil(want * h), h)
    return ImageDims(w, max(h, math.ceil(w / want)))


def _resize_dims(src: ImageDims, cell: GridCell) -> ImageDims:
    candidates = []
    src_cell = classify(src)
    area = src.area() if src_cell.area == cell.area else _REP_SIDE[cell.area] ** 2
    if src_cell.ratio == cell.ratio:
        candidates.append((area, src.width / src.height))
    candidates.append((area, float(_REP_RATIO[cell.ratio])))
    candidates.append((_REP_SIDE[cell.area] ** 2, float(_REP_RATIO[cell.ratio])))
    for a, r in candidates:
        dims = ImageDims(max(1, round(math.sqrt(a * r))), max(1, round(math.sqrt(a / r))))
        if classify(dims) == cell:
            return dims
    raise AssertionError(f"no representative dims for {cell.label()}")  # pragma: no cover


def plan_augmentation(
    records: Sequence[Record],
    target: Distribution,
    root: str | os.PathLike[str] | None = None,
    fill: int = 0,
) -> list[AugmentationPlan]:
    """Assign pad/resize transforms so the transformed set matches ``target`` exactly.

    Records are kept in input order until their cell's target count is met;
    additional records form the surplus, drained cell by cell in (area, ratio)
    lexical order. Each surplus record goes to the first deficit cell that
    padding reaches, otherwise the first deficit cell via resize.
    """
    if target.total != len(records):
        raise InfeasibleTargetError(
            f"target total {target.total} != {len(records)} records; transforms cannot add or drop images"
        )
    dims = [resolve_dims(r, root) for r in records]
    cells = [classify(d) for d in dims]

    kept = Distribution()
    plans: list[AugmentationPlan | None] = [None] * len(records)
    surplus = []
    for i, (record, d, cell) in enumerate(zip(records, dims, cells)):
        if kept[cell] < target[cell]:
            kept.counts[cell.area, cell.ratio] += 1
            plans[i] = AugmentationPlan(record.id, d, "none", d, cell, fill)
        else:
            surplus.append(i)
    surplus.sort(key=lambda i: (cells[i], i))

    deficit = {cell: target[cell] - kept[cell] for cell in ALL_CELLS if target[cell] > kept[cell]}
    for i in surplus:
        src = dims[i]
        choice = None
        for cell in ALL_CELLS:
            if deficit.get(cell, 0) and cell.ratio != cells[i].ratio:
                padded = _pad_dims(src, cell.ratio)
                if classify(padded) == cell:
                    choice = (cell, "pad", padded)
                    break
        if choice is None:
            cell = next(c for c in ALL_CELLS if deficit.get(c, 0))
            choice = (cell, "resize", _resize_dims(src, cell))
        cell, kind, new_dims = choice
        deficit[cell] -= 1
        plans[i] = AugmentationPlan(records[i].id, src, kind, new_dims, cell, fill)  # type: ignore[arg-type]
    return plans  # type: ignore[return-value]


def apply_augmentation(image: bytes, plan: AugmentationPlan) -> bytes:
    """Apply a pad or resize plan to encoded image bytes; returns PNG bytes."""
    from PIL import Image, UnidentifiedImageError

    if plan.transform == "none":
        raise ValidationError(f"plan for {plan.record_id!r} has no transform to apply")
    try:
        img = Image.open(io.BytesIO(image))
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"cannot decode image for {plan.record_id!r}: {exc}") from None
    if img.mode not in ("L", "RGB", "RGBA", "I", "F"):
        img = img.convert("RGBA" if "A" in img.getbands() or "transparency" in img.info else "RGB")

    tw, th = plan.target.width, plan.target.height
    if plan.transform == "pad":
        bands = len(img.getbands())
        if img.mode == "RGBA":
            color: Any = (plan.fill,) * 3 + (255,)
        elif bands > 1:
            color = (plan.fill,) * bands
        else:
            color = plan.fill
        canvas = Image.new(img.mode, (tw, th), color)
        canvas.paste(img, ((tw - img.width) // 2, (th - img.height) // 2))
        out = canvas
    else:
        out = img.resize((tw, th), Image.Resampling.BILINEAR)
    buf = io.BytesIO()
    out.save(buf, format="PNG")
    return buf.getvalue()
