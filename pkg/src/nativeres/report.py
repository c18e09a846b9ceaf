"""Per-cell accuracy reports, robustness CVs, diff heatmaps and emission.

ACV / RCV are the coefficient of variation (``sigma / mu``, times 100) of
the area-bin and ratio-bin marginal accuracies. Marginals are
sample-weighted over raw records; empty bins are left out of the CV instead
of counting as zero.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

import numpy as np

from .errors import EmptyInputError, MissingDimsError, ValidationError
from .io import atomic_write
from .scoring import ScoredAnswer
from .taxonomy import AreaBin, ImageDims, RatioBin, classify

Sigma = Literal["population", "sample"]
DEFAULT_ROW_ORDER: tuple[RatioBin, ...] = tuple(RatioBin)
_SHAPE = (len(AreaBin), len(RatioBin))


def _to_list(a: np.ndarray) -> list:
    if a.ndim > 1:
        return [_to_list(row) for row in a]
    return [None if math.isnan(v) else float(v) for v in a.tolist()]


def _from_list(obj: Any, shape: tuple[int, ...]) -> np.ndarray:
    arr = np.array(obj, dtype=object)
    if arr.shape != shape:
        raise ValidationError(f"expected array of shape {shape}, got {arr.shape}")
    return np.array([np.nan if v is None else float(v) for v in arr.ravel()]).reshape(shape)


def coefficient_of_variation(values: Iterable[float], sigma: Sigma = "population") -> float:
    """``100 * std / mean`` over non-NaN values; 0 for fewer than two values or zero mean."""
    xs = np.array([v for v in values if not math.isnan(v)], dtype=float)
    if xs.size < 2:
        return 0.0
    mu = float(xs.mean())
    if mu == 0.0:
        return 0.0
    return 100.0 * float(xs.std(ddof=1 if sigma == "sample" else 0)) / mu


@dataclass
class CellReport:
    accuracy: np.ndarray  # (7, 5) [area, ratio]; NaN = empty cell
    counts: np.ndarray  # (7, 5) int
    area_marginals: np.ndarray  # (7,)
    ratio_marginals: np.ndarray  # (5,)
    overall: float
    acv: float
    rcv: float
    sigma: Sigma = "population"

    kind = "cell_report"

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "rows": [r.name for r in RatioBin],
            "columns": [a.name for a in AreaBin],
            "accuracy": _to_list(self.accuracy.T),
            "counts": self.counts.T.tolist(),
            "area_marginals": _to_list(self.area_marginals),
            "ratio_marginals": _to_list(self.ratio_marginals),
            "overall": self.overall,
            "acv": self.acv,
            "rcv": self.rcv,
            "sigma": self.sigma,
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> CellReport:
        try:
            return cls(
                accuracy=_from_list(obj["accuracy"], (len(RatioBin), len(AreaBin))).T,
                counts=np.asarray(obj["counts"], dtype=np.int64).T,
                area_marginals=_from_list(obj["area_marginals"], (len(AreaBin),)),
                ratio_marginals=_from_list(obj["ratio_marginals"], (len(RatioBin),)),
                overall=float(obj["overall"]),
                acv=float(obj["acv"]),
                rcv=float(obj["rcv"]),
                sigma=obj.get("sigma", "population"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad cell report document: {exc}") from None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CellReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass
class DiffReport:
    values: np.ndarray  # (7, 5) [area, ratio]; NaN = empty
    kind = "diff_report"

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "rows": [r.name for r in RatioBin],
            "columns": [a.name for a in AreaBin],
            "diff": _to_list(self.values.T),
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> DiffReport:
        try:
            return cls(_from_list(obj["diff"], (len(RatioBin), len(AreaBin))).T)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"bad diff report document: {exc}") from None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiffReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def aggregate(scored: Sequence[ScoredAnswer], dims: Mapping[str, ImageDims], sigma: Sigma = "population") -> CellReport:
    if not scored:
        raise EmptyInputError("no scored answers to aggregate")
    if sigma not in ("population", "sample"):
        raise ValidationError(f"sigma must be 'population' or 'sample', got {sigma!r}")
    sums = np.zeros(_SHAPE)
    counts = np.zeros(_SHAPE, dtype=np.int64)
    # Sort so float summation order does not depend on input order.
    for s in sorted(scored, key=lambda s: (s.id, s.score)):
        if s.id not in dims:
            raise MissingDimsError(s.id)
        cell = classify(dims[s.id])
        sums[cell.area, cell.ratio] += s.score
        counts[cell.area, cell.ratio] += 1

    with np.errstate(invalid="ignore", divide="ignore"):
        accuracy = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
        area_n = counts.sum(axis=1)
        ratio_n = counts.sum(axis=0)
        area_m = np.where(area_n > 0, sums.sum(axis=1) / np.maximum(area_n, 1), np.nan)
        ratio_m = np.where(ratio_n > 0, sums.sum(axis=0) / np.maximum(ratio_n, 1), np.nan)
    return CellReport(
        accuracy=accuracy,
        counts=counts,
        area_marginals=area_m,
        ratio_marginals=ratio_m,
        overall=float(sums.sum() / counts.sum()),
        acv=coefficient_of_variation(area_m, sigma),
        rcv=coefficient_of_variation(ratio_m, sigma),
        sigma=sigma,
    )


def diff(a: CellReport, b: CellReport) -> DiffReport:
    """Cell-wise ``a - b`` as fractions; a cell is empty if empty in either report."""
    return DiffReport(a.accuracy - b.accuracy)


def sensitivity(low_res_acc: float, high_res_acc: float, threshold: float = 0.05) -> Literal["RC", "SC"]:
    """Resolution-centric if the relative gain from higher resolution exceeds ``threshold``."""
    for v in (low_res_acc, high_res_acc):
        if not 0.0 <= v <= 1.0:
            raise ValidationError(f"accuracy {v} outside [0, 1]")
    gain = (high_res_acc - low_res_acc) / max(low_res_acc, 1e-9)
    return "RC" if gain > threshold else "SC"


# ---------------------------------------------------------------------------
# Emission

Report = CellReport | DiffReport


def _matrix(report: Report) -> np.ndarray:
    return report.accuracy if isinstance(report, CellReport) else report.values


def to_csv(report: Report, row_order: Sequence[RatioBin] = DEFAULT_ROW_ORDER) -> str:
    buf = io.StringIO()
    buf.write(f"# kind: {report.kind}\n")
    if isinstance(report, CellReport):
        buf.write(f"# overall: {report.overall!r}\n# acv: {report.acv!r}\n# rcv: {report.rcv!r}\n")
        buf.write(f"# sigma: {report.sigma}\n# samples: {int(report.counts.sum())}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ratio", *(a.name for a in AreaBin)])
    m = _matrix(report)
    for r in row_order:
        writer.writerow([r.name, *("" if math.isnan(v) else f"{v:.6f}" for v in m[:, r])])
    return buf.getvalue()


def _lerp(c0: tuple[int, int, int], c1: tuple[int, int, int], t: float) -> str:
    return "#" + "".join(f"{round(a + (b - a) * t):02x}" for a, b in zip(c0, c1))


_RED, _YELLOW, _GREEN = (215, 48, 39), (255, 255, 191), (26, 152, 80)
_PALE, _BLUE = (247, 251, 255), (8, 81, 156)


def diverging_color(value: float, vmax: float) -> str:
    """Red for negative, yellow near zero, green for positive."""
    t = max(-1.0, min(1.0, value / vmax)) if vmax > 0 else 0.0
    return _lerp(_YELLOW, _RED, -t) if t < 0 else _lerp(_YELLOW, _GREEN, t)


def sequential_color(value: float) -> str:
    return _lerp(_PALE, _BLUE, max(0.0, min(1.0, value)))


def to_svg(report: Report, row_order: Sequence[RatioBin] = DEFAULT_ROW_ORDER, title: str | None = None) -> str:
    cw, ch, left, top = 64, 40, 48, 36
    m = _matrix(report)
    populated = m[~np.isnan(m)]
    vmax = float(np.abs(populated).max()) if populated.size else 0.0
    width = left + cw * len(AreaBin) + 8
    height = top + ch * len(row_order) + 28
    title = title or ("Accuracy difference" if isinstance(report, DiffReport) else "Accuracy")
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<text x="{left}" y="20" font-size="14">{title}</text>',
    ]
    for i, r in enumerate(row_order):
        y = top + i * ch
        out.append(f'<text x="{left - 6}" y="{y + ch / 2 + 4:.0f}" text-anchor="end">{r.name}</text>')
        for j, a in enumerate(AreaBin):
            x = left + j * cw
            v = float(m[a, r])
            if math.isnan(v):
                fill, label = "#eeeeee", ""
            elif isinstance(report, DiffReport):
                fill, label = diverging_color(v, vmax), f"{v:+.2f}"
            else:
                fill, label = sequential_color(v), f"{v:.2f}"
            out.append(
                f'<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{fill}" stroke="#ffffff" '
                f'data-cell="{r.name},{a.name}"/>'
            )
            if label:
                out.append(f'<text x="{x + cw / 2:.0f}" y="{y + ch / 2 + 4:.0f}" text-anchor="middle">{label}</text>')
    y = top + ch * len(row_order) + 18
    for j, a in enumerate(AreaBin):
        out.append(f'<text x="{left + j * cw + cw / 2:.0f}" y="{y}" text-anchor="middle">{a.name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit(
    report: Report,
    fmt: Literal["csv", "structured", "svg"],
    path: str | os.PathLike[str],
    row_order: Sequence[RatioBin] = DEFAULT_ROW_ORDER,
) -> Path:
    if fmt == "csv":
        text = to_csv(report, row_order)
    elif fmt == "structured":
        text = json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    elif fmt == "svg":
        text = to_svg(report, row_order)
    else:
        raise ValidationError(f"unknown report format {fmt!r}")
    return atomic_write(path, text)


def load_report(path: str | os.PathLike[str]) -> Report:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc.msg}") from None
    kind = obj.get("kind") if isinstance(obj, dict) else None
    if kind == CellReport.kind:
        return CellReport.from_dict(obj)
    if kind == DiffReport.kind:
        return DiffReport.from_dict(obj)
    raise ValidationError(f"{path}: not a cell or diff report")
