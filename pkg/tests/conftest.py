from __future__ import annotations

import json
import math
import re
from pathlib import Path

import pytest

from nativeres.taxonomy import ALL_CELLS, AreaBin, GridCell, ImageDims, RatioBin, classify

# Representative (area, width/height ratio) per bin, picked well inside each bin.
_AREA = {
    AreaBin.A: 5_000,
    AreaBin.B: 60_000,
    AreaBin.C: 300_000,
    AreaBin.D: 900_000,
    AreaBin.E: 1_800_000,
    AreaBin.F: 3_000_000,
    AreaBin.G: 4_500_000,
}
_RATIO = {RatioBin.BW: 6.0, RatioBin.AW: 3.0, RatioBin.NM: 1.0, RatioBin.AH: 1 / 3, RatioBin.BH: 1 / 6}


def cell_dims(cell: GridCell) -> ImageDims:
    area, ratio = _AREA[cell.area], _RATIO[cell.ratio]
    dims = ImageDims(round(math.sqrt(area * ratio)), round(math.sqrt(area / ratio)))
    assert classify(dims) == cell
    return dims


def synthetic_records(per_cell: int, drained: GridCell | None = None) -> list[dict]:
    rows = []
    for cell in ALL_CELLS:
        if cell == drained:
            continue
        d = cell_dims(cell)
        for k in range(per_cell):
            rows.append(
                {
                    "id": f"{cell.ratio.name}{cell.area.name}-{k:03d}",
                    "image_path": f"images/{cell.ratio.name}{cell.area.name}-{k:03d}.png",
                    "width": d.width,
                    "height": d.height,
                    "question": "What is written in the image?",
                    "answers": ["42"],
                }
            )
    return rows


def write_manifest(path: Path, rows: list[dict]) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# One PASS/FAIL line per acceptance criterion in the terminal summary.

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_outcomes: dict[int, list[str]] = {}


def pytest_runtest_logreport(report: pytest.TestReport) -> None:
    m = _CRITERION.search(report.nodeid)
    if not m or "test_acceptance" not in report.nodeid:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes.setdefault(int(m.group(1)), []).append(report.outcome)


def pytest_terminal_summary(terminalreporter) -> None:  # type: ignore[no-untyped-def]
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        ok = all(o == "passed" for o in _outcomes[n])
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}")


def make_project(root: Path) -> dict[str, Path]:
    """Small on-disk project: images, manifest, two prediction files."""
    from PIL import Image

    img_dir = root / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    specs = [("sq", (336, 336), "PNG"), ("wide", (900, 200), "JPEG"), ("tall", (120, 500), "PNG"), ("tiny", (30, 40), "PNG")]
    rows = []
    for k, (name, size, fmt) in enumerate(specs):
        path = img_dir / f"{name}.{fmt.lower()}"
        Image.new("RGB", size, (40 * k, 100, 200 - 40 * k)).save(path, format=fmt)
        rows.append({"id": name, "image_path": f"images/{path.name}", "question": "q", "answers": [["9 cm", "$193", "Paris", "12 Main Street, Springfield"][k]]})
    rows.append({"id": "big", "image_path": "images/big.png", "width": 5000, "height": 5000, "question": "q", "answers": ["2021-03-04"]})
    manifest = write_manifest(root / "manifest.jsonl", rows)
    preds_a = root / "preds_a.jsonl"
    preds_a.write_text(
        "".join(
            json.dumps({"id": i, "prediction": p}) + "\n"
            for i, p in [("sq", "9"), ("wide", "193 $"), ("tall", "paris"), ("tiny", "12 main st springfield"), ("big", "2021-03-04")]
        )
    )
    preds_b = root / "preds_b.jsonl"
    preds_b.write_text("".join(json.dumps({"id": i, "prediction": "no idea"}) + "\n" for i in ("sq", "wide", "tall", "tiny", "big")))
    return {"manifest": manifest, "preds_a": preds_a, "preds_b": preds_b}
