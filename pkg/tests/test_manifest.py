import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from nativeres.errors import InfeasibleTargetError, MissingDimsError, ParseError, ValidationError
from nativeres.manifest import (
    AugmentationPlan,
    Distribution,
    Record,
    apply_augmentation,
    audit_balance,
    distribution,
    load_distribution,
    load_manifest,
    plan_augmentation,
    resolve_dims,
)
from nativeres.probe import probe_dims
from nativeres.taxonomy import ALL_CELLS, AreaBin, GridCell, ImageDims, RatioBin, classify

from .conftest import cell_dims, synthetic_records, write_manifest

NM_B = GridCell(AreaBin.B, RatioBin.NM)


def _record(id="r", w=None, h=None, path="x.png", **kw):
    return Record(id=id, image_path=path, question="q", answers=("a",), width=w, height=h, **kw)


def _png(size, color=(200, 30, 30)) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", size, color).save(buf, format="PNG")
    return buf.getvalue()


# --- loading ---------------------------------------------------------------


def test_empty_manifest(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text("")
    assert load_manifest(p) == []


def test_three_records_in_order(tmp_path):
    rows = synthetic_records(1)[:3]
    recs = load_manifest(write_manifest(tmp_path / "m.jsonl", rows))
    assert [r.id for r in recs] == [r["id"] for r in rows]
    assert recs[0].to_dict()["answers"] == ["42"]


def test_missing_answers_reports_line(tmp_path):
    rows = synthetic_records(1)[:3]
    del rows[1]["answers"]
    with pytest.raises(ParseError) as exc:
        load_manifest(write_manifest(tmp_path / "m.jsonl", rows))
    assert exc.value.line == 2


@pytest.mark.parametrize(
    "line",
    [
        "not json",
        '{"id": "a", "image_path": "x", "question": "q", "answers": []}',
        '{"id": "a", "image_path": "x", "question": "q", "answers": ["y"], "width": 10}',
        '{"id": "a", "image_path": "x", "question": "q", "answers": ["y"], "colour": 1}',
        '{"id": "a", "image_path": "x", "question": "q", "answers": ["y"], "answer_type": "poem"}',
    ],
)
def test_schema_errors(tmp_path, line):
    p = tmp_path / "m.jsonl"
    p.write_text('{"id": "ok", "image_path": "x", "question": "q", "answers": ["y"]}\n' + line + "\n")
    with pytest.raises(ParseError) as exc:
        load_manifest(p)
    assert exc.value.line == 2


def test_duplicate_ids(tmp_path):
    rows = synthetic_records(1)[:1] * 2
    with pytest.raises(ParseError):
        load_manifest(write_manifest(tmp_path / "m.jsonl", rows))


def test_resolve_dims_probes_header(tmp_path):
    (tmp_path / "x.png").write_bytes(_png((33, 12)))
    assert resolve_dims(_record(), tmp_path) == ImageDims(33, 12)
    assert resolve_dims(_record(w=5, h=6), tmp_path) == ImageDims(5, 6)
    with pytest.raises(MissingDimsError):
        resolve_dims(_record(path="gone.png"), tmp_path)


# --- distribution ----------------------------------------------------------


def test_distribution_examples():
    assert distribution([]).total == 0
    one = [Record.from_dict(r) for r in synthetic_records(1)]
    assert distribution(one) == Distribution.uniform(1)
    fifty = [Record.from_dict(r) for r in synthetic_records(50)]
    d = distribution(fifty)
    assert d == Distribution.uniform(50) and d.total == 1750


def test_distribution_csv_layout_and_round_trip(tmp_path):
    d = Distribution(np.arange(35).reshape(7, 5))
    lines = d.to_csv().splitlines()
    assert lines[0] == "ratio,A,B,C,D,E,F,G"
    assert [l.split(",")[0] for l in lines[1:]] == ["BW", "AW", "NM", "AH", "BH"]
    assert lines[1] == "BW,0,5,10,15,20,25,30"
    assert Distribution.from_csv(d.to_csv()) == d
    assert Distribution.from_dict(json.loads(json.dumps(d.to_dict()))) == d
    (tmp_path / "d.csv").write_text(d.to_csv())
    (tmp_path / "d.json").write_text(json.dumps(d.to_dict()))
    assert load_distribution(tmp_path / "d.csv") == load_distribution(tmp_path / "d.json") == d


@given(st.lists(st.tuples(st.integers(1, 5000), st.integers(1, 5000)), max_size=40), st.integers(0, 40))
def test_distribution_is_additive(dims, k):
    recs = [_record(id=str(i), w=w, h=h) for i, (w, h) in enumerate(dims)]
    whole = distribution(recs)
    assert whole.total == len(recs)
    assert distribution(recs[:k]) + distribution(recs[k:]) == whole


# --- balance ---------------------------------------------------------------


def test_uniform_is_balanced_at_zero_tolerance():
    assert audit_balance(Distribution.uniform(50), 0.0).balanced


def test_drained_cell_is_listed():
    d = Distribution.uniform(50)
    d.counts[NM_B.area, NM_B.ratio] = 0
    rep = audit_balance(d, 0.1)
    assert not rep.balanced
    assert NM_B in [c for c, _ in rep.deviating]
    assert rep.to_dict()["balanced"] is False


def test_plus_minus_two_within_five_percent():
    rng = np.random.default_rng(0)
    signs = rng.permutation(np.repeat([2, -2], [17, 17]))
    counts = np.full(35, 50)
    counts[:34] += signs  # total stays 1750, so expected is exactly 50
    d = Distribution(counts.reshape(7, 5))
    assert d.total == 1750
    assert audit_balance(d, 0.05).balanced
    assert not audit_balance(d, 0.03).balanced


# --- augmentation ----------------------------------------------------------


def test_target_equal_to_current_means_no_transforms():
    recs = [Record.from_dict(r) for r in synthetic_records(2)]
    plans = plan_augmentation(recs, distribution(recs))
    assert {p.transform for p in plans} == {"none"}


def test_pad_square_to_wide():
    recs = [_record(w=400, h=400)]
    target = Distribution()
    bw = GridCell(AreaBin.D, RatioBin.BW)  # 1800 x 400 = 720000 px
    target.counts[bw.area, bw.ratio] = 1
    (p,) = plan_augmentation(recs, target)
    assert p.transform == "pad" and p.target == ImageDims(1800, 400)
    assert classify(p.target) == bw


def test_resize_down_to_a():
    src = cell_dims(GridCell(AreaBin.C, RatioBin.NM))
    target = Distribution()
    target.counts[AreaBin.A, RatioBin.NM] = 1
    (p,) = plan_augmentation([_record(w=src.width, h=src.height)], target)
    assert p.transform == "resize"
    assert p.target == ImageDims(50, 50)


def test_infeasible_total():
    with pytest.raises(InfeasibleTargetError):
        plan_augmentation([_record(w=10, h=10)], Distribution.uniform(1))


def test_plan_rejects_wrong_cell():
    with pytest.raises(ValidationError):
        AugmentationPlan("r", ImageDims(10, 10), "pad", ImageDims(10, 10), GridCell(AreaBin.G, RatioBin.BW))


def test_pad_fills_new_columns():
    src = Image.new("RGB", (2, 2), (255, 255, 255))
    buf = io.BytesIO()
    src.save(buf, format="PNG")
    plan = AugmentationPlan("r", ImageDims(2, 2), "pad", ImageDims(4, 2), GridCell(AreaBin.A, RatioBin.NM), fill=0)
    out = np.asarray(Image.open(io.BytesIO(apply_augmentation(buf.getvalue(), plan))))
    assert out.shape == (2, 4, 3)
    for x in (0, 3):
        assert (out[:, x] == 0).all()
    assert (out[:, 1:3] == 255).all()


def test_resize_constant_image_stays_constant():
    plan = AugmentationPlan("r", ImageDims(4, 4), "resize", ImageDims(2, 2), GridCell(AreaBin.A, RatioBin.NM))
    out = np.asarray(Image.open(io.BytesIO(apply_augmentation(_png((4, 4), (9, 99, 199)), plan))))
    assert out.shape == (2, 2, 3)
    assert (out == [9, 99, 199]).all()


def test_pad_100_to_500_is_bw():
    plan = AugmentationPlan("r", ImageDims(100, 100), "pad", ImageDims(500, 100), GridCell(AreaBin.B, RatioBin.BW))
    out = Image.open(io.BytesIO(apply_augmentation(_png((100, 100)), plan)))
    assert classify(ImageDims(*out.size)).ratio is RatioBin.BW


def test_apply_end_to_end_matches_target(tmp_path):
    # 35 small NM images of varying size; target: one per cell.
    rng = np.random.default_rng(3)
    recs = []
    for i in range(35):
        side = int(rng.integers(20, 90))
        name = f"img{i:02d}.png"
        (tmp_path / name).write_bytes(_png((side, side + int(rng.integers(0, 10)))))
        recs.append(_record(id=f"r{i:02d}", path=name))
    target = Distribution.uniform(1)
    plans = plan_augmentation(recs, target, tmp_path)
    out = Distribution()
    for rec, plan in zip(recs, plans):
        path = tmp_path / rec.image_path
        if plan.transform != "none":
            path = tmp_path / f"aug-{rec.id}.png"
            path.write_bytes(apply_augmentation((tmp_path / rec.image_path).read_bytes(), plan))
        cell = classify(probe_dims(path))
        assert cell == plan.cell
        out.counts[cell.area, cell.ratio] += 1
    assert out == target


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 3000), st.integers(1, 3000)), min_size=1, max_size=70), st.randoms())
def test_plans_hit_any_target(dims, rnd):
    recs = [_record(id=str(i), w=w, h=h) for i, (w, h) in enumerate(dims)]
    counts = np.zeros(35, dtype=np.int64)
    for _ in recs:
        counts[rnd.randrange(35)] += 1
    target = Distribution(counts.reshape(7, 5))
    plans = plan_augmentation(recs, target)
    got = Distribution()
    for p in plans:
        c = classify(p.target)
        got.counts[c.area, c.ratio] += 1
        if p.transform == "pad":
            assert p.target.width >= p.source.width and p.target.height >= p.source.height
    assert got == target
    assert plan_augmentation(recs, target) == plans
