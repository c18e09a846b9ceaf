"""``nativeres`` command line.

Exit codes: 0 success, 1 validation/usage error, 2 I/O error. Machine-readable
artifacts go to ``--out-dir``; stdout carries a human-readable summary.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from collections import Counter
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .budget import BudgetConfig, fixed_res_plan, plan
from .config import Config, load_config
from .encoder import ImageInput, encode_image, forward, init_weights
from .errors import ValidationError
from .io import atomic_write, write_json, write_jsonl
from .manifest import (
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
from .packer import POLICIES, PatchSequence, pack, stats
from .report import CellReport, aggregate, emit, load_report
from .report import diff as diff_reports
from .scoring import load_predictions, load_scored, score_record
from .taxonomy import AreaBin, RatioBin

log = logging.getLogger("nativeres")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _grid_text(matrix: np.ndarray, row_order: Sequence[RatioBin], fmt: str) -> str:
    lines = ["      " + "".join(f"{a.name:>8}" for a in AreaBin)]
    for r in row_order:
        cells = []
        for a in AreaBin:
            v = matrix[a, r]
            cells.append(f"{'-':>8}" if isinstance(v, float) and np.isnan(v) else format(v, fmt))
        lines.append(f"{r.name:<6}" + "".join(cells))
    return "\n".join(lines)


def _records(path: str) -> tuple[list[Record], Path]:
    return load_manifest(path), Path(path).resolve().parent


# ---------------------------------------------------------------------------
# Subcommands


def cmd_analyze(args: argparse.Namespace, cfg: Config) -> int:
    records, root = _records(args.manifest)
    dist = distribution(records, root)
    tol = cfg.report.balance_tolerance if args.tolerance is None else args.tolerance
    balance = audit_balance(dist, tol)
    out = Path(args.out_dir)
    atomic_write(out / "distribution.csv", dist.to_csv())
    write_json(out / "distribution.json", dist.to_dict())
    write_json(out / "balance.json", balance.to_dict())
    print(f"total: {dist.total}")
    print(_grid_text(dist.counts, cfg.report.row_order, ">8d"))
    print(f"cells: min {balance.min_count}, max {balance.max_count}, expected {balance.expected_per_cell:.2f}")
    print(f"balanced: {'true' if balance.balanced else 'false'} (tolerance {tol})")
    for cell, n in balance.deviating[:10]:
        print(f"  deviating {cell.label()}: {n}")
    if len(balance.deviating) > 10:
        print(f"  ... and {len(balance.deviating) - 10} more deviating cells")
    return 0


def _budget_cfg(args: argparse.Namespace, cfg: Config) -> BudgetConfig:
    changes = {k: v for k, v in (("max_tokens", args.max_tokens), ("max_res", args.max_res)) if v is not None}
    return dataclasses.replace(cfg.budget, **changes)


def cmd_budget(args: argparse.Namespace, cfg: Config) -> int:
    records, root = _records(args.manifest)
    bcfg = _budget_cfg(args, cfg)
    rows = []
    print(f"{'id':<24} {'source':>11} {'planned':>11} {'grid':>9} {'pre':>6} {'post':>6}")
    for r in records:
        dims = resolve_dims(r, root)
        p = fixed_res_plan(dims, args.fixed_side, bcfg) if args.fixed_side else plan(dims, bcfg)
        rows.append({"id": r.id, **p.to_dict()})
        print(
            f"{r.id:<24} {dims.width:>5}x{dims.height:<5} {p.planned.width:>5}x{p.planned.height:<5} "
            f"{p.grid[0]:>4}x{p.grid[1]:<4} {p.pre_merge_tokens:>6} {p.post_merge_tokens:>6}"
        )
    write_jsonl(Path(args.out_dir) / "plans.jsonl", rows)
    return 0


def cmd_pack(args: argparse.Namespace, cfg: Config) -> int:
    records, root = _records(args.manifest)
    bcfg = _budget_cfg(args, cfg)
    capacity = args.capacity or cfg.packer.capacity
    policy = args.policy or cfg.packer.policy
    unit = args.unit or cfg.packer.unit
    seqs = []
    for r in records:
        p = plan(resolve_dims(r, root), bcfg)
        seqs.append(PatchSequence(r.id, p.post_merge_tokens if unit == "tokens" else p.pre_merge_tokens))
    batch = pack(seqs, capacity, policy)  # type: ignore[arg-type]
    st = stats(batch, seqs)
    out = Path(args.out_dir)
    write_jsonl(out / "bins.jsonl", batch.to_records())
    write_json(out / "pack_stats.json", {"policy": policy, "unit": unit, **st.to_dict()})
    print(f"policy {policy}, capacity {capacity} {unit}")
    print(f"sequences: {st.sequences}, tokens: {st.total_tokens}, bins: {st.bins}")
    print(f"packed utilization: {st.utilization:.4f}")
    print(f"naive padded tokens: {st.naive_padded_tokens} (utilization {st.naive_utilization:.4f})")
    print(f"padding waste saved: {st.waste_ratio_saved:.4f}")
    return 0


def cmd_encode(args: argparse.Namespace, cfg: Config) -> int:
    records, root = _records(args.manifest)
    enc = cfg.encoder if args.seed is None else dataclasses.replace(cfg.encoder, seed=args.seed)
    sample = args.sample or cfg.encode.sample
    bcfg = dataclasses.replace(
        cfg.budget, max_tokens=cfg.encode.max_tokens, min_tokens=min(cfg.budget.min_tokens, cfg.encode.max_tokens), max_res=None
    )
    weights = init_weights(enc)
    rng = np.random.default_rng(enc.seed)
    images = []
    for r in records[:sample]:
        p = plan(resolve_dims(r, root), bcfg)
        payload = rng.standard_normal((p.pre_merge_tokens, enc.patch_dim)).astype(np.float32)
        images.append(ImageInput(r.id, payload, p.grid))
    packed = forward(images, weights, capacity=cfg.encode.capacity)
    single = [encode_image(img, weights) for img in images]
    dev = max((float(np.abs(a - b).max()) for a, b in zip(packed, single)), default=0.0)
    n_bins = len(pack([PatchSequence(i.id, i.length) for i in images], cfg.encode.capacity).bins)
    rows = [
        {"id": img.id, "grid": list(img.grid), "pre_merge_tokens": img.length, "output_tokens": int(t.shape[0])}
        for img, t in zip(images, packed)
    ]
    write_json(
        Path(args.out_dir) / "encode.json",
        {"seed": enc.seed, "capacity": cfg.encode.capacity, "bins": n_bins, "images": rows, "max_abs_deviation": dev},
    )
    for row in rows:
        print(f"{row['id']:<24} grid {row['grid'][0]}x{row['grid'][1]}  patches {row['pre_merge_tokens']:>5}  tokens {row['output_tokens']:>4}")
    print(f"packed rows: {n_bins}")
    print(f"packed-vs-unpacked max abs deviation: {dev:.3e}")
    return 0


def cmd_score(args: argparse.Namespace, cfg: Config) -> int:
    records = load_manifest(args.manifest)
    preds = load_predictions(args.predictions)
    known = {r.id for r in records}
    for pid in sorted(set(preds) - known):
        log.warning("prediction for unknown record %r ignored", pid)
    scored = []
    for r in records:
        if r.id not in preds:
            log.warning("no prediction for record %r; scoring as empty", r.id)
        scored.append(score_record(preds.get(r.id, ""), r, cfg.scoring))
    write_jsonl(Path(args.out_dir) / "scored.jsonl", [s.to_dict() for s in scored])
    by_metric = Counter(s.metric for s in scored)
    mean = sum(s.score for s in scored) / len(scored) if scored else 0.0
    print(f"scored: {len(scored)} ({', '.join(f'{m} {n}' for m, n in sorted(by_metric.items()))})")
    print(f"mean score: {100 * mean:.1f}")
    return 0


def _emit_all(report: Any, stem: str, out: Path, cfg: Config) -> None:
    emit(report, "structured", out / f"{stem}.json", cfg.report.row_order)
    emit(report, "csv", out / f"{stem}.csv", cfg.report.row_order)
    emit(report, "svg", out / f"{stem}.svg", cfg.report.row_order)


def cmd_report(args: argparse.Namespace, cfg: Config) -> int:
    scored = load_scored(args.scored)
    records, root = _records(args.manifest)
    dims = {r.id: resolve_dims(r, root) for r in records}
    rep = aggregate(scored, dims, cfg.report.sigma)  # type: ignore[arg-type]
    _emit_all(rep, "report", Path(args.out_dir), cfg)
    print(_grid_text(rep.accuracy, cfg.report.row_order, "8.2f"))
    print(f"acc: {100 * rep.overall:.1f}  ACV: {rep.acv:.1f}  RCV: {rep.rcv:.1f}  (CV x10^2, {rep.sigma} sigma)")
    return 0


def cmd_diff(args: argparse.Namespace, cfg: Config) -> int:
    a, b = load_report(args.report_a), load_report(args.report_b)
    if not (isinstance(a, CellReport) and isinstance(b, CellReport)):
        raise ValidationError("diff needs two cell reports")
    d = diff_reports(a, b)
    _emit_all(d, "diff", Path(args.out_dir), cfg)
    print(_grid_text(d.values, cfg.report.row_order, "+8.2f"))
    return 0


def cmd_augment(args: argparse.Namespace, cfg: Config) -> int:
    records, root = _records(args.manifest)
    target = Distribution.spread(len(records)) if args.target == "uniform" else load_distribution(args.target)
    plans = plan_augmentation(records, target, root, fill=args.fill)
    out = Path(args.out_dir)
    write_jsonl(out / "augment_plans.jsonl", [p.to_dict() for p in plans])
    if args.apply:
        rows = []
        for r, p in zip(records, plans):
            row = r.to_dict()
            if p.transform == "none":
                row["image_path"] = str((root / r.image_path).resolve())
            else:
                data = apply_augmentation((root / r.image_path).read_bytes(), p)
                rel = f"images/{r.id}.png"
                atomic_write(out / rel, data)
                row["image_path"] = rel
            row["width"], row["height"] = p.target.width, p.target.height
            rows.append(row)
        write_jsonl(out / "augmented_manifest.jsonl", rows)
    kinds = Counter(p.transform for p in plans)
    print(f"plans: {len(plans)} (none {kinds['none']}, pad {kinds['pad']}, resize {kinds['resize']})")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nativeres", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="INI config file (defaults apply when absent)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help, description=help)
        p.add_argument("-o", "--out-dir", default=".", help="directory for output files (default: .)")
        return p

    p = add("analyze", "7x5 resolution/ratio distribution and balance audit of a manifest")
    p.add_argument("manifest")
    p.add_argument("--tolerance", type=float, help="relative per-cell deviation allowed")
    p.set_defaults(func=cmd_analyze)

    p = add("budget", "per-image resize and token plans")
    p.add_argument("manifest")
    p.add_argument("--max-tokens", type=int)
    p.add_argument("--max-res", type=int)
    p.add_argument("--fixed-side", type=int, help="fixed-resolution baseline side in pixels")
    p.set_defaults(func=cmd_budget)

    p = add("pack", "pack planned images into fixed-capacity sequences")
    p.add_argument("manifest")
    p.add_argument("--capacity", type=int)
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--unit", choices=("tokens", "patches"), help="pack post-merge tokens or pre-merge patches")
    p.add_argument("--max-tokens", type=int)
    p.add_argument("--max-res", type=int)
    p.set_defaults(func=cmd_pack)

    p = add("encode", "seeded reference forward; packed vs per-image deviation")
    p.add_argument("manifest")
    p.add_argument("--seed", type=int)
    p.add_argument("--sample", type=int, help="number of leading records to encode")
    p.set_defaults(func=cmd_encode)

    p = add("score", "score predictions against manifest golds")
    p.add_argument("manifest")
    p.add_argument("predictions")
    p.set_defaults(func=cmd_score)

    p = add("report", "aggregate scored answers into a cell report")
    p.add_argument("scored")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_report)

    p = add("diff", "cell-wise difference A - B of two cell reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.set_defaults(func=cmd_diff)

    p = add("augment", "plan (and optionally apply) pad/resize augmentation toward a target distribution")
    p.add_argument("manifest")
    p.add_argument("--target", required=True, help="distribution CSV/JSON, or 'uniform'")
    p.add_argument("--fill", type=int, default=0, help="pad fill value (default 0, black)")
    p.add_argument("--apply", action="store_true", help="write transformed images and an augmented manifest")
    p.set_defaults(func=cmd_augment)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
