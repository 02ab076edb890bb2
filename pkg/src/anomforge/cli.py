"""Command-line batch surface.

Subcommands mirror the pipeline stages: ``phantom`` emits synthetic heads,
``corrupt`` turns healthy volumes into pseudo-pathological ones, ``simulate``
exposes the raw probability-field transport, ``reconstruct`` runs the partial
diffusion round trip, ``detect`` scores residual anomaly maps, ``evaluate``
aggregates detection metrics.

Every run resolves one config (defaults < --config file < ANOMFORGE_* env
vars < flags), writes the resolved copy next to its outputs, and emits JSON
provenance sidecars with every sampled parameter. All outputs are atomic and
byte-deterministic for a fixed config and seed. Failures print a one-line
machine-readable JSON error to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Mapping

import numpy as np

from .config import ConfigError, load_config
from .metrics import ExcludedSample, aggregate, binarize_gt, score_sample
from .nifti import _atomic_write_bytes, read_nifti, write_nifti
from .pipeline import (
    corrupt_volume,
    detect_volumes,
    phantom_from_config,
    randomize_field,
    reconstruct_volume,
    select_corrupted,
)
from .volume import BinaryMask3D, Volume3D, brain_mask, erode


def write_json(path: str, obj: Any) -> None:
    """Sorted-key, newline-terminated, atomically replaced JSON."""
    blob = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    _atomic_write_bytes(path, blob.encode("utf-8"))


def _read_mask(path: str) -> BinaryMask3D:
    return BinaryMask3D(read_nifti(path).values > 0.5)


def _mask_volume(mask: BinaryMask3D, spacing: tuple[float, float, float]) -> Volume3D:
    return Volume3D(mask.bits.astype(float), spacing)


def _out_dir(args: argparse.Namespace, cfg: Mapping[str, Any]) -> str:
    out = cfg["out_dir"]
    os.makedirs(out, exist_ok=True)
    write_json(os.path.join(out, "resolved_config.json"), dict(cfg))
    return out


def _say(path: str) -> None:
    print(f"wrote {path}")


# --- subcommands ------------------------------------------------------------


def cmd_phantom(args: argparse.Namespace, cfg: dict) -> int:
    out = _out_dir(args, cfg)
    vol, wm, brain, lesion = phantom_from_config(cfg)
    for name, v in (
        ("phantom.nii.gz", vol),
        ("wm_mask.nii.gz", _mask_volume(wm, vol.spacing)),
        ("brain_mask.nii.gz", _mask_volume(brain, vol.spacing)),
        ("lesion_mask.nii.gz", _mask_volume(lesion, vol.spacing)),
    ):
        path = os.path.join(out, name)
        write_nifti(v, path)
        _say(path)
    return 0


def _corrupt_entries(args: argparse.Namespace) -> list[tuple[str, str, str]]:
    """(sample_id, healthy_path, lesion_path), from a manifest or a single pair."""
    if args.manifest:
        base = os.path.dirname(os.path.abspath(args.manifest))
        entries = []
        with open(args.manifest, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            required = {"sample_id", "healthy_path", "lesion_path"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise ValueError(f"corrupt manifest needs columns {sorted(required)}")
            for row in reader:
                entries.append(
                    (
                        row["sample_id"],
                        os.path.join(base, row["healthy_path"]),
                        os.path.join(base, row["lesion_path"]),
                    )
                )
        if not entries:
            raise ValueError("corrupt manifest is empty")
        if len({e[0] for e in entries}) != len(entries):
            raise ValueError("duplicate sample_id in manifest")
        return entries
    if not (args.healthy and args.lesion):
        raise ValueError("corrupt needs either --manifest or both --healthy and --lesion")
    return [("sample", args.healthy, args.lesion)]


def cmd_corrupt(args: argparse.Namespace, cfg: dict) -> int:
    out = _out_dir(args, cfg)
    entries = _corrupt_entries(args)
    master = int(cfg["seed"])
    selected = set(select_corrupted([e[0] for e in entries], float(cfg["corruption_fraction"]), master))
    n_variants = int(cfg["variants_per_sample"])

    def run_variant(sid: str, healthy: str, lesion: str, k: int) -> None:
        x_h = read_nifti(healthy)
        seed_mask = _read_mask(lesion)
        x_p, p_final, prov = corrupt_volume(x_h, seed_mask, cfg, master, sid, k)
        stem = os.path.join(out, f"{sid}_v{k:02d}")
        write_nifti(x_p, stem + "_xp.nii.gz")
        write_nifti(p_final, stem + "_pfinal.nii.gz")
        write_json(stem + "_provenance.json", prov)

    tasks = [
        (sid, healthy, lesion, k)
        for sid, healthy, lesion in entries
        if sid in selected
        for k in range(n_variants)
    ]
    workers = max(1, int(cfg["workers"]))
    if workers == 1:
        for t in tasks:
            run_variant(*t)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_variant, *t) for t in tasks]
            for f in futures:
                f.result()

    summary = {
        "master_seed": master,
        "corruption_fraction": cfg["corruption_fraction"],
        "variants_per_sample": n_variants,
        "corrupted": sorted(selected),
        "untouched": sorted(e[0] for e in entries if e[0] not in selected),
    }
    path = os.path.join(out, "corrupt_summary.json")
    write_json(path, summary)
    _say(path)
    return 0


def cmd_simulate(args: argparse.Namespace, cfg: dict) -> int:
    out = _out_dir(args, cfg)
    p0 = read_nifti(args.p0)
    mask = _read_mask(args.mask) if args.mask else brain_mask(p0, 0.0)

    def snap(i: int, vol: Volume3D) -> None:
        path = os.path.join(out, f"p_step{i:05d}.nii.gz")
        write_nifti(vol, path)
        _say(path)

    every = int(args.snapshot_every or 0)
    final, prov = randomize_field(
        p0, mask, cfg, on_snapshot=snap if every > 0 else None, snapshot_every=every
    )
    path = os.path.join(out, "p_final.nii.gz")
    write_nifti(final, path)
    write_json(os.path.join(out, "simulate_provenance.json"), prov)
    _say(path)
    return 0


def cmd_reconstruct(args: argparse.Namespace, cfg: dict) -> int:
    out = _out_dir(args, cfg)
    x = read_nifti(args.input)
    rec, prov = reconstruct_volume(x, cfg)
    path = os.path.join(out, "reconstruction.nii.gz")
    write_nifti(rec, path)
    write_json(os.path.join(out, "reconstruct_provenance.json"), prov)
    _say(path)
    return 0


def cmd_detect(args: argparse.Namespace, cfg: dict) -> int:
    out = _out_dir(args, cfg)
    x0 = read_nifti(args.original)
    xrec = read_nifti(args.reconstruction)
    mask = _read_mask(args.mask) if args.mask else None
    amap, prov = detect_volumes(x0, xrec, mask, cfg)
    used_mask = mask if mask is not None else brain_mask(x0, 0.0)
    eval_mask = erode(used_mask, int(cfg["detect"]["erode_iters"]))
    map_path = os.path.join(out, "anomaly_map.nii.gz")
    write_nifti(amap.volume, map_path)
    write_nifti(_mask_volume(eval_mask, x0.spacing), os.path.join(out, "eval_mask.nii.gz"))
    write_json(os.path.join(out, "detect_provenance.json"), prov)
    _say(map_path)
    return 0


def _evaluate_entries(args: argparse.Namespace) -> list[tuple[str, str, str, str | None]]:
    """(sample_id, map_path, gt_path, mask_path or None)."""
    if args.manifest:
        base = os.path.dirname(os.path.abspath(args.manifest))
        entries = []
        with open(args.manifest, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            required = {"map_path", "gt_path"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise ValueError("evaluate manifest needs columns map_path, gt_path")
            for i, row in enumerate(reader):
                sid = row.get("sample_id") or f"sample{i:04d}"
                mask_rel = row.get("mask_path") or None
                entries.append(
                    (
                        sid,
                        os.path.join(base, row["map_path"]),
                        os.path.join(base, row["gt_path"]),
                        os.path.join(base, mask_rel) if mask_rel else None,
                    )
                )
        if not entries:
            raise ValueError("evaluate manifest is empty")
        return entries
    if not (args.maps and args.gts):
        raise ValueError("evaluate needs either --manifest or both --maps and --gts")
    names = sorted(n for n in os.listdir(args.maps) if ".nii" in n)
    if not names:
        raise ValueError(f"no NIfTI files under {args.maps}")
    entries = []
    for n in names:
        gt = os.path.join(args.gts, n)
        if not os.path.exists(gt):
            raise ValueError(f"no ground truth for {n} under {args.gts}")
        mask = os.path.join(args.masks, n) if args.masks else None
        if mask is not None and not os.path.exists(mask):
            raise ValueError(f"no mask for {n} under {args.masks}")
        entries.append((n.split(".nii")[0], os.path.join(args.maps, n), gt, mask))
    return entries


def cmd_evaluate(args: argparse.Namespace, cfg: dict) -> int:
    out = _out_dir(args, cfg)
    mc = cfg["metrics"]
    results = []
    for sid, map_path, gt_path, mask_path in _evaluate_entries(args):
        map_vol = read_nifti(map_path)
        gt = binarize_gt(read_nifti(gt_path), float(mc["gt_threshold"]))
        if mask_path is not None:
            eval_mask = _read_mask(mask_path)
        else:
            eval_mask = BinaryMask3D(np.ones(map_vol.dims, dtype=bool))
        results.append(
            score_sample(map_vol, gt, eval_mask, sample_id=sid, n_thresholds=int(mc["n_thresholds"]))
        )
    report = aggregate(results)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", "auc", "ap", "dice_max", "best_threshold", "fpr", "excluded_reason"])
    for r in results:
        if isinstance(r, ExcludedSample):
            writer.writerow([r.sample_id, "", "", "", "", "", r.reason])
        else:
            writer.writerow(
                [r.sample_id, repr(r.auc), repr(r.ap), repr(r.dice_max), repr(r.best_threshold), repr(r.fpr), ""]
            )
    csv_path = os.path.join(out, "per_sample.csv")
    _atomic_write_bytes(csv_path, buf.getvalue().encode("utf-8"))
    agg_path = os.path.join(out, "aggregate.json")
    write_json(agg_path, report.to_dict())
    _say(csv_path)
    _say(agg_path)
    return 0


# --- parser / entry ---------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--out", help="output directory (overrides config)")
    p.add_argument("--workers", type=int, help="parallel workers (overrides config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anomforge",
        description="Synthetic pathology volumes, diffusion round trips, anomaly maps, metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="emit a synthetic head volume and its masks")
    _add_common(p)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("corrupt", help="generate pseudo-pathology variants")
    _add_common(p)
    p.add_argument("--healthy", help="healthy input volume (single-pair mode)")
    p.add_argument("--lesion", help="lesion seed mask (single-pair mode)")
    p.add_argument("--manifest", help="CSV with sample_id,healthy_path,lesion_path")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("simulate", help="transport a probability field and snapshot it")
    _add_common(p)
    p.add_argument("--p0", required=True, help="initial probability field (NIfTI)")
    p.add_argument("--mask", help="domain mask (NIfTI); default: support of --p0")
    p.add_argument("--snapshot-every", type=int, default=0, help="write every Nth step")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="partial diffusion round trip of a volume")
    _add_common(p)
    p.add_argument("--input", required=True, help="volume to reconstruct (NIfTI)")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("detect", help="residual anomaly map from an input/reconstruction pair")
    _add_common(p)
    p.add_argument("--original", required=True)
    p.add_argument("--reconstruction", required=True)
    p.add_argument("--mask", help="brain mask (NIfTI); default: support of --original")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="detection metrics over anomaly maps")
    _add_common(p)
    p.add_argument("--manifest", help="CSV with map_path,gt_path[,mask_path,sample_id]")
    p.add_argument("--maps", help="directory of anomaly maps (paired by filename)")
    p.add_argument("--gts", help="directory of ground-truth fields")
    p.add_argument("--masks", help="directory of evaluation masks")
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides: dict[str, Any] = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out_dir"] = args.out
        if args.workers is not None:
            overrides["workers"] = args.workers
        cfg = load_config(args.config, overrides=overrides)
        return args.func(args, cfg)
    except ConfigError as e:
        print(json.dumps({"error": "ConfigError", "message": str(e)}), file=sys.stderr)
        return 2
    except Exception as e:  # surface everything as machine-readable JSON
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
