"""Command-line front end.

Subcommands: construct, energy, spherical, slice, product-slice, intersect,
identity-check, audit, validate.  Every run reads one JSON config, writes its
artifacts into a directory named by the config-hash prefix, and exits 0 on
pass, 2 on a verdict failure, 1 on error.  Flags override environment
variables (prefix SLICEDIM_), which override the config file.
"""
from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, boxdim, harmonic
from .experiments import (
    RUNNERS,
    ExperimentConfig,
    validate_config,
)
from .fractal_measures import BudgetError, natural_measure
from .harmonic import FrequencyGrid, decay_exponent_fit, energy_fourier, energy_spatial

ENV_PREFIX = "SLICEDIM_"

SUBCOMMAND_SCENARIOS = {
    "slice": "slice",
    "product-slice": "product_slice",
    "intersect": "intersection",
    "identity-check": "identity_check",
    "audit": "audit",
}


def _env(name: str):
    return os.environ.get(ENV_PREFIX + name.upper())


def _load_config(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _write_manifest(out_dir: Path, config_hash: str, seed: int, outputs: list[str]) -> None:
    manifest = {
        "config_hash": config_hash,
        "master_seed": seed,
        "tool_version": __version__,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": sorted(outputs),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))


def _apply_overrides(raw: dict, args) -> dict:
    raw = dict(raw)
    seed = args.seed if args.seed is not None else _env("seed")
    if seed is not None:
        raw["seed"] = int(seed)
    budget = args.budget_atoms if args.budget_atoms is not None else _env("budget_atoms")
    if budget is not None:
        raw["budget_atoms"] = int(budget)
    return raw


def _resolve_out_dir(args, config_hash: str, scenario: str) -> Path:
    base = args.out_dir or _env("out_dir") or "runs"
    out = Path(base) / f"{scenario}-{config_hash[:12]}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_diags(diags: list[dict]) -> None:
    for d in diags:
        print(f"{d['level']}: {d['field']}: {d['message']}", file=sys.stderr)


def _run_experiment(args, scenario: str) -> int:
    raw = _apply_overrides(_load_config(args.config), args)
    raw["scenario"] = scenario
    config = ExperimentConfig.from_dict(raw)
    diags = validate_config(config)
    _print_diags(diags)
    if any(d["level"] == "error" for d in diags):
        return 1
    workers = int(args.workers or _env("workers") or 1)
    progress = (lambda msg: print(msg, file=sys.stderr)) if not args.quiet else None
    try:
        report = RUNNERS[scenario](config, workers=workers, progress=progress)
    except BudgetError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    out_dir = _resolve_out_dir(args, report.config_hash, scenario)
    report_path = out_dir / "report.json"
    report_path.write_text(report.to_json())
    report.write_csvs(out_dir / "samples.csv", out_dir / "scaling.csv")
    outputs = ["report.json", "samples.csv", "scaling.csv", "manifest.json"]
    _write_manifest(out_dir, report.config_hash, config.seed, outputs)
    expect_fail = args.expect_fail or (_env("expect_fail") or "").lower() in ("1", "true")
    ok = (not report.passed) if expect_fail else report.passed
    print(f"{scenario}: {'pass' if ok else 'FAIL'} -> {out_dir}")
    return 0 if ok else 2


def _cmd_validate(args) -> int:
    raw = _load_config(args.config)
    scenario = raw.get("scenario")
    if scenario in SUBCOMMAND_SCENARIOS:
        scenario = SUBCOMMAND_SCENARIOS[scenario]
    if scenario not in RUNNERS:
        print(f"error: scenario: unknown or missing scenario {scenario!r}", file=sys.stderr)
        return 1
    raw["scenario"] = scenario
    config = ExperimentConfig.from_dict(raw)
    diags = validate_config(config)
    if "seed" not in _load_config(args.config):
        diags.append({
            "level": "warning", "field": "seed",
            "message": "no seed given; default-seed policy uses master seed 0",
        })
    _print_diags(diags)
    print(f"validate: {len([d for d in diags if d['level'] == 'error'])} errors, "
          f"{len([d for d in diags if d['level'] == 'warning'])} warnings")
    return 0


def _cmd_construct(args) -> int:
    raw = _apply_overrides(_load_config(args.config), args)
    raw.setdefault("scenario", "audit")
    config = ExperimentConfig.from_dict(raw)
    if not config.sets:
        print("error: sets: at least one set required", file=sys.stderr)
        return 1
    out_dir = _resolve_out_dir(args, config.config_hash(), "construct")
    outputs = ["manifest.json"]
    try:
        for i, s_cfg in enumerate(config.sets):
            ifs = s_cfg.build_ifs()
            (out_dir / f"ifs_{i}.json").write_text(ifs.to_json())
            mu = natural_measure(ifs, s_cfg.generation, config.budget_atoms)
            mu.to_csv(out_dir / f"measure_{i}.csv")
            cover = boxdim.cover_from_ifs(ifs, s_cfg.generation, config.budget_atoms)
            cover.keys_to_csv(out_dir / f"cover_keys_{i}.csv")
            cover.centers_to_csv(out_dir / f"cover_centers_{i}.csv")
            outputs += [f"ifs_{i}.json", f"measure_{i}.csv",
                        f"cover_keys_{i}.csv", f"cover_centers_{i}.csv"]
    except BudgetError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    _write_manifest(out_dir, config.config_hash(), config.seed, outputs)
    print(f"construct: wrote {len(outputs) - 1} artifacts -> {out_dir}")
    return 0


def _cmd_energy(args) -> int:
    raw = _apply_overrides(_load_config(args.config), args)
    raw.setdefault("scenario", "audit")
    config = ExperimentConfig.from_dict(raw)
    extra = _load_config(args.config)
    s_values = extra.get("s_values", [0.5])
    cutoff = float(extra.get("cutoff", 128.0))
    spacing = float(extra.get("spacing", 1 / 16))
    gap_max = extra.get("gap_max")
    s_cfg = config.sets[0]
    mu = natural_measure(s_cfg.build_ifs(), s_cfg.generation, config.budget_atoms)
    grid = FrequencyGrid(mu.ambient_dim, cutoff, spacing)
    out_dir = _resolve_out_dir(args, config.config_hash(), "energy")
    rows, worst = [], 0.0
    for s in s_values:
        spatial = energy_spatial(mu, float(s))
        fourier = energy_fourier(mu, float(s), grid)
        gap = abs(fourier - spatial) / spatial
        worst = max(worst, gap)
        rows.append((float(s), spatial, fourier, gap))
    import csv as _csv

    with open(out_dir / "energy_sweep.csv", "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["s", "energy_spatial", "energy_fourier", "rel_gap",
                         "cutoff", "spacing"])
        for s, spat, four, gap in rows:
            writer.writerow([repr(s), repr(spat), repr(four), repr(gap),
                             repr(cutoff), repr(spacing)])
    report = {
        "scenario": "energy",
        "config_hash": config.config_hash(),
        "rows": [{"s": s, "energy_spatial": spat, "energy_fourier": four, "rel_gap": gap}
                 for s, spat, four, gap in rows],
        "worst_gap": worst,
        "passed": bool(gap_max is None or worst <= float(gap_max)),
    }
    (out_dir / "report.json").write_text(json.dumps(report, sort_keys=True, indent=1))
    _write_manifest(out_dir, config.config_hash(), config.seed,
                    ["report.json", "energy_sweep.csv", "manifest.json"])
    print(f"energy: worst gap {worst:.4g} -> {out_dir}")
    return 0 if report["passed"] else 2


def _cmd_spherical(args) -> int:
    raw = _apply_overrides(_load_config(args.config), args)
    raw.setdefault("scenario", "audit")
    config = ExperimentConfig.from_dict(raw)
    extra = _load_config(args.config)
    r_min = float(extra.get("r_min", 4.0))
    r_max = float(extra.get("r_max", 256.0))
    count = int(extra.get("r_count", 13))
    slope_max = extra.get("slope_max")
    s_cfg = config.sets[0]
    mu = natural_measure(s_cfg.build_ifs(), s_cfg.generation, config.budget_atoms)
    r_values = np.geomspace(r_min, r_max, count)
    values = harmonic.spherical_average_sweep(mu, r_values)
    fit = decay_exponent_fit(mu, r_values)
    out_dir = _resolve_out_dir(args, config.config_hash(), "spherical")
    nodes = [harmonic.min_sphere_nodes(mu.ambient_dim, float(r), mu.support_radius)
             for r in r_values]
    harmonic.sweep_to_csv(out_dir / "spherical_sweep.csv", r_values, values, nodes)
    report = {
        "scenario": "spherical",
        "config_hash": config.config_hash(),
        "fit": fit.to_dict(),
        "passed": bool(slope_max is None or fit.slope <= float(slope_max)),
    }
    (out_dir / "report.json").write_text(json.dumps(report, sort_keys=True, indent=1))
    _write_manifest(out_dir, config.config_hash(), config.seed,
                    ["report.json", "spherical_sweep.csv", "manifest.json"])
    print(f"spherical: decay slope {fit.slope:.4g} -> {out_dir}")
    return 0 if report["passed"] else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slicedim",
        description="Fractal measures with known dimension; slice and "
                    "intersection dimension experiments.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--workers", type=int, default=None, help="parallel workers")
        p.add_argument("--out-dir", default=None, help="output root (default: runs/)")
        p.add_argument("--budget-atoms", type=int, default=None, help="atom budget override")
        p.add_argument("--expect-fail", action="store_true",
                       help="exit 0 when verdicts fail (negative controls)")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    for name in SUBCOMMAND_SCENARIOS:
        common(sub.add_parser(name, help=f"run the {name} scenario"))
    common(sub.add_parser("construct", help="emit IFS/measure/cover files"))
    common(sub.add_parser("energy", help="spatial vs frequency energy sweep"))
    common(sub.add_parser("spherical", help="spherical-average sweep and decay fit"))
    p_val = sub.add_parser("validate", help="check a config without running")
    p_val.add_argument("--config", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "construct":
            return _cmd_construct(args)
        if args.command == "energy":
            return _cmd_energy(args)
        if args.command == "spherical":
            return _cmd_spherical(args)
        return _run_experiment(args, SUBCOMMAND_SCENARIOS[args.command])
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
