#!/usr/bin/env python3
"""Run every bundled experiment config and summarize the verdicts.

Usage:
    python scripts/run_all_experiments.py [--out-dir runs] [--workers N]

Negative-control configs are expected to fail their positive-band verdicts;
they are run with the expect-fail convention and reported accordingly.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from slicedim.cli import main as cli_main

CONFIG_DIR = Path(__file__).parent / "configs"

# the negative-control config carries control-mode verdicts (pass when the
# median stays at the floor), so it runs without --expect-fail; that flag is
# for controls deliberately run against the positive bands.
RUNS = [
    ("audit", "audit_four_corner.json", False),
    ("construct", "construct_middle_thirds.json", False),
    ("energy", "energy_lebesgue.json", False),
    ("spherical", "spherical_decay.json", False),
    ("slice", "slice_product_cantor.json", False),
    ("product-slice", "product_slice_difference.json", False),
    ("product-slice", "product_slice_scaled.json", False),
    ("intersect", "intersect_four_corner.json", False),
    ("intersect", "intersect_negative_control.json", False),
    ("identity-check", "identity_check.json", False),
]


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out-dir", default="runs")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    failures = []
    for command, config_name, expect_fail in RUNS:
        config = CONFIG_DIR / config_name
        argv = [
            command, "--config", str(config),
            "--out-dir", args.out_dir, "--workers", str(args.workers),
        ]
        if expect_fail:
            argv.append("--expect-fail")
        print(f"== {command} {config_name} ==", flush=True)
        code = cli_main(argv)
        if code != 0:
            failures.append((command, config_name, code))
    print()
    if failures:
        for command, config_name, code in failures:
            print(f"FAILED ({code}): {command} {config_name}")
        return 1
    print(f"all {len(RUNS)} runs passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
