#!/usr/bin/env python3
"""Run every bundled scenario through the full check pipeline and print a
verdict table.

Usage:
    python3 scripts/run_scenarios.py [--out reports] [--threads 4]

Writes one JSON report and one diagnostics CSV per scenario into --out and
summarises verdict + worst margin per check on stdout.  Exit code is 1 if
any scenario other than a deliberate negative control fails.
"""

import argparse
import json
import sys
from pathlib import Path

from lfgeom import cli

ROOT = Path(__file__).resolve().parent.parent
NEGATIVE_CONTROLS = {"boosted-sphere-gunther-fail"}


def worst_margin(check_body):
    rows = check_body.get("results", [])
    margins = [r["margin"] for r in rows if "margin" in r]
    return min(margins) if margins else float("nan")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(ROOT / "reports"))
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--resolution-scale", type=float, default=1.0)
    args = ap.parse_args(argv)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    scenario_files = sorted((ROOT / "scenarios").glob("*.yaml"))
    if not scenario_files:
        print("no scenario files found", file=sys.stderr)
        return 2

    bad = []
    for path in scenario_files:
        code = cli.main([
            "all", "--scenario", str(path), "--out", str(outdir),
            "--threads", str(args.threads),
            "--resolution-scale", str(args.resolution_scale),
        ])
        reports = sorted(outdir.glob("*-all.json"), key=lambda p: p.stat().st_mtime)
        rep = json.loads(reports[-1].read_text())
        name = rep["scenario"]
        control = name in NEGATIVE_CONTROLS
        print(f"\n{name}  (exit {code}{', negative control' if control else ''})")
        print(f"  overall: {rep['verdict']}")
        for check, body in sorted(rep.get("checks", {}).items()):
            print(f"  {check:8s} {body['verdict']:16s} "
                  f"worst margin {worst_margin(body):+.6g}")
        if "volume_oracle" in rep:
            vo = rep["volume_oracle"]
            print(f"  oracle   {vo['verdict']:16s} rel diff "
                  f"{vo.get('rel_diff', float('nan')):.3g}")
        if (code != 0) != control:
            bad.append(name)

    if bad:
        print(f"\nunexpected outcomes: {', '.join(bad)}", file=sys.stderr)
        return 1
    print(f"\n{len(scenario_files)} scenarios behaved as expected")
    return 0


if __name__ == "__main__":
    sys.exit(main())
