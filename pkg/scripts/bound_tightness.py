#!/usr/bin/env python3
"""Measure how sharp the volume-ratio bound is on flat space as the
dimension parameter N approaches its lower limit.

In flat space with an unweighted measure, the star volume grows like
r^{n+1}, while the comparison profile grows like r^{N+1}.  The bound
margin at a fixed radius pair therefore shrinks to zero as N -> n: the
inequality is tight exactly in the limit.  This script tabulates the
margin for a ladder of N values and checks the closed-form prediction
margin = (r/R)^{n+1} - (r/R)^{N+1}.

Usage:
    python3 scripts/bound_tightness.py [--n 2] [--r 0.5] [--R 1.0]
"""

import argparse
import sys

import numpy as np

from lfgeom import models
from lfgeom.comparison import SCLVSpec, bishop_gromov_check, build_sclv_data


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--r", type=float, default=0.5)
    ap.add_argument("--R", type=float, default=1.0)
    ap.add_argument("--cut", type=float, default=1.0)
    args = ap.parse_args(argv)

    m = models.model_library("minkowski", args.n)
    sclv = SCLVSpec(apex=np.zeros(args.n + 1), radius=0.5, cut=args.cut)
    data = build_sclv_data(m, sclv, scale=0.5)

    ratio = args.r / args.R
    steps = [4.0, 2.0, 1.0, 0.5, 0.1, 1e-2, 1e-3]
    print(f"flat space n={args.n}, pair (r, R)=({args.r}, {args.R})")
    print(f"{'N':>12s} {'margin':>14s} {'predicted':>14s} {'|diff|':>10s}")
    worst = 0.0
    for dN in steps:
        N = args.n + dN
        rep = bishop_gromov_check(data, N, [(args.r, args.R)])
        row = rep.results[0]
        predicted = ratio ** (args.n + 1) - ratio ** (N + 1)
        diff = abs(row["margin"] - predicted)
        worst = max(worst, diff)
        print(f"{N:12.6g} {row['margin']:14.6e} {predicted:14.6e} "
              f"{diff:10.2e}")
    print(f"\nworst |measured - predicted| = {worst:.3e}")
    return 0 if worst < 1e-7 else 1


if __name__ == "__main__":
    sys.exit(main())
