"""Command-line front door.

Subcommands: validate-model | curvature | geodesic | jacobi | bg |
gunther | bg-inf | ball | all.  Every run takes a scenario file and
writes a versioned JSON report (``schema: 1``) plus CSV plot data into
``--out``.  Exit status: 0 when all verdicts are PASS or
CONDITIONAL-PASS, 1 on any FAIL, 2 on configuration errors, 3 on
numerical aborts (integrator failure, no admissible parameters).

Flags may also be set by environment variables with the ``LFGEOM_``
prefix (``LFGEOM_SCENARIO``, ``LFGEOM_OUT``, ``LFGEOM_THREADS``,
``LFGEOM_SEED``, ``LFGEOM_RESOLUTION_SCALE``); explicit flags win.
Reports are byte-identical across runs and thread counts: all parallel
reductions are ordered, and no timestamps are embedded.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import comparison as cmp
from . import models
from .jacobi import gunther_f, jacobi_variational, riccati_quantities, weighted_density
from .scenario import ConfigError, Scenario, load_scenario, scenario_fields

SCHEMA = 1
SUBCOMMANDS = ("validate-model", "curvature", "geodesic", "jacobi",
               "bg", "gunther", "bg-inf", "ball", "all")
_ENV_PREFIX = "LFGEOM_"


def _env_default(name, cast, fallback):
    raw = os.environ.get(_ENV_PREFIX + name.upper().replace("-", "_"))
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"{_ENV_PREFIX}{name.upper()}: cannot parse {raw!r}")


def _build_parser():
    p = argparse.ArgumentParser(
        prog="lfgeom",
        description="Lorentz-Finsler comparison-geometry checks")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--scenario",
                        default=_env_default("scenario", str, None))
        sp.add_argument("--out", default=_env_default("out", str, "."))
        sp.add_argument("--threads", type=int,
                        default=_env_default("threads", int, 1))
        sp.add_argument("--seed", type=int,
                        default=_env_default("seed", int, 0))
        sp.add_argument("--resolution-scale", type=float,
                        default=_env_default("resolution-scale", float, 1.0))
    return p


# ------------------------------------------------------------------ output


def _write_json(out_dir: Path, stem: str, payload: dict) -> Path:
    path = out_dir / f"{stem}.json"
    path.write_text(json.dumps(payload, sort_keys=True, indent=2,
                               default=float) + "\n")
    return path


def _write_csv(out_dir: Path, stem: str, header, rows) -> Path:
    path = out_dir / f"{stem}.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{x:.17g}" if isinstance(x, float) else x for x in row])
    return path


def _report_shell(scen: Scenario, command: str, args) -> dict:
    return {
        "schema": SCHEMA,
        "command": command,
        "scenario": scen.name,
        "model": scenario_fields(scen.model),
        "sclv": scenario_fields(scen.sclv),
        # thread count deliberately not embedded: reports are byte-identical
        # across --threads (ordered reductions)
        "numerics": {**scenario_fields(scen.numerics),
                     "resolution_scale": args.resolution_scale,
                     "seed": args.seed},
    }


# ------------------------------------------------------------- subcommands


def _center_direction(m, sclv):
    n = m.n
    center = np.zeros(n) if sclv.center is None else np.asarray(sclv.center)
    w = np.concatenate([[1.0], center])
    F = np.sqrt(-models.lagrangian(m, sclv.apex, w))
    return w / F


def _scaled(scen: Scenario, args):
    f = args.resolution_scale
    num = scen.numerics
    return {"scale": num.quad_scale * f,
            "t_scan": max(8, int(round(num.t_scan * f))),
            "t_volume": max(4, int(round(num.t_volume * f))),
            "rtol": num.ode_rtol, "atol": num.ode_atol}


def _validate_model(scen: Scenario, args, samples=200):
    m = scen.model.build()
    rng = np.random.default_rng(args.seed)
    d = m.dim
    box = min(1.0, 0.25 * min(min(-lo for lo in m.chart_lo),
                              min(hi for hi in m.chart_hi)))
    xs, vs = [], []
    while len(xs) < samples:
        x = rng.uniform(-box, box, size=d)
        v = np.concatenate([[1.0], rng.uniform(-0.7, 0.7, size=m.n)])
        v *= rng.uniform(0.5, 2.0)
        if models.classify(m, x, v) == "future-timelike":
            xs.append(x)
            vs.append(v)
    xs, vs = np.array(xs), np.array(vs)

    s = 1.7
    L = models.lagrangian(m, xs, vs)
    Ls = models.lagrangian(m, xs, s * vs)
    hom_L = float(np.max(np.abs(Ls - s**2 * L) / np.maximum(np.abs(L), 1e-12)))
    psi = models.weight(m, xs, vs)
    hom_psi = float(np.max(np.abs(models.weight(m, xs, s * vs) - psi)))
    g = models.fundamental_tensor(m, xs, vs)
    hom_g = float(np.max(np.abs(models.fundamental_tensor(m, xs, s * vs) - g)))
    gvv = np.einsum("...a,...ab,...b->...", vs, g, vs)
    metric_id = float(np.max(np.abs(gvv - L)))

    eig = np.linalg.eigvalsh(g)
    signature_ok = bool(np.all(np.sum(eig < 0, axis=-1) == 1))
    min_margin = float(np.min(np.abs(eig)))
    orientation_ok = bool(
        models.classify(m, np.zeros(d), np.eye(d)[0]) == "future-timelike")

    tol = 1e-9
    ok = (hom_L < tol and hom_psi < tol and hom_g < 1e-8
          and metric_id < 1e-9 and signature_ok and orientation_ok)
    return {
        "verdict": "PASS" if ok else "FAIL",
        "samples": samples,
        "tolerance": tol,
        "homogeneity": {"L_deg2_rel": hom_L, "psi_deg0_abs": hom_psi,
                        "g_deg0_abs": hom_g},
        "metric_identity_gvv_minus_L": metric_id,
        "signature": {"ok": signature_ok, "min_eig_margin": min_margin},
        "orientation_ok": orientation_ok,
    }, []


def _geodesic_rows(scen: Scenario, args):
    m = scen.model.build()
    sclv = scen.sclv.build()
    v0 = _center_direction(m, sclv)
    cfg = _scaled(scen, args)
    from .geodesics import integrate_geodesic
    seg = integrate_geodesic(m, sclv.apex, v0, sclv.cut,
                             rtol=cfg["rtol"], atol=cfg["atol"])
    ts = np.linspace(0.0, seg.t_end, 129)
    xs = seg.position(ts)
    vel = seg.velocity(ts)
    L = models.lagrangian(m, xs, vel)
    rows = [[float(t)] + [float(c) for c in x] + [float(c) for c in w] +
            [float(l + 1.0)] for t, x, w, l in zip(ts, xs, vel, L)]
    header = (["t"] + [f"x{i}" for i in range(m.dim)]
              + [f"v{i}" for i in range(m.dim)] + ["L_drift"])
    report = {"verdict": "PASS" if seg.t_end >= sclv.cut else "FAIL",
              "t_end": float(seg.t_end), "status": seg.status,
              "max_L_drift": float(np.max(np.abs(L + 1.0))),
              "ode_rtol": cfg["rtol"], "ode_atol": cfg["atol"]}
    return report, [(header, rows)]


def _radial_scalars(scen: Scenario, args):
    """Scalars along the patch-center geodesic (curvature/jacobi data)."""
    m = scen.model.build()
    sclv = scen.sclv.build()
    cfg = _scaled(scen, args)
    v0 = _center_direction(m, sclv)
    path = jacobi_variational(m, sclv.apex, v0, sclv.cut,
                              rtol=cfg["rtol"], atol=cfg["atol"])
    ts = np.linspace(sclv.cut / 64, sclv.cut, 64)
    return m, path, riccati_quantities(path, ts)


def _curvature_cmd(scen: Scenario, args):
    m, _, sc = _radial_scalars(scen, args)
    N = scen.checks.bg.N if scen.checks.bg else m.n + 2.0
    ricN = sc.ric + sc.d2psi - sc.dpsi**2 / (N - m.n)
    header = ["t", "ric", "ric_inf", f"ric_N_{N:g}", "psi", "dpsi", "d2psi"]
    rows = [[float(a) for a in row] for row in
            zip(sc.ts, sc.ric, sc.ric + sc.d2psi, ricN, sc.psi, sc.dpsi, sc.d2psi)]
    report = {"verdict": "PASS", "N": float(N), "samples": len(rows),
              "inf_ric_N": float(np.min(ricN)),
              "ode_rtol": scen.numerics.ode_rtol,
              "ode_atol": scen.numerics.ode_atol}
    return report, [(header, rows)]


def _jacobi_cmd(scen: Scenario, args):
    m, _, sc = _radial_scalars(scen, args)
    N = scen.checks.bg.N if scen.checks.bg else m.n + 2.0
    c_flag = scen.checks.gunther.c if (scen.checks.gunther and
                                       scen.checks.gunther.c is not None) else 0.0
    h, _, _ = weighted_density(sc, N)
    f = gunther_f(sc, max(c_flag, 0.0))
    header = ["t", "detA", "lambda", "h", "f"]
    rows = [[float(a) for a in row] for row in zip(sc.ts, sc.detA, sc.lam, h, f)]
    report = {"verdict": "PASS", "N": float(N), "c_flag": float(max(c_flag, 0.0)),
              "samples": len(rows), "min_detA": float(np.min(sc.detA)),
              "ode_rtol": scen.numerics.ode_rtol,
              "ode_atol": scen.numerics.ode_atol}
    return report, [(header, rows)]


def _sclv_data(scen: Scenario, args):
    m = scen.model.build()
    sclv = scen.sclv.build()
    cfg = _scaled(scen, args)
    data = cmp.build_sclv_data(m, sclv, scale=cfg["scale"],
                               t_scan=cfg["t_scan"],
                               rtol=cfg["rtol"], atol=cfg["atol"])
    return data, cfg


def _run_check(name, scen: Scenario, data, cfg, args):
    ck = scen.checks
    tn = cfg["t_volume"]
    if name == "bg":
        rep = cmp.bishop_gromov_check(data, ck.bg.N, ck.bg.pairs, c=ck.bg.c,
                                      tnodes=tn, threads=args.threads)
    elif name == "gunther":
        rep = cmp.gunther_check(data, c=ck.gunther.c, k=ck.gunther.k,
                                tnodes=tn, threads=args.threads)
    elif name == "bg_inf":
        rep = cmp.bg_infinity_check(data, ck.bg_inf.pairs, c=ck.bg_inf.c,
                                    a=ck.bg_inf.a, tnodes=tn,
                                    threads=args.threads)
    elif name == "ball":
        rep = cmp.ball_bound_check(data, ck.ball.eps, ck.ball.r_grid,
                                   c=ck.ball.c, tnodes=tn,
                                   threads=args.threads)
    else:
        raise ConfigError(f"unknown check {name}")
    return rep


def _oracle_entry(scen: Scenario, data):
    m = data.model
    if m.n > 2:
        return {"verdict": "SKIPPED", "reason": "oracle covers n <= 2"}
    vol, err = cmp.sclv_volume(data, 1.0)
    direct = cmp.coordinate_volume(m, data.sclv, 1.0)
    rel = abs(direct - vol) / vol
    return {"verdict": "PASS" if rel < 1e-4 else "FAIL",
            "polar": vol, "polar_t_error": err, "coordinate": direct,
            "rel_diff": rel, "tolerance": 1e-4}


def _diagnostic_rows(data, scen: Scenario):
    N = scen.checks.bg.N if scen.checks.bg else data.model.n + 2.0
    c_flag = 0.0
    if scen.checks.gunther and scen.checks.gunther.c is not None:
        c_flag = max(scen.checks.gunther.c, 0.0)
    header = ["direction", "t", "detA", "lambda", "ric", "psi", "dpsi",
              "d2psi", "h", "f"]
    rows = []
    for i, sc in enumerate(data.scalars):
        h, _, _ = weighted_density(sc, N)
        f = gunther_f(sc, c_flag)
        for k in range(sc.ts.size):
            rows.append([i, float(sc.ts[k]), float(sc.detA[k]),
                         float(sc.lam[k]), float(sc.ric[k]), float(sc.psi[k]),
                         float(sc.dpsi[k]), float(sc.d2psi[k]),
                         float(h[k]), float(f[k])])
    return header, rows


_CHECK_NAMES = {"bg": "bg", "gunther": "gunther", "bg-inf": "bg_inf",
                "ball": "ball"}


def run(args) -> int:
    if args.scenario is None:
        raise ConfigError("--scenario is required (or set LFGEOM_SCENARIO)")
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    if args.resolution_scale <= 0:
        raise ConfigError("--resolution-scale must be positive")
    scen = load_scenario(args.scenario)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{scen.name}-{args.command}"
    report = _report_shell(scen, args.command, args)
    csv_blocks = []

    if args.command == "validate-model":
        body, csv_blocks = _validate_model(scen, args)
        report["validate_model"] = body
    elif args.command == "geodesic":
        body, csv_blocks = _geodesic_rows(scen, args)
        report["geodesic"] = body
    elif args.command == "curvature":
        body, csv_blocks = _curvature_cmd(scen, args)
        report["curvature"] = body
    elif args.command == "jacobi":
        body, csv_blocks = _jacobi_cmd(scen, args)
        report["jacobi"] = body
    elif args.command in _CHECK_NAMES:
        key = _CHECK_NAMES[args.command]
        if getattr(scen.checks, key) is None:
            raise ConfigError(f"scenario {scen.name} does not configure "
                              f"the {args.command} check")
        data, cfg = _sclv_data(scen, args)
        report["checks"] = {key: _run_check(key, scen, data, cfg, args).to_dict()}
        csv_blocks = [_diagnostic_rows(data, scen)]
    elif args.command == "all":
        body, _ = _validate_model(scen, args)
        report["validate_model"] = body
        geo, geo_csv = _geodesic_rows(scen, args)
        report["geodesic"] = geo
        curv, _ = _curvature_cmd(scen, args)
        report["curvature"] = curv
        jac, jac_csv = _jacobi_cmd(scen, args)
        report["jacobi"] = jac
        requested = scen.checks.requested()
        if requested:
            data, cfg = _sclv_data(scen, args)
            report["checks"] = {}
            for key in requested:
                report["checks"][key] = _run_check(key, scen, data, cfg,
                                                   args).to_dict()
            if scen.numerics.oracle:
                report["volume_oracle"] = _oracle_entry(scen, data)
            csv_blocks = [_diagnostic_rows(data, scen)]
        else:
            csv_blocks = jac_csv

    verdicts = _collect_verdicts(report)
    report["verdict"] = ("FAIL" if "FAIL" in verdicts else
                         "CONDITIONAL-PASS" if "CONDITIONAL-PASS" in verdicts
                         else "PASS")
    json_path = _write_json(out_dir, stem, report)
    for i, (header, rows) in enumerate(csv_blocks):
        suffix = stem if len(csv_blocks) == 1 else f"{stem}-{i}"
        _write_csv(out_dir, suffix, header, rows)
    print(f"{scen.name} {args.command}: {report['verdict']} -> {json_path}")
    return 0 if report["verdict"] != "FAIL" else 1


def _collect_verdicts(node):
    out = []
    if isinstance(node, dict):
        for k, v in node.items():
            if k == "verdict" and isinstance(v, str):
                out.append(v)
            else:
                out.extend(_collect_verdicts(v))
    elif isinstance(node, list):
        for v in node:
            out.extend(_collect_verdicts(v))
    return out


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return run(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except cmp.ComparisonAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except RuntimeError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
