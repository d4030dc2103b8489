r"""SCLV direction quadrature, polar volumes, and volume-comparison checks.

A star-shaped causally-localized set is described radially: an apex, a
compact patch of unit future-timelike directions (chart: spatial offset
p = center + s u on the slice {w0 = 1}, then v = w/F(w) onto {F = 1}),
and a cut value b giving the per-direction radial extent.  Volumes are
computed by the polar decomposition

    rho(U) = \int_patch \int_0^{b(v)} e^{-psi(t)} det A(t) dt dsigma(v),

where sigma is the g_v-induced area form on the unit hyperboloid and A
is the frame Jacobi tensor.  An independent coordinate-space route
(forward-mapping a fine polar grid and integrating the model measure
with a finite-difference Jacobian) cross-checks the decomposition.

The four checks mirror the comparison statements: the finite-N volume
ratio bound, the lower (flag-curvature) bound, the N = infinity ratio
bound, and the future-ball growth bound, each with its hypothesis scan,
pointwise residual checks, and PASS / CONDITIONAL-PASS / FAIL verdict.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from . import jets as jr
from .geodesics import DEFAULT_ATOL, DEFAULT_RTOL, find_validity_times, radial_flow
from .jacobi import (
    JacobiPath,
    PathScalars,
    check_concavity,
    check_hric,
    gunther_f,
    monotone_ratio_check,
    s_kappa,
    s_kappa_prime,
    sample_all,
    sample_grid,
    scalars_for_paths,
    variational_paths,
)
from .models import FinslerModel, classify, fundamental_tensor, lagrangian, weight

__all__ = [
    "SCLVSpec",
    "DirectionQuadrature",
    "SCLVData",
    "ComparisonReport",
    "ComparisonAbort",
    "build_quadrature",
    "build_sclv_data",
    "sclv_volume",
    "ball_volume",
    "radial_bound_scan",
    "bishop_gromov_check",
    "gunther_check",
    "bg_infinity_check",
    "ball_bound_check",
    "coordinate_volume",
]

QUAD_COUNTS = {1: (32,), 2: (12, 16), 3: (8, 8, 12)}
T_VOLUME = 48        # Gauss nodes per direction in t-integrals
T_SCAN = 32          # per-direction samples for bound scans / residuals
T_DENSE = 160        # per-direction samples for monotonicity sweeps
POINTWISE_TOL = 1e-6
RATIO_TOL_FLOOR = 1e-9
EPS_HALVING_STEPS = 12


class ComparisonAbort(RuntimeError):
    """Numerical abort: the check could not be carried out as posed."""


@dataclass
class SCLVSpec:
    """Radial description of a star-shaped causally-localized set."""

    apex: np.ndarray
    radius: float                  # chart radius of the direction patch
    cut: float                     # constant cut value b
    center: np.ndarray | None = None   # spatial chart offset of patch center
    constant_cut: bool = True

    def __post_init__(self):
        self.apex = np.asarray(self.apex, dtype=float)
        if self.center is not None:
            self.center = np.asarray(self.center, dtype=float)
        if self.radius <= 0 or self.cut <= 0:
            raise ValueError("patch radius and cut value must be positive")


@dataclass
class DirectionQuadrature:
    nodes: np.ndarray      # (Q, d) unit future-timelike directions
    weights: np.ndarray    # (Q,) dsigma weights
    params: np.ndarray     # (Q, n) chart parameters
    counts: tuple

    @property
    def sigma(self) -> float:
        return float(np.sum(self.weights))


def _chart_jets(m, sclv, params):
    """Direction jets v(theta) = w/F(w) and their chart derivatives."""
    n, d = m.n, m.dim
    center = np.zeros(n) if sclv.center is None else sclv.center
    sp = jr.jetspace(n, 1)
    th = jr.lift(sp, [params[:, a] for a in range(n)], list(range(n)))
    if n == 1:
        p = [th[0]]
    elif n == 2:
        s, phi = th
        p = [center[0] + s * jr.cos(phi), center[1] + s * jr.sin(phi)]
    elif n == 3:
        s, mu, phi = th
        root = jr.sqrt(1.0 - mu * mu)
        p = [center[0] + s * root * jr.cos(phi),
             center[1] + s * root * jr.sin(phi),
             center[2] + s * mu]
    else:
        raise ValueError(f"no direction chart for n={n}")
    w = [1.0] + p
    apex_c = [float(c) for c in sclv.apex]
    L0 = np.asarray(m.L_fn(apex_c, [np.ones_like(params[:, 0])]
                           + [c.coeffs[0] for c in p]))
    if np.max(L0) >= 0:
        bad = int(np.argmax(L0))
        raise ValueError(
            f"direction patch leaves the future timelike cone "
            f"(ray {bad} has L={L0.ravel()[bad]:.3g}); shrink the radius")
    L = m.L_fn(apex_c, w)
    F = jr.sqrt(-L)
    vj = [c / F for c in w]
    vals = np.stack([v.coeffs[0] for v in vj], axis=-1)          # (Q, d)
    grads = np.stack([jr.gradient(v) for v in vj], axis=-1)      # (n, Q, d)
    return vals, np.moveaxis(grads, 0, 1)                        # (Q, n, d)


def build_quadrature(m: FinslerModel, sclv: SCLVSpec, scale=1.0) -> DirectionQuadrature:
    """Product quadrature for the induced area measure on the patch."""
    n = m.n
    base = QUAD_COUNTS[n] if n in QUAD_COUNTS else None
    if base is None:
        raise ValueError(f"no direction chart for n={n}")
    counts = tuple(max(4, int(round(k * scale))) for k in base)
    center = np.zeros(n) if sclv.center is None else sclv.center

    if n == 1:
        xi, wi = np.polynomial.legendre.leggauss(counts[0])
        p = center[0] + sclv.radius * xi
        params = p[:, None]
        basew = sclv.radius * wi
    elif n == 2:
        xi, wi = np.polynomial.legendre.leggauss(counts[0])
        s = 0.5 * sclv.radius * (xi + 1.0)
        ws = 0.5 * sclv.radius * wi
        K = counts[1]
        phi = 2.0 * np.pi * np.arange(K) / K
        wphi = np.full(K, 2.0 * np.pi / K)
        S, P = np.meshgrid(s, phi, indexing="ij")
        params = np.stack([S.ravel(), P.ravel()], axis=-1)
        basew = np.outer(ws, wphi).ravel()
    else:
        xi, wi = np.polynomial.legendre.leggauss(counts[0])
        s = 0.5 * sclv.radius * (xi + 1.0)
        ws = 0.5 * sclv.radius * wi
        mu, wmu = np.polynomial.legendre.leggauss(counts[1])
        K = counts[2]
        phi = 2.0 * np.pi * np.arange(K) / K
        wphi = np.full(K, 2.0 * np.pi / K)
        S, MU, P = np.meshgrid(s, mu, phi, indexing="ij")
        params = np.stack([S.ravel(), MU.ravel(), P.ravel()], axis=-1)
        basew = np.einsum("i,j,k->ijk", ws, wmu, wphi).ravel()

    vals, dv = _chart_jets(m, sclv, params)
    apex = np.broadcast_to(sclv.apex, vals.shape)
    labels = np.asarray(classify(m, apex, vals))
    if not np.all(labels == "future-timelike"):
        bad = int(np.argmax(labels != "future-timelike"))
        raise ValueError(
            f"direction patch leaves the future timelike cone "
            f"(node {bad} is {labels.ravel()[bad]}); shrink the radius")
    Lv = lagrangian(m, apex, vals)
    if np.max(np.abs(Lv + 1.0)) > 1e-10:
        raise RuntimeError("direction nodes left the unit hyperboloid")
    g = fundamental_tensor(m, apex, vals)
    gram = np.einsum("qad,qde,qbe->qab", dv, g, dv)
    area = np.sqrt(np.linalg.det(gram))
    return DirectionQuadrature(nodes=vals, weights=basew * area,
                               params=params, counts=counts)


@dataclass
class SCLVData:
    """Per-scenario bundle: quadrature, Jacobi paths, and scan scalars."""

    model: FinslerModel
    sclv: SCLVSpec
    quad: DirectionQuadrature
    b: np.ndarray                      # (Q,) per-node cut
    paths: list                        # JacobiPath per node
    scan_grids: list
    scalars: list                      # PathScalars per node (scan grid)
    flag_min: np.ndarray               # (Q,) min frame-flag eigenvalue
    flag_max: np.ndarray               # (Q,)
    vol_cache: dict = field(default_factory=dict, repr=False)

    @property
    def sigma(self) -> float:
        return self.quad.sigma


def build_sclv_data(m: FinslerModel, sclv: SCLVSpec, *, scale=1.0,
                    t_scan=T_SCAN, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL) -> SCLVData:
    """Quadrature + validity guard + Jacobi paths + scan scalars, built once."""
    quad = build_quadrature(m, sclv, scale)
    Q = quad.nodes.shape[0]
    b = np.full(Q, float(sclv.cut))
    t_val, reasons = find_validity_times(m, sclv.apex, quad.nodes,
                                         float(np.max(b)) * 1.02,
                                         rtol=rtol, atol=atol)
    short = np.nonzero(t_val < b)[0]
    if short.size:
        i = int(short[np.argmin(t_val[short])])
        raise ValueError(
            f"cut b={b[i]:.6g} exceeds the valid range of direction {i} "
            f"(reaches t={t_val[i]:.6g}, {reasons[i]}); not an SCLV")
    paths = variational_paths(m, sclv.apex, quad.nodes, b, rtol=rtol, atol=atol)
    grids = [sample_grid(float(bi), t_scan) for bi in b]
    scalars, flag_lo, flag_hi = scalars_for_paths(paths, grids, flag_range=True)
    for i, s in enumerate(scalars):
        if np.min(s.detA) <= 0:
            t_bad = s.ts[int(np.argmax(s.detA <= 0))]
            raise ValueError(
                f"conjugate point before the cut on direction {i} "
                f"(det A <= 0 near t={t_bad:.6g}); not an SCLV")
    return SCLVData(model=m, sclv=sclv, quad=quad, b=b, paths=paths,
                    scan_grids=grids, scalars=scalars,
                    flag_min=flag_lo, flag_max=flag_hi)


# ----------------------------------------------------------------- volumes


def _dir_integrals(data: SCLVData, t_upper, tnodes, threads=None):
    r"""Per-direction \int_0^{T_i} e^{-psi} det A dt by Gauss-Legendre."""
    xi, wi = np.polynomial.legendre.leggauss(tnodes)
    xi01 = 0.5 * (xi + 1.0)
    wi01 = 0.5 * wi
    m = data.model
    t_upper = np.asarray(t_upper, dtype=float)

    if t_upper.size and np.ptp(t_upper) == 0.0 and t_upper[0] > 0:
        # common upper limit: one dense evaluation for the whole fan
        T = float(t_upper[0])
        samples = sample_all(data.paths, T * xi01)
        return np.array([T * float(np.sum(wi01 * np.exp(-weight(m, s.x, s.v))
                                          * s.detA)) for s in samples])

    def one(i):
        T = float(t_upper[i])
        if T <= 0:
            return 0.0
        ts = T * xi01
        s = data.paths[i].sample(ts)
        psi = weight(m, s.x, s.v)
        return T * float(np.sum(wi01 * np.exp(-psi) * s.detA))

    idx = range(len(data.paths))
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            vals = list(ex.map(one, idx))
    else:
        vals = [one(i) for i in idx]
    return np.array(vals)


def _polar_volume(data: SCLVData, t_upper, *, tnodes=T_VOLUME, threads=None):
    """(volume, error estimate) with the error from t-resolution halving."""
    full = _dir_integrals(data, t_upper, tnodes, threads)
    half = _dir_integrals(data, t_upper, max(tnodes // 2, 4), threads)
    vol = float(np.sum(data.quad.weights * full))
    vol_half = float(np.sum(data.quad.weights * half))
    return vol, abs(vol - vol_half)


def sclv_volume(data: SCLVData, r, *, tnodes=T_VOLUME, threads=None):
    """rho(U_x(r)): star-scaled volume, per-direction upper limit r b(v)."""
    if not 0.0 < r <= 1.0:
        raise ValueError("the scaling parameter r lies in (0, 1]")
    key = ("star", float(r), tnodes)
    if key not in data.vol_cache:
        data.vol_cache[key] = _polar_volume(data, r * data.b,
                                            tnodes=tnodes, threads=threads)
    return data.vol_cache[key]


def ball_volume(data: SCLVData, r, *, tnodes=T_VOLUME, threads=None):
    """rho of the forward ball {v in U_x : F(v) < r} (clipped at the cut)."""
    key = ("ball", float(r), tnodes)
    if key not in data.vol_cache:
        data.vol_cache[key] = _polar_volume(
            data, np.minimum(float(r), data.b), tnodes=tnodes, threads=threads)
    return data.vol_cache[key]


# ------------------------------------------------------------- bound scans


def radial_bound_scan(data: SCLVData, N=None) -> dict:
    """Empirical hypothesis bounds over all node geodesics and scan times."""
    n = data.model.n
    ric = np.concatenate([s.ric for s in data.scalars])
    d2 = np.concatenate([s.d2psi for s in data.scalars])
    d1 = np.concatenate([s.dpsi for s in data.scalars])
    psi = np.concatenate([s.psi for s in data.scalars])
    out = {
        "inf_ric_inf": float(np.min(ric + d2)),
        "sup_flag": float(np.max(data.flag_max)),
        "inf_flag": float(np.min(data.flag_min)),
        "sup_psi": float(np.max(psi)),
        "inf_dpsi": float(np.min(d1)),
        "t_samples": int(data.scan_grids[0].size),
        "directions": int(len(data.paths)),
    }
    if N is not None:
        if np.isinf(N):
            out["inf_ric_N"] = out["inf_ric_inf"]
        else:
            out["inf_ric_N"] = float(np.min(ric + d2 - d1**2 / (N - n)))
    return out


# ----------------------------------------------------------------- reports


@dataclass
class ComparisonReport:
    check: str
    verdict: str                      # PASS | CONDITIONAL-PASS | FAIL
    bounds: dict
    results: list = field(default_factory=list)
    pointwise: dict = field(default_factory=dict)
    quadrature: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "verdict": self.verdict,
            "bounds": self.bounds,
            "results": self.results,
            "pointwise": self.pointwise,
            "quadrature": self.quadrature,
            "notes": self.notes,
        }


def _quad_meta(data: SCLVData) -> dict:
    return {
        "directions": int(data.quad.nodes.shape[0]),
        "counts": list(data.quad.counts),
        "sigma": data.sigma,
        "cut": float(data.b[0]),
    }


def _gauss_integral(fn, lo, hi, nodes=128):
    xi, wi = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (hi - lo) * (xi + 1.0) + lo
    return 0.5 * (hi - lo) * float(np.sum(wi * fn(t)))


def _verdict(ok: bool, conditional: bool) -> str:
    if not ok:
        return "FAIL"
    return "CONDITIONAL-PASS" if conditional else "PASS"


def bishop_gromov_check(data: SCLVData, N, pairs, *, c=None,
                        tnodes=T_VOLUME, threads=None,
                        dense=T_DENSE) -> ComparisonReport:
    """Volume-ratio lower bound for effective dimension N in (n, oo)."""
    m, n = data.model, data.model.n
    if not (np.isfinite(N) and N > n):
        raise ValueError(f"the ratio bound needs N in (n, oo), got N={N}")
    if not data.sclv.constant_cut:
        raise ValueError("the ratio bound requires a constant cut")
    scan = radial_bound_scan(data, N=N)
    c_cert = scan["inf_ric_N"]
    conditional = False
    notes = []
    if c is None:
        c = c_cert
    elif c > c_cert + 1e-12:
        conditional = True
        notes.append(f"user bound c={c:.6g} stronger than scanned {c_cert:.6g}")
    b = float(data.b[0])
    Tx = b if c <= 0 else min(b, np.pi * np.sqrt(N / c))

    vols = {}
    for r in sorted({x for pair in pairs for x in pair}):
        vols[r] = sclv_volume(data, r, tnodes=tnodes, threads=threads)
    results, ok = [], True
    for (r, R) in pairs:
        if not (0 < r <= R <= 1):
            raise ValueError(f"need 0 < r <= R <= 1, got ({r}, {R})")
        vr, er = vols[r]
        vR, eR = vols[R]
        lhs = vr / vR
        rhs = (_gauss_integral(lambda t: s_kappa(c / N, t) ** N, 0.0, r * Tx)
               / _gauss_integral(lambda t: s_kappa(c / N, t) ** N, 0.0, R * Tx))
        tol = RATIO_TOL_FLOOR + lhs * (er / max(vr, 1e-300) + eR / max(vR, 1e-300))
        margin = lhs - rhs
        good = margin >= -tol
        ok &= good
        results.append({"r": r, "R": R, "lhs": lhs, "rhs": rhs,
                        "margin": margin, "tol": tol,
                        "verdict": "PASS" if good else "FAIL"})

    # per-direction density inequality and ratio monotonicity
    hric_res = max(check_hric(s, c, N) for s in data.scalars)
    worst = {"max_step": -np.inf, "max_integral_step": -np.inf}
    mono_ok = True
    hi = b if c <= 0 else min(b, 0.999 * np.pi * np.sqrt(N / c))
    ts = sample_grid(float(hi), dense)
    for s in sample_all(data.paths, ts):
        psi = weight(m, s.x, s.v)
        h = (np.exp(-psi) * s.detA) ** (1.0 / N)
        res = monotone_ratio_check(ts, h, s_kappa(c / N, ts))
        mono_ok &= res["pointwise_ok"] and res["integral_ok"]
        worst["max_step"] = max(worst["max_step"], res["max_step"])
        worst["max_integral_step"] = max(worst["max_integral_step"],
                                         res["max_integral_step"])
    point_ok = hric_res <= POINTWISE_TOL and mono_ok
    ok &= point_ok

    return ComparisonReport(
        check="bg", verdict=_verdict(ok, conditional),
        bounds={"N": float(N), "c": float(c), "c_certified": c_cert,
                "T_x": float(Tx), "scan": scan},
        results=results,
        pointwise={"hric_residual": hric_res, "hric_tol": POINTWISE_TOL,
                   "monotone_ok": bool(mono_ok), **worst},
        quadrature=_quad_meta(data), notes=notes)


def gunther_check(data: SCLVData, *, c=None, k=None, tnodes=T_VOLUME,
                  threads=None) -> ComparisonReport:
    """Volume lower bound from a flag-curvature upper bound K <= -c, c >= 0."""
    scan = radial_bound_scan(data)
    c_cert = -scan["sup_flag"]
    k_cert = scan["sup_psi"]
    conditional = False
    notes = []
    if c is not None:
        if c < 0:
            raise ValueError("the lower bound requires c >= 0")
        if c > c_cert + 1e-12:
            conditional = True
            notes.append(f"user bound c={c:.6g} stronger than scanned {c_cert:.6g}")
    else:
        c = max(c_cert, 0.0)
    hypothesis_ok = c_cert >= -1e-12 or conditional
    if c_cert < -1e-12 and not conditional:
        notes.append(
            f"no admissible c >= 0: scanned flag supremum {scan['sup_flag']:.6g} > 0")
    if k is None:
        k = k_cert
    elif k < k_cert - 1e-12:
        conditional = True
        notes.append(f"user bound k={k:.6g} stronger than scanned {k_cert:.6g}")

    b_inf = float(np.min(data.b))
    lhs, err = _polar_volume(data, data.b, tnodes=tnodes, threads=threads)
    rhs = np.exp(-k) * data.sigma * _gauss_integral(
        lambda t: s_kappa(-c, t) ** data.model.n, 0.0, b_inf)
    tol = RATIO_TOL_FLOOR + err
    margin = lhs - rhs
    f_min = min(float(np.min(gunther_f(s, c))) for s in data.scalars)
    point_ok = f_min >= 1.0 - POINTWISE_TOL
    ok = margin >= -tol and point_ok and hypothesis_ok
    return ComparisonReport(
        check="gunther", verdict=_verdict(ok, conditional),
        bounds={"c": float(c), "c_certified": c_cert, "k": float(k),
                "k_certified": k_cert, "scan": scan},
        results=[{"lhs": lhs, "rhs": rhs, "margin": margin, "tol": tol,
                  "verdict": "PASS" if margin >= -tol else "FAIL"}],
        pointwise={"min_f": f_min, "f_tol": POINTWISE_TOL},
        quadrature=_quad_meta(data), notes=notes)


def bg_infinity_check(data: SCLVData, pairs, *, c=None, a=None,
                      tnodes=T_VOLUME, threads=None) -> ComparisonReport:
    """Volume-ratio bound at N = infinity with weight-slope parameter a."""
    m, n = data.model, data.model.n
    if not data.sclv.constant_cut:
        raise ValueError("the ratio bound requires a constant cut")
    scan = radial_bound_scan(data)
    c_cert = scan["inf_ric_inf"] / n
    a_cert = -scan["inf_dpsi"]
    conditional = False
    notes = []
    if c is None:
        c = c_cert
    elif c > c_cert + 1e-12:
        conditional = True
        notes.append(f"user bound c={c:.6g} stronger than scanned {c_cert:.6g}")
    if a is None:
        a = a_cert
    elif a < a_cert - 1e-12:
        conditional = True
        notes.append(f"user bound a={a:.6g} stronger than scanned {a_cert:.6g}")
    b = float(data.b[0])
    Tx = b if c <= 0 else min(b, 0.5 * np.pi / np.sqrt(c))

    vols = {}
    for r in sorted({x for pair in pairs for x in pair}):
        vols[r] = sclv_volume(data, r, tnodes=tnodes, threads=threads)
    results, ok = [], True
    for (r, R) in pairs:
        vr, er = vols[r]
        vR, eR = vols[R]
        lhs = vr / vR
        rhs = (_gauss_integral(lambda t: np.exp(a * t) * s_kappa(c, t) ** n, 0, r * Tx)
               / _gauss_integral(lambda t: np.exp(a * t) * s_kappa(c, t) ** n, 0, R * Tx))
        tol = RATIO_TOL_FLOOR + lhs * (er / max(vr, 1e-300) + eR / max(vR, 1e-300))
        margin = lhs - rhs
        good = margin >= -tol
        ok &= good
        results.append({"r": r, "R": R, "lhs": lhs, "rhs": rhs,
                        "margin": margin, "tol": tol,
                        "verdict": "PASS" if good else "FAIL"})

    # Pointwise conclusion of the proof: lam_psi <= lam_c + a below T_x.
    # Both sides diverge like n/t at 0, so the floor keeps the cancellation
    # from amplifying integrator error in A.
    res_max = -np.inf
    for s in data.scalars:
        sel = (s.ts >= 0.05 * Tx) & (s.ts < Tx)
        ts = s.ts[sel]
        lam_c = n * s_kappa_prime(c, ts) / s_kappa(c, ts)
        res = (s.lam[sel] - s.dpsi[sel]) - lam_c - a
        res_max = max(res_max, float(np.max(res)))
    point_ok = res_max <= POINTWISE_TOL
    ok &= point_ok
    return ComparisonReport(
        check="bg-inf", verdict=_verdict(ok, conditional),
        bounds={"c": float(c), "c_certified": c_cert, "a": float(a),
                "a_certified": a_cert, "T_x": float(Tx), "scan": scan},
        results=results,
        pointwise={"lam_psi_residual": res_max, "tol": POINTWISE_TOL},
        quadrature=_quad_meta(data), notes=notes)


def ball_bound_check(data: SCLVData, eps, r_grid, *, c=None,
                     tnodes=T_VOLUME, threads=None) -> ComparisonReport:
    """Future-ball volume growth bound under Ric_inf >= c."""
    m = data.model
    r_grid = np.asarray(r_grid, dtype=float)
    if np.max(r_grid) > np.min(data.b) + 1e-12:
        raise ValueError("r grid exceeds the per-direction validity range")
    scan = radial_bound_scan(data)
    c_cert = scan["inf_ric_inf"]
    conditional = False
    notes = []
    if c is None:
        c = c_cert
    elif c > c_cert + 1e-12:
        conditional = True
        notes.append(f"user bound c={c:.6g} stronger than scanned {c_cert:.6g}")

    def f_at(t):
        samples = sample_all(data.paths, np.array([t]))
        return np.array([np.exp(-weight(m, s.x, s.v)[0]) * s.detA[0]
                         for s in samples])

    eps0 = float(eps)
    eps_ok = None
    for k in range(EPS_HALVING_STEPS + 1):
        cand = eps0 / 2**k
        if 4 * cand >= np.min(r_grid):
            continue
        if np.all(np.log(f_at(2 * cand)) + 2 * c * cand**2 < 0):
            eps_ok = cand
            break
    if eps_ok is None:
        raise ComparisonAbort(
            "no admissible epsilon: log(f(2 eps) e^{2 c eps^2}) never negative "
            f"down to eps={eps0 / 2**EPS_HALVING_STEPS:.3g}")
    if eps_ok != eps0:
        notes.append(f"epsilon halved from {eps0:.6g} to {eps_ok:.6g}")
    C0 = float(np.max(-(np.log(f_at(eps_ok)) + 0.5 * c * eps_ok**2) / eps_ok))
    if C0 <= 0:
        raise ComparisonAbort(f"growth constant C0={C0:.6g} is not positive")

    base, base_err = ball_volume(data, 4 * eps_ok, tnodes=tnodes, threads=threads)
    results, ok = [], True
    for r in r_grid:
        if r <= 4 * eps_ok:
            continue
        vol, err = ball_volume(data, r, tnodes=tnodes, threads=threads)
        bound = base + data.sigma * _gauss_integral(
            lambda t: np.exp(C0 * t - 0.5 * c * t * t), 4 * eps_ok, float(r))
        tol = RATIO_TOL_FLOOR + err + base_err
        margin = bound - vol
        good = margin >= -tol
        ok &= good
        row = {"r": float(r), "lhs": vol, "rhs": bound, "margin": margin,
               "tol": tol, "verdict": "PASS" if good else "FAIL"}
        if c == 0.0:
            row["rhs_closed_form"] = base + data.sigma * np.exp(C0 * r) / C0
        results.append(row)
    if not results:
        raise ValueError("r grid has no entries beyond 4 epsilon")

    conc = max(check_concavity(s, c) for s in data.scalars)
    point_ok = conc <= POINTWISE_TOL
    ok &= point_ok
    return ComparisonReport(
        check="ball", verdict=_verdict(ok, conditional),
        bounds={"c": float(c), "c_certified": c_cert, "eps": eps_ok,
                "C0": C0, "scan": scan},
        results=results,
        pointwise={"concavity_residual": conc, "tol": POINTWISE_TOL},
        quadrature=_quad_meta(data), notes=notes)


# ------------------------------------------------- coordinate-space oracle


def _fd4(arr, h, axis):
    """Fourth-order central difference along one axis (wraps; callers
    slice off the edges of non-periodic axes)."""
    def sh(k):
        return np.roll(arr, -k, axis=axis)
    return (-sh(2) + 8 * sh(1) - 8 * sh(-1) + sh(-2)) / (12.0 * h)


def coordinate_volume(m: FinslerModel, sclv: SCLVSpec, r, *, nt=97,
                      nchart=49, nphi=64, pad=2,
                      rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL) -> float:
    """rho(U_x(r)) by direct coordinate-space integration.

    Forward-maps a polar grid with the exponential map and integrates the
    model measure e^{-psi} sqrt(-det g) against a finite-difference
    Jacobian of the map; shares no code with the Jacobi-determinant route.
    """
    n = m.n
    apex = np.asarray(sclv.apex, dtype=float)
    center = np.zeros(n) if sclv.center is None else np.asarray(sclv.center)
    if n == 1:
        du = 2 * sclv.radius / (nchart - 1)
        p = center[0] + np.linspace(-sclv.radius - pad * du,
                                    sclv.radius + pad * du, nchart + 2 * pad)
        offsets = p[:, None]
        chart_shape = (nchart + 2 * pad,)
    elif n == 2:
        du = sclv.radius / (nchart - 1)
        s = np.linspace(-pad * du, sclv.radius + pad * du, nchart + 2 * pad)
        phi = 2 * np.pi * np.arange(nphi) / nphi
        S, P = np.meshgrid(s, phi, indexing="ij")
        offsets = (center[None, :]
                   + np.stack([S * np.cos(P), S * np.sin(P)], axis=-1)
                   ).reshape(-1, 2)
        chart_shape = (nchart + 2 * pad, nphi)
    else:
        raise ValueError("the coordinate-space oracle covers n <= 2")

    w = np.concatenate([np.ones((offsets.shape[0], 1)), offsets], axis=1)
    F = np.sqrt(-lagrangian(m, np.broadcast_to(apex, w.shape), w))
    rays = w / F[:, None]
    T = r * float(sclv.cut)
    flow = radial_flow(m, apex, rays, np.full(len(rays), T), rtol=rtol, atol=atol)
    ts = np.linspace(0.0, T, nt)
    st = flow.eval_all(ts)
    pos = st["eta"].reshape(chart_shape + (nt, m.dim))
    vel = st["etadot"].reshape(chart_shape + (nt, m.dim))

    if n == 1:
        dpos = [_fd4(pos, du, axis=0)]
        sl = (slice(pad, -pad),)
    else:
        dpos = [_fd4(pos, du, axis=0), _fd4(pos, 2 * np.pi / nphi, axis=1)]
        sl = (slice(pad, -pad), slice(None))
    cols = [vel[sl]] + [dp[sl] for dp in dpos]
    J = np.stack(cols, axis=-1)
    x_in = pos[sl]
    v_in = vel[sl]
    g = fundamental_tensor(m, x_in, v_in)
    dens = np.exp(-weight(m, x_in, v_in)) * np.sqrt(-np.linalg.det(g))
    integrand = dens * np.abs(np.linalg.det(J))

    val = simpson(integrand, x=ts, axis=-1)
    if n == 1:
        return float(simpson(val, dx=du, axis=0))
    val = np.sum(val, axis=1) * (2 * np.pi / nphi)  # periodic trapezoid
    return float(simpson(val, dx=du, axis=0))
