"""Geodesic flow, exponential map, variational (Jacobi) flow, conjugate points.

The geodesic equation used throughout is the Euler-Lagrange flow of L,

    eta'' = -G(eta, eta'),

with G the spray from the connection pipeline.  Linearizing gives the
variational equation for coordinate Jacobi fields,

    J'' = -(dG/dx) J - 2 N J',

and reference-parallel transport of a vector along the geodesic is
V' = -M V with the transport matrix M.

``radial_flow`` evolves a whole fan of directions out of one point as a
single fused ODE system: per-direction time is rescaled onto s in [0,1]
(so heterogeneous integration horizons batch cleanly), and a terminal
event watches chart distance, causal character, and metric conditioning
for every direction at once.  When some direction hits a boundary it is
peeled off (its reach is recorded) and the remaining directions continue
from the event state.  If the batched solver ever fails outright, the
survivors are re-integrated one at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar

from .connection import eval_connection
from .models import CausalityError, FinslerModel, classify, fundamental_tensor, lagrangian

__all__ = [
    "GeodesicSegment",
    "RadialFlow",
    "integrate_geodesic",
    "exp_map",
    "radial_flow",
    "find_validity_times",
    "tangent_flow",
    "conjugate_scan",
]

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-10
METRIC_COND_FLOOR = 1e-9   # min|eig|/max|eig| of g below this counts as degenerate
CAUSAL_FLOOR = 1e-10       # -L/|L0| below this counts as leaving the cone
PEEL_TOL = 1e-8            # margin slack used to decide which directions exited
SCAN_POINTS = 1024         # dense-output margin scan resolution
DIP_THRESHOLD = 1e-2       # local margin minima below this get refined


def _chart_margin(m: FinslerModel, x):
    lo = np.asarray(m.chart_lo)
    hi = np.asarray(m.chart_hi)
    return np.minimum(np.min(x - lo, axis=-1), np.min(hi - x, axis=-1))


def _margins(m: FinslerModel, x, v, L0, parts=False):
    """Per-point validity margin: positive while the state is usable.

    Deliberately avoids anything that inverts g, so it stays evaluable
    right at (and past) a metric degeneration.
    """
    eig = np.linalg.eigvalsh(fundamental_tensor(m, x, v))
    aeig = np.abs(eig)
    cond = np.min(aeig, axis=-1) / np.max(aeig, axis=-1) - METRIC_COND_FLOOR
    causal = -lagrangian(m, x, v) / np.abs(L0) - CAUSAL_FLOOR
    chart = _chart_margin(m, x)
    if parts:
        return chart, cond, causal
    return np.minimum(chart, np.minimum(cond, causal))


def _exit_label(m, x, v, L0val):
    chart, cond, causal = _margins(m, x, v, L0val, parts=True)
    return "chart-exit" if chart <= min(cond, causal) + PEEL_TOL else "degenerate-or-cone"


def _first_margin_crossing(margin_fn, ts, ms):
    """First zero of the margin along sampled track (ts ascending), or None.

    Event detection by the ODE solver can step clean over a narrow dip
    (e.g. a scale factor whose square touches zero and recovers), so any
    sampled local minimum below DIP_THRESHOLD is refined by a bounded
    minimizer before the sign test.
    """
    upper = len(ts)
    bad = np.nonzero(ms <= 0.0)[0]
    if bad.size:
        upper = int(bad[0])
    for j in range(1, upper - 1):
        if ms[j] < DIP_THRESHOLD and ms[j] <= ms[j - 1] and ms[j] <= ms[j + 1]:
            res = minimize_scalar(margin_fn, bounds=(float(ts[j - 1]), float(ts[j + 1])),
                                  method="bounded", options={"xatol": 1e-12})
            if res.fun <= 0.0:
                t = _refine_crossing(margin_fn, float(ts[j - 1]), float(res.x))
                if t is not None:
                    return t
    for j in bad:
        if j == 0:
            return float(ts[0])
        t = _refine_crossing(margin_fn, float(ts[j - 1]), float(ts[j]))
        if t is not None:
            return t
    return None


def _refine_crossing(margin_fn, lo, hi):
    """Zero of the margin in [lo, hi], tolerating re-evaluation noise at ~0."""
    flo, fhi = margin_fn(lo), margin_fn(hi)
    if flo <= 0.0:
        return lo
    if fhi > 0.0:
        return hi if fhi < PEEL_TOL else None
    return float(brentq(margin_fn, lo, hi, xtol=1e-12))


# --------------------------------------------------------- single geodesic


@dataclass
class GeodesicSegment:
    """Dense solution of one geodesic with validity diagnostics."""

    model: FinslerModel
    x0: np.ndarray
    v0: np.ndarray
    t_end: float
    status: str                   # completed | chart-exit | degenerate-or-cone | failed
    sol: object                   # scipy OdeSolution over [0, t_end]
    L0: float
    L_drift: float                # max |L(t) - L0| over accepted steps
    signature_ok: bool

    def state(self, t):
        y = self.sol(np.asarray(t))
        d = self.model.dim
        return np.moveaxis(y[:d], 0, -1), np.moveaxis(y[d:], 0, -1)

    def position(self, t):
        return self.state(t)[0]

    def velocity(self, t):
        return self.state(t)[1]


def integrate_geodesic(m: FinslerModel, x0, v0, t_max, *, rtol=DEFAULT_RTOL,
                       atol=DEFAULT_ATOL) -> GeodesicSegment:
    """Integrate eta'' = -G from (x0, v0) up to t_max or a validity boundary."""
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    d = m.dim
    if classify(m, x0, v0) != "future-timelike":
        raise CausalityError("geodesic initial velocity must be future timelike")
    if _chart_margin(m, x0) <= 0:
        raise ValueError("initial position outside the model chart")
    L0 = float(lagrangian(m, x0, v0))

    def rhs(t, y):
        c = eval_connection(m, y[:d], y[d:], order=3, validate=False)
        return np.concatenate([y[d:], -c.G])

    def boundary(t, y):
        return float(_margins(m, y[:d], y[d:], L0))

    boundary.terminal = True
    boundary.direction = -1
    sol = solve_ivp(rhs, (0.0, float(t_max)), np.concatenate([x0, v0]),
                    method="DOP853", rtol=rtol, atol=atol, dense_output=True,
                    events=boundary)
    t_reach = float(sol.t[-1])
    dense = sol.sol

    # scan the dense output for the first validity crossing; the solver's
    # own event can overstep narrow dips on coordinate-linear trajectories
    ts = np.linspace(0.0, t_reach, SCAN_POINTS + 1)[1:]
    Y = dense(ts)
    ms = _margins(m, Y[:d].T, Y[d:].T, L0)

    def margin_fn(t):
        y = dense(float(t))
        return float(_margins(m, y[:d], y[d:], L0))

    t_cross = _first_margin_crossing(margin_fn, ts, ms)
    if sol.status == -1:
        status, t_end = "failed", t_reach
    elif t_cross is not None:
        t_end = t_cross
        y = dense(t_cross)
        status = _exit_label(m, y[:d], y[d:], L0)
    elif sol.status == 1:
        t_end = t_reach
        status = _exit_label(m, sol.y[:d, -1], sol.y[d:, -1], L0)
    else:
        status, t_end = "completed", t_reach

    keep = sol.t <= t_end + 1e-12
    xs, vs = sol.y[:d, keep].T, sol.y[d:, keep].T
    eig = np.linalg.eigvalsh(fundamental_tensor(m, xs, vs))
    sig_ok = bool(np.all(eig[..., 0] < 0) and np.all(eig[..., 1:] > 0))
    return GeodesicSegment(model=m, x0=x0, v0=v0, t_end=t_end,
                           status=status, sol=dense, L0=L0,
                           L_drift=float(np.max(np.abs(lagrangian(m, xs, vs) - L0))),
                           signature_ok=sig_ok)


def exp_map(m: FinslerModel, x0, v, t=1.0, **kw):
    """Point reached after parameter time t along the geodesic with eta'(0) = v."""
    seg = integrate_geodesic(m, x0, v, t, **kw)
    if seg.t_end < t:
        raise ValueError(f"geodesic left the valid region at t={seg.t_end} ({seg.status})")
    return seg.position(t)


# ------------------------------------------------------------- fused flows


@dataclass
class _Layout:
    d: int
    n_frame: int
    n_jac: int

    @property
    def width(self):
        return 2 * self.d + self.n_frame * self.d + 2 * self.d * self.n_jac

    def unpack(self, row):
        """row: (..., width) -> dict of views."""
        d = self.d
        out = {"eta": row[..., :d], "etadot": row[..., d:2 * d]}
        off = 2 * d
        if self.n_frame:
            out["V"] = row[..., off:off + self.n_frame * d].reshape(
                row.shape[:-1] + (self.n_frame, d))
            off += self.n_frame * d
        if self.n_jac:
            out["J"] = row[..., off:off + d * self.n_jac].reshape(
                row.shape[:-1] + (d, self.n_jac))
            off += d * self.n_jac
            out["Jdot"] = row[..., off:off + d * self.n_jac].reshape(
                row.shape[:-1] + (d, self.n_jac))
        return out


@dataclass
class RadialFlow:
    """Dense fused solution for a fan of geodesics out of one base point.

    Per direction i the data are valid for t in [0, t_reached[i]]; if
    t_reached[i] < t_target[i], exit_reason[i] says why the direction was
    peeled off early.
    """

    model: FinslerModel
    x0: np.ndarray
    dirs: np.ndarray
    t_target: np.ndarray
    t_reached: np.ndarray
    exit_reason: list
    layout: _Layout
    segments: list = field(default_factory=list)  # (s0, s1, dense sol, dir index array)

    def eval(self, i, ts):
        """States of direction i at times ts (ascending array or scalar)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if ts.size and (ts.min() < 0 or ts.max() > self.t_reached[i] + 1e-12):
            raise ValueError(f"direction {i} only reaches t={self.t_reached[i]}")
        s = ts / self.t_target[i]
        out = np.empty((ts.size, self.layout.width))
        done = np.zeros(ts.size, dtype=bool)
        for s0, s1, dense, ids in self.segments:
            pos = np.nonzero(ids == i)[0]
            if pos.size == 0:
                continue
            row = pos[0]
            w = self.layout.width
            sel = (~done) & (s <= s1 + 1e-12)
            if not np.any(sel):
                continue
            vals = dense(np.clip(s[sel], s0, s1))
            out[sel] = vals[row * w:(row + 1) * w].T
            done |= sel
        if not np.all(done):
            raise ValueError("requested times fall outside the recorded segments")
        return self.layout.unpack(out)

    def eval_all(self, ts):
        """States of every direction at shared times ts.

        Needs one common target time and every direction alive through
        ts.max(); each dense segment is then evaluated once for all its
        member directions instead of once per direction.
        """
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        T0 = float(self.t_target[0])
        if np.max(np.abs(self.t_target - T0)) > 1e-12 * max(T0, 1.0):
            raise ValueError("eval_all needs one shared target time")
        if ts.size and (ts.min() < 0 or ts.max() > np.min(self.t_reached) + 1e-12):
            raise ValueError(
                f"some direction only reaches t={np.min(self.t_reached)}")
        s = ts / T0
        w = self.layout.width
        B = self.dirs.shape[0]
        out = np.empty((B, ts.size, w))
        done = np.zeros(ts.size, dtype=bool)
        for s0, s1, dense, ids in self.segments:
            sel = (~done) & (s <= s1 + 1e-12)
            if not np.any(sel):
                continue
            vals = dense(np.clip(s[sel], s0, s1))        # (B_seg*w, nsel)
            arr = np.swapaxes(vals.reshape(len(ids), w, -1), 1, 2)
            out[np.asarray(ids)[:, None], np.nonzero(sel)[0][None, :]] = arr
            done |= sel
        if not np.all(done):
            raise ValueError("requested times fall outside the recorded segments")
        return self.layout.unpack(out)


def _fused_rhs(m, layout, Tscale, order):
    d = layout.d

    def rhs(s, yflat):
        Y = yflat.reshape(-1, layout.width)
        st = layout.unpack(Y)
        try:
            c = eval_connection(m, st["eta"], st["etadot"], order=order, validate=False)
        except ArithmeticError:
            return np.full_like(yflat, np.nan)
        dY = np.empty_like(Y)
        out = layout.unpack(dY)
        out["eta"][...] = st["etadot"]
        out["etadot"][...] = -c.G
        if layout.n_frame:
            out["V"][...] = -np.einsum("...ag,...kg->...ka", c.M, st["V"])
        if layout.n_jac:
            out["J"][...] = st["Jdot"]
            out["Jdot"][...] = -(np.einsum("...ab,...bk->...ak", c.dG_dx, st["J"])
                                 + 2.0 * np.einsum("...ab,...bk->...ak", c.N, st["Jdot"]))
        return (dY * Tscale[:, None]).ravel()

    return rhs


def radial_flow(m: FinslerModel, x0, dirs, t_target, *, frames=None, jac_seeds=None,
                rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, post_scan=False,
                _allow_fallback=True) -> RadialFlow:
    """Fused geodesic/transport/Jacobi flow for many directions from x0.

    frames: optional (B, k, d) vectors to parallel-transport along each
    direction.  jac_seeds: optional pair (J0, Jdot0) of (B, d, k) arrays
    seeding the variational flow (requires fourth-order pipeline data).
    """
    x0 = np.asarray(x0, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    B, d = dirs.shape
    t_target = np.broadcast_to(np.asarray(t_target, dtype=float), (B,)).copy()
    if np.any(t_target <= 0):
        raise ValueError("all target times must be positive")
    if not np.all(classify(m, x0, dirs) == "future-timelike"):
        raise CausalityError("all directions must be future timelike")
    if _chart_margin(m, x0) <= 0:
        raise ValueError("base point outside the model chart")

    n_frame = 0 if frames is None else frames.shape[1]
    n_jac = 0 if jac_seeds is None else jac_seeds[0].shape[2]
    layout = _Layout(d=d, n_frame=n_frame, n_jac=n_jac)
    order = 4 if n_jac else 3

    Y0 = np.zeros((B, layout.width))
    st = layout.unpack(Y0)
    st["eta"][...] = x0
    st["etadot"][...] = dirs
    if n_frame:
        st["V"][...] = frames
    if n_jac:
        st["J"][...] = jac_seeds[0]
        st["Jdot"][...] = jac_seeds[1]

    L0 = lagrangian(m, x0, dirs)
    m0 = _margins(m, np.broadcast_to(x0, dirs.shape), dirs, L0)
    if np.any(m0 <= 0):
        raise ValueError("initial state already violates a validity margin")
    flow = RadialFlow(model=m, x0=x0, dirs=dirs, t_target=t_target,
                      t_reached=t_target.copy(), exit_reason=[None] * B, layout=layout)
    _peel_loop(m, flow, order, np.arange(B), Y0, 0.0, rtol, atol, L0, _allow_fallback)
    if post_scan:
        _post_scan_flow(m, flow, L0)
    return flow


def _post_scan_flow(m, flow, L0):
    """Tighten t_reached by scanning each stored segment for margin dips."""
    B = len(flow.dirs)
    track_t = [[] for _ in range(B)]
    track_m = [[] for _ in range(B)]
    for (s0, s1, dense, ids) in flow.segments:
        ns = max(3, int(np.ceil((s1 - s0) * SCAN_POINTS)) + 1)
        sg = np.linspace(s0, s1, ns)
        w = flow.layout.width
        Y = dense(sg).reshape(len(ids), w, ns)
        st = flow.layout.unpack(np.moveaxis(Y, 1, 2))   # (ndir, ns, ...)
        ms = _margins(m, st["eta"], st["etadot"], L0[ids][:, None])
        for r, i in enumerate(ids):
            track_t[i].append(sg * flow.t_target[i])
            track_m[i].append(ms[r])
    for i in range(B):
        if not track_t[i]:
            continue
        ts = np.concatenate(track_t[i])
        ms = np.concatenate(track_m[i])
        pos = ts > 0
        ts, ms = ts[pos], ms[pos]

        def margin_fn(t, i=i):
            stt = flow.eval(i, [float(t)])
            return float(_margins(m, stt["eta"][0], stt["etadot"][0], L0[i]))

        t_cross = _first_margin_crossing(margin_fn, ts, ms)
        if t_cross is not None and t_cross < flow.t_reached[i] - 1e-12:
            stt = flow.eval(i, [t_cross])
            flow.t_reached[i] = t_cross
            flow.exit_reason[i] = _exit_label(m, stt["eta"][0], stt["etadot"][0], L0[i])


def _peel_loop(m, flow, order, active, state, s_start, rtol, atol, L0, allow_fallback):
    """Advance the fused system over s, peeling exited directions at events."""
    layout = flow.layout
    t_target = flow.t_target
    while active.size and s_start < 1.0:
        rhs = _fused_rhs(m, layout, t_target[active], order)
        sub = L0[active]

        def margin_event(s, yflat, sub=sub):
            stt = layout.unpack(yflat.reshape(-1, layout.width))
            return float(np.min(_margins(m, stt["eta"], stt["etadot"], sub)))

        margin_event.terminal = True
        margin_event.direction = -1
        sol = solve_ivp(rhs, (s_start, 1.0), state.ravel(), method="DOP853",
                        rtol=rtol, atol=atol, dense_output=True, events=margin_event)
        s_end = float(sol.t[-1])
        if s_end > s_start:
            flow.segments.append((s_start, s_end, sol.sol, active.copy()))
        if sol.status == 0:
            return
        end = sol.y[:, -1].reshape(-1, layout.width)

        if sol.status == -1:
            if allow_fallback and active.size > 1:
                for r in range(active.size):
                    _peel_loop(m, flow, order, active[r:r + 1], end[r:r + 1].copy(),
                               s_end, rtol, atol, L0, False)
            else:
                for i in active:
                    flow.t_reached[i] = s_end * t_target[i]
                    flow.exit_reason[i] = "solver-failure"
            return

        # terminal event: peel the directions sitting on the boundary
        stt = layout.unpack(end)
        mg = _margins(m, stt["eta"], stt["etadot"], L0[active])
        hit = mg <= PEEL_TOL
        if not np.any(hit):
            hit = mg == mg.min()
        for r in np.nonzero(hit)[0]:
            i = active[r]
            flow.t_reached[i] = s_end * t_target[i]
            flow.exit_reason[i] = _exit_label(m, stt["eta"][r], stt["etadot"][r], L0[i])
        active = active[~hit]
        state = end[~hit]
        s_start = s_end


def find_validity_times(m: FinslerModel, x0, dirs, t_cap, **kw):
    """Largest parameter time each direction stays inside the valid region.

    Returns (t_valid, reasons); reasons entries are None for directions
    that reach the cap untroubled.
    """
    kw.setdefault("post_scan", True)
    flow = radial_flow(m, x0, dirs, np.full(len(dirs), float(t_cap)), **kw)
    return flow.t_reached.copy(), list(flow.exit_reason)


def tangent_flow(m: FinslerModel, x0, v0, t_max, dx_seeds, dv_seeds, **kw) -> RadialFlow:
    """Variational flow around one geodesic for k seeds (delta x, delta v)."""
    dx = np.atleast_2d(np.asarray(dx_seeds, dtype=float))
    dv = np.atleast_2d(np.asarray(dv_seeds, dtype=float))
    J0 = dx.T[None]      # (1, d, k)
    Jd0 = dv.T[None]
    return radial_flow(m, x0, np.asarray(v0, dtype=float)[None], np.array([float(t_max)]),
                       jac_seeds=(J0, Jd0), **kw)


def conjugate_scan(m: FinslerModel, x0, v0, t_max, *, ngrid=512, tol=1e-8, **kw):
    """Parameter times in (0, t_max] conjugate to x0 along the geodesic of v0.

    Watches h(t) = det[eta'(t) | J_1(t) ... J_n(t)] / t^n, whose zeros are
    exactly the conjugate times: sign changes are bracketed and bisected,
    and even-multiplicity touches are caught by a |h| dip test.
    """
    v0 = np.asarray(v0, dtype=float)
    d = m.dim
    n = d - 1
    seeds_dx = np.zeros((n, d))
    seeds_dv = np.eye(d)[1:]
    flow = tangent_flow(m, x0, v0, t_max, seeds_dx, seeds_dv, **kw)
    reach = flow.t_reached[0]

    def h(t):
        t = np.atleast_1d(t)
        st = flow.eval(0, t)
        mat = np.concatenate([st["etadot"][:, :, None], st["J"]], axis=2)
        return np.linalg.det(mat) / t ** n

    def h1(t):
        return float(h(np.array([t]))[0])

    ts = np.linspace(reach / ngrid, reach, ngrid)
    hs = h(ts)
    roots = []
    sign_change = np.nonzero(np.sign(hs[:-1]) * np.sign(hs[1:]) < 0)[0]
    for j in sign_change:
        roots.append(brentq(h1, ts[j], ts[j + 1], xtol=tol))
    # even-multiplicity touches: local minima of |h| that dip to ~zero
    scale = np.max(np.abs(hs))
    for j in range(1, ngrid - 1):
        if abs(hs[j]) < abs(hs[j - 1]) and abs(hs[j]) < abs(hs[j + 1]) and abs(hs[j]) < 1e-5 * scale:
            res = minimize_scalar(lambda t: abs(h1(t)), bounds=(ts[j - 1], ts[j + 1]),
                                  method="bounded", options={"xatol": tol})
            if abs(res.fun) < 1e-8 * scale and not any(abs(res.x - r) < 10 * tol for r in roots):
                roots.append(float(res.x))
    return np.sort(np.array(roots))
