"""Direction quadrature, polar volumes, and the four comparison checks.

Closed-form anchors: the direction patch is a Klein-model ball, so its
induced area has an elementary antiderivative; flat-space volumes scale
like r^{n+1}; the flat ratio bound margin at (r, R) = (1/2, 1) with N = 4
is exactly 1/8 - 1/32; the exponential-scale cosmology saturates the
flag-curvature volume bound.
"""

import json

import numpy as np
import pytest

from lfgeom import comparison as cmp
from lfgeom import models

ATANH = np.arctanh


@pytest.fixture(scope="module")
def mink1():
    m = models.model_library("minkowski", 1)
    sclv = cmp.SCLVSpec(apex=np.zeros(2), radius=0.6, cut=2.0)
    return m, sclv, cmp.build_sclv_data(m, sclv)


@pytest.fixture(scope="module")
def mink1_linear_weight():
    m = models.model_library("minkowski", 1, weight=[("linear_x0", 0.4)])
    sclv = cmp.SCLVSpec(apex=np.zeros(2), radius=0.6, cut=2.0)
    return m, sclv, cmp.build_sclv_data(m, sclv)


@pytest.fixture(scope="module")
def mink2():
    m = models.model_library("minkowski", 2)
    sclv = cmp.SCLVSpec(apex=np.zeros(3), radius=0.5, cut=1.0)
    return m, sclv, cmp.build_sclv_data(m, sclv, scale=0.5)


@pytest.fixture(scope="module")
def desitter2():
    m = models.model_library("flrw", 2, scale="exp", H=0.7)
    sclv = cmp.SCLVSpec(apex=np.zeros(3), radius=0.4, cut=1.5)
    return m, sclv, cmp.build_sclv_data(m, sclv, scale=0.5)


@pytest.fixture(scope="module")
def boosted_sphere2():
    """Positive tangential flag curvature: center of the patch is a
    boosted direction in a static spatial-sphere model."""
    m = models.model_library("einstein_static", 2, radius=1.0)
    sclv = cmp.SCLVSpec(apex=np.array([0.0, 0.5, 0.0]), radius=0.08,
                        cut=1.5, center=np.array([0.375, 0.0]))
    return m, sclv, cmp.build_sclv_data(m, sclv, scale=0.5)


# ------------------------------------------------------------- quadrature


def test_patch_area_closed_form_n1(mink1):
    _, _, data = mink1
    assert abs(data.sigma - 2 * ATANH(0.6)) < 1e-10


def test_patch_area_closed_form_n2(mink2):
    # Klein-model area: int (1-s^2)^{-3/2} over the radius-1/2 disk
    _, _, data = mink2
    exact = 2 * np.pi * (1.0 / np.sqrt(1 - 0.25) - 1.0)
    assert abs(data.sigma - exact) < 1e-7  # 6-node Gauss on a non-polynomial


def test_quadrature_nodes_unit_and_refinement_stable(mink1):
    m, sclv, data = mink1
    L = models.lagrangian(m, np.broadcast_to(sclv.apex, data.quad.nodes.shape),
                          data.quad.nodes)
    assert np.max(np.abs(L + 1.0)) < 1e-12
    fine = cmp.build_quadrature(m, sclv, scale=2.0)
    assert abs(fine.sigma - data.sigma) < 1e-10


def test_patch_leaving_cone_rejected():
    m = models.model_library("minkowski", 1)
    with pytest.raises(ValueError, match="timelike cone"):
        cmp.build_quadrature(m, cmp.SCLVSpec(apex=np.zeros(2), radius=1.2, cut=1.0))


# ---------------------------------------------------------------- volumes


def test_flat_volume_closed_form_and_scaling(mink1, mink2):
    _, _, d1 = mink1
    vol, err = cmp.sclv_volume(d1, 1.0)
    assert abs(vol - 2 * ATANH(0.6) * 2.0**2 / 2) < 1e-12
    _, _, d2 = mink2
    v1, _ = cmp.sclv_volume(d2, 1.0)
    vr, _ = cmp.sclv_volume(d2, 0.37)
    assert abs(vr / v1 - 0.37**3) < 1e-9
    exact = 2 * np.pi * (1 / np.sqrt(0.75) - 1) / 3.0
    assert abs(v1 - exact) < 1e-8


def test_constant_weight_scales_volume(mink1):
    m, sclv, data = mink1
    mw = models.model_library("minkowski", 1, weight=[("const", 0.7)])
    dw = cmp.build_sclv_data(mw, sclv)
    v0, _ = cmp.sclv_volume(data, 0.8)
    vw, _ = cmp.sclv_volume(dw, 0.8)
    assert abs(vw - np.exp(-0.7) * v0) < 1e-12 * v0


def test_volume_thread_count_is_invisible(mink2):
    _, _, data = mink2
    a = cmp.sclv_volume(data, 0.9, threads=1)
    b = cmp.sclv_volume(data, 0.9, threads=4)
    assert a == b


def test_volume_rejects_bad_scale(mink1):
    _, _, data = mink1
    with pytest.raises(ValueError):
        cmp.sclv_volume(data, 1.5)


def test_coordinate_route_matches_polar_n1():
    m = models.model_library("minkowski", 1,
                             weight=[("linear_x0", 0.3), ("boost_ratio", 0.2)])
    sclv = cmp.SCLVSpec(apex=np.array([0.1, -0.2]), radius=0.5, cut=1.5)
    data = cmp.build_sclv_data(m, sclv)
    vol, _ = cmp.sclv_volume(data, 1.0)
    direct = cmp.coordinate_volume(m, sclv, 1.0, nchart=97)
    assert abs(direct - vol) < 1e-4 * vol


def test_coordinate_route_matches_polar_n2(mink2):
    m, sclv, data = mink2
    vol, _ = cmp.sclv_volume(data, 1.0)
    direct = cmp.coordinate_volume(m, sclv, 1.0)
    assert abs(direct - vol) < 1e-4 * vol


def test_coordinate_route_anisotropic_n2():
    m = models.model_library("quartic_finsler", 2, eps=0.15)
    sclv = cmp.SCLVSpec(apex=np.zeros(3), radius=0.4, cut=1.0)
    data = cmp.build_sclv_data(m, sclv, scale=0.5)
    vol, _ = cmp.sclv_volume(data, 1.0)
    direct = cmp.coordinate_volume(m, sclv, 1.0)
    assert abs(direct - vol) < 1e-4 * vol


# ------------------------------------------------------- finite-N ratio


def test_ratio_bound_flat_anchor(mink2):
    _, _, data = mink2
    rep = cmp.bishop_gromov_check(data, 4.0, [(0.5, 1.0)])
    assert rep.verdict == "PASS"
    row = rep.results[0]
    assert abs(row["lhs"] - 0.125) < 1e-9
    assert abs(row["rhs"] - 0.03125) < 1e-9
    assert abs(row["margin"] - 0.09375) < 1e-9
    assert rep.pointwise["hric_residual"] <= 1e-6
    assert rep.pointwise["monotone_ok"]


def test_ratio_bound_tight_as_N_drops(mink2):
    _, _, data = mink2
    N = 2.0 + 1e-3
    rep = cmp.bishop_gromov_check(data, N, [(0.5, 1.0)])
    assert rep.verdict == "PASS"
    margin = rep.results[0]["margin"]
    assert 0 <= margin < 2e-3
    assert abs(margin - (0.125 - 0.5 ** (N + 1))) < 1e-9


def test_ratio_bound_equal_radii_is_exact(mink1):
    _, _, data = mink1
    rep = cmp.bishop_gromov_check(data, 3.0, [(0.6, 0.6)])
    assert abs(rep.results[0]["margin"]) < 1e-12


def test_ratio_bound_rejects_bad_arguments(mink1):
    _, _, data = mink1
    with pytest.raises(ValueError, match="N in"):
        cmp.bishop_gromov_check(data, 1.0, [(0.5, 1.0)])
    with pytest.raises(ValueError, match="0 < r"):
        cmp.bishop_gromov_check(data, 3.0, [(0.9, 0.5)])


def test_ratio_bound_user_override_goes_conditional(mink1):
    _, _, data = mink1
    rep = cmp.bishop_gromov_check(data, 3.0, [(0.5, 1.0)], c=-0.2)
    # weaker-than-scanned bound: still certified, so a plain PASS
    assert rep.verdict == "PASS" and not rep.notes
    rep = cmp.bishop_gromov_check(data, 3.0, [(0.5, 1.0)], c=0.3)
    # stronger than flat space allows: hypothesis fails pointwise
    assert rep.verdict == "FAIL" and rep.notes


# ------------------------------------------------------ flag-bound volume


def test_flag_bound_flat_equality(mink1):
    _, _, data = mink1
    rep = cmp.gunther_check(data)
    row = rep.results[0]
    assert rep.verdict == "PASS"
    assert abs(row["margin"]) < 1e-7 * row["lhs"]
    assert rep.pointwise["min_f"] >= 1 - 1e-6


def test_flag_bound_weighted_strict(mink1_linear_weight):
    _, _, data = mink1_linear_weight
    rep = cmp.gunther_check(data)
    assert rep.verdict == "PASS"
    assert rep.results[0]["margin"] > 0.1
    # sup psi = 0.4 b max(v^0) ~ 0.8 / sqrt(1 - 0.6^2), shy of the patch edge
    assert 0.95 < rep.bounds["k"] <= 0.8 / np.sqrt(1 - 0.36)


def test_flag_bound_exponential_scale_saturates(desitter2):
    m, _, data = desitter2
    rep = cmp.gunther_check(data)
    row = rep.results[0]
    assert rep.verdict == "PASS"
    assert abs(rep.bounds["c"] - 0.49) < 1e-6
    assert abs(row["margin"]) < 1e-8 * row["lhs"]
    assert rep.pointwise["min_f"] >= 1 - 1e-6


def test_flag_bound_positive_curvature_fails(boosted_sphere2):
    _, _, data = boosted_sphere2
    rep = cmp.gunther_check(data)
    assert rep.verdict == "FAIL"
    assert any("no admissible c" in note for note in rep.notes)
    scan = rep.bounds["scan"]
    assert scan["sup_flag"] > 0.1


# ------------------------------------------------------- N = infinity ratio


def test_inf_ratio_flat_saturates(mink1):
    _, _, data = mink1
    rep = cmp.bg_infinity_check(data, [(0.5, 1.0)])
    assert rep.verdict == "PASS"
    assert abs(rep.results[0]["margin"]) < 1e-9
    assert rep.pointwise["lam_psi_residual"] < 1e-9


def test_inf_ratio_weighted(mink1_linear_weight):
    _, _, data = mink1_linear_weight
    rep = cmp.bg_infinity_check(data, [(0.5, 1.0)])
    assert rep.verdict == "PASS"
    assert rep.results[0]["margin"] > 0
    assert rep.pointwise["lam_psi_residual"] <= 1e-6
    assert abs(rep.bounds["a"] + 0.4) < 1e-3  # a = -inf psi' ~ -0.4 v^0_min


def test_inf_ratio_false_claim_detected(mink1_linear_weight):
    _, _, data = mink1_linear_weight
    rep = cmp.bg_infinity_check(data, [(0.5, 1.0)], c=0.5)
    assert rep.verdict == "FAIL"
    assert rep.pointwise["lam_psi_residual"] > 1e-3
    rep = cmp.bg_infinity_check(data, [(0.5, 1.0)], a=-1.0)
    assert rep.verdict == "FAIL"


# ------------------------------------------------------------- ball bound


def test_ball_bound_flat(mink1):
    _, _, data = mink1
    rep = cmp.ball_bound_check(data, 0.05, [0.5, 1.5])
    assert rep.verdict == "PASS"
    eps, C0 = rep.bounds["eps"], rep.bounds["C0"]
    assert abs(C0 + np.log(eps) / eps) < 1e-9   # f(t) = t in one dimension
    for row in rep.results:
        assert row["lhs"] <= row["rhs"] + row["tol"]
        assert "rhs_closed_form" in row and row["rhs_closed_form"] >= row["rhs"]
    assert rep.pointwise["concavity_residual"] <= 0


def test_ball_bound_halves_epsilon(mink1):
    _, _, data = mink1
    rep = cmp.ball_bound_check(data, 1.9, [1.0])
    assert rep.verdict == "PASS"
    assert any("halved" in note for note in rep.notes)
    assert 4 * rep.bounds["eps"] < 1.0


def test_ball_bound_false_concavity_claim(mink1):
    _, _, data = mink1
    rep = cmp.ball_bound_check(data, 0.05, [1.0], c=0.5)
    assert rep.verdict == "FAIL"
    assert rep.pointwise["concavity_residual"] > 0.2


def test_ball_bound_r_beyond_cut_rejected(mink1):
    _, _, data = mink1
    with pytest.raises(ValueError, match="validity"):
        cmp.ball_bound_check(data, 0.05, [2.5])


# ----------------------------------------------------------------- guards


def test_cut_beyond_validity_is_rejected():
    m = models.model_library("flrw", 1, scale="affine", a0=1.0, q=-0.4)
    sclv = cmp.SCLVSpec(apex=np.zeros(2), radius=0.3, cut=3.0)
    with pytest.raises(ValueError, match="not an SCLV"):
        cmp.build_sclv_data(m, sclv)


def test_cut_beyond_conjugate_point_is_rejected():
    # tangential boosted direction on the r=1/2 circle: conjugate point at
    # t* = pi / (gamma beta / R) ~ 4.19 < cut
    m = models.model_library("einstein_static", 2, radius=1.0)
    sclv = cmp.SCLVSpec(apex=np.array([0.0, 0.5, 0.0]), radius=0.05,
                        cut=4.5, center=np.array([0.0, 0.375]))
    with pytest.raises(ValueError, match="conjugate"):
        cmp.build_sclv_data(m, sclv, scale=0.5)


# ---------------------------------------------------------------- reports


def test_report_serializes_to_json(mink1):
    _, _, data = mink1
    rep = cmp.bishop_gromov_check(data, 3.0, [(0.5, 1.0)])
    blob = json.dumps(rep.to_dict(), sort_keys=True)
    back = json.loads(blob)
    assert back["check"] == "bg" and back["verdict"] == "PASS"
    assert back["bounds"]["scan"]["directions"] == 32


def test_scan_reports_radial_bounds(desitter2):
    _, _, data = desitter2
    scan = cmp.radial_bound_scan(data, N=np.inf)
    # every radial flag eigenvalue is -H^2; Ricci = n * (-H^2)
    assert abs(scan["sup_flag"] + 0.49) < 1e-6
    assert abs(scan["inf_flag"] + 0.49) < 1e-6
    assert abs(scan["inf_ric_inf"] + 2 * 0.49) < 1e-5
    assert scan["inf_ric_N"] == scan["inf_ric_inf"]
