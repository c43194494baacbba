import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from dysonlab.concentration import (
    FAMILIES,
    constants,
    continuity_modulus,
    d_gcb,
    d_herbst,
    d_lsi_bound,
    exact_chi,
    flip_density_check,
    half_line_bounds,
    herbst_scan,
    mcb_bound,
    measure_suac,
    mvt_exp_check,
    random_functions,
    uniform_integrability_diag,
    verify_gcb,
    verify_lsi,
    verify_mcb,
)
from dysonlab.gibbs_exact import _centered_volume, boltzmann, susceptibility_fv
from dysonlab.model import (
    BoundaryCondition,
    LocalFunction,
    SummabilityError,
    k_of,
    make_power_law,
    make_table,
)

J2 = make_power_law(2.0)


# --- constants -----------------------------------------------------------------

def test_constant_formulas():
    assert d_lsi_bound(0.2, 1.5) == pytest.approx(0.25 + 0.1 * math.exp(0.6))
    assert d_gcb(0.2, 1.5, 2.0) == pytest.approx(
        (1 + 0.4 * math.exp(0.6)) * (math.exp(1.6) + 1) / 8)
    assert d_herbst(0.5, 0.3) == pytest.approx(0.5 * (math.exp(0.6) + 1) / 2)


def test_constant_bundle():
    b = constants(0.3, 2.0, J2, chi_source="exact-fv")
    s = math.pi ** 2 / 6
    assert b.sum_J == pytest.approx(s, rel=1e-10) and b.sum_J >= s
    assert b.kappa == pytest.approx(2 * s, rel=1e-10)
    assert b.suac == pytest.approx(0.6 * s, rel=1e-10)
    assert b.D_lsi_bound == d_lsi_bound(0.3, 2.0)
    assert b.D_herbst == pytest.approx(d_herbst(b.D_lsi_bound, b.suac))
    assert b.C1 is not None and b.C1_note == ""


def test_constant_bundle_skips_c1_when_divergent():
    b = constants(0.1, 1.0, make_power_law(1.4))
    assert b.C1 is None and "diverges" in b.C1_note


def test_constant_bundle_validation():
    with pytest.raises(ValueError):
        constants(-0.1, 1.0, J2)
    with pytest.raises(ValueError):
        constants(0.1, 0.5, J2)
    with pytest.raises(ValueError):
        constants(0.1, 1.0, J2, chi_source="guess")


def test_beta_zero_constants_are_quarter():
    b = constants(0.0, 1.0, J2)
    assert b.D_lsi_bound == b.D_gcb == 0.25
    assert b.suac == 0.0


def test_exact_chi_matches_measure():
    assert exact_chi((0, 4), 0.3, J2) == susceptibility_fv(boltzmann((0, 4), 0.3, J=J2))


# --- test-function families ----------------------------------------------------

@pytest.mark.parametrize("family", FAMILIES)
def test_random_functions_shapes_and_reproducibility(family):
    m = boltzmann((0, 3), 0.2, J=J2)
    F, labels = random_functions(m, family, 30, seed=5)
    G, _ = random_functions(m, family, 30, seed=5)
    assert F.shape == (30, 16) and len(labels) == 30
    np.testing.assert_array_equal(F, G)
    if family == "exp-linear":
        assert np.all(F > 0)
    if family == "mixed":
        assert set(labels) == {"tables", "linear", "exp-linear"}


# --- LSI ----------------------------------------------------------------------

def test_lsi_passes_with_bound_and_fails_below_optimum():
    m = boltzmann((0, 0), 0.0, J=J2)
    assert verify_lsi(m, 0.25, trials=200).passed
    rep = verify_lsi(m, 0.2, trials=200)
    assert not rep.passed
    assert rep.worst_ratio == pytest.approx(0.25 / 0.2, rel=1e-6)


@pytest.mark.parametrize("n,beta", [(2, 0.2), (3, 0.5)])
def test_lsi_with_certified_constant(n, beta):
    m = boltzmann(_centered_volume(n), beta, J=J2)
    D = d_lsi_bound(beta, susceptibility_fv(m))
    rep = verify_lsi(m, D, trials=500, seed=3)
    assert rep.passed
    # random tables plus two search witnesses, minus excluded constants
    assert rep.trials + rep.details["excluded_constant"] == 502
    assert rep.as_dict()["schema_version"] == 1


def test_lsi_excludes_constants():
    m = boltzmann((0, 1), 0.1, J=J2)
    rep = verify_lsi(m, 1.0, trials=5, search_trials=0, extra=np.ones((1, 4)))
    assert rep.details["excluded_constant"] >= 1


# --- GCB and MCB ----------------------------------------------------------------

def test_gcb_independent_spins_hoeffding():
    # i.i.d. symmetric spins: log E exp(sum a_i s_i) = sum log cosh a_i <= sum (2 a_i)^2 / 8
    m = boltzmann((0, 3), 0.0, J=J2)
    assert verify_gcb(m, 0.125, "linear", 300).passed
    # near-equality for small linear forms: D slightly below 1/8 fails
    small = 1e-3 * LocalFunction.linear({0: 1.0, 1: 1.0}).values_on((0, 3))
    assert not verify_gcb(m, 0.124, "linear", 1, extra=small).passed


def test_centred_log_mgf_against_direct():
    m = boltzmann((0, 2), 0.4, J=J2)
    F = np.random.default_rng(0).standard_normal(8)
    p = m.probabilities
    direct = math.log(p @ np.exp(F - p @ F))
    rep = verify_gcb(m, 1.0, "tables", 1, extra=F)
    osc = 0.0
    for t in range(3):
        idx = np.arange(8)
        osc += np.max(np.abs(F - F[idx ^ (1 << t)])) ** 2
    assert max(rep.worst_ratio, direct / osc) == pytest.approx(rep.worst_ratio)


@pytest.mark.parametrize("k", [1, 2, 3, 4, 6, 8])
def test_mcb_bound_formula(k):
    assert mcb_bound(0.5, 3.0, k) == pytest.approx(0.75 ** (k / 2) * k * gamma(k / 2))


def test_mcb_second_moment_needs_quarter_at_beta_zero():
    # F = s_0 under the uniform measure: E F^2 = 1 and ||dF||^2 = 4, so the
    # second-moment bound reads 1 <= 2 D; it fails for D = 1/8 where GCB holds.
    m = boltzmann((0, 0), 0.0, J=J2)
    F = LocalFunction.spin(0)
    assert verify_gcb(m, 0.125, "linear", 1, extra=F.values_on((0, 0))).passed
    assert not verify_mcb(m, 0.125, F, (2,)).passed
    assert verify_mcb(m, 0.25, F, (2,)).worst_ratio == pytest.approx(1.0)


def test_tail_form_implies_moments_with_same_constant():
    # integrating the two-sided tail 2 exp(-2 t^2 / (D s)) gives exactly the moment bound
    D, s = 0.3, 2.0
    t = np.linspace(0, 40, 400_001)
    for k in (2, 4, 6):
        integrand = k * t ** (k - 1) * 2 * np.exp(-2 * t * t / (D * s))
        assert np.trapezoid(integrand, t) == pytest.approx(mcb_bound(D, s, k), rel=1e-6)


def test_mcb_accepts_tables_and_reports_moment():
    m = boltzmann((0, 2), 0.3, J=J2)
    F, _ = random_functions(m, "tables", 20, seed=1)
    rep = verify_mcb(m, 10.0, F)
    assert rep.passed and rep.worst_witness["moment"] in (2, 4, 6, 8)
    assert len(rep.margins) == 4


# --- Herbst -------------------------------------------------------------------

def test_herbst_derivative_matches_closed_form():
    # uniform single spin, F = a s: u(l) = log cosh(a l) / l
    m = boltzmann((0, 0), 0.0, J=J2)
    a = 1.3
    F = np.array([-a, a])
    lam = np.array([0.1, 0.5, 1.0])
    s = herbst_scan(m, F, lam, 0.25)
    exact_u = np.log(np.cosh(a * lam)) / lam
    exact_du = a * np.tanh(a * lam) / lam - np.log(np.cosh(a * lam)) / lam ** 2
    np.testing.assert_allclose(s.u, exact_u, rtol=1e-12)
    np.testing.assert_allclose(s.du, exact_du, rtol=1e-7)
    assert abs(s.u0_extrapolated) < 1e-6 and s.u0 == 0.0
    assert s.passed and s.slope_bound == pytest.approx(0.25 * 4 * a * a)


def test_herbst_flags_too_small_constant():
    m = boltzmann((0, 0), 0.0, J=J2)
    s = herbst_scan(m, np.array([-1.0, 1.0]), np.array([0.5, 1.0]), 0.01)
    assert not s.passed and s.violations


def test_herbst_rejects_bad_grid():
    m = boltzmann((0, 0), 0.0, J=J2)
    with pytest.raises(ValueError):
        herbst_scan(m, np.array([-1.0, 1.0]), np.array([0.0, 0.5]), 0.25)


# --- flip densities -------------------------------------------------------------

def test_measure_suac_row_sums():
    vol = (0, 3)
    m = boltzmann(vol, 0.5, J=J2, bc=BoundaryCondition.plus([4]))
    # site 2: couplings to 0, 1, 3 plus the boundary site 4 at distance 2
    assert measure_suac(m) == pytest.approx(0.5 * (1 / 4 + 1 + 1 + 1 / 4))


@pytest.mark.parametrize("beta", [0.0, 0.3, 1.0])
def test_flip_density_bound(beta):
    m = boltzmann((-2, 2), beta, J=make_power_law(1.5), bc=BoundaryCondition.plus([-3, 3]))
    chk = flip_density_check(m, measure_suac(m))
    assert chk.passed
    # the bound is attained at some configuration for the worst site (all aligned)
    assert chk.sup_density == pytest.approx(chk.bound, rel=1e-12)


def test_flip_density_fails_with_small_norm():
    m = boltzmann((0, 3), 0.5, J=J2)
    assert not flip_density_check(m, 0.5 * measure_suac(m)).passed


@given(st.lists(st.floats(-30, 30), min_size=1, max_size=20),
       st.lists(st.floats(-30, 30), min_size=1, max_size=20))
def test_mvt_exp_ratio_at_most_one(a, b):
    n = min(len(a), len(b))
    assert mvt_exp_check(np.array(a[:n]), np.array(b[:n])) <= 1.0 + 1e-12


# --- integrability and modulus ------------------------------------------------------

def test_uniform_integrability_rows():
    rows = uniform_integrability_diag([1, 2], 0.3, J2, k_policy="all")
    assert len(rows) == (k_of(1) + 1) + (k_of(2) + 1)
    assert all(r.identity_residual < 1e-12 for r in rows)
    assert all(not r.exceeds for r in rows)
    assert rows[0].entropy == pytest.approx(0.0, abs=1e-15)
    ends = uniform_integrability_diag([2], 0.3, J2, k_policy="ends")
    assert [r.k for r in ends] == [0, k_of(2)]
    stride = uniform_integrability_diag([2], 0.3, J2, k_policy="stride:4")
    assert [r.k for r in stride] == [0, 4, 6]
    with pytest.raises(ValueError):
        uniform_integrability_diag([1], 0.3, J2, k_policy="odd")


def test_continuity_modulus_values():
    rows = continuity_modulus([0, 5, 50], 0.5, 0.3, J2)
    u = [r.u for r in rows]
    assert u[0] > u[1] > u[2] > 0
    # u_0 = 16 beta^2 C1
    b = constants(0.3, 1.0, J2)
    assert u[0] == pytest.approx(16 * 0.09 * b.C1, rel=1e-8)
    r = rows[1]
    assert r.v == pytest.approx(math.sqrt(0.5 * r.u / 2))
    C2 = math.exp(8 * 0.5 * 0.09 * b.C1)
    assert r.modulus == pytest.approx(C2 * math.sqrt((6 * r.v ** 2 + 8 * r.v) * math.exp(r.v ** 2)),
                                      rel=1e-8)


def test_continuity_modulus_structured_error():
    with pytest.raises(SummabilityError) as err:
        continuity_modulus([1, 2], 0.5, 0.3, make_power_law(1.45))
    assert err.value.condition == "iii"


def test_continuity_modulus_finite_table():
    rows = continuity_modulus([0, 3, 4], 0.5, 0.3, make_table([1.0, 0.5, 0.25]))
    assert rows[1].u == pytest.approx(0.0, abs=1e-12) and rows[2].u == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=25)
@given(st.floats(0.01, 5.0), st.floats(0.0, 1.0), st.floats(0.0, 10.0))
def test_half_line_bounds_reciprocal(D, beta, C1):
    iv = half_line_bounds(D, beta, C1)
    assert iv.lo * iv.hi == pytest.approx(1.0)
    assert iv.lo <= 1.0 <= iv.hi
