import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from bbcu import analysis as an
from bbcu.control import ControllerGains, ControllerState, reduced_current_rhs
from bbcu.errors import DomainError, HypothesisError, InfeasibleError
from bbcu.plant import PlantParams, StateBox, derive, equilibrium

OPERATING_BOX = StateBox(9.0, 11.0, 269.5, 270.0, 28.0, 35.0)
MODE2_BOX = StateBox(-20.0, 10.0, 268.0, 269.0, 26.0, 30.0)


# --- steady states ---------------------------------------------------------

def test_k_infinity_current_printed_form(plant):
    """Conjugate form used in the code equals the textbook root formula."""
    d = derive(plant)
    x1 = 10.0
    q = plant.R_L * x1 + plant.E_L
    textbook = (plant.E_H - math.sqrt(plant.E_H ** 2 - 4 * plant.R_H ** 2 * plant.C_H * x1 * q * d.alpha)) / (
        2 * plant.R_H * q)
    assert an.k_infinity_current(x1, plant) == pytest.approx(textbook, rel=1e-9)


@pytest.mark.parametrize("R_D", [300.0, 90.0, 20.0, 18.0])
def test_k_infinity_current_is_rest_point(R_D):
    p = PlantParams(R_D=R_D)
    ss = an.mode1_steady_state(10.0, p)
    assert an.k_infinity_current(10.0, p) == pytest.approx(ss.k_star, rel=1e-12)
    assert ss.k_star * ss.x2_star == pytest.approx(10.0, rel=1e-10)
    f = reduced_current_rhs(ss.k_star, ss.x2_star, ss.x3_star, 10.0, 4.0, p)
    assert np.abs(f[1:]).max() < 1e-9 * derive(p).beta_H
    assert abs(f[0]) < 1e-9


def test_k_infinity_current_zero_reference(plant):
    assert an.k_infinity_current(0.0, plant) == 0.0


def test_k_infinity_current_infeasible():
    with pytest.raises(InfeasibleError):
        an.k_infinity_current(2000.0, PlantParams(R_D=15.0))


def test_x2_reference_bound_value():
    p = PlantParams(R_D=17.0)
    bound = an.x2_reference_bound(p)
    assert 268.4 < bound < p.E_H
    assert bound == pytest.approx(269.8651, abs=1e-3)


@pytest.mark.parametrize("R_D", [17.0, 16.5, 16.0, 15.0])
@pytest.mark.parametrize("I_OL", [16.0, 17.5])
def test_k_infinity_voltage_is_plant_rest_point(R_D, I_OL):
    p = PlantParams(R_D=R_D)
    x2 = an.voltage_reference(I_OL, p)
    k = an.k_infinity_voltage(x2, p)
    x1 = k * x2
    x3 = p.E_L + p.R_L * x1
    u = x3 / x2  # the averaged switch keeps x1 constant
    d = derive(p)
    assert abs(-d.alpha * x2 - x1 * u / p.C_H + d.beta_H) < 1e-9 * d.beta_H


def test_k_infinity_voltage_domain():
    p = PlantParams(R_D=17.0)
    with pytest.raises(InfeasibleError):
        an.k_infinity_voltage(0.0, p)
    with pytest.raises(InfeasibleError):
        an.k_infinity_voltage(an.x2_reference_bound(p) + 0.01, p)


def test_k_infinity_voltage_vanishes_at_unassisted_voltage():
    """At the open-switch HV voltage the battery supplies nothing."""
    p = PlantParams(R_D=17.0)
    assert an.k_infinity_voltage(equilibrium(0, p).x2, p) == pytest.approx(0.0, abs=1e-12)


def test_mode2_steady_state_regimes():
    assert an.mode2_steady_state(268.4, PlantParams(R_D=17.0)).k_star > 0
    assert an.mode2_steady_state(268.4, PlantParams(R_D=15.0)).k_star < 0


# --- current loop constants -------------------------------------------------

def test_current_loop_default_box_reports_invalid(plant):
    c = an.theorem1_constants(StateBox(), 10.0, 4.0, plant, 0.1)
    assert not c.valid
    assert c.K_max_bound == pytest.approx(2.3534e-4, rel=1e-3)
    assert any("K_max" in f for f in c.failed)


def test_current_loop_operating_box_valid(plant):
    c = an.theorem1_constants(OPERATING_BOX, 10.0, 4.0, plant, 0.1)
    assert c.valid, c.failed
    assert c.K_max_bound > 0.1 and c.gamma1_bound > 4.0 and c.nu > 0


def test_cylinder_radius_value(plant):
    c = an.theorem1_constants(OPERATING_BOX, 10.0, 4.0, plant, 0.1)
    assert c.cylinder_radius == pytest.approx(4.3, abs=0.05)


def test_current_loop_reference_outside_equilibria(plant):
    with pytest.raises(HypothesisError) as exc:
        an.theorem1_constants(OPERATING_BOX, -300.0, 4.0, plant, 0.1)
    assert exc.value.failed


def test_current_loop_small_gain_invalid(plant):
    c = an.theorem1_constants(OPERATING_BOX, 10.0, 1e-9, plant, 0.1)
    assert c.a_of_gamma1 < 0
    assert not c.valid


# --- reaching ---------------------------------------------------------------

def brute_force_omega(box, law, K_max, p, n=9):
    d = derive(p)
    g = np.meshgrid(np.linspace(box.X1_minus, box.X1_plus, n), np.linspace(box.X2_minus, box.X2_plus, 4 * n + 1),
                    np.linspace(box.X3_minus, box.X3_plus, n), np.linspace(-K_max, K_max, n), indexing="ij")
    x1, x2, x3, k = g
    if law.kind == 0:
        kd = law.gain * (law.target - x1)
    else:
        kd = law.gain * (law.target - (p.E_H - x2) / p.R_H)
    phi1 = kd * x2 + x3 / p.L + k * (d.beta_H - d.alpha * x2)
    phi2 = 0.5 * (k * x1 / p.C_H + x2 / p.L)
    return min(phi1.min(), (2 * phi2 - phi1).min())


def test_reaching_rate_matches_brute_force(plant):
    g = ControllerGains()
    law = g.mode1_law()
    w = an.reaching_rate(OPERATING_BOX, ControllerState(0.0, law, 0.1), plant)
    assert w == pytest.approx(brute_force_omega(OPERATING_BOX, law, 0.1, plant), rel=1e-9)


@pytest.mark.parametrize("R_D", [17.0, 15.0])
def test_reaching_rate_generator_law_brute_force(R_D):
    p = PlantParams(R_D=R_D)
    law = ControllerGains().mode2_law(16.0, p)
    w = an.reaching_rate(MODE2_BOX, ControllerState(0.0, law, 0.1), p)
    assert w <= brute_force_omega(MODE2_BOX, law, 0.1, p) + 1e-9
    assert w == pytest.approx(brute_force_omega(MODE2_BOX, law, 0.1, p), rel=1e-6)


def test_reaching_rate_unavailable_on_default_box(plant):
    with pytest.raises(InfeasibleError):
        an.reaching_rate(StateBox(), ControllerState(0.0, ControllerGains().mode1_law(), 0.1), plant)


def test_reaching_time_zero_sigma():
    assert an.reaching_time_bound(0.0, 100.0) == 0.0
    with pytest.raises(InfeasibleError):
        an.reaching_time_bound(1.0, 0.0)


def test_mode2_reaching_estimate_near_reported_value():
    p = PlantParams(R_D=17.0)
    law = ControllerGains().mode2_law(16.0, p)
    w = an.reaching_rate(MODE2_BOX, ControllerState(0.0, law, 0.1), p)
    t = an.reaching_time_bound(an.max_sigma_over_box(MODE2_BOX, 0.1), w)
    assert 0.01 <= t <= 0.03


# --- voltage loop -----------------------------------------------------------

def test_regime_split():
    hi = an.theorem2_constants(268.4, 4.0, PlantParams(R_D=17.0))
    lo = an.theorem2_constants(268.4, 4.0, PlantParams(R_D=15.0))
    assert hi.regime == "RDhigh" and lo.regime == "RDlow"
    assert hi.regime_threshold == pytest.approx(16.775, abs=1e-3)


def test_delta_e_is_twice_lv_drop():
    for R_D in (17.0, 15.0):
        p = PlantParams(R_D=R_D)
        c = an.theorem2_constants(268.4, 4.0, p)
        x1 = an.k_infinity_voltage(268.4, p) * 268.4
        assert c.DeltaE == pytest.approx(2 * p.R_L * x1, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("R_D,I_OL", [(17.0, 16.0), (16.5, 16.0), (15.0, 16.0), (15.0, 17.5)])
@pytest.mark.parametrize("gamma", [0.5, 4.0, 60.0, 400.0])
def test_char_poly_matches_matrix(R_D, I_OL, gamma):
    p = PlantParams(R_D=R_D)
    x2 = an.voltage_reference(I_OL, p)
    c = an.theorem2_constants(x2, gamma, p)
    A = an.mode2_dynamic_matrix(c.steady.k_star, x2, c.steady.x3_star, gamma, p)
    np.testing.assert_allclose(an.mode2_char_poly(c), np.poly(A), rtol=1e-9)


def eigen_crossing(R_D, I_OL, lo=1e-3, hi=1e4):
    """Smallest gain at which the linearised loop loses stability (bisection on a log grid)."""
    p = PlantParams(R_D=R_D)
    x2 = an.voltage_reference(I_OL, p)
    ss = an.mode2_steady_state(x2, p)

    def stable(g):
        A = an.mode2_dynamic_matrix(ss.k_star, x2, ss.x3_star, g, p)
        return np.linalg.eigvals(A).real.max() < 0

    grid = np.geomspace(lo, hi, 400)
    bad = [g for g in grid if not stable(g)]
    if not bad:
        return math.inf
    b = bad[0]
    a = grid[np.searchsorted(grid, b) - 1]
    for _ in range(60):
        m = 0.5 * (a + b)
        a, b = (m, b) if stable(m) else (a, m)
    return a


@pytest.mark.parametrize("R_D,I_OL", [(15.0, 16.0), (15.0, 16.5), (15.0, 17.0), (15.0, 17.5),
                                      (16.0, 16.0), (16.5, 16.0)])
def test_gain_bound_matches_eigenvalue_crossing(R_D, I_OL):
    p = PlantParams(R_D=R_D)
    c = an.theorem2_constants(an.voltage_reference(I_OL, p), 4.0, p)
    assert c.regime == "RDlow"
    assert c.gamma2_bound == pytest.approx(eigen_crossing(R_D, I_OL), rel=1e-6)


@pytest.mark.parametrize("R_D", [17.0, 20.0, 50.0])
def test_high_load_resistance_any_gain(R_D):
    p = PlantParams(R_D=R_D)
    c = an.theorem2_constants(268.4, 4.0, p)
    assert c.regime == "RDhigh"
    assert c.gamma2_bound == math.inf
    assert eigen_crossing(R_D, 16.0) == math.inf


def test_hypothesis_flag_tracks_regime():
    assert an.theorem2_constants(268.4, 4.0, PlantParams(R_D=17.0)).hypothesis_ok
    assert not an.theorem2_constants(268.4, 4.0, PlantParams(R_D=15.0)).hypothesis_ok


@settings(max_examples=60, deadline=None)
@given(st.floats(12.0, 15.7), st.sampled_from([16.0, 16.5, 17.0, 17.5]))
def test_gamma_plus_is_first_positive_root(R_D, I_OL):
    p = PlantParams(R_D=R_D)
    c = an.theorem2_constants(an.voltage_reference(I_OL, p), 4.0, p)
    assume(c.regime == "RDlow")
    assert c.a11 < 0 and c.a21 < 0  # both coefficients negative in this regime
    poly = np.poly1d(c.p_coeffs)
    assert abs(poly(c.gamma_plus)) < 1e-9 * np.abs(c.p_coeffs).max() * max(1.0, c.gamma_plus) ** 2
    g = np.linspace(0, c.gamma_plus, 200)[1:-1]
    assert np.all(poly(g) > 0)


def test_infeasible_voltage_reference():
    with pytest.raises(InfeasibleError):
        an.theorem2_constants(400.0, 4.0, PlantParams(R_D=17.0))


def test_reaching_gain_bound_reported():
    c = an.theorem2_constants(268.4, 4.0, PlantParams(R_D=17.0), MODE2_BOX, 0.1)
    assert c.gamma2_reaching_bound is not None


# --- polynomials ------------------------------------------------------------

def test_routh_examples():
    assert an.routh_hurwitz_cubic([1, 6, 11, 6])  # (s+1)(s+2)(s+3)
    assert not an.routh_hurwitz_cubic([1, 1, 1, 1])  # roots on the imaginary axis
    assert not an.routh_hurwitz_cubic([1, -6, 11, -6])
    with pytest.raises(DomainError):
        an.routh_hurwitz_cubic([0, 1, 1, 1])
    with pytest.raises(DomainError):
        an.routh_hurwitz_cubic([-1, 1, 1, 1])


coef = st.floats(-50, 50, allow_nan=False).filter(lambda v: abs(v) > 1e-3)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.1, 10), coef, coef, coef)
def test_routh_agrees_with_eigenvalues(a3, a2, a1, a0):
    roots = np.roots([a3, a2, a1, a0])
    margin = np.abs(roots.real).min()
    assume(margin > 1e-6)
    assert an.routh_hurwitz_cubic([a3, a2, a1, a0]) == bool(np.all(roots.real < 0))


def test_cubic_roots_examples():
    r = an.cubic_roots([1, 0, 1, 0])
    np.testing.assert_allclose(r, [-1j, 0, 1j], atol=1e-15)
    np.testing.assert_allclose(an.cubic_roots([1, 6, 11, 6]), [-3, -2, -1], rtol=1e-14)
    with pytest.raises(DomainError):
        an.cubic_roots([0, 1, 2, 3])


@settings(max_examples=300, deadline=None)
@given(st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-6), st.floats(-1e3, 1e3),
       st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_cubic_roots_residual_and_order(a3, a2, a1, a0):
    c = np.array([a3, a2, a1, a0])
    r = an.cubic_roots(c)
    assert r.shape == (3,)
    assert np.all(np.abs(np.polyval(c, r)) < 1e-8 * np.abs(c).max() * max(1.0, np.abs(r).max()) ** 3)
    keys = [(z.real, z.imag) for z in r]
    assert keys == sorted(keys)


def test_cubic_roots_mode2_residual():
    p = PlantParams(R_D=15.0)
    c = an.theorem2_constants(an.voltage_reference(17.5, p), 4.0, p)
    q = an.mode2_char_poly(c)
    r = an.cubic_roots(q)
    assert np.abs(np.polyval(q, r)).max() < 1e-8 * np.abs(q).max()


def test_routh_reference_cases():
    from bbcu.plant import dynamic_matrix_u1
    assert an.routh_hurwitz_cubic([1, 3, 3, 1])
    assert not an.routh_hurwitz_cubic([1, 0, 1, 1])
    q = np.poly(dynamic_matrix_u1(PlantParams(R_D=300.0)))
    assert an.routh_hurwitz_cubic(q)
    assert np.all(an.cubic_roots(q).real < 0)


def test_routh_agrees_on_random_cubics():
    rng = np.random.default_rng(99)
    checked = 0
    for _ in range(1000):
        c = np.concatenate([[rng.uniform(0.1, 5)], rng.uniform(-5, 10, 3)])
        r = an.cubic_roots(c)
        if np.abs(r.real).min() < 1e-9:
            continue
        assert an.routh_hurwitz_cubic(c) == bool(r.real.max() < 0)
        checked += 1
    assert checked > 950


def test_roots_cross_just_above_bound():
    p = PlantParams(R_D=15.0)
    c = an.theorem2_constants(an.voltage_reference(16.0, p), 4.0, p)
    below = an.cubic_roots(an.mode2_char_poly(c, 0.99 * c.gamma2_bound))
    above = an.cubic_roots(an.mode2_char_poly(c, 1.01 * c.gamma2_bound))
    assert below.real.max() < 0 < above.real.max()
    assert an.routh_hurwitz_cubic(an.mode2_char_poly(c, 0.99 * c.gamma2_bound))
    assert not an.routh_hurwitz_cubic(an.mode2_char_poly(c, 1.01 * c.gamma2_bound))


def test_mode2_matrix_entries():
    p = PlantParams(R_D=17.0)
    ss = an.mode2_steady_state(268.4, p)
    A = an.mode2_dynamic_matrix(ss.k_star, 268.4, ss.x3_star, 4.0, p)
    assert A[0, 1] == 4.0
    assert A[2, 2] == pytest.approx(-25000.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(1.0, 1e4), st.floats(0.0, 30.0))
def test_manifold_identity_and_voltage_ordering(R_D, x1_ref):
    p = PlantParams(R_D=R_D)
    assert equilibrium(1, p).x2 < equilibrium(0, p).x2
    try:
        ss = an.mode1_steady_state(x1_ref, p)
    except InfeasibleError:
        return
    assert abs(ss.k_star * ss.x2_star - ss.x1_star) < 1e-10 * max(1.0, x1_ref)
