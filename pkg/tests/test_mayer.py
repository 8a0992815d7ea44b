import io
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kscert.integrate import QuadSpec
from kscert.mayer import (ConvergenceError, IdealGasEvaluator, MayerEvaluator, _expansion, activity_from_state,
                          bound_from_I, coeff, coeff_bound, denominator_lower_bound, invert_activity,
                          rho_series, series_tail, write_coeff_csv, xi_admissible)
from kscert.potential import PairPotential, i_beta

HARD = PairPotential.hard_rod(1.0)
Q = QuadSpec()


@pytest.fixture(scope="module")
def hard_exp():
    return _expansion(HARD, 1.0, 1, Q, 4)


def tonks_rho_taylor(order):
    """Taylor coefficients of rho(z) = W(z)/(1 + W(z)) (rods of unit length)."""
    mpmath.mp.dps = 40
    f = lambda z: mpmath.lambertw(z) / (1 + mpmath.lambertw(z))
    return [float(c) for c in mpmath.taylor(f, 0, order)]


def test_coeff_examples(soft_exp):
    assert coeff(1, 0, [0.0], 1.0, PairPotential.soft_core(1.0, 0.05)) == 1.0
    assert soft_exp.coeff(2, 1, [0.0, 1.5]) == 1.0
    assert soft_exp.coeff(2, 0, [0.0, 1.5]) == 0.0


def test_c11_is_minus_i_beta():
    pot = PairPotential.soft_core(1.0, 0.02)
    c, err = _expansion(pot, 1.0, 1, Q, 4).coeff_with_error(1, 1)
    ib = i_beta(pot, 1.0)
    assert abs(c + ib.value) <= err + ib.error_estimate
    assert -2.0 < c < -1.8


def test_hard_core_coefficients_match_tonks_series(hard_exp):
    taylor = tonks_rho_taylor(5)
    # rho = sum_p c_{1,p} z^{p+1}
    for p in range(0, 5):
        c, err = hard_exp.coeff_with_error(1, p)
        assert c == pytest.approx(taylor[p + 1], rel=1e-12, abs=1e-12)
    assert hard_exp.coeff(1, 1) == pytest.approx(-2.0, abs=1e-13)
    assert hard_exp.coeff(1, 2) == pytest.approx(4.5, abs=1e-12)


def test_coeff_bound_examples():
    assert bound_from_I(1, 0, 2.0) == 1.0
    assert bound_from_I(2, 1, 2.0) == pytest.approx(math.e, rel=1e-15)
    assert coeff_bound(1, 2, 1.0, HARD) == pytest.approx((2 * math.e) ** 2, rel=1e-15)
    assert coeff_bound(1, 2, 1.0, HARD) == pytest.approx(29.556, abs=1e-3)
    assert bound_from_I(3, 1, 2.0) == 0.0


def test_xi_admissible_examples():
    assert xi_admissible(1.0, HARD) == pytest.approx(1 / (4 * math.e), rel=1e-15)
    assert xi_admissible(1.0, HARD) == pytest.approx(0.0919699, abs=1e-7)
    assert xi_admissible(1.0, PairPotential.gaussian_bump(0.0)) == math.inf
    Is = [i_beta(PairPotential.soft_core(1.0, e), 1.0).value for e in (0.2, 0.1, 0.05)]
    for e in (0.2, 0.1, 0.05):
        assert xi_admissible(1.0, PairPotential.soft_core(1.0, e)) >= 1 / (2 * math.e * max(Is)) * (1 - 1e-12)


def test_denominator_bound_above_half():
    for I in (0.5, 1.0, 2.0, 5.0):
        xi = 1 / (2 * I * math.e)
        assert denominator_lower_bound(I, xi) > 0.5


def test_rho_series_examples(soft_exp, hard_exp):
    sv = soft_exp.rho_series(2, [0.0, 1.0], 0.0)
    assert sv.value == 0.0 and sv.tail_bound == 0.0
    sv = hard_exp.rho_series(1, [0.0], 0.05, P=1)
    assert sv.value == pytest.approx(0.045, rel=1e-13)
    assert sv.tail_bound >= abs(hard_exp.rho_series(1, [0.0], 0.05, P=4).value - sv.value)
    far = soft_exp.rho_series(2, [0.0, 10.0], 0.05)
    one = soft_exp.rho_series(1, [0.0], 0.05)
    assert abs(far.value - one.value ** 2) <= far.uncertainty + 2 * one.value * one.uncertainty + one.uncertainty ** 2


def test_rho_series_radius_flag(soft_exp):
    sv = soft_exp.rho_series(1, [0.0], 1.01 * soft_exp.z_radius)
    assert sv.flagged and sv.tail_bound == math.inf
    assert math.isfinite(sv.value)


def test_vanishing_rule_needs_no_quadrature(soft_exp):
    before = soft_exp.rows
    for n in range(2, 6):
        for p in range(0, n - 1):
            assert soft_exp.coeff(n, p, np.arange(n) * 0.7) == 0.0
    assert soft_exp.rows == before


def test_leading_coefficient(soft_exp, rng):
    pot = soft_exp.pot
    for n in (2, 3):
        for _ in range(10):
            x = rng.uniform(-1.5, 1.5, n)
            diffs = np.abs(x[:, None] - x[None, :])[np.triu_indices(n, 1)]
            c, err = soft_exp.coeff_with_error(n, n - 1, x)
            assert c == pytest.approx(math.exp(-np.sum(pot.phi_r(diffs))), rel=1e-12, abs=err + 1e-15)


def test_alternating_signs(soft_exp):
    for p in range(0, 4):
        assert (-1) ** p * soft_exp.coeff(1, p) >= 0


def test_coeff_symmetries(soft_exp):
    a = soft_exp.coeff(3, 3, [0.0, 0.6, -0.8])
    assert soft_exp.coeff(3, 3, [0.0, -0.8, 0.6]) == pytest.approx(a, rel=1e-12)
    assert soft_exp.coeff(3, 3, [2.5, 3.1, 1.7]) == pytest.approx(a, rel=1e-9)
    b = soft_exp.coeff(2, 3, [0.0, 0.9])
    assert soft_exp.coeff(2, 3, [-1.3, -0.4]) == pytest.approx(b, rel=1e-9)


def test_invert_examples(hard_exp):
    assert invert_activity(0.0, 1.0, HARD) == (0.0, 0.0)
    z, unc = invert_activity(0.045, 1.0, HARD, P=1)
    # z - 2 z^2 = 0.045 has the small root 0.05
    assert z == pytest.approx((1 - math.sqrt(1 - 8 * 0.045)) / 4, rel=1e-12)
    assert z == pytest.approx(0.05, rel=1e-12)


def test_invert_tonks_crosscheck(hard_exp):
    # rho(z = 0.1) from W(0.1)/(1 + W(0.1))
    R = float(mpmath.lambertw(0.1))
    rho = R / (1 + R)
    assert rho == pytest.approx(0.0836420, abs=1e-7)
    z, unc = invert_activity(rho, 1.0, HARD, P=4)
    assert abs(z - 0.1) <= unc


def test_invert_nonconvergence(hard_exp):
    # z - 2 z^2 never reaches 0.2
    with pytest.raises(ConvergenceError) as info:
        invert_activity(0.2, 1.0, HARD, P=1, expansion=hard_exp)
    assert info.value.last is not None


def test_invert_outside_disk_is_uncertain(soft_exp):
    z, unc = invert_activity(0.3, 1.0, soft_exp.pot, P=4, expansion=soft_exp)
    assert z > soft_exp.z_radius and unc == math.inf


@pytest.mark.parametrize("z0", [0.01, 0.05, 0.1])
def test_invert_roundtrip(soft_exp, z0):
    rho = soft_exp.rho_series(1, [0.0], z0).value
    z, unc = invert_activity(rho, 1.0, soft_exp.pot, P=4, expansion=soft_exp)
    assert abs(z - z0) <= unc + 1e-13


def test_activity_ideal_gas():
    res = activity_from_state(IdealGasEvaluator(0.3), k_max=3)
    assert res.denominator == 1.0
    assert res.z == pytest.approx(0.3, rel=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(0, 4), st.floats(0.0, 2.5), st.floats(-2.5, 0.0))
def test_uniform_coefficient_bound(soft_exp, n, p, a, b):
    x = np.array([0.0, a, b][:n])
    c, err = soft_exp.coeff_with_error(n, p, x)
    if n == 3 and p == 4:
        return
    assert abs(c) <= soft_exp.coeff_bound(n, p) + err


def test_series_tail_geometry():
    I = 2.0
    z = 0.5 / (I * math.e)
    for P in range(0, 6):
        assert series_tail(1, P + 1, z, I) == pytest.approx(0.5 * series_tail(1, P, z, I), rel=1e-13)


def test_evaluator_matches_rho_series(soft_exp, soft_ev):
    X = np.array([[0.0, 0.7], [1.0, 2.2]])
    vals = soft_ev.rho_n(X)
    for row, v in zip(X, vals):
        assert v == pytest.approx(soft_exp.rho_series(2, row, 0.05).value, rel=1e-12)
    with pytest.raises(ValueError):
        MayerEvaluator(_expansion(PairPotential.soft_core(1.0, 0.2), 1.0, 2, Q, 4), 0.05)


def test_write_coeff_csv(soft_exp):
    buf = io.StringIO()
    write_coeff_csv(buf, soft_exp, [(1, 1, [0.0]), (2, 1, [0.0, 1.5])])
    lines = buf.getvalue().splitlines()
    assert lines[0] == "n,p,q2,value,bound"
    assert lines[2].startswith("2,1,1.5,1,")
    assert len(lines) == 3
