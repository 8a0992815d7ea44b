import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from kscert.hardrod import TonksEvaluator, TonksParams, tonks_rho2
from kscert.integrate import QuadSpec
from kscert.mayer import IdealGasEvaluator, MayerEvaluator, _expansion, activity_from_state
from kscert.potential import PairPotential
from kscert.residuals import (EQUATIONS, ResidualReport, _fd, bbgky_residual, bogolyubov_residual, cluster_gap,
                              iteration_order, iteration_tail, ks_residual, ks_symmetric_residual, maxwellian)

FREE = PairPotential.gaussian_bump(0.0)


@pytest.fixture(scope="module")
def ideal():
    return IdealGasEvaluator(0.3, FREE, 1.0)


def test_report_schema():
    r = ResidualReport("KS", 2, {"config": np.array([0.0, 1.5])}, 1e-9, 1e-8, {"tail": 1e-8})
    d = r.to_dict()
    assert set(d) == {"equation", "n", "location", "residual", "budget", "pass", "components"}
    assert set(d["components"]) == {"tail", "quad", "fd"}
    assert d["pass"] is True and d["location"]["config"] == [0.0, 1.5]
    assert ResidualReport("KS", 1, {}, 0.0, 0.0).budget > 0
    assert not ResidualReport("KS", 1, {}, 1.0, 0.5).passed
    with pytest.raises(ValueError):
        ResidualReport("nope", 1, {}, 0.0, 1.0)
    assert {"KS", "KS_symmetric", "BBGKY_positional", "Bogolyubov", "cluster_gap", "tail_bound"} <= set(EQUATIONS)


def test_ideal_gas_identities(ideal):
    for n in (1, 2, 3):
        x = np.arange(n) * 0.7
        for r in (ks_residual(n, x, 0.3, ideal), ks_symmetric_residual(n, x, 2.0, ideal),
                  bbgky_residual(n, x, ideal), bogolyubov_residual(n, (x, np.linspace(-1, 1, n)), ideal)):
            assert abs(r.residual) <= 1e-15
            assert r.passed
    assert cluster_gap(1, 1, 5.0, ideal) == 0.0


def test_symmetric_vanishes_at_coincidence(soft_ev):
    r = ks_symmetric_residual(2, [0.0, 1.5], 0.0, soft_ev)
    assert r.residual == 0.0


def test_bbgky_translation_invariance(soft_ev):
    a = bbgky_residual(2, [0.0, 1.5], soft_ev)
    b = bbgky_residual(2, [3.7, 5.2], soft_ev)
    assert abs(a.residual - b.residual) <= 1e-12
    assert a.passed and b.passed


def test_bbgky_rejects_overlap(soft_ev):
    with pytest.raises(ValueError):
        bbgky_residual(2, [0.4, 0.4], soft_ev)


def test_bogolyubov_zero_momenta(soft_ev):
    r = bogolyubov_residual(2, ([0.0, 1.5], [0.0, 0.0]), soft_ev)
    assert r.residual == 0.0 and r.passed


def test_maxwellian_normalized():
    p = np.linspace(-12, 12, 20001)
    for beta in (0.5, 2.0):
        vals = np.array([maxwellian([x], beta) for x in p])
        assert trapezoid(vals, p) == pytest.approx(1.0, rel=1e-9)


def test_fd_richardson_ratio(soft_ev):
    x = np.array([0.0, 0.6])
    lvl = soft_ev.levels[0]
    d = [_fd(soft_ev, x, h, lvl) for h in (0.04, 0.02, 0.01)]
    ratio = (d[0] - d[1]) / (d[1] - d[2])
    assert abs(ratio - 4.0) <= 0.8


def test_budget_monotone_in_P(soft_exp):
    tails, passes = [], []
    for P in (2, 3, 4):
        ev = MayerEvaluator(soft_exp, 0.05, P)
        r = ks_symmetric_residual(2, [0.0, 1.5], 2.3, ev)
        tails.append(r.components["tail"])
        passes.append(r.passed)
    assert tails[0] > tails[1] > tails[2]
    assert passes == sorted(passes)


def test_ks_n1_matches_activity_formula(soft_exp):
    ev = MayerEvaluator(soft_exp, 0.05, 2)
    r = ks_residual(1, [0.0], 0.05, ev, m_max=3)
    act = activity_from_state(ev, k_max=3)
    rho = float(ev.rho_n(np.zeros((1, 1)))[0])
    assert r.residual == pytest.approx(rho - 0.05 * act.denominator, abs=1e-14)
    assert r.passed


def test_iteration_tail_examples():
    assert iteration_tail(5, 2, 0.0, 10.0, xi=0.0, I=2.0, J=2.0) == 0.0
    for N in range(0, 30):
        a = iteration_tail(N, 2, 0.0, 10.0, xi=0.05, I=2.0, J=2.0)
        b = iteration_tail(N + 1, 2, 0.0, 10.0, xi=0.05, I=2.0, J=2.0)
        assert b / a == pytest.approx(3 * 2.0 * 0.05 / (N + 1), rel=1e-12)
    N = iteration_order(1e-12, 2, 0.0, 10.0, xi=0.05, I=2.0, J=2.0)
    assert iteration_tail(N, 2, 0.0, 10.0, xi=0.05, I=2.0, J=2.0) < 1e-12
    assert iteration_tail(N - 1, 2, 0.0, 10.0, xi=0.05, I=2.0, J=2.0) >= 1e-12
    # direct evaluation of (1/N!) |q1 - q0| (3I)^N J xi^{n+1+N}
    direct = 10.0 * 6.0 ** 3 * 2.0 * 0.05 ** 6 / 6
    assert iteration_tail(3, 2, 0.0, 10.0, xi=0.05, I=2.0, J=2.0) == pytest.approx(direct, rel=1e-13)


def test_cluster_gap_tonks():
    params = TonksParams(0.2, 1.0)
    ev = TonksEvaluator(params)
    gap = cluster_gap(1, 1, 3.0, ev)
    assert gap == pytest.approx(abs(tonks_rho2(3.0, params) - 0.04), rel=1e-12)
    s = np.linspace(2.0, 8.0, 25)
    gaps = np.array([cluster_gap(1, 1, x, ev) for x in s])
    # envelope: running maxima of the oscillating gap
    env = np.array([gaps[i:].max() for i in range(len(s))])
    slope = np.polyfit(s, np.log(env), 1)[0]
    assert slope < 0


def test_cluster_gap_series_far(soft_ev):
    from kscert.residuals import cluster_gap_budget
    assert cluster_gap(1, 1, 10.0, soft_ev) <= cluster_gap_budget(1, 1, soft_ev)
