import inspect
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import kscert.hardrod as hr
from kscert.hardrod import (TonksEvaluator, TonksParams, density_from_activity, extracted_constant_residual,
                            hardrod_hierarchy_residual, hc_activity, hc_ks_residual, tonks_activity, tonks_R,
                            tonks_rho2, tonks_rho2_prime, tonks_rhon, tonks_rhon_batch)

P02 = TonksParams(0.2, 1.0)


def test_closed_forms():
    c = tonks_R(P02)
    assert c.R == pytest.approx(0.25, abs=1e-15)
    assert c.rho2_contact == pytest.approx(0.05, abs=1e-15)
    assert c.z == pytest.approx(0.25 * math.exp(0.25), abs=1e-15)
    assert tonks_activity(P02) == pytest.approx(0.3210064, abs=1e-7)
    assert c.R == pytest.approx(P02.rho + P02.d * c.rho2_contact, rel=1e-15)
    small = tonks_R(TonksParams(1e-9))
    assert small.R == pytest.approx(1e-9, rel=1e-8) and small.z == pytest.approx(1e-9, rel=1e-8)


def test_params_domain():
    for bad in ((1.0, 1.0), (0.0, 1.0), (0.6, 2.0), (0.1, -1.0)):
        with pytest.raises(ValueError):
            TonksParams(*bad)


def test_density_from_activity():
    for rho in (0.05, 0.2, 0.6):
        assert density_from_activity(tonks_activity(TonksParams(rho)), 1.0) == pytest.approx(rho, rel=1e-13)
    assert density_from_activity(0.1) == pytest.approx(0.0836420, abs=1e-7)
    with pytest.raises(ValueError):
        density_from_activity(0.0)


def test_rho2_examples():
    assert tonks_rho2(1.0, P02) == pytest.approx(0.05, rel=1e-15)
    assert tonks_rho2(1.5, P02) == pytest.approx(0.05 * math.exp(-0.125), rel=1e-14)
    assert tonks_rho2(1.5, P02) == pytest.approx(0.0441248, abs=1e-7)
    assert abs(tonks_rho2(50.0, P02) - 0.04) < 1e-10
    with pytest.raises(ValueError):
        tonks_rho2(0.9, P02)


def test_rho2_second_shell_closed_form():
    # on (2d, 3d): rho R [e^{-(x-1)R} + R (x-2) e^{-(x-2)R}]
    x, R = 2.6, 0.25
    truth = 0.2 * R * (math.exp(-(x - 1) * R) + R * (x - 2) * math.exp(-(x - 2) * R))
    assert tonks_rho2(x, P02) == pytest.approx(truth, rel=1e-14)


def test_rho2_prime():
    x = np.array([1.2, 1.7, 2.4, 3.3, 5.5])
    h = 1e-6
    fd = (tonks_rho2(x + h, P02) - tonks_rho2(x - h, P02)) / (2 * h)
    np.testing.assert_allclose(tonks_rho2_prime(x, P02), fd, rtol=1e-7, atol=1e-10)
    assert tonks_rho2_prime(1.5, P02) == pytest.approx(-0.25 * tonks_rho2(1.5, P02), rel=1e-14)


def test_knot_continuity():
    for k in (2, 3, 4):
        left = tonks_rho2(k - 1e-13, P02)
        right = tonks_rho2(k + 1e-13, P02)
        assert abs(left - right) <= 1e-12


def test_cluster_decay_rate():
    x = np.linspace(2.0, 10.0, 81)
    gap = np.abs(tonks_rho2(x, P02) - 0.04)
    env = np.array([gap[i:].max() for i in range(len(x))])
    kappa = -np.polyfit(x, np.log(env), 1)[0]
    assert kappa > 0


def test_rhon_examples():
    assert tonks_rhon([0.0, 1.5, 3.0], P02) == pytest.approx(tonks_rho2(1.5, P02) ** 2 / 0.2, rel=1e-14)
    assert tonks_rhon([0.0, 1.5, 3.0], P02) == pytest.approx(0.0097350, abs=1e-7)
    assert tonks_rhon([0.0, 2.3], P02) == tonks_rho2(2.3, P02)
    assert tonks_rhon([0.0], P02) == 0.2
    assert tonks_rhon([0.0, 50.0, 100.0, 150.0], P02) == pytest.approx(0.2 ** 4, rel=1e-8)
    with pytest.raises(ValueError):
        tonks_rhon([0.0, 0.5], P02)


@settings(max_examples=50, deadline=None)
@given(st.permutations([0.0, 1.3, 2.9, 5.0]))
def test_rhon_permutation_invariant(perm):
    assert tonks_rhon(perm, P02) == tonks_rhon([0.0, 1.3, 2.9, 5.0], P02)


def test_batch_zero_on_overlap():
    out = tonks_rhon_batch(np.array([[0.0, 0.5], [0.0, 1.5]]), P02)
    assert out[0] == 0.0 and out[1] == tonks_rho2(1.5, P02)


def test_beta_does_not_appear():
    for name in hr.__all__:
        obj = getattr(hr, name)
        if callable(obj):
            sig = inspect.signature(obj)
            assert "beta" not in sig.parameters, name


def test_hierarchy_examples():
    assert abs(hardrod_hierarchy_residual([0.0], P02).residual) <= 1e-15
    r = hardrod_hierarchy_residual([0.0, 1.5], P02, fd_step=1e-5)
    assert abs(r.residual) <= 1e-8 and r.passed
    r = hardrod_hierarchy_residual([0.0, 1.5, 4.0], P02)
    assert r.passed
    with pytest.raises(ValueError):
        hardrod_hierarchy_residual([0.0, 1.0], P02)
    with pytest.raises(ValueError):
        hardrod_hierarchy_residual([0.0, 2.0], P02)


def test_extracted_constant_examples():
    for n, cfg in ((2, [0.0, 1.0]), (2, [0.0, 3.0]), (3, [0.0, 1.2, 2.4]), (1, [0.0])):
        r = extracted_constant_residual(n, cfg, P02)
        assert abs(r.residual) <= 1e-10 and r.passed


def test_hc_ks_examples():
    for cfg in ([0.0], [0.0, 1.5]):
        r = hc_ks_residual(len(cfg), cfg, P02)
        assert abs(r.residual) <= 1e-8 and r.passed
    small = TonksParams(1e-4)
    r = hc_ks_residual(1, [0.0], small)
    assert abs(r.residual) <= 1e-15


def test_hc_ks_detects_wrong_activity():
    r = hc_ks_residual(1, [0.0], P02, z=1.5 * tonks_activity(P02))
    assert not r.passed


@pytest.mark.parametrize("rho", [0.05, 0.1, 0.2])
def test_virial_consistency(rho):
    params = TonksParams(rho)
    res = hc_activity(params)
    assert abs(res.z - tonks_activity(params)) <= 1e-8


def test_evaluator_interface():
    ev = TonksEvaluator(P02)
    assert ev.tail(3) == 0.0
    assert ev.sup(2) == pytest.approx(0.2 * 0.25)
    assert ev.rho_n(np.array([[0.0, 2.0]]))[0] == tonks_rho2(2.0, P02)
