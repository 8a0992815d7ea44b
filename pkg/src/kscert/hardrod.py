"""Exact one-dimensional hard rods (Tonks gas) and checks of its equations.

With density rho and rod length d (0 < rho d < 1):

    R = rho / (1 - rho d),    rho_2(d) = rho R,    z = R exp(R d)

    rho_2(x) = rho sum_{k=1}^{floor(x/d)} R^k (x - kd)^{k-1} / (k-1)! exp(-(x - kd) R)

    rho_n(q_1 <= ... <= q_n) = rho^{-(n-2)} prod_j rho_2(q_{j+1} - q_j)

No function here takes an inverse temperature: hard cores make beta drop
out of every formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln, lambertw

from .integrate import QuadSpec, integrate_radial
from .mayer import activity_from_state
from .potential import PairPotential
from .residuals import ResidualReport, ks_residual

__all__ = [
    "TonksParams",
    "TonksConstants",
    "tonks_R",
    "tonks_activity",
    "density_from_activity",
    "tonks_rho2",
    "tonks_rho2_prime",
    "tonks_rhon",
    "tonks_rhon_batch",
    "TonksEvaluator",
    "hardrod_hierarchy_residual",
    "extracted_constant_residual",
    "hc_ks_residual",
    "hc_activity",
]

# relative slack for configurations sitting exactly at contact
CONTACT_TOL = 1e-12


@dataclass(frozen=True)
class TonksParams:
    rho: float
    d: float = 1.0

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError("rod length d must be > 0")
        if not (self.rho > 0 and self.rho * self.d < 1):
            raise ValueError("need 0 < rho d < 1")


class TonksConstants(NamedTuple):
    R: float
    rho2_contact: float
    z: float


def tonks_R(params: TonksParams) -> TonksConstants:
    """R = rho/(1 - rho d), rho_2(d) = rho R and z = R e^{R d}."""
    R = params.rho / (1.0 - params.rho * params.d)
    return TonksConstants(R, params.rho * R, R * math.exp(R * params.d))


def tonks_activity(params: TonksParams) -> float:
    return tonks_R(params).z


def density_from_activity(z: float, d: float = 1.0) -> float:
    """Invert z = R e^{R d}: R = W(z d)/d, rho = R/(1 + R d)."""
    if not z > 0:
        raise ValueError("z must be > 0")
    R = float(lambertw(z * d).real) / d
    return R / (1.0 + R * d)


def _terms(x, params):
    """Per-k log-magnitudes of the rho_2 sum on a vector of x >= d."""
    d = params.d
    R = tonks_R(params).R
    kmax = int(np.floor(np.max(x) / d + CONTACT_TOL)) if x.size else 1
    k = np.arange(1, max(kmax, 1) + 1)
    u = x[:, None] - k[None, :] * d
    valid = u > -CONTACT_TOL * d
    u = np.where(valid, np.maximum(u, 0.0), 0.0)
    # (k-1) log u with the convention 0^0 = 1
    with np.errstate(divide="ignore", invalid="ignore"):
        logu = np.where(k[None, :] == 1, 0.0, (k[None, :] - 1) * np.log(u))
    logt = k * math.log(R) + logu - gammaln(k)[None, :] - u * R
    return k, u, valid, logt, R


def _check_gap(x, d):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("distances must be finite")
    if np.any(x < d * (1.0 - CONTACT_TOL)):
        raise ValueError("overlapping rods: distance below d")
    return np.maximum(x, d)


def tonks_rho2(x, params: TonksParams):
    """Pair correlation at distance x >= d (vectorized)."""
    scalar = np.ndim(x) == 0
    xs = _check_gap(np.atleast_1d(x), params.d)
    k, u, valid, logt, R = _terms(xs, params)
    vals = params.rho * np.sum(np.where(valid, np.exp(logt), 0.0), axis=1)
    return float(vals[0]) if scalar else vals


def tonks_rho2_prime(x, params: TonksParams):
    """d rho_2 / dx away from the knots x = kd (analytic term by term)."""
    scalar = np.ndim(x) == 0
    xs = _check_gap(np.atleast_1d(x), params.d)
    k, u, valid, logt, R = _terms(xs, params)
    t = np.where(valid, np.exp(logt), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where((k[None, :] > 1) & (u > 0), (k[None, :] - 1) / u, 0.0)
    vals = params.rho * np.sum(t * (ratio - R), axis=1)
    return float(vals[0]) if scalar else vals


def tonks_rhon(config, params: TonksParams) -> float:
    """n-point correlation; input order is irrelevant."""
    q = np.sort(np.atleast_1d(np.asarray(config, dtype=float)))
    if not np.all(np.isfinite(q)):
        raise ValueError("positions must be finite")
    n = len(q)
    if n == 0:
        return 1.0
    if n == 1:
        return params.rho
    gaps = _check_gap(np.diff(q), params.d)
    return float(params.rho ** (2 - n) * np.prod(tonks_rho2(gaps, params)))


def tonks_rhon_batch(X, params: TonksParams):
    """rho_n on the rows of X (B, n); zero for rows with overlapping rods."""
    X = np.sort(np.asarray(X, dtype=float), axis=1)
    B, n = X.shape
    if n == 0:
        return np.ones(B)
    if n == 1:
        return np.full(B, params.rho)
    gaps = np.diff(X, axis=1)
    ok = np.all(gaps >= params.d * (1.0 - CONTACT_TOL), axis=1)
    out = np.zeros(B)
    if ok.any():
        g = np.maximum(gaps[ok], params.d).ravel()
        r2 = tonks_rho2(g, params).reshape(-1, n - 1)
        out[ok] = params.rho ** (2 - n) * np.prod(r2, axis=1)
    return out


class TonksEvaluator:
    """Exact hard-rod correlations in the evaluator interface of
    :mod:`kscert.residuals`."""

    hard_core = True
    max_cluster = 2
    nu = 1
    beta = 1.0

    def __init__(self, params: TonksParams, span: float = 12.0):
        self.params = params
        c = tonks_R(params)
        self.R = c.R
        self.z = c.z
        self.xi = c.R
        self.pot = PairPotential.hard_rod(params.d)
        self.levels = (1, 0)
        # rho_2 has knots at every multiple of d
        self.radii = params.d * np.arange(0, int(math.ceil(span)) + 1)

    def rho_n(self, X, level=None):
        return tonks_rhon_batch(X, self.params)

    def rho_hat(self, X, level=None):
        return tonks_rhon_batch(X, self.params)

    def tail(self, n):
        return 0.0

    def sup(self, n):
        if n <= 0:
            return 1.0
        return self.params.rho * self.R ** (n - 1)


# -- residual checks -------------------------------------------------------


def hardrod_hierarchy_residual(config, params: TonksParams, fd_step: float = 1e-5) -> ResidualReport:
    """d rho_n/dq_1 = chi_L rho_{n+1}(.., q_1 - d) - chi_R rho_{n+1}(.., q_1 + d).

    chi_L (chi_R) is one when a rod placed in contact on the left (right)
    of q_1 overlaps none of q_2..q_n.  The derivative is a central
    difference; the budget is its error estimate (step h against 2h plus
    rounding).
    """
    q = np.atleast_1d(np.asarray(config, dtype=float))
    n = len(q)
    d = params.d
    h = float(fd_step)
    q1, rest = q[0], q[1:]
    dist = np.abs(rest - q1)
    if np.any(dist <= d):
        raise ValueError("configuration must be strictly interior (all distances > d)")
    if n > 1:
        gaps = np.diff(np.sort(q))
        if np.any(gaps <= d):
            raise ValueError("configuration must be strictly interior (all gaps > d)")
    # the contact indicators and rho_2' jump where q_1 is 2d from another rod
    if np.any(np.abs(dist - 2 * d) <= 4 * h):
        raise ValueError("configuration on a gap boundary: derivative is not two-sided")

    def rho_at(shift):
        y = q.copy()
        y[0] += shift
        return tonks_rhon(y, params)

    D1 = (rho_at(h) - rho_at(-h)) / (2 * h)
    D2 = (rho_at(2 * h) - rho_at(-2 * h)) / (4 * h)
    left = q1 - d
    right = q1 + d
    chi_l = bool(np.all(np.abs(rest - left) >= d * (1 - CONTACT_TOL)))
    chi_r = bool(np.all(np.abs(rest - right) >= d * (1 - CONTACT_TOL)))
    rhs = 0.0
    if chi_l:
        rhs += tonks_rhon(np.append(q, left), params)
    if chi_r:
        rhs -= tonks_rhon(np.append(q, right), params)
    res = D1 - rhs
    rho = tonks_rhon(q, params)
    fd_err = abs(D1 - D2) + 100.0 * np.finfo(float).eps * max(rho, 1e-300) / h
    return ResidualReport(
        "hardrod_hierarchy", n, {"config": q, "rho": params.rho, "d": d, "h": h}, res, fd_err,
        {"tail": 0.0, "quad": 0.0, "fd": fd_err},
    )


def extracted_constant_residual(n: int, config, params: TonksParams,
                                quad: QuadSpec = QuadSpec(abs_tol=1e-15, rel_tol=1e-14)) -> ResidualReport:
    """rho_n - R [rho_{n-1}(q_2..) - int_{q_1}^{q_1+d} chi(qb <= q_2 - d) rho_n(qb, q_2, ..) dqb]
    for a left-to-right ordered configuration (rho_0 = 1)."""
    q = np.atleast_1d(np.asarray(config, dtype=float))
    if len(q) != n:
        raise ValueError("config must hold n points")
    if np.any(np.diff(q) < params.d * (1 - CONTACT_TOL)):
        raise ValueError("config must be ordered with gaps >= d")
    d = params.d
    R = tonks_R(params).R
    q1, rest = q[0], q[1:]
    upper = q1 + d if n == 1 else min(q1 + d, rest[0] - d)
    lower = q1

    def integrand(qb):
        qb = np.atleast_1d(qb)
        X = np.concatenate([qb[:, None], np.repeat(rest[None, :], len(qb), axis=0)], axis=1)
        return tonks_rhon_batch(X, params)

    if upper > lower:
        knots = [] if n == 1 else [rest[0] - k * d for k in range(1, int((rest[0] - lower) / d) + 2)]
        res_int = integrate_radial(integrand, quad, support=(lower, upper), breakpoints=knots)
        integral, ierr = res_int.value, res_int.error_estimate
    else:
        integral, ierr = 0.0, 0.0
    prev = tonks_rhon(rest, params) if n > 1 else 1.0
    lhs = tonks_rhon(q, params)
    rhs = R * (prev - integral)
    eps = np.finfo(float).eps
    budget = R * ierr + 64 * eps * (abs(lhs) + R * abs(prev) + R * abs(integral))
    return ResidualReport(
        "extracted_constant", n, {"config": q, "rho": params.rho, "d": d}, lhs - rhs, budget,
        {"tail": 0.0, "quad": R * ierr, "fd": 0.0},
    )


def hc_ks_residual(n: int, config, params: TonksParams, m_max: int = 2, z=None) -> ResidualReport:
    """Hard-core KS equation with the exact correlations and z = R e^{Rd}.

    On the line at most two rods fit pairwise disjoint in the open window
    of length 2d around q_1, so the m-sum stops at m = 2 exactly.  Passing
    ``z`` overrides the exact activity (used to test that a wrong activity
    is caught).
    """
    ev = TonksEvaluator(params)
    rep = ks_residual(n, config, ev.z if z is None else z, ev, m_max=m_max)
    loc = dict(rep.location)
    loc.update(rho=params.rho, d=params.d)
    return ResidualReport("hc_KS", n, loc, rep.residual, rep.budget + 64 * np.finfo(float).eps * ev.z,
                          rep.components)


def hc_activity(params: TonksParams):
    """z from the n = 1 hard-core KS relation, rho / (1 - int rho_1 + 1/2 int int rho_2)."""
    return activity_from_state(TonksEvaluator(params), k_max=2)
