"""Hard-core limit of the soft-core family.

For phi_eps(r) = (1 - r^2/d^2)^2 / eps on r <= d the Mayer function tends to
the hard-rod indicator as eps -> 0 (for r != d).  This module compares the
series built for each eps with the exact hard-rod answers:

* :func:`limit_sweep` -- rho_2 on a grid away from contact against the
  Tonks pair correlation at the matched density,
* :func:`groeneveld_check` -- rho_n < z^n exp(-beta sum phi) and the
  alternating sign pattern of the coefficients,
* :func:`coeff_limit_check` -- c^(eps)_{n,p} against the hard-core
  coefficients, which come from the same recursion run with the indicator
  Mayer function and exact interval splitting.

Near contact the soft Boltzmann factor differs from the hard one on a
layer of width ~ sqrt(eps/beta), so gaps shrink like sqrt(eps); the
extrapolation to eps = 0 is done in the variable sqrt(eps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .hardrod import TonksParams, density_from_activity, tonks_rho2
from .integrate import QuadSpec
from .mayer import MayerEvaluator, _expansion, invert_activity
from .potential import PairPotential
from .residuals import ResidualReport

__all__ = [
    "SweepPlan",
    "SweepRow",
    "limit_sweep",
    "sweep_summary",
    "groeneveld_check",
    "uniform_bound_check",
    "coeff_limit_check",
    "hardcore_coeff",
    "extrapolate_sqrt",
    "xi_uniform",
    "empirical_rate",
    "DEFAULT_EPSILONS",
]

DEFAULT_EPSILONS = (0.2, 0.1, 0.05)


def _soft(eps, d, beta, quad, P):
    return _expansion(PairPotential.soft_core(d, eps), beta, 1, quad, P)


def _hard(d, quad, P):
    # beta drops out for hard cores
    return _expansion(PairPotential.hard_rod(d), 1.0, 1, quad, P)


@dataclass(frozen=True)
class SweepPlan:
    epsilons: Sequence[float] = DEFAULT_EPSILONS
    x_min: float = 1.05
    x_max: float = 3.0
    points: int = 12
    drive: str = "z"
    z: float = 0.05
    rho: Optional[float] = None
    P: int = 4
    d: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        eps = list(self.epsilons)
        if any(not e > 0 for e in eps):
            raise ValueError("epsilons must be > 0")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilons must be strictly decreasing")
        if not self.x_min > self.d:
            raise ValueError("the grid must stay strictly away from contact (x_min > d)")
        if not self.x_max >= self.x_min or self.points < 1:
            raise ValueError("bad grid")
        if self.drive not in ("z", "rho"):
            raise ValueError("drive must be 'z' or 'rho'")
        if self.drive == "rho" and not (self.rho and self.rho > 0):
            raise ValueError("fixed-rho mode needs rho > 0")
        if self.drive == "z" and not self.z > 0:
            raise ValueError("z must be > 0")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.points)


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    x: float
    z: float
    rho2_eps: float
    rho2_hard: float
    abs_error: float
    budget: float
    flagged: bool


def limit_sweep(plan: SweepPlan, quad: QuadSpec = QuadSpec()) -> list:
    """rho_2^(eps) on the grid against the Tonks rho_2 at the matched density.

    In fixed-z mode the hard-rod density is the one belonging to z; in
    fixed-rho mode each eps gets its own z from the truncated series.  The
    budget of a row is the series uncertainty (tail + quadrature) of
    rho_2^(eps), plus that of the inverted z in fixed-rho mode.
    """
    rows = []
    x = plan.grid
    for eps in plan.epsilons:
        exp = _soft(eps, plan.d, plan.beta, quad, plan.P)
        z_unc = 0.0
        if plan.drive == "z":
            z = plan.z
            rho = density_from_activity(z, plan.d)
        else:
            rho = plan.rho
            z, z_unc = invert_activity(rho, plan.beta, exp.pot, plan.P, quad, expansion=exp)
        flagged = not abs(z) < exp.z_radius
        ev = MayerEvaluator(exp, z, plan.P)
        X = np.stack([np.zeros_like(x), x], axis=1)
        if flagged:
            fine = np.full(len(x), np.nan)
            budget = np.full(len(x), np.inf)
        else:
            fine = ev.rho_n(X, ev.levels[0])
            coarse = ev.rho_n(X, ev.levels[1])
            # |d rho_2 / dz| <= 2 sup(2)/|z| * (1/(1-r)) keeps the z error honest
            r = abs(z) * exp.I * math.e
            dz_term = z_unc * 2.0 * ev.sup(2) / abs(z) / (1.0 - r) if z_unc else 0.0
            budget = ev.tail(2) + np.abs(fine - coarse) + dz_term
        hard = tonks_rho2(x, TonksParams(rho, plan.d))
        for xi, f, h, b in zip(x, fine, hard, budget):
            rows.append(SweepRow(float(eps), float(xi), float(z), float(f), float(h),
                                 float(abs(f - h)), float(b), flagged))
    return rows


def sweep_summary(rows) -> list:
    """Per-eps (epsilon, z, sup_error, budget, flagged) in input order."""
    out = []
    seen = []
    for r in rows:
        if r.epsilon not in seen:
            seen.append(r.epsilon)
    for eps in seen:
        sel = [r for r in rows if r.epsilon == eps]
        out.append({
            "epsilon": eps,
            "z": sel[0].z,
            "sup_error": max(r.abs_error for r in sel),
            "budget": max(r.budget for r in sel),
            "flagged": any(r.flagged for r in sel),
        })
    return out


def empirical_rate(summary) -> float:
    """Least-squares slope of log(sup_error) against log(eps)."""
    pts = [(math.log(s["epsilon"]), math.log(s["sup_error"])) for s in summary
           if s["sup_error"] > 0 and not s["flagged"]]
    if len(pts) < 2:
        return math.nan
    a = np.array(pts)
    return float(np.polyfit(a[:, 0], a[:, 1], 1)[0])


def _signs_ok(exp, n, config, P):
    """(-1)^{p-n+1} c_{n,p} >= 0 for n-1 <= p <= P, up to quadrature error."""
    bad = []
    for p in range(max(0, n - 1), P + 1):
        c, err = exp.coeff_with_error(n, p, config)
        if (-1) ** (p - n + 1) * c < -err:
            bad.append(p)
    return not bad, bad


def _tail_weight(pot, x, beta):
    """exp(-beta max_i W_i): every c_{n,p} with p >= 1 carries the factor
    exp(-beta W_{q_1}) and the recursion may be anchored at any particle."""
    n = len(x)
    if n < 2:
        return 1.0
    phi = pot.phi_r(np.abs(x[:, None] - x[None, :]))
    np.fill_diagonal(phi, 0.0)
    return math.exp(-beta * float(np.max(np.sum(phi, axis=1))))


def groeneveld_check(n: int, config, epsilon: float, z: float, P: int = 4,
                     quad: QuadSpec = QuadSpec(), d: float = 1.0, beta: float = 1.0) -> ResidualReport:
    """Upper bound rho_n < z^n exp(-beta sum_{i<j} phi_eps(q_i - q_j)).

    The series value plus its whole uncertainty must stay strictly below
    the bound; the residual is the violation (zero when the bound holds).
    For n >= 2 the tail carries the factor exp(-beta max_i W_i), see
    :func:`_tail_weight`.  The coefficient sign pattern is
    checked as well and a wrong sign turns the report into a failure.
    """
    exp = _soft(epsilon, d, beta, quad, max(P, 4))
    x = np.atleast_1d(np.asarray(config, dtype=float))
    if len(x) != n:
        raise ValueError("config must hold n points")
    sv = exp.rho_series(n, x, z, P)
    pot = exp.pot
    diffs = np.abs(x[:, None] - x[None, :])[np.triu_indices(n, 1)]
    total_phi = float(np.sum(pot.phi_r(diffs))) if n > 1 else 0.0
    bound = z ** n * math.exp(-beta * total_phi)
    tail = sv.tail_bound * _tail_weight(pot, x, beta)
    upper = sv.value + tail + sv.quad_error
    ok, bad = _signs_ok(exp, n, x, P)
    violation = max(0.0, upper - bound)
    if not upper < bound:
        violation = max(violation, np.finfo(float).tiny * 2)
    if not ok:
        violation = max(violation, abs(bound) + 1.0)
    return ResidualReport(
        "tail_bound", n,
        {"config": x, "epsilon": epsilon, "z": z, "value": sv.value, "bound": bound,
         "signs_ok": ok, "bad_orders": bad},
        violation, np.finfo(float).tiny,
        {"tail": tail, "quad": sv.quad_error, "fd": 0.0},
    )


def xi_uniform(eps_list: Sequence[float] = DEFAULT_EPSILONS, d: float = 1.0, beta: float = 1.0,
               quad: QuadSpec = QuadSpec()) -> float:
    """One xi admissible for every eps in the list: (2 e sup_eps I_beta)^{-1}."""
    if not len(eps_list):
        raise ValueError("empty eps list")
    I = max(_soft(e, d, beta, quad, 4).I for e in eps_list)
    return 1.0 / (2.0 * math.e * I)


def uniform_bound_check(n: int, config, epsilon: float, z: float, xi: float, P: int = 4,
                        quad: QuadSpec = QuadSpec(), d: float = 1.0, beta: float = 1.0) -> bool:
    """rho_n^(eps) <= (2 xi)^n exp(-beta sum phi_eps) including the series uncertainty."""
    exp = _soft(epsilon, d, beta, quad, max(P, 4))
    x = np.atleast_1d(np.asarray(config, dtype=float))
    sv = exp.rho_series(n, x, z, P)
    diffs = np.abs(x[:, None] - x[None, :])[np.triu_indices(n, 1)]
    bound = (2 * xi) ** n * math.exp(-beta * float(np.sum(exp.pot.phi_r(diffs))))
    return bool(sv.value + sv.tail_bound * _tail_weight(exp.pot, x, beta) + sv.quad_error <= bound)


def hardcore_coeff(n: int, p: int, config=None, d: float = 1.0, quad: QuadSpec = QuadSpec()):
    """(value, error) of the hard-core coefficient c^(0)_{n,p}.

    The recursion runs with the indicator Mayer function; every integrand
    is piecewise polynomial and the panels are cut at all kinks, so the
    Gauss-Legendre rule is exact up to rounding.
    """
    return _hard(d, quad, max(p, 4)).coeff_with_error(n, p, config)


def extrapolate_sqrt(eps, values):
    """Extrapolate values(eps) to eps = 0 in the variable s = sqrt(eps).

    Returns ``(estimate, residual)``: the estimate uses a + b s + c s^2
    through the three smallest eps and the residual is its distance to the
    two-point linear extrapolant a + b s, a Richardson-type error measure.
    """
    eps = np.asarray(eps, dtype=float)
    v = np.asarray(values, dtype=float)
    order = np.argsort(eps)
    s = np.sqrt(eps[order])
    v = v[order]
    if len(s) < 2:
        raise ValueError("need at least two eps values")
    lin = v[0] - s[0] * (v[1] - v[0]) / (s[1] - s[0])
    if len(s) == 2:
        return float(lin), float("inf")
    A = np.vstack([np.ones(3), s[:3], s[:3] ** 2]).T
    quadfit = np.linalg.solve(A, v[:3])[0]
    return float(quadfit), float(abs(quadfit - lin))


def coeff_limit_check(n: int, p: int, config, eps_list: Sequence[float] = DEFAULT_EPSILONS,
                      quad: QuadSpec = QuadSpec(), d: float = 1.0, beta: float = 1.0) -> dict:
    """Table of c^(eps)_{n,p}, the hard-core c^(0)_{n,p} and their gaps."""
    x = np.atleast_1d(np.asarray(config if config is not None else np.zeros(n), dtype=float))
    if len(x) != n:
        raise ValueError("config must hold n points")
    if n > 1:
        dist = np.abs(x[:, None] - x[None, :])[np.triu_indices(n, 1)]
        if np.any(np.abs(dist - d) <= 1e-9 * d):
            raise ValueError("configuration touches contact |q_i - q_j| = d")
    c0, c0_err = hardcore_coeff(n, p, x, d, quad)
    rows = []
    for eps in eps_list:
        c, err = _soft(eps, d, beta, quad, max(p, 4)).coeff_with_error(n, p, x)
        rows.append({"epsilon": float(eps), "c_eps": c, "c_eps_error": err, "c_hard": c0,
                     "gap": abs(c - c0)})
    out = {"n": n, "p": p, "config": x.tolist(), "c_hard": c0, "c_hard_error": c0_err, "rows": rows}
    if len(rows) >= 2:
        est, resid = extrapolate_sqrt([r["epsilon"] for r in rows], [r["c_eps"] for r in rows])
        out["extrapolated"] = est
        out["extrapolation_residual"] = resid
    return out
