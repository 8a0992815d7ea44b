"""Residual checks of the equilibrium equations with additive error budgets.

Every check plugs correlation functions supplied by an *evaluator* into
one equation and compares the signed residual with a budget made of

* ``tail``  -- bounds on what the evaluator leaves out (series truncation,
  omitted cluster sizes in the integral sums),
* ``quad``  -- quadrature error, measured as the change of each computed
  side between the evaluator's two panel levels,
* ``fd``    -- finite-difference error of numerical gradients.

An evaluator provides ``rho_n(X, level)`` on rows of X (shape (B, n)),
``rho_hat`` (the same without the Boltzmann factor of the first particle),
``tail(n)``, ``sup(n)``, ``levels``, ``z``, ``pot``, ``beta`` and
``max_cluster`` (largest number of points that fit in an interaction ball,
2 for hard rods on the line).  All checks are on the line (nu = 1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .integrate import QuadSpec, nested_integral
from .potential import PairPotential, grad_f_sup, i_beta, j_beta

__all__ = [
    "ResidualReport",
    "ks_residual",
    "ks_symmetric_residual",
    "bbgky_residual",
    "hierarchy_parts",
    "bogolyubov_residual",
    "iteration_tail",
    "iteration_order",
    "cluster_gap",
    "cluster_gap_budget",
    "grad_series_tail",
]

EQUATIONS = ("KS", "KS_symmetric", "BBGKY_positional", "Bogolyubov", "cluster_gap", "tail_bound",
             "hardrod_hierarchy", "extracted_constant", "hc_KS")
_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class ResidualReport:
    equation: str
    n: int
    location: dict
    residual: float
    budget: float
    components: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise ValueError(f"unknown equation {self.equation!r}")
        if not self.budget > 0:
            object.__setattr__(self, "budget", _TINY)

    @property
    def passed(self) -> bool:
        return bool(abs(self.residual) <= self.budget)

    def to_dict(self) -> dict:
        comps = {k: float(self.components.get(k, 0.0)) for k in ("tail", "quad", "fd")}
        return {
            "equation": self.equation,
            "n": int(self.n),
            "location": _plain(self.location),
            "residual": float(self.residual),
            "budget": float(self.budget),
            "pass": self.passed,
            "components": comps,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in np.asarray(obj, dtype=float).tolist()] if np.ndim(obj) else float(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


# -- shared helpers --------------------------------------------------------

# rounding allowance relative to the size of the compared sides
_ROUND = 64 * np.finfo(float).eps


@lru_cache(maxsize=64)
def _constants(pot: PairPotential, beta: float):
    """(I, J, G) upper estimates; J and G are zero for hard cores (unused)."""
    ib = i_beta(pot, beta, 1)
    I = ib.value + ib.error_estimate
    if pot.is_singular:
        return I, 0.0, 0.0
    jb = j_beta(pot, beta, 1)
    return I, jb.value + jb.error_estimate, grad_f_sup(pot, beta)


def _radii(pot, depth):
    if pot.is_singular:
        return pot.diameter * np.arange(0, depth + 3)
    return np.asarray(pot.kink_radii, dtype=float)


def _config(config, n):
    x = np.asarray(config, dtype=float).reshape(-1)
    if len(x) != n:
        raise ValueError(f"config must hold n={n} points on the line")
    if not np.all(np.isfinite(x)):
        raise ValueError("config must be finite")
    return x


def _boltz(pot, beta, q, others):
    if len(others) == 0:
        return 1.0
    return float(np.prod(pot.boltzmann_r(np.abs(q - np.asarray(others)), beta)))


def _ball_sum(evaluator, pot, beta, center, fixed, m, level, fn, weight=None):
    """sum over ordered y_1 <= .. <= y_m near ``center`` of
    prod weight(center - y_j) * fn(Y), fn getting rows (fixed..., y...)."""
    fixed = np.asarray(fixed, dtype=float).reshape(1, -1)

    def integrand(idx, Y):
        return fn(np.concatenate([np.repeat(fixed, len(idx), axis=0), Y], axis=1), level)

    if weight is None:
        def weight(diff):
            return pot.mayer_r(np.abs(diff), beta)

    radii = getattr(evaluator, "radii", None)
    if radii is None:
        radii = _radii(pot, m)
    return float(nested_integral(
        np.array([float(center)]), fixed, m, pot.effective_radius(beta), radii,
        level, weight, integrand, ordered=True, center_radii=pot.panel_radii(beta),
    )[0])


def _omitted(I, evaluator, first_n, m_from, scale=1.0, limit=200):
    """sum_{m >= m_from} I^m/m! sup(first_n + m) (zero past max_cluster)."""
    total = 0.0
    m = m_from
    while m <= min(evaluator.max_cluster, m_from + limit):
        term = I ** m / math.factorial(m) * evaluator.sup(first_n + m)
        total += term
        if term <= 1e-18 * total:
            break
        m += 1
    return scale * total


# -- Kirkwood-Salsburg -----------------------------------------------------


def ks_residual(n, config, z, evaluator, beta=None, pot=None, m_max: int = 3, quad: QuadSpec = QuadSpec()):
    """rho_n - z e^{-beta W_{q1}} [rho_{n-1} + sum_m (-1)^m/m! int prod f(q1 - y_j) rho_{n-1+m}]."""
    pot = evaluator.pot if pot is None else pot
    beta = evaluator.beta if beta is None else beta
    x = _config(config, n)
    q1, rest = x[0], x[1:]
    boltz = _boltz(pot, beta, q1, rest)
    I = _constants(pot, beta)[0]
    sides = []
    for level in evaluator.levels:
        lhs = float(evaluator.rho_n(x[None, :], level)[0])
        inner = float(evaluator.rho_n(rest[None, :], level)[0]) if n > 1 else 1.0
        if boltz > 0.0:
            for m in range(1, m_max + 1):
                if m > evaluator.max_cluster:
                    break
                inner += (-1) ** m * _ball_sum(evaluator, pot, beta, q1, rest, m, level, evaluator.rho_n)
        sides.append((lhs, z * boltz * inner))
    (lhs, rhs), (lhs0, rhs0) = sides
    quad_err = abs(lhs - lhs0) + abs(rhs - rhs0) + _ROUND * (abs(lhs) + abs(rhs))
    tail = evaluator.tail(n) + abs(z) * boltz * (
        (evaluator.tail(n - 1) if n > 1 else 0.0)
        + sum(I ** m / math.factorial(m) * evaluator.tail(n - 1 + m) for m in range(1, m_max + 1))
        + _omitted(I, evaluator, n - 1, m_max + 1)
    )
    return ResidualReport(
        "KS", n, {"config": x, "z": z}, lhs - rhs, tail + quad_err,
        {"tail": tail, "quad": quad_err, "fd": 0.0},
    )


def _sym_side(evaluator, pot, beta, a, b, rest, k_max, level):
    """sum_k (-1)^k/k! int prod f(b - y_j) rho_hat_{n+k}(a; rest, y)."""
    n = len(rest) + 1
    base = np.concatenate([[a], rest])
    total = float(evaluator.rho_hat(base[None, :], level)[0])
    for k in range(1, k_max + 1):
        def fn(rows, lvl, a=a):
            return evaluator.rho_hat(rows, lvl)
        # rows are (a, rest..., y...); integrate around b with a as an anchor
        total += (-1) ** k * _ball_sum(evaluator, pot, beta, b, base, k, level, fn)
    return total


def ks_symmetric_residual(n, config, q0, evaluator, beta=None, pot=None, k_max: int = 3,
                          quad: QuadSpec = QuadSpec()):
    """Two-point form of the KS equations with a free point q0.

    With rho_hat_m(a; ...) = e^{beta W_a(...)} rho_m(a, ...) both sides read

        e^{-beta W_{q0}} e^{-beta W_{q1}} sum_k (-1)^k/k! int prod f(q0 - y_j) rho_hat_{n+k}(q1; q2.., y)

    and its image under q0 <-> q1; the residual is their difference, so it
    vanishes identically at q0 = q1.
    """
    pot = evaluator.pot if pot is None else pot
    beta = evaluator.beta if beta is None else beta
    x = _config(config, n)
    q1, rest = x[0], x[1:]
    q0 = float(np.ravel(q0)[0])
    pref = _boltz(pot, beta, q0, rest) * _boltz(pot, beta, q1, rest)
    I = _constants(pot, beta)[0]
    vals = []
    for level in evaluator.levels:
        lhs = pref * _sym_side(evaluator, pot, beta, q1, q0, rest, k_max, level)
        rhs = pref * _sym_side(evaluator, pot, beta, q0, q1, rest, k_max, level)
        vals.append((lhs, rhs))
    (lhs, rhs), (lhs0, rhs0) = vals
    quad_err = abs(lhs - lhs0) + abs(rhs - rhs0) + _ROUND * (abs(lhs) + abs(rhs))
    per_side = sum(I ** k / math.factorial(k) * evaluator.tail(n + k) for k in range(0, k_max + 1))
    per_side += _omitted(I, evaluator, n, k_max + 1)
    tail = 2.0 * pref * per_side
    return ResidualReport(
        "KS_symmetric", n, {"config": x, "q0": q0, "z": evaluator.z}, lhs - rhs, tail + quad_err,
        {"tail": tail, "quad": quad_err, "fd": 0.0},
    )


# -- positional hierarchy --------------------------------------------------


def grad_series_tail(n: int, P: int, z: float, I: float, J: float, G: float) -> float:
    """Bound on |grad_{q1}| of the omitted orders p > P of rho_n, from
    |grad c_{n,p+1}| <= e (I e)^p [(n-1) G I^{-(n-2)} + J I^{-(n-1)}]."""
    z = abs(z)
    if z == 0.0 or I == 0.0:
        return 0.0
    r = z * I * math.e
    if r >= 1.0:
        return math.inf
    K = (n - 1) * G * I ** (2 - n) + J * I ** (1 - n)
    return K * math.e * z ** (P + 2) * (I * math.e) ** P / (1.0 - r)


def _fd(evaluator, x, h, level):
    def at(shift):
        y = x.copy()
        y[0] += shift
        return float(evaluator.rho_n(y[None, :], level)[0])

    return (at(h) - at(-h)) / (2.0 * h)


def _force(evaluator, pot, beta, x, level):
    """(beta grad W_{q1}(rest) rho_n, beta int grad phi(q1 - y) rho_{n+1}(x, y) dy, grad W)."""
    q1, rest = x[0], x[1:]
    diff = q1 - rest
    gradW = float(np.sum(pot.dphi_r(np.abs(diff)) * np.sign(diff)))
    rho = float(evaluator.rho_n(x[None, :], level)[0])

    def weight(d):
        return beta * pot.dphi_r(np.abs(d)) * np.sign(d)

    integral = _ball_sum(evaluator, pot, beta, q1, x, 1, level, evaluator.rho_n, weight=weight)
    return beta * gradW * rho, integral, gradW


def hierarchy_parts(n, config, evaluator, beta=None, pot=None, fd_step: float = 1e-4, particle: int = 0):
    """Gradient and force terms of the positional hierarchy for one particle.

    Returns a dict with ``grad``, ``force`` (finest level) and the budget
    pieces ``tail``, ``quad``, ``fd``.
    """
    pot = evaluator.pot if pot is None else pot
    beta = evaluator.beta if beta is None else beta
    if pot.is_singular:
        raise ValueError("the smooth hierarchy needs a differentiable potential")
    x = _config(config, n)
    if len(np.unique(x)) != n:
        raise ValueError("configuration points must be pairwise distinct")
    order = [particle] + [i for i in range(n) if i != particle]
    x = x[order]
    h = float(fd_step)
    grads, grads2, wterms, colls = [], [], [], []
    gradW = 0.0
    for level in evaluator.levels:
        grads.append(_fd(evaluator, x, h, level))
        grads2.append(_fd(evaluator, x, 2 * h, level))
        w, c, gradW = _force(evaluator, pot, beta, x, level)
        wterms.append(w)
        colls.append(c)
    I, J, G = _constants(pot, beta)
    P = getattr(evaluator, "P", None)
    boltz = _boltz(pot, beta, x[0], x[1:])
    if P is None:
        tail = 0.0
    else:
        tail = (grad_series_tail(n, P, evaluator.z, I, J, G)
                + beta * abs(gradW) * boltz * evaluator.tail(n) + J * evaluator.tail(n + 1))
    rho_scale = abs(float(evaluator.rho_n(x[None, :], evaluator.levels[0])[0]))
    fd_err = abs(grads[0] - grads2[0]) + 4.0 * np.finfo(float).eps * rho_scale / h
    quad_err = abs(grads[0] - grads[1]) + abs(wterms[0] - wterms[1]) + abs(colls[0] - colls[1])
    return {"grad": grads[0], "w_term": wterms[0], "collision": colls[0], "force": wterms[0] + colls[0],
            "tail": tail, "quad": quad_err, "fd": fd_err, "grad_2h": grads2[0]}


def bbgky_residual(n, config, evaluator, beta=None, pot=None, fd_step: float = 1e-4, quad: QuadSpec = QuadSpec()):
    """grad_{q1} rho_n + beta [grad W_{q1} rho_n + int grad phi(q1 - y) rho_{n+1} dy]
    with a central difference of step h for the gradient."""
    parts = hierarchy_parts(n, config, evaluator, beta, pot, fd_step)
    res = parts["grad"] + parts["force"]
    budget = parts["tail"] + parts["quad"] + parts["fd"]
    return ResidualReport(
        "BBGKY_positional", n, {"config": _config(config, n), "h": fd_step}, res, budget,
        {k: parts[k] for k in ("tail", "quad", "fd")},
    )


def maxwellian(momenta, beta, nu=1) -> float:
    """prod_i exp(-beta p_i^2/2) / (2 pi / beta)^{nu/2}."""
    p = np.asarray(momenta, dtype=float).reshape(-1)
    return float(np.prod(np.exp(-0.5 * beta * p * p) / (2.0 * math.pi / beta) ** (nu / 2)))


def bogolyubov_residual(n, phase_config, evaluator, beta=None, pot=None, quad: QuadSpec = QuadSpec(),
                        fd_step: float = 1e-4, parts=None):
    """Full stationary transport equation for the Maxwellian extension.

    ``phase_config`` is ``(positions, momenta)``.  With rho_bar_n =
    M(p) rho_n, momentum gradients are analytic (-beta p rho_bar) and the
    extra particle's momentum integrates to one, so

        LHS = M sum_i p_i (grad_i rho_n + beta grad_i W rho_n)
        RHS = -M sum_i p_i beta int grad phi(q_i - y) rho_{n+1} dy.

    ``parts`` may carry per-particle :func:`hierarchy_parts` to reuse across
    momenta at the same positions.
    """
    pot = evaluator.pot if pot is None else pot
    beta = evaluator.beta if beta is None else beta
    q, p = phase_config
    x = _config(q, n)
    p = np.asarray(p, dtype=float).reshape(-1)
    if len(p) != n or not np.all(np.isfinite(p)):
        raise ValueError("need n finite momenta")
    if parts is None:
        parts = [hierarchy_parts(n, x, evaluator, beta, pot, fd_step, particle=i) for i in range(n)]
    M = maxwellian(p, beta)
    lhs = 0.0
    rhs = 0.0
    tail = quad_err = fd_err = 0.0
    for i in range(n):
        part = parts[i]
        lhs += M * p[i] * (part["grad"] + part["w_term"])
        rhs -= M * p[i] * part["collision"]
        weight = M * abs(p[i])
        tail += weight * part["tail"]
        quad_err += weight * part["quad"]
        fd_err += weight * part["fd"]
    return ResidualReport(
        "Bogolyubov", n, {"config": x, "momenta": p}, lhs - rhs, tail + quad_err + fd_err,
        {"tail": tail, "quad": quad_err, "fd": fd_err},
    )


# -- tails and clusters ---------------------------------------------------


def iteration_tail(N: int, n: int, q0, q1, beta=None, pot=None, xi: float = 0.0, I=None, J=None) -> float:
    """(1/N!) |q1 - q0| (3 I)^N J xi^{n+1+N}: bound of the remainder after N
    integrations by parts."""
    if I is None or J is None:
        I0, J0, _ = _constants(pot, beta)
        I = I0 if I is None else I
        J = J0 if J is None else J
    dist = float(np.linalg.norm(np.atleast_1d(np.asarray(q1, float) - np.asarray(q0, float))))
    if xi == 0.0 or dist == 0.0 or J == 0.0:
        return 0.0
    if I == 0.0:
        return dist * J * xi ** (n + 1) if N == 0 else 0.0
    logv = (math.log(dist) + N * math.log(3.0 * I) + math.log(J)
            + (n + 1 + N) * math.log(xi) - math.lgamma(N + 1))
    return math.exp(logv)


def iteration_order(tol: float, n: int, q0, q1, xi: float, I: float, J: float, N_max: int = 10_000) -> int:
    """Smallest N with iteration_tail(N) < tol."""
    for N in range(N_max + 1):
        if iteration_tail(N, n, q0, q1, xi=xi, I=I, J=J) < tol:
            return N
    raise RuntimeError("tail did not drop below tol")


def _clusters(nA, nB, s, spacing):
    A = spacing * np.arange(nA)
    B = spacing * np.arange(nB) + s
    return A, B


def cluster_gap(nA: int, nB: int, s: float, evaluator, spacing: float = 1.5) -> float:
    """|rho_{nA+nB}(A, B+s) - rho_{nA}(A) rho_{nB}(B+s)| for evenly spaced
    clusters A = (0, spacing, ...) and B shifted by s."""
    A, B = _clusters(nA, nB, s, spacing)
    lvl = evaluator.levels[0]
    joint = float(evaluator.rho_n(np.concatenate([A, B])[None, :], lvl)[0])
    ra = float(evaluator.rho_n(A[None, :], lvl)[0])
    rb = float(evaluator.rho_n(B[None, :], lvl)[0])
    return abs(joint - ra * rb)


def cluster_gap_budget(nA: int, nB: int, evaluator) -> float:
    """Part of the gap that truncation alone can produce."""
    tA, tB, tAB = evaluator.tail(nA), evaluator.tail(nB), evaluator.tail(nA + nB)
    sA, sB = evaluator.sup(nA), evaluator.sup(nB)
    return tAB + tA * sB + sA * tB + tA * tB
