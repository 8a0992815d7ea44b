"""Mayer coefficients, truncated activity series and the activity-density map.

The coefficients follow the recursion (B = 0 for the builtin potentials)

    c_{n,0} = delta_{n,1}
    c_{n,p+1}(q_1..q_n) = exp(-beta W_{q_1}(q_2..q_n)) * [ c_{n-1,p}(q_2..q_n)
        + sum_{k>=1} (-1)^k / k!  int prod_j f(q_1 - y_j) c_{n-1+k,p}(q_2..q_n, y_1..y_k) ]

with f = 1 - exp(-beta phi), and rho_n = z sum_p c_{n,p} z^p.  The k-sum
stops at k = p - n + 2 because c_{m,p} = 0 for p < m - 1.  Every k-fold
integral has a symmetric integrand and is taken over the ordered simplex
y_1 <= ... <= y_k, which absorbs the 1/k!.

On the line the integrals use :func:`kscert.integrate.nested_integral`;
the value is taken at ``quad.panel_level`` and the quadrature error is the
difference with one level coarser.  In two and three dimensions nested
importance-sampled Monte Carlo is used and the error is a replicate
standard error (small orders only).

Uniform bounds (B = 0, I = I_beta):

    |c_{n,p}|     <= I^{-(n-1)} (I e)^p,          p >= n - 1
    |rho_n| tail  <= |z| I^{-(n-1)} r^{P+1} / (1 - r),   r = |z| I e
"""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .integrate import QuadSpec, derive_rng, nested_integral, RadialProposal
from .potential import PairPotential, i_beta, radial_distance

__all__ = [
    "SeriesValue",
    "MayerExpansion",
    "coeff",
    "coeff_bound",
    "bound_from_I",
    "series_tail",
    "rho_series",
    "invert_activity",
    "ActivityResult",
    "activity_from_state",
    "denominator_lower_bound",
    "xi_admissible",
    "IdealGasEvaluator",
    "MayerEvaluator",
    "write_coeff_csv",
    "ConvergenceError",
]

QUANTUM = 1e-9
NEWTON_STEPS = 64
NEWTON_TOL = 1e-12


class ConvergenceError(RuntimeError):
    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


@dataclass(frozen=True)
class SeriesValue:
    value: float
    tail_bound: float
    truncation_order: int
    quad_error: float
    flagged: bool = False

    @property
    def uncertainty(self) -> float:
        return self.tail_bound + self.quad_error


# -- bounds -----------------------------------------------------------------


def bound_from_I(n: int, p: int, I: float) -> float:
    """I^{-(n-1)} (I e)^p written as I^{p-n+1} e^p so that I = 0 is harmless."""
    if p < n - 1:
        return 0.0
    return I ** (p - n + 1) * math.e ** p


def series_tail(n: int, P: int, z: float, I: float) -> float:
    """sum_{p > P} |z|^{p+1} |c_{n,p}| bound in closed geometric form."""
    z = abs(z)
    if z == 0.0:
        return 0.0
    r = z * I * math.e
    if r >= 1.0:
        return math.inf
    p0 = max(P + 1, n - 1)
    return z ** (p0 + 1) * math.e ** p0 * I ** (p0 - n + 1) / (1.0 - r)


def sup_rho_bound(n: int, z: float, I: float) -> float:
    """Bound on |rho_n| (full or truncated series) uniform in the configuration."""
    return series_tail(n, -1, z, I)


def denominator_lower_bound(I: float, xi: float) -> float:
    """1 - I xi e^{I xi}: lower bound of the activity-formula denominator
    for states with rho_k <= xi^k."""
    return 1.0 - I * xi * math.exp(I * xi)


def _as_config(config, nu):
    x = np.asarray(config, dtype=float)
    if nu == 1:
        return x.reshape(-1)
    return x.reshape(-1, nu)


# -- the expansion ----------------------------------------------------------


class MayerExpansion:
    """Mayer coefficients for one (potential, beta, nu) with caching.

    Parameters
    ----------
    pot : PairPotential
        Hard rods are accepted on the line, where the recursion with the
        indicator Mayer function is the hard-core iteration.
    beta : float
    nu : int
    quad : QuadSpec
    P_max : int
        Largest coefficient order served by :meth:`coeff`.
    """

    def __init__(self, pot: PairPotential, beta: float, nu: int = 1, quad: QuadSpec = QuadSpec(), P_max: int = 4):
        if not beta > 0:
            raise ValueError("beta must be > 0")
        if nu not in (1, 2, 3):
            raise ValueError("nu must be 1, 2 or 3")
        if pot.is_singular and nu != 1:
            raise ValueError("hard cores are supported on the line only")
        self.pot = pot
        self.beta = float(beta)
        self.nu = nu
        self.quad = quad
        self.P_max = int(P_max)
        ib = i_beta(pot, beta, nu, quad)
        self.I_value = ib.value
        # bounds use the upper end of the quadrature interval
        self.I = ib.value + ib.error_estimate
        self.radius = pot.effective_radius(beta)
        if pot.is_singular:
            # hard-core integrands are piecewise polynomials of degree <= p;
            # with cuts at the points themselves and at +-d, +-2d every panel
            # is polynomial and a single 16-point panel is exact
            self.radii = pot.diameter * np.arange(0, 3)
        else:
            self.radii = np.asarray(pot.kink_radii, dtype=float)
        self.center_radii = pot.panel_radii(beta)
        self._c1 = {}
        self._cache = {}
        self._lock = threading.Lock()
        self.rows = 0

    # Mayer weight and Boltzmann factors on signed separations
    def _weight(self, diff):
        return self.pot.mayer_r(np.abs(diff), self.beta)

    def _boltz(self, q1, rest):
        if rest.shape[1] == 0:
            return np.ones(len(q1))
        return np.prod(self.pot.boltzmann_r(np.abs(q1[:, None] - rest), self.beta), axis=1)

    # -- batch recursion on the line -------------------------------------

    def batch(self, n: int, p: int, X, level: Optional[int] = None, hat: bool = False):
        """c_{n,p} on the rows of X (shape (B, n)).  With ``hat`` the factor
        exp(-beta W_{q_1}) is left out, giving the bracket of the recursion."""
        if self.nu != 1:
            raise ValueError("batch recursion is for nu = 1")
        level = self.quad.panel_level if level is None else level
        if self.pot.is_singular:
            level = 0
        X = np.asarray(X, dtype=float).reshape(-1, n)
        B = X.shape[0]
        if p < n - 1:
            return np.zeros(B)
        if p == 0:
            return np.ones(B) if n == 1 else np.zeros(B)
        if n == 1 and (level, p) in self._c1:
            return np.full(B, self._c1[(level, p)])
        if n == 1:
            # translation invariance: c_{1,p} is a constant, one row suffices
            X = np.zeros((1, 1))
        self.rows += X.shape[0]
        q1 = X[:, 0]
        rest = X[:, 1:]
        acc = self.batch(n - 1, p - 1, rest, level) if n > 1 else np.zeros(len(q1))
        for k in range(1, p - n + 2):
            def integrand(idx, Y, k=k):
                return self.batch(n - 1 + k, p - 1, np.concatenate([rest[idx], Y], axis=1), level)

            s = nested_integral(
                q1, rest, k, self.radius, self.radii, level, self._weight, integrand,
                ordered=True, center_radii=self.center_radii,
            )
            acc = acc + (-1) ** k * s
        if n == 1:
            with self._lock:
                self._c1[(level, p)] = float(acc[0])
            return np.full(B, acc[0])
        if hat:
            return acc
        return self._boltz(q1, rest) * acc

    # -- Monte Carlo recursion in two and three dimensions ------------------

    def _proposal(self):
        if not hasattr(self, "_prop"):
            self._prop = RadialProposal(
                lambda r: self.pot.mayer_r(r, self.beta), max(self.radius, 1e-300), self.nu
            )
        return self._prop

    def _mc_batch(self, n, p, X, rng, samples, hat=False):
        B = X.shape[0]
        if p < n - 1:
            return np.zeros(B)
        if p == 0:
            return np.ones(B) if n == 1 else np.zeros(B)
        q1 = X[:, 0, :]
        rest = X[:, 1:, :]
        acc = self._mc_batch(n - 1, p - 1, rest, rng, samples) if n > 1 else np.zeros(B)
        prop = self._proposal()
        for k in range(1, p - n + 2):
            ys = prop.sample(rng, B * samples * k).reshape(B * samples, k, self.nu)
            dens = np.prod(prop.pdf(ys), axis=1)
            rows = np.repeat(np.arange(B), samples)
            w = np.prod(self.pot.mayer_r(np.linalg.norm(ys, axis=-1), self.beta), axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(dens > 0, w / dens, 0.0)
            pts = q1[rows][:, None, :] + ys
            inner = self._mc_batch(n - 1 + k, p - 1, np.concatenate([rest[rows], pts], axis=1), rng, samples)
            est = np.bincount(rows, weights=w * inner, minlength=B) / samples
            acc = acc + (-1) ** k / math.factorial(k) * est
        if hat or n == 1:
            return acc
        d = radial_distance(q1[:, None, :] - rest)
        return np.prod(self.pot.boltzmann_r(d, self.beta), axis=1) * acc

    def _mc_coeff(self, n, p, X, hat=False):
        q = self.quad
        label = "coeff/%d/%d/%s" % (n, p, np.round(X / QUANTUM).astype(np.int64).tobytes().hex())
        reps = []
        samples = max(2, int(round(q.mc_samples ** (1.0 / max(1, p)))))
        for rep in range(q.mc_replicates):
            rng = derive_rng(q.seed, f"{label}/{rep}")
            reps.append(self._mc_batch(n, p, X[None], rng, samples, hat)[0])
        reps = np.array(reps)
        return float(reps.mean()), float(reps.std(ddof=1) / math.sqrt(len(reps)))

    # -- single coefficients ---------------------------------------------

    def canonical(self, config):
        x = _as_config(config, self.nu)
        x = x - x[0]
        return x

    def coeff_with_error(self, n: int, p: int, config=None, hat: bool = False):
        """(value, quadrature error) of c_{n,p} at one configuration."""
        if n < 1 or p < 0:
            raise ValueError("need n >= 1 and p >= 0")
        if p > self.P_max + 1:
            raise ValueError(f"order p={p} exceeds P_max={self.P_max}")
        if config is None:
            config = np.zeros((n,) if self.nu == 1 else (n, self.nu))
        x = self.canonical(config)
        if len(x) != n:
            raise ValueError("config must hold n points")
        if p < n - 1:
            return 0.0, 0.0
        if p == 0:
            return (1.0 if n == 1 else 0.0), 0.0
        key = (n, p, hat, tuple(np.round(np.ravel(x) / QUANTUM).astype(np.int64)))
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        if self.nu == 1:
            L = self.quad.panel_level
            try:
                fine = float(self.batch(n, p, x[None, :], L, hat)[0])
                if self.pot.is_singular:
                    coarse = fine
                else:
                    coarse = float(self.batch(n, p, x[None, :], L - 1, hat)[0])
            except Exception as exc:
                raise RuntimeError(f"coefficient c_{{{n},{p}}} at {x.tolist()} failed: {exc}") from exc
            # roundoff allowance grows with the nesting depth
            out = (fine, abs(fine - coarse) + 1e-14 * (p + 1) * abs(fine))
        else:
            out = self._mc_coeff(n, p, x, hat)
        with self._lock:
            self._cache.setdefault(key, out)
        return out

    def coeff(self, n: int, p: int, config=None) -> float:
        return self.coeff_with_error(n, p, config)[0]

    def coeff_bound(self, n: int, p: int) -> float:
        return bound_from_I(n, p, self.I)

    @property
    def z_radius(self) -> float:
        """Activity radius (I e)^{-1} of the certified expansion."""
        return math.inf if self.I == 0 else 1.0 / (self.I * math.e)

    def xi_admissible(self) -> float:
        return math.inf if self.I == 0 else 1.0 / (2.0 * self.I * math.e)

    def rho_series(self, n: int, config, z: float, P: Optional[int] = None) -> SeriesValue:
        P = self.P_max if P is None else int(P)
        if P > self.P_max:
            raise ValueError(f"P={P} exceeds P_max={self.P_max}")
        tail = series_tail(n, P, z, self.I)
        flagged = not math.isfinite(tail)
        value = 0.0
        qerr = 0.0
        for p in range(max(0, n - 1), P + 1):
            c, e = self.coeff_with_error(n, p, config)
            value += c * z ** (p + 1)
            qerr += e * abs(z) ** (p + 1)
        return SeriesValue(value, tail, P, qerr, flagged)

    def rho1_poly(self, P: Optional[int] = None):
        """Coefficients c_{1,0..P} and their quadrature errors."""
        P = self.P_max if P is None else P
        vals = [self.coeff_with_error(1, p) for p in range(P + 1)]
        return np.array([v for v, _ in vals]), np.array([e for _, e in vals])


# -- functional wrappers ----------------------------------------------------

_EXPANSIONS = {}
_EXP_LOCK = threading.Lock()


def _expansion(pot, beta, nu, quad, P_max=4) -> MayerExpansion:
    key = (pot, float(beta), nu, quad, P_max)
    with _EXP_LOCK:
        exp = _EXPANSIONS.get(key)
        if exp is None:
            exp = _EXPANSIONS[key] = MayerExpansion(pot, beta, nu, quad, P_max)
    return exp


def coeff(n, p, config, beta, pot, quad: QuadSpec = QuadSpec(), nu: int = 1, P_max: int = 4) -> float:
    return _expansion(pot, beta, nu, quad, max(P_max, p)).coeff(n, p, config)


def coeff_bound(n: int, p: int, beta: float, pot: PairPotential, nu: int = 1, quad: QuadSpec = QuadSpec()) -> float:
    ib = i_beta(pot, beta, nu, quad)
    return bound_from_I(n, p, ib.value + ib.error_estimate)


def xi_admissible(beta: float, pot: PairPotential, nu: int = 1, quad: QuadSpec = QuadSpec()) -> float:
    """(2 I_beta e)^{-1}, the density-scale bound under which the activity
    formula denominator stays above 1/2."""
    ib = i_beta(pot, beta, nu, quad)
    I = ib.value + ib.error_estimate
    return math.inf if I == 0 else 1.0 / (2.0 * I * math.e)


def rho_series(n, config, z, P, beta, pot, quad: QuadSpec = QuadSpec(), nu: int = 1) -> SeriesValue:
    return _expansion(pot, beta, nu, quad, max(4, P)).rho_series(n, config, z, P)


def invert_activity(rho_target, beta, pot, P: int = 4, quad: QuadSpec = QuadSpec(), nu: int = 1, expansion=None):
    """Activity z with sum_{p<=P} c_{1,p} z^{p+1} = rho_target (Newton from z = rho).

    Returns ``(z, uncertainty)`` where the uncertainty propagates the series
    tail and quadrature error of rho(z) through 1/rho'(z).
    """
    exp = expansion if expansion is not None else _expansion(pot, beta, nu, quad, max(4, P))
    c, e = exp.rho1_poly(P)
    rho_target = float(rho_target)
    if rho_target == 0.0:
        return 0.0, 0.0
    poly = np.polynomial.Polynomial(np.concatenate([[0.0], c]))
    dpoly = poly.deriv()
    z = rho_target
    for _ in range(NEWTON_STEPS):
        slope = dpoly(z)
        if slope == 0 or not math.isfinite(slope):
            raise ConvergenceError("zero or non-finite slope in Newton iteration", z)
        dz = (poly(z) - rho_target) / slope
        z -= dz
        if abs(dz) < NEWTON_TOL:
            break
    else:
        raise ConvergenceError("Newton did not converge in %d steps" % NEWTON_STEPS, z)
    series_unc = series_tail(1, P, z, exp.I) + float(np.sum(e * np.abs(z) ** np.arange(1, P + 2)))
    resid = abs(poly(z) - rho_target)
    if not resid <= series_unc + 1e-14 * abs(rho_target):
        raise ConvergenceError("residual exceeds the series uncertainty", z)
    return float(z), float(series_unc / abs(dpoly(z)))


# -- evaluators ---------------------------------------------------------------


class IdealGasEvaluator:
    """rho_n = rho^n, exact; with a vanishing Mayer function z = rho."""

    hard_core = False
    max_cluster = math.inf

    def __init__(self, rho: float, pot: Optional[PairPotential] = None, beta: float = 1.0, nu: int = 1):
        self.rho = float(rho)
        self.z = self.rho
        self.pot = pot if pot is not None else PairPotential.gaussian_bump(0.0)
        self.beta = beta
        self.nu = nu
        self.xi = self.rho
        self.levels = (1, 0)

    def rho_n(self, X, level=None):
        X = np.asarray(X, dtype=float)
        return np.full(X.shape[0], self.rho ** X.shape[1])

    def rho_hat(self, X, level=None):
        return self.rho_n(X, level)

    def tail(self, n):
        return 0.0

    def sup(self, n):
        return self.rho ** n


class MayerEvaluator:
    """Truncated activity series as a correlation-function supplier.

    ``rho_n(X, level)`` evaluates rho_n on the rows of X (shape (B, n)) at
    a panel level; ``tail(n)`` is the uniform bound on the omitted orders
    and ``sup(n)`` bounds |rho_n| itself.
    """

    hard_core = False
    max_cluster = math.inf

    def __init__(self, expansion: MayerExpansion, z: float, P: Optional[int] = None):
        if expansion.nu != 1:
            raise ValueError("series evaluators on grids are implemented for nu = 1")
        self.exp = expansion
        self.z = float(z)
        self.P = expansion.P_max if P is None else int(P)
        self.pot = expansion.pot
        self.beta = expansion.beta
        self.nu = 1
        L = expansion.quad.panel_level
        self.levels = (L, L - 1)
        r = abs(self.z) * expansion.I * math.e
        self.flagged = r >= 1.0
        self.hard_core = expansion.pot.is_singular
        self.max_cluster = 2 if self.hard_core else math.inf
        # rho_k <= xi^k up to the constant 1/(1-r)
        self.xi = abs(self.z) * math.e / (1.0 - r) if r < 1 else math.inf

    def _sum(self, X, level, hat):
        X = np.asarray(X, dtype=float)
        n = X.shape[1]
        X = X - X[:, :1]
        out = np.zeros(X.shape[0])
        for p in range(max(0, n - 1), self.P + 1):
            out += self.z ** (p + 1) * self.exp.batch(n, p, X, level, hat=hat)
        return out

    def rho_n(self, X, level=None):
        return self._sum(X, self.levels[0] if level is None else level, False)

    def rho_hat(self, X, level=None):
        return self._sum(X, self.levels[0] if level is None else level, True)

    def tail(self, n):
        return series_tail(n, self.P, self.z, self.exp.I)

    def sup(self, n):
        return sup_rho_bound(n, self.z, self.exp.I)


class ActivityResult(NamedTuple):
    z: float
    denominator: float
    z_error: float
    denominator_error: float


def activity_from_state(evaluator, beta=None, pot=None, k_max: int = 3, quad: QuadSpec = QuadSpec(), I=None):
    """z = rho / [1 + sum_{k=1}^{k_max} (-1)^k/k! int prod f(y_j) rho_k(y)].

    The integrals are taken with the nested panel rule at the evaluator's
    two levels; the error collects their difference, the evaluator's own
    uncertainty and the omitted k > k_max terms, bounded by
    sum I^k sup(rho_k) / k!.  Raises if the denominator is not positive
    within its uncertainty.
    """
    pot = evaluator.pot if pot is None else pot
    beta = evaluator.beta if beta is None else beta
    if I is None:
        ib = i_beta(pot, beta, 1, quad)
        I = ib.value + ib.error_estimate
    radius = pot.effective_radius(beta)
    radii = getattr(evaluator, "radii", None)
    if radii is None and pot.is_singular:
        radii = pot.diameter * np.arange(0, k_max + 3)
    elif radii is None:
        radii = np.asarray(pot.kink_radii, dtype=float)

    def weight(diff):
        return pot.mayer_r(np.abs(diff), beta)

    dens = []
    for level in evaluator.levels:
        total = 1.0
        for k in range(1, k_max + 1):
            def integrand(idx, Y, level=level):
                return evaluator.rho_n(Y, level)

            s = nested_integral(np.zeros(1), np.empty((1, 0)), k, radius, radii, level, weight,
                                integrand, ordered=True, center_radii=pot.panel_radii(beta))[0]
            total += (-1) ** k * s
        dens.append(total)
    den = dens[0]
    quad_err = abs(dens[0] - dens[1])
    unc = sum(I ** k / math.factorial(k) * evaluator.tail(k) for k in range(1, k_max + 1))
    cut = 0.0
    if k_max < evaluator.max_cluster:
        k = k_max + 1
        while True:
            term = I ** k / math.factorial(k) * evaluator.sup(k)
            cut += term
            if term < 1e-17 * max(cut, 1e-300) or k > k_max + 200:
                break
            k += 1
    den_err = quad_err + unc + cut + 1e-15
    if not den - den_err > 0:
        raise ArithmeticError(f"activity denominator {den} not positive within {den_err}")
    rho = evaluator.rho_n(np.zeros((1, 1)))[0]
    z = rho / den
    rho_err = evaluator.tail(1)
    z_err = rho_err / den + abs(rho) * den_err / (den * (den - den_err))
    return ActivityResult(float(z), float(den), float(z_err), float(den_err))


# -- output ---------------------------------------------------------------


def write_coeff_csv(stream, expansion: MayerExpansion, entries):
    """CSV rows (n, p, q_2..q_n relative to q_1, value, bound) for the given
    ``(n, p, config)`` entries; numbers carry 17 significant digits."""
    width = max(n for n, _, _ in entries) - 1 if entries else 0
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["n", "p"] + [f"q{j + 2}" for j in range(width)] + ["value", "bound"])
    for n, p, config in entries:
        rel = expansion.canonical(config)[1:]
        rel = list(np.ravel(rel)) + [""] * (width - (n - 1))
        val = expansion.coeff(n, p, config)
        w.writerow([n, p] + [x if x == "" else f"{x:.17g}" for x in rel]
                   + [f"{val:.17g}", f"{expansion.coeff_bound(n, p):.17g}"])
