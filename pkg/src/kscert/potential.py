"""Radial pair potentials, their Mayer functions and the integral constants.

Three families are built in:

    gaussian_bump(A, sigma):  phi(r) = A exp(-r^2 / sigma^2)
    soft_core(d, eps):        phi(r) = (1 - r^2/d^2)^2 / eps   for r <= d, else 0
    hard_rod(d):              phi(r) = inf for r < d, 0 for r >= d

All of them are nonnegative, so the stability constant is B = 0 and the
Mayer function ``f = 1 - exp(-beta phi)`` lies in [0, 1].  The soft core
family converges pointwise to the hard rod as ``eps -> 0`` for ``r != d``.

Positions are arrays whose last axis is the spatial dimension ``nu``; a
bare scalar or 1-d array is read as points on the line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .integrate import QuadResult, QuadSpec, integrate_radial

__all__ = [
    "PairPotential",
    "ThermoState",
    "STABILITY_B",
    "GAUSSIAN_CUTOFF",
    "sphere_area",
    "ball_volume",
    "radial_distance",
    "eval_phi",
    "mayer_f",
    "grad_mayer",
    "i_beta",
    "j_beta",
    "w_energy",
    "grad_w_energy",
    "grad_f_sup",
]

# every builtin potential is nonnegative
STABILITY_B = 0.0

# Gaussian tails are dropped where beta*phi falls below this
GAUSSIAN_CUTOFF = 1e-14

_KINDS = ("gaussian_bump", "soft_core", "hard_rod")


class UnsupportedOperation(ValueError):
    """Raised when a differentiation-based operation meets a hard core."""


def sphere_area(nu: int) -> float:
    """Surface area of the unit sphere in R^nu (2 for nu = 1)."""
    return 2.0 * math.pi ** (nu / 2) / math.gamma(nu / 2)


def ball_volume(radius: float, nu: int) -> float:
    if nu == 1:
        return 2.0 * radius
    return math.pi ** (nu / 2) / math.gamma(nu / 2 + 1) * radius ** nu


def radial_distance(q) -> np.ndarray:
    """|q| along the last axis; scalars and arrays with a trailing axis of
    length one are points on the line."""
    q = np.asarray(q, dtype=float)
    if q.ndim == 0:
        return np.abs(q)
    if q.shape[-1] == 1:
        return np.abs(q[..., 0])
    return np.sqrt(np.sum(q * q, axis=-1))


@dataclass(frozen=True)
class PairPotential:
    """Immutable descriptor of a nonnegative radial pair interaction.

    Use the constructors :meth:`gaussian_bump`, :meth:`soft_core` and
    :meth:`hard_rod` rather than the raw initializer.
    """

    kind: str
    amplitude: float = 0.0
    width: float = 1.0
    diameter: float = 1.0
    sharpness: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "gaussian_bump":
            if not self.amplitude >= 0.0:
                # signed potentials break B = 0 and every bound downstream
                raise ValueError("gaussian_bump amplitude must be >= 0")
            if not self.width > 0.0:
                raise ValueError("gaussian_bump width must be > 0")
        else:
            if not self.diameter > 0.0:
                raise ValueError("diameter must be > 0")
            if self.kind == "soft_core" and not self.sharpness > 0.0:
                raise ValueError("soft_core sharpness eps must be > 0")

    # -- constructors -------------------------------------------------------

    @classmethod
    def gaussian_bump(cls, amplitude: float, width: float = 1.0) -> "PairPotential":
        return cls("gaussian_bump", amplitude=float(amplitude), width=float(width))

    @classmethod
    def soft_core(cls, diameter: float = 1.0, eps: float = 0.1) -> "PairPotential":
        return cls("soft_core", diameter=float(diameter), sharpness=float(eps))

    @classmethod
    def hard_rod(cls, diameter: float = 1.0) -> "PairPotential":
        return cls("hard_rod", diameter=float(diameter))

    @classmethod
    def from_config(cls, block: dict) -> "PairPotential":
        """Build from a config table such as ``{kind = "soft_core", d = 1, eps = 0.05}``."""
        block = dict(block)
        kind = block.pop("kind", None)
        allowed = {
            "gaussian_bump": {"amplitude", "width"},
            "soft_core": {"d", "eps"},
            "hard_rod": {"d"},
        }
        if kind not in allowed:
            raise ValueError(f"unknown potential kind {kind!r}")
        extra = set(block) - allowed[kind]
        if extra:
            raise ValueError(f"unknown keys for {kind}: {sorted(extra)}")
        if kind == "gaussian_bump":
            return cls.gaussian_bump(block.get("amplitude", 1.0), block.get("width", 1.0))
        if kind == "soft_core":
            return cls.soft_core(block.get("d", 1.0), block.get("eps", 0.1))
        return cls.hard_rod(block.get("d", 1.0))

    # -- metadata -----------------------------------------------------------

    @property
    def is_singular(self) -> bool:
        return self.kind == "hard_rod"

    @property
    def support_radius(self) -> float:
        if self.kind == "gaussian_bump":
            return 0.0 if self.amplitude == 0.0 else math.inf
        return self.diameter

    def effective_radius(self, beta: float) -> float:
        """Radius beyond which the Mayer function is dropped (exactly zero
        for compact supports, below ``GAUSSIAN_CUTOFF`` for the Gaussian)."""
        if self.kind != "gaussian_bump":
            return self.diameter
        scale = beta * self.amplitude
        if scale <= GAUSSIAN_CUTOFF:
            return 0.0
        return self.width * math.sqrt(math.log(scale / GAUSSIAN_CUTOFF))

    def cutoff_error(self, beta: float, nu: int = 1) -> float:
        """Bound on the Mayer-function mass discarded beyond the effective radius."""
        if self.kind != "gaussian_bump":
            return 0.0
        rc = self.effective_radius(beta)
        # |f| <= beta*phi; radial tail of A exp(-r^2/s^2) r^(nu-1)
        s = self.width
        tail = 0.5 * s * math.sqrt(math.pi) * math.erfc(rc / s) if nu == 1 else (
            beta * self.amplitude * math.exp(-(rc / s) ** 2) * s * s * (rc + s) ** (nu - 2)
        )
        if nu == 1:
            tail *= 2.0 * beta * self.amplitude
        else:
            tail *= sphere_area(nu)
        return float(tail)

    @property
    def kink_radii(self) -> tuple:
        """Radii at which phi (hence f and exp(-beta phi)) loses smoothness."""
        if self.kind == "gaussian_bump":
            return ()
        return (self.diameter,)

    def panel_radii(self, beta: float) -> tuple:
        """Extra splitting radii around the integration centre only."""
        if self.kind != "gaussian_bump":
            return ()
        rc = self.effective_radius(beta)
        n = int(math.ceil(rc / self.width))
        return tuple(self.width * k for k in range(1, n))

    # -- values ---------------------------------------------------------------

    def phi_r(self, r):
        """phi as a function of the radial distance (vectorized)."""
        r = np.asarray(r, dtype=float)
        if self.kind == "gaussian_bump":
            return self.amplitude * np.exp(-(r / self.width) ** 2)
        if self.kind == "soft_core":
            x = 1.0 - (r / self.diameter) ** 2
            return np.where(r <= self.diameter, x * x / self.sharpness, 0.0)
        return np.where(r < self.diameter, np.inf, 0.0)

    def dphi_r(self, r):
        """Radial derivative d phi / d r (vectorized)."""
        if self.is_singular:
            raise UnsupportedOperation("hard rod potential has no derivative")
        r = np.asarray(r, dtype=float)
        if self.kind == "gaussian_bump":
            s2 = self.width ** 2
            return -2.0 * r / s2 * self.amplitude * np.exp(-r * r / s2)
        d2 = self.diameter ** 2
        x = 1.0 - r * r / d2
        return np.where(r <= self.diameter, -4.0 * r * x / (d2 * self.sharpness), 0.0)

    def mayer_r(self, r, beta: float):
        """1 - exp(-beta phi) on radial distances; indicator of r < d for rods."""
        r = np.asarray(r, dtype=float)
        if self.is_singular:
            return np.where(r < self.diameter, 1.0, 0.0)
        return -np.expm1(-beta * self.phi_r(r))

    def boltzmann_r(self, r, beta: float):
        """exp(-beta phi) on radial distances."""
        r = np.asarray(r, dtype=float)
        if self.is_singular:
            return np.where(r < self.diameter, 0.0, 1.0)
        return np.exp(-beta * self.phi_r(r))

    def dmayer_r(self, r, beta: float):
        """d/dr of the Mayer function, beta phi'(r) exp(-beta phi(r))."""
        r = np.asarray(r, dtype=float)
        return beta * self.dphi_r(r) * np.exp(-beta * self.phi_r(r))

    def describe(self) -> dict:
        if self.kind == "gaussian_bump":
            return {"kind": self.kind, "amplitude": self.amplitude, "width": self.width}
        if self.kind == "soft_core":
            return {"kind": self.kind, "d": self.diameter, "eps": self.sharpness}
        return {"kind": self.kind, "d": self.diameter}


@dataclass(frozen=True)
class ThermoState:
    """Inverse temperature, dimension and one drive (density or activity)."""

    beta: float
    nu: int = 1
    rho: Optional[float] = None
    z: Optional[float] = None

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if self.nu not in (1, 2, 3):
            raise ValueError("nu must be 1, 2 or 3")
        if (self.rho is None) == (self.z is None):
            raise ValueError("give exactly one of rho and z")
        drive = self.rho if self.rho is not None else self.z
        if not drive > 0:
            raise ValueError("the drive (rho or z) must be > 0")


def _check_finite(q):
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("positions must be finite")
    return q


def eval_phi(pot: PairPotential, q):
    """phi(q); +inf inside a hard core, with phi_d(d) = 0."""
    return pot.phi_r(radial_distance(_check_finite(q)))


def mayer_f(pot: PairPotential, beta: float, q):
    if not beta > 0:
        raise ValueError("beta must be > 0")
    return pot.mayer_r(radial_distance(_check_finite(q)), beta)


def grad_mayer(pot: PairPotential, beta: float, q):
    """Gradient of 1 - exp(-beta phi(q)), i.e. beta grad(phi) exp(-beta phi).

    Returns an array shaped like ``q`` (a float for scalar input).
    """
    if pot.is_singular:
        raise UnsupportedOperation("grad_mayer is undefined for a hard core")
    q = _check_finite(q)
    r = radial_distance(q)
    g = pot.dmayer_r(r, beta)
    if q.ndim == 0:
        return float(g * np.sign(q))
    if q.shape[-1] == 1:
        return (g * np.sign(q[..., 0]))[..., None]
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(r[..., None] > 0, q / r[..., None], 0.0)
    return g[..., None] * unit


def _radial_integral(fr, pot, beta, nu, quad, breakpoints=()) -> QuadResult:
    rc = pot.effective_radius(beta)
    if rc == 0.0:
        return QuadResult(0.0, 0.0, 0)
    area = sphere_area(nu)
    res = integrate_radial(
        lambda r: area * fr(r) * r ** (nu - 1),
        quad,
        support=(0.0, rc),
        breakpoints=[b for b in breakpoints if 0.0 < b < rc],
    )
    extra = pot.cutoff_error(beta, nu)
    return QuadResult(res.value, res.error_estimate + extra, res.evaluations, res.converged)


def i_beta(pot: PairPotential, beta: float, nu: int = 1, quad: QuadSpec = QuadSpec()) -> QuadResult:
    """Integral of |1 - exp(-beta phi)| over R^nu (the core volume for rods)."""
    if not beta > 0:
        raise ValueError("beta must be > 0")
    if pot.is_singular:
        return QuadResult(ball_volume(pot.diameter, nu), 0.0, 0)
    return _radial_integral(
        lambda r: np.abs(pot.mayer_r(r, beta)), pot, beta, nu, quad, pot.kink_radii
    )


def j_beta(pot: PairPotential, beta: float, nu: int = 1, quad: QuadSpec = QuadSpec()) -> QuadResult:
    """Integral of |grad(1 - exp(-beta phi))| over R^nu."""
    if pot.is_singular:
        raise UnsupportedOperation("j_beta is undefined for a hard core")
    if not beta > 0:
        raise ValueError("beta must be > 0")
    return _radial_integral(
        lambda r: np.abs(pot.dmayer_r(r, beta)), pot, beta, nu, quad, pot.kink_radii
    )


def grad_f_sup(pot: PairPotential, beta: float) -> float:
    """sup_r |d/dr exp(-beta phi(r))|, bounding beta |grad W| exp(-beta W) per pair."""
    if pot.is_singular:
        raise UnsupportedOperation("hard rods have no gradient bound")
    rc = pot.effective_radius(beta)
    if rc == 0.0:
        return 0.0
    r = np.linspace(0.0, rc, 20001)
    g = np.abs(pot.dmayer_r(r, beta))
    # grid maximum plus a Lipschitz allowance for the grid spacing
    step = r[1] - r[0]
    slope = np.max(np.abs(np.diff(g))) / step
    return float(g.max() + slope * step)


def _as_points(others, nu):
    others = np.asarray(others, dtype=float)
    if others.size == 0:
        return np.zeros((0, nu))
    if nu == 1 and others.ndim <= 1:
        return others.reshape(-1, 1)
    return others.reshape(-1, nu)


def w_energy(pot: PairPotential, q, others) -> float:
    """Sum of phi(q - q_i) over the other particles."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    pts = _as_points(others, q.shape[-1])
    if len(pts) == 0:
        return 0.0
    return float(np.sum(pot.phi_r(radial_distance(q[None, :] - pts))))


def grad_w_energy(pot: PairPotential, q, others) -> np.ndarray:
    """Gradient in q of :func:`w_energy`."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    pts = _as_points(others, q.shape[-1])
    if len(pts) == 0:
        return np.zeros_like(q)
    diff = q[None, :] - pts
    r = radial_distance(diff)
    g = pot.dphi_r(r)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(r[:, None] > 0, diff / r[:, None], 0.0)
    return np.sum(g[:, None] * unit, axis=0)
