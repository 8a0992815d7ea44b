"""Quadrature engines with explicit error accounting.

* :func:`integrate_radial` -- adaptive Gauss-Legendre bisection for a scalar
  integrand on a (possibly infinite) interval, with exact splitting at
  caller-supplied breakpoints.
* :func:`nested_integral` -- the workhorse for iterated Mayer integrals on
  the line.  Each integration variable runs over a window around a centre,
  the window is cut at ``anchor +- radius`` breakpoints and every piece is
  covered by ``2**level`` Gauss-Legendre panels of order 16.  Rows are
  processed in bounded chunks so that deep nestings fit in memory.
* :func:`integrate_cluster` -- user-facing cluster integrals: iterated panels
  with panel doubling on the line, importance-sampled Monte Carlo in 2 and 3
  dimensions.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "QuadSpec",
    "QuadResult",
    "GL_ORDER",
    "integrate_radial",
    "nested_integral",
    "integrate_cluster",
    "RadialProposal",
    "derive_rng",
]

GL_ORDER = 16
_X, _W = np.polynomial.legendre.leggauss(GL_ORDER)
_EPS = np.finfo(float).eps

# rows x nodes handled at once inside nested_integral
CHUNK = 400_000


@dataclass(frozen=True)
class QuadSpec:
    """Tolerances and knobs shared by all engines.

    ``panel_level`` is the finest panel refinement used by the nested line
    engine; its error estimate compares against ``panel_level - 1``.
    ``mc_samples`` and ``mc_replicates`` control the Monte Carlo engine.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_depth: int = 40
    seed: int = 0
    panel_level: int = 1
    mc_samples: int = 4096
    mc_replicates: int = 8

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be > 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.panel_level < 1:
            raise ValueError("panel_level must be >= 1 (the level below it gives the error)")
        if self.mc_replicates < 2 or self.mc_samples < 1:
            raise ValueError("need at least 2 Monte Carlo replicates")

    @classmethod
    def from_config(cls, block: dict) -> "QuadSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(block) - known
        if extra:
            raise ValueError(f"unknown quad keys: {sorted(extra)}")
        return cls(**block)


@dataclass(frozen=True)
class QuadResult:
    value: float
    error_estimate: float
    evaluations: int
    converged: bool = True

    def __post_init__(self):
        if not self.error_estimate >= 0:
            raise ValueError("error estimate must be nonnegative")


def derive_rng(seed: int, label: str) -> np.random.Generator:
    """Independent stream for ``(seed, label)``; stable across runs and threads."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]))


# -- adaptive one-dimensional rule ------------------------------------------


def _map_interval(a, b):
    """Return (g, dg, lo, hi): x = g(t) on [lo, hi] covering [a, b]."""
    if math.isfinite(a) and math.isfinite(b):
        return None, None, a, b
    if math.isfinite(a):
        return (lambda t: a + t / (1.0 - t)), (lambda t: 1.0 / (1.0 - t) ** 2), 0.0, 1.0
    if math.isfinite(b):
        return (lambda t: b - (1.0 - t) / t), (lambda t: 1.0 / t ** 2), 0.0, 1.0
    return (
        lambda t: t / (1.0 - t * t),
        lambda t: (1.0 + t * t) / (1.0 - t * t) ** 2,
        -1.0,
        1.0,
    )


def _gl_panels(f, a, b):
    """GL16 estimates on each panel [a_i, b_i] and on its two halves."""
    m = 0.5 * (a + b)
    lo = np.concatenate([a, a, m])
    hi = np.concatenate([b, m, b])
    half = 0.5 * (hi - lo)
    x = (0.5 * (hi + lo))[:, None] + half[:, None] * _X
    fx = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    vals = half * (fx @ _W)
    absvals = half * (np.abs(fx) @ _W)
    n = len(a)
    whole = vals[:n]
    halves = vals[n : 2 * n] + vals[2 * n :]
    return whole, halves, absvals[n : 2 * n] + absvals[2 * n :], fx.size


def integrate_radial(
    f: Callable,
    spec: QuadSpec = QuadSpec(),
    support: tuple = (-math.inf, math.inf),
    breakpoints: Sequence[float] = (),
) -> QuadResult:
    """Integrate a vectorized scalar function over ``support``.

    Panels are bisected until the sum of panel errors (|whole - halves|)
    meets ``max(abs_tol, rel_tol * |value|)``; each panel is first cut at
    every breakpoint lying strictly inside the support, so jumps and kinks
    at known places cost nothing.  Infinite ends are mapped to a finite
    interval by a rational substitution.
    """
    a, b = float(support[0]), float(support[1])
    if not a < b:
        return QuadResult(0.0, 0.0, 0)
    pts = sorted({float(p) for p in breakpoints if a < p < b})
    edges = [a] + pts + [b]
    total = 0.0
    total_err = 0.0
    evals = 0
    converged = True
    pieces = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        g, dg, tlo, thi = _map_interval(lo, hi)
        if g is None:
            fun = f
        else:
            def fun(t, g=g, dg=dg):
                t = np.asarray(t, dtype=float)
                with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                    v = np.asarray(f(g(t)), dtype=float) * dg(t)
                return np.where(np.isfinite(v), v, 0.0)
        pieces.append((fun, tlo, thi))

    span = sum(hi - lo for _, lo, hi in pieces)
    for fun, lo, hi in pieces:
        val, err, mass, n, ok = _adapt(fun, lo, hi, spec, span)
        total += val
        total_err += err
        evals += n
        converged &= ok
    return QuadResult(float(total), float(total_err), evals, converged)


def _adapt(fun, lo, hi, spec, span):
    tol = spec.abs_tol
    a = np.array([lo])
    b = np.array([hi])
    done_val = 0.0
    done_err = 0.0
    done_mass = 0.0
    evals = 0
    depth = 0
    scale = 0.0
    forced = False
    while len(a):
        whole, halves, mass, n = _gl_panels(fun, a, b)
        evals += n
        err = np.abs(whole - halves)
        scale = max(scale, abs(done_val + halves.sum()))
        tol = max(spec.abs_tol, spec.rel_tol * scale)
        local = tol * (b - a) / span
        ok = err <= local
        if depth >= spec.max_depth and not ok.all():
            forced = True
            ok[:] = True
        done_val += halves[ok].sum()
        done_err += err[ok].sum()
        done_mass += mass[ok].sum()
        m = 0.5 * (a + b)
        a, b = np.concatenate([a[~ok], m[~ok]]), np.concatenate([m[~ok], b[~ok]])
        depth += 1
    # roundoff floor on the accumulated panel sums
    floor = 50.0 * _EPS * done_mass
    return done_val, done_err + floor, done_mass, evals, not forced


# -- nested panels on the line ---------------------------------------------


def _breaks(lo, hi, anchors, radii):
    """Per-row sorted breakpoints ``anchors +- radii`` inside (lo, hi)."""
    rows = len(lo)
    if anchors.shape[1] and len(radii):
        r = np.concatenate([radii, -radii])
        pts = (anchors[:, :, None] + r[None, None, :]).reshape(rows, -1)
    else:
        pts = np.empty((rows, 0))
    inside = (pts > lo[:, None]) & (pts < hi[:, None])
    pts = np.where(inside, pts, hi[:, None])
    pts.sort(axis=1)
    keep = int(inside.sum(axis=1).max()) if pts.shape[1] else 0
    return np.concatenate([lo[:, None], pts[:, :keep], hi[:, None]], axis=1)


def _panel_nodes(edges, level):
    a = edges[:, :-1]
    b = edges[:, 1:]
    s = 2 ** level
    t = np.arange(s + 1) / s
    grid = a[:, :, None] + (b - a)[:, :, None] * t
    lo = grid[:, :, :-1]
    hi = grid[:, :, 1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = mid[..., None] + half[..., None] * _X
    w = half[..., None] * _W
    rows = edges.shape[0]
    return nodes.reshape(rows, -1), w.reshape(rows, -1)


def nested_integral(
    center,
    anchors,
    k: int,
    radius: float,
    radii,
    level: int,
    weight: Callable,
    integrand: Callable,
    ordered: bool = True,
    center_radii=(),
    _Y=None,
    _idx=None,
):
    """Row-wise k-fold integral on the line.

    For every row ``i`` computes

        sum over y_1 <= ... <= y_k (if ordered) in [c_i - radius, c_i + radius]
            of  prod_j weight(c_i - y_j) * integrand(idx, Y)

    where ``integrand(idx, Y)`` receives the originating row indices and the
    (rows, k) node matrix.  Breakpoints are put at ``a +- r`` for ``a`` in
    the row's anchors, the centre and the already chosen y's, ``r`` in
    ``radii``; ``center_radii`` adds breakpoints around the centre only.
    With ``ordered=True`` the integral runs over the ordered simplex, which
    equals the full integral divided by k! for symmetric integrands.
    """
    center = np.asarray(center, dtype=float)
    anchors = np.asarray(anchors, dtype=float).reshape(len(center), -1) if _Y is None else anchors
    radii = np.asarray(radii, dtype=float)
    if _Y is None:
        _Y = np.empty((len(center), 0))
        _idx = np.arange(len(center))
    if k == 0:
        return integrand(_idx, _Y)
    rows = len(center)
    out = np.empty(rows)
    if rows == 0:
        return out
    c_radii = np.asarray(center_radii, dtype=float)
    n_anch = anchors.shape[1] + _Y.shape[1] + 1
    npan = (2 * len(radii) * n_anch + 2 * len(c_radii) + 1) * 2 ** level * GL_ORDER
    step = max(1, CHUNK // npan)
    for s in range(0, rows, step):
        sl = slice(s, s + step)
        c = center[sl]
        Ys = _Y[sl]
        ids = _idx[sl]
        lo = c - radius
        if ordered and Ys.shape[1]:
            lo = np.maximum(lo, Ys[:, -1])
        hi = c + radius
        anc = np.concatenate([anchors[ids], Ys, c[:, None]], axis=1)
        edges = _breaks(lo, hi, anc, radii)
        if len(c_radii):
            extra = _breaks(lo, hi, c[:, None], c_radii)[:, 1:-1]
            edges = np.sort(np.concatenate([edges, extra], axis=1), axis=1)
        nodes, w = _panel_nodes(np.maximum(edges, lo[:, None]), level)
        w = w * weight(c[:, None] - nodes)
        rr, cc = np.nonzero(w)
        Y2 = np.concatenate([Ys[rr], nodes[rr, cc][:, None]], axis=1)
        vals = nested_integral(
            c[rr], anchors, k - 1, radius, radii, level, weight, integrand,
            ordered, center_radii, Y2, ids[rr],
        )
        out[sl] = np.bincount(rr, weights=w[rr, cc] * vals, minlength=len(c))
    return out


# -- Monte Carlo in two and three dimensions --------------------------------


class RadialProposal:
    """Sampler on the ball of ``radius`` with radial density ~ |profile(r)|.

    The radial CDF is tabulated at ``knots`` points and inverted by linear
    interpolation, so the sampled density is piecewise constant in r and is
    known exactly; a 10% uniform-in-ball component keeps weights bounded.
    """

    def __init__(self, profile: Callable, radius: float, nu: int, knots: int = 1024, mix: float = 0.1):
        if nu not in (2, 3):
            raise ValueError("RadialProposal is for nu in {2, 3}")
        self.nu = nu
        self.radius = float(radius)
        self.mix = mix
        r = np.linspace(0.0, self.radius, knots)
        dens = np.abs(np.asarray(profile(r), dtype=float)) * r ** (nu - 1)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(r))])
        if not np.isfinite(cdf[-1]):
            raise FloatingPointError("proposal profile is not finite")
        if cdf[-1] <= 0:
            self.mix = 1.0
            cdf = r.copy()
        self.r = r
        self.cdf = cdf / cdf[-1]
        self._area = 2.0 * math.pi ** (nu / 2) / math.gamma(nu / 2)
        self._vol = self._area * self.radius ** nu / nu

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        use_uniform = rng.random(size) < self.mix
        rad = np.interp(u, self.cdf, self.r)
        rad_u = self.radius * rng.random(size) ** (1.0 / self.nu)
        rad = np.where(use_uniform, rad_u, rad)
        g = rng.standard_normal((size, self.nu))
        g /= np.linalg.norm(g, axis=1)[:, None]
        return g * rad[:, None]

    def pdf(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        rad = np.linalg.norm(y, axis=-1)
        seg = np.clip(np.searchsorted(self.r, rad, side="right") - 1, 0, len(self.r) - 2)
        pr = (self.cdf[seg + 1] - self.cdf[seg]) / (self.r[seg + 1] - self.r[seg])
        with np.errstate(divide="ignore", invalid="ignore"):
            table = np.where(rad > 0, pr / (self._area * rad ** (self.nu - 1)), 0.0)
        inside = rad <= self.radius
        return np.where(inside, (1.0 - self.mix) * table + self.mix / self._vol, 0.0)


def _mc_cluster(g, anchor, radius, spec, m, nu, proposal, label):
    anchor = np.asarray(anchor, dtype=float).reshape(nu)
    if proposal is None:
        proposal = RadialProposal(lambda r: np.ones_like(r), radius, nu)
    reps = []
    for rep in range(spec.mc_replicates):
        rng = derive_rng(spec.seed, f"{label}/{rep}")
        ys = [proposal.sample(rng, spec.mc_samples) for _ in range(m)]
        dens = np.prod([proposal.pdf(y) for y in ys], axis=0)
        pts = np.stack([anchor + y for y in ys], axis=1)
        vals = np.asarray(g(pts), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(dens > 0, vals / dens, 0.0)
        reps.append(w.mean())
    reps = np.array(reps)
    value = float(reps.mean())
    err = float(reps.std(ddof=1) / math.sqrt(len(reps)))
    finite = math.isfinite(value) and math.isfinite(err)
    evals = spec.mc_samples * spec.mc_replicates
    return QuadResult(value if finite else math.nan, err if finite else math.inf, evals, finite)


def integrate_cluster(
    g: Callable,
    anchor,
    support_radius: float,
    spec: QuadSpec = QuadSpec(),
    m: int = 1,
    nu: int = 1,
    kink_radii: Sequence[float] = (),
    proposal: Optional[RadialProposal] = None,
    label: str = "cluster",
) -> QuadResult:
    """Integrate ``g`` over m points, each in the ball of ``support_radius``
    around ``anchor``.

    On the line ``g`` receives an (M, m) array; panels are cut at the anchor
    and at previously chosen points shifted by ``+- kink_radii``, and the
    panel count is doubled until successive estimates agree to tolerance.
    In 2 and 3 dimensions ``g`` receives (M, m, nu) points drawn from
    ``proposal`` (uniform in the ball by default) and the error is the
    standard error over ``spec.mc_replicates`` independent replicates.
    """
    if nu not in (1, 2, 3):
        raise ValueError("integrate_cluster supports nu in {1, 2, 3} only")
    if m < 1:
        raise ValueError("m must be >= 1")
    if nu > 1:
        return _mc_cluster(g, anchor, support_radius, spec, m, nu, proposal, label)

    center = np.array([float(np.ravel(anchor)[0])])
    anchors = np.empty((1, 0))
    radii = np.asarray(kink_radii, dtype=float)

    calls = [0]

    def integrand(idx, Y):
        calls[0] += len(idx)
        return np.asarray(g(Y), dtype=float)

    def one(x):
        return np.ones_like(x)

    prev = None
    level = 0
    while True:
        val = nested_integral(center, anchors, m, support_radius, radii, level, one, integrand, ordered=False)[0]
        if prev is not None:
            err = abs(val - prev)
            tol = max(spec.abs_tol, spec.rel_tol * abs(val))
            if err < tol or level >= min(spec.max_depth, 12):
                floor = 50.0 * _EPS * abs(val)
                return QuadResult(float(val), float(err + floor), calls[0], bool(err < tol))
        prev = val
        level += 1
