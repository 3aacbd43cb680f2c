"""Harnack quotients, oscillation decay, level-set probes and the De Giorgi recursion."""

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .calculus import check_exponent
from .errors import (
    DegenerateOscillation,
    InsufficientResolution,
    UnderResolved,
    ZeroBoundaryData,
)
from .graph import Ball, ball, set_measure, shell
from .parabolic import CauchyProblem, slice_indices, solve_cauchy
from .variational import DirichletProblem, SolverConfig, solve_p2_linear, solve_p_dirichlet

MIN_SLICES = 3


@dataclass(frozen=True)
class Cylinder:
    ball: Ball
    t_start: float
    t_end: float

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError("cylinder needs t_start < t_end")

    @property
    def duration(self):
        return self.t_end - self.t_start


@dataclass(frozen=True)
class ForwardPair:
    Q: Cylinder
    Qminus: Cylinder
    Qplus: Cylinder


def harnack_cylinders(g, x0, r, t0, p):
    """``Q = B(4r) x (t0 -+ (4r)^p)`` with the backward and forward parts on ``B(r)``.

    ``Q-`` spans ``(t0 - r^p, t0 - 2^-p r^p)`` and ``Q+`` spans
    ``(t0 + 2^-p r^p, t0 + r^p)``.
    """
    p = check_exponent(p)
    rp, gap, big = r**p, (r / 2.0) ** p, (4.0 * r) ** p
    small = ball(g, x0, r)
    return ForwardPair(
        Q=Cylinder(ball(g, x0, 4.0 * r), t0 - big, t0 + big),
        Qminus=Cylinder(small, t0 - rp, t0 - gap),
        Qplus=Cylinder(small, t0 + gap, t0 + rp),
    )


@dataclass
class HarnackQuotient:
    H: float
    sup_minus: float
    inf_plus: float
    argmax: tuple
    argmin: tuple
    slices_minus: int
    slices_plus: int
    h: float = float("nan")
    t0: float = float("nan")


def _extreme(sol, cyl, op):
    idx = slice_indices(sol, cyl.t_start, cyl.t_end)
    if len(idx) < MIN_SLICES:
        raise UnderResolved(
            f"{len(idx)} slices in ({cyl.t_start:g}, {cyl.t_end:g}); need {MIN_SLICES}"
        )
    block = sol.field.values[np.ix_(idx, cyl.ball.members)]
    flat = int(op(block))
    i, j = np.unravel_index(flat, block.shape)
    point = (float(sol.field.times[idx[i]]), int(cyl.ball.members[j]))
    return float(block[i, j]), point, len(idx)


def parabolic_harnack_quotient(sol, x0, r, t0, p=None):
    """``max`` over ``Q-`` samples divided by ``min`` over ``Q+`` samples.

    A zero minimum gives ``inf`` rather than an error.
    """
    pair = harnack_cylinders(sol.graph, x0, r, t0, sol.p if p is None else p)
    hi, at_hi, n_minus = _extreme(sol, pair.Qminus, np.argmax)
    lo, at_lo, n_plus = _extreme(sol, pair.Qplus, np.argmin)
    H = hi / lo if lo > 0 else math.inf
    return HarnackQuotient(H, hi, lo, at_hi, at_lo, n_minus, n_plus, sol.h, float(t0))


def bump(g, x0, width=2.0):
    """Gaussian profile ``exp(-(d / width)^2)`` around ``x0``."""
    return np.exp(-((g.distances_from(x0) / width) ** 2))


def harnack_experiment(g, x0, r, p, slices=4, refine=1, u0=None, cfg=SolverConfig()):
    """Run from bump data to ``t0 + r^p`` with ``t0 = (4r)^p`` and measure the quotient.

    The step is the largest uniform ``h`` putting ``slices`` grid times inside
    each sub-cylinder, divided by ``refine``.
    """
    p = check_exponent(p)
    t0 = (4.0 * r) ** p
    T = t0 + r**p
    h_target = (1.0 - 2.0**-p) * r**p / (slices + 1) / refine
    steps = int(math.ceil(T / h_target * (1 - 1e-12)))
    u0 = bump(g, x0) if u0 is None else u0
    sol = solve_cauchy(CauchyProblem(g, u0, T, steps, p), cfg)
    return parabolic_harnack_quotient(sol, x0, r, t0, p), sol


def _solve_dirichlet(prob, cfg):
    if float(prob.p) == 2.0:
        return solve_p2_linear(prob).values
    return solve_p_dirichlet(prob, cfg).values


@dataclass
class EllipticHarnack:
    H: float
    solution: np.ndarray
    domain: np.ndarray
    boundary: np.ndarray


def elliptic_harnack_quotient(g, x0, r, boundary_data, p, cfg=SolverConfig()):
    """``sup / inf`` over ``B(x0, r)`` of the p-harmonic extension into ``B(x0, 4r)``.

    ``boundary_data`` is a full-length field read on the one-edge outer
    shell of the big ball.
    """
    data = np.asarray(boundary_data, dtype=float)
    if np.any(data < 0):
        raise ValueError("boundary data must be nonnegative")
    dom = ball(g, x0, 4.0 * r).members
    bnd = shell(g, dom)
    if bnd.size and not np.any(data[bnd] > 0):
        raise ZeroBoundaryData("boundary data vanishes on the shell")
    u = _solve_dirichlet(DirichletProblem.from_field(g, dom, bnd, data, p), cfg)
    inner = u[ball(g, x0, r).members]
    lo = float(inner.min())
    H = float(inner.max()) / lo if lo > 0 else math.inf
    return EllipticHarnack(H, u, dom, bnd)


@dataclass
class HolderDecay:
    radii: np.ndarray
    effective_radii: np.ndarray
    osc: np.ndarray
    kappa: float
    residual: float
    ratios: np.ndarray
    harnack: np.ndarray
    solution: np.ndarray = field(repr=False, default=None)

    @property
    def H_e(self):
        return float(np.max(self.harnack))

    @property
    def gamma(self):
        H = self.H_e
        return 1.0 if math.isinf(H) else (H - 1.0) / (H + 1.0)


def _quotient(v):
    lo = float(v.min())
    return float(v.max()) / lo if lo > 0 else math.inf


def holder_decay(g, x0, R, p, levels=3, cfg=SolverConfig(), boundary=None,
                 boundary_values=None, u=None):
    """Oscillation of a p-harmonic function over ``B(x0, 4^-k R)``, ``k < levels``.

    Pass either ``u`` directly or Dirichlet data (``boundary`` vertices and a
    full-length ``boundary_values`` field); the domain is then every other
    vertex. ``kappa`` is the slope of log oscillation against the log of the
    largest distance realised inside each ball. ``harnack[k]`` is the larger
    Harnack quotient over ``B_{k+1}`` of ``u - min u`` and ``max u - u``
    taken on ``B_k``.
    """
    if levels < 3:
        raise ValueError("need at least three levels")
    radii = R * 4.0 ** -np.arange(levels)
    if radii[-1] < 2.0 * g.min_length:
        raise InsufficientResolution(
            f"smallest radius {radii[-1]:g} is below twice the minimum edge length"
        )
    if u is None:
        bnd = np.unique(np.asarray(boundary, dtype=np.int64))
        dom = np.setdiff1d(np.arange(g.n), bnd)
        u = _solve_dirichlet(DirichletProblem.from_field(g, dom, bnd, boundary_values, p), cfg)
    u = np.asarray(u, dtype=float)
    d = g.distances_from(x0)
    balls = [np.flatnonzero(d < r) for r in radii]
    eff = np.array([d[b].max() for b in balls])
    osc = np.array([np.ptp(u[b]) for b in balls])
    scale = max(float(np.abs(u).max()), 1e-300)
    positive = osc > 1e-12 * scale
    if positive.sum() < 2:
        raise DegenerateOscillation("oscillation vanishes on all but at most one ball")
    lr, lo = np.log(eff[positive]), np.log(osc[positive])
    kappa, intercept = np.polyfit(lr, lo, 1)
    residual = float(np.sqrt(np.mean((lo - kappa * lr - intercept) ** 2)))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = osc[1:] / osc[:-1]
    harnack = []
    for outer, inner in zip(balls[:-1], balls[1:]):
        m, M = u[outer].min(), u[outer].max()
        harnack.append(max(_quotient(u[inner] - m), _quotient(M - u[inner])))
    return HolderDecay(radii, eff, osc, float(kappa), residual, ratios, np.array(harnack), u)


@dataclass
class PositivitySeries:
    times: np.ndarray
    thresholds: np.ndarray
    density: np.ndarray


def positivity_probe(sol, ball_, thresholds, window):
    """``mu({u(t) >= level} in B) / mu(B)`` for each level and grid time in ``window``."""
    thresholds = np.asarray(thresholds, dtype=float)
    if np.any(thresholds <= 0):
        raise ValueError("thresholds must be positive")
    idx = slice_indices(sol, *window)
    members = np.asarray(ball_.members)
    g = sol.graph
    mu = g.mu[members]
    block = sol.field.values[np.ix_(idx, members)]
    dens = (block[None, :, :] >= thresholds[:, None, None]) @ mu / set_measure(g, members)
    return PositivitySeries(sol.field.times[idx], thresholds, dens)


def _check_recursion(c, b, kappa):
    if not (c > 0 and b > 1 and kappa > 1):
        raise ValueError("need c > 0, b > 1 and kappa > 1")


def _threshold_exact(c, b, kappa):
    a = mpmath.mpf(kappa) - 1
    return mpmath.mpf(c) ** (-1 / a) * mpmath.mpf(b) ** (-1 / a**2)


def degiorgi_threshold(c, b, kappa):
    """Largest ``Y0`` for which ``Y_{n+1} = c b^n Y_n^kappa`` is guaranteed to vanish.

    Rounded toward zero, so a simulation started at the returned value never
    sits above the exact boundary.
    """
    _check_recursion(c, b, kappa)
    with mpmath.workprec(200):
        exact = _threshold_exact(c, b, kappa)
        y = float(exact)
        if mpmath.mpf(y) > exact:
            y = float(np.nextafter(y, 0.0))
    return y


def degiorgi_simulate(Y0, c, b, kappa, n):
    """Exact recursion in log space with enough precision to survive ``kappa**n``.

    Overflow shows up as ``inf`` and underflow as ``0``.
    """
    _check_recursion(c, b, kappa)
    if Y0 < 0:
        raise ValueError("Y0 must be nonnegative")
    if Y0 == 0:
        return np.zeros(n + 1)
    bits = 64 + int(math.ceil(n * math.log2(kappa)))
    out = np.empty(n + 1)
    with mpmath.workprec(bits):
        lc, lb, k = mpmath.log(c), mpmath.log(b), mpmath.mpf(kappa)
        cur = mpmath.log(mpmath.mpf(Y0))
        for i in range(n + 1):
            out[i] = _exp_float(cur)
            cur = lc + i * lb + k * cur
    return out


def _exp_float(log_value):
    if log_value > 709.8:
        return math.inf
    if log_value < -745.2:
        return 0.0
    return float(mpmath.exp(log_value))
