"""Convex minimisation and the two variational problems built on it.

``mm_step`` minimises one implicit step of the doubly nonlinear flow,
``solve_p_dirichlet`` minimises the p-energy with prescribed boundary values,
and ``solve_p2_linear`` handles both directly when p = 2.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .calculus import as_field, check_exponent, p_energy, signed_power
from .errors import (
    IllPosedDomain,
    MaxIterationsExceeded,
    NegativeInput,
    NonFiniteObjective,
    SolverError,
    WrongExponent,
)
from .graph import shell

PRECONDITIONERS = ("hessian", "diagonal", "none")
EPS = np.finfo(float).eps
# values above -NEGATIVE_TOLERANCE * max(u) count as nonnegative
NEGATIVE_TOLERANCE = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    gradient_tolerance: float = 1e-10
    max_iterations: int = 100_000
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    initial_step: float = 1.0
    preconditioner: str = "hessian"

    def __post_init__(self):
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be positive")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError("max_iterations must be a positive integer")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not 0 < self.sufficient_decrease <= 0.5:
            raise ValueError("sufficient_decrease must lie in (0, 0.5]")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be positive")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"preconditioner must be one of {PRECONDITIONERS}")

    def replace(self, **changes):
        return SolverConfig(**{**self.__dict__, **changes})


@dataclass
class SolverStats:
    iterations: int
    residual: float
    initial_residual: float
    converged: bool
    wall_time: float = 0.0
    method: str = "descent"

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class SolveResult:
    values: np.ndarray
    stats: SolverStats
    extra: dict = field(default_factory=dict)


def _norm(v):
    return float(np.max(np.abs(v))) if v.size else 0.0


def minimize_convex(fun, grad, x0, cfg=SolverConfig(), hess=None, atol=0.0):
    """Preconditioned descent with Armijo backtracking.

    Stops when every gradient entry is below
    ``max(cfg.gradient_tolerance * |grad(x0)|, atol)``, where ``atol`` is a
    number or a callable returning per-entry floors at the current iterate. With
    ``cfg.preconditioner == "hessian"`` and a ``hess`` callback returning a
    sparse SPD curvature model, directions solve ``H d = -grad``;
    ``"diagonal"`` uses only its diagonal. Returns ``(x, SolverStats)``; when the iteration cap
    is hit the best iterate is returned with ``converged=False``.
    """
    start = time.perf_counter()
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteObjective("initial point is not finite")
    f = fun(x)
    if not np.isfinite(f):
        raise NonFiniteObjective(f"objective is {f} at the initial point")
    gr = grad(x)
    g0 = _norm(gr)
    floor = atol if callable(atol) else (lambda _: atol)
    rel = cfg.gradient_tolerance * g0

    def done(x, gr):
        return bool(np.all(np.abs(gr) <= np.maximum(rel, floor(x))))

    mode = cfg.preconditioner if hess is not None else "none"
    step = cfg.initial_step
    it = 0
    gn = g0
    stalled = False
    converged = done(x, gr)
    while not converged and it < cfg.max_iterations:
        it += 1
        if mode == "hessian":
            d = -_spd_solve(hess(x), gr)
            alpha = cfg.initial_step
        elif mode == "diagonal":
            d = -gr / hess(x).diagonal()
            alpha = min(cfg.initial_step, 2.0 * step)
        else:
            d = -gr
            alpha = min(cfg.initial_step, 2.0 * step)
        slope = float(gr @ d)
        if not slope < 0:
            d, slope = -gr, -float(gr @ gr)
        while True:
            xn = x + alpha * d
            fn = fun(xn)
            if np.isfinite(fn) and fn <= f + cfg.sufficient_decrease * alpha * slope:
                gn_new = None
                break
            # at the roundoff floor Armijo cannot certify decrease; accept a
            # step that keeps f within rounding and shrinks the gradient
            if np.isfinite(fn) and fn - f <= 8 * EPS * max(abs(f), 1.0):
                g_try = grad(xn)
                if _norm(g_try) < gn:
                    gn_new = g_try
                    break
            alpha *= cfg.shrink
            if alpha * _norm(d) <= EPS * max(_norm(x), 1.0):
                stalled = True
                break
        if stalled:
            break
        step = alpha
        x, f = xn, fn
        gr = grad(x) if gn_new is None else gn_new
        gn = _norm(gr)
        converged = done(x, gr)
    stats = SolverStats(
        iterations=it,
        residual=gn,
        initial_residual=g0,
        converged=converged,
        wall_time=time.perf_counter() - start,
        method=f"descent/{mode}",
    )
    return x, stats


def _spd_solve(H, b):
    H = sp.csc_matrix(H)
    if H.shape[0] == 1:
        return b / H.toarray()[0, 0]
    return splu(H, permc_spec="MMD_AT_PLUS_A").solve(b)


class _Energy:
    """p-energy restricted to the free vertices of a full-length field."""

    def __init__(self, g, p, free):
        self.g, self.p = g, p
        self.free = np.asarray(free, dtype=np.int64)
        is_free = np.zeros(g.n, dtype=bool)
        is_free[self.free] = True
        active = is_free[g.tail] | is_free[g.head]
        self.tail, self.head = g.tail[active], g.head[active]
        self.w = g.edge_weight(p)[active]
        pos = np.full(g.n, -1)
        pos[self.free] = np.arange(len(self.free))
        m = len(self.tail)
        rows, cols, vals = [], [], []
        for ends, sign in ((self.tail, 1.0), (self.head, -1.0)):
            keep = pos[ends] >= 0
            rows.append(pos[ends][keep])
            cols.append(np.arange(m)[keep])
            vals.append(np.full(keep.sum(), sign))
        self.B = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(len(self.free), m),
        )

    def diff(self, u):
        return u[self.tail] - u[self.head]

    def value(self, u):
        return float(self.w @ np.abs(self.diff(u)) ** self.p)

    def grad(self, u):
        return self.B @ (self.p * self.w * signed_power(self.diff(u), self.p - 1.0))

    def floor(self, u, delta):
        # gradient change when both ends of every edge move by delta
        s = np.abs(self.diff(u))
        bump = (s + 2.0 * delta) ** (self.p - 1.0) - s ** (self.p - 1.0)
        return abs(self.B) @ (self.p * self.w * bump)

    def hess(self, u, eps):
        du = self.diff(u)
        curv = _curvature(self.p, du, eps) * self.w
        return (self.B @ sp.diags(curv) @ self.B.T).tocsc()


def _curvature(p, s, eps, newton=None):
    """Second-order model of ``|s|**p``.

    For p >= 2 this is the regularised second derivative. For p < 2 the
    second derivative is unbounded near 0 and Newton steps overshoot, so the
    majorising weight ``p |s|**(p-2)`` is used wherever ``newton`` is False.
    """
    factor = p - 1.0
    if p < 2.0:
        factor = 1.0 if newton is None else np.where(newton, p - 1.0, 1.0)
    return p * factor * (s * s + eps * eps) ** ((p - 2.0) / 2.0)


def _regularisation(scale, p):
    # below the regularisation the p < 2 curvature model stops majorising,
    # so keep it under the roundoff floor there
    return (1e-13 if p < 2.0 else 1e-10) * max(scale, 1e-300)


def _roundoff_delta(scale):
    # a few thousand ulps of the data scale
    return 1e4 * EPS * max(scale, 1e-300)


@dataclass(frozen=True)
class MMStepProblem:
    graph: object
    u_prev: np.ndarray
    h: float
    p: float


def mm_objective(g, u_prev, h, p):
    """Objective, gradient and curvature model of one implicit step."""
    p = check_exponent(p)
    energy = _Energy(g, p, np.arange(g.n))
    mu = g.mu
    drive = p * mu * signed_power(u_prev, p - 1.0)
    scale = float(np.max(np.abs(u_prev))) if u_prev.size else 1.0
    eps = _regularisation(scale, p)

    def fun(u):
        return energy.value(u) + (mu @ np.abs(u) ** p - drive @ u) / h

    def grad(u):
        return energy.grad(u) + (p * mu * signed_power(u, p - 1.0) - drive) / h

    def hess(u):
        mass = mu * _curvature(p, u, eps, newton=np.abs(u) > 1e-3 * scale) / h
        return energy.hess(u, eps) + sp.diags(mass)

    return fun, grad, hess


def _mm_floor(g, u_prev, h, p):
    energy = _Energy(g, p, np.arange(g.n))
    delta = _roundoff_delta(float(np.max(np.abs(u_prev))) if u_prev.size else 0.0)

    def floor(u):
        a = np.abs(u)
        mass = p * g.mu / h * ((a + delta) ** (p - 1.0) - a ** (p - 1.0))
        return energy.floor(u, delta) + mass

    return floor


def mm_step(g, u_prev, h, p, cfg=SolverConfig(), init=None):
    """One minimising-movement step from ``u_prev`` with time step ``h``.

    Returns a :class:`SolveResult`. The output is checked, not projected,
    for nonnegativity.
    """
    p = check_exponent(p)
    u_prev = as_field(g, u_prev)
    top = float(np.max(u_prev)) if u_prev.size else 0.0
    if u_prev.size and u_prev.min() < -NEGATIVE_TOLERANCE * max(top, 1e-300):
        raise NegativeInput("previous slice must be nonnegative")
    if not h > 0:
        raise ValueError("time step must be positive")
    fun, grad, hess = mm_objective(g, u_prev, h, p)
    x0 = u_prev if init is None else as_field(g, init)
    u, stats = minimize_convex(fun, grad, x0, cfg, hess=hess, atol=_mm_floor(g, u_prev, h, p))
    if not stats.converged:
        raise MaxIterationsExceeded(
            f"step did not converge: residual {stats.residual:.3e} after {stats.iterations} iterations",
            best=u,
            stats=stats,
        )
    if u.min() < -NEGATIVE_TOLERANCE * max(top, 1e-300):
        raise SolverError(f"step produced a negative value {u.min():.3e}")
    return SolveResult(u, stats)


def variational_inequality_slack(g, u, u_prev, h, p, probes):
    """Smallest ``E(v) - E(u) - (p/h) sum mu (u^{p-1} - u_prev^{p-1}) (u - v)``."""
    eu = p_energy(g, u, p)
    flux = p / h * g.mu * (signed_power(u, p - 1.0) - signed_power(u_prev, p - 1.0))
    return min(p_energy(g, v, p) - eu - float(flux @ (u - v)) for v in probes)


@dataclass(frozen=True)
class DirichletProblem:
    """Minimise the p-energy over fields equal to ``boundary_values`` on ``boundary``."""

    graph: object
    domain: np.ndarray
    boundary: np.ndarray
    boundary_values: np.ndarray
    p: float

    @classmethod
    def from_field(cls, g, domain, boundary, f, p):
        boundary = np.unique(np.asarray(boundary, dtype=np.int64))
        return cls(g, np.unique(np.asarray(domain, dtype=np.int64)), boundary,
                   np.asarray(f, dtype=float)[boundary], p)

    def validate(self):
        g = self.graph
        check_exponent(self.p)
        dom = np.unique(np.asarray(self.domain, dtype=np.int64))
        bnd = np.asarray(self.boundary, dtype=np.int64)
        vals = np.asarray(self.boundary_values, dtype=float)
        if dom.size == 0:
            raise IllPosedDomain("domain is empty")
        if bnd.size == 0:
            raise IllPosedDomain("boundary is empty")
        if vals.shape != bnd.shape or not np.all(np.isfinite(vals)):
            raise IllPosedDomain("boundary values must be finite, one per boundary vertex")
        if np.intersect1d(dom, bnd).size:
            raise IllPosedDomain("domain and boundary overlap")
        if np.setdiff1d(shell(g, dom), bnd).size:
            raise IllPosedDomain("some neighbour of the domain is neither free nor prescribed")
        closure = np.concatenate([dom, bnd])
        inside = np.zeros(g.n, dtype=bool)
        inside[closure] = True
        keep = inside[g.tail] & inside[g.head]
        adj = sp.csr_matrix((np.ones(keep.sum()), (g.tail[keep], g.head[keep])), shape=(g.n, g.n))
        _, labels = connected_components(adj, directed=False)
        if np.setdiff1d(labels[dom], labels[bnd]).size:
            raise IllPosedDomain("a domain component does not reach the boundary")
        return dom, bnd, vals


def _dirichlet_template(prob):
    dom, bnd, vals = prob.validate()
    u = np.full(prob.graph.n, np.nan)
    u[bnd] = vals
    return dom, bnd, vals, u


def solve_p_dirichlet(prob, cfg=SolverConfig(), init=None):
    """p-harmonic extension of the boundary data into the domain.

    The returned values array has the graph's length, with NaN outside the
    domain and its boundary.
    """
    p = check_exponent(prob.p)
    dom, bnd, vals, u = _dirichlet_template(prob)
    energy = _Energy(prob.graph, p, dom)
    eps = _regularisation(float(np.max(np.abs(vals))), p)
    work = np.where(np.isnan(u), 0.0, u)

    def lift(x):
        full = work.copy()
        full[dom] = x
        return full

    def fun(x):
        return energy.value(lift(x))

    def grad(x):
        return energy.grad(lift(x))

    def hess(x):
        H = energy.hess(lift(x), eps)
        return H + sp.diags(np.full(len(dom), 1e-14 * max(H.diagonal().max(), 1e-300)))

    x0 = np.full(len(dom), float(np.mean(vals))) if init is None else np.asarray(init, float)[dom]
    delta = _roundoff_delta(float(np.max(np.abs(vals))))
    x, stats = minimize_convex(fun, grad, x0, cfg, hess=hess,
                               atol=lambda x: energy.floor(lift(x), delta))
    if not stats.converged:
        raise MaxIterationsExceeded(
            f"Dirichlet solve did not converge: residual {stats.residual:.3e}", best=lift(x), stats=stats
        )
    u[dom] = x
    return SolveResult(u, stats)


def _laplacian(g):
    B = g.incidence
    return (B @ sp.diags(g.edge_weight(2.0)) @ B.T).tocsc()


def solve_p2_linear(problem):
    """Direct sparse solve of the p = 2 Euler-Lagrange system.

    Accepts an :class:`MMStepProblem` or a :class:`DirichletProblem`.
    """
    start = time.perf_counter()
    if float(problem.p) != 2.0:
        raise WrongExponent(f"linear fast path needs p = 2, got {problem.p}")
    g = problem.graph
    L = _laplacian(g)
    if isinstance(problem, MMStepProblem):
        u_prev = as_field(g, problem.u_prev)
        if np.any(u_prev < 0):
            raise NegativeInput("previous slice must be nonnegative")
        A = L + sp.diags(g.mu / problem.h)
        u = splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A").solve(g.mu * u_prev / problem.h)
        residual = _norm(2 * (A @ u - g.mu * u_prev / problem.h))
    elif isinstance(problem, DirichletProblem):
        dom, bnd, vals, u = _dirichlet_template(problem)
        A = L[dom][:, dom]
        rhs = -(L[dom][:, bnd] @ vals)
        u[dom] = splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A").solve(rhs)
        residual = _norm(2 * (A @ u[dom] - rhs))
    else:
        raise TypeError("expected an MMStepProblem or a DirichletProblem")
    stats = SolverStats(1, residual, float("nan"), True, time.perf_counter() - start, "linear")
    return SolveResult(u, stats)


class LinearStepper:
    """Repeated p = 2 steps with a fixed time step, sharing one factorisation."""

    def __init__(self, g, h):
        self.g, self.h = g, h
        self.A = (_laplacian(g) + sp.diags(g.mu / h)).tocsc()
        self.lu = splu(self.A, permc_spec="MMD_AT_PLUS_A")

    def step(self, u_prev):
        start = time.perf_counter()
        rhs = self.g.mu * u_prev / self.h
        u = self.lu.solve(rhs)
        residual = _norm(2 * (self.A @ u - rhs))
        return SolveResult(u, SolverStats(1, residual, float("nan"), True,
                                          time.perf_counter() - start, "linear"))
