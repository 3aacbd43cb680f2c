"""Poincare and zero-boundary Sobolev constants estimated by multi-start ascent.

Every reported constant is the largest ratio among fields that were
actually evaluated, so it bounds the true supremum from below.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .calculus import check_exponent, signed_power
from .errors import BallIsWholeGraph, ConstantField, DegenerateBall, ParameterGateViolated
from .graph import Ball, ball


@dataclass(frozen=True)
class PoincareSpec:
    ball: Ball
    tau: float = 1.0
    q: float = 1.0
    p: float = 2.0

    def __post_init__(self):
        if self.tau < 1 or self.q < 1:
            raise ValueError("need tau >= 1 and q >= 1")
        check_exponent(self.p)


@dataclass(frozen=True)
class AscentConfig:
    restarts: int = 8
    max_iterations: int = 400
    tolerance: float = 1e-10


@dataclass
class ConstantEstimate:
    value: float
    maximizer: np.ndarray = field(repr=False)
    support: np.ndarray = field(repr=False)
    start_values: list = field(default_factory=list)

    @property
    def restarts(self):
        return len(self.start_values)


class _Local:
    """Edges with both ends in ``support``, reindexed to local positions."""

    def __init__(self, g, support, p):
        self.support = np.asarray(support, dtype=np.int64)
        pos = np.full(g.n, -1)
        pos[self.support] = np.arange(len(self.support))
        a, b = pos[g.tail], pos[g.head]
        keep = (a >= 0) & (b >= 0)
        self.a, self.b = a[keep], b[keep]
        self.w = g.edge_weight(p)[keep]
        # edges leaving the support see a zero exterior value
        out = (a >= 0) ^ (b >= 0)
        self.out_v = np.where(a[out] >= 0, a[out], b[out])
        self.out_w = g.edge_weight(p)[out]
        self.mu = g.mu[self.support]
        self.pos = pos
        self.p = p

    def energy(self, x, exterior=False):
        p = self.p
        d = x[self.a] - x[self.b]
        e = float(self.w @ np.abs(d) ** p)
        gr = np.zeros_like(x)
        flux = p * self.w * signed_power(d, p - 1.0)
        np.add.at(gr, self.a, flux)
        np.subtract.at(gr, self.b, flux)
        if exterior:
            xo = x[self.out_v]
            e += 0.5 * float(self.out_w @ np.abs(xo) ** p)
            np.add.at(gr, self.out_v, 0.5 * p * self.out_w * signed_power(xo, p - 1.0))
        return e, gr

    def laplacian(self, exterior=False):
        m = len(self.support)
        L = np.zeros((m, m))
        np.add.at(L, (self.a, self.a), self.w)
        np.add.at(L, (self.b, self.b), self.w)
        np.add.at(L, (self.a, self.b), -self.w)
        np.add.at(L, (self.b, self.a), -self.w)
        if exterior:
            np.add.at(L, (self.out_v, self.out_v), 0.5 * self.out_w)
        return L


def _mean_deviation(x, inner, mu_inner, q):
    # (1/mu(B)) sum_B mu |x - x_B|^q and its gradient
    mass = mu_inner.sum()
    xi = x[inner]
    dev = xi - mu_inner @ xi / mass
    val = float(mu_inner @ np.abs(dev) ** q) / mass
    s = q * mu_inner * signed_power(dev, q - 1.0) / mass
    gr = np.zeros_like(x)
    gr[inner] = s - mu_inner * s.sum() / mass
    return val, gr


def _poincare_parts(g, spec):
    big = ball(g, spec.ball.center, spec.tau * spec.ball.radius)
    loc = _Local(g, big.members, spec.p)
    inner = loc.pos[np.asarray(spec.ball.members)]
    return loc, inner


def poincare_ratio(g, spec, u):
    """``(avg_B |u - u_B|^q)^(1/q) / (r (avg_{tau B} g_u^p)^(1/p))``.

    The gradient only sees edges inside ``tau B``.
    """
    loc, inner = _poincare_parts(g, spec)
    x = np.asarray(u, dtype=float)[loc.support]
    return _ratio(loc, inner, spec, x)


def _ratio(loc, inner, spec, x):
    num, _ = _mean_deviation(x, inner, loc.mu[inner], spec.q)
    den, _ = loc.energy(x)
    if den <= 0:
        raise ConstantField("field is constant on the dilated ball")
    den /= loc.mu.sum()
    return num ** (1.0 / spec.q) / (spec.ball.radius * den ** (1.0 / spec.p))


def _starts(L, mu, m, restarts, rng, signed=True, cuts=16):
    """Spectral start, its sign pattern and random fields, plus sweep cuts.

    Sweep cuts are indicators of the lowest vertices in the Fiedler order;
    they suit the nonsmooth q = 1 numerator. Cuts do not count as restarts.
    """
    starts = []
    extra = []
    if m > 1:
        w, v = _generalised_eigh(L, mu)
        k = 1 if signed else 0
        starts.append(v[:, k])
        if signed:
            starts.append(np.sign(v[:, k]) + 1e-3 * v[:, k])
            order = np.argsort(v[:, k], kind="stable")
            for j in np.unique(np.linspace(1, m - 1, min(cuts, m - 1)).round().astype(int)):
                cut = np.zeros(m)
                cut[order[:j]] = 1.0
                extra.append(cut)
    while len(starts) < restarts:
        starts.append(rng.standard_normal(m))
    return starts[:max(restarts, 1)] + extra


def _generalised_eigh(L, mu):
    s = 1.0 / np.sqrt(mu)
    w, v = np.linalg.eigh(s[:, None] * L * s[None, :])
    return w, s[:, None] * v


def _ascend(neg_log, x0, cfg):
    res = minimize(neg_log, x0, jac=True, method="L-BFGS-B",
                   options={"maxiter": cfg.max_iterations, "gtol": cfg.tolerance, "ftol": 1e-15})
    return res.x


def poincare_constant(g, spec, cfg=AscentConfig(), seed=0):
    """Multi-start estimate of ``sup_u poincare_ratio``.

    Starts are the Fiedler vector of ``tau B``, its sign pattern and random
    fields. Each start and each ascent result is normalised to zero mean on
    ``B`` and unit gradient average on ``tau B``.
    """
    loc, inner = _poincare_parts(g, spec)
    m = len(loc.support)
    if m < 2:
        raise DegenerateBall("dilated ball has a single vertex")
    mu_in, q, p, total = loc.mu[inner], spec.q, spec.p, loc.mu.sum()

    def neg_log(x):
        num, gn = _mean_deviation(x, inner, mu_in, q)
        den, gd = loc.energy(x)
        num, den = max(num, 1e-300), max(den / total, 1e-300)
        val = -(np.log(num) / q - np.log(den) / p)
        return val, -(gn / (q * num) - gd / (total * p * den))

    def normalise(x):
        x = x - mu_in @ x[inner] / mu_in.sum()
        den = loc.energy(x)[0] / total
        return x / den ** (1.0 / p) if den > 0 else x

    rng = np.random.default_rng(seed)
    best, best_x, seen = -np.inf, None, []
    for x0 in _starts(loc.laplacian(), loc.mu, m, cfg.restarts, rng):
        for x in (x0, _ascend(neg_log, normalise(x0), cfg)):
            x = normalise(x)
            try:
                val = _ratio(loc, inner, spec, x)
            except ConstantField:
                continue
            seen.append(val)
            if val > best:
                best, best_x = val, x
    if best_x is None:
        raise DegenerateBall("every start was constant on the dilated ball")
    full = np.full(g.n, np.nan)
    full[loc.support] = best_x
    return ConstantEstimate(float(best), full, loc.support, seen)


@dataclass
class GlobalPoincare:
    value: float
    center: int
    radius: float
    skipped: list = field(default_factory=list)
    table: list = field(default_factory=list)


def global_poincare_constant(g, radii, tau=1.0, q=1.0, p=2.0, centers=None,
                             cfg=AscentConfig(), seed=0):
    """Largest ball constant over ``centers x radii``.

    Balls whose dilation is a single vertex are skipped and listed.
    """
    centers = range(g.n) if centers is None else centers
    rng = np.random.default_rng(seed)
    out = GlobalPoincare(-np.inf, -1, float("nan"))
    for x in centers:
        for r in radii:
            B = ball(g, x, r)
            if len(ball(g, x, tau * r)) < 2:
                out.skipped.append((int(x), float(r)))
                continue
            est = poincare_constant(g, PoincareSpec(B, tau, q, p), cfg,
                                    seed=int(rng.integers(2**63)))
            out.table.append((int(x), float(r), est.value))
            if est.value > out.value:
                out.value, out.center, out.radius = est.value, int(x), float(r)
    if not out.table:
        raise DegenerateBall("every sampled ball was a singleton")
    return out


def zero_bv_ratio(g, ball_, p, f):
    """``sum_B mu |f|^p / (r^p sum_B mu g_f^p)`` for ``f`` extended by zero."""
    loc = _Local(g, ball_.members, check_exponent(p))
    x = np.asarray(f, dtype=float)
    x = x[loc.support] if x.shape == (g.n,) else x
    return _zero_bv(loc, ball_.radius, x)


def _zero_bv(loc, r, x):
    num = float(loc.mu @ np.abs(x) ** loc.p)
    den, _ = loc.energy(x, exterior=True)
    if den <= 0:
        raise ConstantField("field vanishes identically")
    return num / (r**loc.p * den)


def zero_bv_constant(g, ball_, p, cfg=AscentConfig(), seed=0):
    """Multi-start estimate of the best constant for fields vanishing off ``ball_``."""
    p = check_exponent(p)
    if len(ball_) == g.n:
        raise BallIsWholeGraph("zero extension needs vertices outside the ball")
    loc = _Local(g, ball_.members, p)
    m = len(loc.support)

    def neg_log(x):
        num = max(float(loc.mu @ np.abs(x) ** p), 1e-300)
        gn = p * loc.mu * signed_power(x, p - 1.0)
        den, gd = loc.energy(x, exterior=True)
        den = max(den, 1e-300)
        return -(np.log(num) - np.log(den)), -(gn / num - gd / den)

    def normalise(x):
        n = float(loc.mu @ np.abs(x) ** p)
        return x / n ** (1.0 / p) if n > 0 else x

    rng = np.random.default_rng(seed)
    starts = _starts(loc.laplacian(exterior=True), loc.mu, m, cfg.restarts, rng, signed=False)
    best, best_x, seen = -np.inf, None, []
    for x0 in starts:
        for x in (x0, _ascend(neg_log, normalise(x0), cfg)):
            x = normalise(x)
            if not np.any(x):
                continue
            val = _zero_bv(loc, ball_.radius, x)
            seen.append(val)
            if val > best:
                best, best_x = val, x
    full = np.zeros(g.n)
    full[loc.support] = best_x
    return ConstantEstimate(float(best), full, loc.support, seen)


@dataclass(frozen=True)
class ReverseHolderSlack:
    lhs: float
    rhs: float

    @property
    def slack(self):
        return self.rhs - self.lhs


def reverse_holder_check(g, ball_, tau, q, p, epsilon, u, c):
    """Signed slack of ``(avg_B u^q)^(1/q) <= c r (avg_{tau B} g_u^p)^(1/p) + (1 + eps) avg_B u``.

    Requires ``(1 + eps) 2^(1/q - 1) < 1``.
    """
    p = check_exponent(p)
    if not (1.0 + epsilon) * 0.5 ** (1.0 - 1.0 / q) < 1.0:
        raise ParameterGateViolated(f"(1 + {epsilon}) * 2^(1/{q} - 1) is not below 1")
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("u must be nonnegative")
    spec = PoincareSpec(ball_, tau, q, p)
    loc, inner = _poincare_parts(g, spec)
    x = u[loc.support]
    mu_in = loc.mu[inner]
    mean = float(mu_in @ x[inner]) / mu_in.sum()
    lhs = (float(mu_in @ x[inner] ** q) / mu_in.sum()) ** (1.0 / q)
    grad = (loc.energy(x)[0] / loc.mu.sum()) ** (1.0 / p)
    return ReverseHolderSlack(lhs, c * ball_.radius * grad + (1.0 + epsilon) * mean)
