"""Doubling constant, volume-growth exponents and annular decay."""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyRadiusGrid, InsufficientScales

# Slope gain between the upper and lower halves of the radius range above
# which ball growth is reported as faster than any power.
SUPERPOLYNOMIAL_CONVEXITY = 0.3


@dataclass(frozen=True)
class DoublingResult:
    constant: float
    center: int
    radius: float


@dataclass(frozen=True)
class VolumeExponents:
    Q: float
    alpha: float
    pooled: float
    residual: float
    convexity: float
    radii: np.ndarray

    @property
    def superpolynomial(self):
        return self.convexity > SUPERPOLYNOMIAL_CONVEXITY


@dataclass(frozen=True)
class AnnularFit:
    c: float
    beta: float
    min_slack: float
    samples: int


def _sorted_profile(g, x):
    d = g.distances_from(x)
    order = np.argsort(d, kind="stable")
    ds = d[order]
    cm = np.concatenate([[0.0], np.cumsum(g.mu[order])])
    return ds, cm


def _ball_measures(ds, cm, radii):
    # number of vertices with d < r
    return cm[np.searchsorted(ds, radii, side="left")]


def critical_radii(distances, cap):
    """Midpoints between consecutive breakpoints of ``r -> (B(r), B(2r))``.

    Breakpoints are the realised distances and their halves. Radii beyond
    ``cap`` are dropped; the interval straddling ``cap`` is sampled inside
    ``(b_i, cap]``.
    """
    d = np.asarray(distances, dtype=float)
    d = d[np.isfinite(d)]
    b = np.unique(np.concatenate([d, d / 2.0]))
    b = b[b < cap]
    upper = np.minimum(np.append(b[1:], np.inf), cap)
    return 0.5 * (b + upper)


def doubling_constant(g, radius_policy="exact-critical", cap=None, centers=None):
    """Supremum of ``mu(B(x, 2r)) / mu(B(x, r))`` over centers and radii.

    ``radius_policy`` is ``"exact-critical"`` or an explicit array of radii.
    ``cap`` bounds the radii; it defaults to the diameter for critical radii
    and to no bound for an explicit grid.
    """
    explicit = not (isinstance(radius_policy, str) and radius_policy == "exact-critical")
    if cap is None:
        cap = np.inf if explicit else g.diameter
    cap = float(cap)
    centers = range(g.n) if centers is None else centers
    grid = None
    if explicit:
        grid = np.asarray(radius_policy, dtype=float).ravel()
        grid = np.sort(grid[(grid > 0) & (grid <= cap)]) if cap > 0 else grid[grid > 0]
        if grid.size == 0:
            raise EmptyRadiusGrid("no admissible radii in the grid")
    best = DoublingResult(1.0, int(next(iter(centers), 0)), float(cap))
    for x in centers:
        ds, cm = _sorted_profile(g, x)
        radii = critical_radii(ds, cap) if grid is None else grid
        if radii.size == 0:
            continue
        ratio = _ball_measures(ds, cm, 2.0 * radii) / _ball_measures(ds, cm, radii)
        i = int(np.argmax(ratio))
        if ratio[i] > best.constant:
            best = DoublingResult(float(ratio[i]), int(x), float(radii[i]))
    return best


def _default_centers(g, limit=64):
    if g.n <= limit:
        return np.arange(g.n)
    return np.unique(np.linspace(0, g.n - 1, limit).round().astype(int))


def _radius_grid(g, r_min, r_max, per_octave):
    if r_min is None:
        r_min = 2.0 * g.min_length
    if r_max is None:
        r_max = g.diameter / 2.0
    if g.diameter < 16.0 * g.min_length or r_max / r_min < 4.0:
        raise InsufficientScales(
            f"radii [{r_min:g}, {r_max:g}] span too few dyadic scales for a fit"
        )
    k = int(np.floor(per_octave * np.log2(r_max / r_min))) + 1
    return r_min * 2.0 ** (np.arange(k) / per_octave)


def volume_exponents(g, centers=None, r_min=None, r_max=None, per_octave=2, spread=10.0):
    """Fit ``log mu(B(x, r))`` against ``log r`` separately for each center.

    ``Q`` and ``alpha`` are the upper and lower ``spread`` percentiles of the
    per-center slopes (growth from below and from above), ``pooled`` is their
    mean and ``residual`` the root-mean-square misfit of the per-center lines.
    ``convexity`` is the mean gain of the slope fitted on the upper half of the
    radii over the lower half; it is clearly positive for exponential growth.
    """
    radii = _radius_grid(g, r_min, r_max, per_octave)
    centers = _default_centers(g) if centers is None else np.asarray(centers)
    lr = np.log(radii)
    lv = np.array([np.log(_ball_measures(*_sorted_profile(g, x), radii)) for x in centers])
    xc = lr - lr.mean()
    yc = lv - lv.mean(axis=1, keepdims=True)
    slopes = yc @ xc / (xc @ xc)
    resid = yc - slopes[:, None] * xc[None, :]
    rms = float(np.sqrt(np.mean(resid**2)))
    lo, hi = np.percentile(slopes, [spread, 100.0 - spread])
    k = len(radii) // 2
    convexity = float(np.mean(_slopes(lr[k:], lv[:, k:]) - _slopes(lr[: k + 1], lv[:, : k + 1])))
    return VolumeExponents(float(hi), float(lo), float(slopes.mean()), rms, convexity, radii)


def _slopes(x, y):
    xc = x - x.mean()
    return (y - y.mean(axis=1, keepdims=True)) @ xc / (xc @ xc)


def annulus_fraction(g, x, r, delta):
    """``mu(B(x, r) minus B(x, (1 - delta) r)) / mu(B(x, r))``."""
    ds, cm = _sorted_profile(g, x)
    outer = _ball_measures(ds, cm, np.atleast_1d(r))
    inner = _ball_measures(ds, cm, np.atleast_1d((1.0 - delta) * r))
    return float(((outer - inner) / outer)[0])


def annular_decay_fit(g, deltas, centers=None, radii=None, per_octave=2):
    """Fit ``c`` and ``beta`` with annulus fraction ``<= c * delta**beta``.

    ``beta`` comes from a log-log fit of the worst fraction per delta; ``c``
    is then the smallest constant making every sample satisfy the bound.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.size < 2 or np.any((deltas <= 0) | (deltas >= 1)):
        raise InsufficientScales("need at least two deltas inside (0, 1)")
    if radii is None:
        radii = _radius_grid(g, None, None, per_octave)
    radii = np.asarray(radii, dtype=float)
    centers = _default_centers(g) if centers is None else np.asarray(centers)
    frac = np.empty((len(centers), len(radii), len(deltas)))
    for i, x in enumerate(centers):
        ds, cm = _sorted_profile(g, x)
        outer = _ball_measures(ds, cm, radii)
        inner = _ball_measures(ds, cm, np.outer(radii, 1.0 - deltas))
        frac[i] = (outer[:, None] - inner) / outer[:, None]
    worst = frac.max(axis=(0, 1))
    keep = worst > 0
    if keep.sum() < 2:
        raise InsufficientScales("annuli are empty at almost every delta")
    beta, _ = np.polyfit(np.log(deltas[keep]), np.log(worst[keep]), 1)
    beta = float(beta)
    c = float((frac / deltas**beta).max())
    slack = float((c * deltas**beta - frac).min())
    return AnnularFit(c, beta, slack, frac.size)
