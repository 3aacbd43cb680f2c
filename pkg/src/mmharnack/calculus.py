"""Vertex fields, p-energies and the scalar toolkit used by the estimates.

Scalar fields are plain float arrays of length ``g.n``. Space-time fields
store one slice per grid time in a 2D array.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import binom

from .errors import GraphMismatch, NonuniformGrid


def check_exponent(p):
    p = float(p)
    if not p > 1.0 or not np.isfinite(p):
        raise ValueError(f"exponent must satisfy 1 < p < inf, got {p}")
    return p


def as_field(g, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (g.n,):
        raise GraphMismatch(f"field of shape {u.shape} on a graph with {g.n} vertices")
    return u


def signed_power(b, alpha):
    """``|b|**(alpha - 1) * b``, which is odd in ``b`` and vanishes at 0."""
    b = np.asarray(b, dtype=float)
    out = np.sign(b) * np.abs(b) ** alpha
    return out if out.ndim else float(out)


def _edge_mask(g, within):
    if within is None:
        return None
    inside = np.zeros(g.n, dtype=bool)
    inside[np.asarray(within, dtype=np.int64)] = True
    return inside[g.tail] & inside[g.head]


def edge_terms(g, u, p, within=None):
    """Per-edge ``c * len**(1-p) * |u(x) - u(y)|**p``.

    With ``within`` given, edges leaving that vertex set contribute zero.
    """
    u = as_field(g, u)
    terms = g.edge_weight(p) * np.abs(u[g.tail] - u[g.head]) ** p
    mask = _edge_mask(g, within)
    if mask is not None:
        terms = np.where(mask, terms, 0.0)
    return terms


def vertex_gradient(g, u, p, within=None):
    """Discrete upper gradient ``g_u``.

    Each edge term is split evenly between its endpoints, so that
    ``sum(mu * g_u**p)`` equals the edge-sum p-energy.
    """
    p = check_exponent(p)
    half = 0.5 * edge_terms(g, u, p, within)
    acc = np.bincount(g.tail, half, g.n) + np.bincount(g.head, half, g.n)
    return (acc / g.mu) ** (1.0 / p)


def p_energy(g, u, p, within=None):
    p = check_exponent(p)
    return float(edge_terms(g, u, p, within).sum())


def _young_gap(w, k, p):
    # (p-1)/p |w|^p + |k|^p / p - k w^{p-1}: nonnegative by Young's inequality
    return (p - 1.0) / p * np.abs(w) ** p + np.abs(k) ** p / p - k * signed_power(w, p - 1.0)


def _near_diagonal(w, k, p, terms=24):
    # (p-1) d^2 |k|^{p-2} sum_j C(p-2, j) (d/k)^j / (j+2), valid for |d/k| < 1
    d = w - k
    z = d / k
    j = np.arange(terms)
    series = (binom(p - 2.0, j) / (j + 2.0) * z[..., None] ** j).sum(axis=-1)
    return (p - 1.0) * d * d * np.abs(k) ** (p - 2.0) * series


def g_plus_minus(w, k, p, sign):
    """Truncation primitive ``G_+`` (``sign > 0``) or ``G_-`` (``sign < 0``).

    ``G_+(w, k)`` vanishes for ``w <= k`` and ``G_-(w, k)`` for ``w >= k``;
    on the active side both equal the Young gap of ``k`` against
    ``w**(p-1)``. When ``w`` is close to ``k`` a binomial series replaces the
    closed form to avoid cancellation.
    """
    p = check_exponent(p)
    w, k = np.broadcast_arrays(np.asarray(w, dtype=float), np.asarray(k, dtype=float))
    active = w > k if sign > 0 else w < k
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        close = np.abs(w - k) < 0.05 * np.abs(k)
        out = np.where(close, _near_diagonal(w, np.where(close, k, 1.0), p), _young_gap(w, k, p))
    out = np.where(active, np.maximum(out, 0.0), 0.0)
    return out if out.ndim else float(out)


def b_form(u, v, p):
    """Bregman divergence of ``|s|**p``: ``|u|**p - |v|**p - p v**(p-1) (u - v)``."""
    p = check_exponent(p)
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if np.any(u < 0) or np.any(v < 0):
        raise ValueError("b_form is defined here for nonnegative arguments")
    out = u**p - v**p - p * v ** (p - 1.0) * (u - v)
    out = np.maximum(out, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SpaceTimeField:
    """Slices ``values[i]`` at uniformly spaced ``times[i]``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != t.shape[0]:
            raise ValueError("need one slice per time")
        if len(t) > 1:
            dt = np.diff(t)
            h = (t[-1] - t[0]) / (len(t) - 1)
            if h <= 0 or np.max(np.abs(dt - h)) > 1e-12 * max(abs(h), abs(t[-1])):
                raise NonuniformGrid("time grid is not uniformly spaced")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def step(self):
        if len(self.times) < 2:
            return float("nan")
        return float((self.times[-1] - self.times[0]) / (len(self.times) - 1))

    def __len__(self):
        return len(self.times)

    def scaled(self, lam):
        return SpaceTimeField(self.times, lam * self.values)

    def dump_csv(self, path):
        with open(path, "w", newline="") as fh:
            write_field_rows(csv.writer(fh, lineterminator="\n"), self)


def write_field_rows(writer, field):
    writer.writerow(["t", "vertex", "value"])
    for t, row in zip(field.times, field.values):
        ts = f"{t:.12g}"
        writer.writerows((ts, x, repr(float(val))) for x, val in enumerate(row))


def time_mollify(f, delta):
    """Exponential time mollification started at the first grid time.

    The kernel is integrated exactly against the piecewise-constant
    interpolant that takes ``values[i]`` on ``(times[i-1], times[i]]``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if len(f) < 2:
        return SpaceTimeField(f.times, np.zeros_like(f.values))
    decay = np.exp(-f.step / delta)
    out = np.zeros_like(f.values)
    for i in range(1, len(f)):
        out[i] = decay * out[i - 1] + (1.0 - decay) * f.values[i]
    return SpaceTimeField(f.times, out)
