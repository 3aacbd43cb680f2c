import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmharnack import (
    PoincareSpec,
    b_form,
    ball,
    build_graph,
    doubling_constant,
    elliptic_harnack_quotient,
    g_plus_minus,
    generate,
    harnack_cylinders,
    p_energy,
    parabolic_harnack_quotient,
    poincare_ratio,
    set_measure,
    vertex_gradient,
)
from mmharnack.calculus import SpaceTimeField
from mmharnack.inequalities import zero_bv_ratio
from mmharnack.parabolic import CauchySolution
from oracles import doubling_dense, floyd_warshall

exponents = st.floats(1.05, 6.0)


@st.composite
def graphs(draw, max_n=12, integer_lengths=False):
    n = draw(st.integers(2, max_n))
    lengths = st.sampled_from([0.5, 1.0, 1.5, 2.0]) if integer_lengths else st.floats(0.1, 5.0)
    edges = {}
    for v in range(1, n):
        u = draw(st.integers(0, v - 1))
        edges[(u, v)] = draw(lengths)
    for _ in range(draw(st.integers(0, n))):
        u, v = sorted(draw(st.lists(st.integers(0, n - 1), min_size=2, max_size=2, unique=True)))
        edges[(u, v)] = draw(lengths)
    mu = draw(st.lists(st.floats(0.1, 10.0), min_size=n, max_size=n))
    cond = st.floats(0.1, 10.0)
    return build_graph(mu, [(u, v, ln, draw(cond)) for (u, v), ln in sorted(edges.items())])


def fields(n):
    return st.lists(st.floats(-10, 10), min_size=n, max_size=n).map(np.array)


@given(graphs(), st.data())
def test_ball_monotone(g, data):
    x = data.draw(st.integers(0, g.n - 1))
    r1, r2 = sorted(data.draw(st.lists(st.floats(0.01, 20), min_size=2, max_size=2)))
    small, big = ball(g, x, r1), ball(g, x, r2)
    assert set(small.members) <= set(big.members) and x in small


@settings(max_examples=40)
@given(graphs())
def test_metric_axioms(g):
    D = g.distance_matrix()
    assert np.all(np.diag(D) == 0) and np.all(D[~np.eye(g.n, dtype=bool)] > 0)
    assert np.array_equal(D, D.T)
    # D[i, k] <= D[i, j] + D[j, k] over all triples
    assert np.all(D[:, None, :] <= D[:, :, None] + D[None, :, :] + 1e-12)


@settings(max_examples=25)
@given(graphs(max_n=8))
def test_distances_match_oracle(g):
    edges = [(int(a), int(b), float(l)) for a, b, l in zip(g.tail, g.head, g.length)]
    assert np.allclose(g.distance_matrix(), floyd_warshall(g.n, edges))


@given(graphs(), st.data())
def test_measure_additive(g, data):
    subsets = st.lists(st.integers(0, g.n - 1), unique=True)
    A, B = set(data.draw(subsets)), set(data.draw(subsets))
    lhs = set_measure(g, A | B) + set_measure(g, A & B)
    assert lhs == pytest.approx(set_measure(g, A) + set_measure(g, B))


@settings(max_examples=30, deadline=None)
@given(graphs(max_n=9, integer_lengths=True))
def test_doubling_matches_dense_oracle(g):
    expected = doubling_dense(g.distance_matrix().tolist(), list(g.mu), g.diameter)
    assert doubling_constant(g).constant == pytest.approx(expected, rel=1e-12)


@given(graphs(), exponents, st.data())
def test_gradient_subadditive(g, p, data):
    u, v = data.draw(fields(g.n)), data.draw(fields(g.n))
    lhs = vertex_gradient(g, u + v, p)
    assert np.all(lhs <= (vertex_gradient(g, u, p) + vertex_gradient(g, v, p)) * (1 + 1e-9) + 1e-12)


@given(graphs(), exponents, st.floats(-10, 10), st.data())
def test_truncation_lowers_energy(g, p, k, data):
    u = data.draw(fields(g.n))
    assert p_energy(g, np.maximum(u - k, 0), p) <= p_energy(g, u, p) * (1 + 1e-12) + 1e-300


@given(graphs(), exponents, st.floats(-5, 5), st.data())
def test_energy_convex(g, p, t, data):
    u, v = data.draw(fields(g.n)), data.draw(fields(g.n))
    lam = 1 / (1 + np.exp(-t))
    mid = p_energy(g, lam * u + (1 - lam) * v, p)
    assert mid <= (lam * p_energy(g, u, p) + (1 - lam) * p_energy(g, v, p)) * (1 + 1e-9) + 1e-12


@given(st.floats(0, 50), st.floats(0, 50), exponents)
def test_b_form_bregman(u, v, p):
    b = b_form(u, v, p)
    assert b >= 0
    sym = p * (u ** (p - 1) - v ** (p - 1)) * (u - v)
    assert b + b_form(v, u, p) == pytest.approx(sym, rel=1e-9, abs=1e-9 * max(u, v, 1) ** p)


@given(st.floats(-20, 20), st.floats(-20, 20), exponents)
def test_g_sides(w, k, p):
    gp, gm = g_plus_minus(w, k, p, +1), g_plus_minus(w, k, p, -1)
    assert gp >= 0 and gm >= 0
    assert (gp == 0 if w <= k else gm == 0)


@given(st.floats(0.1, 20), st.floats(0, 1e4), st.floats(1.05, 8))
def test_cylinder_algebra(r, t0, p):
    g = generate("torus", a=10, b=10)
    pair = harnack_cylinders(g, 0, r, t0, p)
    assert pair.Qminus.t_end < pair.Qplus.t_start
    assert pair.Q.t_start <= pair.Qminus.t_start and pair.Qplus.t_end <= pair.Q.t_end
    assert set(pair.Qminus.ball.members) <= set(pair.Q.ball.members)
    # endpoints near t0 lose a few ulps of t0 when subtracted
    ulps = 4 * np.spacing(pair.Qplus.t_end)
    assert pair.Qplus.duration == pytest.approx((1 - 2.0**-p) * r**p, abs=ulps)


@given(st.floats(1e-6, 1e6))
def test_parabolic_quotient_scale_invariant(lam):
    g = generate("torus", a=6, b=6)
    rng = np.random.default_rng(5)
    vals = rng.random((41, g.n)) + 0.1
    times = np.linspace(0, 20, 41)
    sol = CauchySolution(g, SpaceTimeField(times, vals), 2.0, None, None, None)
    scaled = CauchySolution(g, SpaceTimeField(times, lam * vals), 2.0, None, None, None)
    a = parabolic_harnack_quotient(sol, 0, 2.0, 10.0)
    b = parabolic_harnack_quotient(scaled, 0, 2.0, 10.0)
    assert b.H == pytest.approx(a.H, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-3, 1e3), st.sampled_from([1.5, 2.0, 3.0]))
def test_elliptic_quotient_scale_invariant(lam, p):
    g = generate("torus", a=12, b=12)
    data = np.random.default_rng(6).random(g.n) + 0.05
    a = elliptic_harnack_quotient(g, 0, 1.5, data, p).H
    b = elliptic_harnack_quotient(g, 0, 1.5, lam * data, p).H
    assert b == pytest.approx(a, rel=1e-6)


def rescaled(g, lam, with_conductance):
    cond = lam * g.conductance if with_conductance else g.conductance
    return build_graph(lam * g.mu, list(zip(g.tail, g.head, g.length, cond)))


@given(graphs(max_n=10), st.floats(1e-3, 1e3), exponents, st.data())
def test_measure_rescaling(g, lam, p, data):
    x = data.draw(st.integers(0, g.n - 1))
    r = data.draw(st.floats(0.2, 10))
    u = data.draw(fields(g.n))
    inner = ball(g, x, r).members
    both, mu_only = rescaled(g, lam, True), rescaled(g, lam, False)
    if np.ptp(u[inner]) > 1e-6:
        base = poincare_ratio(g, PoincareSpec(ball(g, x, r), 1.0, 1.0, p), u)
        joint = poincare_ratio(both, PoincareSpec(ball(both, x, r), 1.0, 1.0, p), u)
        alone = poincare_ratio(mu_only, PoincareSpec(ball(mu_only, x, r), 1.0, 1.0, p), u)
        assert joint == pytest.approx(base, rel=1e-9)
        # g_u^p carries 1/mu, so its average scales like 1/lam
        assert alone == pytest.approx(lam ** (1 / p) * base, rel=1e-9)
    if len(inner) < g.n and np.abs(u[inner]).max() > 1e-3:
        base = zero_bv_ratio(g, ball(g, x, r), p, u)
        assert zero_bv_ratio(both, ball(both, x, r), p, u) == pytest.approx(base, rel=1e-9)
        assert zero_bv_ratio(mu_only, ball(mu_only, x, r), p, u) == pytest.approx(lam * base, rel=1e-9)


@given(st.sampled_from(["path", "grid", "torus", "dumbbell", "star", "binary_tree"]),
       st.integers(2, 5), st.integers(2, 5))
def test_generators_reproducible(family, a, b):
    params = {"path": {"n": a}, "grid": {"a": a, "b": b}, "torus": {"a": a + 1, "b": b + 1},
              "dumbbell": {"m": a, "n": b}, "star": {"k": a, "n": b},
              "binary_tree": {"depth": a}}[family]
    g, h = generate(family, params), generate(family, params)
    assert g.to_dict() == h.to_dict()
