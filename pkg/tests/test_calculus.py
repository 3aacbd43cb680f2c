import numpy as np
import pytest

from mmharnack import (
    SpaceTimeField,
    b_form,
    g_plus_minus,
    generate,
    p_energy,
    signed_power,
    time_mollify,
    vertex_gradient,
)
from mmharnack.calculus import check_exponent
from mmharnack.errors import GraphMismatch, NonuniformGrid
from oracles import g_plus_minus_quad, load_frozen

FROZEN = load_frozen()
K2 = generate("path", n=2)


def test_signed_power():
    assert signed_power(-2.0, 2.0) == -4.0
    assert signed_power(0.0, 0.5) == 0.0
    assert signed_power(3.0, 2.0) == 9.0
    assert np.array_equal(signed_power(np.array([-1.0, 4.0]), 0.5), [-1.0, 2.0])


@pytest.mark.parametrize("p", [1.0, 0.5, float("inf")])
def test_exponent_must_exceed_one(p):
    with pytest.raises(ValueError):
        check_exponent(p)


def test_gradient_of_constant_vanishes():
    g = generate("torus", a=4, b=4)
    assert np.all(vertex_gradient(g, np.full(16, 2.5), 3.0) == 0.0)


def test_k2_gradient():
    assert np.allclose(vertex_gradient(K2, [0.0, 1.0], 2.0), np.sqrt(0.5))


def test_gradient_homogeneous():
    g = generate("grid", a=3, b=3)
    u = np.random.default_rng(1).standard_normal(9)
    assert np.allclose(vertex_gradient(g, -3 * u, 2.5), 3 * vertex_gradient(g, u, 2.5))


def test_gradient_rejects_wrong_length():
    with pytest.raises(GraphMismatch):
        vertex_gradient(K2, [1.0, 2.0, 3.0], 2.0)


@pytest.mark.parametrize("p", [1.5, 2.0, 4.0])
def test_energy_examples(p):
    assert p_energy(K2, [0.0, 1.0], p) == FROZEN["k2_step_energy"] * 9
    assert p_energy(K2, [7.0, 7.0], p) == 0.0


def test_p3_energy():
    assert p_energy(generate("path", n=3), [0.0, 1.0, 3.0], 2.0) == FROZEN["p3_energy_013"]


def test_vertex_and_edge_sums_agree():
    g = generate("dumbbell", m=3, n=2, length=0.7, conductance=1.3, measure=0.4)
    u = np.random.default_rng(2).random(g.n)
    for p in (1.3, 2.0, 3.7):
        vsum = float(g.mu @ vertex_gradient(g, u, p) ** p)
        assert vsum == pytest.approx(p_energy(g, u, p), rel=1e-12)


def test_energy_within_ignores_outgoing_edges():
    g = generate("path", n=4)
    assert p_energy(g, [0.0, 1.0, 3.0, 6.0], 2.0, within=[1, 2]) == 4.0


class TestGPlusMinus:
    def test_vanish_on_inactive_side(self):
        assert g_plus_minus(1.0, 1.0, 2.7, +1) == 0.0
        assert g_plus_minus(0.5, 1.0, 2.7, +1) == 0.0
        assert g_plus_minus(1.5, 1.0, 2.7, -1) == 0.0

    def test_frozen_values(self):
        assert g_plus_minus(2.0, 1.0, 2.0, +1) == pytest.approx(FROZEN["g_plus_2_1_p2"], rel=1e-14)
        assert g_plus_minus(2.0, 1.0, 3.0, +1) == pytest.approx(FROZEN["g_plus_2_1_p3"], rel=1e-14)
        assert FROZEN["g_plus_2_1_p3"] == pytest.approx(5 / 3, rel=1e-14)

    @pytest.mark.parametrize("w, k", [(3.0, -2.0), (-2.0, 3.0), (-1.0, -4.0), (-4.0, -1.0),
                                      (0.0, 2.0), (2.0, 0.0), (1.01, 1.0), (-1.0, -1.02)])
    @pytest.mark.parametrize("p", [1.25, 1.5, 2.0, 3.0, 4.0])
    def test_branches_match_quadrature(self, w, k, p):
        for sign in (+1, -1):
            ref = g_plus_minus_quad(w, k, p, sign)
            assert g_plus_minus(w, k, p, sign) == pytest.approx(ref, rel=1e-9, abs=1e-300)

    def test_vectorised(self):
        w = np.array([2.0, 0.0, -1.0])
        out = g_plus_minus(w, 0.5, 2.0, +1)
        assert out.shape == (3,) and out[1] == out[2] == 0.0


class TestBForm:
    def test_zero_on_diagonal(self):
        assert b_form(1.7, 1.7, 3.3) == 0.0

    def test_p2_is_square(self):
        assert b_form(3.0, 1.0, 2.0) == 4.0

    def test_frozen_case_and_symmetry(self):
        assert b_form(2.0, 1.0, 3.0) == FROZEN["b_2_1_p3"]
        assert b_form(2.0, 1.0, 3.0) + b_form(1.0, 2.0, 3.0) == pytest.approx(9.0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            b_form(-1.0, 1.0, 2.0)


class TestMollifier:
    def test_zero_stays_zero(self):
        f = SpaceTimeField(np.linspace(0, 1, 11), np.zeros((11, 3)))
        assert np.all(time_mollify(f, 0.3).values == 0.0)

    def test_constant_tracks_closed_form(self):
        for steps in (40, 80):
            t = np.linspace(0, 2, steps + 1)
            out = time_mollify(SpaceTimeField(t, np.ones((steps + 1, 2))), 0.5)
            err = np.abs(out.values[:, 0] - (1 - np.exp(-t / 0.5))).max()
            assert err < 2.0 / steps

    def test_converges_as_delta_shrinks(self):
        t = np.linspace(0, 1, 2001)
        f = SpaceTimeField(t, np.sin(3 * t)[:, None] + 1.0)
        errs = [np.abs(time_mollify(f, d).values[200:, 0] - f.values[200:, 0]).max()
                for d in (0.1, 0.03, 0.01)]
        assert errs[0] > errs[1] > errs[2]

    def test_nonuniform_grid_rejected(self):
        with pytest.raises(NonuniformGrid):
            SpaceTimeField(np.array([0.0, 1.0, 3.0]), np.zeros((3, 1)))

    def test_delta_positive(self):
        with pytest.raises(ValueError):
            time_mollify(SpaceTimeField(np.arange(3.0), np.zeros((3, 1))), 0.0)


def test_field_csv(tmp_path):
    f = SpaceTimeField(np.array([0.0, 0.1]), np.array([[1.0, 2.0], [3.0, 4.0]]))
    f.dump_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "t,vertex,value"
    assert lines[3] == "0.1,0,3.0" and len(lines) == 5
