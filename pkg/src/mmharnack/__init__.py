"""Doubly nonlinear diffusion on weighted graphs and Harnack-type measurements."""

from .calculus import SpaceTimeField, b_form, g_plus_minus, p_energy, signed_power, time_mollify, vertex_gradient
from .families import generate, landmarks
from .geometry import annular_decay_fit, doubling_constant, volume_exponents
from .graph import Ball, MetricMeasureGraph, ball, build_graph, load_graph, save_graph, set_measure
from .harnack import (
    degiorgi_simulate,
    degiorgi_threshold,
    elliptic_harnack_quotient,
    harnack_cylinders,
    holder_decay,
    parabolic_harnack_quotient,
    positivity_probe,
)
from .inequalities import (
    PoincareSpec,
    global_poincare_constant,
    poincare_constant,
    poincare_ratio,
    reverse_holder_check,
    zero_bv_constant,
)
from .parabolic import CauchyProblem, dirac_experiment, restrict, solve_cauchy
from .variational import (
    DirichletProblem,
    SolverConfig,
    minimize_convex,
    mm_step,
    solve_p2_linear,
    solve_p_dirichlet,
)

__version__ = "0.1.0"
