"""Benchmark graph families with unit data unless overridden."""

from .errors import InvalidFamilyParams
from .graph import build_graph

FAMILIES = ("path", "grid", "torus", "dumbbell", "star", "binary_tree")


def _int(params, key, minimum):
    try:
        value = params[key]
    except KeyError:
        raise InvalidFamilyParams(f"missing parameter {key!r}") from None
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise InvalidFamilyParams(f"{key} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def _grid_edges(a, b, offset=0, wrap=False):
    idx = lambda i, j: offset + i * b + j  # noqa: E731
    edges = []
    for i in range(a):
        for j in range(b):
            if j + 1 < b or (wrap and b > 2):
                edges.append((idx(i, j), idx(i, (j + 1) % b)))
            if i + 1 < a or (wrap and a > 2):
                edges.append((idx(i, j), idx((i + 1) % a, j)))
    return edges


def _path(params):
    n = _int(params, "n", 2)
    return n, [(i, i + 1) for i in range(n - 1)]


def _grid(params):
    a, b = _int(params, "a", 1), _int(params, "b", 1)
    if a * b < 2:
        raise InvalidFamilyParams("grid needs at least two vertices")
    return a * b, _grid_edges(a, b)


def _torus(params):
    a, b = _int(params, "a", 3), _int(params, "b", 3)
    return a * b, _grid_edges(a, b, wrap=True)


def _dumbbell(params):
    # two m x m bulbs; a neck path of n vertices joins the middle of the
    # right side of bulb A to the middle of the left side of bulb B
    m, n = _int(params, "m", 2), _int(params, "n", 1)
    size = m * m
    edges = _grid_edges(m, m) + _grid_edges(m, m, offset=size)
    neck = [2 * size + i for i in range(n)]
    edges.append(((m // 2) * m + (m - 1), neck[0]))
    edges += [(neck[i], neck[i + 1]) for i in range(n - 1)]
    edges.append((neck[-1], size + (m // 2) * m))
    return 2 * size + n, edges


def _star(params):
    k, n = _int(params, "k", 1), _int(params, "n", 1)
    edges = []
    for arm in range(k):
        first = 1 + arm * n
        edges.append((0, first))
        edges += [(first + j, first + j + 1) for j in range(n - 1)]
    return 1 + k * n, edges


def _binary_tree(params):
    d = _int(params, "depth", 1)
    n = 2 ** (d + 1) - 1
    return n, [(i, c) for i in range(n) for c in (2 * i + 1, 2 * i + 2) if c < n]


_BUILDERS = {
    "path": _path,
    "grid": _grid,
    "torus": _torus,
    "dumbbell": _dumbbell,
    "star": _star,
    "binary_tree": _binary_tree,
}


def generate(family, params=None, **kwargs):
    """Build a benchmark graph.

    Parameters per family: ``path(n)``, ``grid(a, b)``, ``torus(a, b)``,
    ``dumbbell(m, n)`` with m x m bulbs and an n-vertex neck, ``star(k, n)``
    with k arms of n vertices, ``binary_tree(depth)``. Optional scalar
    overrides ``length``, ``conductance`` and ``measure`` apply uniformly.
    """
    params = dict(params or {}, **kwargs)
    try:
        builder = _BUILDERS[family]
    except KeyError:
        raise InvalidFamilyParams(f"unknown family {family!r}; expected one of {FAMILIES}") from None
    n, pairs = builder(params)
    length = float(params.get("length", 1.0))
    cond = float(params.get("conductance", 1.0))
    mu = float(params.get("measure", 1.0))
    if min(length, cond, mu) <= 0:
        raise InvalidFamilyParams("length, conductance and measure overrides must be positive")
    return build_graph([mu] * n, [(u, v, length, cond) for u, v in pairs])


def landmarks(family, params=None, **kwargs):
    """Named vertices of a generated family, for use in experiment configs.

    Every family has ``first``. Grids and tori add ``middle``; dumbbells add
    ``bulb_a``, ``bulb_b`` (bulb centres), ``neck_entry`` and ``neck_exit``
    (the bulb vertices the neck attaches to) and ``neck_mid``.
    """
    params = dict(params or {}, **kwargs)
    marks = {"first": 0}
    if family in ("grid", "torus"):
        a, b = int(params["a"]), int(params["b"])
        marks["middle"] = (a // 2) * b + b // 2
    elif family == "dumbbell":
        m, n = int(params["m"]), int(params["n"])
        size, mid = m * m, (m // 2) * m
        marks.update(
            bulb_a=mid + m // 2,
            bulb_b=size + mid + m // 2,
            neck_entry=mid + m - 1,
            neck_exit=size + mid,
            neck_mid=2 * size + (n - 1) // 2,
        )
    elif family == "path":
        marks["middle"] = int(params["n"]) // 2
    return marks
