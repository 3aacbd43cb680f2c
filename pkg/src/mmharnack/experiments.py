"""Declarative experiment runner behind the command line.

A config is one experiment object or ``{"suite": [...]}``. Each experiment
names a space (a generated family or a graph file), a scenario, a list of
exponents and scenario parameters. Every (experiment, space, p) triple is an
independent work item with its own child seed.
"""

import csv
import json
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata

import numpy as np
import scipy

from . import geometry, harnack, inequalities, parabolic
from .errors import (
    ConfigInvalid,
    DegenerateOscillation,
    GraphTooSmall,
    InsufficientResolution,
    InsufficientScales,
    MMHarnackError,
    UnderResolved,
)
from .families import FAMILIES, generate, landmarks
from .graph import ball, load_graph
from .variational import SolverConfig

SCENARIOS = ("geometry", "poincare", "cauchy", "harnack", "dirichlet", "dirac", "degiorgi")

REQUIRED_PARAMS = {"harnack": ("radii",), "dirac": ("radii",), "cauchy": ("T", "steps"),
                   "dirichlet": ("R",), "poincare": ("radii",)}

# recorded as warnings on the item; everything else is a hard error
SOFT_ERRORS = (UnderResolved, InsufficientScales, InsufficientResolution,
               DegenerateOscillation, GraphTooSmall)

HARNACK_COLUMNS = ["family", "params", "p", "x0", "r", "t0", "h", "slices_minus",
                   "slices_plus", "H", "He", "kappa"]
CONSTANT_COLUMNS = ["kind", "family", "params", "q", "p", "tau", "center", "r", "value",
                    "restarts", "oracle_gap"]
DIAGNOSTIC_COLUMNS = ["step", "t", "mass", "energy", "dissipation", "iterations", "residual"]

PRESETS = {
    "torus-baseline": {
        "suite": [
            {
                "name": "torus-harnack",
                "space": {"family": "torus", "params": {"a": 64, "b": 64}},
                "scenario": "harnack",
                "p": [1.5, 2, 3],
                "params": {"x0": "middle", "radii": [3, 5, 8], "slices": 4, "refine": [1]},
            },
            {
                "name": "torus-geometry",
                "space": {"family": "torus", "params": {"a": 32, "b": 32}},
                "scenario": "geometry",
                "p": [2],
                "params": {},
            },
        ],
        "seed": 20240601,
    },
    "dumbbell-sweep": {
        "suite": [
            {
                "name": "dumbbell-harnack",
                "space": [{"family": "dumbbell", "params": {"m": 8, "n": n}} for n in (4, 8, 16)],
                "scenario": "harnack",
                "p": [2],
                "params": {"x0": "neck_exit", "source": "bulb_a", "radii": [3, 5, 8],
                           "slices": 4, "refine": [1]},
            },
            {
                "name": "dumbbell-poincare",
                "space": [{"family": "dumbbell", "params": {"m": 8, "n": n}} for n in (4, 8, 16)],
                "scenario": "poincare",
                "p": [2],
                "params": {"centers": ["neck_mid"], "radii": ["cover"], "tau": 1, "q": 1},
            },
        ],
        "seed": 20240602,
    },
}


# ---------------------------------------------------------------- config


def load_config(source):
    """Parse a config path, preset name or dict into a normalised suite."""
    if isinstance(source, dict):
        raw = source
    elif source in PRESETS:
        raw = PRESETS[source]
    else:
        try:
            with open(source) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config {source!r}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigInvalid("config must be a JSON object")
    items = raw["suite"] if "suite" in raw else [raw]
    if not isinstance(items, list) or not items:
        raise ConfigInvalid("suite must be a nonempty list")
    suite = {"seed": raw.get("seed", 0), "suite": [_normalise(it, i) for i, it in enumerate(items)]}
    if not isinstance(suite["seed"], int) or not 0 <= suite["seed"] < 2**64:
        raise ConfigInvalid("seed must be a 64-bit unsigned integer")
    return suite


def _normalise(item, index):
    if not isinstance(item, dict):
        raise ConfigInvalid(f"item {index} is not an object")
    scenario = item.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigInvalid(f"item {index}: scenario must be one of {SCENARIOS}")
    spaces = item.get("space")
    spaces = spaces if isinstance(spaces, list) else [spaces]
    for s in spaces:
        if not isinstance(s, dict) or not (("family" in s) ^ ("file" in s)):
            raise ConfigInvalid(f"item {index}: each space needs exactly one of family or file")
        if "family" in s and s["family"] not in FAMILIES:
            raise ConfigInvalid(f"item {index}: unknown family {s['family']!r}")
    ps = item.get("p", [2])
    ps = ps if isinstance(ps, list) else [ps]
    if not ps or not all(isinstance(p, (int, float)) and p > 1 for p in ps):
        raise ConfigInvalid(f"item {index}: exponents must be numbers > 1")
    params = item.get("params", {})
    if not isinstance(params, dict):
        raise ConfigInvalid(f"item {index}: params must be an object")
    missing = [k for k in REQUIRED_PARAMS.get(scenario, ()) if k not in params]
    if missing:
        raise ConfigInvalid(f"item {index}: {scenario} needs params {missing}")
    solver = item.get("solver", {})
    try:
        SolverConfig(**solver)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"item {index}: bad solver settings: {exc}") from exc
    return {"name": item.get("name", f"item{index}"), "space": spaces, "scenario": scenario,
            "p": [float(p) for p in ps], "params": params, "solver": solver}


# ---------------------------------------------------------------- helpers


def _space(spec):
    if "file" in spec:
        g = load_graph(spec["file"])
        return "file", json.dumps({"file": spec["file"]}, sort_keys=True), g, {"first": 0}
    params = spec.get("params", {})
    g = generate(spec["family"], params)
    return spec["family"], json.dumps(params, sort_keys=True), g, landmarks(spec["family"], params)


def _vertex(name, marks, g):
    if isinstance(name, str):
        if name == "center":
            ecc = [g.distances_from(x).max() for x in range(g.n)]
            return int(np.argmin(ecc))
        if name not in marks:
            raise ConfigInvalid(f"unknown landmark {name!r}; known: {sorted(marks)}")
        return int(marks[name])
    return int(name)


def _clean(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------- scenarios


def _geometry(g, params, p, ctx):
    out = []
    d = geometry.doubling_constant(g, cap=params.get("cap"))
    out.append({"kind": "doubling", "value": d.constant, "center": d.center, "r": d.radius})
    try:
        v = geometry.volume_exponents(g)
        out += [{"kind": k, "value": getattr(v, k)} for k in ("Q", "alpha", "convexity")]
        a = geometry.annular_decay_fit(g, params.get("deltas", [0.05, 0.1, 0.2, 0.4]))
        out += [{"kind": "beta", "value": a.beta}, {"kind": "annular_c", "value": a.c}]
    except InsufficientScales as exc:
        ctx["warnings"].append(f"InsufficientScales: {exc}")
    return out


def _oracle_gap(g, spec, value, rng, samples=20000):
    members = ball(g, spec.ball.center, spec.tau * spec.ball.radius).members
    if len(members) > 6:
        return None
    best = 0.0
    u = np.zeros(g.n)
    for x in rng.standard_normal((samples, len(members))):
        u[members] = x
        try:
            best = max(best, inequalities.poincare_ratio(g, spec, u))
        except MMHarnackError:
            continue
    return abs(value - best) / best if best > 0 else None


def _poincare(g, params, p, ctx):
    out = []
    tau, q = float(params.get("tau", 1.0)), float(params.get("q", 1.0))
    acfg = inequalities.AscentConfig(restarts=int(params.get("restarts", 8)))
    for c in params.get("centers", ["center"]):
        x = _vertex(c, ctx["marks"], g)
        for r in params["radii"]:
            r = g.distances_from(x).max() + 0.5 if r == "cover" else float(r)
            B = ball(g, x, r)
            if len(ball(g, x, tau * r)) < 2:
                ctx["warnings"].append(f"singleton ball at center {x}, r={r:g} skipped")
                continue
            spec = inequalities.PoincareSpec(B, tau, q, p)
            est = inequalities.poincare_constant(g, spec, acfg, seed=int(ctx["rng"].integers(2**63)))
            out.append({"kind": "poincare", "q": q, "tau": tau, "center": x, "r": r,
                        "value": est.value, "restarts": acfg.restarts,
                        "oracle_gap": _oracle_gap(g, spec, est.value, ctx["rng"])})
            if params.get("zero_bv") and len(B) < g.n:
                z = inequalities.zero_bv_constant(g, B, p, acfg, seed=int(ctx["rng"].integers(2**63)))
                out.append({"kind": "zero_bv", "q": p, "tau": 1.0, "center": x, "r": r,
                            "value": z.value, "restarts": acfg.restarts, "oracle_gap": None})
    return out


def _initial(g, params, ctx, default_center):
    spec = params.get("u0", {})
    center = _vertex(spec.get("center", params.get("source", default_center)), ctx["marks"], g)
    u = harnack.bump(g, center, float(spec.get("width", 2.0)))
    if spec.get("random"):
        u = u * ctx["rng"].uniform(0.5, 1.5)
    return u + float(spec.get("background", 0.0))


def _cauchy(g, params, p, ctx):
    u0 = _initial(g, params, ctx, "first")
    prob = parabolic.CauchyProblem(g, u0, float(params["T"]), int(params["steps"]), p)
    sol = parabolic.solve_cauchy(prob, ctx["solver"], params.get("method", "auto"))
    rows = sol.diagnostics_rows()
    m0 = sol.mass[0]
    return [{
        "kind": "cauchy",
        "T": prob.T,
        "steps": prob.steps,
        "mass_drift": float(np.max(np.abs(sol.mass - m0)) / m0) if m0 else 0.0,
        "energy_increase": float(np.max(np.diff(sol.energy) / np.maximum(sol.energy[:-1], 1e-300))),
        "dissipation_ratio": float(np.nansum(sol.dissipation) * sol.h / sol.energy[0])
        if sol.energy[0] else 0.0,
        "min_value": float(sol.field.values.min()),
        "diagnostics": rows,
    }]


def _harnack(g, params, p, ctx):
    out = []
    x0 = _vertex(params.get("x0", "center"), ctx["marks"], g)
    u0 = _initial(g, params, ctx, x0)
    refine = params.get("refine", [1])
    for r in params["radii"]:
        r = float(r)
        for k in refine:
            rec = {"x0": x0, "r": r, "refine": int(k), "He": None, "kappa": None}
            try:
                q, _ = harnack.harnack_experiment(g, x0, r, p, int(params.get("slices", 4)),
                                                  int(k), u0, ctx["solver"])
            except UnderResolved as exc:
                ctx["warnings"].append(f"UnderResolved at r={r:g}: {exc}")
                continue
            rec.update(t0=q.t0, h=q.h, slices_minus=q.slices_minus, slices_plus=q.slices_plus,
                       H=q.H)
            if math.isinf(q.H):
                ctx["warnings"].append(f"infinite quotient at r={r:g}, refine={k}")
            if params.get("elliptic") and k == refine[0]:
                e = harnack.elliptic_harnack_quotient(g, x0, r, u0, p, ctx["solver"])
                rec["He"] = e.H
                try:
                    rec["kappa"] = harnack.holder_decay(g, x0, 4 * r, p, 3, u=e.solution).kappa
                except (InsufficientResolution, DegenerateOscillation) as exc:
                    ctx["warnings"].append(f"kappa unavailable at r={r:g}: {exc}")
            out.append(rec)
    return out


def _dirichlet(g, params, p, ctx):
    x0 = _vertex(params.get("x0", "center"), ctx["marks"], g)
    bnd, vals = _boundary(g, params, ctx)
    res = harnack.holder_decay(g, x0, float(params["R"]), p, int(params.get("levels", 3)),
                               ctx["solver"], boundary=bnd, boundary_values=vals)
    return [{"kind": "holder", "x0": x0, "R": float(params["R"]), "kappa": res.kappa,
             "residual": res.residual, "radii": res.radii, "effective_radii": res.effective_radii,
             "osc": res.osc, "ratios": res.ratios, "harnack": res.harnack, "H_e": res.H_e,
             "gamma": res.gamma}]


def _boundary(g, params, ctx):
    spec = params.get("boundary", "perimeter")
    if spec == "perimeter":
        sp = ctx["space"]
        if sp.get("family") != "grid":
            raise ConfigInvalid("perimeter boundary needs a grid space")
        a, b = int(sp["params"]["a"]), int(sp["params"]["b"])
        ij = np.array([(i, j) for i in range(a) for j in range(b)
                       if i in (0, a - 1) or j in (0, b - 1)])
        bnd = ij[:, 0] * b + ij[:, 1]
        vals = np.zeros(g.n)
        vals[bnd[ij[:, 0] == 0]] = 1.0
        return bnd, vals
    vals = np.zeros(g.n)
    vals[np.asarray(spec["vertices"], dtype=int)] = np.asarray(spec["values"], dtype=float)
    return spec["vertices"], vals


def _dirac(g, params, p, ctx):
    x0 = _vertex(params.get("x0", "center"), ctx["marks"], g)
    out = []
    for r in params["radii"]:
        rep = parabolic.dirac_experiment(g, x0, float(r), p, ctx["solver"],
                                         int(params.get("slices", 8)),
                                         bool(params.get("forward", True)))
        ctx["warnings"] += [f"{w} at r={float(r):g}" for w in rep.warnings]
        out.append({"kind": "dirac", **rep.as_dict()})
    return out


def _degiorgi(g, params, p, ctx):
    triples = params.get("triples")
    if triples is None:
        rng = ctx["rng"]
        triples = [(float(rng.uniform(0.1, 10)), float(rng.uniform(2, 8)),
                    float(rng.uniform(1.2, 3))) for _ in range(int(params.get("count", 10)))]
    n = int(params.get("n", 50))
    out = []
    for c, b, kappa in triples:
        y = harnack.degiorgi_threshold(c, b, kappa)
        at = harnack.degiorgi_simulate(y, c, b, kappa, n)
        above = harnack.degiorgi_simulate(4 * y, c, b, kappa, n)
        out.append({"kind": "degiorgi", "c": c, "b": b, "kappa": kappa, "Y0_max": y,
                    "decay_at_max": at[-1] / y, "growth_at_4x": above[-1] / (4 * y)})
    return out


_RUNNERS = {"geometry": _geometry, "poincare": _poincare, "cauchy": _cauchy,
            "harnack": _harnack, "dirichlet": _dirichlet, "dirac": _dirac,
            "degiorgi": _degiorgi}


# ---------------------------------------------------------------- driver


def _work_items(suite, seed):
    units = []
    for i, item in enumerate(suite["suite"]):
        for j, space in enumerate(item["space"]):
            for p in item["p"]:
                units.append((i, j, item, space, p))
    children = np.random.SeedSequence(seed).spawn(len(units))
    return [u + (c,) for u, c in zip(units, children)]


def _run_unit(unit, overrides):
    i, j, item, space, p, seq = unit
    family, params_json, g, marks = _space(space)
    solver = SolverConfig(**{**item["solver"], **overrides})
    ctx = {"rng": np.random.default_rng(seq), "marks": marks, "solver": solver,
           "warnings": [], "space": space}
    start = time.perf_counter()
    head = {"item": item["name"], "scenario": item["scenario"], "family": family,
            "params": params_json, "p": p}
    try:
        records = _RUNNERS[item["scenario"]](g, item["params"], p, ctx)
        error = None
    except SOFT_ERRORS as exc:
        records, error = [], None
        ctx["warnings"].append(f"{type(exc).__name__}: {exc}")
    except (MMHarnackError, ValueError) as exc:
        records, error = [], f"{type(exc).__name__}: {exc}"
    result = {**head, "records": [_clean({**head, **r}) for r in records],
              "warnings": ctx["warnings"], "error": error}
    return result, {"item": item["name"], "family": family, "params": params_json, "p": p,
                    "seconds": time.perf_counter() - start}


def _versions():
    try:
        own = metadata.version("mmharnack")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"mmharnack": own, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run(config, out_dir, seed=None, threads=1, tolerance=None, max_iterations=None):
    """Run every work item and write the report and tables into ``out_dir``.

    Returns the report dict. Wall-clock times go to ``timings.json`` so that
    ``report.json`` depends only on the config and seed.
    """
    suite = load_config(config)
    if seed is not None:
        suite["seed"] = int(seed)
    overrides = {}
    if tolerance is not None:
        overrides["gradient_tolerance"] = float(tolerance)
    if max_iterations is not None:
        overrides["max_iterations"] = int(max_iterations)
    units = _work_items(suite, suite["seed"])
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda u: _run_unit(u, overrides), units))
    else:
        results = [_run_unit(u, overrides) for u in units]
    report = {
        "config": suite,
        "overrides": overrides,
        "versions": _versions(),
        "results": [r for r, _ in results],
        "warnings": [f"{r['item']}/{r['family']}/p={r['p']:g}: {w}"
                     for r, _ in results for w in r["warnings"]],
        "errors": [f"{r['item']}/{r['family']}/p={r['p']:g}: {r['error']}"
                   for r, _ in results if r["error"]],
    }
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "timings.json"), "w") as fh:
        json.dump([t for _, t in results], fh, indent=1)
        fh.write("\n")
    _write_tables(report, out_dir)
    return report


def _records(report, scenario):
    for res in report["results"]:
        if res["scenario"] == scenario:
            yield from res["records"]


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def _write_tables(report, out_dir):
    _write_csv(os.path.join(out_dir, "harnack_sweep.csv"), HARNACK_COLUMNS,
               _records(report, "harnack"))
    constants = []
    for rec in _records(report, "geometry"):
        constants.append({**rec, "q": None, "tau": None})
    constants += list(_records(report, "poincare"))
    _write_csv(os.path.join(out_dir, "constants.csv"), CONSTANT_COLUMNS, constants)
    n = 0
    for res in report["results"]:
        if res["scenario"] != "cauchy":
            continue
        for rec in res["records"]:
            name = f"diagnostics_{n:03d}_{res['family']}_p{res['p']:g}.csv"
            _write_csv(os.path.join(out_dir, name), DIAGNOSTIC_COLUMNS, rec["diagnostics"])
            n += 1


PLOT_TABLES = {
    "H_vs_r.csv": ("harnack", ["family", "params", "p", "r", "refine", "H"]),
    "mass_energy.csv": ("cauchy", ["family", "params", "p", "step", "t", "mass", "energy",
                                   "dissipation"]),
    "constants_long.csv": ("constants", ["kind", "family", "params", "p", "r", "value"]),
    "dirac_ratios.csv": ("dirac", ["family", "params", "p", "r", "lower_ratio", "upper_ratio"]),
    "holder_decay.csv": ("dirichlet", ["family", "params", "p", "level", "radius", "osc",
                                       "ratio"]),
    "degiorgi.csv": ("degiorgi", ["c", "b", "kappa", "Y0_max", "decay_at_max",
                                  "growth_at_4x"]),
}


def _plot_rows(report, scenario):
    if scenario == "constants":
        yield from _records(report, "geometry")
        yield from _records(report, "poincare")
    elif scenario == "cauchy":
        for rec in _records(report, "cauchy"):
            for row in rec["diagnostics"]:
                yield {**rec, **row}
    elif scenario == "dirichlet":
        for rec in _records(report, "dirichlet"):
            for k, (r, o) in enumerate(zip(rec["radii"], rec["osc"])):
                ratio = rec["ratios"][k - 1] if k else None
                yield {**rec, "level": k, "radius": r, "osc": o, "ratio": ratio}
    else:
        yield from _records(report, scenario)


def emit_plotdata(report, out_dir):
    """Write one long-format CSV per figure family; returns the file paths."""
    if isinstance(report, str):
        with open(report) as fh:
            report = json.load(fh)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, (scenario, columns) in PLOT_TABLES.items():
        path = os.path.join(out_dir, name)
        _write_csv(path, columns, _plot_rows(report, scenario))
        paths.append(path)
    return paths
