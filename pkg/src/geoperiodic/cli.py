"""Command-line entry point: ``geoperiodic <command> [--config FILE] [--set key=value ...]``.

Every command has a shipped default configuration (see ``--show-config``);
a JSON file and ``--set`` overrides are merged on top of it with strict key
checking. Outputs are a CSV data file and a JSON report written atomically
into ``--out-dir``.

Exit codes: 0 success, 1 runtime or configuration error, 2 assertion failure,
3 certificate failure, 4 invalid certificate candidate.
"""

import argparse
import copy
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np

log = logging.getLogger("geoperiodic")

EXIT_OK, EXIT_ERROR, EXIT_ASSERT, EXIT_CERT_FAIL, EXIT_INVALID = 0, 1, 2, 3, 4

THEOREM1_SYSTEM = {
    "name": "linear_oscillator",
    "params": {"disturbance": 0.1},
    "epsilon": 0.1,
    "M_X": 3.1,
    "lambda": 1.0,
    "omega": {"m": 1.0, "M": 1.0, "lambda_omega": 0.01},
}

CONTRACTING = {"name": "linear_oscillator", "params": {"a": -1.0, "amplitude": 0.0}}
EXPANDING = {"name": "linear_oscillator", "params": {"a": 1.0, "amplitude": 0.0, "domain": [-3.0, 3.0]}}
PERIODIC_FORCED = {"name": "linear_oscillator", "params": {"a": -1.0, "amplitude": 1.0}}

DEFAULTS = {
    "average": {"system": PERIODIC_FORCED, "x": [0.5], "n_phi": 64},
    "reach": {
        "system": THEOREM1_SYSTEM,
        "R0": [[0.5]],
        "phi0": 0.0,
        "T": 5.0,
        "dt": 1e-3,
        "h": 5e-3,
        "seed": 0,
        "record_every": 10,
    },
    "poincare": {"system": PERIODIC_FORCED, "R0": [[0.0]], "phi0": 0.0, "dphi": 1e-3, "h": 1e-4},
    "periodic": {
        "system": PERIODIC_FORCED,
        "R0": [[0.0]],
        "phi0": 0.0,
        "dphi": 1e-3,
        "h": 1e-4,
        "tol": 1e-3,
        "max_iter": 20,
        "assert": {"converged": True},
    },
    "certify": {
        "system": CONTRACTING,
        "candidate": {"P": [[1.0]], "alpha": {"kind": "linear", "lambda": 2.0}},
        "box": [[-2.0], [2.0]],
        "n_samples": 2000,
        "seed": 0,
        "mode": "sup",
        "fd_step": 1e-5,
        "slack": 1e-8,
    },
    "certify-funnel": {
        "system": {"name": "linear_oscillator", "params": {"a": -1.0, "amplitude": 0.5}},
        "candidate": {"P": [[1.0]], "alpha": {"kind": "linear", "lambda": 2.0}},
        "funnel": {"lo": -1.0, "hi": 1.0},
        "funnel_file": None,
        "n_samples": 500,
        "seed": 0,
        "slack": 1e-8,
    },
    "theorem1": {
        "system": THEOREM1_SYSTEM,
        "eps": [0.1, 0.05, 0.025],
        "L": 2.0,
        "dt": 1e-3,
        "h": 5e-3,
        "x0": [0.5],
        "n_phi": 32,
        "record_every": 10,
        "seed": 0,
        "assert": {"ratio_min": 0.3, "ratio_max": 0.8, "fitted_below_bound": True},
    },
    "theorem2": {
        "system": {"name": "linear_oscillator", "params": {"center": 1.0}, "omega": {"m": 1.0, "M": 1.0}},
        "eps": [0.2, 0.1],
        "K": 4.0,
        "L": 2.0,
        "dt": 5e-3,
        "h": 1e-2,
        "x0": [0.0],
        "n_phi": 32,
        "record_every": 10,
        "seed": 0,
        "assert": {"final_distance": True, "long_vs_short_factor": 2.0},
    },
    "theorem3": {
        "system": {"name": "linear_oscillator", "params": {"disturbance": 0.1}, "omega": {"m": 1.0, "M": 1.0}},
        "eps": [0.2, 0.1],
        "K": 4.0,
        "L": 2.0,
        "dt": 5e-3,
        "h": 1e-2,
        "x0": [0.0],
        "n_phi": 32,
        "record_every": 10,
        "seed": 0,
        "assert": {"gap_max": 0.5, "invariance_slack_h": 2.0},
    },
    "graph-distance": {
        "tau": 0.7,
        "T": 6.283185307179586,
        "dt": 1e-3,
        "eps_g": 0.05,
        "search": {"lo": -1.0, "hi": 1.0, "step": 1e-3},
    },
    "walker": {
        "steps": 10,
        "controller": "path_integral",
        "seed": 0,
        "dt": 0.01,
        "x0": [-0.3, 0.9],
        "funnel_file": None,
        "h": 5e-3,
        "params": {},
        "assert": {"stay_in_funnel": True},
    },
}

# keys whose value is a free-form mapping (not checked against the defaults)
_FREE_KEYS = {"params", "system", "search", "funnel", "candidate"}


class ConfigError(ValueError):
    pass


class InvalidCandidateError(ValueError):
    """The configured Lyapunov candidate violates its own bounds."""


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}; allowed: {', '.join(sorted(base))}")
        if isinstance(base[key], dict) and isinstance(val, dict) and key not in _FREE_KEYS:
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_json(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def _parse_set(item):
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    nested = value
    for part in reversed(key.split(".")):
        nested = {part: nested}
    return nested


def _deep_update(a, b):
    for k, v in b.items():
        if isinstance(v, dict) and isinstance(a.get(k), dict):
            _deep_update(a[k], v)
        else:
            a[k] = v
    return a


def build_config(command, config_path=None, sets=()):
    cfg = DEFAULTS[command]
    if config_path:
        cfg = _merge(cfg, load_json(config_path))
    for item in sets:
        override = _parse_set(item)
        key = next(iter(override))
        if key in _FREE_KEYS and isinstance(cfg.get(key), dict) and isinstance(override[key], dict):
            cfg = copy.deepcopy(cfg)
            _deep_update(cfg[key], override[key])
        else:
            cfg = _merge(cfg, override)
    _check_numbers(cfg)
    return cfg


_NONNEGATIVE_KEYS = {"seed", "slack"}
_SIGNED_KEYS = {"phi0", "x", "x0", "R0", "box", "lo", "hi", "center", "a", "ratio_min", "amplitude", "domain", "P"}


def _check_numbers(cfg, path=""):
    for key, val in cfg.items():
        if key in _SIGNED_KEYS or key in ("params", "system"):
            continue
        if isinstance(val, dict):
            _check_numbers(val, f"{path}{key}.")
        elif isinstance(val, bool) or val is None:
            continue
        elif isinstance(val, (int, float)) and key in _NONNEGATIVE_KEYS:
            if not val >= 0:
                raise ConfigError(f"{path}{key} must be non-negative, got {val}")
        elif isinstance(val, (int, float)) and not val > 0:
            raise ConfigError(f"{path}{key} must be positive, got {val}")
        elif isinstance(val, list) and all(isinstance(v, (int, float)) for v in val):
            if any(not v > 0 for v in val):
                raise ConfigError(f"{path}{key} entries must be positive")


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and an atomic rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _system(cfg):
    from .systems import build_system

    return build_system(cfg)


def _candidate(cfg, dim):
    from .contraction import FinslerCandidate

    unknown = set(cfg) - {"P", "alpha"}
    if unknown:
        raise ConfigError(f"unknown candidate keys: {sorted(unknown)}")
    P = np.asarray(cfg.get("P", np.eye(dim)), dtype=float).reshape(dim, dim)
    if not np.allclose(P, P.T) or np.linalg.eigvalsh(0.5 * (P + P.T))[0] <= 0:
        # dx^T P dx cannot be sandwiched between multiples of |dx|^2
        raise InvalidCandidateError(f"candidate matrix P={P.tolist()} is not symmetric positive definite")
    return FinslerCandidate.quadratic(P, dim, cfg.get("alpha"))


def _invalid_candidate(exc, claim):
    report = {"status": "invalid-candidate", "reason": str(exc)}
    return EXIT_INVALID, claim, _csv_text(["status", "reason"], [["invalid-candidate", str(exc)]]), report, \
        f"invalid-candidate: {exc}"


# ---------------------------------------------------------------- commands

def cmd_average(cfg):
    from .inclusion import average

    s = _system(cfg["system"])
    value = average(s.field, cfg["x"], cfg["n_phi"])
    rows = [list(v) for v in value.vertices]
    report = {"vertices": value.vertices, "x": cfg["x"], "n_phi": cfg["n_phi"]}
    header = [f"x{i + 1}" for i in range(s.field.dim)]
    return EXIT_OK, "phase average of the field value at one state", _csv_text(header, rows), report, \
        f"{len(rows)} averaged vertices"


def _solution_csv(sol):
    dim = sol.dim
    rows = []
    for sl in sol.slices:
        lo, hi = sl.phase_window if sl.phase_window is not None else (math.nan, math.nan)
        for i, p in enumerate(sl.set.points):
            rows.append([float(sl.param), i, *[float(v) for v in p], float(lo), float(hi)])
    header = ["param", "point_index"] + [f"x{i + 1}" for i in range(dim)] + ["phi_lo", "phi_hi"]
    return _csv_text(header, rows)


def cmd_reach(cfg):
    from .reach import propagate_time
    from .sets import CompactSet

    s = _system(cfg["system"])
    R0 = CompactSet(np.asarray(cfg["R0"], dtype=float))
    sol = propagate_time(s.field, s.omega, R0, phi0=cfg["phi0"], T=cfg["T"], dt=cfg["dt"], h=cfg["h"],
                         seed=cfg["seed"], domain=s.domain, record_every=cfg["record_every"])
    last = sol.last.points
    report = {"slices": len(sol.slices), "final_min": last.min(axis=0), "final_max": last.max(axis=0)}
    return EXIT_OK, "integral funnel of the inclusion over a time horizon", _solution_csv(sol), report, \
        f"{len(sol.slices)} slices, final set spans {last.min():.6g}..{last.max():.6g}"


def cmd_poincare(cfg):
    from .reach import poincare_map
    from .sets import CompactSet

    s = _system(cfg["system"])
    R0 = CompactSet(np.asarray(cfg["R0"], dtype=float))
    image = poincare_map(s.field, R0, cfg["phi0"], cfg["dphi"], cfg["h"], None, s.domain)
    header = [f"x{i + 1}" for i in range(image.dim)]
    report = {"image_min": image.points.min(axis=0), "image_max": image.points.max(axis=0), "points": len(image)}
    return EXIT_OK, "one-cycle phase return map of a compact set", _csv_text(header, image.points.tolist()), \
        report, f"image spans {image.points.min():.6g}..{image.points.max():.6g}"


def cmd_periodic(cfg):
    from .reach import periodic_funnel
    from .sets import CompactSet

    s = _system(cfg["system"])
    R0 = CompactSet(np.asarray(cfg["R0"], dtype=float))
    res = periodic_funnel(s.field, R0, cfg["phi0"], cfg["tol"], cfg["max_iter"], cfg["dphi"], cfg["h"], None,
                          s.domain)
    rows = [[i + 1, float(g)] for i, g in enumerate(res.gaps)]
    code = EXIT_OK
    if cfg["assert"]["converged"] and not res.converged:
        code = EXIT_ASSERT
    return code, "fixed point of the return map gives a phase-periodic funnel", _csv_text(["iteration", "gap"], rows), \
        res.to_dict(), f"converged={res.converged} after {res.iterations} iterations"


def _cert_exit(report):
    if report.passed:
        return EXIT_OK
    return EXIT_INVALID if report.status == "invalid-candidate" else EXIT_CERT_FAIL


def cmd_certify(cfg):
    from .contraction import certify_contraction

    claim = "sampled contraction certificate for a Finsler-Lyapunov candidate"
    s = _system(cfg["system"])
    try:
        cand = _candidate(cfg["candidate"], s.field.dim)
    except InvalidCandidateError as exc:
        return _invalid_candidate(exc, claim)
    box = (np.asarray(cfg["box"][0], float), np.asarray(cfg["box"][1], float))
    rep = certify_contraction(cand, s.field, box, cfg["n_samples"], cfg["seed"], cfg["slack"], cfg["mode"],
                              cfg["fd_step"])
    w = rep.witness
    rows = [[float(rep.worst_margin)] + list(np.atleast_1d(w.get("x", [math.nan]))) +
            list(np.atleast_1d(w.get("dx", [math.nan]))) + [float(w.get("phi", math.nan))]]
    header = ["worst_margin"] + [f"x{i + 1}" for i in range(s.field.dim)] + \
             [f"dx{i + 1}" for i in range(s.field.dim)] + ["phi"]
    return _cert_exit(rep), claim, _csv_text(header, rows), rep.to_dict(), \
        f"{rep.status}: worst margin {rep.worst_margin:.3e}"


def cmd_certify_funnel(cfg):
    from .contraction import certify_funnel
    from .funnels import Funnel

    claim = "funnel certificate: contraction outside and invariance on the boundary"
    s = _system(cfg["system"])
    try:
        cand = _candidate(cfg["candidate"], s.field.dim)
    except InvalidCandidateError as exc:
        return _invalid_candidate(exc, claim)
    if cfg["funnel_file"]:
        funnel = Funnel.from_json(cfg["funnel_file"])
    else:
        spec = cfg["funnel"]
        unknown = set(spec) - {"lo", "hi"}
        if unknown:
            raise ConfigError(f"unknown funnel keys: {sorted(unknown)}")
        funnel = Funnel.constant_interval(spec["lo"], spec["hi"])
    rep = certify_funnel(cand, s.field, funnel, cfg["n_samples"], cfg["seed"], slack=cfg["slack"])
    rows = [[float(rep.worst_margin), float(rep.extras["invariance_fraction"]), rep.extras["boundary_checks"]]]
    header = ["worst_margin", "invariance_fraction", "boundary_checks"]
    return _cert_exit(rep), claim, _csv_text(header, rows), rep.to_dict(), \
        f"{rep.status}: invariance {100 * rep.extras['invariance_fraction']:.1f}%"


def _scaling_csv(report):
    rows = []
    for eps, ts, gaps in report.series:
        rows.extend([float(eps), float(t), float(g)] for t, g in zip(ts, gaps))
    return _csv_text(["eps", "t", "dH"], rows)


def _theorem_kwargs(cfg):
    return dict(L=cfg["L"], dt=cfg["dt"], h=cfg["h"], x0=cfg["x0"], n_phi=cfg["n_phi"],
                record_every=cfg["record_every"], seed=cfg["seed"])


def cmd_theorem1(cfg):
    from .verify import run_finite_horizon

    s = _system(cfg["system"])
    rep = run_finite_horizon(s, cfg["eps"], **_theorem_kwargs(cfg))
    a = cfg["assert"]
    failures = []
    for r in rep.ratios:
        if a.get("ratio_min") is not None and r < a["ratio_min"]:
            failures.append(f"ratio {r:.4f} < {a['ratio_min']}")
        if a.get("ratio_max") is not None and r > a["ratio_max"]:
            failures.append(f"ratio {r:.4f} > {a['ratio_max']}")
    if a.get("fitted_below_bound") and not rep.fitted_c <= rep.c_bound:
        failures.append(f"fitted c {rep.fitted_c:.4g} exceeds bound {rep.c_bound:.4g}")
    out = rep.to_dict()
    out["assertion_failures"] = failures
    ratios = ", ".join(f"{r:.3f}" for r in rep.ratios)
    return (EXIT_ASSERT if failures else EXIT_OK), rep.claim, _scaling_csv(rep), out, \
        f"ratios [{ratios}], fitted c {rep.fitted_c:.4g} vs bound {rep.c_bound:.4g}"


def cmd_theorem2(cfg):
    from .verify import run_critical_point

    s = _system(cfg["system"])
    rep = run_critical_point(s, cfg["eps"], K=cfg["K"], **_theorem_kwargs(cfg))
    a = cfg["assert"]
    failures = []
    horizon_decay = math.exp(-cfg["K"] * cfg["L"])
    x0_dist = float(np.linalg.norm(np.asarray(cfg["x0"], float) - np.asarray(rep.extras["critical_point"])))
    if a.get("final_distance"):
        limit = horizon_decay * max(x0_dist, 1.0) + 2 * cfg["h"]
        for e, d in zip(rep.eps_values, rep.extras["final_distance_averaged"]):
            if d > limit:
                failures.append(f"eps={e}: final distance {d:.4g} > {limit:.4g}")
    factor = a.get("long_vs_short_factor")
    if factor is not None:
        for e, lng, sht in zip(rep.eps_values, rep.max_dH, rep.extras["max_dH_first_window"]):
            if lng > factor * sht + 2 * cfg["h"]:
                failures.append(f"eps={e}: long-horizon gap {lng:.4g} > {factor} x {sht:.4g}")
    out = rep.to_dict()
    out["assertion_failures"] = failures
    return (EXIT_ASSERT if failures else EXIT_OK), rep.claim, _scaling_csv(rep), out, \
        f"max gaps {[round(g, 5) for g in rep.max_dH]}, final distances " \
        f"{[round(d, 5) for d in rep.extras['final_distance_averaged']]}"


def cmd_theorem3(cfg):
    from .verify import run_invariant_set

    s = _system(cfg["system"])
    rep = run_invariant_set(s, cfg["eps"], K=cfg["K"], **_theorem_kwargs(cfg))
    a = cfg["assert"]
    failures = []
    if a.get("gap_max") is not None and rep.extras["sup_gap_constant"] > a["gap_max"]:
        failures.append(f"sup gap {rep.extras['sup_gap_constant']:.4g} > {a['gap_max']}")
    if a.get("invariance_slack_h") is not None:
        limit = a["invariance_slack_h"] * cfg["h"]
        for e, x in zip(rep.eps_values, rep.extras["late_excess_averaged"]):
            if x > limit:
                failures.append(f"eps={e}: averaged funnel leaves the invariant set by {x:.4g}")
    out = rep.to_dict()
    out["assertion_failures"] = failures
    return (EXIT_ASSERT if failures else EXIT_OK), rep.claim, _scaling_csv(rep), out, \
        f"sup gap {rep.extras['sup_gap_constant']:.4g}"


def circle_funnels(tau, T, dt):
    """Two unit-circle trajectories of the rotation field, the second started tau radians ahead."""
    from .reach import propagate_time
    from .sets import CompactSet
    from .systems import build_system

    s = build_system({"name": "rotation"})
    a = propagate_time(s.field, None, CompactSet([[1.0, 0.0]]), T=T, dt=dt, h=dt)
    b = propagate_time(s.field, None, CompactSet([[math.cos(tau), math.sin(tau)]]), T=T, dt=dt, h=dt)
    return a, b


def cmd_graph_distance(cfg):
    from .reach import graph_distance

    a, b = circle_funnels(cfg["tau"], cfg["T"], cfg["dt"])
    search = cfg["search"]
    grid = None if search is None else (search["lo"], search["hi"], search["step"])
    d, shift = graph_distance(a, b, cfg["eps_g"], grid)
    report = {"distance": d, "best_translation": shift, "tau": cfg["tau"], "search": search}
    return EXIT_OK, "graph distance between two funnels up to a constant time translation", \
        _csv_text(["distance", "translation"], [[float(d), float(shift)]]), report, \
        f"distance {d:.6g} at translation {shift:.6g}"


def cmd_walker(cfg):
    from .funnels import Funnel
    from .hybrid import (WalkerParams, funnel_jump_consistency, simulate_hybrid, walker_controller, walker_funnel,
                         walker_system, walker_transverse_reset)

    try:
        params = WalkerParams(**cfg["params"])
    except TypeError as exc:
        raise ConfigError(f"bad walker params: {exc}") from None
    funnel = Funnel.from_json(cfg["funnel_file"]) if cfg["funnel_file"] else walker_funnel(params)
    kind = cfg["controller"]
    ctrl = walker_controller(kind, params)
    sys_ = walker_system(params)
    arc = simulate_hybrid(sys_, ctrl, cfg["x0"], dt=cfg["dt"], seed=cfg["seed"], max_jumps=cfg["steps"],
                          T=1000.0)
    slack = 2 * cfg["h"]
    worst = 0.0
    for _, _, phi, x, _ in arc.rows():
        if funnel.coverage[0] <= phi <= funnel.coverage[1]:
            worst = max(worst, funnel.distance(phi, x[sys_.transverse]))
    ok_jump, margin = funnel_jump_consistency(funnel, walker_transverse_reset(params))
    failures = []
    if arc.status not in ("max_jumps", "completed"):
        failures.append(f"simulation aborted: {arc.reason}")
    if cfg["assert"]["stay_in_funnel"] and worst > slack:
        failures.append(f"state left the funnel by {worst:.4g} > {slack:.4g}")
    report = {
        "status": arc.status,
        "jumps": arc.n_jumps,
        "max_funnel_excess": worst,
        "jump_consistent": ok_jump,
        "jump_margin": margin,
        "controller": kind,
        "assertion_failures": failures,
    }
    return (EXIT_ASSERT if failures else EXIT_OK), "hybrid walker stays in its funnel across jumps", arc.to_csv(), \
        report, f"{arc.n_jumps} jumps, funnel excess {worst:.3g}, jump margin {margin:.3g}"


COMMANDS = {
    "average": cmd_average,
    "reach": cmd_reach,
    "poincare": cmd_poincare,
    "periodic": cmd_periodic,
    "certify": cmd_certify,
    "certify-funnel": cmd_certify_funnel,
    "theorem1": cmd_theorem1,
    "theorem2": cmd_theorem2,
    "theorem3": cmd_theorem3,
    "graph-distance": cmd_graph_distance,
    "walker": cmd_walker,
}


def _parser():
    p = argparse.ArgumentParser(prog="geoperiodic", description="Set-valued phase-periodic dynamics experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file merged over the shipped defaults")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one key (dotted paths, JSON values)")
        sp.add_argument("--out-dir", default=".", help="directory for the CSV and report")
        sp.add_argument("--show-config", action="store_true", help="print the effective config and exit")
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--quiet", action="store_true")
        g.add_argument("--verbose", action="store_true")
        if name == "theorem1":
            sp.add_argument("--assert-ratio-max", type=float)
            sp.add_argument("--assert-ratio-min", type=float)
        if name == "walker":
            sp.add_argument("--steps", type=int)
            sp.add_argument("--controller", choices=["open_loop", "nominal", "path_integral", "feedback_linearizing"])
            sp.add_argument("--seed", type=int)
            sp.add_argument("--funnel-file")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    level = logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    sets = list(args.set)
    if args.command == "theorem1":
        if args.assert_ratio_max is not None:
            sets.append(f"assert.ratio_max={args.assert_ratio_max!r}")
        if args.assert_ratio_min is not None:
            sets.append(f"assert.ratio_min={args.assert_ratio_min!r}")
    if args.command == "walker":
        for key in ("steps", "controller", "seed"):
            if getattr(args, key) is not None:
                sets.append(f"{key}={json.dumps(getattr(args, key))}")
        if args.funnel_file is not None:
            sets.append(f"funnel_file={json.dumps(args.funnel_file)}")
    try:
        cfg = build_config(args.command, args.config, sets)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.show_config:
        print(json.dumps(cfg, indent=2))
        return EXIT_OK
    try:
        code, claim, csv_text, report, summary = COMMANDS[args.command](cfg)
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        log.debug("command failed", exc_info=True)
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    stem = args.command.replace("-", "_")
    full = {"command": args.command, "claim": claim, "exit_code": code, "config": cfg, "result": _plain(report)}
    atomic_write(os.path.join(args.out_dir, f"{stem}.csv"), csv_text)
    atomic_write(os.path.join(args.out_dir, f"{stem}_report.json"), json.dumps(full, indent=2, sort_keys=True) + "\n")
    if not args.quiet:
        status = {0: "ok", 2: "assertion failed", 3: "certificate failed", 4: "invalid candidate"}[code]
        print(f"{args.command}: {summary} [{status}]")
    return code


if __name__ == "__main__":
    sys.exit(main())
