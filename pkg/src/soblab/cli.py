"""Command-line interface: ``soblab <subcommand> [options]``.

Exit status is 0 on success, 1 when a check fails (the report is still
written) and 2 on bad input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import DegenerateInputError
from .concentration import BALL_FRACTION, DECAY_FACTOR, brezis_lieb_check, classify_sequence
from .constants import (
    critical_exponent,
    eucl_constant,
    eucl_constant_2,
    sobolev_conjugate,
    unit_ball_volume,
    unit_sphere_volume,
)
from .geometry import (
    DiscreteMMS,
    avr_estimate,
    brunn_minkowski_check,
    density_profile,
    isoperimetric_constant,
    local_sobolev_check,
)
from .grids import (
    build_cone_model,
    build_custom_grid,
    build_sphere_model,
    dirichlet_energy,
    lp_norm,
    read_function,
    write_function,
)
from .rearrangement import euclidean_rearrange, monotone_rearrange_sphere
from .sobolev import (
    TruncationError,
    alpha_p_value,
    bliss_quotient,
    linearization_check,
    optimize_aopt,
    sobolev_quotient,
    tight_sobolev_check,
)
from .spectral import spectral_gap
from .yamabe import ScalarField, minimize_yamabe, yamabe_upper_bound_check

EXIT_OK, EXIT_CHECK, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _clean(obj):
    """Make a report JSON-safe and deterministic (infinities become strings)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _parse_float(text: str) -> float:
    if text.strip().lower() in ("inf", "infinite", "infinity"):
        return math.inf
    return float(text)


def _parse_range(spec: str):
    """``name=a:b:step`` -> (name, values)."""
    if "=" not in spec:
        raise InputError(f"range must look like name=a:b:step, got {spec!r}")
    name, rng = spec.split("=", 1)
    parts = rng.split(":")
    if len(parts) != 3:
        raise InputError(f"range must look like name=a:b:step, got {spec!r}")
    a, b, step = map(float, parts)
    if step <= 0:
        raise InputError("range step must be positive")
    n = int(math.floor((b - a) / step + 1e-9)) + 1
    if n <= 0:
        raise InputError(f"empty range {spec!r}")
    return name.strip(), [a + i * step for i in range(n)]


# --- grids -------------------------------------------------------------------


def _add_grid_args(p: argparse.ArgumentParser, default_model="sphere"):
    p.add_argument("--model", choices=["sphere", "cone", "custom", "sine-power"], default=default_model)
    p.add_argument("--N", type=float, default=3.0, help="model dimension")
    p.add_argument("--nodes", type=int, default=1024)
    p.add_argument("--R-max", type=float, default=10.0, help="truncation radius of the cone model")
    p.add_argument("--weight-file", help="CSV node,weight for --model custom")
    p.add_argument("--power", type=float, help="exponent a of the weight sin^a for --model sine-power")
    p.add_argument("--normalize", action="store_true", help="rescale a custom grid to unit mass")


def grid_from_spec(spec: dict, base: Path | None = None):
    model = spec.get("model", "sphere")
    N = float(spec.get("N", 3.0))
    nodes = int(spec.get("nodes", 1024))
    if model == "sphere":
        return build_sphere_model(N, nodes)
    if model == "cone":
        return build_cone_model(N, float(spec.get("R_max", 10.0)), nodes)
    if model == "sine-power":
        a = float(spec["power"]) if spec.get("power") is not None else N - 1
        x = np.linspace(0.0, math.pi, nodes)
        return build_custom_grid(x, lambda t: np.abs(np.sin(t)) ** a, normalize=True, endpoint_powers=(a, a), N=N)
    if model == "custom":
        path = spec.get("weight_file")
        if not path:
            raise InputError("--model custom needs --weight-file")
        path = Path(path) if base is None else base / path
        data = np.loadtxt(path, delimiter=",", comments="#", skiprows=_header_rows(path))
        data = np.atleast_2d(data)
        return build_custom_grid(data[:, 0], data[:, 1], normalize=bool(spec.get("normalize", False)), N=N)
    raise InputError(f"unknown model {model!r}")


def _header_rows(path: Path) -> int:
    with open(path) as fh:
        for line in fh:
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                float(s.split(",")[0])
                return 0
            except ValueError:
                return 1
    return 0


def _grid(args):
    return grid_from_spec(
        {
            "model": args.model,
            "N": args.N,
            "nodes": args.nodes,
            "R_max": args.R_max,
            "weight_file": args.weight_file,
            "power": args.power,
            "normalize": args.normalize,
        }
    )


def _grid_meta(args) -> dict:
    return {"model": args.model, "N": args.N, "nodes": args.nodes}


# --- subcommands ---------------------------------------------------------------


def cmd_constants(args):
    N, p = args.N, args.p
    report = {
        "N": N,
        "p": p,
        "omega_N": unit_ball_volume(N),
        "sigma_N_minus_1": unit_sphere_volume(N),
        "eucl": eucl_constant(N, p),
        "p_star": sobolev_conjugate(N, p),
    }
    if N > 2:
        report["eucl_2"] = eucl_constant_2(N)
        report["critical_exponent"] = critical_exponent(N)
    return report, True


def cmd_model(args):
    g = _grid(args)
    if args.csv:
        rows = [(float(x), float(w)) for x, w in zip(g.nodes, g.weight_at_node)]
        return {"_csv": (["node", "weight"], rows)}, True
    return {
        "grid": _grid_meta(args),
        "total_mass": g.total_mass,
        "n_nodes": g.n_nodes,
        "diameter": g.diameter,
        "kind": g.kind,
    }, True


def cmd_rearrange(args):
    g = _grid(args)
    u = read_function(args.input, g)
    fn = monotone_rearrange_sphere if args.target == "sphere" else euclidean_rearrange
    out = fn(u, args.N, args.n_out)
    if args.out_function:
        write_function(out, args.out_function)
    ps = [1.0, 2.0, 3.0]
    return {
        "target": args.target,
        "norms_in": {str(p): lp_norm(u, p) for p in ps},
        "norms_out": {str(p): lp_norm(out, p) for p in ps},
        "energy_in": dirichlet_energy(u, 2.0),
        "energy_out": dirichlet_energy(out, 2.0),
    }, True


def cmd_quotient(args):
    g = _grid(args)
    u = read_function(args.input, g)
    return {"q": args.q, "value": sobolev_quotient(u, args.q)}, True


def cmd_spectral_gap(args):
    res = spectral_gap(_grid(args), normalize=args.normalize)
    return {"grid": _grid_meta(args), **res.to_dict()}, res.residual <= args.residual_tol


def cmd_aopt(args):
    g = _grid(args)
    opts = dict(n_restarts=args.restarts, max_iter=args.max_iter, gtol=args.gtol, seed=args.seed)
    if args.sweep:
        name, values = _parse_range(args.sweep)
        if name != "q":
            raise InputError("aopt --sweep only ranges over q")
        rows = []
        for q in values:
            rep = optimize_aopt(g, q, **opts)
            rows.append((q, rep.value, rep.iterations))
        return {"_csv": (["q", "value", "iters"], rows)}, True
    if args.q is None:
        raise InputError("aopt needs --q or --sweep")
    rep = optimize_aopt(g, args.q, **opts)
    report = {"grid": _grid_meta(args), "q": args.q, "options": opts, **rep.to_dict()}
    if g.N is not None:
        report["reference"] = (args.q - 2) / g.N
    return report, True


def cmd_bliss(args):
    try:
        value = bliss_quotient(args.b, args.N, args.p, args.R_max, args.nodes)
    except TruncationError as exc:
        raise InputError(f"{exc}; try --R-max {exc.suggested_R_max:g}") from exc
    eucl = eucl_constant(args.N, args.p)
    return {"b": args.b, "N": args.N, "p": args.p, "value": value, "eucl": eucl, "rel_error": abs(value / eucl - 1)}, True


def cmd_alpha_p(args):
    return {"alpha_p": alpha_p_value(args.min_theta, args.N, args.p), "N": args.N, "p": args.p}, True


def cmd_linearize(args):
    g = _grid(args)
    f = read_function(args.input, g) if args.input else g.evaluate(np.cos)
    f = f.with_values(f.values - f.mean())
    rep = linearization_check(g, f, args.q, args.eps)
    passed = math.isnan(rep["order"]) or rep["order"] >= 0.8 * rep["predicted_order"]
    return rep, passed


def cmd_tight_check(args):
    g = _grid(args)
    rep = tight_sobolev_check(g, args.q, args.A, trials=args.trials, seed=args.seed)
    witness = rep.pop("witness")
    if not rep["passed"] and witness is not None and args.witness:
        write_function(witness, args.witness)
        rep["witness_file"] = args.witness
    return rep, rep["passed"]


def _mms_or_grid(args):
    if args.mms:
        return DiscreteMMS.from_json(args.mms)
    return _grid(args)


def cmd_density(args):
    space = _mms_or_grid(args)
    radii = np.geomspace(args.r_min, args.r_max, args.n_radii) if args.r_min else None
    x = int(args.x) if isinstance(space, DiscreteMMS) else args.x
    prof = density_profile(space, x, args.N, radii, K=args.K)
    return prof.to_dict(), True


def cmd_avr(args):
    g = _grid(args)
    rep = avr_estimate(g, args.x, args.N)
    return {"avr": rep["avr"], "grid": _grid_meta(args)}, True


def cmd_isop(args):
    g = _grid(args)
    region = tuple(args.region) if args.region else None
    return isoperimetric_constant(g, region, args.N, args.n_scan), True


def cmd_brunn_minkowski(args):
    g = _grid(args)
    if args.A0 and args.A1:
        rep = brunn_minkowski_check(g, args.A0, args.A1, args.t, args.K, args.N)
        return rep, rep["passed"]
    rng = np.random.default_rng(args.seed)
    lo, hi = g.nodes[0], g.nodes[-1]
    fails, vacuous = 0, 0
    for _ in range(args.pairs):
        A0 = np.sort(rng.uniform(lo, hi, 2))
        A1 = np.sort(rng.uniform(lo, hi, 2))
        rep = brunn_minkowski_check(g, A0, A1, rng.uniform(), args.K, args.N)
        fails += not rep["passed"]
        vacuous += rep["vacuous"]
    return {"pairs": args.pairs, "failures": fails, "vacuous": vacuous, "passed": fails == 0}, fails == 0


def cmd_local_sobolev(args):
    g = _grid(args)
    rep = local_sobolev_check(g, args.x, args.r, args.R, args.N, args.p, args.trials, args.seed, eps=args.eps)
    rep.pop("witness")
    return rep, rep["passed"]


def cmd_concentration_scan(args):
    manifest = Path(args.manifest)
    data = json.loads(manifest.read_text())
    g = grid_from_spec(data.get("grid", {}), base=manifest.parent)
    seq = [read_function(manifest.parent / f, g) for f in data["functions"]]
    q = float(data.get("q", args.q if args.q else critical_exponent(g.N)))
    diag = classify_sequence(g, seq, q, ball_fraction=args.ball_fraction, decay_factor=args.decay_factor)
    report = diag.to_dict()
    if "v_functions" in data:
        vs = [read_function(manifest.parent / f, g) for f in data["v_functions"]]
        report["brezis_lieb"] = brezis_lieb_check(g, seq, vs, q, float(data.get("q_prime", 2.0)))
    return report, True


def _scalar_field(g, spec: dict, base: Path | None):
    if spec.get("S_file"):
        path = Path(spec["S_file"]) if base is None else base / spec["S_file"]
        S = read_function(path, g)
        return ScalarField(g, S.values, float(spec.get("declared_p", math.inf)))
    return ScalarField.constant(g, float(spec.get("s0", 0.0)))


def cmd_yamabe(args):
    opts = dict(n_restarts=args.restarts, max_iter=args.max_iter, gtol=args.gtol, seed=args.seed)
    if args.family:
        manifest = Path(args.family)
        data = json.loads(manifest.read_text())
        N = float(data["N"])
        lams = []
        for member in data["members"]:
            g = grid_from_spec({"N": N, **member}, base=manifest.parent)
            S = _scalar_field(g, member, manifest.parent)
            lams.append(minimize_yamabe(g, S, N, **opts).lambda_estimate)
        jumps = np.abs(np.diff(lams)).tolist()
        return {"lambda": lams, "jumps": jumps, "max_jump": max(jumps) if jumps else 0.0}, True
    g = _grid(args)
    S = _scalar_field(g, {"S_file": args.S_file, "s0": args.s0}, None)
    rep = minimize_yamabe(g, S, args.N, **opts)
    report = {"grid": _grid_meta(args), "options": opts, **rep.to_dict()}
    ok = not rep.unbounded_looking
    if args.min_theta is not None:
        chk = yamabe_upper_bound_check(rep.lambda_estimate, args.min_theta, args.N, args.bound_tol)
        report["upper_bound_check"] = chk
        ok = ok and chk["passed"]
    if args.minimizer:
        write_function(rep.minimizer, args.minimizer)
    return report, ok


def cmd_sweep(args):
    ranged = [_parse_range(r) for r in args.range]
    if len(ranged) != 1:
        raise InputError("sweep needs exactly one ranged parameter")
    name, values = ranged[0]
    rows = []
    if args.quantity == "eucl":
        if name not in ("N", "p"):
            raise InputError("eucl sweeps range over N or p")
        for v in values:
            N, p = (v, args.p) if name == "N" else (args.N, v)
            rows.append((v, eucl_constant(N, p)))
    elif args.quantity == "aopt":
        if name != "q":
            raise InputError("aopt sweeps range over q")
        g = _grid(args)
        for q in values:
            rows.append((q, optimize_aopt(g, q, n_restarts=args.restarts, seed=args.seed).value))
    elif args.quantity == "spectral-gap":
        if name != "N":
            raise InputError("spectral-gap sweeps range over N")
        for N in values:
            rows.append((N, spectral_gap(build_sphere_model(N, args.nodes)).lam))
    return {"_csv": ([name, args.quantity], rows)}, True


# --- plumbing ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="soblab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, grid=True, **kw):
        p = sub.add_parser(name, **kw)
        p.set_defaults(func=func)
        p.add_argument("--output", "-o", help="write the report here instead of stdout")
        fmt = p.add_mutually_exclusive_group()
        fmt.add_argument("--json", dest="csv", action="store_false", help="JSON report (default)")
        fmt.add_argument("--csv", dest="csv", action="store_true", help="CSV output where tabular")
        p.add_argument("--seed", type=int, default=0)
        if grid:
            _add_grid_args(p, "cone" if name in ("avr", "local-sobolev") else "sphere")
        return p

    p = add("constants", cmd_constants, grid=False, help="volumes and sharp Sobolev constants")
    p.add_argument("--N", type=float, required=True)
    p.add_argument("--p", type=float, default=2.0)

    add("model", cmd_model, help="build a weighted grid and report its mass")

    p = add("rearrange", cmd_rearrange, help="monotone rearrangement of a function file")
    p.add_argument("--input", required=True)
    p.add_argument("--target", choices=["sphere", "euclid"], default="sphere")
    p.add_argument("--n-out", type=int)
    p.add_argument("--out-function")

    p = add("quotient", cmd_quotient, help="Sobolev quotient of a function file")
    p.add_argument("--input", required=True)
    p.add_argument("--q", type=float, required=True)

    p = add("spectral-gap", cmd_spectral_gap, help="first non-zero Neumann eigenvalue")
    p.add_argument("--residual-tol", type=float, default=1e-8)

    p = add("aopt", cmd_aopt, help="lower estimate of the optimal tight Sobolev constant")
    p.add_argument("--q", type=float)
    p.add_argument("--sweep", help="q=a:b:step, emits CSV q,value,iters")
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--max-iter", type=int, default=5000)
    p.add_argument("--gtol", type=float, default=1e-7)

    p = add("bliss", cmd_bliss, grid=False, help="Bliss extremal quotient on the cone model")
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--N", type=float, default=3.0)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--R-max", type=float, default=200.0)
    p.add_argument("--nodes", type=int, default=100_000)

    p = add("alpha-p", cmd_alpha_p, grid=False, help="optimal loose Sobolev constant from min theta")
    p.add_argument("--min-theta", type=_parse_float, required=True)
    p.add_argument("--N", type=float, required=True)
    p.add_argument("--p", type=float, default=2.0)

    p = add("linearize", cmd_linearize, help="quotient of 1 + eps f against its linearisation")
    p.add_argument("--q", type=float, default=3.0)
    p.add_argument("--eps", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3, 1e-4])
    p.add_argument("--input", help="function file for f (default cos t)")

    p = add("tight-check", cmd_tight_check, help="search for violations of a tight Sobolev inequality")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--A", type=float, required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--witness", default="witness.csv", help="where to write a violating function")

    p = add("density", cmd_density, help="Bishop-Gromov density profile")
    p.add_argument("--x", type=float, default=0.0)
    p.add_argument("--K", type=float, default=0.0)
    p.add_argument("--mms", help="DiscreteMMS JSON instead of a grid")
    p.add_argument("--r-min", type=float)
    p.add_argument("--r-max", type=float, default=0.1)
    p.add_argument("--n-radii", type=int, default=31)

    p = add("avr", cmd_avr, help="asymptotic volume ratio of an unbounded model")
    p.add_argument("--x", type=float, default=0.0)

    p = add("isop", cmd_isop, help="empirical isoperimetric constant")
    p.add_argument("--region", type=float, nargs=2)
    p.add_argument("--n-scan", type=int, default=400)

    p = add("brunn-minkowski", cmd_brunn_minkowski, help="Brunn-Minkowski on interval pairs")
    p.add_argument("--A0", type=float, nargs=2)
    p.add_argument("--A1", type=float, nargs=2)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--K", type=float, default=0.0)
    p.add_argument("--pairs", type=int, default=200)

    p = add("local-sobolev", cmd_local_sobolev, help="local Euclidean Sobolev inequality")
    p.add_argument("--x", type=float, default=0.0)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--R", type=float, default=2.0)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--eps", type=float, default=0.0)

    p = add("concentration-scan", cmd_concentration_scan, grid=False, help="classify a sequence of functions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--q", type=float)
    p.add_argument("--ball-fraction", type=float, default=BALL_FRACTION)
    p.add_argument("--decay-factor", type=float, default=DECAY_FACTOR)

    p = add("yamabe", cmd_yamabe, help="generalised Yamabe constant")
    p.add_argument("--S-file", help="CSV node,S")
    p.add_argument("--s0", type=float, default=0.0, help="constant S when no file is given")
    p.add_argument("--family", help="JSON manifest for a continuity trend")
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--max-iter", type=int, default=5000)
    p.add_argument("--gtol", type=float, default=1e-7)
    p.add_argument("--min-theta", type=_parse_float, help="check lambda against the density bound")
    p.add_argument("--bound-tol", type=float, default=1e-9)
    p.add_argument("--minimizer", help="write the minimiser here")

    p = add("sweep", cmd_sweep, help="CSV sweep over one ranged parameter")
    p.add_argument("--quantity", choices=["eucl", "aopt", "spectral-gap"], required=True)
    p.add_argument("--range", action="append", default=[], help="name=a:b:step (exactly one)")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--restarts", type=int, default=8)
    return parser


def _emit(report: dict, args) -> str:
    if "_csv" in report:
        header, rows = report["_csv"]
        buf = io.StringIO()
        buf.write("# " + ",".join(header) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        return buf.getvalue()
    body = {"command": args.command, "report": _clean(report)}
    return json.dumps(body, sort_keys=True, indent=2) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_INPUT
    try:
        report, ok = args.func(args)
    except (InputError, ValueError, TypeError, KeyError, FileNotFoundError, DegenerateInputError) as exc:
        print(f"soblab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    text = _emit(report, args)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
