"""Command line entry point: ``critheights <subcommand> ...``.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys

from . import __version__
from .errors import CritHeightsError

log = logging.getLogger("critheights")

USAGE_ERROR = 2
DOMAIN_ERROR = 1


class UsageError(Exception):
    pass


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")


def _complex(text: str) -> complex:
    text = text.strip()
    if "," in text:
        re_, im = _floats(text)
        return complex(re_, im)
    try:
        return complex(text.replace(" ", ""))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}")


def _dump(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _budget(f, cfg):
    from .poly import EscapeBudget

    return EscapeBudget(f.escape_radius, cfg.max_iterations, cfg.tol)


# ------------------------------------------------------------ commands


def cmd_heights(args, cfg):
    from .escape import heights
    from .poly import hyperplane_basis, load

    f = load(args.poly)
    h = heights(f, _budget(f, cfg))
    _dump({
        "heights": list(h.heights),
        "M": h.M,
        "flags": ["escaped" if r else "bounded" for r in h.resolved],
        "basis": [[[z.real, z.imag] for z in row] for row in hyperplane_basis(f.d).T],
    }, args.out)


def cmd_green(args, cfg):
    from .escape import green, high_precision_green
    from .poly import load

    f = load(args.poly)
    pts = list(args.z or [])
    if args.points:
        with open(args.points, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                if row and not row[0].startswith("#"):
                    pts.append(complex(float(row[0]), float(row[1])))
    if not pts:
        raise UsageError("green: give --z or --points")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["re_z", "im_z", "G", "error_bound", "iterations", "escaped"])
    b = _budget(f, cfg)
    for z in pts:
        v = green(f, z, b)
        value = v.value
        if cfg.precision == "mp" and v.escaped:
            value = float(high_precision_green(f, z))
        w.writerow([repr(z.real), repr(z.imag), repr(value), repr(v.error_bound), v.iterations_used, int(v.escaped)])


def cmd_ray(args, cfg):
    from .boettcher import trace_ray
    from .poly import load

    f = load(args.poly)
    pts = trace_ray(f, args.angle, args.h_from, args.h_to, args.steps, tol=min(cfg.tol, 1e-12))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["h", "angle", "re_z", "im_z"])
    for p in pts:
        w.writerow([repr(p.height), repr(p.angle), repr(p.z.real), repr(p.z.imag)])


def cmd_phin(args, cfg):
    from .boettcher import phi_n_map
    from .poly import load

    f = load(args.poly)
    _dump(phi_n_map(f, args.n).to_json(), args.out)


def cmd_tree(args, cfg):
    from .poly import load
    from .tree import GridSpec, build_tree

    f = load(args.poly)
    grid = GridSpec(args.res or cfg.tree_resolution, cfg.refinement_limit)
    t = build_tree(f, args.floor, grid, _budget(f, cfg))
    if args.format == "dot":
        text = t.to_dot()
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    else:
        _dump(t.to_json(), args.out)


def cmd_strata(args, cfg):
    from .escape import HeightsVector
    from .heights_space import cell_of, simplex_coords, stretch, subannuli

    h = HeightsVector.from_values(args.d, args.heights)
    dec = subannuli(h)
    out = {"decomposition": dec.to_json()}
    if h.M > 0 and all(x > 0 for x in h.heights):
        norm = subannuli(stretch(h, 1.0 / h.M))
        out["simplex"] = simplex_coords(norm)
        out["cell"] = cell_of(h).to_json()
    _dump(out, args.out)


def cmd_complex(args, cfg):
    from .heights_space import build_height_complex

    cx = build_height_complex(args.d, args.depth)
    _dump(cx.to_json(), args.out)


def cmd_census(args, cfg):
    from .census import CensusStore, census_key, fiber_census, load_seeds
    from .escape import HeightsVector
    from .tree import GridSpec

    target = HeightsVector.from_values(args.d, args.heights)
    grid = args.grid or cfg.angle_grid
    seeds = load_seeds(args.seeds) if args.seeds else []
    extra = {"random_seeds": args.random_seeds, "seed": cfg.seed, "check_grid": not args.no_grid_check}
    if args.seeds:
        with open(args.seeds, "rb") as fh:
            extra["seeds"] = hashlib.sha256(fh.read()).hexdigest()
    store = CensusStore(cfg.check_cache())
    key = census_key(args.d, target.heights, args.n, grid, extra)
    with store.lock(key):
        data = None if args.no_cache else store.get(key)
        if data is None:
            c = fiber_census(args.d, target, args.n, grid, seeds, n_random=args.random_seeds,
                             rng_seed=cfg.seed, workers=cfg.workers,
                             tree_grid=GridSpec(min(cfg.tree_resolution, 128), cfg.refinement_limit),
                             check_grid=not args.no_grid_check)
            data = c.to_json()
            data["key"] = key
            store.put(key, data)
        else:
            log.info("census cache hit %s", key)
    _dump(data, args.out)


def cmd_census_compare(args, cfg):
    from .tree import iso_test, load_tree

    with open(args.input, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    trees = [load_tree(c["tree"]) for c in data["components"] if "tree" in c]
    if len(trees) != len(data["components"]):
        raise CritHeightsError("census file has components without trees")
    classes = []
    for t in trees:
        if not any(iso_test(c, t, args.eps) for c in classes):
            classes.append(t)
    _dump({"count_Tstar": len(trees), "count_T": len(classes)}, args.out)


def cmd_selftest(args, cfg):
    from .selftest import run_selftest

    ok = run_selftest(verbose=not args.quiet)
    return 0 if ok else DOMAIN_ERROR


# ------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="critheights", description="Critical heights of polynomials.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--tol", type=float, help="escape tolerance")
    p.add_argument("--maxiter", type=int, help="escape iteration budget")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    def poly(sp):
        sp.add_argument("--poly", required=True, help="polynomial JSON file")

    def out(sp):
        sp.add_argument("--out", help="output file (default stdout)")

    sp = sub.add_parser("heights", help="critical heights of a polynomial")
    poly(sp)
    out(sp)
    sp.add_argument("--tol", type=float, dest="sub_tol")
    sp.add_argument("--maxiter", type=int, dest="sub_maxiter")
    sp.set_defaults(fn=cmd_heights)

    sp = sub.add_parser("green", help="escape rate at points (CSV)")
    poly(sp)
    sp.add_argument("--z", type=_complex, action="append", help="point, 're,im' or '1+2j'")
    sp.add_argument("--points", help="CSV file of re,im rows")
    sp.set_defaults(fn=cmd_green)

    sp = sub.add_parser("ray", help="trace an external ray (CSV)")
    poly(sp)
    sp.add_argument("--angle", type=float, required=True, help="angle in radians")
    sp.add_argument("--from", dest="h_from", type=float, required=True)
    sp.add_argument("--to", dest="h_to", type=float, required=True)
    sp.add_argument("--steps", type=int, default=50)
    sp.set_defaults(fn=cmd_ray)

    sp = sub.add_parser("phin", help="Boettcher images of the iterated critical points")
    poly(sp)
    out(sp)
    sp.add_argument("--n", type=int, required=True)
    sp.set_defaults(fn=cmd_phin)

    sp = sub.add_parser("tree", help="polynomial tree above a floor height")
    poly(sp)
    out(sp)
    sp.add_argument("--floor", type=float, required=True)
    sp.add_argument("--res", type=int, help="grid resolution (power of 2)")
    sp.add_argument("--format", choices=("json", "dot"), default="json")
    sp.set_defaults(fn=cmd_tree)

    sp = sub.add_parser("strata", help="subannuli decomposition of a heights vector")
    out(sp)
    sp.add_argument("--heights", type=_floats, required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.set_defaults(fn=cmd_strata)

    sp = sub.add_parser("complex", help="cells of the heights complex")
    out(sp)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--depth", type=int, required=True)
    sp.set_defaults(fn=cmd_complex)

    sp = sub.add_parser("census", help="fiber census (or 'census compare')")
    out(sp)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--heights", type=_floats, required=True)
    sp.add_argument("--n", type=int)
    sp.add_argument("--grid", type=int)
    sp.add_argument("--seeds", help="JSON list of seed polynomials")
    sp.add_argument("--random-seeds", type=int, default=12)
    sp.add_argument("--no-grid-check", action="store_true")
    sp.add_argument("--no-cache", action="store_true")
    sp.set_defaults(fn=cmd_census)

    sp = sub.add_parser("census-compare", help=argparse.SUPPRESS)
    out(sp)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--eps", type=float, default=1e-4)
    sp.set_defaults(fn=cmd_census_compare)

    sp = sub.add_parser("selftest", help="quick invariant checks")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(fn=cmd_selftest)
    return p


def run(argv=None) -> int:
    from .config import load_config

    argv = list(sys.argv[1:] if argv is None else argv)
    # "census compare" is spelled as two words on the command line
    for i in range(len(argv) - 1):
        if argv[i] == "census" and argv[i + 1] == "compare":
            argv[i:i + 2] = ["census-compare"]
            break
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return USAGE_ERROR if e.code else 0
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(asctime)s level=%(levelname)s logger=%(name)s msg=%(message)s",
                        stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        cfg = cfg.updated(
            workers=args.workers,
            tol=getattr(args, "sub_tol", None) or args.tol,
            max_iterations=getattr(args, "sub_maxiter", None) or args.maxiter,
            seed=args.seed,
        )
    except (ValueError, OSError) as e:
        sys.stderr.write(f"critheights: error: {e}\n")
        return USAGE_ERROR
    try:
        code = args.fn(args, cfg)
    except UsageError as e:
        sys.stderr.write(f"critheights: error: {e}\n")
        return USAGE_ERROR
    except (CritHeightsError, ValueError, ArithmeticError, OSError) as e:
        sys.stderr.write(f"critheights: {type(e).__name__}: {e}\n")
        return DOMAIN_ERROR
    return code or 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
