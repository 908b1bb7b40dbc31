"""
Command-line entry point: ``htrw {phantom,forward,check,reconstruct,selftest}``.

Exit codes: 0 success / in-range, 1 self-test failure, 2 usage or input
error, 3 out-of-range, 4 inconclusive.
"""

import argparse
import logging
import sys

import numpy as np

from . import __version__, container, exterior, forward, grids, range_conditions, recon, selftest
from .config import RunConfig
from .errors import HTRWError

log = logging.getLogger("htrw")

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_USAGE = 2
EXIT_OUT_OF_RANGE = 3
EXIT_INCONCLUSIVE = 4
VERDICT_EXIT = {
    range_conditions.IN_RANGE: EXIT_OK,
    range_conditions.OUT_OF_RANGE: EXIT_OUT_OF_RANGE,
    range_conditions.INCONCLUSIVE: EXIT_INCONCLUSIVE,
}

_CONFIG_FLAGS = (
    # flag, RunConfig field, type
    ("--nt", "n_t", int),
    ("--t-ext", "t_ext", float),
    ("--Q", "Q", int),
    ("--lmax", "lmax", int),
    ("--n-max", "n_max", int),
    ("--deriv-max", "deriv_max", int),
    ("--np", "n_p", int),
    ("--theta-pass", "theta_pass", float),
    ("--theta-fail", "theta_fail", float),
    ("--seed", "seed", int),
    ("--n-vol", "n_vol", int),
    ("--q-recon", "q_recon", int),
)


class UsageError(HTRWError):
    pass


# ---------------------------------------------------------------------------
# container <-> objects


def _config_overrides(args):
    return {field: getattr(args, field) for _flag, field, _t in _CONFIG_FLAGS if getattr(args, field, None) is not None}


def _config_from(header, args, dimension):
    base = header.get("config") if header else None
    cfg = RunConfig.from_dict(base) if base else RunConfig(dimension=dimension)
    if cfg.dimension != dimension:
        raise UsageError(f"config dimension {cfg.dimension} does not match data dimension {dimension}")
    return cfg.replace(**_config_overrides(args))


def phantom_to_container(ph, cfg):
    header = {"dimension": ph.dim, "phantom": ph.describe(), "config": cfg.to_dict()}
    arrays = {"centers": ph.centers, "radii": ph.radii, "amplitudes": ph.amplitudes}
    return header, arrays


def phantom_from_container(head, arrays):
    return forward.Phantom(int(head["dimension"]), arrays["centers"], arrays["radii"], arrays["amplitudes"])


def boundary_to_container(b, cfg, provenance=None):
    header = {
        "dimension": b.sphere.dim,
        "grids": {"time": b.time.describe(), "sphere": b.sphere.describe()},
        "t_quiet": float(b.t_quiet),
        "config": cfg.to_dict(),
        "provenance": provenance or {},
    }
    return header, {"values": b.values}


def boundary_from_container(head, arrays):
    try:
        d = int(head["dimension"])
        tg = grids.TimeGrid(**head["grids"]["time"])
        sg = grids.make_sphere_grid(d, int(head["grids"]["sphere"]["Q"]))
        return grids.BoundaryData(sg, tg, arrays["values"], t_quiet=float(head.get("t_quiet", 0.0)))
    except (KeyError, TypeError) as exc:
        raise container.FormatError(f"boundary container lacks {exc}") from None


def _read(path, kind):
    return container.read(path, expect=kind)


# ---------------------------------------------------------------------------
# pipeline


def channel_functions(b, cfg):
    if (b.time.n_t, b.time.t_ext) != (cfg.n_t, cfg.t_ext):
        raise UsageError("time grid of the data differs from the configured n_t / t_ext")
    c = grids.sh_analysis(b, cfg.lmax)
    c = grids.extend_and_transform(c)
    return exterior.channel_response(c, n_max=max(cfg.deriv_max, 1))


def run_check(b, cfg):
    R = channel_functions(b, cfg)
    grids_desc = {"time": b.time.describe(), "sphere": b.sphere.describe(), "lmax": cfg.lmax,
                  "n_max": cfg.n_max, "deriv_max": cfg.deriv_max}
    rep = range_conditions.check_channels(R, cfg.n_max, cfg.deriv_max, cfg.theta_pass, cfg.theta_fail,
                                          grids=grids_desc)
    rep.normalization["config"] = cfg.to_dict()
    return rep


def run_reconstruct(b, cfg, threads=None):
    R = channel_functions(b, cfg)
    return recon.reconstruct(R, n=cfg.n_vol, n_p=cfg.n_p, q_recon=cfg.q_recon, threads=threads)


# ---------------------------------------------------------------------------
# commands


def _parse_bump(text, dim):
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"bump {text!r}: expected comma-separated numbers") from None
    if len(vals) != dim + 2:
        raise UsageError(f"bump {text!r}: expected {dim} centre coordinates, radius, amplitude")
    return vals[:dim], vals[dim], vals[dim + 1]


def cmd_phantom(args):
    dim = args.dim
    bumps = [_parse_bump(s, dim) for s in (args.bump or [])]
    for i, (c, rho, _a) in enumerate(bumps):
        if rho <= 0 or np.linalg.norm(c) + rho >= 1.0:
            raise UsageError(
                f"bump {i} ({args.bump[i]}): |c| + rho = {np.linalg.norm(c) + rho:g} must be < 1 with rho > 0"
            )
    ph = forward.Phantom(dim, np.array([c for c, _, _ in bumps]).reshape(-1, dim),
                         [r for _, r, _ in bumps], [a for _, _, a in bumps])
    cfg = RunConfig(dimension=dim).replace(**_config_overrides(args))
    container.write(args.out, "phantom", *phantom_to_container(ph, cfg))
    print(f"wrote phantom with {ph.n_bumps} bump(s) to {args.out}")
    return EXIT_OK


def cmd_forward(args):
    _k, head, arrays = _read(args.input, "phantom")
    ph = phantom_from_container(head, arrays)
    if args.dim is not None and args.dim != ph.dim:
        raise UsageError(f"--dim {args.dim} does not match the phantom dimension {ph.dim}")
    cfg = _config_from(head, args, ph.dim)
    tg = grids.TimeGrid(cfg.n_t, cfg.t_ext)
    sg = grids.make_sphere_grid(ph.dim, cfg.Q)
    b = forward.wave_data(ph, tg, sg)
    header, arrs = boundary_to_container(b, cfg, {"phantom": ph.describe()})
    container.write(args.out, "boundary", header, arrs)
    print(f"wrote boundary data ({tg.n_phys} x {sg.size}) to {args.out}")
    return EXIT_OK


def cmd_check(args):
    _k, head, arrays = _read(args.input, "boundary")
    b = boundary_from_container(head, arrays)
    cfg = _config_from(head, args, b.sphere.dim)
    if args.inject_violation:
        kw = range_conditions.parse_violation(args.inject_violation)
        b = range_conditions.inject_violation(b, **kw)
        log.warning("injected violation %s", kw)
    rep = run_check(b, cfg)
    if args.inject_violation:
        rep.normalization["injected_violation"] = args.inject_violation
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(rep.to_json(indent=2, sort_keys=True))
    if args.out:
        container.write(args.out, "report", {"dimension": rep.dimension, "config": cfg.to_dict(),
                                             "report": rep.to_dict()})
    print(f"verdict: {rep.verdict}  aggregate: {rep.aggregate:.3e}  "
          f"(moments {rep.aggregate_moments:.3e}, smoothness {rep.aggregate_smoothness:.3e})")
    for kind, l, m, n, v in rep.worst(3):
        print(f"  {kind:<10} l={l} m={m} n={n}: {v:.3e}")
    return VERDICT_EXIT[rep.verdict]


def cmd_reconstruct(args):
    _k, head, arrays = _read(args.input, "boundary")
    b = boundary_from_container(head, arrays)
    cfg = _config_from(head, args, b.sphere.dim)
    vol = run_reconstruct(b, cfg, threads=args.threads)
    header = {"dimension": vol.dim, "grids": {"volume": vol.describe()}, "config": cfg.to_dict()}
    container.write(args.out, "volume", header, {"axis": vol.axis, "values": vol.values})
    print(f"wrote {vol.n}^{vol.dim} volume to {args.out}")
    if args.truth:
        _k, th, ta = _read(args.truth, "phantom")
        err = recon.l2_error(vol, phantom_from_container(th, ta))
        print(f"relative L2 error: {err:.4e}")
    return EXIT_OK


def cmd_selftest(args):
    results = selftest.run_all(quick=args.quick)
    print(selftest.format_table(results))
    ok = all(r.passed for r in results)
    print("all suites passed" if ok else "SELF-TEST FAILED")
    return EXIT_OK if ok else EXIT_SELFTEST


# ---------------------------------------------------------------------------
# argument parsing


def _add_config_flags(p):
    g = p.add_argument_group("run configuration (defaults from the input container)")
    for flag, field, typ in _CONFIG_FLAGS:
        g.add_argument(flag, dest=field, type=typ, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="htrw", description="Half-time wave data: range checks and reconstruction.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker cap (default: $HTRW_THREADS or all cores)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="write a bump phantom")
    p.add_argument("--dim", type=int, choices=(2, 3), required=True)
    p.add_argument("--bump", action="append", metavar="cx,cy[,cz],rho,amp")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("forward", help="boundary wave data on (0,1] x S")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, choices=(2, 3))
    _add_config_flags(p)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("check", help="range check; exit 0 in-range, 3 out-of-range, 4 inconclusive")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--out", help="also write a report container")
    p.add_argument("--inject-violation", metavar="l=5,n=1,eps=1e-2", help="test hook: add a violating channel")
    _add_config_flags(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("reconstruct", help="reconstruct f from boundary data")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="phantom container; prints the relative L2 error")
    _add_config_flags(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("selftest", help="run the invariant suites")
    p.add_argument("--quick", action="store_true", help="degrees l <= 8 only")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits with 2 on bad usage
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.func(args)
    except HTRWError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
