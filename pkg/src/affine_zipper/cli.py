"""Command-line entry point: ``zipper <command> [options]``."""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import derham
from .errors import SchemaError, ValidationError, ZipperError
from .zipper import load_zipper, sample_curve, straight_line, validate_zipper

log = logging.getLogger("affine_zipper")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
PRESETS = ("derham", "line")
# options whose values may start with '-'
_VALUE_OPTIONS = ("--t", "--betas", "--points", "--r")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    source: dict
    options: dict = field(default_factory=dict)
    out: Path = Path(".")

    def digest(self):
        blob = json.dumps({"command": self.command, "source": self.source, "options": self.options},
                          sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------- parsing helpers


def parse_grid(text):
    """"lo:hi:step" -> inclusive grid; a comma list is taken literally."""
    if ":" not in text:
        return np.array([float(v) for v in text.split(",")])
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"grid {text!r} must look like lo:hi:step")
    lo, hi, step = (float(p) for p in parts)
    if step <= 0 or hi < lo:
        raise UsageError(f"grid {text!r} needs lo <= hi and step > 0")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 12)


def parse_depths(text):
    try:
        depths = tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise UsageError(f"depths {text!r} must be comma-separated integers") from exc
    if any(d < 1 for d in depths) or list(depths) != sorted(set(depths)):
        raise UsageError(f"depths {text!r} must be increasing positive integers")
    return depths


def parse_scale(text):
    """A positive number, also accepting "2^-k"."""
    text = text.strip()
    if text.startswith("2^"):
        return 2.0 ** float(text[2:])
    return float(text)


def _merge_values(argv):
    out = []
    it = iter(argv)
    for a in it:
        if a in _VALUE_OPTIONS:
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


# ---------------------------------------------------------------- output helpers


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows, config: RunConfig):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    buf.write(f"# config-hash={config.digest()}\n")
    path.write_text(buf.getvalue())
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write_json(path: Path, payload, config: RunConfig):
    payload = dict(payload)
    payload["config_hash"] = config.digest()
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def render_svg(points, pad=0.05):
    """Single polyline, y axis pointing up, 9 significant digits."""
    xy = np.column_stack([points[:, 0], -points[:, 1]])
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    lo = lo - pad * span
    size = span * (1 + 2 * pad)
    pts = " ".join(f"{x:.9g},{y:.9g}" for x, y in xy)
    stroke = f"{float(size.max()) / 500:.9g}"
    return (
        '<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="{lo[0]:.9g} {lo[1]:.9g} {size[0]:.9g} {size[1]:.9g}">\n'
        f'<polyline fill="none" stroke="black" stroke-width="{stroke}" points="{pts}"/>\n'
        "</svg>\n"
    )


# ---------------------------------------------------------------- commands


def load_source(source):
    if source["kind"] == "file":
        return load_zipper(source["path"])
    if source["preset"] == "derham":
        return derham.build(source["omega"])
    return straight_line(source.get("n_maps", 2))


def cmd_validate(config: RunConfig):
    try:
        z = load_source(config.source)
    except ValidationError as exc:
        report = exc.report
    else:
        report = validate_zipper(z, tol=config.options["tol"])
    payload = report.to_dict()
    if config.options.get("report"):
        write_json(config.out / "validate.json", payload, config)
    else:
        print(json.dumps(_jsonable(payload), indent=2, sort_keys=True))
    return EXIT_OK if report.passed else EXIT_FAIL


def _curve(z, opts):
    from .pressure import pressure_curve

    return pressure_curve(z.system, t_grid=opts["t"], depth_schedule=opts["depths"], norm=opts["norm"],
                          method=opts["method"])


def cmd_pressure(config: RunConfig):
    opts = config.options
    z = load_source(config.source)
    curve = _curve(z, opts)
    header = ["t"] + [f"P_{d}" for d in curve.depths] + ["P", "dP", "residual"]
    rows = []
    for k, t in enumerate(curve.t_grid):
        rows.append([float(t), *curve.per_depth[:, k], curve.extrapolated[k], curve.derivative[k], curve.residual[k]])
    write_csv(config.out / "pressure.csv", header, rows, config)
    write_json(config.out / "pressure_summary.json", {"summary": curve.summary, "flags": curve.flags}, config)
    return EXIT_OK


def cmd_spectrum(config: RunConfig):
    from .pressure import counting_spectrum, spectrum_curve

    opts = config.options
    z = load_source(config.source)
    curve = _curve(z, opts)
    betas = None if opts["betas"] == "auto" else parse_grid(opts["betas"])
    spectrum = spectrum_curve(z.system, curve, betas, assumption_a=opts["assumption_a"])
    rows = [
        [b, d, ts, w, r, c]
        for b, d, ts, w, r, c in zip(spectrum.beta_grid, spectrum.values, spectrum.t_star, spectrum.window_tags,
                                     spectrum.regular_tags, spectrum.clamped)
    ]
    write_csv(config.out / "spectrum.csv", ["beta", "D", "t_star", "window_tag", "regular_tag", "clamped"], rows, config)
    cnt = counting_spectrum(z.system, opts["r"], opts["delta"], spectrum.beta_grid)
    rows = [[b, v, c] for b, v, c in zip(cnt.beta_grid, cnt.values, cnt.counts)]
    write_csv(config.out / "counting.csv", ["beta", "D_count", "bin_count"], rows, config)
    return EXIT_OK


_POINT_DENOMINATOR = (1 << 61) - 1


def random_parameters(count, seed):
    """Non-dyadic rationals a / (2^61 - 1) in (0, 1)."""
    rng = np.random.default_rng(seed)
    return [Fraction(int(a), _POINT_DENOMINATOR) for a in rng.integers(1, _POINT_DENOMINATOR, count)]


def cmd_holder(config: RunConfig):
    from .holder import holder_estimate

    opts = config.options
    z = load_source(config.source)
    if opts["points"]:
        xs = [Fraction(p) for p in opts["points"].split(",")]
    else:
        xs = random_parameters(opts["count"], opts["seed"])
    rows = []
    for k, x in enumerate(xs):
        est = holder_estimate(z, x, depth=opts["depth"], scale_count=opts["scales"],
                              samples_per_scale=opts["samples"], seed=opts["seed"] + k)
        rows.append([float(x), est.symbolic_final, est.direct_min, est.direct_regression])
    write_csv(config.out / "holder.csv", ["x", "symbolic_final", "direct_min", "direct_regression"], rows, config)
    return EXIT_OK


def cmd_cones(config: RunConfig):
    from . import cones

    z = load_source(config.source)
    if z.dim != 2:
        raise ZipperError("cone certification is implemented for d = 2")
    mats = z.matrices
    payload = {}
    search = cones.invariant_cone_2d(mats)
    payload["invariant_cone"] = {
        "found": search.found,
        "cone": search.cone.to_dict() if search.cone is not None else None,
        "clearance": search.clearance,
        "message": search.message,
    }
    conj = cones.conjugation_search(mats)
    payload["conjugation"] = {
        "found": conj.found,
        "family": conj.family,
        "param": conj.param,
        "min_entry": conj.min_entry,
    }
    if conj.found:
        zc = cones.conjugate_zipper(z, conj.transform)
        rep = cones.check_assumption_a(zc, cones.ProjectiveCone.positive_quadrant())
        payload["assumption_a"] = {"system": "conjugated", **rep.to_dict()}
    elif search.found:
        rep = cones.check_assumption_a(z, search.cone)
        payload["assumption_a"] = {"system": "original", **rep.to_dict()}
    diag = cones.splitting_diagnostic(mats)
    payload["splitting"] = {
        "decay_rate": diag.decay_rate,
        "residual": diag.residual,
        "no_splitting": diag.no_splitting,
        "ratios": diag.ratios,
    }
    stable = cones.stable_directions(mats, config.options["depth"])
    payload["stable_directions"] = {
        "depth": stable.depth,
        "all_reliable": stable.all_reliable,
        "gap": cones.angular_gap(stable.angles, search.cone) if search.found else None,
    }
    try:
        wo = cones.well_ordered_check(z, direction_depth=config.options["depth"])
        payload["well_ordered"] = {
            "pass": wo.passed,
            "label": wo.label,
            "witness": wo.witness,
            "witness_angle": wo.witness_angle,
            "directions_checked": wo.directions_checked,
        }
    except ZipperError as exc:
        payload["well_ordered"] = {"pass": None, "refused": str(exc)}
    write_json(config.out / "cones.json", payload, config)
    return EXIT_OK


def cmd_render(config: RunConfig):
    z = load_source(config.source)
    if z.dim != 2:
        raise ZipperError("render is implemented for d = 2")
    sample = sample_curve(z, config.options["depth"])
    rows = [[x, p[0], p[1]] for x, p in zip(sample.parameters, sample.positions)]
    write_csv(config.out / "curve.csv", ["x", "vx", "vy"], rows, config)
    (config.out / "curve.svg").write_text(render_svg(sample.positions))
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "pressure": cmd_pressure,
    "spectrum": cmd_spectrum,
    "holder": cmd_holder,
    "cones": cmd_cones,
    "render": cmd_render,
}


# ---------------------------------------------------------------- argparse


def build_parser():
    parser = argparse.ArgumentParser(prog="zipper", description="Affine zipper curves and their multifractal data.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--preset", choices=PRESETS, help="built-in zipper")
        src.add_argument("--zipper", type=Path, help="zipper JSON file")
        p.add_argument("--omega", type=float, default=0.1, help="de Rham parameter (default 0.1)")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory (default .)")
        p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")

    def pressure_opts(p):
        p.add_argument("--t", default="-10:10:0.05", help="t grid lo:hi:step (default -10:10:0.05)")
        p.add_argument("--depths", default=None, help="comma-separated depths (default by number of maps)")
        p.add_argument("--norm", choices=("2", "1", "inf"), default="2", help="matrix norm (default 2)")
        p.add_argument("--method", choices=("linear", "aitken"), default="linear",
                       help="extrapolation in 1/n (default linear)")

    p = sub.add_parser("validate", help="check the cross condition, invertibility and contraction")
    common(p)
    p.add_argument("--tol", type=float, default=1e-9, help="residual tolerance (default 1e-9)")
    p.add_argument("--report", action="store_true", help="write validate.json instead of printing")

    p = sub.add_parser("pressure", help="write pressure.csv")
    common(p)
    pressure_opts(p)

    p = sub.add_parser("spectrum", help="write spectrum.csv and counting.csv")
    common(p)
    pressure_opts(p)
    p.add_argument("--betas", default="auto", help="'auto' or a lo:hi:step grid (default auto)")
    p.add_argument("--r", default="2^-14", help="counting scale, e.g. 2^-16 (default 2^-14)")
    p.add_argument("--delta", type=float, default=0.05, help="counting bin half-width (default 0.05)")
    p.add_argument("--assumption-a", action="store_true", help="assert the cone condition for window tags")

    p = sub.add_parser("holder", help="write holder.csv")
    common(p)
    p.add_argument("--points", default="", help="comma-separated rationals such as 1/3 (default random)")
    p.add_argument("--count", type=int, default=20, help="random non-dyadic points (default 20)")
    p.add_argument("--depth", type=int, default=20, help="symbolic depth (default 20)")
    p.add_argument("--scales", type=int, default=16, help="direct scale count (default 16)")
    p.add_argument("--samples", type=int, default=8, help="samples per scale (default 8)")

    p = sub.add_parser("cones", help="write cones.json")
    common(p)
    p.add_argument("--depth", type=int, default=10, help="stable-direction depth (default 10)")

    p = sub.add_parser("render", help="write curve.svg and curve.csv")
    common(p)
    p.add_argument("--depth", type=int, default=12, help="subdivision depth (default 12)")
    return parser


def _config(args):
    if args.zipper is not None:
        source = {"kind": "file", "path": str(args.zipper)}
    elif args.preset == "derham":
        source = {"kind": "preset", "preset": "derham", "omega": args.omega}
    else:
        source = {"kind": "preset", "preset": args.preset}
    opts = {"seed": args.seed}
    cmd = args.command
    if cmd == "validate":
        opts.update(tol=args.tol, report=args.report)
    if cmd in ("pressure", "spectrum"):
        opts.update(
            t=parse_grid(args.t).tolist(),
            depths=parse_depths(args.depths) if args.depths else None,
            norm=args.norm,
            method=args.method,
        )
    if cmd == "spectrum":
        if args.betas != "auto":
            parse_grid(args.betas)
        try:
            r = parse_scale(args.r)
        except ValueError as exc:
            raise UsageError(f"bad --r value {args.r!r}") from exc
        opts.update(betas=args.betas, r=r, delta=args.delta, assumption_a=args.assumption_a)
    if cmd == "holder":
        try:
            [Fraction(p) for p in args.points.split(",") if args.points]
        except (ValueError, ZeroDivisionError) as exc:
            raise UsageError(f"bad --points value {args.points!r}") from exc
        opts.update(points=args.points, count=args.count, depth=args.depth, scales=args.scales,
                    samples=args.samples)
    if cmd in ("cones", "render"):
        opts.update(depth=args.depth)
    return RunConfig(cmd, source, opts, args.out)


def main(argv=None):
    argv = _merge_values(sys.argv[1:] if argv is None else list(argv))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        config = _config(args)
        if config.source["kind"] == "file" and not Path(config.source["path"]).is_file():
            raise UsageError(f"zipper file not found: {config.source['path']}")
        config.out.mkdir(parents=True, exist_ok=True)
    except (UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[config.command](config)
    except (SchemaError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ZipperError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
