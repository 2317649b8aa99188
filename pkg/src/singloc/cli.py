"""Command-line front end.

Every artifact carries the run configuration and the library version, so two runs with the same
flags and seed write byte-identical JSON and CSV files.

Exit codes: 0 pass, 2 usage error, 3 numeric failure, 4 verification failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import scenario as scen
from .clarke import estimate_critical_values, extract_level_set, generalized_differential, hull_distance, is_critical
from .errors import NumericFailure, SinglocError
from .fgeod import maximal_extension, trace_f_geodesic
from .field import check_lipschitz
from .geodesic import distance
from .singular import check_dist_reconstruction, classify_point, extract_singular_locus, verify_local_tree

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4


class UsageError(Exception):
    pass


# -- plumbing ----------------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    return x


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n"


def _config(args, sc=None) -> dict:
    cfg = {"command": args.command, "version": __version__, "seed": args.seed, "angular_res": args.angres}
    for key in ("grid", "delta", "probe", "value", "cover", "params", "scenario_file"):
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    if sc is not None:
        cfg["scenario"] = sc.name
        cfg["scenario_config"] = sc.config
    return _jsonable(cfg)


def _parse_point(text: str) -> np.ndarray:
    try:
        x, y = (float(s) for s in text.split(","))
    except ValueError:
        raise UsageError(f"expected 'x,y', got {text!r}") from None
    return np.array([x, y])


def _parse_params(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"expected key=value, got {item!r}")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def _scenario(args):
    if args.scenario_file:
        try:
            return scen.load(Path(args.scenario_file).read_text())
        except OSError as e:
            raise UsageError(str(e)) from None
    if not args.scenario:
        raise UsageError("one of --scenario or --scenario-file is required")
    if args.scenario not in scen.list_scenarios():
        raise UsageError(f"unknown scenario {args.scenario!r}; try 'singloc scenario list'")
    try:
        return scen.build(args.scenario, **_parse_params(args.param))
    except TypeError as e:
        raise UsageError(str(e)) from None


def _outdir(args) -> Path:
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(path: Path, text: str, written: list):
    path.write_text(text)
    written.append(str(path))


def _csv(rows, header, cfg) -> str:
    lines = ["# " + json.dumps(cfg, sort_keys=True), ",".join(header)]
    lines += [",".join(repr(float(v)) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def _pgm(V: np.ndarray, cfg) -> str:
    finite = np.isfinite(V)
    lo, hi = (float(V[finite].min()), float(V[finite].max())) if finite.any() else (0.0, 1.0)
    g = np.zeros(V.shape, dtype=int)
    g[finite] = np.round(255 * (V[finite] - lo) / max(hi - lo, 1e-300)).astype(int)
    # rows top to bottom = y descending
    g = g[::-1]
    body = "\n".join(" ".join(str(v) for v in row) for row in g)
    return f"P2\n# {json.dumps(cfg, sort_keys=True)}\n{V.shape[1]} {V.shape[0]}\n255\n{body}\n"


class _Svg:
    def __init__(self, window, cfg, size=600):
        self.w = window
        self.size = size
        self.scale = size / max(window.x1 - window.x0, window.y1 - window.y0)
        self.items = []
        self.cfg = cfg

    def _xy(self, p):
        return (float(p[0] - self.w.x0) * self.scale, float(self.w.y1 - p[1]) * self.scale)

    def polyline(self, pts, color="black", width=1.0):
        pts = np.asarray(pts).reshape(-1, 2)
        if len(pts) < 2:
            return
        s = " ".join("%.3f,%.3f" % self._xy(p) for p in pts)
        self.items.append(f'<polyline points="{s}" fill="none" stroke="{color}" stroke-width="{width}"/>')

    def dots(self, pts, color="black", r=1.5):
        for p in np.asarray(pts).reshape(-1, 2):
            x, y = self._xy(p)
            self.items.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="{r}" fill="{color}"/>')

    def text(self) -> str:
        wpx = (self.w.x1 - self.w.x0) * self.scale
        hpx = (self.w.y1 - self.w.y0) * self.scale
        meta = json.dumps(self.cfg, sort_keys=True).replace("&", "&amp;").replace("<", "&lt;")
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{wpx:.0f}" height="{hpx:.0f}">\n'
                f"<metadata>{meta}</metadata>\n"
                f'<rect width="100%" height="100%" fill="white"/>\n' + "\n".join(self.items) + "\n</svg>\n")


_COLORS = {"upper-singular": "crimson", "lower-singular": "royalblue"}


# -- commands ------------------------------------------------------------------------------

def cmd_distmap(args) -> int:
    sc = _scenario(args)
    f = sc.field
    if args.probe is not None:
        v = float(f(_parse_point(args.probe)))
        print(repr(round(v, 12)))
        if args.out_given is False:
            return EXIT_OK if np.isfinite(v) else EXIT_NUMERIC
    n = args.grid or 256
    cfg = _config(args, sc)
    X = sc.window.grid(n)
    V = np.asarray(f(X.reshape(-1, 2)), dtype=float).reshape(n, n)
    partial = not np.all(np.isfinite(V))
    out, written = _outdir(args), []
    _write(out / f"{sc.name}_distmap.csv", _csv(np.column_stack([X.reshape(-1, 2), V.ravel()]),
                                                   ["x", "y", "value"], cfg), written)
    _write(out / f"{sc.name}_distmap.pgm", _pgm(V, cfg), written)
    meta = {"config": cfg, "grid_n": n, "window": [sc.window.x0, sc.window.x1, sc.window.y0, sc.window.y1],
            "min": np.nanmin(V) if not np.all(np.isnan(V)) else None,
            "max": np.nanmax(V) if not np.all(np.isnan(V)) else None, "partial": partial}
    _write(out / f"{sc.name}_distmap.json", _dumps(meta), written)
    print("\n".join(written))
    return EXIT_NUMERIC if partial else EXIT_OK


def _tree_radius(sc, g) -> float:
    w = sc.window
    return max(min(0.2, 0.1 * min(w.x1 - w.x0, w.y1 - w.y0)), 4.5 * g.spacing)


def cmd_singular(args) -> int:
    sc = _scenario(args)
    n = args.grid or 256
    cfg = _config(args, sc)
    g = extract_singular_locus(sc.field, sc.metric, window=sc.window, grid_n=n, delta=args.delta,
                               angular_res=args.angres)
    tree = verify_local_tree(g, _tree_radius(sc, g), 50, seed=args.seed)
    out, written = _outdir(args), []
    rec = {"config": cfg, "graph": g.to_record(), "tree_report": tree.__dict__}
    _write(out / f"{sc.name}_singular.json", _dumps(rec), written)
    svg = _Svg(sc.window, cfg)
    for e in g.edges:
        svg.polyline(e["polyline"], _COLORS.get(e["label"], "gray"))
    for label, color in _COLORS.items():
        svg.dots(g.locus_points(label), color, 0.8)
    svg.dots([v["point"] for v in g.vertices], "black", 2.5)
    _write(out / f"{sc.name}_singular.svg", svg.text(), written)
    print("\n".join(written))
    print(f"vertices {len(g.vertices)} edges {len(g.edges)} tree {'pass' if tree.passed else 'fail'}")
    return EXIT_OK if tree.passed else EXIT_VERIFY


def cmd_sard(args) -> int:
    sc = _scenario(args)
    n = args.grid or int(sc.config.get("sard_grid", 129))
    cover = args.cover if args.cover is not None else 1e-2
    cfg = _config(args, sc)
    est = estimate_critical_values(sc.field, sc.metric, window=sc.window, grid_n=n, delta_cover=cover,
                                   delta=args.delta, angular_res=args.angres)
    out, written = _outdir(args), []
    _write(out / f"{sc.name}_sard.json", _dumps({"config": cfg, "estimate": est.to_record()}), written)
    print("\n".join(written))
    print("cover_width  bound")
    for d, b in est.history:
        print(f"{d:.3e}  {b:.3e}")
    return EXIT_OK


def cmd_trace(args) -> int:
    sc = _scenario(args)
    if args.probe is None:
        raise UsageError("trace needs --probe x,y")
    p = _parse_point(args.probe)
    cfg = _config(args, sc)
    cert = trace_f_geodesic(sc.field, sc.metric, p, "forward", delta=args.delta)
    mx = maximal_extension(sc.field, sc.metric, cert)
    pts = mx.certificate.segment.points
    out, written = _outdir(args), []
    _write(out / f"{sc.name}_trace.csv", _csv(np.column_stack([mx.certificate.segment.t, pts]),
                                                ["t", "x", "y"], cfg), written)
    svg = _Svg(sc.window, cfg)
    svg.polyline(pts, "darkgreen", 1.5)
    svg.dots([mx.backward_end.point, mx.forward_end.point], "black", 2.5)
    _write(out / f"{sc.name}_trace.svg", svg.text(), written)
    rec = {"config": cfg, "geodesic": mx.to_record()}
    _write(out / f"{sc.name}_trace.json", _dumps(rec), written)
    print("\n".join(written))
    print(f"backward {mx.backward_end.reason} forward {mx.forward_end.reason}")
    return EXIT_OK


def cmd_clarke(args) -> int:
    sc = _scenario(args)
    if args.probe is None:
        raise UsageError("clarke needs --probe x,y")
    p = _parse_point(args.probe)
    cd = generalized_differential(sc.field, sc.metric, p, angular_res=args.angres)
    rec = {"config": _config(args, sc), "differential": cd.to_record(),
           "hull_distance": hull_distance(cd), "critical": is_critical(cd)}
    text = _dumps(rec)
    if args.out_given:
        out, written = _outdir(args), []
        _write(out / f"{sc.name}_clarke.json", text, written)
        print("\n".join(written))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_levelset(args) -> int:
    sc = _scenario(args)
    if args.value is None:
        raise UsageError("levelset needs --value t")
    n = args.grid or 257
    cfg = _config(args, sc)
    ls = extract_level_set(sc.field, sc.window, grid_n=n, t=args.value, m=sc.metric, angular_res=args.angres)
    out, written = _outdir(args), []
    svg = _Svg(sc.window, cfg)
    for comp, reg in zip(ls.components, ls.regular):
        svg.polyline(comp, "black" if reg else "crimson")
    _write(out / f"{sc.name}_level.svg", svg.text(), written)
    _write(out / f"{sc.name}_level.json", _dumps({"config": cfg, "level_set": ls.to_record()}), written)
    print("\n".join(written))
    print(f"components {len(ls.components)} regular {ls.regular}")
    return EXIT_OK


def cmd_scenario(args) -> int:
    if args.action == "list":
        for name in scen.list_scenarios():
            print(name)
        return EXIT_OK
    if not args.name:
        raise UsageError("scenario dump needs a name")
    if args.name not in scen.list_scenarios():
        raise UsageError(f"unknown scenario {args.name!r}")
    sys.stdout.write(scen.dump(scen.build(args.name, **_parse_params(args.param))))
    return EXIT_OK


# -- verify --------------------------------------------------------------------------------

def _err_check(name, err, tol):
    return {"check": f"oracle:{name}", "value": err, "tol": tol, "passed": bool(err <= tol)}


def _oracle_checks(sc, angres: int, g=None) -> list:
    """Checks for the oracle entries whose kind has a generic test."""
    f, m = sc.field, sc.metric
    checks = []
    for e in sc.oracle.entries:
        v = e.value
        if not isinstance(v, dict):
            continue
        if e.kind == "values" and "pairs" in v:
            got = np.array([distance(m, a, b).value for a, b in v["pairs"]])
            checks.append(_err_check(e.name, float(np.max(np.abs(got - np.asarray(v["values"])))), 1e-6))
        elif e.kind == "values":
            P = np.asarray(v["points"], dtype=float)
            checks.append(_err_check(e.name, float(np.max(np.abs(f(P) - np.asarray(v["values"], dtype=float)))),
                                     1e-6))
        elif e.kind == "labels":
            got = [classify_point(f, m, q, angular_res=angres).label for q in np.asarray(v["points"], dtype=float)]
            checks.append({"check": f"oracle:{e.name}", "value": got, "expected": v["label"],
                           "passed": all(lbl == v["label"] for lbl in got)})
        elif e.kind == "lines" and g is not None:
            U = g.locus_points("upper-singular")
            if not len(U):
                checks.append(_err_check(e.name, float("inf"), 2 * g.spacing))
                continue
            gaps = []
            for axis, key in ((0, "x"), (1, "y")):
                if key in v:
                    d = U[:, axis] - v[key]
                    period = m.periods[axis] if m.periods is not None else None
                    if period:
                        d = (d + period / 2) % period - period / 2
                    gaps.append(np.abs(d))
            checks.append(_err_check(e.name, float(np.min(gaps, axis=0).max()), 2 * g.spacing))
        elif e.kind == "counts":
            got = {t: len(extract_level_set(f, sc.window, t=float(t), m=m).components) for t in v}
            checks.append({"check": f"oracle:{e.name}", "value": got, "expected": v,
                           "passed": all(got[t] == v[t] for t in v)})
    return checks


def cmd_verify(args) -> int:
    sc = _scenario(args)
    n = args.grid if args.grid is not None else 128
    cfg = _config(args, sc)
    checks = []
    if n < 16:
        checks.append({"check": "precondition:grid", "value": n, "expected": ">= 16", "passed": False})
    else:
        lip = check_lipschitz(sc.field, seed=args.seed)
        checks.append({"check": "lipschitz", "value": lip.max_violation, "gradient_norm_max": lip.gradient_norm_max,
                       "passed": lip.passed})
        g = extract_singular_locus(sc.field, sc.metric, window=sc.window, grid_n=n, delta=args.delta,
                                   angular_res=args.angres)
        checks += _oracle_checks(sc, args.angres, g)
        checks.append({"check": "undetermined_fraction", "value": g.undetermined_fraction, "tol": 0.01,
                       "passed": g.undetermined_fraction < 0.01})
        tree = verify_local_tree(g, _tree_radius(sc, g), 50, seed=args.seed)
        checks.append({"check": "local_tree", "value": tree.__dict__, "passed": tree.passed})
        rec = check_dist_reconstruction(sc.field, sc.metric, grid_n=min(n, 257))
        if rec.status != "not-applicable":
            checks.append({"check": "reconstruction", "value": rec.max_error, "tol": rec.tol, "passed": rec.passed})
        if "critical_points" in sc.oracle.names():
            exp = sc.oracle["critical_points"].value
            cover = args.cover if args.cover is not None else 1e-2
            est = estimate_critical_values(sc.field, sc.metric, window=sc.window,
                                           grid_n=int(sc.config.get("sard_grid", 128)), delta_cover=cover,
                                           refinements=1, angular_res=args.angres)
            bound = len(exp["values"]) * cover
            checks.append({"check": "sard_bound", "value": est.measure_upper_bound, "tol": bound,
                           "passed": est.measure_upper_bound <= bound + 1e-12})
    passed = all(c["passed"] for c in checks)
    rec = {"config": cfg, "checks": checks, "passed": passed}
    if args.out_given:
        out, written = _outdir(args), []
        _write(out / f"{sc.name}_verify.json", _dumps(rec), written)
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['check']}")
    return EXIT_OK if passed else EXIT_VERIFY


# -- entry ---------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario")
    common.add_argument("--scenario-file")
    common.add_argument("--param", action="append", metavar="KEY=VALUE", help="builder parameter, e.g. K=4")
    common.add_argument("--grid", type=int)
    common.add_argument("--delta", type=float)
    common.add_argument("--angres", type=int, default=720)
    common.add_argument("--out")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--probe")
    common.add_argument("--value", type=float)
    common.add_argument("--cover", type=float)

    p = argparse.ArgumentParser(prog="singloc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (("distmap", cmd_distmap, "field values on a grid (CSV, PGM, JSON)"),
                            ("singular", cmd_singular, "singular locus graph and local tree report"),
                            ("sard", cmd_sard, "critical value cover with refinement trend"),
                            ("verify", cmd_verify, "run the invariant suite on a scenario"),
                            ("trace", cmd_trace, "trace the maximal f-geodesic through --probe"),
                            ("clarke", cmd_clarke, "generalized differential at --probe"),
                            ("levelset", cmd_levelset, "level set at --value")):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
    sp = sub.add_parser("scenario", parents=[common], help="list or dump scenarios")
    sp.add_argument("action", choices=("list", "dump"))
    sp.add_argument("name", nargs="?")
    sp.set_defaults(func=cmd_scenario)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    args.out_given = args.out is not None
    if args.out is None:
        args.out = "."
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericFailure as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except SinglocError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
