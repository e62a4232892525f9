"""Command-line front end.

Every invocation prints one JSON RunRecord (or a CSV table with ``--csv``)::

    fieldcross approx --preset scan --c 3 --a 1 --a1 0.25 --a2 0.5
    fieldcross mc --estimator ks1 --n 10000 --c 1.5 --reps 200000 --seed 7
    fieldcross compare --preset ks1 --n 10000 --c 1.5 --reps 200000 --seed 7 --csv

Exit status: 0 success, 1 invalid input, 2 numerical failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
import warnings
from importlib import resources
from typing import Sequence

import numpy as np

from . import __version__
from . import approx, integral_test as it, pickands, presets, simulate
from .config import MODEL_KEYS, load_callable, load_config, model_from_config, parse_floats, parse_region
from .errors import NumericalError
from .model import Region
from .quadrature import QuadratureSpec

SCHEMA_ID = "fieldcross/run-record/1"
SEED_ENV = "FIELDCROSS_SEED"
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2, 64

# flags that never change the payload and are left out of the parameter echo
_NOT_ECHOED = {"command", "config", "workers", "csv", "dump_reps", "timing", "pretty", "seed", "func"}


def load_schema() -> dict:
    """JSON Schema of the RunRecord printed by every command."""
    text = resources.files("fieldcross").joinpath("schema/run_record.schema.json").read_text()
    return json.loads(text)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        return parse_floats(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _ints(text: str) -> list[int]:
    return [int(round(x)) for x in _floats(text)]


def _schedule(text: str) -> list[list[float]]:
    out = []
    for item in text.split(","):
        if not item.strip():
            continue
        k, _, a = item.partition(":")
        out.append([float(k), float(a)])
    if not out:
        raise argparse.ArgumentTypeError("schedule must list K:a pairs")
    return out


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    return int(raw) if raw not in (None, "") else 0


def _common(p: argparse.ArgumentParser, stochastic: bool = True):
    g = p.add_argument_group("run control")
    g.add_argument("--config", help="key = value file pre-populating any flag")
    g.add_argument("--csv", action="store_true", help="print tabular payloads as CSV")
    g.add_argument("--pretty", action="store_true", help="indent JSON even when piped")
    g.add_argument("--timing", action="store_true", help="record wall times (breaks byte-identical reruns)")
    if stochastic:
        g.add_argument("--seed", type=int, default=None, help=f"master seed (default ${SEED_ENV} or 0)")
        g.add_argument("--workers", type=int, default=1, help="parallel workers; never changes results")
        g.add_argument("--dump-reps", metavar="PATH", help="write per-replication outcomes to CSV")


def _quad_flags(p):
    p.add_argument("--rel-tol", type=float, default=1e-8)
    p.add_argument("--abs-tol", type=float, default=1e-12)
    p.add_argument("--max-subdivisions", type=int, default=64)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fieldcross", description="Tail approximations for Gaussian-like random fields "
                                                    "with Monte Carlo and exact oracles.")
    parser.add_argument("--version", action="version", version=f"fieldcross {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("approx", help="closed-form asymptotic approximations")
    p.add_argument("--preset", required=True,
                   choices=["scan", "scan-boundary", "multiindex", "cube", "empirical", "region"])
    p.add_argument("--c", type=float, required=True, help="level")
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--a1", type=float, default=0.25)
    p.add_argument("--a2", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=2.0, help="boundary exponent for scan-boundary")
    p.add_argument("--prefactor", choices=["local", "reference"], default="local")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--region", help="rectangles 'x0,y0,x1,y1; ...' (default unit cube)")
    p.add_argument("--HK", type=float, default=0.0, help="cube constant for --preset cube")
    p.add_argument("--H", type=float, default=None, help="constant H for --preset region with a non-additive model")
    p.add_argument("--two-sided", action="store_true")
    _quad_flags(p)
    _common(p, stochastic=False)
    p.set_defaults(func=_cmd_approx)

    p = sub.add_parser("pickands", help="Monte Carlo Pickands-type constants")
    p.add_argument("--preset", choices=["additive", "constant"], default="additive")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--beta", type=_floats, default=None, help="comma-separated betas (additive preset)")
    p.add_argument("--alpha", type=float, default=1.0, help="exponent (constant preset)")
    p.add_argument("--scale", type=float, default=1.0, help="multiply r by this factor")
    p.add_argument("--K", type=float, default=8.0)
    p.add_argument("--a", type=float, default=0.0625)
    p.add_argument("--schedule", type=_schedule, default=None, help="'K:a,K:a,...' overrides --K/--a")
    p.add_argument("--method", choices=["auto", "additive", "dense"], default="auto")
    p.add_argument("--reps", type=int, default=10000)
    _common(p)
    p.set_defaults(func=_cmd_pickands)

    p = sub.add_parser("mc", help="Monte Carlo oracles")
    p.add_argument("--estimator", required=True, choices=["scan", "ou", "ks1", "ks2", "multiindex"])
    _mc_flags(p)
    _common(p)
    p.set_defaults(func=_cmd_mc)

    p = sub.add_parser("integral-test", help="upper/lower class series and integral criteria")
    p.add_argument("--preset", required=True, choices=["lil", "linear", "edge", "w-sequence", "custom"])
    p.add_argument("--series", choices=["all", "kef", "j", "op", "multi"], default="all")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--epsilon", type=_floats, default=[0.0, 0.1])
    p.add_argument("--base", type=float, default=10.0)
    p.add_argument("--w-max", type=float, default=40.0, help="largest log log cutoff")
    p.add_argument("--thresholds", type=_floats, default=[-1.05, -0.95])
    p.add_argument("--j-max", type=int, default=1000000)
    p.add_argument("--beta-fn", help="module:function beta(v) in log coordinates (custom preset)")
    _common(p, stochastic=False)
    p.set_defaults(func=_cmd_integral)

    p = sub.add_parser("compare", help="asymptotics against oracles, side by side")
    p.add_argument("--preset", required=True, choices=["scan", "ou", "ks1", "ks2", "pickands-additive"])
    _mc_flags(p)
    p.add_argument("--beta", type=_floats, default=None)
    p.add_argument("--K", type=float, default=8.0, help="Pickands cube side")
    p.add_argument("--spacing", type=float, default=0.0625, help="Pickands lattice spacing")
    _common(p)
    p.set_defaults(func=_cmd_compare)
    return parser


def _mc_flags(p):
    p.add_argument("--c", type=float, default=3.0)
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--a", type=float, default=1.0, help="scan horizon")
    p.add_argument("--a1", type=float, default=0.25)
    p.add_argument("--a2", type=float, default=0.5)
    p.add_argument("--h", type=float, default=1e-3, help="scan grid step")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--side", type=float, default=None, help="OU cube side (default 10 for d=1, 1 for d=2)")
    p.add_argument("--step", type=float, default=0.005, help="OU grid step")
    p.add_argument("--n", type=int, default=1000, help="empirical-process sample size")
    p.add_argument("--two-sided", action="store_true")
    p.add_argument("--nmax", type=_ints, default=[64, 64])
    p.add_argument("--dist", choices=["rademacher", "uniform-centered", "standard-normal"],
                   default="standard-normal")


# --- commands ---------------------------------------------------------------


def _quad(args) -> QuadratureSpec:
    return QuadratureSpec(args.rel_tol, args.abs_tol, args.max_subdivisions)


def _cmd_approx(args, ctx):
    quad = _quad(args)
    c = args.c
    if args.preset == "scan":
        pre = presets.scan_preset(args.a, args.a1, args.a2)
        res = approx.region_tail(c, pre.region, pre.model, pre.H, quad)
        out = res.to_dict()
        out["closed_form"] = approx.scan_closed_form(c, args.a, args.a1, args.a2)
        return out
    if args.preset == "scan-boundary":
        pre = presets.scan_boundary_preset(c, args.beta, args.a, args.a1, args.a2)
        res = approx.boundary_tail(pre.boundary, pre.region, pre.model, pre.H, quad, args.prefactor)
        out = res.to_dict()
        out["closed_form"] = approx.scan_boundary_closed_form(c, args.beta, args.a, args.a1, args.a2)
        return out
    if args.preset == "cube":
        from .model import TailApprox
        if args.HK < 0:
            raise ValueError("HK must be nonnegative")
        return TailApprox.from_factors(approx.psi(c), 1.0, 1.0 + args.HK, notes="single cube").to_dict()
    if args.preset == "empirical":
        pre = presets.empirical_preset(c, args.d)
        res = approx.manifold_tail(c, pre.boundary, pre.model, pre.H, quad)
        out = res.to_dict()
        surf = presets.empirical_surface_integral(args.d, quad)
        if args.two_sided:
            out = approx.TailApprox.from_factors(res.psi_factor, res.delta_inv_factor, 2 * res.h_integral,
                                                 notes=res.notes + ", two-sided").to_dict()
        out["closed_form"] = approx.empproc_tail(c, args.d, surf, args.two_sided)
        out["surface_integral"] = surf
        return out
    region = parse_region(args.region) if args.region else Region.box([0.0] * args.d, [1.0] * args.d)
    d = region.param_dim
    if args.preset == "multiindex":
        pre = presets.multiindex_preset(d, region)
        out = approx.region_tail(c, region, pre.model, pre.H, quad).to_dict()
        out["closed_form"] = approx.multiindex_closed_form(c, d, region.volume())
        return out
    model = model_from_config(ctx["model"]) if ctx["model"] else presets.multiindex_model(d)
    if model.additive_betas is not None and args.H is None:
        H = approx.additive_H(model)
    elif args.H is not None:
        h0 = args.H
        H = lambda t: np.full(t.shape[0], h0)  # noqa: E731
    else:
        raise ValueError("a non-additive model needs a constant --H")
    return approx.region_tail(c, region, model, H, quad).to_dict()


def _pickands_model(args):
    if args.preset == "additive":
        betas = args.beta if args.beta is not None else [1.0] * args.d
        if len(betas) != args.d:
            raise ValueError("number of betas must equal d")
        model = presets.model_preset("additive", args.d, betas=betas)
    else:
        model = presets.model_preset("constant", args.d, alpha=args.alpha)
    return model.scaled(args.scale) if args.scale != 1.0 else model


def _cmd_pickands(args, ctx):
    model = _pickands_model(args)
    schedule = args.schedule or [[args.K, args.a]]
    t = np.zeros(args.d)
    est = pickands.estimate_H(model, t, [tuple(s) for s in schedule], args.reps, ctx["seed"],
                              ctx["workers"], args.method)
    out = est.to_dict(ctx["timing"])
    if model.additive_betas is not None:
        betas = model.betas(t)
        K, a = schedule[-1]
        out["closed_form"] = approx.h_closed_form(betas)
        out["lattice_exact"] = pickands.additive_lattice_HK(betas, K, a) / K ** args.d
    return out


def _run_mc(args, ctx, estimator: str):
    seed, workers = ctx["seed"], ctx["workers"]
    if estimator == "scan":
        cfg = simulate.ScanConfig(args.a, args.a1, args.a2, args.h)
        return simulate.brownian_scan_mc(args.c, cfg, args.reps, seed, workers)
    if estimator == "ou":
        side = args.side if args.side is not None else (10.0 if args.d == 1 else 1.0)
        region = Region.box([0.0] * args.d, [side] * args.d)
        return simulate.ou_field_mc(args.c, region, args.step, args.reps, seed, workers)
    if estimator in ("ks1", "ks2"):
        return simulate.empirical_process_mc(args.n, 1 if estimator == "ks1" else 2, args.c, args.two_sided,
                                             args.reps, seed, workers=workers)
    raise ValueError(f"unknown estimator {estimator!r}")


def _cmd_mc(args, ctx):
    if args.estimator == "multiindex":
        demo = simulate.multiindex_sum_demo(args.nmax, args.dist, ctx["seed"])
        return demo.to_dict()
    est = _run_mc(args, ctx, args.estimator)
    ctx["samples"] = (est.samples, args.c)
    return est.to_dict(ctx["timing"])


def _cmd_integral(args, ctx):
    kw = dict(w_max=args.w_max, base=args.base, thresholds=tuple(args.thresholds))
    d = args.d
    if args.preset == "w-sequence":
        w, ratio = it.w_sequence(args.j_max)
        idx = sorted({1, 2, 10, 100, 1000, 10000, 100000, 1000000, args.j_max} & set(range(1, args.j_max + 1)))
        return {"type": "WSequence", "j": idx, "w": [float(w[j - 1]) for j in idx],
                "ratio": [None if j == 1 else float(ratio[j - 1]) for j in idx]}
    diags = []
    want = args.series
    if args.preset == "edge":
        beta, cond = it.edge_preset(**kw)
        diags += [cond["edge_cubic"], cond["mixed"]]
        for eps in args.epsilon:
            diags.append(it.j_series(beta, eps, 2, **kw))
    elif args.preset == "linear":
        diags.append(it.kef_integral(it.linear_boundary(), **kw))
    else:
        if args.preset == "lil":
            beta, f = it.lil_beta(d, args.delta), it.lil_f(d, args.delta)
        else:
            if not args.beta_fn:
                raise ValueError("custom preset needs --beta-fn module:function")
            beta, f = load_callable(args.beta_fn), None
        if want in ("all", "j"):
            for eps in args.epsilon:
                diags.append(it.j_series(beta, eps, d, **kw))
        if want in ("all", "multi"):
            diags.append(it.multi_integral(beta, d, **kw))
        if f is not None and want in ("all", "op"):
            diags.append(it.op_integral(f, d, **kw))
        if args.preset == "lil" and d == 1 and want in ("all", "kef"):
            diags.append(it.kef_integral(it.lil_boundary(args.delta), **kw))
    ctx["table"] = [{"series": x.name, "label": x.label, "slope": x.slope,
                     "final_partial_sum": x.partial_sums[-1]} for x in diags]
    return {"type": "SeriesReport", "diagnostics": [x.to_dict() for x in diags]}


def _ratios(rows: dict) -> dict:
    names = [k for k, v in rows.items() if v is not None and v > 0]
    return {f"{p}/{q}": rows[p] / rows[q] for i, p in enumerate(names) for q in names[i + 1:]}


def compare(preset: str, args, seed: int, workers: int = 1) -> tuple:
    """Asymptotic value, oracle values and Monte Carlo estimate with all pairwise ratios.

    Returns the comparison payload and the underlying :class:`MCEstimate`.
    """
    ctx = {"seed": seed, "workers": workers, "timing": False}
    values: dict = {}
    stderr = None
    if preset == "scan":
        values["asymptotic"] = approx.scan_closed_form(args.c, args.a, args.a1, args.a2)
        pre = presets.scan_preset(args.a, args.a1, args.a2)
        values["quadrature"] = approx.region_tail(args.c, pre.region, pre.model, pre.H).value
        est = _run_mc(args, ctx, "scan")
    elif preset == "ou":
        side = args.side if args.side is not None else (10.0 if args.d == 1 else 1.0)
        region = Region.box([0.0] * args.d, [side] * args.d)
        values["asymptotic"] = approx.multiindex_closed_form(args.c, args.d, region.volume())
        pre = presets.multiindex_preset(args.d, region)
        values["quadrature"] = approx.region_tail(args.c, region, pre.model, pre.H).value
        est = _run_mc(args, ctx, "ou")
    elif preset == "ks1":
        values["asymptotic"] = approx.empproc_tail(args.c, 1, 1.0, args.two_sided)
        if not args.two_sided:
            values["exact"] = simulate.exact_ks_one_sided(args.n, args.c)
        est = _run_mc(args, ctx, "ks1")
    elif preset == "ks2":
        values["asymptotic"] = approx.empproc_tail(args.c, 2, 0.5 * math.log(2.0), args.two_sided)
        pre = presets.empirical_preset(args.c, 2)
        manifold = approx.manifold_tail(args.c, pre.boundary, pre.model, pre.H).value
        values["manifold"] = 2 * manifold if args.two_sided else manifold
        est = _run_mc(args, ctx, "ks2")
    elif preset == "pickands-additive":
        betas = args.beta if args.beta is not None else [1.0] * args.d
        if len(betas) != args.d:
            raise ValueError("number of betas must equal d")
        a = args.spacing
        values["asymptotic"] = approx.h_closed_form(betas)
        values["lattice_exact"] = pickands.additive_lattice_HK(betas, args.K, a) / args.K ** args.d
        model = presets.model_preset("additive", args.d, betas=betas)
        est = pickands.estimate_H(model, np.zeros(args.d), [(args.K, a)], args.reps, seed, workers)
    else:
        raise ValueError(f"unknown compare preset {preset!r}")
    values["mc"] = est.estimate
    stderr = est.stderr
    rows = [{"quantity": k, "value": v, "stderr": stderr if k == "mc" else None} for k, v in values.items()]
    return {"type": "Comparison", "preset": preset, "rows": rows, "ratios": _ratios(values),
            "mc": est.to_dict()}, est


def _cmd_compare(args, ctx):
    out, est = compare(args.preset, args, ctx["seed"], ctx["workers"])
    out["mc"] = est.to_dict(ctx["timing"])
    if est.samples is not None:
        ctx["samples"] = (est.samples, args.c)
    ctx["table"] = out["rows"] + [{"quantity": k, "value": v, "stderr": None} for k, v in out["ratios"].items()]
    return out


# --- record plumbing ---------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _params(args) -> dict:
    return {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}


def record_to_argv(record: dict) -> list[str]:
    """Rebuild an argument vector that replays a RunRecord."""
    argv = [record["command"]]
    for key, val in record["params"].items():
        if val is None or val is False:
            continue
        flag = "--" + key.replace("_", "-")
        # the "--flag=value" form keeps negative numbers from parsing as options
        if val is True:
            argv.append(flag)
        elif key == "schedule":
            argv.append(flag + "=" + ",".join(f"{k!r}:{a!r}" for k, a in val))
        elif isinstance(val, list):
            argv.append(flag + "=" + ",".join(repr(v) for v in val))
        else:
            argv.append(flag + "=" + (repr(val) if isinstance(val, float) else str(val)))
    if record.get("seed") is not None:
        argv += ["--seed", str(record["seed"])]
    return argv


def _config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(sub: argparse.ArgumentParser, command: str, path: str) -> dict:
    """Install config values as defaults of the subcommand parser; returns model keys."""
    cfg = load_config(path)
    model_cfg = {k: v for k, v in cfg.items() if k in MODEL_KEYS}
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, val in cfg.items():
        if key in MODEL_KEYS and key not in known:
            continue
        if key not in known or key in ("help", "config"):
            raise ValueError(f"config key {key!r} is not a flag of {command!r}")
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = val.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = val
    # flags supplied by the file are no longer required on the command line
    for key in defaults:
        known[key].required = False
    sub.set_defaults(**defaults)
    return model_cfg


def _emit(record: dict, pretty: bool, stream) -> None:
    if pretty:
        stream.write(json.dumps(record, indent=2, sort_keys=False) + "\n")
    else:
        stream.write(json.dumps(record, separators=(",", ":")) + "\n")


def _write_csv(rows: list[dict], stream) -> None:
    if not rows:
        return
    writer = csv.DictWriter(stream, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: ("" if v is None else v) for k, v in r.items()})


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    """Execute one command; returns the exit status."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    sub_parsers = parser._subparsers._group_actions[0].choices
    model_cfg: dict = {}
    try:
        path = _config_path(argv)
        command = next((tok for tok in argv if not tok.startswith("-")), None)
        if path and command in sub_parsers:
            model_cfg = _apply_config(sub_parsers[command], command, path)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_INVALID
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        seed = getattr(args, "seed", None)
        if hasattr(args, "seed"):
            seed = _default_seed() if seed is None else seed
            if seed < 0:
                raise ValueError("seed must be nonnegative")
            if args.workers < 1:
                raise ValueError("workers must be at least 1")
        if getattr(args, "reps", 1) < 1:
            raise ValueError("reps must be positive")
        ctx = {"seed": seed if seed is not None else 0, "workers": getattr(args, "workers", 1),
               "timing": args.timing, "model": model_cfg}
        t0 = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            payload = args.func(args, ctx)
        elapsed = time.perf_counter() - t0
        for w in caught:
            print(f"warning: {w.message}", file=stderr)
    except ValueError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_INVALID
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=stderr)
        return EXIT_NUMERICAL

    dump = getattr(args, "dump_reps", None)
    if dump and "samples" in ctx and ctx["samples"][0] is not None:
        stats, level = ctx["samples"]
        with open(dump, "w", newline="") as fh:
            _write_csv([{"rep": i, "statistic": float(s), "exceeds": int(s > level)}
                        for i, s in enumerate(stats)], fh)

    if args.csv and "table" in ctx:
        _write_csv(ctx["table"], stdout)
        return EXIT_OK
    record = {
        "schema": SCHEMA_ID,
        "command": args.command,
        "params": _params(args),
        "payload": _jsonable(payload),
        "seed": seed,
        "version": __version__,
        "wall_time": elapsed if args.timing else None,
        "warnings": sorted({str(w.message) for w in caught}),
    }
    pretty = args.pretty or (hasattr(stdout, "isatty") and stdout.isatty())
    _emit(record, pretty, stdout)
    return EXIT_OK


def main() -> None:
    sys.exit(run())
