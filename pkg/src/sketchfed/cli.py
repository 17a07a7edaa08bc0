"""``sketchfed`` command line: run experiments, verification suites, plots.

Exit codes: 0 success, 2 config/input error, 3 numerical divergence,
4 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import presets, verify
from .errors import ConfigError, DivergenceError
from .fedsim import CSV_COLUMNS, run_experiment
from .problems import SpectrumSpec, make_mlp, make_quadratic

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_VERIFY = 0, 2, 3, 4

SUITES = ("sketch", "spectrum", "rates")


def _out_dir(args, default):
    out = Path(args.out if args.out else default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# run

def cmd_run(args) -> int:
    cfg = config_mod.load(args.config) if args.config else presets.preset("convergence")
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.out:
        cfg = cfg.replace(**{"output.dir": args.out})
    result = run_experiment(cfg)
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / cfg.output.csv).write_text(result.to_csv())
    (out / cfg.output.json).write_text(result.to_json())
    if result.records:
        last = result.records[-1]
        print(f"{cfg.algorithm}: {len(result.records)} rounds, loss {result.initial_loss:.4g} -> {last.loss:.4g}, "
              f"|grad|^2 {last.grad_norm_sq:.3g}, uplink {last.cum_uplink_bytes} bytes")
    print(f"wrote {out / cfg.output.csv} and {out / cfg.output.json}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify

def suite_sketch(kinds, trials, seed, d=1024, bs=(16, 64, 256), delta=0.01, unbiased_trials=None):
    """Concentration grid over (kind, b) plus unbiasedness at d = 64, b = 8."""
    unbiased_trials = unbiased_trials or 10 * trials
    cells, unbiased = [], []
    for kind in kinds:
        # identity admits only b = d
        kbs = (d,) if kind == "identity" else bs
        cells += [r.to_dict() for r in verify.concentration_suite(kind, d, kbs, delta, trials, seed)]
        ub = verify.test_unbiasedness(kind, 64, 8 if kind != "identity" else 64, unbiased_trials, seed).to_dict()
        ub.pop("z")
        unbiased.append(ub)
    passed = all(c["passed"] for c in cells) and all(u["passed"] for u in unbiased)
    return {"suite": "sketch", "params": {"kinds": list(kinds), "d": d, "bs": list(bs), "delta": delta,
                                          "trials": trials, "unbiased_trials": unbiased_trials, "seed": seed},
            "concentration": cells, "unbiasedness": unbiased, "passed": passed}


def suite_spectrum(seed=0):
    q = make_quadratic(SpectrumSpec(np.array([1.0, 2.0, 3.0])), seed=seed)
    signed = make_quadratic(SpectrumSpec(np.array([-1.0, 2.0])), seed=seed)
    mlp = make_mlp((8, 16, 1), 64, seed=seed)
    rows = []
    for name, prob, ref in (("quadratic_123", q, (3.0, 6.0)), ("quadratic_signed", signed, (2.0, 3.0)), ("mlp", mlp, None)):
        rep = verify.estimate_spectrum(prob, method="exact").to_dict()
        rep.pop("eigenvalues")
        ok = math.isfinite(rep["L"]) and math.isfinite(rep["D"]) and rep["L"] <= rep["D"]
        if ref is not None:
            ok = ok and abs(rep["L"] - ref[0]) <= 1e-6 and abs(rep["D"] - ref[1]) <= 1e-6
        rows.append({"fixture": name, **rep, "D_over_dL": rep["D"] / (rep["d"] * rep["L"]) if rep["L"] > 0 else None,
                     "passed": bool(ok)})
    return {"suite": "spectrum", "params": {"seed": seed}, "reports": rows, "passed": all(r["passed"] for r in rows)}


def suite_rates(cfg=None, window=(500, 2000), threshold=-0.4):
    """Synthetic power-law checks plus the tail slope of a SAFL run."""
    t = np.arange(1, 2001, dtype=np.float64)
    m = t ** -0.5
    # per-round values whose running mean is exactly t^-1/2
    g_half = t * m - np.concatenate([[0.0], t[:-1] * m[:-1]])
    checks = []
    for name, g, target, stat in (("running_mean_t^-1/2", g_half, -0.5, "running_mean"),
                                  ("pointwise_t^-1", 1.0 / t, -1.0, "pointwise")):
        rep = verify.fit_rate_slope(g, (10, 2000), target=target, statistic=stat).to_dict()
        rep["passed"] = bool(abs(rep["slope"] - target) <= 1e-6)
        checks.append({"name": name, **rep})
    cfg = cfg or presets.preset("convergence", **{"federation.rounds": window[1]})
    result = run_experiment(cfg)
    rep = verify.fit_rate_slope(result, window).to_dict()
    rep["threshold"] = threshold
    rep["passed"] = bool(not rep["degenerate"] and rep["slope"] <= threshold)
    return {"suite": "rates", "config": cfg.to_dict(), "synthetic": checks, "run": rep,
            "passed": rep["passed"] and all(c["passed"] for c in checks)}


def _table(rows, cols):
    widths = [max([len(c)] + [len(_fmt(r.get(c))) for r in rows]) for c in cols]
    line = "  ".join(c.ljust(w) for c, w in zip(cols, widths))
    out = [line, "-" * len(line)]
    for r in rows:
        out.append("  ".join(_fmt(r.get(c)).ljust(w) for c, w in zip(cols, widths)))
    return "\n".join(out)


def _fmt(v):
    if isinstance(v, bool):
        return "PASS" if v else "FAIL"
    if isinstance(v, float):
        return f"{v:.4g}"
    return "" if v is None else str(v)


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        raise ConfigError("--suite", f"unknown suite {args.suite!r}; choose from {SUITES}")
    seed = args.seed if args.seed is not None else 0
    if args.suite == "sketch":
        kinds = args.kind or ["gaussian", "srht", "countsketch"]
        report = suite_sketch(kinds, args.trials or 10_000, seed)
        print(_table(report["concentration"], ["kind", "b", "quantile", "envelope", "bound", "passed"]))
        print()
        print(_table(report["unbiasedness"], ["kind", "d", "b", "trials", "max_abs_z", "passed"]))
    elif args.suite == "spectrum":
        report = suite_spectrum(seed)
        print(_table(report["reports"], ["fixture", "d", "L", "D", "L_ref", "D_ref", "passed"]))
    else:
        cfg = config_mod.load(args.config) if args.config else None
        if cfg is not None and args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        report = suite_rates(cfg)
        print(_table(report["synthetic"] + [{"name": "safl_run", **report["run"]}],
                     ["name", "window", "slope", "target", "band", "passed"]))
    out = _out_dir(args, "out")
    path = out / f"verify_{args.suite}.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True, default=_json_default))
    print(f"{'PASS' if report['passed'] else 'FAIL'}: wrote {path}")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(repr(o))


# ---------------------------------------------------------------------------
# plot

def read_metrics(path):
    """Parse a metrics CSV; returns (label, columns dict). Raises ConfigError on schema problems."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc}") from None
    cfg = None
    body = []
    for line in lines:
        if line.startswith("# config="):
            cfg = json.loads(line[len("# config="):])
        elif not line.startswith("#") and line.strip():
            body.append(line)
    if not body:
        raise ConfigError(str(path), "empty metrics file")
    rows = list(csv.reader(body))
    if tuple(rows[0]) != CSV_COLUMNS:
        raise ConfigError(str(path), f"schema mismatch: expected columns {CSV_COLUMNS}, got {tuple(rows[0])}")
    if len(rows) < 2:
        raise ConfigError(str(path), "no metric rows")
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    cols = {name: data[:, i] for i, name in enumerate(CSV_COLUMNS)}
    return _label(cfg, path), cols


def _label(cfg, path):
    if not cfg:
        return path.stem
    s = cfg.get("sketch", {})
    d = config_mod.problem_dim(config_mod.ProblemConfig(**cfg["problem"])) if "problem" in cfg else "?"
    if cfg.get("algorithm") in ("safl", "sacfl"):
        return f"{cfg['algorithm']} {s.get('kind')} b={s.get('b')}/{d} seed={cfg.get('seed')}"
    return f"{cfg.get('algorithm')} d={d} seed={cfg.get('seed')}"


SPARK = "▁▂▃▄▅▆▇█"


def sparkline(values, width=60):
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v) & (v > 0)]
    if v.size == 0:
        return ""
    idx = np.linspace(0, v.size - 1, min(width, v.size)).round().astype(int)
    y = np.log10(v[idx])
    lo, hi = y.min(), y.max()
    k = np.zeros(y.size, int) if hi == lo else np.round((y - lo) / (hi - lo) * (len(SPARK) - 1)).astype(int)
    return "".join(SPARK[i] for i in k)


COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def _panel(x0, y0, w, h, series, xlabel, ylabel):
    """One log-y panel as SVG elements; ``series`` = [(x, y, color)]."""
    xs = np.concatenate([s[0] for s in series])
    ys = np.concatenate([s[1] for s in series])
    ok = np.isfinite(ys) & (ys > 0)
    out = [f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#444"/>']
    if not ok.any():
        return out
    xmin, xmax = float(xs.min()), float(xs.max()) or 1.0
    xmax = xmax if xmax > xmin else xmin + 1.0
    lmin, lmax = math.log10(ys[ok].min()), math.log10(ys[ok].max())
    lmax = lmax if lmax > lmin else lmin + 1.0

    def px(x):
        return x0 + (x - xmin) / (xmax - xmin) * w

    def py(y):
        return y0 + h - (math.log10(y) - lmin) / (lmax - lmin) * h

    for x, y, color in series:
        pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x, y) if b > 0 and math.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
    out.append(f'<text x="{x0 + w / 2}" y="{y0 + h + 28}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="{x0 - 40}" y="{y0 + h / 2}" text-anchor="middle" '
               f'transform="rotate(-90 {x0 - 40} {y0 + h / 2})">{ylabel} (log)</text>')
    out.append(f'<text x="{x0 - 4}" y="{y0 + 10}" text-anchor="end">1e{lmax:.1f}</text>')
    out.append(f'<text x="{x0 - 4}" y="{y0 + h}" text-anchor="end">1e{lmin:.1f}</text>')
    out.append(f'<text x="{x0}" y="{y0 + h + 14}" text-anchor="start">{xmin:g}</text>')
    out.append(f'<text x="{x0 + w}" y="{y0 + h + 14}" text-anchor="end">{xmax:g}</text>')
    return out


def render_svg(runs) -> str:
    """2x2 grid: loss and ||grad||^2 against rounds and against cumulative uplink bytes."""
    W, H, pw, ph = 960, 640, 340, 200
    layout = [("round", "loss", 90, 40), ("round", "grad_norm_sq", 540, 40),
              ("cum_uplink_bytes", "loss", 90, 320), ("cum_uplink_bytes", "grad_norm_sq", 540, 320)]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">',
             f'<rect width="{W}" height="{H}" fill="white"/>']
    for xk, yk, x0, y0 in layout:
        series = [(cols[xk], cols[yk], COLORS[i % len(COLORS)]) for i, (_, cols) in enumerate(runs)]
        parts += _panel(x0, y0, pw, ph, series, xk, yk)
    for i, (label, _) in enumerate(runs):
        y = 575 + 16 * i
        parts.append(f'<line x1="90" y1="{y - 4}" x2="115" y2="{y - 4}" stroke="{COLORS[i % len(COLORS)]}" stroke-width="2"/>')
        parts.append(f'<text x="122" y="{y}">{_escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(s):
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def cmd_plot(args) -> int:
    if not args.metrics:
        raise ConfigError("metrics", "at least one metrics CSV is required")
    runs = [read_metrics(p) for p in args.metrics]
    out = _out_dir(args, "out")
    path = out / (args.name or "metrics.svg")
    path.write_text(render_svg(runs))
    for label, cols in runs:
        print(f"{label}\n  loss      {sparkline(cols['loss'])}\n  |grad|^2  {sparkline(cols['grad_norm_sq'])}")
    print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sketchfed", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment from a TOML config")
    r.add_argument("--config", help="TOML config (default: built-in convergence preset)")
    r.add_argument("--seed", type=int, help="override the master seed")
    r.add_argument("--out", help="override output.dir")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("--suite", required=True, help=f"one of {', '.join(SUITES)}")
    v.add_argument("--trials", type=int, help="Monte-Carlo trials per cell (sketch suite)")
    v.add_argument("--kind", action="append", help="sketch kind(s) for the sketch suite; repeatable")
    v.add_argument("--config", help="SAFL config for the rates suite")
    v.add_argument("--seed", type=int)
    v.add_argument("--out", help="report directory (default: out)")
    v.set_defaults(func=cmd_verify)

    pl = sub.add_parser("plot", help="plot one or more metrics CSVs to SVG")
    pl.add_argument("metrics", nargs="*")
    pl.add_argument("--out", help="output directory (default: out)")
    pl.add_argument("--name", help="SVG file name (default: metrics.svg)")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
