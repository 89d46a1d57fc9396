"""Command-line entry point: ``cuemax <subcommand> [flags]``.

Exit codes: 0 success, 1 a verification check failed, 2 configuration
error (bad flag, bad value, bad config file), 3 numeric or I/O failure.

Every flag may also come from ``--config FILE`` holding ``key = value``
lines (keys as the long flag names, with or without dashes); flags given
on the command line win.  The Toeplitz exponent is stored so that the
singular factor is |z - 1|^{2 alpha}.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import extremes, multiscale, verify
from .field import eval_charpoly_field, eval_full_field, traces_from_verblunsky, compute_traces, write_field_csv
from .montecarlo import ConfigError, ExperimentConfig, derive_stream, dumps, run_with_envelope, statistic_json
from .sampler import SeedTag, cmv_eigenangles, sample_haar_cmv, sample_haar_qr, write_angles_csv
from .toeplitz import (
    PreconditionError,
    SymbolSpec,
    fh_prediction,
    selberg_logdet,
    sigma2_v,
    toeplitz_logdet,
)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

SVG_W, SVG_H = 800, 500
_MARGIN = (70, 30, 30, 60)  # left, right, top, bottom
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- SVG

@dataclass
class PlotSpec:
    kind: str  # line | scatter
    series: list  # [(label, xs, ys)]
    xlabel: str = ""
    ylabel: str = ""
    path: str = "plot.svg"
    title: str = ""
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.kind not in ("line", "scatter"):
            raise ValueError(f"plot kind must be line or scatter, got {self.kind!r}")
        if not self.series:
            raise ValueError("plot needs at least one series")
        for label, xs, ys in self.series:
            if len(xs) != len(ys):
                raise ValueError(f"series {label!r}: x and y lengths differ")
            if len(xs) == 0:
                raise ValueError(f"series {label!r} is empty")


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def render_svg(plot: PlotSpec) -> str:
    plot.validate()
    xs_all = np.concatenate([np.asarray(s[1], dtype=float) for s in plot.series])
    ys_all = np.concatenate([np.asarray(s[2], dtype=float) for s in plot.series])
    fin = np.isfinite(xs_all) & np.isfinite(ys_all)
    if not fin.any():
        raise ValueError("plot has no finite points")
    x0, x1 = float(xs_all[fin].min()), float(xs_all[fin].max())
    y0, y1 = float(ys_all[fin].min()), float(ys_all[fin].max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    left, right, top, bottom = _MARGIN
    pw, ph = SVG_W - left - right, SVG_H - top - bottom

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (y1 - y) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" '
           f'viewBox="0 0 {SVG_W} {SVG_H}">',
           f'<rect x="0" y="0" width="{SVG_W}" height="{SVG_H}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for k in range(5):
        xv = x0 + (x1 - x0) * k / 4
        yv = y0 + (y1 - y0) * k / 4
        out.append(f'<text x="{px(xv):.2f}" y="{SVG_H - bottom + 18}" font-size="12" '
                   f'text-anchor="middle">{xv:.4g}</text>')
        out.append(f'<text x="{left - 6}" y="{py(yv) + 4:.2f}" font-size="12" text-anchor="end">{yv:.4g}</text>')
    if plot.xlabel:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{SVG_H - 15}" font-size="14" '
                   f'text-anchor="middle">{_esc(plot.xlabel)}</text>')
    if plot.ylabel:
        out.append(f'<text x="18" y="{top + ph / 2:.1f}" font-size="14" text-anchor="middle" '
                   f'transform="rotate(-90 18 {top + ph / 2:.1f})">{_esc(plot.ylabel)}</text>')
    if plot.title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="20" font-size="14" text-anchor="middle">{_esc(plot.title)}</text>')
    for i, (label, xs, ys) in enumerate(plot.series):
        color = _COLORS[i % len(_COLORS)]
        pts = [(px(x), py(y)) for x, y in zip(np.asarray(xs, float), np.asarray(ys, float))
               if math.isfinite(x) and math.isfinite(y)]
        if plot.kind == "line":
            coords = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{coords}"/>')
        else:
            out.extend(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2" fill="{color}"/>' for a, b in pts)
        out.append(f'<text x="{left + pw - 6}" y="{top + 16 + 16 * i}" font-size="12" text-anchor="end" '
                   f'fill="{color}">{_esc(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(plot: PlotSpec) -> str:
    """Write the plot to plot.path; identical specs give identical bytes."""
    text = render_svg(plot)
    with open(plot.path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return plot.path


# ---------------------------------------------------------------- arguments

# flag -> (type, default)
_FLAGS = {
    "seed": (int, 0),
    "n": (int, None),
    "replicates": (int, None),
    "grid-factor": (int, None),
    "k": (int, 8),
    "epsilon": (float, 0.4),
    "gamma": (float, 0.5),
    "beta": (str, "1"),
    "delta": (float, 0.5),
    "method": (str, None),
    "out": (str, None),
    "plot": (str, None),
    "alpha": (float, 0.0),
    "xi": (float, 0.0),
    "part": (str, "real"),
    "workers": (int, 1),
    "suite": (str, "identities"),
}

_SUBCOMMANDS = ("sample", "field", "max", "highpoints", "freeenergy", "rigidity", "toeplitz", "verify")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    for name, (typ, _default) in _FLAGS.items():
        common.add_argument(f"--{name}", type=typ, default=None)
    common.add_argument("--config", default=None, help="file of key = value lines")
    common.add_argument("--json", action="store_true", default=None, help="single JSON document on stdout")

    p = _Parser(prog="cuemax", description="CUE characteristic polynomial laboratory")
    p.add_argument("--json", dest="json_top", action="store_true", help="single JSON document on stdout")
    p.add_argument("--config", dest="config_top", default=None)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "sample": "draw one eigenangle sample (CSV k,theta)",
        "field": "evaluate log|P| on a grid (CSV t,h,value)",
        "max": "maximum of the field over replicates",
        "highpoints": "high-point measure over replicates",
        "freeenergy": "free energy over replicates",
        "rigidity": "eigenangle rigidity over replicates",
        "toeplitz": "exact and predicted Toeplitz log-determinants",
        "verify": "run a bundled verification suite",
    }
    for name in _SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def read_config(path: str) -> dict:
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{num}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("_", "-").lower()
        if key not in _FLAGS:
            raise ConfigError(f"{path}:{num}: unknown key {key!r}")
        typ = _FLAGS[key][0]
        try:
            out[key] = typ(value)
        except ValueError as e:
            raise ConfigError(f"{path}:{num}: bad value for {key}: {value!r}") from e
    return out


def resolve(ns: argparse.Namespace) -> dict:
    """Merge built-in defaults < config file < command-line flags."""
    opts = {k: d for k, (_t, d) in _FLAGS.items()}
    given = set()
    cfg_path = ns.config or ns.config_top
    if cfg_path:
        from_file = read_config(cfg_path)
        opts.update(from_file)
        given.update(from_file)
    for k in _FLAGS:
        v = getattr(ns, k.replace("-", "_"))
        if v is not None:
            opts[k] = v
            given.add(k)
    opts["_given"] = given
    opts["json"] = bool(ns.json or ns.json_top)
    opts["command"] = ns.command
    return opts


def _betas(text: str) -> tuple:
    try:
        return tuple(float(b) for b in str(text).split(",") if b.strip())
    except ValueError as e:
        raise ConfigError(f"--beta expects comma-separated numbers, got {text!r}") from e


def _need_n(o: dict) -> int:
    if o["n"] is None:
        raise ConfigError("--n is required")
    return o["n"]


# ---------------------------------------------------------------- commands

def _cmd_sample(o: dict, out: dict) -> None:
    n, method = _need_n(o), o["method"] or "qr"
    if method not in ("qr", "cmv"):
        raise ConfigError(f"unknown method {method!r}")
    rng, tag = derive_stream(o["seed"], 0), SeedTag(o["seed"], 0, method)
    s = sample_haar_qr(n, rng, seed_tag=tag) if method == "qr" else cmv_eigenangles(sample_haar_cmv(n, rng, seed_tag=tag))
    if o["out"]:
        write_angles_csv(s, o["out"])
        out["out"] = o["out"]
    out.update({"n": n, "method": method, "seed": o["seed"]})
    if o["json"]:
        out["angles"] = [float(a) for a in s.angles]
    elif not o["out"]:
        out["_text"] = "k,theta\n" + "".join(f"{k},{t:.17g}\n" for k, t in enumerate(s.angles, 1))


def _cmd_field(o: dict, out: dict) -> None:
    n, method = _need_n(o), o["method"] or "qr"
    if method not in ("qr", "cmv"):
        raise ConfigError(f"unknown method {method!r}")
    if o["part"] not in ("real", "imaginary"):
        raise ConfigError("--part must be real or imaginary")
    g = o["grid-factor"] or 8
    if g < 1:
        raise ConfigError("--grid-factor must be >= 1")
    m = g * n
    rng, tag = derive_stream(o["seed"], 0), SeedTag(o["seed"], 0, method)
    if method == "cmv":
        coeffs = sample_haar_cmv(n, rng, seed_tag=tag)
        if o["part"] == "real":
            grid = eval_charpoly_field(coeffs, m)
        else:
            grid = eval_full_field(cmv_eigenangles(coeffs), m, "imaginary")
        traces = lambda J: traces_from_verblunsky(coeffs, J)  # noqa: E731
    else:
        sample = sample_haar_qr(n, rng, seed_tag=tag)
        grid = eval_full_field(sample, m, o["part"])
        traces = lambda J: compute_traces(sample, J)  # noqa: E731
    vals = grid.values
    finite = vals[np.isfinite(vals)]
    out.update({"n": n, "m": m, "method": method, "part": o["part"], "seed": o["seed"],
                "max": float(finite.max()) if finite.size else None,
                "min": float(finite.min()) if finite.size else None,
                "n_neg_inf": grid.n_neg_inf})
    if o["part"] == "real" and finite.size:
        out["max_over_log_n"] = float(finite.max()) / math.log(n) if n > 1 else None
    if o["out"]:
        write_field_csv(grid, o["out"])
        out["out"] = o["out"]
    if "k" in o["_given"] and n >= 2:
        dec = multiscale.decompose(traces(n), o["k"], n)
        ex = multiscale.count_exceedances(dec, o["epsilon"])
        out["exceedance"] = json.loads(ex.to_json())
    if o["plot"]:
        h = 2 * math.pi * np.arange(m) / m
        emit_svg(PlotSpec("line", [(f"N = {n}", h, vals)], "h", f"log|P_N(e^(ih))| ({o['part']})",
                          o["plot"], title=f"one realisation, N = {n}, seed {o['seed']}"))
        out["plot"] = o["plot"]


_STAT = {"max": "max", "highpoints": "highpoints", "freeenergy": "freeenergy", "rigidity": "rigidity"}


def _cmd_stat(o: dict, out: dict) -> None:
    n = _need_n(o)
    kw = dict(statistic=_STAT[o["command"]], n=n, replicates=o["replicates"] or 1, seed=o["seed"],
              grid_factor=o["grid-factor"], K=o["k"], epsilon=o["epsilon"], gamma=o["gamma"],
              beta_list=_betas(o["beta"]), delta=o["delta"], method=o["method"] or "qr")
    cfg = ExperimentConfig(**kw)
    summary, env = run_with_envelope(cfg, workers=o["workers"])
    out.update(statistic_json(summary))
    out["primary"] = summary.extra["primary"]
    for key in ("convex_all", "top_cell_warnings"):
        if key in summary.extra:
            out[key] = summary.extra[key]
    if cfg.statistic == "freeenergy":
        out["f_by_beta"] = {f"{b:g}": (summary.mean if i == 0 else summary.extra["columns"][f"f[{b:g}]"]["mean"])
                            for i, b in enumerate(cfg.beta_list)}
        warned = {b: c for b, c in summary.extra["top_cell_warnings"].items() if c}
        if warned:
            out["warning"] = ("top grid cell carries > 50% of the Riemann sum on "
                              + ", ".join(f"{c} draws at beta={b}" for b, c in warned.items()))
    if cfg.statistic == "rigidity":
        out["count_max_ratio_mean"] = summary.extra["columns"]["count_max_ratio"]["mean"]
    if o["out"]:
        with open(o["out"], "w", encoding="utf-8") as fh:
            fh.write(dumps(env) + "\n")
        out["out"] = o["out"]
    if o["plot"]:
        if cfg.statistic == "freeenergy" and len(cfg.beta_list) > 1:
            order = np.argsort(cfg.beta_list)
            b = np.array(cfg.beta_list)[order]
            f = np.array([out["f_by_beta"][f"{x:g}"] for x in b])
            theory = np.where(b < 2, 1 + b * b / 4, b)
            series = [("mean f(beta)", b, f), ("1 + beta^2/4 | beta", b, theory)]
            spec = PlotSpec("line", series, "beta", "free energy", o["plot"])
        else:
            v = np.sort(summary.values)
            ecdf = np.arange(1, v.size + 1) / v.size
            spec = PlotSpec("line", [(summary.extra["primary"], v, ecdf)], summary.extra["primary"],
                            "empirical CDF", o["plot"])
        emit_svg(spec)
        out["plot"] = o["plot"]


def _cmd_toeplitz(o: dict, out: dict) -> None:
    n, alpha, delta, xi = _need_n(o), o["alpha"], o["delta"], o["xi"]
    if n < 1:
        raise ConfigError("--n must be >= 1")
    if not alpha > -0.5:
        raise ConfigError("--alpha must exceed -1/2 (|z-1|^(2 alpha) must be integrable)")
    if not 0 < delta < 1:
        raise ConfigError("--delta must lie in (0, 1)")
    b = int(math.floor(n ** (1 - delta) + 1e-12))
    spec = SymbolSpec.windows([(xi, 0.0, 1, b)], alpha=alpha) if xi and b >= 1 else SymbolSpec.pure(alpha)
    exact = toeplitz_logdet(spec, n).logdet
    sel = selberg_logdet(n, alpha)
    s2 = float(sigma2_v(spec))
    pred = fh_prediction(spec, n, delta)
    gaps = {"fh": abs(pred - exact)}
    if not xi:
        gaps["selberg"] = abs(exact - sel)
    if alpha == 0:
        gaps["gaussian"] = abs(exact - s2)
    out.update({"n": n, "alpha": alpha, "delta": delta, "xi": xi, "window": [1, b] if xi else None,
                "logdet_exact": exact, "logdet_selberg": sel, "sigma2": s2, "fh_prediction": pred,
                "gaps": gaps})


def _cmd_verify(o: dict, out: dict) -> int:
    suite = o["suite"]
    names = verify.SUITES if suite == "all" else (suite,)
    for s in names:
        if s not in verify.SUITES:
            raise ConfigError(f"unknown suite {s!r}; choose from {verify.SUITES + ('all',)}")
    checks = []
    for s in names:
        checks.extend(verify.run_suite(s, seed=o["seed"], workers=o["workers"], replicates=o["replicates"]))
    ok = verify.passed(checks)
    out.update({"suite": suite, "passed": ok, "checks": [c.to_dict() for c in checks]})
    out["_text"] = "\n".join(c.line() for c in checks) + f"\n{'OK' if ok else 'FAILED'}\n"
    return EXIT_OK if ok else EXIT_CHECK


_DISPATCH = {"sample": _cmd_sample, "field": _cmd_field, "max": _cmd_stat, "highpoints": _cmd_stat,
             "freeenergy": _cmd_stat, "rigidity": _cmd_stat, "toeplitz": _cmd_toeplitz, "verify": _cmd_verify}


def _print(o: dict, out: dict) -> None:
    text = out.pop("_text", None)
    if o["json"] or o["command"] == "toeplitz":
        print(json.dumps(out, indent=2, sort_keys=True))
    elif text is not None:
        sys.stdout.write(text)
    else:
        for k in sorted(out):
            v = out[k]
            print(f"{k}: {json.dumps(v) if isinstance(v, (dict, list)) else v}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as e:  # --help
        return int(e.code or 0)
    o: dict = {"json": bool(getattr(ns, "json", False) or getattr(ns, "json_top", False)), "command": ns.command}
    out: dict = {"command": ns.command}
    try:
        o = resolve(ns)
        code = _DISPATCH[o["command"]](o, out) or EXIT_OK
    except (ConfigError, PreconditionError) as e:
        return _fail(o, out, EXIT_CONFIG, "config", e)
    except (ArithmeticError, extremes.DegenerateGridError) as e:
        return _fail(o, out, EXIT_NUMERIC, "numeric", e)
    except OSError as e:
        return _fail(o, out, EXIT_NUMERIC, "io", e)
    except ValueError as e:
        return _fail(o, out, EXIT_CONFIG, "config", e)
    _print(o, out)
    return code


def _fail(o: dict, out: dict, code: int, kind: str, err: Exception) -> int:
    if o.get("json"):
        out.pop("_text", None)
        out["error"] = {"kind": kind, "message": str(err)}
        print(json.dumps(out, indent=2, sort_keys=True))
    print(f"cuemax: {kind} error: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
