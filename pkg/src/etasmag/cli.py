"""Command line front-end.

Every subcommand resolves its settings from three layers, later ones
winning: built-in defaults, an optional flat ``key = value`` config file
(``--config``), and command line flags.  The resolved settings are written
to ``manifest.json`` next to the outputs; ``etasmag replay manifest.json``
re-runs the command from the manifest alone.

Outputs are assembled in memory and written only after the computation
succeeded, each through a temp-file rename, so a failed run leaves no
partial files behind.

Exit status: 0 ok, 1 usage, 2 IO, 3 numeric/convergence, 4 validation.
Failures print one line ``error[CATEGORY]: detail`` on stderr.
"""

import argparse
import hashlib
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .catalog import atomic_write_text, catalog_to_text, filter_catalog, load_catalog
from .etas import EtasParams, average_params, fit_params, time_rescale
from .exceptions import EtasMagError, NumericalError, ValidationError
from .magnitudes import ConditionalLaw, GrLaw
from .pipeline import mother_analysis, run_analysis, windowed_analysis
from .simulation import SimConfig, simulate
from .trend import trend_from_means

logger = logging.getLogger("etasmag")

EXIT = {"OK": 0, "USAGE": 1, "IO": 2, "NUMERIC": 3, "VALIDATION": 4}
MANIFEST = "manifest.json"


class UsageError(Exception):
    category = "USAGE"


# ------------------------------------------------------------------ value parsers

def _floats(text, n=None, name="value"):
    try:
        vals = [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise UsageError(f"{name}: expected {n} numbers, got {len(vals)}")
    return vals


def _intervals(text, name="intervals"):
    """``lo:hi,lo:hi,lo:hi,lo:hi`` -> tuple of pairs."""
    out = []
    for part in str(text).split(","):
        bounds = part.split(":")
        if len(bounds) != 2:
            raise UsageError(f"{name}: expected lo:hi pairs, got {part!r}")
        out.append(tuple(_floats(",".join(bounds), 2, name)))
    if len(out) != 4:
        raise UsageError(f"{name}: expected 4 intervals, got {len(out)}")
    return tuple(out)


def _sweep(text):
    start, step, stop = _floats(str(text).replace(":", ","), 3, "sweep")
    if not (step > 0 and 0 <= start <= stop < 1):
        raise UsageError(f"sweep: need 0 <= start <= stop < 1 and step > 0, got {text!r}")
    n = int(round((stop - start) / step)) + 1
    return [round(start + k * step, 12) for k in range(n)]


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


# ------------------------------------------------------------------ settings
# (name, type, default, help); type is float/int/str/bool.  Lists stay strings
# in the settings and are parsed where used, so the manifest shows them verbatim.

SIM_OPTIONS = [
    ("mu", float, 0.62, "background rate (events/day)"),
    ("kappa", float, 0.02, "productivity constant"),
    ("c", float, 0.013, "Omori c (days)"),
    ("a", float, 1.72, "productivity exponent"),
    ("p", float, 1.11, "Omori exponent"),
    ("b_value", float, 1.0, "Gutenberg-Richter b (beta = b ln 10)"),
    ("m0", float, 1.5, "completeness magnitude"),
    ("window", str, "0,1000", "simulation window start,end (days)"),
    ("seed", int, 0, "random seed"),
    ("mode", str, "gr", "magnitude mode: gr or conditional"),
    ("c1", float, 0.8, "coupling constant of the conditional law"),
    ("learning_period", float, 0.0, "precursory period recorded for downstream fits (days)"),
]

INPUT_OPTIONS = [
    ("catalog", str, None, "input catalog CSV"),
    ("m0", float, None, "completeness magnitude (default: file metadata or minimum)"),
    ("max_depth", float, 40.0, "maximum depth kept (km)"),
    ("window", str, None, "keep events in start,end (days)"),
]

FIT_OPTIONS = [
    ("init", str, "0.5,0.03,0.02,1.5,1.2", "starting mu,kappa,c,a,p"),
    ("learning_fraction", float, 0.10, "precursory fraction of the window"),
    ("method", str, "L-BFGS-B", "L-BFGS-B or Nelder-Mead"),
    ("max_iter", int, 2000, "iteration budget"),
    ("sweep", str, None, "learning fractions start:step:stop, e.g. 0.07:0.01:0.20"),
    ("aggregate", str, "mean", "how to combine sweep fits: mean or median"),
]

PARAMS_OPTION = [("params", str, None, "known mu,kappa,c,a,p (skips the fit)")]

ANALYSIS_OPTIONS = [
    ("rescale", bool, False, "run the windowed analysis on time-rescaled data"),
    ("delta_star", int, None, "override the causal window (days)"),
    ("threshold", float, 0.05, "autocorrelation model threshold for delta*"),
    ("bandwidth", str, "loocv", "kernel bandwidth, or loocv"),
    ("resolution", float, 0.1, "magnitude binning for the frequency table"),
]

COMMANDS = {
    "simulate": SIM_OPTIONS,
    "fit": INPUT_OPTIONS + FIT_OPTIONS,
    "rescale": INPUT_OPTIONS + PARAMS_OPTION + FIT_OPTIONS,
    "analyze-window": (INPUT_OPTIONS + PARAMS_OPTION + FIT_OPTIONS + ANALYSIS_OPTIONS
                       + [("intervals", str, None, "manual subintervals lo:hi,lo:hi,lo:hi,lo:hi")]),
    "analyze-mother": (INPUT_OPTIONS + PARAMS_OPTION + FIT_OPTIONS
                       + [o for o in ANALYSIS_OPTIONS if o[0] in ("bandwidth", "resolution")]
                       + [("intervals", str, None, "manual subintervals lo:hi,lo:hi,lo:hi,lo:hi")]),
    "trend": [
        ("x", str, None, "four mean trigger magnitudes"),
        ("means", str, None, "four (normalised) triggered-magnitude means"),
        ("stderr", str, None, "optional four standard errors"),
    ],
    "pipeline": (INPUT_OPTIONS[1:] + [("catalog", str, None, "input catalog CSV (default: simulate)")]
                 + [o for o in SIM_OPTIONS if o[0] not in ("m0", "window")]
                 + [("sim_window", str, "0,1000", "simulation window when no catalog is given")]
                 + PARAMS_OPTION + FIT_OPTIONS + ANALYSIS_OPTIONS
                 + [("window_intervals", str, None, "manual windowed subintervals"),
                    ("mother_intervals", str, None, "manual mother subintervals")]),
}

HELP = {
    "simulate": "simulate an ETAS catalog (GR or conditional magnitudes)",
    "fit": "maximum-likelihood ETAS fit",
    "rescale": "random time change of a catalog",
    "analyze-window": "windowed pairing analysis",
    "analyze-mother": "mother attribution analysis",
    "trend": "trend regression of given means",
    "pipeline": "fit, window selection, both analyses and trends",
}


def _option_table(command):
    table = {}
    for name, typ, default, helptext in COMMANDS[command]:
        table.setdefault(name, (typ, default, helptext))
    return table


def _convert(command, key, value):
    table = _option_table(command)
    if key not in table:
        raise UsageError(f"unknown setting {key!r} for {command}")
    typ = table[key][0]
    if value is None:
        return None
    if typ is bool:
        return _bool(value)
    try:
        return typ(value)
    except ValueError:
        raise UsageError(f"{key}: cannot convert {value!r} to {typ.__name__}") from None


def read_config(path, command):
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes and underscores are equivalent."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key in ("out_dir", "config"):
                continue
            out[key] = _convert(command, key, value)
    return out


def resolve_settings(command, flags, config_path=None):
    settings = {name: default for name, (_, default, _) in _option_table(command).items()}
    if config_path:
        settings.update(read_config(config_path, command))
    for key, value in flags.items():
        if value is not None:
            settings[key] = _convert(command, key, value)
    return settings


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="etasmag", description="ETAS simulation, fitting and triggered-magnitude analyses")
    parser.add_argument("--version", action="version", version=f"etasmag {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for command in COMMANDS:
        p = sub.add_parser(command, help=HELP[command])
        p.add_argument("--out-dir", required=command != "replay", help="directory for outputs")
        p.add_argument("--config", help="flat key = value settings file")
        for name, (typ, default, helptext) in _option_table(command).items():
            flag = "--" + name.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, dest=name, nargs="?", const="true", default=None,
                               help=f"{helptext} (default {default})")
            else:
                p.add_argument(flag, dest=name, default=None, help=f"{helptext} (default {default})")
    rp = sub.add_parser("replay", help="re-run a command from its manifest")
    rp.add_argument("manifest", help="manifest.json of an earlier run")
    rp.add_argument("--out-dir", help="write outputs here instead of the recorded directory")
    rp.add_argument("--check", action="store_true",
                    help="fail (validation) unless every output is byte-identical to the record")
    return parser


# ------------------------------------------------------------------ helpers

def _json(obj):
    def clean(o):
        if isinstance(o, float):
            return o if math.isfinite(o) else None
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        if isinstance(o, np.ndarray):
            return clean(o.tolist())
        if isinstance(o, np.generic):
            return clean(o.item())
        return o
    return json.dumps(clean(obj), indent=2, allow_nan=False) + "\n"


def _params(text, name="params"):
    return EtasParams.from_array(_floats(text, 5, name))


def _load_input(s):
    if not s.get("catalog"):
        raise UsageError("--catalog is required")
    cat = load_catalog(s["catalog"])
    window = tuple(_floats(s["window"], 2, "window")) if s.get("window") else None
    m0 = cat.m0 if s.get("m0") is None else s["m0"]
    return filter_catalog(cat, m0, s["max_depth"], window)


def _bandwidth(s):
    bw = s["bandwidth"]
    return bw if bw == "loocv" else float(_floats(bw, 1, "bandwidth")[0])


def _fit(cat, s):
    """Fit (or sweep-and-aggregate) and return ``(params, fit_document)``."""
    init = _params(s["init"], "init")
    fractions = _sweep(s["sweep"]) if s.get("sweep") else [s["learning_fraction"]]
    reports = [fit_params(cat, init, f, s["method"], s["max_iter"]) for f in fractions]
    if len(reports) == 1:
        rep = reports[0]
        if not rep.converged:
            raise NumericalError(f"fit did not converge: {rep.message}")
        return rep.params, rep.to_dict()
    failed = [r.learning_window for r in reports if not r.converged]
    if failed:
        raise NumericalError(f"{len(failed)} sweep fits did not converge")
    if s["aggregate"] == "mean":
        params = average_params(reports)
    elif s["aggregate"] == "median":
        params = EtasParams.from_array(np.median([r.params.as_array() for r in reports], axis=0))
    else:
        raise UsageError(f"unknown aggregate {s['aggregate']!r}")
    return params, {"aggregate": s["aggregate"], "learning_fractions": fractions,
                    "params": params.to_dict(), "fits": [r.to_dict() for r in reports]}


def _params_or_fit(cat, s):
    if s.get("params"):
        return _params(s["params"]), None
    return _fit(cat, s)


def _analysis_files(prefix, result):
    files = {}
    for k, dens in enumerate(result.densities):
        lo, hi = result.scheme.intervals[k]
        files[f"{prefix}/kde_{lo:g}-{hi:g}.csv"] = dens.to_csv()
    files[f"{prefix}/trend.json"] = _json(result.summary())
    files[f"{prefix}/trend.csv"] = result.trend.to_csv()
    return files


def _acf_document(selector, dstar):
    pl = selector.power_law_
    return {"delta_star": dstar, "amplitude": pl.amplitude, "exponent": pl.exponent,
            "sse": pl.sse, "slope_p_value": pl.slope_p_value,
            "lags": selector.acf_.lags, "acf": selector.acf_.values,
            "acf_p_values": selector.p_values_}


# ------------------------------------------------------------------ commands

def _sim_config(s, window_key):
    par = EtasParams(s["mu"], s["kappa"], s["c"], s["a"], s["p"])
    gr = GrLaw.from_b_value(s["b_value"], s["m0"])
    mode = s["mode"].lower()
    if mode not in ("gr", "conditional"):
        raise UsageError(f"mode must be gr or conditional, got {s['mode']!r}")
    law = ConditionalLaw(gr.beta, par.a, s["c1"], gr.m0) if mode == "conditional" else None
    window = tuple(_floats(s[window_key], 2, window_key))
    return SimConfig(par, gr, window, s["seed"], law, s["learning_period"])


def cmd_simulate(s):
    cfg = _sim_config(s, "window")
    cat = simulate(cfg)
    return {"catalog.csv": catalog_to_text(cat)}, {
        "n_events": len(cat), "branching_ratio": cfg.branching_ratio(),
        "n_background": int(np.count_nonzero(cat.parent < 0))}


def cmd_fit(s):
    cat = _load_input(s)
    params, doc = _fit(cat, s)
    return {"fit.json": _json(doc)}, {"params": params.to_dict(), "n_events": len(cat)}


def cmd_rescale(s):
    cat = _load_input(s)
    params, doc = _params_or_fit(cat, s)
    out = time_rescale(cat, params)
    files = {"rescaled.csv": catalog_to_text(out)}
    if doc is not None:
        files["fit.json"] = _json(doc)
    return files, {"params": params.to_dict(), "transformed_length": out.window[1],
                   "n_events": len(cat)}


def cmd_analyze_window(s):
    intervals = _intervals(s["intervals"]) if s.get("intervals") else None
    cat = _load_input(s)
    files = {}
    if s["rescale"]:
        params, doc = _params_or_fit(cat, s)
        if doc is not None:
            files["fit.json"] = _json(doc)
        cat = time_rescale(cat, params)
    result, selector, dstar = windowed_analysis(cat, s["delta_star"], intervals, s["threshold"],
                                                _bandwidth(s), None, s["resolution"])
    files.update(_analysis_files("windowed", result))
    files["acf.json"] = _json(_acf_document(selector, dstar))
    return files, {"delta_star": dstar, "trend": result.trend.to_dict()}


def cmd_analyze_mother(s):
    intervals = _intervals(s["intervals"]) if s.get("intervals") else None
    cat = _load_input(s)
    params, doc = _params_or_fit(cat, s)
    result, attribution = mother_analysis(cat, params, intervals, _bandwidth(s), None,
                                          s["resolution"])
    files = _analysis_files("mother", result)
    if doc is not None:
        files["fit.json"] = _json(doc)
    return files, {"params": params.to_dict(), "n_triggered": attribution.n_triggered,
                   "trend": result.trend.to_dict()}


def cmd_trend(s):
    if not s.get("x") or not s.get("means"):
        raise UsageError("trend needs --x and --means")
    se = _floats(s["stderr"], 4, "stderr") if s.get("stderr") else None
    res = trend_from_means(_floats(s["x"], 4, "x"), _floats(s["means"], 4, "means"), se)
    return {"trend.json": _json(res.to_dict()), "trend.csv": res.to_csv()}, {"trend": res.to_dict()}


def cmd_pipeline(s):
    manual = {k: _intervals(s[k], k) if s.get(k) else None
              for k in ("window_intervals", "mother_intervals")}
    files = {}
    if s.get("catalog"):
        cat = _load_input(s)
    else:
        cat = simulate(_sim_config({**s, "m0": 1.5 if s.get("m0") is None else s["m0"]},
                                   "sim_window"))
        files["catalog.csv"] = catalog_to_text(cat)
    params, doc = _params_or_fit(cat, s)
    if doc is not None:
        files["fit.json"] = _json(doc)
    res = run_analysis(
        cat, params=params, rescale=s["rescale"], delta_star=s["delta_star"],
        window_intervals=manual["window_intervals"], mother_intervals=manual["mother_intervals"],
        bandwidth=_bandwidth(s), resolution=s["resolution"], threshold=s["threshold"])
    files.update(_analysis_files("windowed", res.windowed))
    files.update(_analysis_files("mother", res.mother))
    files["acf.json"] = _json(_acf_document(res.window_selector, res.delta_star))
    summary = res.summary()
    summary.pop("fit", None)
    return files, summary


RUNNERS = {
    "simulate": cmd_simulate, "fit": cmd_fit, "rescale": cmd_rescale,
    "analyze-window": cmd_analyze_window, "analyze-mother": cmd_analyze_mother,
    "trend": cmd_trend, "pipeline": cmd_pipeline,
}


# ------------------------------------------------------------------ execution

def _digest(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def execute(command, settings, out_dir):
    """Run ``command`` and write its outputs plus the manifest; returns the manifest."""
    files, results = RUNNERS[command](settings)
    manifest = {
        "tool": "etasmag", "version": __version__, "command": command,
        "settings": settings,
        "outputs": {name: _digest(text) for name, text in sorted(files.items())},
        "results": results,
    }
    files[MANIFEST] = _json(manifest)
    # everything is computed; now write, creating directories first
    for name in files:
        os.makedirs(os.path.dirname(os.path.join(out_dir, name)) or out_dir, exist_ok=True)
    written = []
    try:
        for name, text in files.items():
            atomic_write_text(os.path.join(out_dir, name), text)
            written.append(name)
    except BaseException:
        for name in written:
            os.unlink(os.path.join(out_dir, name))
        raise
    return manifest


def replay(path, out_dir=None, check=False):
    with open(path, encoding="utf-8") as fh:
        try:
            recorded = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"manifest is not valid JSON: {exc}") from None
    command = recorded.get("command")
    if command not in RUNNERS:
        raise ValidationError(f"manifest names unknown command {command!r}")
    settings = {k: _convert(command, k, v) for k, v in recorded["settings"].items()}
    out_dir = out_dir or os.path.dirname(os.path.abspath(path))
    manifest = execute(command, settings, out_dir)
    if check and manifest["outputs"] != recorded.get("outputs"):
        diff = sorted(k for k in set(manifest["outputs"]) | set(recorded.get("outputs", {}))
                      if manifest["outputs"].get(k) != recorded.get("outputs", {}).get(k))
        raise ValidationError(f"replay differs from the record in {diff}")
    return manifest


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        if args.command == "replay":
            manifest = replay(args.manifest, args.out_dir, args.check)
        else:
            flags = {name: getattr(args, name) for name in _option_table(args.command)}
            settings = resolve_settings(args.command, flags, args.config)
            manifest = execute(args.command, settings, args.out_dir)
    except UsageError as exc:
        return _fail("USAGE", exc)
    except EtasMagError as exc:
        return _fail(exc.category, exc)
    except OSError as exc:
        return _fail("IO", exc)
    results = manifest["results"]
    line = {"command": manifest["command"], "outputs": sorted(manifest["outputs"])}
    if "trend" in results:
        line["R"], line["p_value"] = results["trend"]["R"], results["trend"]["p_value"]
    for name in ("windowed", "mother"):
        if name in results:
            t = results[name]["trend"]
            line[name] = {"R": t["R"], "p_value": t["p_value"]}
    print(json.dumps(line))
    return 0


def _fail(category, exc):
    if category not in EXIT:
        category = "VALIDATION" if category == "ERROR" else category
    detail = " ".join(str(exc).split())
    print(f"error[{category}]: {detail}", file=sys.stderr)
    return EXIT.get(category, 4)


if __name__ == "__main__":
    sys.exit(main())
