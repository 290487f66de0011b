"""Command-line front end: bound sweeps, comparisons, localization regions, ML validation.

Every subcommand writes CSV (default) or JSON to ``--out`` or stdout.
Angles are degrees and lengths meters on the command line and in files.
Options can also come from a ``key=value`` config file (``--config``);
explicit flags win.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
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

from . import closed_form as cf
from .errors import IllConditioned, NearFieldError, NearSingular, NotAchievable
from .fim import Model, ScenarioParams, oracle_crb
from .geometry import ArrayConfig, DelayModel, Gain, SourceLocation, fresnel_bounds
from .mlsim import default_search, monte_carlo
from .nflr import (
    Criterion, RegionSpec, min_observation_time, min_sensors, min_snr, min_snr_region,
    min_time_region, nflr_map,
)

SWEEP_SOURCES = ("lemma1", "lemma4", "lemma5", "lemma6", "taylor_lemma2", "approx_lemma3", "oracle")
_FLAVORS = {
    "lemma1": (Model.CONDITIONAL, Gain.EQUAL),
    "lemma4": (Model.UNCONDITIONAL, Gain.EQUAL),
    "lemma5": (Model.CONDITIONAL, Gain.VARIABLE),
    "lemma6": (Model.UNCONDITIONAL, Gain.VARIABLE),
    "taylor_lemma2": (Model.CONDITIONAL, Gain.EQUAL),
    "approx_lemma3": (Model.CONDITIONAL, Gain.EQUAL),
}
REQUIRED = object()


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


class ConfigError(Exception):
    """Invalid or missing configuration; exit code 2."""


def read_config(path) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment.  Keys accept ``-`` or ``_``."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


class Settings:
    """Flag values layered over config-file values layered over defaults."""

    def __init__(self, args: argparse.Namespace, known: set):
        self.args = args
        self.config = read_config(args.config) if args.config else {}
        unknown = set(self.config) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    def get(self, name: str, kind=float, default=REQUIRED):
        value = getattr(self.args, name, None)
        if value is None and name in self.config:
            try:
                value = kind(self.config[name])
            except ValueError as exc:
                raise ConfigError(f"config value for {name}: {exc}") from exc
        if value is None:
            if default is REQUIRED:
                raise ConfigError(f"missing required option --{name.replace('_', '-')}")
            return default
        return value

    def given(self, name: str) -> bool:
        return getattr(self.args, name, None) is not None or name in self.config


# ---------------------------------------------------------------- parsing

def _add_array(p):
    p.add_argument("--n-sensors", type=int, help="number of sensors N (>= 3)")
    p.add_argument("--spacing", type=float, help="inter-element spacing d [m]")
    p.add_argument("--wavelength", type=float, help="wavelength [m]")


def _add_signal(p):
    p.add_argument("--snapshots", type=int, help="snapshot count T (default 90)")
    p.add_argument("--noise-var", type=float, help="noise variance (default 0.001)")
    p.add_argument("--amplitude", type=float, help="conditional signal amplitude (default 1)")
    p.add_argument("--signal-var", type=float, help="unconditional signal variance (default 1)")
    p.add_argument("--model", choices=[m.value for m in Model], help="default conditional")
    p.add_argument("--gain", choices=[g.value for g in Gain], help="default variable for regions")


def _add_region(p):
    p.add_argument("--r-min", type=float, help="region lower range [m] (default lower Fresnel bound)")
    p.add_argument("--r-max", type=float, help="region upper range [m] (default 2x upper Fresnel bound)")
    p.add_argument("--theta-min", type=float, help="region lower angle [deg] (default -89)")
    p.add_argument("--theta-max", type=float, help="region upper angle [deg] (default 89)")
    p.add_argument("--grid-nr", type=int, help="range grid points (default 100)")
    p.add_argument("--grid-ntheta", type=int, help="angle grid points (default 100)")


def _add_point(p):
    p.add_argument("--range", type=float, help="source range [m]")
    p.add_argument("--angle", type=float, help="source angle [deg]")


def _add_sweep(p):
    p.add_argument("--axis", choices=["range", "angle"], help="sweep axis (default range)")
    p.add_argument("--start", type=float, help="first sweep value [m or deg]")
    p.add_argument("--stop", type=float, help="last sweep value [m or deg]")
    p.add_argument("--points", type=int, help="number of sweep points")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int, help="RNG seed (default 0)")
    common.add_argument("--format", choices=["csv", "json"], help="output format (default csv)")
    common.add_argument("--out", help="output path (default stdout)")

    parser = argparse.ArgumentParser(prog="nearfield-crb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fresnel", parents=[common], help="Fresnel region bounds")
    _add_array(p)

    p = sub.add_parser("crb-sweep", parents=[common], help="bounds along a range or angle sweep")
    _add_array(p); _add_signal(p); _add_point(p); _add_sweep(p)
    p.add_argument("--sources", help=f"comma list from {','.join(SWEEP_SOURCES)}")

    p = sub.add_parser("compare", parents=[common], help="exact vs approximate and EG vs VG ratios")
    _add_array(p); _add_signal(p); _add_point(p); _add_sweep(p)

    p = sub.add_parser("nflr", parents=[common], help="localization-region map")
    _add_array(p); _add_signal(p); _add_region(p)
    p.add_argument("--std-max", type=float, help="absolute position-error target [m]")
    p.add_argument("--epsilon", type=float, help="relative position-error target")

    for name, text in (("min-time", "minimum observation time"), ("min-snr", "minimum deterministic SNR")):
        p = sub.add_parser(name, parents=[common], help=f"{text} (point, or region if region flags given)")
        _add_array(p); _add_signal(p); _add_point(p); _add_region(p)
        p.add_argument("--epsilon", type=float, help="relative position-error target")

    p = sub.add_parser("min-sensors", parents=[common], help="minimum sensor count for a region")
    _add_array(p); _add_signal(p); _add_region(p)
    p.add_argument("--epsilon", type=float, help="relative position-error target")
    p.add_argument("--n-max", type=int, help="largest sensor count tried (default 256)")
    p.add_argument("--all", action="store_const", const=True, help="report every feasible count")

    p = sub.add_parser("mc-validate", parents=[common], help="ML Monte-Carlo efficiency vs the bound")
    _add_array(p); _add_signal(p); _add_point(p)
    p.add_argument("--runs", type=int, help="Monte-Carlo trials (default 500)")
    p.add_argument("--delay-model", choices=["exact", "approx", "both"],
                   help="model assumed by the estimator (default both)")
    p.add_argument("--grid", type=int, help="initialization grid points per axis (default 64)")
    return parser


def _known_keys(parser: argparse.ArgumentParser, command: str) -> set:
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return {a.dest for a in sub.choices[command]._actions} - {"help", "config"}


# ---------------------------------------------------------------- builders

def _cfg(s: Settings) -> ArrayConfig:
    try:
        return ArrayConfig(s.get("n_sensors", int), s.get("spacing"), s.get("wavelength"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _params(s: Settings, model=None, gain=None, default_gain=Gain.EQUAL) -> ScenarioParams:
    model = Model(model or s.get("model", str, Model.CONDITIONAL.value))
    gain = Gain(gain or s.get("gain", str, default_gain.value))
    try:
        if model is Model.CONDITIONAL:
            return ScenarioParams.conditional(s.get("snapshots", int, 90), s.get("noise_var", float, 1e-3),
                                              s.get("amplitude", float, 1.0), gain=gain)
        return ScenarioParams.unconditional(s.get("snapshots", int, 90), s.get("noise_var", float, 1e-3),
                                            s.get("signal_var", float, 1.0), gain=gain)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _loc(s: Settings, r_default=REQUIRED, angle_default=REQUIRED) -> SourceLocation:
    try:
        return SourceLocation.from_degrees(s.get("range", float, r_default), s.get("angle", float, angle_default))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _region(s: Settings, cfg: ArrayConfig) -> RegionSpec:
    lower, upper = fresnel_bounds(cfg)
    try:
        return RegionSpec.from_degrees(
            s.get("r_min", float, lower), s.get("r_max", float, 2.0 * upper),
            s.get("theta_min", float, -89.0), s.get("theta_max", float, 89.0),
            s.get("grid_nr", int, 100), s.get("grid_ntheta", int, 100))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _sweep(s: Settings, cfg: ArrayConfig):
    axis = s.get("axis", str, "range")
    if axis == "range":
        start, stop, points = s.get("start", float, 0.5), s.get("stop", float, 50.0), s.get("points", int, 100)
        if not 0 < start <= stop:
            raise ConfigError("range sweep needs 0 < start <= stop")
    elif axis == "angle":
        start, stop, points = s.get("start", float, -89.0), s.get("stop", float, 89.0), s.get("points", int, 179)
        if not -90 < start <= stop < 90:
            raise ConfigError("angle sweep must stay inside (-90, 90) degrees")
    else:
        raise ConfigError(f"unknown axis {axis!r}")
    if points < 1:
        raise ConfigError("--points must be >= 1")
    return axis, np.linspace(start, stop, points)


def _sweep_locations(s: Settings, cfg: ArrayConfig):
    axis, values = _sweep(s, cfg)
    if axis == "range":
        angle = s.get("angle", float, 45.0)
        locs = [SourceLocation.from_degrees(v, angle) for v in values]
    else:
        r = s.get("range", float, 20.0 * cfg.wavelength)
        locs = [SourceLocation.from_degrees(r, v) for v in values]
    return axis, values, locs


# ---------------------------------------------------------------- output

def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _json_safe(x):
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def table(columns, rows, fmt: str, metadata=None) -> str:
    """Render rows as CSV (metadata as leading ``#`` lines) or JSON."""
    if fmt == "json":
        payload = {"metadata": metadata or {}, "rows": [dict(zip(columns, r)) for r in rows]}
        return json.dumps(_json_safe(payload), indent=2) + "\n"
    buf = io.StringIO()
    for k, v in (metadata or {}).items():
        buf.write(f"# {k}={_fmt(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _emit(text: str, s: Settings):
    out = s.get("out", str, None)
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _format(s: Settings) -> str:
    fmt = s.get("format", str, "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown format {fmt!r}")
    return fmt


def _array_meta(cfg):
    lower, upper = fresnel_bounds(cfg)
    return {"n_sensors": cfg.n_sensors, "spacing_m": cfg.spacing, "wavelength_m": cfg.wavelength,
            "fresnel_lower_m": lower, "fresnel_upper_m": upper}


# ---------------------------------------------------------------- commands

def cmd_fresnel(s: Settings) -> str:
    lower, upper = fresnel_bounds(_cfg(s))
    return table(["lower_m", "upper_m"], [(lower, upper)], _format(s)) if _format(s) == "csv" else \
        json.dumps({"lower_m": lower, "upper_m": upper}, indent=2) + "\n"


def _tag_crb(tag, cfg, loc, params):
    if tag == "taylor_lemma2":
        return cf.crb_taylor_eg(cfg, loc, params)
    if tag == "approx_lemma3":
        return cf.crb_approx_literature(cfg, loc, params)
    return cf.closed_form_crb(cfg, loc, params)


def cmd_crb_sweep(s: Settings) -> str:
    cfg = _cfg(s)
    axis, values, locs = _sweep_locations(s, cfg)
    tags = [t.strip() for t in s.get("sources", str, "lemma1,taylor_lemma2,approx_lemma3").split(",") if t.strip()]
    bad = [t for t in tags if t not in SWEEP_SOURCES]
    if bad:
        raise ConfigError(f"unknown sources: {', '.join(bad)}")
    jobs = [(t, _params(s, *_FLAVORS[t])) for t in tags if t != "oracle"]
    if "oracle" in tags:
        lemma_flavors = [t for t in tags if t in ("lemma1", "lemma4", "lemma5", "lemma6")] or ["lemma1"]
        jobs += [("oracle", _params(s, *_FLAVORS[t])) for t in lemma_flavors]
    rows = []
    for value, loc in zip(values, locs):
        for tag, params in jobs:
            flavor = f"{params.model.value}_{params.gain.value}"
            try:
                res = oracle_crb(cfg, loc, params) if tag == "oracle" else _tag_crb(tag, cfg, loc, params)
                rows.append((value, res.source_tag.value, flavor, res.crb_theta, res.crb_r,
                             res.crb_r_theta, res.quality))
            except (IllConditioned, NearSingular) as exc:
                qual = "ill_conditioned" if isinstance(exc, IllConditioned) else "near_singular"
                name = ("oracle_" + params.model.value) if tag == "oracle" else tag
                rows.append((value, name, flavor, math.nan, math.nan, math.nan, qual))
    col = "range_m" if axis == "range" else "angle_deg"
    cols = [col, "source_tag", "flavor", "crb_theta", "crb_r", "crb_r_theta", "quality_flag"]
    meta = _array_meta(cfg)
    if axis == "range":
        meta["angle_deg"] = math.degrees(locs[0].angle)
    else:
        meta["range_m"] = locs[0].range
    return table(cols, rows, _format(s), meta)


def cmd_compare(s: Settings) -> str:
    cfg = _cfg(s)
    axis, values, locs = _sweep_locations(s, cfg)
    p_vg = _params(s, Model.CONDITIONAL, Gain.VARIABLE)
    p_eg = _params(s, Model.CONDITIONAL, Gain.EQUAL)
    rows = []
    for value, loc in zip(values, locs):
        try:
            exact = cf.crb_conditional_eg(cfg, loc, p_eg)
            approx = cf.crb_approx_literature(cfg, loc, p_eg)
            vg = cf.crb_conditional_vg(cfg, loc, p_vg)
            eg_n = cf.crb_conditional_eg(cfg, loc, cf.received_power_normalized(p_vg, loc))
            fo = cf.crb_firstorder_comparison(cfg, loc, p_vg)
            rows.append((
                value, exact.crb_theta, approx.crb_theta, approx.crb_theta / exact.crb_theta,
                (approx.crb_theta - exact.crb_theta) / approx.crb_theta,
                exact.crb_r, approx.crb_r, approx.crb_r / exact.crb_r,
                eg_n.crb_theta, vg.crb_theta, eg_n.crb_theta / vg.crb_theta, fo.eg_theta / fo.vg_theta,
                eg_n.crb_r, vg.crb_r, eg_n.crb_r / vg.crb_r, fo.eg_r / fo.vg_r, exact.quality,
            ))
        except NearSingular:
            rows.append((value,) + (math.nan,) * 15 + ("near_singular",))
    col = "range_m" if axis == "range" else "angle_deg"
    cols = [col, "crb_theta_exact", "crb_theta_approx", "theta_approx_over_exact", "theta_rel_diff",
            "crb_r_exact", "crb_r_approx", "r_approx_over_exact",
            "crb_theta_eg_norm", "crb_theta_vg", "theta_eg_over_vg", "theta_eg_over_vg_first_order",
            "crb_r_eg_norm", "crb_r_vg", "r_eg_over_vg", "r_eg_over_vg_first_order", "quality_flag"]
    return table(cols, rows, _format(s), _array_meta(cfg))


def _criterion(s: Settings) -> Criterion:
    std_max, eps = s.get("std_max", float, None), s.get("epsilon", float, None)
    if (std_max is None) == (eps is None):
        raise ConfigError("give exactly one of --std-max or --epsilon")
    try:
        return Criterion.absolute(std_max) if std_max is not None else Criterion.relative(eps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_nflr(s: Settings) -> str:
    cfg = _cfg(s)
    m = nflr_map(cfg, _region(s, cfg), _params(s, default_gain=Gain.VARIABLE), _criterion(s))
    if _format(s) == "json":
        return json.dumps(_json_safe(m.to_dict()), indent=2) + "\n"
    return "".join(f"# {k}={_fmt(v)}\n" for k, v in m.metadata.items()) + m.to_csv()


def _region_mode(s: Settings) -> bool:
    return any(s.given(k) for k in ("r_min", "r_max", "theta_min", "theta_max", "grid_nr", "grid_ntheta"))


def _epsilon(s: Settings) -> float:
    eps = s.get("epsilon", float)
    if not eps > 0:
        raise ConfigError("--epsilon must be > 0")
    return eps


def cmd_min_time(s: Settings) -> str:
    cfg, params, eps = _cfg(s), _params(s, default_gain=Gain.VARIABLE), _epsilon(s)
    if _region_mode(s):
        req = min_time_region(cfg, _region(s, cfg), params, eps)
        value, r, th = req.value, req.r, req.theta
    else:
        loc = _loc(s)
        value, r, th = min_observation_time(cfg, loc, params, eps), loc.range, loc.angle
    cols = ["epsilon", "t_min", "t_min_snapshots", "range_m", "angle_deg"]
    snaps = math.ceil(value) if math.isfinite(value) else None
    return table(cols, [(eps, value, snaps, r, math.degrees(th))], _format(s), _array_meta(cfg))


def cmd_min_snr(s: Settings) -> str:
    cfg, params, eps = _cfg(s), _params(s, default_gain=Gain.VARIABLE), _epsilon(s)
    if params.model is not Model.CONDITIONAL:
        raise ConfigError("min-snr is defined for the conditional model")
    if _region_mode(s):
        req = min_snr_region(cfg, _region(s, cfg), params, eps)
        value, r, th = req.value, req.r, req.theta
    else:
        loc = _loc(s)
        value, r, th = min_snr(cfg, loc, params, eps), loc.range, loc.angle
    cols = ["epsilon", "d_snr_min", "d_snr_min_db", "range_m", "angle_deg"]
    return table(cols, [(eps, value, 10.0 * math.log10(value), r, math.degrees(th))], _format(s),
                 _array_meta(cfg))


def cmd_min_sensors(s: Settings) -> str:
    cfg, params, eps = _cfg(s), _params(s, default_gain=Gain.VARIABLE), _epsilon(s)
    region = _region(s, cfg)
    n_max = s.get("n_max", int, 256)
    if n_max < 3:
        raise ConfigError("--n-max must be >= 3")
    found = min_sensors(cfg, region, params, eps, n_max, return_all=s.get("all", _bool, False))
    found = found if isinstance(found, list) else [found]
    return table(["epsilon", "n_sensors"], [(eps, n) for n in found], _format(s),
                 {"n_max": n_max, "n_min": found[0]})


def cmd_mc_validate(s: Settings) -> str:
    cfg = _cfg(s)
    loc = _loc(s, r_default=20.0 * cfg.wavelength, angle_default=45.0)
    params = _params(s)
    runs = s.get("runs", int, 500)
    grid = s.get("grid", int, 64)
    if runs < 1 or grid < 2:
        raise ConfigError("--runs must be >= 1 and --grid >= 2")
    choice = s.get("delay_model", str, "both")
    models = ["exact", "approx"] if choice == "both" else [choice]
    seed = s.get("seed", int, 0)
    search = default_search(cfg, loc, (grid, grid))
    report = None
    for dm in models:
        rep = monte_carlo(cfg, loc, params, runs, seed, search, DelayModel(dm))
        report = rep if report is None else report + rep
    if _format(s) == "json":
        return report.to_json() + "\n"
    return "".join(f"# {k}={_fmt(v)}\n" for k, v in report.metadata.items()) + report.to_csv()


COMMANDS = {
    "fresnel": cmd_fresnel,
    "crb-sweep": cmd_crb_sweep,
    "compare": cmd_compare,
    "nflr": cmd_nflr,
    "min-time": cmd_min_time,
    "min-snr": cmd_min_snr,
    "min-sensors": cmd_min_sensors,
    "mc-validate": cmd_mc_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        s = Settings(args, _known_keys(parser, args.command))
        _emit(COMMANDS[args.command](s), s)
    except ConfigError as exc:
        print(f"nearfield-crb: error: {exc}", file=sys.stderr)
        return 2
    except (NotAchievable, NearFieldError, ArithmeticError) as exc:
        print(f"nearfield-crb: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
