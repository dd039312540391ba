"""Experiment runner: writes plot-ready CSVs and a manifest per run.

Usage::

    ehoutage --experiment fig3 --out reports/fig3
    ehoutage --config runs.ini --experiment fig5 --trials 20000 --seed 7

Flags override the config file, which overrides the built-in defaults.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import platform
import re
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import (
    ClassificationError,
    DomainError,
    EhOutageError,
    ParseError,
    ResolutionError,
    ResourceError,
    SearchError,
)
from .fading import OutageCurve, load_tabulated_csv, thresholds
from .n1 import GRID_FRACTION, solve_p3, suboptimal_onoff_n1
from .offline import (
    EhTrace,
    average_outage,
    greedy_profile,
    solve_p1_optimal,
    solve_p1_suboptimal,
)
from .online import EhModel, build_value_table
from .sim import RESULT_FIELDS, evaluate_policies, make_rng

__all__ = ["main", "run_experiment", "ingest_trace", "load_config", "DEFAULTS"]

EXPERIMENTS = ("fig3", "fig4", "fig5", "custom")

DEFAULTS = {
    "run": {"seed": "1", "trials": "100000", "out": "reports"},
    "fig3": {"beta": "8", "rate": "3", "m_values": "1, 10, 100", "points": "40",
             "q1_max_factor": "2.0"},
    "fig4": {"beta": "8", "rate": "3", "q1": "9", "m_values": "10, 100, 1000, 10000"},
    "fig5": {"beta": "8", "rate": "0.5", "n": "20", "m": "1", "delta": "0.01",
             "p_values": "0.1, 0.2, 0.3, 0.45, 0.6, 0.8",
             "policies": "offline-opt, mdp, greedy, lookahead(2), lookahead(N)",
             "grid_fraction": "1e-3"},
    "custom": {"beta": "8", "rate": "3", "m": "1",
               "solvers": "optimal, suboptimal, greedy"},
}

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_RESOURCE = 0, 2, 3, 4


def ingest_trace(path, m: int = 1) -> EhTrace:
    """Read a ``period,rate`` CSV (header line, 1-based consecutive periods)."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise ParseError(f"cannot open: {exc.strerror}", path) from None
    rates = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", path)
        if [h.strip().lower() for h in header] != ["period", "rate"]:
            raise ParseError("header must be 'period,rate'", path, 0)
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise ParseError("expected two columns", path, row_no)
            try:
                period, rate = int(row[0]), float(row[1])
            except ValueError:
                raise ParseError("non-numeric cell", path, row_no) from None
            if period != len(rates) + 1:
                raise ParseError(f"period {period} out of order, expected {len(rates) + 1}",
                                 path, row_no)
            if not rate >= 0 or math.isinf(rate):
                raise ParseError(f"rate {row[1].strip()} must be finite and nonnegative",
                                 path, row_no)
            rates.append(rate)
    if not rates:
        raise ParseError("no data rows", path)
    return EhTrace(tuple(rates), m)


class Config:
    """Resolved settings of one experiment with line numbers for errors."""

    def __init__(self, experiment, values, lines, path, text):
        self.experiment = experiment
        self.values = values
        self.lines = lines
        self.path = path
        self.text = text

    def _fail(self, key, msg):
        return ParseError(f"{key}: {msg}", self.path, self.lines.get(key), "line")

    def get(self, key, kind=str):
        raw = self.values[key]
        try:
            return kind(raw)
        except (TypeError, ValueError):
            raise self._fail(key, f"cannot read {raw!r} as {kind.__name__}") from None

    def floats(self, key):
        return [self._num(key, x, float) for x in self._items(key)]

    def ints(self, key):
        return [self._num(key, x, int) for x in self._items(key)]

    def words(self, key):
        return self._items(key)

    def _items(self, key):
        items = [x.strip() for x in self.values[key].split(",") if x.strip()]
        if not items:
            raise self._fail(key, "empty list")
        return items

    def _num(self, key, raw, kind):
        try:
            return kind(raw)
        except ValueError:
            raise self._fail(key, f"cannot read {raw!r} as {kind.__name__}") from None

    def optional(self, key):
        return self.values.get(key)


def _key_lines(text):
    """Map ``(section, key)`` to its 1-based line in the config text."""
    lines, section = {}, None
    for no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        head = re.match(r"\[([^\]]+)\]$", stripped)
        if head:
            section = head.group(1).strip()
        elif section and re.match(r"[^#;=\s][^=:]*[=:]", stripped):
            key = re.split(r"[=:]", stripped, maxsplit=1)[0].strip().lower()
            lines[(section, key)] = no
    return lines


def load_config(path=None, experiment=None, overrides=None) -> Config:
    """Merge defaults, the config file and command-line overrides."""
    text = ""
    parser = configparser.ConfigParser(interpolation=None)
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ParseError(f"cannot read config: {exc.strerror}", path) from None
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as exc:
            lineno = getattr(exc, "lineno", None)
            if lineno is None and getattr(exc, "errors", None):
                lineno = exc.errors[0][0]
            msg = exc.message.splitlines()[0] if hasattr(exc, "message") else str(exc)
            raise ParseError(msg, path, lineno, "line") from None
    lines = _key_lines(text)
    run = dict(DEFAULTS["run"])
    if parser.has_section("run"):
        run.update(parser["run"])
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    experiment = overrides.pop("experiment", None) or experiment or run.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ParseError(f"unknown or missing experiment {experiment!r}; "
                         f"choose one of {', '.join(EXPERIMENTS)}", path,
                         lines.get(("run", "experiment")), "line")
    values = dict(run)
    values.update(DEFAULTS[experiment])
    key_lines = {k: lines[("run", k)] for k in run if ("run", k) in lines}
    if parser.has_section(experiment):
        values.update(parser[experiment])
        key_lines.update({k: lines[(experiment, k)] for k in parser[experiment]
                          if (experiment, k) in lines})
    values.update({k: str(v) for k, v in overrides.items()})
    return Config(experiment, values, key_lines, path, text)


def _curve(cfg):
    table = cfg.optional("curve_csv")
    if table:
        return load_tabulated_csv(_relative(cfg, table), cfg.get("rate", float))
    return OutageCurve.weibull(cfg.get("beta", float), cfg.get("rate", float))


def _relative(cfg, name):
    p = Path(name)
    if not p.is_absolute() and cfg.path is not None:
        p = Path(cfg.path).parent / p
    return p


def _write_csv(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else x


def _fig3(cfg, out):
    curve = _curve(cfg)
    thr = thresholds(curve)
    f_pa = float(curve(thr.p_a))
    points = cfg.get("points", int)
    q_values = np.linspace(0, cfg.get("q1_max_factor", float) * thr.p_a, points + 1)[1:]
    rows = []
    for m in cfg.ints("m_values"):
        for q1 in q_values:
            sol = solve_p3(curve, float(q1), m, thr=thr)
            rows.append([m, _fmt(q1), _fmt(sol.objective), _fmt(curve(float(q1)))])
    for q1 in q_values:
        # the M -> infinity envelope: the chord below p_a, the curve above it
        limit = 1.0 + q1 * (f_pa - 1.0) / thr.p_a if q1 < thr.p_a else curve(float(q1))
        rows.append(["inf", _fmt(q1), _fmt(limit), _fmt(curve(float(q1)))])
    _write_csv(out / "fig3.csv", ["m", "q1", "optimal", "uniform"], rows)
    return {"p_a": thr.p_a, "p_b": thr.p_b}


def _fig4(cfg, out):
    curve = _curve(cfg)
    thr = thresholds(curve)
    q1 = cfg.get("q1", float)
    rows = []
    for m in cfg.ints("m_values"):
        opt = solve_p3(curve, q1, m, thr=thr).objective
        sub = suboptimal_onoff_n1(curve, q1, m, thr=thr).objective
        rows.append([m, _fmt(opt), _fmt(sub), _fmt(abs(opt - sub))])
    _write_csv(out / "fig4.csv", ["m", "optimal", "suboptimal", "gap"], rows)
    return {"p_a": thr.p_a, "p_b": thr.p_b}


def _fig5(cfg, out, seed, trials):
    curve = _curve(cfg)
    thr = thresholds(curve)
    n, m, delta = cfg.get("n", int), cfg.get("m", int), cfg.get("delta", float)
    step = thr.p_b * cfg.get("grid_fraction", float)
    policies = cfg.words("policies")
    rows = []
    for k, p in enumerate(cfg.floats("p_values")):
        model = EhModel.iid([0.0, p, 2.0 * p], [1 / 3, 1 / 3, 1 / 3])
        table = build_value_table(curve, model, n, m, delta, grid_step=step, thr=thr) \
            if "mdp" in policies else None
        # one seed per sweep point keeps the points independent and re-runnable
        point_seed = seed + k
        results = evaluate_policies(policies, curve, model, n, m, trials, make_rng(point_seed),
                                    table=table, grid_step=step, thr=thr, seed=point_seed,
                                    param=p)
        rows.extend([_fmt(getattr(r, f)) for f in RESULT_FIELDS] for r in results)
    _write_csv(out / "fig5.csv", list(RESULT_FIELDS), rows)
    return {"p_a": thr.p_a, "p_b": thr.p_b, "grid_step": step}


def _custom(cfg, out):
    curve = _curve(cfg)
    thr = thresholds(curve)
    trace_name = cfg.optional("trace")
    if not trace_name:
        raise ParseError("custom experiment needs 'trace = <csv path>'", cfg.path)
    trace = ingest_trace(_relative(cfg, trace_name), cfg.get("m", int))
    solvers = {
        "optimal": lambda: solve_p1_optimal(curve, trace, thr=thr),
        "suboptimal": lambda: solve_p1_suboptimal(curve, trace, thr),
        "greedy": lambda: greedy_profile(trace),
    }
    profile_rows, summary = [], []
    for name in cfg.words("solvers"):
        if name not in solvers:
            raise cfg._fail("solvers", f"unknown solver {name!r}")
        prof = solvers[name]()
        for (i, j), p in np.ndenumerate(prof):
            profile_rows.append([name, i + 1, j + 1, _fmt(p)])
        summary.append([name, _fmt(average_outage(curve, prof))])
    _write_csv(out / "profiles.csv", ["solver", "period", "block", "power"], profile_rows)
    _write_csv(out / "summary.csv", ["solver", "mean_outage"], summary)
    return {"p_a": thr.p_a, "p_b": thr.p_b, "n": trace.n}


def run_experiment(cfg: Config, out=None) -> Path:
    """Run the configured experiment and return its report directory."""
    out = Path(out or cfg.get("out"))
    out.mkdir(parents=True, exist_ok=True)
    seed, trials = cfg.get("seed", int), cfg.get("trials", int)
    if seed < 0 or seed >= 2**64:
        raise cfg._fail("seed", "must fit an unsigned 64-bit integer")
    if trials < 1:
        raise cfg._fail("trials", "must be positive")
    started = time.time()
    if cfg.experiment == "fig3":
        info = _fig3(cfg, out)
    elif cfg.experiment == "fig4":
        info = _fig4(cfg, out)
    elif cfg.experiment == "fig5":
        info = _fig5(cfg, out, seed, trials)
    else:
        info = _custom(cfg, out)
    manifest = {
        "experiment": cfg.experiment,
        "settings": dict(sorted(cfg.values.items())),
        "config_file": str(cfg.path) if cfg.path else None,
        "config_sha256": hashlib.sha256(cfg.text.encode()).hexdigest(),
        "seed": seed,
        "tolerances": {"pa_tol": 1e-6, "default_grid_fraction": GRID_FRACTION},
        "derived": info,
        "versions": {"ehoutage": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "elapsed_s": round(time.time() - started, 3),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=float) + "\n")
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ehoutage", description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, help="key = value config file with sections")
    ap.add_argument("--experiment", choices=EXPERIMENTS)
    ap.add_argument("--out", type=Path, help="report directory")
    ap.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    ap.add_argument("--trials", type=int, help="Monte Carlo traces per sweep point")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, overrides={
            "experiment": args.experiment, "seed": args.seed, "trials": args.trials,
            "out": str(args.out) if args.out else None})
        out = run_experiment(cfg)
    except (ParseError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (SearchError, ClassificationError, ResolutionError, EhOutageError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
