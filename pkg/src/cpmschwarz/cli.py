"""Command-line front end.

Subcommands
-----------
solve                       single-domain closest point solve
ras                         one restricted additive Schwarz run
theory                      iteration matrix and contraction bound
experiment mobius           error decay on the Moebius-strip boundary
experiment circle-overlap   contraction versus overlap on the unit circle

Settings come from built-in defaults, then an optional ``key = value``
config file, then command-line flags. Exit status is 0 on success, 2 for
usage or configuration errors and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import band as band_mod
from . import theory
from .curve import curve_from_name
from .errors import ConfigError, InvalidOverlap, NumericalError
from .schwarz import (RAS, make_partition, observed_kappa,
                      write_history_csv)
from .sparsela import Factorization, SolveLog, solve as sparse_solve
from .svg import Series, line_plot

__all__ = ["RunConfig", "load_config", "dump_config", "parse_config_text",
           "read_csv", "write_csv", "rhs_function", "exact_solution",
           "cmd_solve", "cmd_ras", "cmd_theory", "cmd_experiment_mobius",
           "cmd_experiment_circle_overlap", "main"]

logger = logging.getLogger("cpmschwarz")

N_SOLUTION_SAMPLES = 256
KAPPA_SKIP = 1


# -- configuration -------------------------------------------------------

@dataclass
class RunConfig:
    curve: str = "circle"
    h: float = 0.05
    degree: int = 4
    c: float = 1.0
    f: str = "sin-mode-1"
    split: tuple = (0.5, 0.5)
    overlap: tuple = ("0.1L", "0.1L")
    inner_tol: float = 1e-12
    tol: float = 1e-10
    max_iter: int = 200
    method: str = "direct"
    hs: tuple = ()
    deltas: tuple = ()
    out: str = "out"

    def overlap_lengths(self, L):
        return tuple(_length(v, L) for v in self.overlap)


def _length(text, L):
    t = str(text).strip()
    try:
        return float(t[:-1]) * L if t.endswith("L") else float(t)
    except ValueError:
        raise ConfigError(f"bad length {text!r}") from None


def _split_list(text):
    return tuple(p.strip() for p in str(text).split(",") if p.strip())


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_TUPLE_FLOAT = {"split", "hs", "deltas"}


def _coerce(key, value):
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        if key in _TUPLE_FLOAT:
            return tuple(float(v) for v in _split_list(value))
        if key == "overlap":
            parts = _split_list(value)
            if len(parts) == 1:
                parts = parts * 2
            if len(parts) != 2:
                raise ConfigError("overlap takes one or two lengths")
            return parts
        if key in ("degree", "max_iter"):
            return int(value)
        if key in ("h", "c", "inner_tol", "tol"):
            return float(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return str(value).strip()


def parse_config_text(text) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        values[key.replace("-", "_")] = _coerce(key.replace("-", "_"), value)
    return values


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return dataclasses.replace(base or RunConfig(), **parse_config_text(text))


def _format_value(v):
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(config: RunConfig) -> str:
    return "".join(f"{k} = {_format_value(getattr(config, k))}\n"
                   for k in _FIELDS)


# -- problem data --------------------------------------------------------

def _sin_mode(name):
    if name.startswith("sin-mode-"):
        try:
            return int(name[len("sin-mode-"):])
        except ValueError:
            pass
    return None


def rhs_function(name, L):
    """Right-hand side as a function of arclength."""
    if name == "zero":
        return lambda s: np.zeros_like(np.asarray(s, dtype=float))
    k = _sin_mode(name)
    if k is None:
        raise ConfigError(f"unknown f selector {name!r}")
    w = 2 * math.pi * k / L
    return lambda s: np.sin(w * np.asarray(s, dtype=float))


def exact_solution(name, L, c):
    """Analytic solution of ``c u - u'' = f`` in arclength, if known."""
    if name == "zero":
        return lambda s: np.zeros_like(np.asarray(s, dtype=float))
    k = _sin_mode(name)
    if k is None:
        return None
    w = 2 * math.pi * k / L
    return lambda s: np.sin(w * np.asarray(s, dtype=float)) / (c + w * w)


# -- CSV -----------------------------------------------------------------

def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating))
                        else v for v in row])


def read_csv(path):
    """Return ``(header, columns)`` with every column as a float array."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path} is empty")
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]],
                    dtype=float).reshape(-1, len(header))
    return header, {name: data[:, k] for k, name in enumerate(header)}


# -- shared pieces -------------------------------------------------------

def _prepare_out(config):
    os.makedirs(config.out, exist_ok=True)
    with open(os.path.join(config.out, "config.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(dump_config(config))


def _discretize(config, curve, h=None):
    h = config.h if h is None else h
    t0 = time.perf_counter()
    op = band_mod.discretize(curve, h, config.degree, config.c,
                             rhs_function(config.f, curve.length))
    logger.info("h=%g: band %d points (+%d ghosts), assembled in %.1f s",
                h, op.band.n, op.band.n_ext - op.band.n,
                time.perf_counter() - t0)
    return op


def _ras_run(config, curve, h, log=None):
    """Discretize, solve single-domain, run RAS; return a result dict."""
    L = curve.length
    op = _discretize(config, curve, h)
    log = SolveLog() if log is None else log
    u_single = Factorization(op.A, tol=config.inner_tol, log=log)(op.b)
    part = make_partition(op.band, L, config.split,
                          config.overlap_lengths(L), op.A)
    ras = RAS(op.A, op.b, part, op.E, inner_tol=config.inner_tol, log=log)
    u, hist = ras.solve(np.zeros(op.band.n), u_single, config.tol,
                        config.max_iter)
    cfg1d = part.config1d(config.c)
    im = theory.iteration_matrix(cfg1d)
    try:
        k_obs = observed_kappa(hist, skip=KAPPA_SKIP)
    except ConfigError:
        k_obs = float("nan")
    return dict(op=op, partition=part, history=hist, u=u, u_single=u_single,
                kappa_obs=k_obs, kappa_bar=im.kappa_bound(),
                rho_squared=im.rho_squared(), config1d=cfg1d)


# -- commands ------------------------------------------------------------

def cmd_solve(config: RunConfig):
    curve = curve_from_name(config.curve)
    L = curve.length
    op = _discretize(config, curve)
    u = sparse_solve(op.A, op.b, tol=config.inner_tol,
                     max_iter=10 * op.band.n, method=config.method)
    s = np.arange(N_SOLUTION_SAMPLES) * (L / N_SOLUTION_SAMPLES)
    us = band_mod.restrict_to_curve(op.band, u, s)
    _prepare_out(config)
    write_csv(os.path.join(config.out, "solution.csv"), ("s", "u"),
              zip(s, us))
    exact = exact_solution(config.f, L, config.c)
    result = {"band_size": op.band.n, "u": us, "s": s}
    if exact is not None:
        ue = exact(s)
        err = np.abs(us - ue)
        write_csv(os.path.join(config.out, "error.csv"),
                  ("s", "u", "exact", "abs_error"), zip(s, us, ue, err))
        result["max_error"] = float(np.max(err))
        print(f"max sampled error vs analytic solution: "
              f"{result['max_error']:.6e}")
    print(f"band points: {op.band.n}; wrote {config.out}/solution.csv")
    return result


def cmd_ras(config: RunConfig):
    curve = curve_from_name(config.curve)
    res = _ras_run(config, curve, config.h)
    _prepare_out(config)
    write_history_csv(os.path.join(config.out, "history.csv"),
                      res["history"])
    hist = res["history"]
    print(f"iterations: {len(hist) - 1}; final error {hist[-1]:.6e}")
    print(f"kappa_obs = {res['kappa_obs']:.6f}; "
          f"kappa_bar = {res['kappa_bar']:.6f}; "
          f"rho(M)^2 = {res['rho_squared']:.6f}")
    if hist[-1] > config.tol:
        raise NumericalError(f"RAS did not reach tol {config.tol:g} in "
                             f"{config.max_iter} iterations")
    return res


def _theory_config(config, L):
    if len(config.split) != 2:
        raise ConfigError("split takes two fractions")
    f1, f2 = config.split
    if not (f1 > 0 and f2 > 0 and abs(f1 + f2 - 1) < 1e-12):
        raise ConfigError("split fractions must be positive and sum to 1")
    d1, d2 = config.overlap_lengths(L)
    return theory.SchwarzConfig1D.from_split(config.c, L, f1, d1, d2)


def cmd_theory(config: RunConfig, sweep=False):
    L = curve_from_name(config.curve).length
    cfg = _theory_config(config, L)
    im = theory.iteration_matrix(cfg)
    print(f"c = {cfg.c:g}, L = {L:.12g}, l1 = {cfg.l1:.12g}, "
          f"l2 = {cfg.l2:.12g}, d1 = {cfg.d1:.12g}, d2 = {cfg.d2:.12g}")
    print("M =")
    for row in im.M:
        print("  " + "  ".join(f"{v:.12f}" for v in row))
    print(f"||M||_inf = {im.inf_norm():.15g}")
    print(f"rho(M) = {im.spectral_radius():.15g}")
    print(f"kappa_bar = {im.kappa_bound():.15g}")
    result = {"matrix": im, "config": cfg}
    equal = (math.isclose(cfg.l1, cfg.l2, rel_tol=1e-12)
             and math.isclose(cfg.d1, cfg.d2, rel_tol=1e-12))
    if equal:
        ok = im.is_doubly_stochastic()
        eq = theory.equal_sized_kappa(cfg.c, L, cfg.d1)
        print(f"doubly stochastic: {'PASS' if ok else 'FAIL'}")
        print(f"equal-sized closed form = {eq:.15g} "
              f"(difference {abs(eq - im.kappa_bound()):.2e})")
        result["doubly_stochastic"] = ok
    if sweep:
        deltas = config.deltas or tuple(np.linspace(0.02, 0.2, 10) * L)
        cfgs = []
        for d in deltas:
            try:
                cfgs.append(theory.SchwarzConfig1D.from_split(
                    config.c, L, config.split[0], d, d))
            except InvalidOverlap as exc:
                warnings.warn(f"skipping overlap {d:g}: {exc}")
        _prepare_out(config)
        path = os.path.join(config.out, "theory_sweep.csv")
        theory.write_sweep_csv(path, theory.sweep(cfgs))
        print(f"wrote {path}")
    return result


DEFAULT_MOBIUS_HS = (0.05, 0.02, 0.01)
DEFAULT_CIRCLE_HS = (0.05, 0.01, 0.005)


def cmd_experiment_mobius(config: RunConfig):
    """Error decay of RAS on the Moebius-strip boundary, several grids."""
    curve = curve_from_name(config.curve)
    hs = config.hs or DEFAULT_MOBIUS_HS
    _prepare_out(config)
    series, summary, results = [], [], {}
    for h in hs:
        t0 = time.perf_counter()
        res = _ras_run(config, curve, h)
        hist = res["history"]
        write_history_csv(os.path.join(config.out, f"history_h{h:g}.csv"),
                          hist)
        summary.append((float(h), res["op"].band.n, len(hist) - 1,
                        res["kappa_obs"], res["kappa_bar"],
                        res["rho_squared"]))
        even = np.arange(0, len(hist), 2)
        series.append(Series(f"h = {h:g}", even / 2, hist[even],
                             markers=True))
        results[h] = res
        logger.info("h=%g: %d iterations, kappa_obs=%.6f (%.1f s)", h,
                    len(hist) - 1, res["kappa_obs"],
                    time.perf_counter() - t0)
        print(f"h = {h:g}: band {res['op'].band.n}, iterations "
              f"{len(hist) - 1}, kappa_obs = {res['kappa_obs']:.6f}")
    finest = results[min(hs)]
    part = finest["partition"]
    for j in range(2):
        mask = np.zeros(finest["op"].band.n, dtype=bool)
        mask[part.owned[j]] = True
        band_mod.write_band_csv(
            os.path.join(config.out, f"owned_points_{j + 1}.csv"),
            finest["op"].band, mask=mask)
    kbar = finest["kappa_bar"]
    e0 = max(r["history"][0] for r in results.values())
    n_double = max(len(r["history"]) for r in results.values()) // 2
    m = np.arange(n_double + 1)
    theory_line = e0 * kbar ** m
    write_csv(os.path.join(config.out, "theory_line.csv"),
              ("double_iter", "error"), zip(m.astype(float), theory_line))
    write_csv(os.path.join(config.out, "summary.csv"),
              ("h", "band_size", "iterations", "kappa_obs", "kappa_bar",
               "rho_squared"), summary)
    series.append(Series("theory kappa_bar^n", m, theory_line, dashed=True))
    line_plot(os.path.join(config.out, "error_decay.svg"), series,
              xlabel="double iteration", ylabel="max-norm error",
              title=f"RAS error, {config.curve}", logy=True)
    print(f"kappa_bar = {kbar:.6f}; rho(M)^2 = {finest['rho_squared']:.6f}")
    return results


def cmd_experiment_circle_overlap(config: RunConfig):
    """Observed versus theoretical contraction across overlaps."""
    curve = curve_from_name(config.curve)
    L = curve.length
    hs = config.hs or DEFAULT_CIRCLE_HS
    deltas = config.deltas or tuple(np.linspace(0.02, 0.2, 10) * L)
    _prepare_out(config)
    rows = []
    for h in hs:
        op = _discretize(config, curve, h)
        log = SolveLog()
        u_single = Factorization(op.A, tol=config.inner_tol, log=log)(op.b)
        for d in deltas:
            try:
                part = make_partition(op.band, L, (0.5, 0.5), (d, d), op.A)
            except InvalidOverlap as exc:
                warnings.warn(f"skipping overlap {d:g}: {exc}")
                continue
            ras = RAS(op.A, op.b, part, op.E, inner_tol=config.inner_tol,
                      log=log)
            _, hist = ras.solve(np.zeros(op.band.n), u_single, config.tol,
                                config.max_iter)
            k_obs = observed_kappa(hist, skip=KAPPA_SKIP)
            k_th = theory.equal_sized_kappa(config.c, L, d)
            rows.append((float(h), float(d), k_obs, k_th))
            print(f"h = {h:g}, delta = {d / L:.3f} L: kappa_obs = "
                  f"{k_obs:.6f}, kappa_theory = {k_th:.6f}")
    path = os.path.join(config.out, "overlap_sweep.csv")
    write_csv(path, ("h", "delta", "kappa_obs", "kappa_theory"), rows)
    if not rows:
        raise ConfigError("no overlap in the sweep satisfies the hypothesis")
    arr = np.array(rows).reshape(-1, 4)
    series = [Series(f"h = {h:g}", arr[arr[:, 0] == h, 1] / L,
                     arr[arr[:, 0] == h, 2], markers=True) for h in hs]
    fine = np.linspace(arr[:, 1].min(), arr[:, 1].max(), 200)
    series.append(Series("theory", fine / L,
                         [theory.equal_sized_kappa(config.c, L, d)
                          for d in fine], dashed=True))
    line_plot(os.path.join(config.out, "overlap_sweep.svg"), series,
              xlabel="overlap / L", ylabel="kappa",
              title="contraction per double iteration")
    return rows


# -- argument parsing ----------------------------------------------------

def _add_common(p):
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--curve")
    p.add_argument("--h", type=float)
    p.add_argument("--degree", type=int)
    p.add_argument("--c", type=float)
    p.add_argument("--f", help="rhs selector: sin-mode-<k> or zero")
    p.add_argument("--split", help="two fractions, e.g. 0.5,0.5")
    p.add_argument("--overlap",
                   help="one or two lengths; suffix L for fractions of L")
    p.add_argument("--tol", type=float, help="outer Schwarz tolerance")
    p.add_argument("--inner-tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--method", choices=("direct", "gmres"))
    p.add_argument("--hs", help="comma-separated grid spacings")
    p.add_argument("--deltas", help="comma-separated overlap lengths")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cpmschwarz",
        description="Closest point method with two-subdomain Schwarz.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "ras"):
        _add_common(sub.add_parser(name))
    p = sub.add_parser("theory")
    _add_common(p)
    p.add_argument("--sweep", action="store_true",
                   help="also write theory_sweep.csv")
    exp = sub.add_parser("experiment")
    exp_sub = exp.add_subparsers(dest="experiment", required=True)
    _add_common(exp_sub.add_parser("mobius"))
    _add_common(exp_sub.add_parser("circle-overlap"))
    return parser


_EXPERIMENT_DEFAULTS = {
    "mobius": dict(curve="mobius-boundary", split=(1 / 3, 2 / 3),
                   overlap=("0.1L", "0.1L")),
    "circle-overlap": dict(curve="circle", split=(0.5, 0.5)),
}


def config_from_args(args) -> RunConfig:
    config = RunConfig()
    if getattr(args, "experiment", None):
        config = dataclasses.replace(config,
                                     **_EXPERIMENT_DEFAULTS[args.experiment])
    if args.config:
        config = load_config(args.config, config)
    overrides = {}
    for key in _FIELDS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = _coerce(key, value) if isinstance(value, str) \
                else value
    return dataclasses.replace(config, **overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
        if args.command == "solve":
            cmd_solve(config)
        elif args.command == "ras":
            cmd_ras(config)
        elif args.command == "theory":
            cmd_theory(config, sweep=args.sweep)
        elif args.experiment == "mobius":
            cmd_experiment_mobius(config)
        else:
            cmd_experiment_circle_overlap(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
