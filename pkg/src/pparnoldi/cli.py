"""Command-line front end.

Verbs: ``solve``, ``table1``, ``sweep-degree``, ``sweep-maxerr`` and
``spectrum-map``.  Settings come from an optional flat ``key = value`` file,
then from ``--set key=value`` overrides and the dedicated flags.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .experiments import (ExperimentSpec, SpecError, make_matrix, maxerr_sweep,
                          run_experiment, sweep_degree, write_metadata,
                          write_spectrum_map)
from .gmres_poly import add_stability_roots, build_gmres_poly, damped_start
from .solver import SolveConfig
from .theory import table1_report, table1_rows

SPEC_KEYS = {"matrix", "trials", "seed_base", "outdir", "tag", "plots"}
MATRIX_PREFIX = "matrix."


def _coerce(text: str, like):
    text = text.strip()
    if text.lower() in ("none", ""):
        return None
    if isinstance(like, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise SpecError(f"not a boolean: {text!r}")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    if isinstance(like, tuple) or (like is None and "," in text):
        return tuple(int(x) for x in text.split(","))
    return text


def _number(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"line {n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


SOLVE_DEFAULTS = {f.name: f.default for f in dataclasses.fields(SolveConfig)
                  if f.default is not dataclasses.MISSING}
SOLVE_TYPES = {"atol": 0.0, "double": (1, 1), "stability_cap": 0}
ARRAY_KEYS = {"poly_start", "poly_start2", "start_vector", "reference"}


def build_spec(settings: dict) -> ExperimentSpec:
    spec = ExperimentSpec()
    solve, mparams = {}, {}
    for key, raw in settings.items():
        if key in SPEC_KEYS:
            like = getattr(spec, key)
            setattr(spec, key, _coerce(raw, like) if like is not None else raw)
        elif key.startswith(MATRIX_PREFIX):
            mparams[key[len(MATRIX_PREFIX):]] = _number(raw)
        elif key in ARRAY_KEYS:
            raise SpecError(f"{key} cannot be set from the command line")
        elif key in SOLVE_DEFAULTS:
            like = SOLVE_TYPES.get(key, SOLVE_DEFAULTS[key])
            solve[key] = _coerce(raw, like)
        else:
            raise SpecError(f"unknown setting {key!r}")
    spec.solve = solve
    spec.matrix_params = mparams
    return spec


FLAG_KEYS = ("matrix", "trials", "seed_base", "outdir", "tag", "d", "m", "k", "nev",
             "rtol", "atol", "restart", "damping", "stability", "double", "max_cycles")


def _add_common(p):
    p.add_argument("--config", type=Path, help="flat key = value settings file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one setting (repeatable)")
    p.add_argument("--matrix")
    p.add_argument("--trials")
    p.add_argument("--seed-base", dest="seed_base")
    p.add_argument("--outdir")
    p.add_argument("--tag")
    for name in ("d", "m", "k", "nev", "rtol", "atol", "restart", "damping", "stability",
                 "double", "max_cycles"):
        p.add_argument(f"--{name.replace('_', '-')}", dest=name)
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")


def _settings(args) -> dict:
    s = {}
    if args.config is not None:
        s.update(parse_config_text(args.config.read_text()))
    for item in args.overrides:
        if "=" not in item:
            raise SpecError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        s[k.strip()] = v.strip()
    for key in FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            s[key] = val
    if args.no_plots:
        s["plots"] = "0"
    return s


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def cmd_solve(args) -> int:
    spec = build_spec(_settings(args))
    rep = run_experiment(spec)
    s = rep.summary
    print(f"{spec.trials} trial(s): mean cycles {s['cycles']:.2f}, mean mvps {s['mvps']:.1f}, "
          f"mean cost {s['cost']:.1f}, converged {s['converged']:.2f}")
    for f in rep.files:
        print(f"wrote {f}")
    if args.strict and s["converged"] < 1.0:
        return 2
    return 0


def cmd_table1(args) -> int:
    out = Path(args.outdir or "results")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "table1.csv"
    text = table1_report(path)
    print(text, end="")
    if not args.no_plots:
        from .plotting import plot_table1
        print(f"wrote {plot_table1(table1_rows(), out / 'table1.png')}")
    print(f"wrote {path}")
    return 0


def cmd_sweep_degree(args) -> int:
    spec = build_spec(_settings(args))
    rows = sweep_degree(spec, _int_list(args.degrees))
    for r in rows:
        print(f"d={r['degree']}: cycles {r['cycles']:.2f}, mvps {r['mvps']:.1f}, "
              f"cost {r['cost']:.1f}")
    if args.strict and any(r["all_converged"] < 1.0 for r in rows):
        return 2
    return 0


def cmd_sweep_maxerr(args) -> int:
    spec = build_spec(_settings(args))
    stabs = tuple(args.stability_modes.split(","))
    rows = maxerr_sweep(spec, _int_list(args.degrees), stabs)
    for r in rows:
        print(f"d={r['degree']} stability={r['stability']}: MaxErr {r['max_err']:.2e}, "
              f"MaxPof {r['max_pof']:.2e}")
    return 0


def cmd_spectrum_map(args) -> int:
    spec = build_spec(_settings(args))
    spec.validate()
    cfg = spec.config(spec.seed_base)
    if cfg.d < 1:
        raise SpecError("spectrum-map needs d >= 1")
    tm = make_matrix(spec.matrix, **spec.matrix_params)
    if tm.eigenvalues is None:
        raise SpecError(f"the spectrum of {spec.matrix!r} is not known")
    rng = np.random.default_rng(spec.seed_base)
    b = rng.standard_normal(tm.op.dim)
    if cfg.damping == "forced":
        b = damped_start(tm.op, b, cfg.damping_alpha, cfg.damping_power)
    p = build_gmres_poly(tm.op, b, cfg.d)
    if cfg.stability == "pof-auto":
        p = add_stability_roots(p, max_copies=cfg.stability_cap)
    path = write_spectrum_map(p, tm.eigenvalues, spec.out_path("spectrum_map.csv"))
    write_metadata(spec)
    print(f"wrote {path}")
    if spec.plots:
        from .plotting import plot_spectrum_map
        print(f"wrote {plot_spectrum_map(p, tm.eigenvalues, spec.out_path('spectrum_map.png'), cfg.nev, cfg.k)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pparnoldi",
                                 description="Polynomial preconditioned Arnoldi experiments")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("solve", help="seeded trials on one matrix")
    _add_common(p)
    p.add_argument("--strict", action="store_true", help="exit 2 unless every trial converges")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("table1", help="convergence-rate table for the 100-point spectrum")
    p.add_argument("--outdir")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("sweep-degree", help="average cost per polynomial degree")
    _add_common(p)
    p.add_argument("--degrees", default="0,5,10,15,20,25")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_sweep_degree)

    p = sub.add_parser("sweep-maxerr", help="attainable accuracy per degree")
    _add_common(p)
    p.add_argument("--degrees", default="5,10,15,20,25,30,35,40")
    p.add_argument("--stability-modes", default="off,pof-auto")
    p.set_defaults(func=cmd_sweep_maxerr)

    p = sub.add_parser("spectrum-map", help="pi(lambda) for a matrix with known spectrum")
    _add_common(p)
    p.set_defaults(func=cmd_spectrum_map)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
