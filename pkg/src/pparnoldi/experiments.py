"""Experiment orchestration: named test matrices, seeded trials and CSV output."""
from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cost import cost_estimate
from .gmres_poly import compute_pof, dump_poly_csv
from .operators import (LinearOperator, convection_diffusion_eigenvalues, csr_operator,
                        make_convection_diffusion, make_diagonal, read_matrix_market)
from .solver import EigResult, SolveConfig, max_pof, solve
from .theory import figure1_spectrum, spectrum_map

TRIAL_COLUMNS = ("trial", "seed", "degree", "cycles", "mvps", "vops", "dots", "cost",
                 "correct", "max_err", "converged")
MAXERR_COLUMNS = ("degree", "stability", "effective_degree", "cycles", "max_err", "max_pof")
SWEEP_COLUMNS = ("degree", "trials", "cycles", "mvps", "vops", "dots", "cost", "correct",
                 "all_converged")


class SpecError(ValueError):
    pass


@dataclass
class TestMatrix:
    op: LinearOperator
    eigenvalues: np.ndarray | None
    label: str

    def reference(self, nev: int) -> np.ndarray | None:
        if self.eigenvalues is None:
            return None
        lam = np.asarray(self.eigenvalues)
        return lam[np.argsort(np.abs(lam), kind="stable")][:nev]


def example7_diagonal() -> np.ndarray:
    """0.1..9.9 by 0.1, then 10..9909, then one outlier at 20000."""
    return np.concatenate([np.arange(1, 100) * 0.1, np.arange(10.0, 9910.0), [20000.0]])


def _diag(values, label):
    values = np.asarray(values, dtype=float)
    return TestMatrix(make_diagonal(values), np.sort(values), label)


def _diag_range(n=1000, lo=1.0, hi=None):
    n = int(n)
    hi = float(n) if hi is None else float(hi)
    return _diag(np.linspace(float(lo), hi, n), f"diag-range(n={n},lo={lo},hi={hi})")


def _convdiff(grid=50):
    grid = int(grid)
    op = csr_operator(make_convection_diffusion(grid))
    try:
        lam = convection_diffusion_eigenvalues(grid)
    except ValueError:
        lam = None
    return TestMatrix(op, lam, f"convdiff(grid={grid})")


def _mm(path):
    mat = read_matrix_market(path)
    return TestMatrix(csr_operator(mat), None, f"mm({Path(path).name})")


GENERATORS = {
    "diag-range": _diag_range,
    "example4": lambda: _diag(np.arange(1.0, 1001.0), "example4"),
    "example6": lambda: _diag(np.arange(1.0, 10001.0), "example6"),
    "example7": lambda: _diag(example7_diagonal(), "example7"),
    "figure1": lambda: _diag(figure1_spectrum(), "figure1"),
    "convdiff": _convdiff,
    "mm": _mm,
}


def make_matrix(name: str, **params) -> TestMatrix:
    """Build a named test matrix; each call gets a fresh cost counter."""
    if name not in GENERATORS:
        raise SpecError(f"unknown matrix {name!r}; choose from {sorted(GENERATORS)}")
    try:
        return GENERATORS[name](**params)
    except TypeError as exc:
        raise SpecError(f"bad parameters for matrix {name!r}: {exc}") from exc


@dataclass
class ExperimentSpec:
    matrix: str = "example4"
    matrix_params: dict = field(default_factory=dict)
    solve: dict = field(default_factory=dict)
    trials: int = 1
    seed_base: int = 0
    outdir: str = "results"
    tag: str = "run"
    plots: bool = True

    def validate(self) -> None:
        if self.trials < 1:
            raise SpecError("trials must be >= 1")
        if self.matrix not in GENERATORS:
            raise SpecError(f"unknown matrix {self.matrix!r}")
        names = {f.name for f in dataclasses.fields(SolveConfig)}
        bad = set(self.solve) - names
        if bad:
            raise SpecError(f"unknown solver settings: {sorted(bad)}")
        self.config(0).validate()

    def config(self, seed: int, **extra) -> SolveConfig:
        return SolveConfig(**{**self.solve, **extra, "seed": seed})

    def out_path(self, suffix: str) -> Path:
        out = Path(self.outdir)
        out.mkdir(parents=True, exist_ok=True)
        return out / f"{self.tag}_{suffix}"


@dataclass
class ExperimentReport:
    rows: list[dict]
    summary: dict
    results: list[EigResult]
    files: list[Path]


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x)) if np.isfinite(x) else str(float(x))
    return "" if x is None else str(x)


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
    return path


def trial_row(t: int, seed: int, res: EigResult) -> dict:
    c = res.cost
    return {
        "trial": t, "seed": seed, "degree": res.composite_degree, "cycles": res.cycles,
        "mvps": c.mvps, "vops": c.vops, "dots": c.dots, "cost": cost_estimate(c),
        "correct": res.n_correct, "max_err": float(np.nanmax(res.residuals)),
        "converged": res.all_converged,
    }


def summarize(rows: list[dict]) -> dict:
    out = {"trial": "mean", "seed": ""}
    for key in ("degree", "cycles", "mvps", "vops", "dots", "cost", "max_err"):
        out[key] = float(np.mean([r[key] for r in rows]))
    corr = [r["correct"] for r in rows if r["correct"] is not None]
    out["correct"] = float(np.mean(corr)) if corr else None
    out["converged"] = float(np.mean([bool(r["converged"]) for r in rows]))
    return out


def write_metadata(spec: ExperimentSpec, extra: dict | None = None) -> Path:
    """Provenance file kept apart from the CSV data so the CSVs stay reproducible."""
    path = spec.out_path("meta.txt")
    cfg = dataclasses.asdict(spec.config(spec.seed_base))
    lines = [
        f"timestamp = {_dt.datetime.now().isoformat(timespec='seconds')}",
        f"python = {platform.python_version()}",
        f"numpy = {np.__version__}",
        f"matrix = {spec.matrix}",
        f"matrix_params = {spec.matrix_params}",
        f"trials = {spec.trials}",
        f"seed_base = {spec.seed_base}",
    ]
    for k, v in cfg.items():
        if isinstance(v, np.ndarray):
            v = f"<array len {v.size}>"
        lines.append(f"solve.{k} = {v}")
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    path.write_text("\n".join(lines) + "\n")
    return path


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Run ``spec.trials`` seeded solves and write the report files.

    Trial ``t`` uses seed ``seed_base + t``; inside a solve the polynomial and
    Arnoldi start vectors come from independent streams of that seed.
    """
    spec.validate()
    rows, results, files = [], [], []
    nev = spec.config(0).nev
    for t in range(spec.trials):
        seed = spec.seed_base + t
        tm = make_matrix(spec.matrix, **spec.matrix_params)
        extra = {}
        if "reference" not in spec.solve and tm.eigenvalues is not None:
            extra["reference"] = tm.reference(nev)
        res = solve(tm.op, spec.config(seed, **extra))
        results.append(res)
        rows.append(trial_row(t, seed, res))
    summary = summarize(rows)
    files.append(write_csv(spec.out_path("trials.csv"), TRIAL_COLUMNS, rows + [summary]))
    first = results[0]
    if first.poly is not None:
        path = spec.out_path("poly.csv")
        dump_poly_csv(first.poly, path, compute_pof(first.poly))
        files.append(path)
        if tm.eigenvalues is not None and first.inner_poly is None:
            files.append(write_spectrum_map(first.poly, tm.eigenvalues,
                                            spec.out_path("spectrum_map.csv")))
    files.append(write_run_summary(spec, rows, summary))
    files.append(write_metadata(spec))
    if spec.plots:
        from . import plotting
        files.extend(plotting.render_experiment(spec, results, tm))
    return ExperimentReport(rows, summary, results, files)


def write_spectrum_map(poly, eigenvalues, path) -> Path:
    data = spectrum_map(poly, eigenvalues)
    rows = [dict(zip(("index", "re_lambda", "im_lambda", "re_pi", "im_pi"),
                     (int(r[0]), *map(float, r[1:])))) for r in data]
    return write_csv(path, ("index", "re_lambda", "im_lambda", "re_pi", "im_pi"), rows)


def write_run_summary(spec: ExperimentSpec, rows, summary) -> Path:
    path = spec.out_path("summary.txt")
    n_conv = sum(bool(r["converged"]) for r in rows)
    lines = [
        f"matrix: {spec.matrix} {spec.matrix_params}",
        f"trials: {spec.trials} (seeds {spec.seed_base}..{spec.seed_base + spec.trials - 1})",
        f"converged: {n_conv}/{len(rows)}",
        f"mean cycles: {summary['cycles']:.2f}",
        f"mean mvps: {summary['mvps']:.1f}",
        f"mean vops: {summary['vops']:.1f}",
        f"mean cost: {summary['cost']:.1f}",
        "mvps include polynomial construction, norm estimate and true-residual checks",
    ]
    if summary["correct"] is not None:
        lines.append(f"mean correct: {summary['correct']:.2f}")
        per = ", ".join(str(r["correct"]) for r in rows)
        lines.append(f"correct per trial: {per}")
    path.write_text("\n".join(lines) + "\n")
    return path


def sweep_degree(spec: ExperimentSpec, degrees) -> list[dict]:
    """Average cost rows for each polynomial degree (d = 0 is plain Arnoldi)."""
    spec.validate()
    out = []
    for d in degrees:
        sub = dataclasses.replace(spec, solve={**spec.solve, "d": int(d)},
                                  tag=f"{spec.tag}_d{d}", plots=False)
        rep = run_experiment(sub)
        s = rep.summary
        out.append({"degree": d, "trials": spec.trials, "cycles": s["cycles"],
                    "mvps": s["mvps"], "vops": s["vops"], "dots": s["dots"],
                    "cost": s["cost"], "correct": s["correct"],
                    "all_converged": s["converged"]})
    write_csv(spec.out_path("sweep.csv"), SWEEP_COLUMNS, out)
    if spec.plots:
        from . import plotting
        plotting.plot_degree_sweep(out, spec.out_path("sweep.png"))
    return out


STAGNATION_WINDOW = 10


def maxerr_run(tm: TestMatrix, cfg: SolveConfig) -> EigResult:
    """Run until the largest wanted residual stops improving."""
    cfg = dataclasses.replace(cfg, rtol=0.0, atol=0.0, full_residuals=True,
                              stagnation_window=cfg.stagnation_window or STAGNATION_WINDOW)
    return solve(tm.op, cfg)


def maxerr_sweep(spec: ExperimentSpec, degrees, stabilities=("off", "pof-auto")) -> list[dict]:
    """MaxErr and MaxPof per degree for each stability mode (first seed only)."""
    spec.validate()
    rows = []
    for st in stabilities:
        for d in degrees:
            tm = make_matrix(spec.matrix, **spec.matrix_params)
            cfg = spec.config(spec.seed_base, d=int(d), stability=st)
            res = maxerr_run(tm, cfg)
            rows.append({"degree": d, "stability": st,
                         "effective_degree": res.composite_degree, "cycles": res.cycles,
                         "max_err": res.max_err, "max_pof": max_pof(res.poly)})
    write_csv(spec.out_path("maxerr.csv"), MAXERR_COLUMNS, rows)
    write_metadata(spec, {"stagnation_window": STAGNATION_WINDOW})
    if spec.plots:
        from . import plotting
        plotting.plot_maxerr(rows, spec.out_path("maxerr.png"))
    return rows
