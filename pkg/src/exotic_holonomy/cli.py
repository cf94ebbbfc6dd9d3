"""Command-line front end: figure data as CSV, reports, and the acceptance suite.

Exit codes: 0 success, 1 validation failure, 2 usage or IO error,
3 numerical-reliability failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import validation
from .complex_plane import ComplexAnalysisError, mercator_map
from .csvio import __version__, write_csv
from .dynamics import DynamicsError, Schedule, evolve, fidelity_csv, gaps, window_csv, window_row
from .flow import SIGMA_CASES, FlowError, TrackingError, classify_sigma_flows, sigma_flows_csv, track
from .holonomy import (
    FINITE_DIFFERENCE,
    HolonomyError,
    analytic_field,
    cross_validate,
    gauge_potential,
    holonomy_matrix,
)
from .models import (
    COS_HALF,
    ENVELOPES,
    FAMILIES,
    SIGMA_GENERAL,
    THREE_LEVEL,
    TWO_LEVEL,
    ModelError,
    ModelSpec,
    analytic_eigensystem,
    default_spec,
)
from .numerics import NumericsError

EXIT_OK, EXIT_VALIDATION, EXIT_USAGE, EXIT_NUMERICS = 0, 1, 2, 3
COMMANDS = ("eigs", "holonomy", "dynamics", "map", "flows", "validate")
DEFAULT_GRID = {"eigs": 2000, "holonomy": 4096, "dynamics": 10000, "map": 96, "flows": 2048, "validate": 0}
DEFAULT_TAUS = (10.0, 50.0, 1000.0)


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: ModelSpec
    theta_min: float = -2 * math.pi
    theta_max: float = 6 * math.pi
    grid: int = 0
    taus: tuple[float, ...] = DEFAULT_TAUS
    eps: float = 0.0
    out: str = "out"
    jobs: int = 1
    only: str = ""
    plot_script: bool = False

    def to_text(self) -> str:
        """Canonical text form; ``from_text`` inverts it exactly."""
        lines = [f"command={self.command}"]
        lines += self.model.to_text().splitlines()
        lines += [
            f"theta_min={self.theta_min!r}",
            f"theta_max={self.theta_max!r}",
            f"grid={self.grid}",
            "taus=" + ",".join(repr(t) for t in self.taus),
            f"eps={self.eps!r}",
            f"out={self.out}",
            f"jobs={self.jobs}",
            f"only={self.only}",
            f"plot_script={int(self.plot_script)}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        raw = {}
        for line in text.splitlines():
            if line.strip():
                key, _, value = line.partition("=")
                raw[key.strip()] = value.strip()
        model_keys = ("family", "N", "v", "envelope", "c1", "c2", "c3", "c5", "w", "z")
        model = ModelSpec.from_text("\n".join(f"{k}={raw[k]}" for k in model_keys if k in raw))
        return cls(
            command=raw["command"],
            model=model,
            theta_min=float(raw["theta_min"]),
            theta_max=float(raw["theta_max"]),
            grid=int(raw["grid"]),
            taus=tuple(float(t) for t in raw["taus"].split(",") if t),
            eps=float(raw["eps"]),
            out=raw["out"],
            jobs=int(raw["jobs"]),
            only=raw["only"],
            plot_script=bool(int(raw["plot_script"])),
        )


def normalize_family(name: str) -> str:
    fam = name.strip().lower().replace("-", "_")
    if fam not in FAMILIES:
        raise UsageError(f"unknown family {name!r}; choose from {', '.join(f.replace('_', '-') for f in FAMILIES)}")
    return fam


def parse_taus(text: str) -> tuple[float, ...]:
    try:
        taus = tuple(float(t) for t in text.replace(" ", ",").split(",") if t)
    except ValueError:
        raise UsageError(f"cannot parse tau list {text!r}") from None
    if any(not (t > 0 and math.isfinite(t)) for t in taus):
        raise UsageError("every tau must be positive and finite")
    return taus


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--family", default="two-level", help="two-level, three-level, sigma-general or n-level-rank-one")
    common.add_argument("--v", type=float, default=None, help="coupling v (family default if omitted)")
    for k in (1, 2, 3, 5):
        common.add_argument(f"--c{k}", type=float, default=None, help=f"Sigma_{k} coefficient (sigma-general)")
    common.add_argument("--envelope", default=COS_HALF, choices=ENVELOPES)
    common.add_argument("--theta-min", type=float, default=-2 * math.pi)
    common.add_argument("--theta-max", type=float, default=6 * math.pi)
    common.add_argument("--grid", type=int, default=None, help="samples, cells, steps or map resolution, per command")
    common.add_argument("--tau", default=",".join(f"{t:g}" for t in DEFAULT_TAUS), help="comma-separated sweep times")
    common.add_argument("--eps", type=float, default=0.0, help="strength of the gap-opening coupling")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--only", default="", help="validate: criterion numbers or name fragments, comma separated")
    common.add_argument("--plot-script", action="store_true", help="also write a matplotlib script for the CSVs")

    parser = argparse.ArgumentParser(prog="exotic-holonomy", description="Exotic eigenvalue and eigenvector holonomy toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "eigs": "eigenvalues and eigenvectors on a theta grid",
        "holonomy": "gauge potential, holonomy matrix and cross-validation",
        "dynamics": "adiabatic sweeps and the exchange window",
        "map": "exceptional points and branch cuts on the Mercator strip",
        "flows": "eigenvalue flow table of the Sigma family",
        "validate": "run the acceptance criteria",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    family = normalize_family(args.family)
    base = default_spec(family)
    changes = {}
    if args.v is not None:
        changes["v"] = args.v
    if args.envelope != base.envelope:
        changes["envelope"] = args.envelope
    for k in (1, 2, 3, 5):
        value = getattr(args, f"c{k}")
        if value is not None:
            if family != SIGMA_GENERAL:
                raise UsageError(f"--c{k} applies only to sigma-general")
            changes[f"c{k}"] = value
    try:
        model = replace(base, **changes)
    except ModelError as exc:
        raise UsageError(str(exc)) from None
    grid = args.grid if args.grid is not None else DEFAULT_GRID[args.command]
    if grid < 0:
        raise UsageError("--grid must be non-negative")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    return RunConfig(
        command=args.command,
        model=model,
        theta_min=args.theta_min,
        theta_max=args.theta_max,
        grid=grid,
        taus=parse_taus(args.tau),
        eps=args.eps,
        out=args.out,
        jobs=args.jobs,
        only=args.only,
        plot_script=args.plot_script,
    )


def _meta(cfg: RunConfig, **extra) -> dict:
    meta = {"config": cfg.to_text()}
    meta.update(extra)
    return meta


def _out(cfg: RunConfig, name: str) -> Path:
    return Path(cfg.out) / name


# --- commands ----------------------------------------------------------------------


def cmd_eigs(cfg: RunConfig) -> int:
    spec = cfg.model
    n = spec.n
    cols_e = ["theta"] + [f"E{i + 1}" for i in range(n)]
    cols_v = ["theta"] + [f"{part}_V{i + 1}{j + 1}" for j in range(n) for i in range(n) for part in ("re", "im")]
    if cfg.theta_max <= cfg.theta_min or cfg.grid == 0:
        theta, values, vectors, source = np.empty(0), np.empty((0, n)), np.empty((0, n, n)), "empty range"
    elif spec.family in (TWO_LEVEL, THREE_LEVEL):
        theta = np.linspace(cfg.theta_min, cfg.theta_max, cfg.grid + 1)
        es = analytic_eigensystem(spec, theta)
        values, vectors, source = es.values, es.vectors, "closed-form continuous branches"
    else:
        path = track(spec, cfg.theta_min, cfg.theta_max, max(cfg.grid, 16))
        theta, values, vectors, source = path.theta, path.values, path.vectors, "tracked branches"
        if not path.ok:
            print(f"warning: {np.count_nonzero(~path.matched)} unmatched tracking steps", file=sys.stderr)
    rows_v = [[t] + [x for j in range(n) for i in range(n) for x in (vec[i, j].real, vec[i, j].imag)] for t, vec in zip(theta, vectors)]
    meta = _meta(cfg, source=source)
    e_path = write_csv(_out(cfg, "eigenvalues.csv"), cols_e, [[t, *e] for t, e in zip(theta, values)], meta)
    v_path = write_csv(_out(cfg, "eigenvectors.csv"), cols_v, rows_v, meta)
    print(f"wrote {e_path} and {v_path} ({theta.size} rows, {source})")
    if cfg.plot_script:
        _plot_script(cfg, "plot_eigs.py", PLOT_EIGS)
    return EXIT_OK


def cmd_holonomy(cfg: RunConfig) -> int:
    spec = cfg.model
    samples = max(cfg.grid, 16)
    if spec.family in (TWO_LEVEL, THREE_LEVEL):
        fld = analytic_field(spec, 0.0, 2 * math.pi, samples)
    else:
        fld = gauge_potential(track(spec, 0.0, 2 * math.pi, samples), FINITE_DIFFERENCE)
    hol = holonomy_matrix(fld)
    fld.to_csv(_out(cfg, "gauge_field.csv"), _meta(cfg))
    n = spec.n
    rows = [[i + 1, j + 1, hol.m[i, j].real, hol.m[i, j].imag] for i in range(n) for j in range(n)]
    write_csv(_out(cfg, "holonomy.csv"), ["n", "m", "re_M", "im_M"], rows, _meta(cfg, provenance=fld.provenance))
    print(f"holonomy matrix ({fld.provenance} gauge potential, {samples} cells)")
    print(hol.table())
    cv = cross_validate(spec, samples=samples)
    print(cv.report())
    if cfg.plot_script:
        _plot_script(cfg, "plot_holonomy.py", PLOT_HOLONOMY)
    if not hol.reliable:
        print(f"unreliable classification: residual {hol.residual:.3e} > 0.05", file=sys.stderr)
        return EXIT_NUMERICS
    return EXIT_OK


def _dynamics_run(args):
    spec, eps, tau, steps = args
    return evolve(spec, eps, Schedule(tau), steps=steps)


def cmd_dynamics(cfg: RunConfig) -> int:
    if not cfg.taus:
        raise UsageError("empty tau list")
    spec = cfg.model
    steps = max(cfg.grid, 100)
    tasks = [(spec, cfg.eps, tau, steps) for tau in cfg.taus]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            runs = list(pool.map(_dynamics_run, tasks))
    else:
        runs = [_dynamics_run(t) for t in tasks]
    g = gaps(spec, cfg.eps)
    rows = [window_row(run, g) for run in runs]
    meta = _meta(cfg, delta=repr(g.delta), D=repr(g.d))
    window_csv(rows, _out(cfg, "window.csv"), meta)
    for tau, run in zip(cfg.taus, runs):
        fidelity_csv(run, _out(cfg, f"fidelity_tau{tau:g}.csv"), meta)
    print(f"Delta = {g.delta:.6g}, D = {g.d:.6g}")
    print(f"{'tau':>12} {'exchange':>10} {'following':>10} {'LZ est.':>10}")
    for r in rows:
        print(f"{r.tau:12g} {r.exchange_fidelity:10.6f} {r.following_fidelity:10.6f} {r.diabatic_estimate:10.6f}")
    if cfg.plot_script:
        _plot_script(cfg, "plot_dynamics.py", PLOT_DYNAMICS)
    return EXIT_OK


def cmd_map(cfg: RunConfig) -> int:
    mm = mercator_map(cfg.model, resolution=max(cfg.grid, 8))
    mm.to_csv(_out(cfg, "map_points.csv"), _out(cfg, "map_cuts.csv"), _meta(cfg))
    print(f"{'Re theta':>10} {'Im theta':>10} {'pair':>6} {'kind':<22} residue")
    for ep in mm.points:
        z = ep.folded()
        res = "-" if ep.residue is None else f"{ep.residue.real:+.6f}{ep.residue.imag:+.6f}i"
        print(f"{z.real:10.6f} {z.imag:10.6f} {ep.pair[0]:>3},{ep.pair[1]:<2} {ep.kind:<22} {res}")
    print(f"{len(mm.cuts)} branch-cut polylines")
    if cfg.plot_script:
        _plot_script(cfg, "plot_map.py", PLOT_MAP)
    return EXIT_OK


def cmd_flows(cfg: RunConfig) -> int:
    v = cfg.model.v
    cases = list(SIGMA_CASES.items())
    if cfg.model.family == SIGMA_GENERAL and (cfg.model.c1, cfg.model.c2, cfg.model.c3, cfg.model.c5) not in SIGMA_CASES.values():
        m = cfg.model
        cases.append(("requested", (m.c1, m.c2, m.c3, m.c5)))
    steps = max(cfg.grid, 16)
    grids = [[c] for _, c in cases]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            parts = list(pool.map(classify_sigma_flows, grids, [v] * len(grids), [steps] * len(grids)))
    else:
        parts = [classify_sigma_flows(g, v, steps) for g in grids]
    rows = [p[0] for p in parts]
    sigma_flows_csv(rows, _out(cfg, "sigma_flows.csv"), _meta(cfg))
    print(f"{'case':<20} {'c1':>5} {'c2':>5} {'c3':>5} {'c5':>5}  flow     cycles")
    for (name, _), r in zip(cases, rows):
        flag = "  (flagged)" if r.flagged else ""
        print(f"{name:<20} {r.c[0]:5g} {r.c[1]:5g} {r.c[2]:5g} {r.c[3]:5g}  {r.flow.image():<8} {r.flow.cycle_notation()}{flag}")
    return EXIT_NUMERICS if any(r.flagged for r in rows) else EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    chosen = validation.select(cfg.only)
    if not chosen:
        raise UsageError(f"--only {cfg.only!r} selects no criterion")
    results = validation.run(cfg.only, progress=lambda r: print(r.line(), flush=True))
    text = validation.summary(results)
    out = _out(cfg, "validation.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text + "\n")
    print(text)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


HANDLERS = {
    "eigs": cmd_eigs,
    "holonomy": cmd_holonomy,
    "dynamics": cmd_dynamics,
    "map": cmd_map,
    "flows": cmd_flows,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    try:
        cfg = config_from_args(args)
        return HANDLERS[cfg.command](cfg)
    except (UsageError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericsError, TrackingError, FlowError, HolonomyError, DynamicsError, ComplexAnalysisError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICS


# --- optional plot scripts ---------------------------------------------------------------


def _plot_script(cfg: RunConfig, name: str, body: str) -> Path:
    path = _out(cfg, name)
    path.write_text(PLOT_HEADER + body)
    return path


PLOT_HEADER = '''"""Plot the CSVs in this directory (needs matplotlib)."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

HERE = Path(__file__).parent


def load(name):
    lines = [l for l in (HERE / name).read_text().splitlines() if not l.startswith("#")]
    rows = list(csv.reader(lines))
    cols = rows[0]
    return {c: [float(r[i]) if r[i] not in ("",) else float("nan") for r in rows[1:]] for i, c in enumerate(cols) if c != "tag"}

'''

PLOT_EIGS = '''
d = load("eigenvalues.csv")
for key in d:
    if key.startswith("E"):
        plt.plot(d["theta"], d[key], label=key)
plt.xlabel("theta")
plt.ylabel("E")
plt.legend()
plt.savefig(HERE / "eigenvalues.png", dpi=150)
'''

PLOT_HOLONOMY = '''
d = load("gauge_field.csv")
for key in d:
    if key != "theta":
        plt.plot(d["theta"], d[key], label=key)
plt.xlabel("theta")
plt.legend()
plt.savefig(HERE / "gauge_field.png", dpi=150)
'''

PLOT_DYNAMICS = '''
d = load("window.csv")
plt.semilogx(d["tau"], d["exchange_fidelity"], "o-", label="exchange")
plt.semilogx(d["tau"], d["following_fidelity"], "s-", label="following")
plt.xlabel("tau")
plt.ylabel("fidelity")
plt.legend()
plt.savefig(HERE / "window.png", dpi=150)
'''

PLOT_MAP = '''
import math
cuts = load("map_cuts.csv")
curves = {}
for cid, x, y in zip(cuts["curve"], cuts["re_theta"], cuts["gd_im_theta"]):
    curves.setdefault(cid, ([], []))
    curves[cid][0].append(x)
    curves[cid][1].append(y)
for xs, ys in curves.values():
    plt.plot(xs, ys, "k-", lw=1)
lines = [l for l in (HERE / "map_points.csv").read_text().splitlines() if not l.startswith("#")]
for row in list(csv.reader(lines))[1:]:
    x, y, tag = float(row[0]), float(row[1]), row[2]
    plt.plot(x, y, "kx" if tag == "pole_of_A" else "ko", mfc="none", ms=9)
plt.xlim(0, 2 * math.pi)
plt.ylim(-math.pi / 2, math.pi / 2)
plt.xlabel("Re theta")
plt.ylabel("gd(Im theta)")
plt.savefig(HERE / "map.png", dpi=150)
'''


if __name__ == "__main__":
    sys.exit(main())
