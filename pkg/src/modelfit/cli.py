"""Command-line front end.

Each run executes one subcommand and writes its outputs into ``--out``::

    modelfit fit-ode --data obs.csv --model "a1*x1^2 + a2*x1" --params 2 --start=0,0
    modelfit basin   --data obs.csv --model "a1*x1^2 + a2*x1" --params 2 --box=0:6,0:6
    modelfit fit-pde --grid u.csv --terms u_x,u_xx,u_t,u_tt --start=1,-1,1,1 --max-iters 20000

Vector flags take comma-separated values; write ``--start=-1,2`` (with ``=``)
when the first value is negative.  A JSON ``--config`` file may supply any
option under its long name with underscores; explicit flags override it.

Exit codes: 0 success, 2 configuration or validation error, 3 numeric
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import __version__
from .certify import certify_fit, compare_models, noise_analysis, write_bound_csv
from .data import load_grid, load_time_series, series_stats
from .descent import DescentOptions, FitResult, basin_map, shotgun, steepest_descent, write_trace
from .errors import ConfigError, ModelFitError
from .expr import parse_model
from .integrate import default_step, rk4_solve
from .objective import ConstraintMode, fn_fit_objective, ode_objective, parse_terms, pde_objective

log = logging.getLogger("modelfit")

SUBCOMMANDS = ("fit-fn", "fit-ode", "fit-pde", "certify", "compare", "noise", "basin", "simulate")
NATURAL_EXPORTS = {
    "certify": ["bound"],
    "compare": ["bound"],
    "noise": ["bound"],
    "basin": ["basin"],
    "simulate": ["trajectory"],
}
EXPORTS = ("report", "trace", "basin", "bound", "trajectory")


@dataclass
class RunConfig:
    subcommand: str
    data: Optional[str] = None
    grid: Optional[str] = None
    model: Optional[str] = None
    params: Optional[int] = None
    state_dim: Optional[int] = None
    start: Optional[list] = None
    at: Optional[list] = None
    box: Optional[list] = None
    starts: int = 16
    seed: int = 0
    step: float = 1e-2
    max_iters: int = 100_000
    grad_tol: float = 1e-10
    f_tol: float = 1e-16
    constraint: str = "none"
    terms: str = "u_x,u_xx,u_t,u_tt"
    constant: bool = False
    epsilon: float = 0.0
    model2: Optional[str] = None
    params2: Optional[int] = None
    start2: Optional[list] = None
    at2: Optional[list] = None
    delta: Optional[float] = None
    lipschitz_cap: Optional[float] = None
    objective: str = "ode"
    resolution: int = 16
    h: Optional[float] = None
    samples: int = 1001
    out: str = "."
    threads: int = 1
    export: list = field(default_factory=list)

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        for name in ("data", "grid"):
            path = getattr(self, name)
            if path is not None and not os.path.isfile(path):
                raise ConfigError(f"--{name} file not found: {path}")
        needs_grid = self.subcommand == "fit-pde"
        if needs_grid and self.grid is None:
            raise ConfigError("fit-pde needs --grid")
        if not needs_grid:
            if self.data is None:
                raise ConfigError(f"{self.subcommand} needs --data")
            if self.model is None or self.params is None:
                raise ConfigError(f"{self.subcommand} needs --model and --params")
        if self.subcommand == "compare" and (self.model2 is None or self.params2 is None):
            raise ConfigError("compare needs --model2 and --params2")
        if self.objective not in ("ode", "fn"):
            raise ConfigError("--objective must be ode or fn")
        if self.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if self.samples < 2:
            raise ConfigError("--samples must be >= 2")
        unknown = set(self.export) - set(EXPORTS)
        if unknown:
            raise ConfigError(f"unknown export(s) {sorted(unknown)}; choose from {EXPORTS}")
        ConstraintMode.parse(self.constraint)
        self.descent_options()
        return self

    def descent_options(self, keep_trace=False) -> DescentOptions:
        return DescentOptions(
            step=self.step, grad_tol=self.grad_tol, f_tol=self.f_tol,
            max_iters=self.max_iters, keep_trace=keep_trace,
        )

    def effective_exports(self):
        if self.export:
            return list(self.export)
        return ["report"] + NATURAL_EXPORTS.get(self.subcommand, [])


@dataclass
class RunReport:
    config: dict
    results: dict
    version: str = __version__
    timings: dict = field(default_factory=dict)

    def to_dict(self):
        return _jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        raw = json.loads(text)
        return cls(raw["config"], raw["results"], raw["version"], raw.get("timings", {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# subcommands


class _Run:
    """Holds the state of one run; each ``do_*`` method fills ``results``."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.results = {}
        self.timings = {}
        self.outputs = {}  # export name -> callable(path)
        self.keep_trace = "trace" in cfg.effective_exports()

    def timed(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        self.timings[name] = time.perf_counter() - t0
        return out

    def series(self):
        return load_time_series(self.cfg.data)

    def model(self, text, params, ts):
        state_dim = self.cfg.state_dim or ts.dim
        return parse_model(text, params, state_dim)

    def objective_for(self, model, ts):
        if self.cfg.objective == "fn":
            return fn_fit_objective(model, ts)
        return ode_objective(model, ts)

    def fit(self, obj, start, name="fit", constraint=None):
        cfg = self.cfg
        opts = cfg.descent_options(self.keep_trace)
        if start is not None:
            result = self.timed(name, steepest_descent, obj, start, opts, constraint)
            extra = {}
        elif cfg.box is not None:
            result, runs = self.timed(
                name, shotgun, obj, cfg.box, cfg.starts, opts, cfg.seed, constraint, cfg.threads,
            )
            extra = {"shotgun": {
                "starts": cfg.starts,
                "completed": len(runs),
                "objectives": [r.objective for r in runs],
            }}
        else:
            raise ConfigError("give --start, --at, or --box for a shotgun search")
        if result.trace is not None:
            self.outputs.setdefault("trace", lambda p, r=result: write_trace(r, p))
        return result, extra

    def fixed_or_fit(self, model, ts, at, start, name="fit"):
        """Parameters from --at, otherwise from a fit of the ODE objective."""
        obj = ode_objective(model, ts)
        if at is not None:
            a = np.asarray(at, dtype=float)
            F, g = obj(a)
            return FitResult(a, F, float(np.max(np.abs(g))), 0, "fixed", a.copy()), {}
        return self.fit(obj, start, name)

    def do_fit_fn(self):
        ts = self.series()
        model = self.model(self.cfg.model, self.cfg.params, ts)
        fit, extra = self.fit(fn_fit_objective(model, ts), self.cfg.start)
        self.results.update(model=str(model), fit=fit.to_dict(), **extra)

    def do_fit_ode(self):
        ts = self.series()
        model = self.model(self.cfg.model, self.cfg.params, ts)
        fit, extra = self.fit(ode_objective(model, ts), self.cfg.start)
        self.results.update(model=str(model), fit=fit.to_dict(), stats=asdict(series_stats(ts)), **extra)

    def do_fit_pde(self):
        cfg = self.cfg
        grid = load_grid(cfg.grid)
        terms = parse_terms(cfg.terms)
        constraint = ConstraintMode.parse(cfg.constraint)
        if constraint.kind == "none":
            log.warning(
                "constraint none: a = 0 minimizes the PDE objective globally; "
                "use --constraint unit-norm or pin:<k>=<v> for a well-posed fit"
            )
        obj = pde_objective(terms, grid, constraint, cfg.constant)
        fit, extra = self.fit(obj, cfg.start, constraint=constraint)
        names = [t.label for t in terms] + (["c"] if cfg.constant else [])
        labels = {}
        for term in terms:
            labels.setdefault(f"a{term.coef}", []).append(term.label)
        self.results.update(
            fit=fit.to_dict(), terms=names, coefficients=labels,
            nodes=obj.info["nodes"], constraint=str(constraint), **extra,
        )

    def bound_grid(self, cert):
        return np.linspace(cert.t0, cert.t_end, self.cfg.samples)

    def do_certify(self):
        cfg = self.cfg
        ts = self.series()
        model = self.model(cfg.model, cfg.params, ts)
        fit, extra = self.fixed_or_fit(model, ts, cfg.at, cfg.start)
        cert = self.timed("certify", certify_fit, model, fit.params, ts, m=fit.objective)
        t = self.bound_grid(cert)
        self.outputs["bound"] = lambda p: write_bound_csv(p, t, cert.bound(t))
        self.results.update(
            model=str(model), fit=fit.to_dict(), certificate=cert.to_dict(),
            stats=asdict(series_stats(ts)), **extra,
        )

    def do_compare(self):
        cfg = self.cfg
        ts = self.series()
        f = self.model(cfg.model, cfg.params, ts)
        h = self.model(cfg.model2, cfg.params2, ts)
        fit_f, _ = self.fixed_or_fit(f, ts, cfg.at, cfg.start, "fit")
        fit_h, _ = self.fixed_or_fit(h, ts, cfg.at2, cfg.start2, "fit2")
        cert_f = certify_fit(f, fit_f.params, ts, m=fit_f.objective)
        cert_h = certify_fit(h, fit_h.params, ts, m=fit_h.objective)
        cmp = compare_models(cert_f, cert_h, cfg.delta, cfg.lipschitz_cap)
        t = self.bound_grid(cert_f)
        self.outputs["bound"] = lambda p: write_bound_csv(p, t, cmp(t))
        self.results.update(
            models=[str(f), str(h)], fits=[fit_f.to_dict(), fit_h.to_dict()],
            certificates=[cert_f.to_dict(), cert_h.to_dict()],
            bound_at_end=float(cmp(cert_f.t_end)),
        )
        if cfg.delta is not None:
            self.results["uniform_bound_at_end"] = float(cmp.uniform(cert_f.t_end))

    def do_noise(self):
        cfg = self.cfg
        ts = self.series()
        model = self.model(cfg.model, cfg.params, ts)
        center, extra = self.fixed_or_fit(model, ts, cfg.at, cfg.start, "center")
        env = self.timed("noise", noise_analysis, model, ts, cfg.epsilon, cfg.descent_options(), center=center)
        t = self.bound_grid(env.certificates[1])
        self.outputs["bound"] = lambda p: write_bound_csv(p, t, env(t))
        self.results.update(model=str(model), noise=env.to_dict(), envelope_at_end=float(env(t[-1])), **extra)

    def do_basin(self):
        cfg = self.cfg
        if cfg.box is None:
            raise ConfigError("basin needs --box")
        ts = self.series()
        model = self.model(cfg.model, cfg.params, ts)
        grid = self.timed(
            "basin", basin_map, self.objective_for(model, ts), cfg.box, cfg.resolution,
            cfg.descent_options(), threads=cfg.threads,
        )
        self.outputs["basin"] = grid.write_csv
        self.results.update(
            model=str(model), resolution=cfg.resolution, labels=grid.n_labels,
            cluster_radius=grid.cluster_radius,
            minima=[{"params": m, "count": int(np.sum(grid.labels == k))} for k, m in enumerate(grid.minima)],
        )

    def do_simulate(self):
        cfg = self.cfg
        ts = self.series()
        model = self.model(cfg.model, cfg.params, ts)
        fit, extra = self.fixed_or_fit(model, ts, cfg.at, cfg.start)
        stats = series_stats(ts)
        h = cfg.h or default_step(stats.A)
        traj = self.timed("rk4", rk4_solve, model, fit.params, ts.times[0], ts.values[0], ts.times[-1], h)
        self.outputs["trajectory"] = traj.write_csv
        reached = ts.times <= traj.times[-1]
        diff = traj(ts.times[reached]) - ts.values[reached]
        self.results.update(
            model=str(model), fit=fit.to_dict(), h=h, truncated=traj.truncated,
            t_reached=float(traj.times[-1]),
            data_misfit_l2=float(np.sqrt(np.sum(diff**2))),
            data_misfit_max=float(np.max(np.abs(diff))),
            **extra,
        )


def run(cfg: RunConfig, write=True) -> RunReport:
    """Execute one subcommand; when ``write`` is set, export files into cfg.out."""
    cfg.validate()
    job = _Run(cfg)
    t0 = time.perf_counter()
    getattr(job, "do_" + cfg.subcommand.replace("-", "_"))()
    job.timings["total"] = time.perf_counter() - t0
    report = RunReport(config=asdict(cfg), results=job.results, timings=job.timings)
    if write:
        _write_outputs(cfg, job, report)
    return report


def _write_outputs(cfg, job, report):
    os.makedirs(cfg.out, exist_ok=True)
    writers = dict(job.outputs)
    writers["report"] = lambda p: open(p, "w", encoding="utf-8").write(report.to_json())
    written = []
    try:
        for name in cfg.effective_exports():
            if name not in writers:
                log.warning("export %r is not produced by %s", name, cfg.subcommand)
                continue
            path = os.path.join(cfg.out, f"{name}.{'json' if name == 'report' else 'csv'}")
            written.append(path)
            writers[name](path)
    except BaseException:
        for path in written:
            if os.path.exists(path):
                os.remove(path)
        raise


# ---------------------------------------------------------------------------
# argument parsing


def _floats(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _box(text):
    try:
        return [[float(v) for v in axis.split(":")] for axis in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi,lo:hi,..., got {text!r}") from None


def _names(text):
    return [s.strip() for s in text.split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modelfit", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("inputs")
    g.add_argument("--config", help="JSON file of option defaults")
    g.add_argument("--data", default=S, help="CSV with header t,x1,...,xd")
    g.add_argument("--grid", default=S, help="CSV with header x,t,u")
    g.add_argument("--model", default=S, help="model expression, components separated by ';'")
    g.add_argument("--params", type=int, default=S, help="number of parameters a1..ap")
    g.add_argument("--state-dim", type=int, default=S)
    g = common.add_argument_group("descent")
    g.add_argument("--start", type=_floats, default=S)
    g.add_argument("--at", type=_floats, default=S, help="use these parameters instead of fitting")
    g.add_argument("--box", type=_box, default=S, help="lo:hi per parameter, e.g. 0:6,0:6")
    g.add_argument("--starts", type=int, default=S, help="shotgun start count")
    g.add_argument("--seed", type=int, default=S)
    g.add_argument("--step", type=float, default=S)
    g.add_argument("--max-iters", type=int, default=S)
    g.add_argument("--grad-tol", type=float, default=S)
    g.add_argument("--f-tol", type=float, default=S)
    g.add_argument("--constraint", default=S, help="none | unit-norm | pin:<k>=<v>")
    g.add_argument("--threads", type=int, default=S)
    g = common.add_argument_group("subcommand options")
    g.add_argument("--terms", default=S, help="PDE terms, e.g. u_x,u_xx,u_t,u_tt")
    g.add_argument("--constant", action="store_true", default=S, help="add a constant term c")
    g.add_argument("--epsilon", type=float, default=S)
    g.add_argument("--model2", default=S)
    g.add_argument("--params2", type=int, default=S)
    g.add_argument("--start2", type=_floats, default=S)
    g.add_argument("--at2", type=_floats, default=S)
    g.add_argument("--delta", type=float, default=S)
    g.add_argument("--lipschitz-cap", type=float, default=S)
    g.add_argument("--objective", choices=("ode", "fn"), default=S, help="objective mapped by basin")
    g.add_argument("--resolution", type=int, default=S)
    g.add_argument("--h", type=float, default=S, help="RK4 step")
    g.add_argument("--samples", type=int, default=S, help="points on exported bound curves")
    g = common.add_argument_group("outputs")
    g.add_argument("--out", default=S, help="output directory")
    g.add_argument("--export", type=_names, default=S, help=f"comma list from {','.join(EXPORTS)}")
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def config_from_args(argv=None) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    values = {}
    config_path = args.pop("config", None)
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            values = json.load(fh)
        known = {f.name for f in fields(RunConfig)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    values.update(args)
    return RunConfig(**values)


def main(argv=None) -> int:
    logging.basicConfig(format="modelfit: %(levelname)s: %(message)s", level=logging.WARNING)
    try:
        cfg = config_from_args(argv)
        report = run(cfg)
    except ModelFitError as exc:
        print(f"modelfit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"modelfit: I/O error: {exc}", file=sys.stderr)
        return 4
    except (ValueError, TypeError, IndexError) as exc:
        print(f"modelfit: invalid input: {exc}", file=sys.stderr)
        return 2
    results = report.results
    fit = results.get("fit")
    if fit:
        print(f"params = {fit['params']}  F = {fit['objective']:.6g}  ({fit['exit_reason']}, {fit['iters']} iters)")
    print(f"wrote outputs to {os.path.abspath(cfg.out)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
