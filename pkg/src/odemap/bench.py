"""Convergence experiments: decimated meshes, sup-norm errors and rate fits.

A sweep solves a problem on a dense uniform grid of ``2**dense_exponent``
intervals, conditioning on the ODE only at every ``2**k``-th point, and
measures errors on the whole dense grid.
"""

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .exceptions import ConfigError, OdeMapError, RateFitError
from .priors import build_ioup, build_iwp, build_matern
from .problems import get_problem, reference_on_grid
from .solvers import METHODS, SolverConfig, solve

CSV_HEADER = ("delta", "method", "nu", "err_sup_y", "err_sup_dy", "sigma2_hat", "iterations", "flagged")
NUMERICAL_FLOOR = 1e-11
PRIORS = ("iwp", "ioup", "matern")


@dataclass(frozen=True)
class ConvergenceRow:
    delta: float
    method: str
    nu: int
    err_sup_y: float
    err_sup_dy: float
    sigma2_hat: float
    iterations: int
    flagged: bool


@dataclass(frozen=True)
class ExperimentConfig:
    """One convergence sweep over methods, smoothness orders and decimations.

    ``prior_rate`` sets ``F_nu = -prior_rate * I`` for "ioup" and the rate of
    "matern"; it is ignored for "iwp".
    """

    problem: str
    methods: tuple = METHODS
    nu_list: tuple = (1, 2, 3, 4)
    dense_exponent: int = 12
    decimation_exponents: tuple = tuple(range(4, 12))
    prior: str = "iwp"
    prior_rate: float = 1.0
    problem_params: dict = field(default_factory=dict)
    output: str = None
    ieks_max_iters: int = 50
    ieks_tol: float = 1e-10
    jobs: int = 1

    def __post_init__(self):
        methods = tuple(str(m).upper() for m in self.methods)
        bad = [m for m in methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        if self.prior not in PRIORS:
            raise ConfigError(f"unknown prior {self.prior!r}; choose from {PRIORS}")
        if any(int(nu) < 1 for nu in self.nu_list):
            raise ConfigError("every nu must be at least 1")
        for k in self.decimation_exponents:
            if not 0 <= int(k) <= self.dense_exponent:
                raise ConfigError(f"decimation exponent {k} outside 0..{self.dense_exponent}")
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "nu_list", tuple(int(nu) for nu in self.nu_list))
        object.__setattr__(self, "decimation_exponents", tuple(int(k) for k in self.decimation_exponents))


def make_prior(kind, nu, d, rate=1.0):
    """Prior of the given kind with unit scale (``Gamma = I`` for IWP/IOUP)."""
    if kind == "iwp":
        return build_iwp(nu, d)
    if kind == "ioup":
        return build_ioup(nu, d, -rate * np.eye(d))
    if kind == "matern":
        return build_matern(nu, rate, 1.0, d)
    raise ConfigError(f"unknown prior {kind!r}; choose from {PRIORS}")


def fill_distance(points, domain):
    """Largest distance from any ``t`` in ``domain`` to the nearest point.

    Parameters
    ----------
    points : array_like
        Sorted conditioning points.
    domain : (float, float)
    """
    pts = np.asarray(points, dtype=float).reshape(-1)
    if pts.size == 0:
        raise ConfigError("fill distance of an empty mesh is undefined")
    lo, hi = domain
    inner = np.max(np.diff(pts)) / 2.0 if pts.size > 1 else 0.0
    return float(max(pts[0] - lo, hi - pts[-1], inner))


def build_decimated_mesh(horizon, dense_exponent, decimation_exponent):
    """Dense uniform mesh and the mask of every ``2**decimation_exponent``-th point.

    The mask includes ``t0`` (conditioned through the initial update) and
    ``T``; its fill distance is ``horizon * 2**(decimation_exponent - dense_exponent - 1)``.
    """
    if decimation_exponent < 0 or decimation_exponent > dense_exponent:
        raise ConfigError(
            f"decimation 2**{decimation_exponent} does not divide 2**{dense_exponent} intervals")
    mesh = np.linspace(0.0, horizon, 2 ** dense_exponent + 1)
    mask = np.arange(mesh.size) % (2 ** decimation_exponent) == 0
    return mesh, mask


def sup_errors(solution, reference, m):
    """Max over the mesh and coordinates of ``|D^m y_hat - D^m y_ref|``.

    ``reference`` is the ``(y, dy)`` pair from :func:`reference_on_grid`.
    """
    if m not in (0, 1):
        raise ConfigError("sup_errors supports derivative orders 0 and 1")
    ref = np.asarray(reference[m], dtype=float)
    est = solution.derivative(m)
    if ref.size != est.size:
        raise ConfigError(f"reference has {ref.size} values, the solution {est.size}")
    ref = ref.reshape(est.shape)
    return float(np.max(np.abs(est - ref)))


def fit_rate(rows, error="err_sup_y"):
    """Least-squares slope and intercept of ``log(err)`` against ``log(delta)``.

    Flagged rows and errors below the numerical floor (1e-11) are dropped.
    """
    usable = [(r.delta, getattr(r, error)) for r in rows
              if not r.flagged and np.isfinite(getattr(r, error)) and getattr(r, error) >= NUMERICAL_FLOOR]
    if len(usable) < 3:
        raise RateFitError(f"need at least 3 usable rows to fit a rate, got {len(usable)}")
    delta, err = np.array(usable).T
    slope, intercept = np.polyfit(np.log(delta), np.log(err), 1)
    return float(slope), float(intercept)


def _solve_row(config, named, reference, method, nu, k):
    mesh, mask = build_decimated_mesh(named.problem.horizon, config.dense_exponent, k)
    delta = fill_distance(mesh[mask], (0.0, named.problem.horizon))
    prior = make_prior(config.prior, nu, named.problem.d, config.prior_rate)
    solver_config = SolverConfig(method, prior, mesh, mask, ieks_max_iters=config.ieks_max_iters,
                                 ieks_tol=config.ieks_tol)
    try:
        sol = solve(named.problem, solver_config)
    except OdeMapError:
        nan = float("nan")
        return ConvergenceRow(delta, method, nu, nan, nan, nan, 0, True)
    return ConvergenceRow(
        delta=delta, method=method, nu=nu,
        err_sup_y=sup_errors(sol, reference, 0),
        err_sup_dy=sup_errors(sol, reference, 1),
        sigma2_hat=float(sol.sigma2_hat),
        iterations=int(sol.iterations),
        flagged=not sol.converged,
    )


def _solve_row_task(args):
    config, reference, method, nu, k = args
    named = get_problem(config.problem, **config.problem_params)
    return _solve_row(config, named, reference, method, nu, k)


def run_experiment(config):
    """Run a full sweep; rows come back in (method, nu, delta) order.

    Solver failures become flagged rows with NaN errors.  When
    ``config.output`` is set, the rows are also written there as CSV.
    """
    named = get_problem(config.problem, **config.problem_params)
    dense = np.linspace(0.0, named.problem.horizon, 2 ** config.dense_exponent + 1)
    rows = []
    if config.methods and config.nu_list and config.decimation_exponents:
        reference = reference_on_grid(named, dense)
        tasks = [(method, nu, k) for method in config.methods for nu in config.nu_list
                 for k in config.decimation_exponents]
        if config.jobs > 1:
            with ProcessPoolExecutor(max_workers=config.jobs) as pool:
                rows = list(pool.map(_solve_row_task, [(config, reference) + t for t in tasks]))
        else:
            rows = [_solve_row(config, named, reference, *t) for t in tasks]
    order = {m: i for i, m in enumerate(config.methods)}
    rows.sort(key=lambda r: (order[r.method], r.nu, r.delta))
    if config.output:
        write_rows(rows, config.output)
    return rows


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow([_fmt(getattr(row, name)) for name in CSV_HEADER])
    return buf.getvalue()


def write_rows(rows, path):
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(rows_to_csv(rows))


def read_rows(path):
    """Parse a CSV written by :func:`write_rows`."""
    types = {f.name: f.type for f in fields(ConvergenceRow)}
    rows = []
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ConfigError(f"unexpected CSV header {reader.fieldnames}")
        for rec in reader:
            values = {}
            for name in CSV_HEADER:
                raw = rec[name]
                kind = types[name]
                if kind is bool:
                    values[name] = raw == "true"
                elif kind is int:
                    values[name] = int(raw)
                elif kind is str:
                    values[name] = raw
                else:
                    values[name] = float(raw)
            rows.append(ConvergenceRow(**values))
    return rows


def dump_solution(solution, reference, path):
    """Write a plot-ready CSV of the estimate, its 2-sigma bands and the reference.

    One row per mesh point.  Per coordinate ``i`` (1-based) the columns are
    ``y{i}, dy{i}``, the bands ``y{i}_lower, y{i}_upper, dy{i}_lower,
    dy{i}_upper`` (calibrated with ``sigma2_hat``) and ``ref_y{i}, ref_dy{i}``
    (empty when ``reference`` is None).
    """
    d = solution.d
    header = ["t", "updated"]
    for i in range(1, d + 1):
        header += [f"y{i}", f"dy{i}", f"y{i}_lower", f"y{i}_upper", f"dy{i}_lower", f"dy{i}_upper",
                   f"ref_y{i}", f"ref_dy{i}"]
    y, dy = solution.derivative(0), solution.derivative(1)
    y_lo, y_hi = solution.band(0)
    dy_lo, dy_hi = solution.band(1)
    if reference is not None:
        ref_y = np.asarray(reference[0], dtype=float).reshape(solution.mesh.size, d)
        ref_dy = np.asarray(reference[1], dtype=float).reshape(solution.mesh.size, d)
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise ConfigError(f"cannot write {path}: directory does not exist")
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for k, t in enumerate(solution.mesh):
            rec = [_fmt(float(t)), "1" if (k == 0 or solution.update_mask[k]) else "0"]
            for i in range(d):
                rec += [_fmt(v) for v in (y[k, i], dy[k, i], y_lo[k, i], y_hi[k, i], dy_lo[k, i], dy_hi[k, i])]
                if reference is None:
                    rec += ["", ""]
                else:
                    rec += [_fmt(ref_y[k, i]), _fmt(ref_dy[k, i])]
            writer.writerow(rec)
