"""Benchmark initial value problems and their reference solutions.

Each right-hand side is a kernel ``rhs(t, y, params)`` so the reference
integrator can run compiled; :class:`ODEProblem` gets thin closures around
it.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _kernels
from ._jit import is_compiled, jit, py_func
from .exceptions import ConfigError, ReferenceFailureError
from .solvers import ODEProblem

REFERENCE_TOL = 1e-10


@dataclass(frozen=True)
class NamedProblem:
    """A test problem with optional closed-form solution.

    ``reference(t)`` and ``reference_derivative(t)`` accept scalars (giving
    shape ``(d,)``) or arrays of times (giving ``(len(t), d)``).
    """

    label: str
    problem: ODEProblem
    reference: Optional[Callable] = None
    reference_derivative: Optional[Callable] = None
    rhs_kernel: Optional[Callable] = None
    params: Optional[np.ndarray] = None


def _vectorize(fn, d):
    def wrapped(t):
        t_arr = np.asarray(t, dtype=float)
        out = np.asarray(fn(np.atleast_1d(t_arr)), dtype=float).reshape(-1, d)
        return out[0] if t_arr.ndim == 0 else out
    return wrapped


def _named(label, rhs, jac, params, y0, horizon, reference=None, reference_derivative=None):
    params = np.asarray(params, dtype=float)
    params.setflags(write=False)
    y0 = np.asarray(y0, dtype=float)
    d = y0.size

    def vector_field(t, y):
        return rhs(float(t), np.asarray(y, dtype=float), params)

    def jacobian(t, y):
        return jac(float(t), np.asarray(y, dtype=float), params)

    problem = ODEProblem(vector_field, y0, horizon, jacobian, name=label)
    return NamedProblem(
        label=label,
        problem=problem,
        reference=None if reference is None else _vectorize(reference, d),
        reference_derivative=None if reference_derivative is None else _vectorize(reference_derivative, d),
        rhs_kernel=rhs,
        params=params,
    )


@jit
def _logistic_rhs(t, y, p):
    return p[0] * y * (1.0 - y)


@jit
def _logistic_jac(t, y, p):
    out = np.empty((1, 1))
    out[0, 0] = p[0] * (1.0 - 2.0 * y[0])
    return out


def logistic(rate=10.0, y0=0.15, horizon=1.0):
    """``y' = rate * y (1 - y)``; defaults ``rate = 10``, ``y0 = 0.15``, ``T = 1``."""
    if not 0.0 < y0 < 1.0:
        raise ConfigError("logistic y0 must lie in (0, 1)")
    odds = 1.0 / y0 - 1.0

    def reference(t):
        return 1.0 / (1.0 + odds * np.exp(-rate * t))

    def reference_derivative(t):
        y = reference(t)
        return rate * y * (1.0 - y)

    return _named("logistic", _logistic_rhs, _logistic_jac, [rate], [y0], horizon,
                  reference, reference_derivative)


@jit
def _riccati_rhs(t, y, p):
    return -0.5 * p[0] * y ** 3


@jit
def _riccati_jac(t, y, p):
    out = np.empty((1, 1))
    out[0, 0] = -1.5 * p[0] * y[0] ** 2
    return out


def riccati(c=1.0, y0=1.0, horizon=1.0):
    """``y' = -c y^3 / 2`` with ``y(t) = (c t + 1 / y0^2)^(-1/2)``."""
    if not c > 0:
        raise ConfigError("riccati coefficient c must be positive")
    if y0 == 0:
        raise ConfigError("riccati y0 must be non-zero")
    inv_sq = 1.0 / y0 ** 2
    sign = np.sign(y0)

    def reference(t):
        return sign / np.sqrt(c * t + inv_sq)

    def reference_derivative(t):
        return -0.5 * c * sign * (c * t + inv_sq) ** -1.5

    return _named("riccati", _riccati_rhs, _riccati_jac, [c], [y0], horizon,
                  reference, reference_derivative)


@jit
def _fhn_rhs(t, y, p):
    a, b, c = p[0], p[1], p[2]
    out = np.empty(2)
    out[0] = c * (y[0] - y[0] ** 3 / 3.0 + y[1])
    out[1] = -(y[0] - a + b * y[1]) / c
    return out


@jit
def _fhn_jac(t, y, p):
    b, c = p[1], p[2]
    out = np.empty((2, 2))
    out[0, 0] = c * (1.0 - y[0] ** 2)
    out[0, 1] = c
    out[1, 0] = -1.0 / c
    out[1, 1] = -b / c
    return out


def fitzhugh_nagumo(a=0.2, b=0.2, c=2.0, y0=(-1.0, 1.0), horizon=2.5):
    """FitzHugh-Nagumo model; no closed-form solution."""
    if c == 0:
        raise ConfigError("FitzHugh-Nagumo parameter c must be non-zero")
    return _named("fhn", _fhn_rhs, _fhn_jac, [a, b, c], y0, horizon)


@jit
def _nonsmooth_rhs(t, y, p):
    kappa, b, lam = p[0], p[1], p[2]
    out = np.empty(y.shape[0])
    for i in range(y.shape[0]):
        out[i] = kappa if y[i] <= b else kappa + lam * (y[i] - b)
    return out


@jit
def _nonsmooth_jac(t, y, p):
    # one-sided from the left at the kink
    b, lam = p[1], p[2]
    out = np.zeros((y.shape[0], y.shape[0]))
    for i in range(y.shape[0]):
        out[i, i] = 0.0 if y[i] <= b else lam
    return out


def nonsmooth(kappa=None, b=1.0, lam=-5.0, y0=0.0, horizon=1.0):
    """Field ``kappa`` below ``b`` and ``kappa + lam (y - b)`` above it.

    ``kappa`` defaults to ``2 (b - y0)``, putting the kink at ``t = 1/2``.
    """
    if kappa is None:
        kappa = 2.0 * (b - y0)
    if not kappa > 0:
        raise ConfigError("nonsmooth kappa must be positive")
    if y0 > b:
        raise ConfigError("nonsmooth y0 must not exceed b")
    tau = (b - y0) / kappa

    def reference(t):
        late = t - tau
        if lam == 0:
            after = b + kappa * late
        else:
            after = b + np.expm1(lam * np.maximum(late, 0.0)) * kappa / lam
        return np.where(t <= tau, y0 + kappa * t, after)

    def reference_derivative(t):
        return np.where(t <= tau, kappa, kappa * np.exp(lam * np.maximum(t - tau, 0.0)))

    return _named("nonsmooth", _nonsmooth_rhs, _nonsmooth_jac, [kappa, b, lam], [y0], horizon,
                  reference, reference_derivative)


def kink_time(named):
    """Time at which the non-smooth solution reaches the kink."""
    kappa, b, _ = named.params
    return (b - named.problem.y0[0]) / kappa


PROBLEMS = {
    "logistic": logistic,
    "riccati": riccati,
    "fhn": fitzhugh_nagumo,
    "nonsmooth": nonsmooth,
}


def get_problem(label, **params):
    try:
        factory = PROBLEMS[label]
    except KeyError:
        raise ConfigError(f"unknown problem {label!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**params)


def _integrate(named, grid, substeps):
    if named.rhs_kernel is not None:
        rhs, params = named.rhs_kernel, named.params
        step = _kernels.rk4_fixed if is_compiled(rhs) else py_func(_kernels.rk4_fixed)
    else:
        def rhs(t, y, _):
            return np.asarray(named.problem.vector_field(t, y), dtype=float)
        params = np.zeros(0)
        step = py_func(_kernels.rk4_fixed)
    out = np.empty((grid.size, named.problem.d))
    y = named.problem.y0.copy()
    out[0] = y
    for k in range(grid.size - 1):
        h = (grid[k + 1] - grid[k]) / substeps[k]
        y = step(rhs, params, grid[k], y, h, int(substeps[k]), int(substeps[k]))[-1]
        out[k + 1] = y
    return out


def reference_on_grid(named, grid, refine=64, tol=REFERENCE_TOL):
    """Reference values and derivatives of the solution on ``grid``.

    Closed forms are used when the problem has one.  Otherwise the problem
    is integrated with fixed-step RK4, ``refine`` substeps per grid interval
    (more where needed to keep the inner step below ``T / 2**14``), and the
    result must agree with a run at twice the resolution to ``tol`` in max
    norm.

    Returns
    -------
    y, dy : ndarray, shape (len(grid), d)
    """
    grid = np.asarray(grid, dtype=float).reshape(-1)
    horizon = named.problem.horizon
    if grid.size == 0 or grid[0] != 0.0 or np.any(np.diff(grid) <= 0) or grid[-1] > horizon * (1 + 1e-12):
        raise ConfigError("reference grid must be increasing, start at 0 and stay within [0, T]")
    if named.reference is not None:
        y = named.reference(grid)
        if named.reference_derivative is not None:
            dy = named.reference_derivative(grid)
        else:
            dy = np.array([named.problem.vector_field(t, yi) for t, yi in zip(grid, y)])
        return y, dy

    h_max = horizon * 2.0 ** -14
    substeps = np.maximum(refine, np.ceil(np.diff(grid) / h_max)).astype(int)
    y = _integrate(named, grid, substeps)
    check = _integrate(named, grid, 2 * substeps)
    gap = float(np.max(np.abs(y - check))) if grid.size > 1 else 0.0
    if not gap <= tol:
        raise ReferenceFailureError(
            f"reference for {named.label} changed by {gap:.3g} under 2x refinement (target {tol:g})")
    dy = np.array([named.problem.vector_field(t, yi) for t, yi in zip(grid, check)])
    return check, dy
