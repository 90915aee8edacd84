"""EKS0, EKS1 and IEKS solvers for ``Dy = f(t, y)``.

All three condition a Gauss-Markov prior on ``Dy(t_n) = f(t_n, y(t_n))`` at
the update points of a mesh, after pinning ``y(t0) = y0`` and
``Dy(t0) = f(t0, y0)``.  They differ in how ``f`` is replaced by an affine
model: EKS0 uses a constant at the predicted mean, EKS1 a first-order Taylor
expansion at the predicted mean, and IEKS re-expands at the smoothed mean of
the previous pass (Gauss-Newton on the MAP problem), starting from EKS1.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .exceptions import (
    ConfigError,
    SingularInnovationError,
    SingularMatrixError,
    SingularPredictionError,
)
from .inference import (
    AffineObservation,
    FilterOutput,
    GaussianState,
    UpdateDiagnostics,
    filter_arrays,
    initial_observation,
    smooth_arrays,
    update,
)
from .priors import StateSpaceModel, discretize, selector

METHODS = ("EKS0", "EKS1", "IEKS")


@dataclass(frozen=True)
class ODEProblem:
    """Initial value problem ``Dy = f(t, y)``, ``y(0) = y0`` on ``[0, horizon]``.

    ``vector_field(t, y)`` returns a length-``d`` array and
    ``jacobian(t, y)`` the ``d x d`` matrix of partial derivatives in ``y``.
    """

    vector_field: Callable
    y0: np.ndarray
    horizon: float
    jacobian: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        y0 = np.array(self.y0, dtype=float).reshape(-1)
        if y0.size == 0:
            raise ConfigError("y0 must not be empty")
        if not self.horizon > 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def d(self):
        return self.y0.size


@dataclass(frozen=True)
class SolverConfig:
    """Settings of one solve.

    ``update_mask[k]`` selects the mesh points where the ODE information is
    conditioned on; the others are prediction-only.  Entry 0 is always
    cleared because ``t0`` receives the initial-value update instead.
    ``ieks_max_iters`` counts filter-smoother passes including the EKS1
    initialisation.
    """

    method: str
    prior: StateSpaceModel
    mesh: np.ndarray
    update_mask: Optional[np.ndarray] = None
    ieks_max_iters: int = 50
    ieks_tol: float = 1e-10
    joseph_form: bool = False
    nugget: float = 0.0

    def __post_init__(self):
        method = str(self.method).upper()
        if method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        mesh = np.array(self.mesh, dtype=float).reshape(-1)
        if mesh.size < 1 or mesh[0] != 0.0:
            raise ConfigError("mesh must start at 0")
        if np.any(np.diff(mesh) <= 0):
            raise ConfigError("mesh must be strictly increasing")
        if self.update_mask is None:
            mask = np.ones(mesh.size, dtype=bool)
        else:
            mask = np.array(self.update_mask, dtype=bool).reshape(-1)
            if mask.size != mesh.size:
                raise ConfigError("update_mask must have one entry per mesh point")
        mask[0] = False
        if self.ieks_max_iters < 1:
            raise ConfigError("ieks_max_iters must be at least 1")
        if self.nugget < 0:
            raise ConfigError("nugget must be non-negative")
        mesh.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "method", method)
        object.__setattr__(self, "mesh", mesh)
        object.__setattr__(self, "update_mask", mask)

    @classmethod
    def uniform(cls, method, prior, horizon, step, **kwargs):
        """Uniform mesh of spacing ``step`` with every point updated."""
        count = horizon / step
        if abs(count - round(count)) > 1e-9 * max(1.0, count):
            raise ConfigError(f"step {step} does not divide the horizon {horizon}")
        mesh = np.linspace(0.0, horizon, int(round(count)) + 1)
        return cls(method, prior, mesh, **kwargs)

    @property
    def n_updates(self):
        return int(np.count_nonzero(self.update_mask))


@dataclass(frozen=True)
class Solution:
    """Smoothed moments on the mesh plus calibration and cost metadata.

    ``covs`` are the uncalibrated covariances (unit prior scale); multiply
    by ``sigma2_hat`` for calibrated uncertainty, as :meth:`std` does.
    """

    method: str
    nu: int
    d: int
    mesh: np.ndarray
    update_mask: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    sigma2_hat: float
    map_objective: float
    iterations: int
    f_evals: int
    jf_evals: int
    converged: bool = True
    objective_history: tuple = ()
    innovations: list = field(default_factory=list, repr=False)

    def derivative(self, m):
        """Estimate of ``D^m y`` at every mesh point, shape ``(N + 1, d)``."""
        return self.means[:, m * self.d:(m + 1) * self.d]

    def std(self, m, calibrated=True):
        idx = np.arange(m * self.d, (m + 1) * self.d)
        var = self.covs[:, idx, idx]
        if calibrated:
            var = self.sigma2_hat * var
        return np.sqrt(np.clip(var, 0.0, None))

    def band(self, m, width=2.0):
        """Credible band ``mean -/+ width * std`` for derivative order ``m``."""
        mean = self.derivative(m)
        half = width * self.std(m)
        return mean - half, mean + half


class _CountingProblem:
    """Wraps an ODEProblem and counts evaluations of f and its Jacobian."""

    def __init__(self, problem):
        self.problem = problem
        self.d = problem.d
        self.y0 = problem.y0
        self.f_evals = 0
        self.jf_evals = 0

    def vector_field(self, t, y):
        self.f_evals += 1
        return np.asarray(self.problem.vector_field(t, y), dtype=float).reshape(self.d)

    def jacobian(self, t, y):
        if self.problem.jacobian is None:
            raise ConfigError("this method needs the Jacobian of the vector field")
        self.jf_evals += 1
        return np.asarray(self.problem.jacobian(t, y), dtype=float).reshape(self.d, self.d)


@lru_cache(maxsize=64)
def _selectors_t(nu, d):
    e0t = np.ascontiguousarray(selector(0, nu, d).T)
    e1t = np.ascontiguousarray(selector(1, nu, d).T)
    e0t.setflags(write=False)
    e1t.setflags(write=False)
    return e0t, e1t


def _field(problem, t, y):
    d = problem.d
    return np.asarray(problem.vector_field(t, y), dtype=float).reshape(d)


def linearize_eks0(problem, t, mean):
    """Zeroth-order model: ``E_1^T x = f(t, E_0^T mean)``."""
    d = problem.d
    nu = mean.size // d - 1
    e0t, e1t = _selectors_t(nu, d)
    y = e0t @ mean
    return AffineObservation(e1t, _field(problem, t, y))


def linearize_eks1(problem, t, mean):
    """First-order model at ``y = E_0^T mean``.

    ``(E_1^T - J E_0^T) x = f(t, y) - J y`` with ``J`` the Jacobian at ``y``.
    """
    if problem.jacobian is None:
        raise ConfigError("EKS1/IEKS need the Jacobian of the vector field")
    d = problem.d
    nu = mean.size // d - 1
    e0t, e1t = _selectors_t(nu, d)
    y = e0t @ mean
    fy = _field(problem, t, y)
    jac = np.asarray(problem.jacobian(t, y), dtype=float).reshape(d, d)
    return AffineObservation(e1t - jac @ e0t, fy - jac @ y)


def transition_stack(prior, mesh):
    """Stacked ``A(h_k)``, ``Q(h_k)`` for a mesh, indexed by the point led into.

    Each distinct step is discretised once.
    """
    mesh = np.asarray(mesh, dtype=float)
    n = prior.state_dim
    a = np.empty((mesh.size, n, n))
    q = np.empty((mesh.size, n, n))
    a[0] = np.eye(n)
    q[0] = 0.0
    if mesh.size > 1:
        steps, inverse = np.unique(np.diff(mesh), return_inverse=True)
        trans = [discretize(prior, h) for h in steps]
        a[1:] = np.array([t.a for t in trans])[inverse]
        q[1:] = np.array([t.q for t in trans])[inverse]
    return a, q


def _online_pass(problem, linearize, a, q, state0, mesh, mask, joseph, nugget):
    """Forward pass linearising at each predicted mean (EKS0/EKS1)."""
    npts, n = a.shape[0], state0.mean.size
    k = problem.d
    pm = np.empty((npts, n))
    pc = np.empty((npts, n, n))
    fm = np.empty((npts, n))
    fc = np.empty((npts, n, n))
    resid = np.zeros((npts, k))
    s_all = np.zeros((npts, k, k))
    quad = np.zeros(npts)
    m, p = state0.mean, state0.cov
    pm[0], pc[0], fm[0], fc[0] = m, p, m, p
    for i in range(1, npts):
        m, p = _kernels.predict_step(m, p, a[i], q[i])
        pm[i], pc[i] = m, p
        if mask[i]:
            obs = linearize(problem, mesh[i], m)
            m, p, r, s, qi, ok = _kernels.update_step(
                m, p, np.ascontiguousarray(obs.obs_matrix), obs.target, joseph, nugget)
            if not ok:
                raise SingularInnovationError(i, f"cond(S) > {_kernels.MAX_INNOVATION_COND:g}")
            resid[i], s_all[i], quad[i] = r, s, qi
        fm[i], fc[i] = m, p
    return FilterOutput(pm, pc, fm, fc, resid, s_all, quad)


def _relinearize(problem, mesh, means, mask, nu):
    """EKS1-type observations at given means for every update point."""
    npts, n = means.shape
    d = problem.d
    obs = np.zeros((npts, d, n))
    targets = np.zeros((npts, d))
    for i in np.flatnonzero(mask):
        lin = linearize_eks1(problem, mesh[i], means[i])
        obs[i] = lin.obs_matrix
        targets[i] = lin.target
    return obs, targets


def _innovation_objective(diag0, out):
    """MAP objective of the current affine model at its smoothed mean.

    For linear constraints the constrained minimum of the prior energy equals
    half the sum of normalised squared innovations.
    """
    return 0.5 * (diag0.mahalanobis + float(np.sum(out.mahalanobis)))


def solve(problem, config):
    """Solve ``problem`` on ``config.mesh`` with ``config.method``.

    Returns a :class:`Solution`.  Singular innovations or predictions raise
    the corresponding errors annotated with the method and iteration.  IEKS
    that does not meet its tolerance within ``ieks_max_iters`` passes returns
    the pass with the lowest objective and ``converged=False``.
    """
    prior = config.prior
    if prior.d != problem.d:
        raise ConfigError(f"prior dimension {prior.d} != problem dimension {problem.d}")
    method = config.method
    if method != "EKS0" and problem.jacobian is None:
        raise ConfigError(f"{method} needs the Jacobian of the vector field")
    mesh, mask = config.mesh, config.update_mask
    nu, d, n = prior.nu, prior.d, prior.state_dim
    joseph, nugget = bool(config.joseph_form), float(config.nugget)
    counted = _CountingProblem(problem)

    a, q = transition_stack(prior, mesh)
    f0 = counted.vector_field(mesh[0], problem.y0)
    prior_state = GaussianState(np.zeros(n), prior.init_cov)
    try:
        state0, diag0 = update(prior_state, initial_observation(nu, d, problem.y0, f0),
                               joseph=joseph, nugget=nugget, index=0)
    except SingularInnovationError as err:
        raise err.annotate(f"{method}, initial update") from None

    linearize = linearize_eks0 if method == "EKS0" else linearize_eks1
    try:
        out = _online_pass(counted, linearize, a, q, state0, mesh, mask, joseph, nugget)
        traj = smooth_arrays(a, out.means, out.covs, out.pred_means, out.pred_covs)
    except (SingularInnovationError, SingularPredictionError) as err:
        raise err.annotate(f"{method}, iteration 1") from None
    value = _innovation_objective(diag0, out)
    history = [value]
    iterations = 1
    converged = True

    if method == "IEKS":
        converged = False
        best = (value, out, traj)
        while iterations < config.ieks_max_iters:
            obs, targets = _relinearize(counted, mesh, traj.means, mask, nu)
            try:
                out_new = filter_arrays(state0.mean, state0.cov, a, q, obs, targets, mask,
                                        joseph=joseph, nugget=nugget)
                traj_new = smooth_arrays(a, out_new.means, out_new.covs,
                                         out_new.pred_means, out_new.pred_covs)
            except (SingularInnovationError, SingularPredictionError) as err:
                raise err.annotate(f"IEKS, iteration {iterations + 1}") from None
            iterations += 1
            new_value = _innovation_objective(diag0, out_new)
            history.append(new_value)
            if new_value < best[0]:
                best = (new_value, out_new, traj_new)
            done = abs(new_value - value) <= config.ieks_tol * max(1.0, abs(value))
            value, out, traj = new_value, out_new, traj_new
            if done:
                converged = True
                break
        if not converged:
            value, out, traj = best

    idx = np.flatnonzero(mask)
    innovations = [diag0] + [UpdateDiagnostics(out.residuals[i], out.innovation_covs[i],
                                               float(out.mahalanobis[i])) for i in idx]
    sigma2 = calibrate_sigma2(innovations, d, idx.size)
    try:
        objective = _map_objective_arrays(traj.means, a, q, prior.init_cov)
    except SingularMatrixError:
        objective = float("nan")
    return Solution(
        method=method, nu=nu, d=d, mesh=mesh, update_mask=mask,
        means=traj.means, covs=traj.covs, sigma2_hat=sigma2, map_objective=objective,
        iterations=iterations, f_evals=counted.f_evals, jf_evals=counted.jf_evals,
        converged=converged, objective_history=tuple(history), innovations=innovations,
    )


def _map_objective_arrays(x, a, q, init_cov):
    value, fail = _kernels.prior_energy(np.ascontiguousarray(x, dtype=float), a, q,
                                        np.ascontiguousarray(init_cov, dtype=float))
    if fail >= 0:
        raise SingularMatrixError(f"singular covariance in the prior energy at mesh index {fail}")
    return 0.5 * value


def map_objective(trajectory, transitions, init_cov):
    """Negative log prior density of a stacked trajectory, up to a constant.

    ``0.5 * x0^T S0^{-1} x0 + 0.5 * sum_n r_n^T Q(h_n)^{-1} r_n`` with
    ``r_n = x_n - A(h_n) x_{n-1}``.

    Parameters
    ----------
    trajectory : array_like, shape (N + 1, n)
    transitions : sequence of TransitionModel
        ``transitions[k]`` leads into point ``k``; entry 0 is ignored.
    init_cov : array_like, shape (n, n)
    """
    x = np.atleast_2d(np.asarray(trajectory, dtype=float))
    npts, n = x.shape
    if len(transitions) != npts:
        raise ConfigError("trajectory and transitions must be aligned")
    a = np.empty((npts, n, n))
    q = np.empty((npts, n, n))
    a[0], q[0] = np.eye(n), np.eye(n)
    for i, trans in enumerate(transitions[1:], start=1):
        a[i], q[i] = trans.a, trans.q
    return _map_objective_arrays(x, a, q, init_cov)


def constraint_residuals(solution, problem):
    """``z(t, x) = E_1^T x - f(t, E_0^T x)`` at every update point, shape ``(N, d)``."""
    idx = np.flatnonzero(solution.update_mask)
    y = solution.derivative(0)
    dy = solution.derivative(1)
    out = np.empty((idx.size, solution.d))
    for row, i in enumerate(idx):
        out[row] = dy[i] - _field(problem, solution.mesh[i], y[i])
    return out


def calibrate_sigma2(diagnostics, d, n_updates):
    """Quasi-maximum-likelihood scale of the prior covariance.

    Sum of the innovation Mahalanobis terms over the initial update (2d
    dimensional) and ``n_updates`` ODE updates, divided by ``d (N + 2)``.
    The filter must have been run with the unscaled prior.
    """
    diagnostics = list(diagnostics)
    if len(diagnostics) != n_updates + 1:
        raise ConfigError(f"expected {n_updates + 1} diagnostics, got {len(diagnostics)}")
    total = 0.0
    for diag in diagnostics:
        total += diag.mahalanobis
    return total / (d * (n_updates + 2))
