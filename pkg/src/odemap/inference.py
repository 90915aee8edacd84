"""Gaussian filtering and Rauch-Tung-Striebel smoothing on a mesh.

Updates are noiseless: an observation ``C x = target`` is conditioned on
exactly, optionally with a small ``nugget`` added to the innovation
covariance.  Single-step operations work on :class:`GaussianState`; the
``*_arrays`` functions run whole passes on stacked arrays through the
compiled kernels.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .exceptions import ConfigError, SingularInnovationError, SingularPredictionError
from .linalg import pinv_or_solve
from .priors import selector


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ConfigError(f"covariance shape {cov.shape} does not match mean size {mean.size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class AffineObservation:
    """The linear constraint ``obs_matrix @ x == target``."""

    obs_matrix: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.array(self.obs_matrix, dtype=float))
        z = np.array(self.target, dtype=float).reshape(-1)
        if c.shape[0] != z.size:
            raise ConfigError(f"obs_matrix has {c.shape[0]} rows but target has {z.size} entries")
        object.__setattr__(self, "obs_matrix", c)
        object.__setattr__(self, "target", z)


@dataclass(frozen=True)
class UpdateDiagnostics:
    """Innovation statistics of one update.

    ``mahalanobis`` is ``residual^T S^{-1} residual``; computed here when
    not supplied.
    """

    residual: np.ndarray
    innovation_cov: np.ndarray
    mahalanobis: Optional[float] = None

    def __post_init__(self):
        r = np.array(self.residual, dtype=float).reshape(-1)
        s = np.atleast_2d(np.array(self.innovation_cov, dtype=float))
        object.__setattr__(self, "residual", r)
        object.__setattr__(self, "innovation_cov", s)
        if self.mahalanobis is None:
            object.__setattr__(self, "mahalanobis", float(r @ pinv_or_solve(s, r)))

    @property
    def log_det_s(self):
        sign, logdet = np.linalg.slogdet(self.innovation_cov)
        return logdet if sign > 0 else -np.inf


@dataclass(frozen=True)
class SmoothedTrajectory:
    means: np.ndarray
    covs: np.ndarray
    gains: np.ndarray

    def __len__(self):
        return self.means.shape[0]

    def __getitem__(self, i):
        return GaussianState(self.means[i], self.covs[i])

    @property
    def states(self):
        return [self[i] for i in range(len(self))]


def _check_square(m, n, what):
    if m.shape != (n, n):
        raise ConfigError(f"{what} must be {n}x{n}, got {m.shape}")


def predict(state, trans):
    """Propagate a state through one transition: ``(A m, A P A^T + Q)``."""
    n = state.mean.size
    _check_square(trans.a, n, "transition matrix")
    _check_square(trans.q, n, "process noise")
    mean, cov = _kernels.predict_step(state.mean, state.cov, np.ascontiguousarray(trans.a),
                                      np.ascontiguousarray(trans.q))
    return GaussianState(mean, cov)


def update(state, obs, *, joseph=False, nugget=0.0, index=None):
    """Condition ``state`` on ``obs.obs_matrix @ x == obs.target``.

    Returns the updated state and its :class:`UpdateDiagnostics`.  Raises
    :class:`SingularInnovationError` when the innovation covariance has a
    condition number above 1e14 (or is not positive).
    """
    c = obs.obs_matrix
    if c.shape[1] != state.mean.size:
        raise ConfigError(f"obs_matrix has {c.shape[1]} columns, state has {state.mean.size}")
    mean, cov, resid, s, quad, ok = _kernels.update_step(
        state.mean, np.ascontiguousarray(state.cov), np.ascontiguousarray(c), obs.target,
        bool(joseph), float(nugget))
    if not ok:
        raise SingularInnovationError(index if index is not None else "?",
                                      f"cond(S) > {_kernels.MAX_INNOVATION_COND:g}")
    return GaussianState(mean, cov), UpdateDiagnostics(resid, s, float(quad))


def initial_observation(nu, d, y0, dy0):
    """Stacked constraint ``E_0^T x = y0``, ``E_1^T x = dy0``."""
    c = np.vstack([selector(0, nu, d).T, selector(1, nu, d).T])
    target = np.concatenate([np.reshape(y0, -1), np.reshape(dy0, -1)]).astype(float)
    if target.size != 2 * d:
        raise ConfigError(f"initial values must both have {d} entries")
    return AffineObservation(c, target)


def init_update(state, y0, dy0, **kwargs):
    """Condition the prior at ``t0`` on the initial value and derivative."""
    y0 = np.reshape(y0, -1)
    d = y0.size
    nu = state.mean.size // d - 1
    updated, _ = update(state, initial_observation(nu, d, y0, dy0), index=0, **kwargs)
    return updated


def smooth(filter_states, transitions):
    """Backward smoothing pass over filter output.

    Parameters
    ----------
    filter_states : sequence of (GaussianState, GaussianState)
        ``(predicted, updated)`` per mesh point.  Where no update happened,
        ``updated`` is the predicted state.
    transitions : sequence of TransitionModel
        ``transitions[n]`` leads from point ``n - 1`` to ``n``; entry 0 is
        ignored and may be ``None``.
    """
    if len(filter_states) != len(transitions):
        raise ConfigError("filter_states and transitions must be aligned")
    if len(filter_states) == 0:
        raise ConfigError("nothing to smooth")
    n = filter_states[0][1].mean.size
    pm = np.array([p.mean for p, _ in filter_states])
    pc = np.array([p.cov for p, _ in filter_states])
    fm = np.array([u.mean for _, u in filter_states])
    fc = np.array([u.cov for _, u in filter_states])
    a = np.empty((len(transitions), n, n))
    a[0] = np.eye(n)
    for i, trans in enumerate(transitions[1:], start=1):
        a[i] = trans.a
    return smooth_arrays(a, fm, fc, pm, pc)


def smooth_arrays(a, fm, fc, pm, pc):
    sm, sc, gains, fail = _kernels.rts_pass(a, fm, fc, pm, pc)
    if fail >= 0:
        raise SingularPredictionError(int(fail), "smoother gain needs the predicted covariance inverse")
    return SmoothedTrajectory(sm, sc, gains)


@dataclass
class FilterOutput:
    """Stacked result of one forward pass."""

    pred_means: np.ndarray
    pred_covs: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    residuals: np.ndarray
    innovation_covs: np.ndarray
    mahalanobis: np.ndarray


def filter_arrays(mean0, cov0, a, q, obs, targets, mask, *, joseph=False, nugget=0.0):
    """Run the compiled forward pass with precomputed observations."""
    pm, pc, fm, fc, resid, s, quad, fail = _kernels.filter_pass(
        mean0, cov0, a, q, obs, targets, np.asarray(mask, dtype=np.bool_), bool(joseph), float(nugget))
    if fail >= 0:
        raise SingularInnovationError(int(fail), f"cond(S) > {_kernels.MAX_INNOVATION_COND:g}")
    return FilterOutput(pm, pc, fm, fc, resid, s, quad)
