"""Gauss-Markov priors and their exact discretisation.

The state stacks the process and its derivatives derivative-major,
``X = (Y, DY, ..., D^nu Y)`` with blocks of size ``d``, so state index
``m * d + i`` holds the ``m``-th derivative of coordinate ``i``.
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .exceptions import ConfigError, NoStationaryDistributionError
from .linalg import is_positive_definite, matrix_exponential, sqrtm_psd, symmetrize

HURWITZ_TOL = -1e-10


def selector(m, nu, d):
    """Block selector ``E_m = e_m (x) I_d`` of shape ``(d * (nu + 1), d)``.

    ``E_m.T @ x`` extracts the ``m``-th derivative block of a stacked state.
    """
    if not 0 <= m <= nu:
        raise ConfigError(f"derivative order {m} outside 0..{nu}")
    e = np.zeros((nu + 1, 1))
    e[m, 0] = 1.0
    return np.kron(e, np.eye(d))


def companion_drift(bottom_blocks, d):
    """Drift with identity super-diagonal blocks and ``bottom_blocks`` in the last block row."""
    nu = len(bottom_blocks) - 1
    n = d * (nu + 1)
    f = np.zeros((n, n))
    for i in range(nu):
        f[i * d:(i + 1) * d, (i + 1) * d:(i + 2) * d] = np.eye(d)
    for j, block in enumerate(bottom_blocks):
        f[nu * d:, j * d:(j + 1) * d] = block
    return f


@dataclass(frozen=True)
class StateSpaceModel:
    """Linear time-invariant SDE prior ``dX = F X dt + E_nu Gamma^{1/2} dW``.

    Attributes
    ----------
    nu : int
        Smoothness order; the state holds derivatives 0..nu.
    d : int
        Dimension of the ODE.
    drift : ndarray, shape (n, n)
        Block-companion drift ``F`` with ``n = d * (nu + 1)``.
    gamma : ndarray, shape (d, d)
        Positive-definite diffusion ``Gamma``.
    init_cov : ndarray, shape (n, n)
        Covariance of ``X(t0)`` before conditioning on the initial values.
    kind : str
        Label only ("iwp", "ioup", "matern" or "custom").
    """

    nu: int
    d: int
    drift: np.ndarray
    gamma: np.ndarray
    init_cov: np.ndarray
    kind: str = "custom"
    diffusion_load: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.nu) != self.nu or self.nu < 1:
            raise ConfigError(f"nu must be a positive integer, got {self.nu}")
        if int(self.d) != self.d or self.d < 1:
            raise ConfigError(f"d must be a positive integer, got {self.d}")
        n = self.state_dim
        drift = np.array(self.drift, dtype=float)
        gamma = np.array(self.gamma, dtype=float).reshape(self.d, self.d)
        init_cov = np.array(self.init_cov, dtype=float)
        if drift.shape != (n, n):
            raise ConfigError(f"drift must be {n}x{n}, got {drift.shape}")
        if init_cov.shape != (n, n):
            raise ConfigError(f"init_cov must be {n}x{n}, got {init_cov.shape}")
        expected = companion_drift([drift[-self.d:, j * self.d:(j + 1) * self.d]
                                    for j in range(self.nu + 1)], self.d)
        if not np.array_equal(drift, expected):
            raise ConfigError("drift is not block-companion")
        if not np.allclose(gamma, gamma.T) or not is_positive_definite(gamma):
            raise ConfigError("gamma must be symmetric positive definite")
        if not np.allclose(init_cov, init_cov.T, rtol=1e-12, atol=0.0):
            raise ConfigError("init_cov must be symmetric")
        init_cov = symmetrize(init_cov)
        if np.linalg.eigvalsh(init_cov)[0] < -1e-12 * max(1.0, np.trace(init_cov)):
            raise ConfigError("init_cov must be positive semi-definite")
        gamma = symmetrize(gamma)
        for name, value in (("drift", drift), ("gamma", gamma), ("init_cov", init_cov)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        load = selector(self.nu, self.nu, self.d) @ sqrtm_psd(gamma)
        load.setflags(write=False)
        object.__setattr__(self, "diffusion_load", load)
        object.__setattr__(self, "nu", int(self.nu))
        object.__setattr__(self, "d", int(self.d))

    @property
    def state_dim(self):
        return self.d * (self.nu + 1)

    @property
    def forcing(self):
        """``E_nu Gamma E_nu^T``, the diffusion term of the Lyapunov equation."""
        e = selector(self.nu, self.nu, self.d)
        return e @ self.gamma @ e.T

    def selector(self, m):
        return selector(m, self.nu, self.d)

    def scaled(self, c):
        """Same prior with ``Gamma`` and ``init_cov`` multiplied by ``c > 0``."""
        if not c > 0:
            raise ConfigError("scale must be positive")
        return StateSpaceModel(self.nu, self.d, self.drift, c * self.gamma,
                               c * self.init_cov, self.kind)


@dataclass(frozen=True)
class TransitionModel:
    """Exact one-step transition ``X(t + h) | X(t) ~ N(a X(t), q)``."""

    step: float
    a: np.ndarray
    q: np.ndarray


def _default_gamma(gamma, d):
    return np.eye(d) if gamma is None else np.atleast_2d(np.asarray(gamma, dtype=float))


def build_iwp(nu, d=1, gamma=None, init_cov=None):
    """``nu``-times integrated Wiener process prior (all ``F_m = 0``).

    ``gamma`` defaults to ``I_d`` and ``init_cov`` to the identity.
    """
    gamma = _default_gamma(gamma, d)
    n = d * (nu + 1)
    init_cov = np.eye(n) if init_cov is None else init_cov
    drift = companion_drift([np.zeros((d, d))] * (nu + 1), d)
    return StateSpaceModel(nu, d, drift, gamma, init_cov, kind="iwp")


def build_ioup(nu, d, f_nu, gamma=None, init_cov=None):
    """``nu``-times integrated Ornstein-Uhlenbeck prior: only ``F_nu = f_nu`` is non-zero."""
    f_nu = np.atleast_2d(np.asarray(f_nu, dtype=float))
    if f_nu.shape != (d, d):
        raise ConfigError(f"f_nu must be {d}x{d}, got {f_nu.shape}")
    gamma = _default_gamma(gamma, d)
    n = d * (nu + 1)
    init_cov = np.eye(n) if init_cov is None else init_cov
    blocks = [np.zeros((d, d))] * nu + [f_nu]
    return StateSpaceModel(nu, d, companion_drift(blocks, d), gamma, init_cov, kind="ioup")


def build_matern(nu, lam, sigma2, d=1):
    """Matern prior of smoothness ``nu`` with rate ``lam`` and magnitude ``sigma2``.

    ``F_m = -C(nu + 1, m) lam**(nu + 1 - m)`` and ``Gamma = 2 sigma2 lam**(2 nu + 1)``;
    the initial covariance is the stationary one.  For ``d > 1`` every
    coordinate gets an independent copy of the scalar process.
    """
    if not lam > 0 or not sigma2 > 0:
        raise ConfigError("Matern rate and magnitude must be positive")
    coeffs = [-comb(nu + 1, m) * lam ** (nu + 1 - m) for m in range(nu + 1)]
    blocks = [c * np.eye(d) for c in coeffs]
    gamma = 2.0 * sigma2 * lam ** (2 * nu + 1) * np.eye(d)
    drift = companion_drift(blocks, d)
    n = d * (nu + 1)
    proto = StateSpaceModel(nu, d, drift, gamma, np.eye(n), kind="matern")
    return StateSpaceModel(nu, d, drift, gamma, stationary_covariance(proto), kind="matern")


def solve_lyapunov(drift, forcing):
    """Solve ``F S + S F^T + forcing = 0`` for a Hurwitz drift ``F``."""
    drift = np.atleast_2d(np.asarray(drift, dtype=float))
    forcing = np.atleast_2d(np.asarray(forcing, dtype=float))
    eig = np.linalg.eigvals(drift)
    if np.max(eig.real) >= HURWITZ_TOL:
        raise NoStationaryDistributionError(
            f"drift has an eigenvalue with real part {np.max(eig.real):.3g}; "
            "the prior has no stationary distribution"
        )
    return symmetrize(solve_continuous_lyapunov(drift, -forcing))


def stationary_covariance(model):
    """Stationary covariance of the prior (forcing ``E_nu Gamma E_nu^T``)."""
    return solve_lyapunov(model.drift, model.forcing)


def discretize(model, h):
    """Transition parameters ``A(h)``, ``Q(h)`` by matrix fraction decomposition.

    Exponentiates ``[[F, E Gamma E^T], [0, -F^T]] h``.  Before that, the block
    matrix is conjugated with ``diag(b**-m)`` on the state half and
    ``diag(b**-(2 nu + 1 - m))`` on the co-state half (``m`` the derivative
    order, ``b = min(h, 1)``).  This makes the companion structure
    step-independent, so entries of ``Q`` as small as ``h**(2 nu + 1)`` keep
    full relative precision.  The similarity is undone exactly afterwards.
    """
    h = float(h)
    if not np.isfinite(h) or h <= 0:
        raise ConfigError(f"step must be positive and finite, got {h}")
    nu, d, n = model.nu, model.d, model.state_dim
    base = min(h, 1.0)
    order = np.repeat(np.arange(nu + 1), d)
    s1 = base ** (-order.astype(float))
    s2 = base ** (-(2 * nu + 1 - order).astype(float))
    scale = np.concatenate([s1, s2])

    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = model.drift
    block[:n, n:] = model.forcing
    block[n:, n:] = -model.drift.T
    scaled = block * h * scale[None, :] / scale[:, None]
    xi = matrix_exponential(scaled)
    e11 = xi[:n, :n]
    e12 = xi[:n, n:]
    a = e11 * s1[:, None] / s1[None, :]
    # s1 * s2 == base**-(2 nu + 1) for every index, so the co-state scaling collapses
    q = base ** (2 * nu + 1) * (s1[:, None] * (e12 @ e11.T) * s1[None, :])
    q = symmetrize(q)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(q))):
        raise ConfigError(f"overflow discretising the prior with step {h}")
    a.setflags(write=False)
    q.setflags(write=False)
    return TransitionModel(h, a, q)
