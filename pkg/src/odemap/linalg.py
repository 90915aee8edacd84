"""Small dense linear-algebra helpers."""

import numpy as np

from . import _kernels
from .exceptions import ConfigError, SingularMatrixError

# Higham (2005) Pade coefficients b_0..b_m and 1-norm thresholds theta_m
_PADE = {
    3: (1.495585217958292e-2, (120.0, 60.0, 12.0, 1.0)),
    5: (2.539398330063230e-1, (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0)),
    7: (
        9.504178996162932e-1,
        (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    ),
    9: (
        2.097847961257068,
        (
            17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
            2162160.0, 110880.0, 3960.0, 90.0, 1.0,
        ),
    ),
}
_THETA_13 = 5.371920351148152
_B13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
    33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0,
)


def symmetrize(m):
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def matrix_exponential(m):
    """Matrix exponential by scaling and squaring with a Pade approximant.

    Uses the degree selection of Higham (2005): the lowest of the degrees
    3, 5, 7, 9 whose 1-norm threshold covers ``m``, otherwise degree 13
    after scaling ``m`` by ``2**-s``.

    Parameters
    ----------
    m : array_like, shape (n, n)

    Returns
    -------
    numpy.ndarray, shape (n, n)
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError(f"matrix_exponential needs a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ConfigError("matrix_exponential input has non-finite entries")
    n = a.shape[0]
    if n == 0:
        return a.copy()
    eye = np.eye(n)
    norm = np.linalg.norm(a, 1)

    for degree, (theta, b) in _PADE.items():
        if norm <= theta:
            return _pade_low(a, eye, b)

    s = max(0, int(np.ceil(np.log2(norm / _THETA_13)))) if norm > 0 else 0
    a = a / 2.0**s
    b = _B13
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * eye)
    v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * eye
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


def _pade_low(a, eye, b):
    a2 = a @ a
    u = b[1] * eye
    v = b[0] * eye
    power = eye
    for k in range(1, len(b) // 2):
        power = power @ a2
        u = u + b[2 * k + 1] * power
        v = v + b[2 * k] * power
    u = a @ u
    return np.linalg.solve(v - u, v + u)


def sqrtm_psd(m):
    """Symmetric square root of a symmetric positive semi-definite matrix."""
    w, v = np.linalg.eigh(symmetrize(m))
    return symmetrize((v * np.sqrt(np.clip(w, 0.0, None))) @ v.T)


def is_positive_definite(m):
    try:
        np.linalg.cholesky(np.asarray(m, dtype=float))
    except np.linalg.LinAlgError:
        return False
    return True


def pinv_or_solve(s, rhs):
    """Solve ``s x = rhs`` for symmetric ``s``.

    Escalates a diagonal jitter of 0, 1e-14, 1e-12 and 1e-10 times
    ``trace(s)`` until a Cholesky factorisation succeeds.  There is no silent
    pseudo-inverse: if every level fails, :class:`SingularMatrixError` is
    raised.

    Parameters
    ----------
    s : array_like, shape (n, n)
    rhs : array_like, shape (n,) or (n, k)
    """
    s = np.ascontiguousarray(s, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    vector = rhs.ndim == 1
    b = np.ascontiguousarray(rhs.reshape(-1, 1) if vector else rhs)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or b.shape[0] != s.shape[0]:
        raise ConfigError(f"incompatible shapes {s.shape} and {rhs.shape}")
    x, level = _kernels.chol_solve(s, b)
    if level < 0:
        raise SingularMatrixError("matrix is singular after maximal jitter (1e-10 * trace)")
    return x[:, 0] if vector else x
