"""Hot loops of the filter, smoother and objective.

Everything here works on plain arrays and reports failures through status
values instead of raising, so the same source runs under numba or as plain
numpy.  The typed wrappers in :mod:`odemap.inference` turn statuses into
exceptions.

Array conventions: a mesh of ``N + 1`` points gives stacks of shape
``(N + 1, n)`` for means and ``(N + 1, n, n)`` for covariances.  Transition
stacks are indexed by the point they lead *into*; entry 0 is unused.
"""

import numpy as np

from ._jit import jit

JITTER_LEVELS = (0.0, 1e-14, 1e-12, 1e-10)
MAX_INNOVATION_COND = 1e14


@jit
def symmetrize(m):
    return 0.5 * (m + m.T)


@jit
def chol_solve(s, rhs):
    """Solve ``s x = rhs`` for symmetric ``s`` with jitter escalation.

    Tries a Cholesky factorisation of ``s + level * trace(s) * I`` for each
    level in ``JITTER_LEVELS``.  Returns ``(x, level_index)``; the index is
    -1 when every level failed (``x`` is then zeros).
    """
    n = s.shape[0]
    scale = np.trace(s)
    eye = np.eye(n)
    for i in range(len(JITTER_LEVELS)):
        m = s + JITTER_LEVELS[i] * scale * eye
        try:
            chol = np.linalg.cholesky(m)
        except Exception:
            continue
        if not np.all(np.isfinite(chol)):
            continue
        y = np.linalg.solve(chol, rhs)
        return np.linalg.solve(chol.T, y), i
    return np.zeros_like(rhs), -1


@jit
def predict_step(mean, cov, a, q):
    return a @ mean, symmetrize(a @ cov @ a.T + q)


@jit
def update_step(mean, cov, c, target, joseph, nugget):
    """Noiseless (or nugget-regularised) Kalman update.

    Returns ``(mean, cov, residual, s, mahalanobis, ok)``.
    """
    k = c.shape[0]
    resid = target - c @ mean
    pct = cov @ c.T
    s = symmetrize(c @ pct + nugget * np.eye(k))
    ev = np.linalg.eigvalsh(s)
    if not (ev[0] > 0.0 and ev[-1] <= MAX_INNOVATION_COND * ev[0]):
        return mean, cov, resid, s, 0.0, False
    # S^{-1} C P, i.e. the transposed gain
    gain_t, level = chol_solve(s, pct.T.copy())
    if level < 0:
        return mean, cov, resid, s, 0.0, False
    gain = gain_t.T
    sinv_r, _ = chol_solve(s, resid.reshape((k, 1)))
    quad = np.sum(resid * sinv_r[:, 0])
    new_mean = mean + gain @ resid
    if joseph:
        ikc = np.eye(cov.shape[0]) - gain @ c
        new_cov = ikc @ cov @ ikc.T + nugget * (gain @ gain.T)
    else:
        new_cov = cov - gain @ s @ gain.T
    return new_mean, symmetrize(new_cov), resid, s, quad, True


@jit
def filter_pass(mean0, cov0, a, q, obs, targets, mask, joseph, nugget):
    """Forward pass with precomputed affine observations.

    ``mean0, cov0`` is the state at point 0 after the initial update.  Points
    with ``mask[k]`` false are prediction-only.  Returns the predicted and
    filtered stacks, per-point residuals, innovation covariances and
    Mahalanobis terms, and the index of the first failing update (-1 if none).
    """
    npts = a.shape[0]
    n = mean0.shape[0]
    k = obs.shape[1]
    pm = np.empty((npts, n))
    pc = np.empty((npts, n, n))
    fm = np.empty((npts, n))
    fc = np.empty((npts, n, n))
    resid = np.zeros((npts, k))
    s = np.zeros((npts, k, k))
    quad = np.zeros(npts)
    pm[0] = mean0
    pc[0] = cov0
    fm[0] = mean0
    fc[0] = cov0
    for i in range(1, npts):
        m, p = predict_step(fm[i - 1], fc[i - 1], a[i], q[i])
        pm[i] = m
        pc[i] = p
        if mask[i]:
            m2, p2, r, si, qi, ok = update_step(m, p, obs[i], targets[i], joseph, nugget)
            if not ok:
                return pm, pc, fm, fc, resid, s, quad, i
            fm[i] = m2
            fc[i] = p2
            resid[i] = r
            s[i] = si
            quad[i] = qi
        else:
            fm[i] = m
            fc[i] = p
    return pm, pc, fm, fc, resid, s, quad, -1


@jit
def rts_pass(a, fm, fc, pm, pc):
    """Rauch-Tung-Striebel backward pass.

    Returns smoothed means, covariances, gains and the index of the predicted
    covariance that could not be inverted (-1 if none).
    """
    npts, n = fm.shape
    sm = np.empty_like(fm)
    sc = np.empty_like(fc)
    gains = np.zeros((npts, n, n))
    sm[npts - 1] = fm[npts - 1]
    sc[npts - 1] = fc[npts - 1]
    for i in range(npts - 2, -1, -1):
        # G = Sf A^T Pp^{-1} = (Pp^{-1} A Sf)^T
        x, level = chol_solve(pc[i + 1], a[i + 1] @ fc[i])
        if level < 0:
            return sm, sc, gains, i + 1
        g = x.T
        gains[i] = g
        sm[i] = fm[i] + g @ (sm[i + 1] - pm[i + 1])
        sc[i] = symmetrize(g @ (sc[i + 1] - pc[i + 1]) @ g.T + fc[i])
    return sm, sc, gains, -1


@jit
def prior_energy(x, a, q, init_cov):
    """Twice the negative log prior density, up to a constant.

    Returns ``(value, index)``; index is the first singular Q (0 for the
    initial covariance) or -1.
    """
    npts, n = x.shape
    sol, level = chol_solve(init_cov, x[0].reshape((n, 1)))
    if level < 0:
        return 0.0, 0
    total = np.sum(x[0] * sol[:, 0])
    for i in range(1, npts):
        r = x[i] - a[i] @ x[i - 1]
        sol, level = chol_solve(q[i], r.reshape((n, 1)))
        if level < 0:
            return total, i
        total += np.sum(r * sol[:, 0])
    return total, -1


@jit
def rk4_fixed(rhs, params, t0, y0, h, n_steps, stride):
    """Classical fourth-order Runge-Kutta with a fixed step.

    Returns the states at every ``stride``-th step, starting with ``y0``.
    """
    n_out = n_steps // stride + 1
    out = np.empty((n_out, y0.shape[0]))
    out[0] = y0
    y = y0.copy()
    j = 1
    for i in range(n_steps):
        t = t0 + i * h
        k1 = rhs(t, y, params)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1, params)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2, params)
        k4 = rhs(t + h, y + h * k3, params)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (i + 1) % stride == 0:
            out[j] = y
            j += 1
    return out
