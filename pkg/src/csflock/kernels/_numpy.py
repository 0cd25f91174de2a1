"""Vectorised numpy RK4 kernel; same contract as the numba backend."""

import numpy as np

WEIGHT_CONSTANT = 0
WEIGHT_ALGEBRAIC = 1


def _phi(r, kind, kappa, beta):
    if kind == WEIGHT_CONSTANT:
        return np.full_like(r, kappa)
    return kappa * (1.0 + r * r) ** (-0.5 * beta)


def _rhs(X, Y, chi, kind, kappa, beta):
    n, d = X.shape
    diff = X[None, :, :] - X[:, None, :]
    r = np.sqrt((diff * diff).sum(axis=2))
    w = chi * _phi(r, kind, kappa, beta)
    np.fill_diagonal(w, 0.0)
    dY = (w[:, :, None] * (Y[None, :, :] - Y[:, None, :])).sum(axis=1) / n
    return Y[:, :d].copy(), dY


def _diameter(A):
    diff = A[:, None, :] - A[None, :, :]
    return float(np.sqrt((diff * diff).sum(axis=2).max()))


def run_rk4(X0, V0, adj, step_label, step_h, step_record, step_mark, weight_kind, kappa, beta, track_phi):
    # overflow is reported through the status flag, not floating-point warnings
    with np.errstate(over="ignore", invalid="ignore"):
        return _run_rk4(X0, V0, adj, step_label, step_h, step_record, step_mark, weight_kind, kappa, beta, track_phi)


def _run_rk4(X0, V0, adj, step_label, step_h, step_record, step_mark, weight_kind, kappa, beta, track_phi):
    n, d = X0.shape
    X = X0.copy()
    Y = np.hstack([V0, np.eye(n)]) if track_phi else V0.copy()

    n_rec = 1 + int(np.count_nonzero(step_record))
    n_marks = int(np.count_nonzero(step_mark))
    rec_dx = np.empty(n_rec)
    rec_dv = np.empty(n_rec)
    phis = np.zeros((n_marks, n, n))
    v_marks = np.empty((n_marks + 1, n, d))
    v_marks[0] = V0

    sup_dx = _diameter(X)
    rec_dx[0] = sup_dx
    rec_dv[0] = _diameter(Y[:, :d])
    rec = 1
    mark = 0
    for s in range(step_h.shape[0]):
        h = step_h[s]
        chi = adj[step_label[s]]
        k1x, k1y = _rhs(X, Y, chi, weight_kind, kappa, beta)
        k2x, k2y = _rhs(X + 0.5 * h * k1x, Y + 0.5 * h * k1y, chi, weight_kind, kappa, beta)
        k3x, k3y = _rhs(X + 0.5 * h * k2x, Y + 0.5 * h * k2y, chi, weight_kind, kappa, beta)
        k4x, k4y = _rhs(X + h * k3x, Y + h * k3y, chi, weight_kind, kappa, beta)
        X = X + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        Y = Y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        if not (np.isfinite(X).all() and np.isfinite(Y).all()):
            return X, Y[:, :d].copy(), rec_dx[:rec], rec_dv[:rec], sup_dx, phis[:mark], v_marks[:mark + 1], 1, s
        dx = _diameter(X)
        sup_dx = max(sup_dx, dx)
        if step_record[s]:
            rec_dx[rec] = dx
            rec_dv[rec] = _diameter(Y[:, :d])
            rec += 1
        if step_mark[s]:
            v_marks[mark + 1] = Y[:, :d]
            if track_phi:
                phis[mark] = Y[:, d:]
                Y[:, d:] = np.eye(n)
            mark += 1
    return X, Y[:, :d].copy(), rec_dx, rec_dv, sup_dx, phis, v_marks, 0, -1
