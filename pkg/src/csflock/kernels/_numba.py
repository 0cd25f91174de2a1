"""Loop-level RK4 kernel compiled with numba (nopython, GIL released)."""

import math

import numpy as np
from numba import njit

WEIGHT_CONSTANT = 0
WEIGHT_ALGEBRAIC = 1


@njit(cache=True, nogil=True)
def _phi(r, kind, kappa, beta):
    if kind == WEIGHT_CONSTANT:
        return kappa
    return kappa * (1.0 + r * r) ** (-0.5 * beta)


@njit(cache=True, nogil=True)
def _rhs(X, Y, chi, kind, kappa, beta, out_x, out_y):
    n, d = X.shape
    width = Y.shape[1]
    inv_n = 1.0 / n
    for i in range(n):
        for c in range(d):
            out_x[i, c] = Y[i, c]
        for c in range(width):
            out_y[i, c] = 0.0
    for i in range(n):
        for j in range(n):
            if j == i or chi[i, j] == 0.0:
                continue
            r2 = 0.0
            for c in range(d):
                diff = X[j, c] - X[i, c]
                r2 += diff * diff
            w = chi[i, j] * _phi(math.sqrt(r2), kind, kappa, beta) * inv_n
            for c in range(width):
                out_y[i, c] += w * (Y[j, c] - Y[i, c])


@njit(cache=True, nogil=True)
def _axpy(out, base, h, k):
    rows, cols = base.shape
    for i in range(rows):
        for c in range(cols):
            out[i, c] = base[i, c] + h * k[i, c]


@njit(cache=True, nogil=True)
def _diameter(A, cols):
    n = A.shape[0]
    best = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for c in range(cols):
                diff = A[i, c] - A[j, c]
                s += diff * diff
            if s > best:
                best = s
    return math.sqrt(best)


@njit(cache=True, nogil=True)
def _all_finite(A):
    rows, cols = A.shape
    for i in range(rows):
        for c in range(cols):
            if not math.isfinite(A[i, c]):
                return False
    return True


@njit(cache=True, nogil=True)
def run_rk4(X0, V0, adj, step_label, step_h, step_record, step_mark, weight_kind, kappa, beta, track_phi):
    n, d = X0.shape
    width = d + n if track_phi else d
    X = X0.copy()
    Y = np.zeros((n, width))
    Y[:, :d] = V0
    if track_phi:
        for i in range(n):
            Y[i, d + i] = 1.0

    n_steps = step_h.shape[0]
    n_rec = 1
    n_marks = 0
    for s in range(n_steps):
        if step_record[s]:
            n_rec += 1
        if step_mark[s]:
            n_marks += 1
    rec_dx = np.empty(n_rec)
    rec_dv = np.empty(n_rec)
    phis = np.zeros((n_marks, n, n))
    v_marks = np.empty((n_marks + 1, n, d))
    v_marks[0] = V0

    k1x = np.empty((n, d)); k2x = np.empty((n, d)); k3x = np.empty((n, d)); k4x = np.empty((n, d))
    k1y = np.empty((n, width)); k2y = np.empty((n, width)); k3y = np.empty((n, width)); k4y = np.empty((n, width))
    Xt = np.empty((n, d))
    Yt = np.empty((n, width))

    sup_dx = _diameter(X, d)
    rec_dx[0] = sup_dx
    rec_dv[0] = _diameter(Y, d)
    rec = 1
    mark = 0
    for s in range(n_steps):
        h = step_h[s]
        chi = adj[step_label[s]]
        _rhs(X, Y, chi, weight_kind, kappa, beta, k1x, k1y)
        _axpy(Xt, X, 0.5 * h, k1x)
        _axpy(Yt, Y, 0.5 * h, k1y)
        _rhs(Xt, Yt, chi, weight_kind, kappa, beta, k2x, k2y)
        _axpy(Xt, X, 0.5 * h, k2x)
        _axpy(Yt, Y, 0.5 * h, k2y)
        _rhs(Xt, Yt, chi, weight_kind, kappa, beta, k3x, k3y)
        _axpy(Xt, X, h, k3x)
        _axpy(Yt, Y, h, k3y)
        _rhs(Xt, Yt, chi, weight_kind, kappa, beta, k4x, k4y)
        h6 = h / 6.0
        for i in range(n):
            for c in range(d):
                X[i, c] += h6 * (k1x[i, c] + 2.0 * k2x[i, c] + 2.0 * k3x[i, c] + k4x[i, c])
            for c in range(width):
                Y[i, c] += h6 * (k1y[i, c] + 2.0 * k2y[i, c] + 2.0 * k3y[i, c] + k4y[i, c])
        if not (_all_finite(X) and _all_finite(Y)):
            return X, Y[:, :d].copy(), rec_dx[:rec].copy(), rec_dv[:rec].copy(), sup_dx, phis[:mark].copy(), v_marks[:mark + 1].copy(), 1, s
        dx = _diameter(X, d)
        if dx > sup_dx:
            sup_dx = dx
        if step_record[s]:
            rec_dx[rec] = dx
            rec_dv[rec] = _diameter(Y, d)
            rec += 1
        if step_mark[s]:
            v_marks[mark + 1] = Y[:, :d]
            if track_phi:
                phis[mark] = Y[:, d:]
                for i in range(n):
                    for j in range(n):
                        Y[i, d + j] = 1.0 if i == j else 0.0
            mark += 1
    return X, Y[:, :d].copy(), rec_dx, rec_dv, sup_dx, phis, v_marks, 0, -1
