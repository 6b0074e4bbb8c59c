"""Numba-compiled implementations of the hot inner loops.

Same contracts as accel._numpy; see that module for the documented
semantics.  Loops are written so the floating point operation order is
identical to the numpy fallback, which keeps results bit-identical across
backends.  Kernels release the GIL so tree-level threading can overlap.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def split_scan(values, labels, n_classes, min_leaf):
    n = values.shape[0]
    if n < 2:
        return -1, 0.0, 0.0
    total = np.zeros(n_classes, dtype=np.int64)
    for t in range(n):
        total[labels[t]] += 1
    nf = float(n)
    gp = 1.0
    for k in range(n_classes):
        c = total[k] / nf
        gp -= c * c

    left = np.zeros(n_classes, dtype=np.int64)
    best_i = -1
    best_thr = 0.0
    best_delta = 0.0
    for i in range(n - 1):
        left[labels[i]] += 1
        if values[i] == values[i + 1]:
            continue
        nl = i + 1
        nr = n - nl
        if nl < min_leaf or nr < min_leaf:
            continue
        nlf = float(nl)
        nrf = float(nr)
        gl = 1.0
        gr = 1.0
        for k in range(n_classes):
            cl = left[k] / nlf
            gl -= cl * cl
            cr = (total[k] - left[k]) / nrf
            gr -= cr * cr
        delta = gp - (nlf / nf) * gl - (nrf / nf) * gr
        if delta > best_delta:
            best_delta = delta
            best_i = i
            best_thr = 0.5 * (values[i] + values[i + 1])
    if best_i < 0:
        return -1, 0.0, 0.0
    return best_i, best_thr, best_delta


@njit(cache=True, nogil=True)
def tree_apply(feature, threshold, left, right, X, out):
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out


@njit(cache=True, nogil=True)
def smo_solve(K, y, p, box, alpha, grad, tol, max_passes, deltas):
    n = alpha.shape[0]
    track = deltas.shape[0] > 0
    it = 0
    converged = 0
    while it < max_passes:
        m_val = -np.inf
        m_idx = -1
        M_val = np.inf
        M_idx = -1
        for t in range(n):
            yg = -y[t] * grad[t]
            if (y[t] > 0.0 and alpha[t] < box[t]) or (y[t] < 0.0 and alpha[t] > 0.0):
                if yg > m_val:
                    m_val = yg
                    m_idx = t
            if (y[t] > 0.0 and alpha[t] > 0.0) or (y[t] < 0.0 and alpha[t] < box[t]):
                if yg < M_val:
                    M_val = yg
                    M_idx = t
        if m_idx < 0 or M_idx < 0:
            converged = 1
            break
        i = m_idx
        j = M_idx
        if m_val - M_val <= tol:
            converged = 1
            break

        yi = y[i]
        yj = y[j]
        Kij = K[i, j]
        quad = K[i, i] + K[j, j] - 2.0 * Kij
        if quad <= 0.0:
            quad = 1e-12
        old_i = alpha[i]
        old_j = alpha[j]
        gi = grad[i]
        gj = grad[j]

        if yi * yj < 0.0:
            step = (-gi - gj) / quad
            diff = old_i - old_j
            ai = old_i + step
            aj = old_j + step
            if diff > 0.0:
                if aj < 0.0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0.0:
                    ai = 0.0
                    aj = -diff
            if diff > box[i] - box[j]:
                if ai > box[i]:
                    ai = box[i]
                    aj = box[i] - diff
            else:
                if aj > box[j]:
                    aj = box[j]
                    ai = box[j] + diff
        else:
            step = (gi - gj) / quad
            total = old_i + old_j
            ai = old_i - step
            aj = old_j + step
            if total > box[i]:
                if ai > box[i]:
                    ai = box[i]
                    aj = total - box[i]
            else:
                if aj < 0.0:
                    aj = 0.0
                    ai = total
            if total > box[j]:
                if aj > box[j]:
                    aj = box[j]
                    ai = total - box[j]
            else:
                if ai < 0.0:
                    ai = 0.0
                    aj = total
        alpha[i] = ai
        alpha[j] = aj
        dai = ai - old_i
        daj = aj - old_j
        if track:
            qij = yi * yj * Kij
            deltas[it] = (
                gi * dai + gj * daj
                + 0.5 * (K[i, i] * dai * dai + 2.0 * qij * dai * daj
                         + K[j, j] * daj * daj)
            )
        for t in range(n):
            grad[t] = (grad[t] + ((y[t] * yi) * K[i, t]) * dai) \
                + ((y[t] * yj) * K[j, t]) * daj
        it += 1
    return it, converged
