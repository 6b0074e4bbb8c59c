"""Pure-numpy implementations of the hot inner loops.

These are the fallback used when numba is unavailable or disabled via
OTIDS_BACKEND=numpy.  Arithmetic is ordered exactly like the compiled
versions so both backends return bit-identical floats.
"""

from __future__ import annotations

import numpy as np


def split_scan(values, labels, n_classes, min_leaf):
    """Best impurity-decreasing cut of a pre-sorted column.

    values must be sorted ascending with labels aligned.  Candidate
    thresholds are the midpoints between consecutive distinct values; a
    candidate is valid when both sides keep at least min_leaf rows.

    Returns (boundary_index, threshold, decrease) where rows
    [0..boundary_index] fall left.  boundary_index is -1 when no candidate
    achieves a strictly positive decrease.  Ties break toward the lowest
    threshold.
    """
    n = values.shape[0]
    if n < 2:
        return -1, 0.0, 0.0
    total = np.bincount(labels, minlength=n_classes).astype(np.int64)
    nf = float(n)
    gp = 1.0
    for k in range(n_classes):
        c = total[k] / nf
        gp -= c * c

    onehot = np.zeros((n, n_classes), dtype=np.int64)
    onehot[np.arange(n), labels] = 1
    cum = np.cumsum(onehot, axis=0)

    idx = np.arange(n - 1)
    nl = idx + 1
    nr = n - nl
    valid = (values[:-1] != values[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return -1, 0.0, 0.0
    vi = idx[valid]
    nlf = nl[valid].astype(np.float64)
    nrf = nr[valid].astype(np.float64)
    gl = np.ones(len(vi))
    gr = np.ones(len(vi))
    leftc = cum[vi]
    for k in range(n_classes):
        cl = leftc[:, k] / nlf
        gl -= cl * cl
        cr = (total[k] - leftc[:, k]) / nrf
        gr -= cr * cr
    delta = gp - (nlf / nf) * gl - (nrf / nf) * gr
    j = int(np.argmax(delta))
    if not delta[j] > 0.0:
        return -1, 0.0, 0.0
    i = int(vi[j])
    return i, 0.5 * (values[i] + values[i + 1]), float(delta[j])


def tree_apply(feature, threshold, left, right, X, out):
    """Route every row of X to a leaf; writes leaf node ids into out."""
    n = X.shape[0]
    cur = np.zeros(n, dtype=np.int64)
    active = feature[cur] >= 0
    while active.any():
        rows = np.nonzero(active)[0]
        nodes = cur[rows]
        go_left = X[rows, feature[nodes]] <= threshold[nodes]
        cur[rows] = np.where(go_left, left[nodes], right[nodes])
        active[rows] = feature[cur[rows]] >= 0
    out[:] = cur
    return out


def smo_solve(K, y, p, box, alpha, grad, tol, max_passes, deltas):
    """Pairwise coordinate descent on min 1/2 a'Qa + p'a, Q = yy' * K.

    Constraints: y'a constant, 0 <= a <= box.  alpha and grad (= Q a + p on
    entry) are updated in place.  Each pass scans the full gradient for the
    maximal violating pair and updates it; the loop stops when the
    violation gap falls to tol or max_passes is reached.  When deltas is
    non-empty, per-pass objective changes are recorded into it.

    Returns (passes_used, converged_flag).
    """
    n = alpha.shape[0]
    track = deltas.shape[0] > 0
    it = 0
    converged = 0
    while it < max_passes:
        yg = -y * grad
        up = ((y > 0.0) & (alpha < box)) | ((y < 0.0) & (alpha > 0.0))
        lo = ((y > 0.0) & (alpha > 0.0)) | ((y < 0.0) & (alpha < box))
        if not up.any() or not lo.any():
            converged = 1
            break
        i = int(np.where(up, yg, -np.inf).argmax())
        j = int(np.where(lo, yg, np.inf).argmin())
        if yg[i] - yg[j] <= tol:
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
        grad += ((y * yi) * K[i]) * dai
        grad += ((y * yj) * K[j]) * daj
        it += 1
    return it, converged
