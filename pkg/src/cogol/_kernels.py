"""Hot inner loops, each in a numba and a numpy flavour.

The ``*_numpy`` functions are the reference implementations; the
``*_numba`` ones are compiled loop versions of the same arithmetic (or
``None`` when numba is unavailable). The unsuffixed names are bound to
whichever backend :mod:`cogol._accel` selected at import time.

Labels are 1-based throughout. For sample ``i`` and threshold ``j``
(0-based), the decision value is ``g = theta[j] - W[j] @ X[i]`` and the
loss term is ``phi(g)`` when ``j + 1 >= y[i]`` and ``phi(-g)`` otherwise,
with ``phi(t) = log(1 + exp(-t))``.
"""
import math

import numpy as np

from . import _accel


def _sign_matrix(y, m):
    # +1 where the threshold lies at or above the label, -1 below
    j = np.arange(1, m + 1)
    return np.where(j[None, :] >= y[:, None], 1.0, -1.0)


def threshold_loss_numpy(X, W, theta, y):
    G = theta[None, :] - X @ W.T
    S = _sign_matrix(y, theta.shape[0])
    return float(np.logaddexp(0.0, -S * G).sum())


def threshold_loss_grad_numpy(X, W, theta, y):
    """Summed loss plus its gradient with respect to ``W`` and ``theta``."""
    G = theta[None, :] - X @ W.T
    S = _sign_matrix(y, theta.shape[0])
    M = S * G
    loss = float(np.logaddexp(0.0, -M).sum())
    # d/dg phi(s g) = -s * sigmoid(-s g)
    R = -S * np.exp(-np.logaddexp(0.0, M))
    return loss, -(R.T @ X), R.sum(axis=0)


def _phi(t):
    if t > 0.0:
        return math.log1p(math.exp(-t))
    return -t + math.log1p(math.exp(t))


def _sigmoid_neg(t):
    # sigmoid(-t), overflow safe
    if t > 0.0:
        e = math.exp(-t)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(t))


if _accel.HAVE_NUMBA:
    # scalar helpers must be compiled for the loop kernels to call them
    _phi = _accel.jit(_phi)
    _sigmoid_neg = _accel.jit(_sigmoid_neg)


def _threshold_loss_loop(X, W, theta, y):
    n, p = X.shape
    m = theta.shape[0]
    total = 0.0
    for i in range(n):
        yi = y[i]
        for j in range(m):
            g = theta[j]
            for d in range(p):
                g -= W[j, d] * X[i, d]
            if j + 1 >= yi:
                total += _phi(g)
            else:
                total += _phi(-g)
    return total


def _threshold_loss_grad_loop(X, W, theta, y):
    n, p = X.shape
    m = theta.shape[0]
    gW = np.zeros((m, p))
    gtheta = np.zeros(m)
    total = 0.0
    for i in range(n):
        yi = y[i]
        for j in range(m):
            g = theta[j]
            for d in range(p):
                g -= W[j, d] * X[i, d]
            # margin t = s * g; loss phi(t), dloss/dg = -s * sigmoid(-t)
            t = g if j + 1 >= yi else -g
            e = math.exp(-abs(t))
            if t > 0.0:
                total += math.log1p(e)
                sneg = e / (1.0 + e)
            else:
                total += -t + math.log1p(e)
                sneg = 1.0 / (1.0 + e)
            r = -sneg if j + 1 >= yi else sneg
            gtheta[j] += r
            for d in range(p):
                gW[j, d] -= r * X[i, d]
    return total, gW, gtheta


def packed_objective_grad_numpy(X, y, Z, alpha, beta):
    """Mean loss + penalties and gradient for packed rows ``Z[j] = [w_j, theta_j]``."""
    n, p = X.shape
    W = np.ascontiguousarray(Z[:, :p])
    loss, gW, gt = threshold_loss_grad_numpy(X, W, np.ascontiguousarray(Z[:, p]), y)
    D = np.diff(W, axis=0)
    f = loss / n + alpha * float((W * W).sum()) + beta * float((D * D).sum())
    gW = gW / n + 2.0 * alpha * W
    if W.shape[0] > 1:
        gW[1:] += 2.0 * beta * D
        gW[:-1] -= 2.0 * beta * D
    return f, np.hstack([gW, (gt / n)[:, None]])


def _packed_objective_grad_loop(X, y, Z, alpha, beta):
    n, p = X.shape
    m = Z.shape[0]
    G = np.zeros((m, p + 1))
    total = 0.0
    for i in range(n):
        yi = y[i]
        for j in range(m):
            g = Z[j, p]
            for d in range(p):
                g -= Z[j, d] * X[i, d]
            t = g if j + 1 >= yi else -g
            e = math.exp(-abs(t))
            if t > 0.0:
                total += math.log1p(e)
                sneg = e / (1.0 + e)
            else:
                total += -t + math.log1p(e)
                sneg = 1.0 / (1.0 + e)
            r = -sneg if j + 1 >= yi else sneg
            G[j, p] += r
            for d in range(p):
                G[j, d] -= r * X[i, d]
    f = total / n
    for j in range(m):
        for c in range(p + 1):
            G[j, c] /= n
        for d in range(p):
            w = Z[j, d]
            f += alpha * w * w
            G[j, d] += 2.0 * alpha * w
            if j > 0:
                dd = w - Z[j - 1, d]
                f += beta * dd * dd
                G[j, d] += 2.0 * beta * dd
                G[j - 1, d] -= 2.0 * beta * dd
    return f, G


def rbf_gram_numpy(X, Y, gamma):
    sq = (X * X).sum(axis=1)[:, None] + (Y * Y).sum(axis=1)[None, :] - 2.0 * (X @ Y.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


def _rbf_gram_loop(X, Y, gamma):
    a, p = X.shape
    b = Y.shape[0]
    K = np.empty((a, b))
    for i in range(a):
        for j in range(b):
            s = 0.0
            for d in range(p):
                t = X[i, d] - Y[j, d]
                s += t * t
            K[i, j] = math.exp(-gamma * s)
    return K


def signed_rank_count_numpy(ranks2, t2):
    """Count sign patterns whose rank sum is at least as extreme as ``t2``.

    ``ranks2`` holds doubled (integer) midranks, ``t2`` the doubled
    observed positive-rank sum. Every one of the ``2**n`` assignments is
    enumerated, in blocks to bound memory.
    """
    n = ranks2.shape[0]
    total2 = int(ranks2.sum())
    obs = abs(2 * int(t2) - total2)
    shifts = np.arange(n, dtype=np.int64)
    count = 0
    block = 1 << 16
    for start in range(0, 1 << n, block):
        masks = np.arange(start, min(start + block, 1 << n), dtype=np.int64)
        bits = (masks[:, None] >> shifts[None, :]) & 1
        sums = bits @ ranks2
        count += int(np.count_nonzero(np.abs(2 * sums - total2) >= obs))
    return count


def _signed_rank_count_loop(ranks2, t2):
    n = ranks2.shape[0]
    total2 = 0
    for i in range(n):
        total2 += ranks2[i]
    obs = abs(2 * t2 - total2)
    # Gray-code walk: consecutive patterns differ in exactly one sign
    s = 0
    count = 0
    if abs(2 * s - total2) >= obs:
        count += 1
    gray = 0
    for step in range(1, 1 << n):
        bit = 0
        v = step
        while (v & 1) == 0:
            v >>= 1
            bit += 1
        gray ^= 1 << bit
        if (gray >> bit) & 1:
            s += ranks2[bit]
        else:
            s -= ranks2[bit]
        if abs(2 * s - total2) >= obs:
            count += 1
    return count


_loss_c = _accel.jit(_threshold_loss_loop)
_loss_grad_c = _accel.jit(_threshold_loss_grad_loop)
_packed_c = _accel.jit(_packed_objective_grad_loop)
_gram_c = _accel.jit(_rbf_gram_loop)
_rank_c = _accel.jit(_signed_rank_count_loop)


# Whole descent loops. These only exist compiled: the numpy path runs the
# same algorithm as a Python loop in cogol.optimizer. Each returns the
# final point, objective, gradient inf-norm, iteration count, a history
# array of (objective, grad_norm, step) rows and a status code:
# 0 finished, 1 non-finite gradient at iteration ``it``.

def _max_abs(a):
    out = 0.0
    for v in a.ravel():
        if abs(v) > out:
            out = abs(v)
    return out


def _all_finite(a):
    for v in a.ravel():
        if not math.isfinite(v):
            return False
    return True


def _generalized_descent_loop(X, y, Z, alpha, beta, V, inv, max_iters, grad_tol, armijo_c,
                              max_halvings):
    m, q = Z.shape
    hist = np.zeros((max_iters + 1, 3))
    f, G = _packed_c(X, y, Z, alpha, beta)
    gnorm = _max_abs(G)
    hist[0, 0] = f
    hist[0, 1] = gnorm
    it = 0
    R = np.empty((m, q))
    S = np.empty((m, q))
    D = np.empty((m, q))
    while gnorm > grad_tol and it < max_iters:
        # D = -V (inv_l (V' G)_l)
        for a in range(m):
            for c in range(q):
                acc = 0.0
                for b in range(m):
                    acc += V[b, a] * G[b, c]
                R[a, c] = acc
        for a in range(m):
            for c in range(q):
                acc = 0.0
                for e in range(q):
                    acc += inv[a, c, e] * R[a, e]
                S[a, c] = acc
        slope = 0.0
        for a in range(m):
            for c in range(q):
                acc = 0.0
                for b in range(m):
                    acc += V[a, b] * S[b, c]
                D[a, c] = -acc
                slope += G[a, c] * D[a, c]
        if not slope < 0.0:
            for a in range(m):
                for c in range(q):
                    D[a, c] = -G[a, c]
            slope = 0.0
            for a in range(m):
                for c in range(q):
                    slope -= G[a, c] * G[a, c]
        step = 1.0
        accepted = False
        for _ in range(max_halvings):
            Zn = Z + step * D
            fn, Gn = _packed_c(X, y, Zn, alpha, beta)
            if math.isfinite(fn) and fn <= f + armijo_c * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        it += 1
        Z, f, G = Zn, fn, Gn
        if not _all_finite(G):
            return Z, f, gnorm, it, hist, 1
        gnorm = _max_abs(G)
        hist[it, 0] = f
        hist[it, 1] = gnorm
        hist[it, 2] = step
    return Z, f, gnorm, it, hist, 0


def _tied_value_grad_loop(X, y, z, alpha):
    # shared w in z[:p], raw thresholds in z[p:]; theta = cumsum(raw_1, softplus(raw_2..))
    n, p = X.shape
    m = z.shape[0] - p
    theta = np.empty(m)
    scale = np.empty(m)
    theta[0] = z[p]
    scale[0] = 1.0
    for j in range(1, m):
        r = z[p + j]
        sp = max(r, 0.0) + math.log1p(math.exp(-abs(r)))
        theta[j] = theta[j - 1] + sp
        scale[j] = _sigmoid_neg(-r)
    total = 0.0
    grad = np.zeros(p + m)
    gt = np.zeros(m)
    for i in range(n):
        s = 0.0
        for d in range(p):
            s += z[d] * X[i, d]
        yi = y[i]
        rsum = 0.0
        for j in range(m):
            g = theta[j] - s
            t = g if j + 1 >= yi else -g
            e = math.exp(-abs(t))
            if t > 0.0:
                total += math.log1p(e)
                sneg = e / (1.0 + e)
            else:
                total += -t + math.log1p(e)
                sneg = 1.0 / (1.0 + e)
            r = -sneg if j + 1 >= yi else sneg
            gt[j] += r
            rsum += r
        for d in range(p):
            grad[d] -= rsum * X[i, d]
    ww = 0.0
    for d in range(p):
        ww += z[d] * z[d]
        grad[d] = grad[d] / n + 2.0 * alpha * m * z[d]
    f = total / n + alpha * m * ww
    acc = 0.0
    for j in range(m - 1, -1, -1):
        acc += gt[j] / n
        grad[p + j] = acc * scale[j]
    return f, grad, scale


def _tied_descent_loop(X, y, z, alpha, P, lam, max_iters, grad_tol, armijo_c, max_halvings):
    p = X.shape[1]
    size = z.shape[0]
    m = size - p
    hist = np.zeros((max_iters + 1, 3))
    f, g, scale = _tied_vg_c(X, y, z, alpha)
    gnorm = _max_abs(g)
    hist[0, 0] = f
    hist[0, 1] = gnorm
    it = 0
    J = np.eye(size)
    while gnorm > grad_tol and it < max_iters:
        for j in range(m):
            for i in range(j + 1):
                J[p + j, p + i] = scale[i]
        M = J.T @ P @ J
        for i in range(size):
            M[i, i] += lam
        d = -np.linalg.solve(M, g)
        slope = 0.0
        for i in range(size):
            slope += g[i] * d[i]
        if not slope < 0.0:
            d = -g
            slope = 0.0
            for i in range(size):
                slope -= g[i] * g[i]
        step = 1.0
        accepted = False
        for _ in range(max_halvings):
            zn = z + step * d
            fn, gn, sn = _tied_vg_c(X, y, zn, alpha)
            if math.isfinite(fn) and fn <= f + armijo_c * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        it += 1
        z, f, g, scale = zn, fn, gn, sn
        if not _all_finite(g):
            return z, f, gnorm, it, hist, 1
        gnorm = _max_abs(g)
        hist[it, 0] = f
        hist[it, 1] = gnorm
        hist[it, 2] = step
    return z, f, gnorm, it, hist, 0


if _accel.HAVE_NUMBA:
    _max_abs = _accel.jit(_max_abs)
    _all_finite = _accel.jit(_all_finite)
_tied_vg_c = _accel.jit(_tied_value_grad_loop)
_gen_descent_c = _accel.jit(_generalized_descent_loop)
_tied_descent_c = _accel.jit(_tied_descent_loop)


def threshold_loss_numba(X, W, theta, y):
    return float(_loss_c(X, W, theta, y))


def threshold_loss_grad_numba(X, W, theta, y):
    loss, gW, gt = _loss_grad_c(X, W, theta, y)
    return float(loss), gW, gt


def packed_objective_grad_numba(X, y, Z, alpha, beta):
    f, G = _packed_c(X, y, Z, float(alpha), float(beta))
    return float(f), G


def rbf_gram_numba(X, Y, gamma):
    return _gram_c(X, Y, float(gamma))


def signed_rank_count_numba(ranks2, t2):
    return int(_rank_c(ranks2, int(t2)))


def generalized_descent_numba(X, y, Z, alpha, beta, V, inv, max_iters, grad_tol, armijo_c,
                              max_halvings):
    return _gen_descent_c(X, y, np.ascontiguousarray(Z), float(alpha), float(beta),
                          np.ascontiguousarray(V), np.ascontiguousarray(inv), int(max_iters),
                          float(grad_tol), float(armijo_c), int(max_halvings))


def tied_descent_numba(X, y, z, alpha, P, lam, max_iters, grad_tol, armijo_c, max_halvings):
    return _tied_descent_c(X, y, np.ascontiguousarray(z), float(alpha), np.ascontiguousarray(P),
                           float(lam), int(max_iters), float(grad_tol), float(armijo_c),
                           int(max_halvings))


if _accel.USE_NUMBA:
    threshold_loss = threshold_loss_numba
    threshold_loss_grad = threshold_loss_grad_numba
    packed_objective_grad = packed_objective_grad_numba
    rbf_gram = rbf_gram_numba
    signed_rank_count = signed_rank_count_numba
else:
    threshold_loss = threshold_loss_numpy
    threshold_loss_grad = threshold_loss_grad_numpy
    packed_objective_grad = packed_objective_grad_numpy
    rbf_gram = rbf_gram_numpy
    signed_rank_count = signed_rank_count_numpy
