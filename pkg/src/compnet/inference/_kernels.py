"""Compiled coordinate-descent kernels.

All lasso work is done in Gram form. For a quadratic ``b' G b - 2 c' b`` with
penalty ``lam * |b|_1`` the coordinate update is

    b_j <- soft(c_j - sum_{k != j} G_jk b_k, lam / 2) / G_jj

and the residual gradient ``r = c - G b`` is maintained incrementally so a
sweep costs O(p) plus O(p) per coefficient that actually moves.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def lasso_gram(G, c, lam, beta, skip, tol, max_sweeps):
    """Minimize ``b'Gb - 2c'b + lam|b|_1`` in place.

    Coordinate ``skip`` (if >= 0) is held at zero. Stops when the largest KKT
    violation of the objective ``b'Gb - 2c'b + lam|b|`` is below ``tol``.
    Returns ``(sweeps, violation)``.
    """
    p = c.shape[0]
    r = c.copy()
    for k in range(p):
        bk = beta[k]
        if bk != 0.0:
            for j in range(p):
                r[j] -= G[j, k] * bk
    half = lam / 2.0
    viol = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        for j in range(p):
            if j == skip:
                continue
            gjj = G[j, j]
            old = beta[j]
            if gjj <= 0.0:
                new = 0.0
            else:
                new = _soft(r[j] + gjj * old, half) / gjj
            if new != old:
                d = new - old
                beta[j] = new
                for k in range(p):
                    r[k] -= G[k, j] * d
        # KKT violation on the gradient 2(Gb - c) = -2r
        viol = 0.0
        for j in range(p):
            if j == skip or G[j, j] <= 0.0:
                continue
            g = -2.0 * r[j]
            if beta[j] > 0.0:
                v = abs(g + lam)
            elif beta[j] < 0.0:
                v = abs(g - lam)
            else:
                v = abs(g) - lam
                if v < 0.0:
                    v = 0.0
            if v > viol:
                viol = v
        if viol <= tol:
            break
    return sweeps, viol


@njit(cache=True)
def mb_step(S, lam, B, tol, max_sweeps):
    """One penalty level for all p regressions; ``B`` rows are warm starts."""
    p = S.shape[0]
    worst = 0.0
    beta = np.zeros(p)
    for i in range(p):
        for j in range(p):
            beta[j] = B[i, j]
        beta[i] = 0.0
        _, v = lasso_gram(S, S[:, i].copy(), lam, beta, i, tol, max_sweeps)
        if v > worst:
            worst = v
        for j in range(p):
            B[i, j] = beta[j]
    return worst


@njit(cache=True)
def mb_path(S, lambdas, tol, max_sweeps):
    """Neighborhood-selection path on a Gram matrix ``S`` (p x p).

    Returns ``B`` of shape (len(lambdas), p, p) with ``B[k, i]`` the
    coefficients regressing node i on the rest at ``lambdas[k]``, plus the
    largest KKT violation encountered.
    """
    p = S.shape[0]
    nl = lambdas.shape[0]
    B = np.zeros((nl, p, p))
    worst = 0.0
    for i in range(p):
        beta = np.zeros(p)
        c = S[:, i].copy()
        for k in range(nl):
            _, v = lasso_gram(S, c, lambdas[k], beta, i, tol, max_sweeps)
            if v > worst:
                worst = v
            B[k, i, :] = beta
    return B, worst


@njit(cache=True)
def glasso_block(S, lam, W, B, penalize_diag, tol, max_sweeps, inner_tol, inner_max):
    """Block coordinate descent for the graphical lasso on one block.

    ``W`` (covariance estimate) and ``B`` (column j holds the lasso
    coefficients for column j) are updated in place and serve as the warm
    start. Returns ``(Theta, sweeps, change)`` where ``change`` is the final
    mean absolute change of Theta between sweeps.
    """
    p = S.shape[0]
    shift = lam if penalize_diag else 0.0
    for j in range(p):
        W[j, j] = S[j, j] + shift
    off = 0.0
    for i in range(p):
        for j in range(p):
            if i != j:
                off += abs(S[i, j])
    off /= max(1, p * (p - 1))
    thr = tol * off
    theta_old = np.zeros((p, p))
    theta = np.zeros((p, p))
    change = np.inf
    sweeps = 0
    beta = np.zeros(p)
    c = np.zeros(p)
    while sweeps < max_sweeps:
        sweeps += 1
        for j in range(p):
            for k in range(p):
                beta[k] = B[k, j]
                c[k] = S[k, j]
            beta[j] = 0.0
            # 1/2 b'W11 b - s12'b + lam|b|  ==  (b'W11b - 2 s12'b + 2 lam|b|)/2
            lasso_gram(W, c, 2.0 * lam, beta, j, inner_tol, inner_max)
            for k in range(p):
                B[k, j] = beta[k]
            for k in range(p):
                if k == j:
                    continue
                acc = 0.0
                for l in range(p):
                    bl = beta[l]
                    if l != j and bl != 0.0:
                        acc += W[k, l] * bl
                W[k, j] = acc
                W[j, k] = acc
        for j in range(p):
            acc = W[j, j]
            for k in range(p):
                if k != j:
                    acc -= W[k, j] * B[k, j]
            tjj = 1.0 / acc
            theta[j, j] = tjj
            for k in range(p):
                if k != j:
                    theta[k, j] = -B[k, j] * tjj
        change = 0.0
        for i in range(p):
            for j in range(p):
                change += abs(theta[i, j] - theta_old[i, j])
                theta_old[i, j] = theta[i, j]
        change /= p * p
        if change < thr:
            break
    out = (theta + theta.T) / 2.0
    return out, sweeps, change
