"""Numba-compiled kernels.

Same signatures and arithmetic as ``_numpy``. No fastmath, so nothing is
reassociated. Products are written in axpy form (``out[j] += a[k] * B[k, j]``
with k outermost) so the j loop vectorises while every output element still
accumulates k in ascending order; products against a transposed operand use
a contiguous transposed copy for the same reason.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def matmul(a, b):
    n, kk = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for k in range(kk):
            aik = a[i, k]
            for j in range(m):
                out[i, j] += aik * b[k, j]
    return out


@njit(cache=True)
def _sig(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def sigmoid(x):
    flat = x.ravel()
    out = np.empty(flat.size)
    for i in range(flat.size):
        out[i] = _sig(flat[i])
    return out.reshape(x.shape)


@njit(cache=True)
def _softmax_row(src, dst):
    n = src.size
    mx = src[0]
    for i in range(1, n):
        if src[i] > mx:
            mx = src[i]
    total = 0.0
    for i in range(n):
        dst[i] = math.exp(src[i] - mx)
        total += dst[i]
    for i in range(n):
        dst[i] = dst[i] / total


@njit(cache=True)
def softmax_rows(m):
    out = np.empty_like(m)
    for i in range(m.shape[0]):
        _softmax_row(m[i], out[i])
    return out


@njit(cache=True)
def _vecmat(x, W, out):
    """out = x @ W for a vector x, ascending over x's index."""
    out[:] = 0.0
    for k in range(x.shape[0]):
        xk = x[k]
        for j in range(out.shape[0]):
            out[j] += xk * W[k, j]


@njit(cache=True)
def gru_scan_forward(X, W, U, b, reverse):
    B, T, D = X.shape
    H = U.shape[1]
    out = np.empty((B, T, H))
    hprev = np.empty((B, T, H))
    zs = np.empty((B, T, H))
    rs = np.empty((B, T, H))
    hcs = np.empty((B, T, H))
    # gate-concatenated weights: x @ [W_z|W_r|W_h], h @ [U_z|U_r]
    wcat = np.empty((D, 3 * H))
    for g in range(3):
        wcat[:, g * H : (g + 1) * H] = W[g]
    uzr = np.empty((H, 2 * H))
    for g in range(2):
        uzr[:, g * H : (g + 1) * H] = U[g]
    uh = U[2].copy()
    h = np.zeros(H)
    rh = np.empty(H)
    xw = np.empty(3 * H)
    hu = np.empty(2 * H)
    hh = np.empty(H)
    for bi in range(B):
        h[:] = 0.0
        for s in range(T):
            t = T - 1 - s if reverse else s
            _vecmat(X[bi, t], wcat, xw)
            _vecmat(h, uzr, hu)
            for j in range(H):
                zs[bi, t, j] = _sig((xw[j] + hu[j]) + b[0, j])
                rs[bi, t, j] = _sig((xw[H + j] + hu[H + j]) + b[1, j])
                rh[j] = rs[bi, t, j] * h[j]
            _vecmat(rh, uh, hh)
            for j in range(H):
                hc = math.tanh((xw[2 * H + j] + hh[j]) + b[2, j])
                hcs[bi, t, j] = hc
                hprev[bi, t, j] = h[j]
                z = zs[bi, t, j]
                h[j] = z * h[j] + (1.0 - z) * hc
                out[bi, t, j] = h[j]
    return out, hprev, zs, rs, hcs


@njit(cache=True)
def gru_scan_backward(X, W, U, hprev, zs, rs, hcs, dH, reverse):
    B, T, D = X.shape
    H = U.shape[1]
    wcat_t = np.empty((3 * H, D))
    for g in range(3):
        wcat_t[g * H : (g + 1) * H, :] = W[g].T
    uzr_t = np.empty((2 * H, H))
    for g in range(2):
        uzr_t[g * H : (g + 1) * H, :] = U[g].T
    uh_t = U[2].T.copy()

    dX = np.empty((B, T, D))
    dwcat = np.zeros((D, 3 * H))
    duzr = np.zeros((H, 2 * H))
    duh = np.zeros((H, H))
    db = np.zeros(3 * H)
    dh_next = np.zeros((B, H))
    dall = np.empty((B, 3 * H))
    dh = np.empty(H)
    drh = np.empty(H)
    acc = np.empty(H)
    tw = np.empty((D, 3 * H))
    tzr = np.empty((H, 2 * H))
    th = np.empty((H, H))
    tb = np.empty(3 * H)
    for s in range(T):
        t = s if reverse else T - 1 - s
        for bi in range(B):
            for j in range(H):
                dh[j] = dH[bi, t, j] + dh_next[bi, j]
                z = zs[bi, t, j]
                hc = hcs[bi, t, j]
                dall[bi, j] = (dh[j] * (hprev[bi, t, j] - hc)) * (z * (1.0 - z))
                dall[bi, 2 * H + j] = (dh[j] * (1.0 - z)) * (1.0 - hc * hc)
            _vecmat(dall[bi, 2 * H :], uh_t, drh)
            for j in range(H):
                r = rs[bi, t, j]
                dall[bi, H + j] = (drh[j] * hprev[bi, t, j]) * (r * (1.0 - r))
            _vecmat(dall[bi, : 2 * H], uzr_t, acc)
            for k in range(H):
                dh_next[bi, k] = (dh[k] * zs[bi, t, k] + drh[k] * rs[bi, t, k]) + acc[k]
            _vecmat(dall[bi], wcat_t, dX[bi, t])
        # parameter adjoints for this step, summed over the batch in order
        tw[:] = 0.0
        tzr[:] = 0.0
        th[:] = 0.0
        for bi in range(B):
            for k in range(D):
                xk = X[bi, t, k]
                for j in range(3 * H):
                    tw[k, j] += xk * dall[bi, j]
            for k in range(H):
                hk = hprev[bi, t, k]
                rhk = rs[bi, t, k] * hk
                for j in range(2 * H):
                    tzr[k, j] += hk * dall[bi, j]
                for j in range(H):
                    th[k, j] += rhk * dall[bi, 2 * H + j]
        tb[:] = dall[0]
        for bi in range(1, B):
            for j in range(3 * H):
                tb[j] += dall[bi, j]
        dwcat += tw
        duzr += tzr
        duh += th
        db += tb
    dW = np.empty((3, D, H))
    dU = np.empty((3, H, H))
    dbo = np.empty((3, H))
    for g in range(3):
        dW[g] = dwcat[:, g * H : (g + 1) * H]
        dbo[g] = db[g * H : (g + 1) * H]
    for g in range(2):
        dU[g] = duzr[:, g * H : (g + 1) * H]
    dU[2] = duh
    return dX, dW, dU, dbo


@njit(cache=True)
def mha_forward(Hs, Wq, Wk, Wv, Wo):
    B, T, M = Hs.shape
    nh, _, dh = Wq.shape
    scale = math.sqrt(float(dh))
    Q = np.empty((B, nh, T, dh))
    K = np.empty((B, nh, T, dh))
    V = np.empty((B, nh, T, dh))
    P = np.empty((B, nh, T, T))
    C = np.empty((B, T, nh * dh))
    A = np.empty((B, T, M))
    S = np.empty(T)
    for bi in range(B):
        for i in range(nh):
            for t in range(T):
                _vecmat(Hs[bi, t], Wq[i], Q[bi, i, t])
                _vecmat(Hs[bi, t], Wk[i], K[bi, i, t])
                _vecmat(Hs[bi, t], Wv[i], V[bi, i, t])
            for t in range(T):
                for u in range(T):
                    acc = 0.0
                    for j in range(dh):
                        acc += Q[bi, i, t, j] * K[bi, i, u, j]
                    S[u] = acc / scale
                _softmax_row(S, P[bi, i, t])
                _vecmat(P[bi, i, t], V[bi, i], C[bi, t, i * dh : (i + 1) * dh])
        for t in range(T):
            _vecmat(C[bi, t], Wo, A[bi, t])
    return A, P, Q, K, V, C


@njit(cache=True)
def mha_backward(dA, Hs, Wq, Wk, Wv, Wo, P, Q, K, V, C):
    B, T, M = Hs.shape
    nh, _, dh = Wq.shape
    scale = math.sqrt(float(dh))
    wo_t = Wo.T.copy()
    wq_t = np.empty((nh, dh, M))
    wk_t = np.empty((nh, dh, M))
    wv_t = np.empty((nh, dh, M))
    for i in range(nh):
        wq_t[i] = Wq[i].T
        wk_t[i] = Wk[i].T
        wv_t[i] = Wv[i].T

    dWo = np.zeros((M, M))
    dWq = np.zeros((nh, M, dh))
    dWk = np.zeros((nh, M, dh))
    dWv = np.zeros((nh, M, dh))
    dH = np.empty((B, T, M))
    dC = np.empty((T, M))
    dP = np.empty(T)
    dS = np.empty((T, T))
    dQ = np.empty((B, nh, T, dh))
    dK = np.empty((B, nh, T, dh))
    dV = np.empty((B, nh, T, dh))
    tmp = np.empty(M)

    for bi in range(B):
        for t in range(T):
            for k in range(M):
                ck = C[bi, t, k]
                for j in range(M):
                    dWo[k, j] += ck * dA[bi, t, j]

    for bi in range(B):
        for t in range(T):
            _vecmat(dA[bi, t], wo_t, dC[t])
        for i in range(nh):
            off = i * dh
            for t in range(T):
                for u in range(T):
                    acc = 0.0
                    for j in range(dh):
                        acc += dC[t, off + j] * V[bi, i, u, j]
                    dP[u] = acc
                dot = 0.0
                for u in range(T):
                    dot += dP[u] * P[bi, i, t, u]
                for u in range(T):
                    dS[t, u] = P[bi, i, t, u] * (dP[u] - dot)
            dV[bi, i] = 0.0
            dQ[bi, i] = 0.0
            dK[bi, i] = 0.0
            for t in range(T):
                for u in range(T):
                    ptu = P[bi, i, t, u]
                    stu = dS[t, u]
                    for j in range(dh):
                        dV[bi, i, u, j] += ptu * dC[t, off + j]
                        dQ[bi, i, t, j] += stu * K[bi, i, u, j]
                        dK[bi, i, u, j] += stu * Q[bi, i, t, j]
            for t in range(T):
                for j in range(dh):
                    dQ[bi, i, t, j] = dQ[bi, i, t, j] / scale
                    dK[bi, i, t, j] = dK[bi, i, t, j] / scale

    for i in range(nh):
        for bi in range(B):
            for t in range(T):
                for k in range(M):
                    x = Hs[bi, t, k]
                    for j in range(dh):
                        dWq[i, k, j] += x * dQ[bi, i, t, j]
                        dWk[i, k, j] += x * dK[bi, i, t, j]
                        dWv[i, k, j] += x * dV[bi, i, t, j]

    for bi in range(B):
        for t in range(T):
            for i in range(nh):
                # (dQ Wq^T + dK Wk^T) + dV Wv^T, then summed over heads in order
                _vecmat(dQ[bi, i, t], wq_t[i], tmp)
                q = tmp.copy()
                _vecmat(dK[bi, i, t], wk_t[i], tmp)
                kk = tmp.copy()
                _vecmat(dV[bi, i, t], wv_t[i], tmp)
                for k in range(M):
                    contrib = (q[k] + kk[k]) + tmp[k]
                    if i == 0:
                        dH[bi, t, k] = contrib
                    else:
                        dH[bi, t, k] += contrib
    return dH, dWq, dWk, dWv, dWo


@njit(cache=True)
def layernorm_forward(X, gain, bias, eps):
    B, T, n = X.shape
    Y = np.empty_like(X)
    xhat = np.empty_like(X)
    rstd = np.empty((B, T))
    for bi in range(B):
        for t in range(T):
            s = 0.0
            for k in range(n):
                s += X[bi, t, k]
            mean = s / n
            v = 0.0
            for k in range(n):
                d = X[bi, t, k] - mean
                v += d * d
            rs = 1.0 / math.sqrt(v / n + eps)
            rstd[bi, t] = rs
            for k in range(n):
                xh = (X[bi, t, k] - mean) * rs
                xhat[bi, t, k] = xh
                Y[bi, t, k] = xh * gain[k] + bias[k]
    return Y, xhat, rstd


@njit(cache=True)
def layernorm_backward(dY, xhat, rstd, gain):
    B, T, n = dY.shape
    dX = np.empty_like(dY)
    dgain = np.zeros(n)
    dbias = np.zeros(n)
    dxh = np.empty(n)
    for bi in range(B):
        for t in range(T):
            m1 = 0.0
            m2 = 0.0
            for k in range(n):
                dxh[k] = dY[bi, t, k] * gain[k]
                m1 += dxh[k]
                m2 += dxh[k] * xhat[bi, t, k]
            m1 = m1 / n
            m2 = m2 / n
            rs = rstd[bi, t]
            for k in range(n):
                dX[bi, t, k] = rs * ((dxh[k] - m1) - xhat[bi, t, k] * m2)
                dgain[k] += dY[bi, t, k] * xhat[bi, t, k]
                dbias[k] += dY[bi, t, k]
    return dX, dgain, dbias
