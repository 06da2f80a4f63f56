"""Pure-numpy kernels.

Vectorised over the batch axis. Every contraction goes through ``mm``, which
accumulates the inner index in ascending order, and every reduction through
``lastsum``/``firstsum``, so results do not depend on numpy's pairwise
summation or on any BLAS build.
"""

import numpy as np


def mm(a, b):
    """Broadcasting matmul with a fixed ascending-k summation order."""
    k = a.shape[-1]
    if k != b.shape[-2]:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")
    out = a[..., :, 0:1] * b[..., 0:1, :]
    for i in range(1, k):
        out += a[..., :, i : i + 1] * b[..., i : i + 1, :]
    return out


def lastsum(a):
    acc = a[..., 0].copy()
    for i in range(1, a.shape[-1]):
        acc += a[..., i]
    return acc


def firstsum(a):
    acc = a[0].copy()
    for i in range(1, a.shape[0]):
        acc += a[i]
    return acc


def matmul(a, b):
    return mm(a, b)


def sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax_rows(m):
    mx = np.max(m, axis=-1, keepdims=True)
    e = np.exp(m - mx)
    return e / lastsum(e)[..., None]


def gru_scan_forward(X, W, U, b, reverse):
    """Run one GRU direction over a batch of sequences.

    X is (B, T, D); W is (3, D, H), U is (3, H, H), b is (3, H) with gate
    order (update, reset, candidate). All outputs are (B, T, H) indexed by
    original time, so a reverse scan fills them from T-1 down to 0.
    """
    B, T, _ = X.shape
    H = U.shape[1]
    wcat = np.concatenate((W[0], W[1], W[2]), axis=1)
    uzr = np.concatenate((U[0], U[1]), axis=1)
    xw = mm(X, wcat)

    out = np.empty((B, T, H))
    hprev = np.empty((B, T, H))
    zs = np.empty((B, T, H))
    rs = np.empty((B, T, H))
    hcs = np.empty((B, T, H))
    h = np.zeros((B, H))
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        hu = mm(h, uzr)
        z = sigmoid((xw[:, t, :H] + hu[:, :H]) + b[0])
        r = sigmoid((xw[:, t, H : 2 * H] + hu[:, H:]) + b[1])
        hc = np.tanh((xw[:, t, 2 * H :] + mm(r * h, U[2])) + b[2])
        hprev[:, t] = h
        zs[:, t] = z
        rs[:, t] = r
        hcs[:, t] = hc
        h = z * h + (1.0 - z) * hc
        out[:, t] = h
    return out, hprev, zs, rs, hcs


def gru_scan_backward(X, W, U, hprev, zs, rs, hcs, dH, reverse):
    """Backpropagation through time for one direction.

    Returns (dX, dW, dU, db) shaped like (X, W, U, b).
    """
    B, T, D = X.shape
    H = U.shape[1]
    wcat_t = np.concatenate((W[0], W[1], W[2]), axis=1).T
    uzr_t = np.concatenate((U[0], U[1]), axis=1).T
    uh_t = U[2].T

    dX = np.empty((B, T, D))
    dwcat = np.zeros((D, 3 * H))
    duzr = np.zeros((H, 2 * H))
    duh = np.zeros((H, H))
    db = np.zeros(3 * H)
    dh_next = np.zeros((B, H))
    order = range(T) if reverse else range(T - 1, -1, -1)
    for t in order:
        h = hprev[:, t]
        z = zs[:, t]
        r = rs[:, t]
        hc = hcs[:, t]
        dh = dH[:, t] + dh_next
        daz = (dh * (h - hc)) * (z * (1.0 - z))
        dah = (dh * (1.0 - z)) * (1.0 - hc * hc)
        drh = mm(dah, uh_t)
        dar = (drh * h) * (r * (1.0 - r))
        dazr = np.concatenate((daz, dar), axis=1)
        dall = np.concatenate((daz, dar, dah), axis=1)
        dh_next = (dh * z + drh * r) + mm(dazr, uzr_t)
        dX[:, t] = mm(dall, wcat_t)
        dwcat += mm(X[:, t].T, dall)
        duzr += mm(h.T, dazr)
        duh += mm((r * h).T, dah)
        db += firstsum(dall)
    dW = np.stack((dwcat[:, :H], dwcat[:, H : 2 * H], dwcat[:, 2 * H :]))
    dU = np.stack((duzr[:, :H], duzr[:, H:], duh))
    return dX, dW, dU, db.reshape(3, H)


def mha_forward(Hs, Wq, Wk, Wv, Wo):
    """Multi-head scaled dot-product self-attention.

    Hs is (B, T, M); Wq/Wk/Wv are (heads, M, dh); Wo is (M, M). Returns
    (A, P, Q, K, V, C) where P holds the per-head attention weights
    (B, heads, T, T) and C the head-major concatenation (B, T, M).
    """
    B, T, M = Hs.shape
    nh, _, dh = Wq.shape
    scale = np.sqrt(float(dh))
    x = Hs[:, None]
    Q = mm(x, Wq[None])
    K = mm(x, Wk[None])
    V = mm(x, Wv[None])
    S = mm(Q, K.swapaxes(-1, -2)) / scale
    P = softmax_rows(S)
    O = mm(P, V)
    C = O.transpose(0, 2, 1, 3).reshape(B, T, nh * dh)
    A = mm(C, Wo)
    return A, P, Q, K, V, C


def mha_backward(dA, Hs, Wq, Wk, Wv, Wo, P, Q, K, V, C):
    B, T, M = Hs.shape
    nh, _, dh = Wq.shape
    scale = np.sqrt(float(dh))
    dWo = mm(C.reshape(B * T, M).T, dA.reshape(B * T, M))
    dC = mm(dA, Wo.T)
    dO = dC.reshape(B, T, nh, dh).transpose(0, 2, 1, 3)
    dP = mm(dO, V.swapaxes(-1, -2))
    dV = mm(P.swapaxes(-1, -2), dO)
    dS = P * (dP - lastsum(dP * P)[..., None])
    dQ = mm(dS, K) / scale
    dK = mm(dS.swapaxes(-1, -2), Q) / scale

    hflat_t = Hs.reshape(B * T, M).T

    def per_head(g):
        return mm(hflat_t, g.transpose(1, 0, 2, 3).reshape(nh, B * T, dh))

    dWq = per_head(dQ)
    dWk = per_head(dK)
    dWv = per_head(dV)
    contrib = (
        mm(dQ, Wq.swapaxes(-1, -2)[None])
        + mm(dK, Wk.swapaxes(-1, -2)[None])
        + mm(dV, Wv.swapaxes(-1, -2)[None])
    )
    dH = contrib.transpose(1, 0, 2, 3)
    dH = firstsum(dH)
    return dH, dWq, dWk, dWv, dWo


def layernorm_forward(X, gain, bias, eps):
    n = X.shape[-1]
    mean = lastsum(X) / n
    xc = X - mean[..., None]
    var = lastsum(xc * xc) / n
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd[..., None]
    return xhat * gain + bias, xhat, rstd


def layernorm_backward(dY, xhat, rstd, gain):
    n = dY.shape[-1]
    dxhat = dY * gain
    m1 = lastsum(dxhat) / n
    m2 = lastsum(dxhat * xhat) / n
    dX = rstd[..., None] * ((dxhat - m1[..., None]) - xhat * m2[..., None])
    flat_dy = dY.reshape(-1, n)
    dgain = firstsum(flat_dy * xhat.reshape(-1, n))
    dbias = firstsum(flat_dy)
    return dX, dgain, dbias
