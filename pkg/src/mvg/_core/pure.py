"""Pure-numpy fallback for the compiled kernels.

Signatures and numerics match ``mvg._core._ckernels`` exactly; the test
suite asserts parity whenever the extension is importable.
"""

import numpy as np

BACKEND = "python"


def lstm_cell_forward(pre, c_prev):
    """One LSTM cell step from gate pre-activations.

    pre     (B, 4H) pre-activations, gate order [input, forget, cell, output]
    c_prev  (B, H)  previous cell state

    Returns (h, c, gates) with gates the activated values, kept for backward.
    """
    hdim = c_prev.shape[1]
    i = _sigmoid(pre[:, :hdim])
    f = _sigmoid(pre[:, hdim:2 * hdim])
    g = np.tanh(pre[:, 2 * hdim:3 * hdim])
    o = _sigmoid(pre[:, 3 * hdim:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    gates = np.concatenate([i, f, g, o], axis=1)
    return h, c, gates


def lstm_cell_backward(dh, dc_in, gates, c_prev, c):
    """Backward of ``lstm_cell_forward``.

    Returns (dpre, dc_prev); dh/dc_in are gradients w.r.t. this step's h/c.
    """
    hdim = c_prev.shape[1]
    i = gates[:, :hdim]
    f = gates[:, hdim:2 * hdim]
    g = gates[:, 2 * hdim:3 * hdim]
    o = gates[:, 3 * hdim:]
    tc = np.tanh(c)
    do = dh * tc
    dc = dc_in + dh * o * (1.0 - tc * tc)
    di = dc * g
    df = dc * c_prev
    dg = dc * i
    dpre = np.concatenate([
        di * i * (1.0 - i),
        df * f * (1.0 - f),
        dg * (1.0 - g * g),
        do * o * (1.0 - o),
    ], axis=1)
    dc_prev = dc * f
    return dpre, dc_prev


def levenshtein(a, b):
    """Unit-cost edit distance between two int sequences."""
    a = np.asarray(a, dtype=np.int32)
    b = np.asarray(b, dtype=np.int32)
    if a.size == 0:
        return int(b.size)
    if b.size == 0:
        return int(a.size)
    prev = np.arange(b.size + 1, dtype=np.int64)
    cur = np.empty(b.size + 1, dtype=np.int64)
    for x in range(1, a.size + 1):
        cur[0] = x
        for y in range(1, b.size + 1):
            cost = 0 if a[x - 1] == b[y - 1] else 1
            cur[y] = min(prev[y] + 1, cur[y - 1] + 1, prev[y - 1] + cost)
        prev, cur = cur, prev
    return int(prev[b.size])


def tree_edit_distance(lmd1, kr1, lab1, lmd2, kr2, lab2):
    """Ordered tree edit distance (Zhang-Shasha), unit costs.

    Trees arrive as postorder arrays: lmd* holds each node's leftmost-leaf
    descendant index, kr* the keyroots in ascending order, lab* integer
    label codes.
    """
    n1 = len(lab1)
    n2 = len(lab2)
    if n1 == 0:
        return int(n2)
    if n2 == 0:
        return int(n1)
    td = np.zeros((n1, n2), dtype=np.int64)
    for i in kr1:
        for j in kr2:
            m = i - lmd1[i] + 2
            n = j - lmd2[j] + 2
            fd = np.zeros((m, n), dtype=np.int64)
            ioff = lmd1[i] - 1
            joff = lmd2[j] - 1
            for x in range(1, m):
                fd[x, 0] = fd[x - 1, 0] + 1
            for y in range(1, n):
                fd[0, y] = fd[0, y - 1] + 1
            for x in range(1, m):
                for y in range(1, n):
                    if lmd1[i] == lmd1[x + ioff] and lmd2[j] == lmd2[y + joff]:
                        cost = 0 if lab1[x + ioff] == lab2[y + joff] else 1
                        fd[x, y] = min(fd[x - 1, y] + 1,
                                       fd[x, y - 1] + 1,
                                       fd[x - 1, y - 1] + cost)
                        td[x + ioff, y + joff] = fd[x, y]
                    else:
                        p = lmd1[x + ioff] - 1 - ioff
                        q = lmd2[y + joff] - 1 - joff
                        fd[x, y] = min(fd[x - 1, y] + 1,
                                       fd[x, y - 1] + 1,
                                       fd[p, q] + td[x + ioff, y + joff])
    return int(td[n1 - 1, n2 - 1])


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
