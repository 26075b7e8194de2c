"""Pure-Python/numpy versions of the hot kernels (fallback backend)."""

import numpy as np


def viterbi(emit, trans):
    """Exact argmax over label paths of per-frame emission plus transition scores.

    Ties go to the lexicographically smallest path: a backward pass computes
    the best completion score of every (frame, label), then the path is read
    forward taking the first maximiser at each frame.
    """
    M, K = emit.shape
    beta = np.zeros((M, K))
    for j in range(M - 2, -1, -1):
        beta[j] = (trans + emit[j + 1] + beta[j + 1]).max(axis=1)
    path = np.zeros(M, dtype=np.int64)
    first = emit[0] + beta[0]
    path[0] = int(np.argmax(first))
    total = float(first[path[0]])
    for j in range(1, M):
        cand = trans[path[j - 1]] + emit[j] + beta[j]
        path[j] = int(np.argmax(cand))
    return path, total


def edit_distance(a, b):
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        ai = a[i - 1]
        for j in range(1, m + 1):
            cur[j] = min(prev[j - 1] + (ai != b[j - 1]), prev[j] + 1, cur[j - 1] + 1)
        prev = cur
    return int(prev[m])


def psi_first_order(x, y, K):
    M, D = x.shape
    out = np.zeros(D * K + K * K)
    obs = out[: D * K].reshape(K, D)
    np.add.at(obs, y, x)
    if M > 1:
        np.add.at(out, D * K + y[:-1] + y[1:] * K, 1.0)
    return out
