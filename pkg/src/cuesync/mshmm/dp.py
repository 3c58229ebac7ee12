"""Log-domain dynamic programming kernels.

Every HMM unit is a 3-state left-to-right chain with per-state log
probabilities ``stay`` (self-loop) and ``adv`` (move on / exit).
"""
import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True)
def _lae(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


@njit(cache=True)
def chain_forward(E, stay, adv):
    """Forward pass over a linear chain that must start in state 0 and exit the last state.

    ``E`` is (T, N) emission log-probs. Returns (alpha, log P).
    """
    T, N = E.shape
    alpha = np.full((T, N), -np.inf)
    alpha[0, 0] = E[0, 0]
    for t in range(1, T):
        for k in range(N):
            v = alpha[t - 1, k] + stay[k]
            if k > 0:
                v = _lae(v, alpha[t - 1, k - 1] + adv[k - 1])
            alpha[t, k] = v + E[t, k]
    return alpha, alpha[T - 1, N - 1] + adv[N - 1]


@njit(cache=True)
def chain_backward(E, stay, adv):
    T, N = E.shape
    beta = np.full((T, N), -np.inf)
    beta[T - 1, N - 1] = adv[N - 1]
    for t in range(T - 2, -1, -1):
        for k in range(N):
            v = stay[k] + E[t + 1, k] + beta[t + 1, k]
            if k + 1 < N:
                v = _lae(v, adv[k] + E[t + 1, k + 1] + beta[t + 1, k + 1])
            beta[t, k] = v
    return beta


@njit(cache=True)
def chain_viterbi(E, stay, adv):
    """Best state path through a linear chain (forced alignment)."""
    T, N = E.shape
    delta = np.full((T, N), -np.inf)
    moved = np.zeros((T, N), dtype=np.bool_)
    delta[0, 0] = E[0, 0]
    for t in range(1, T):
        for k in range(N):
            v = delta[t - 1, k] + stay[k]
            m = False
            if k > 0:
                w = delta[t - 1, k - 1] + adv[k - 1]
                if w > v:
                    v = w
                    m = True
            delta[t, k] = v + E[t, k]
            moved[t, k] = m
    score = delta[T - 1, N - 1] + adv[N - 1]
    path = np.zeros(T, dtype=np.int64)
    k = N - 1
    for t in range(T - 1, -1, -1):
        path[t] = k
        if t > 0 and moved[t, k]:
            k -= 1
    return path, score


@njit(cache=True)
def loop_viterbi(E, stay, adv, center, left, right, n_centers, entry_logp):
    """Viterbi over a loop of units with optional triphone context constraints.

    ``E`` is (T, 3U) with unit ``u`` owning columns ``3u..3u+2``. Unit X may
    be followed by Y when ``right[X]`` is -1 or ``center[Y]``, and ``left[Y]``
    is -1 or ``center[X]``. Every unit entry costs ``entry_logp``. Ties go to
    the lower unit index. Returns (state path, log score).
    """
    T, S = E.shape
    U = S // 3
    delta = np.full(S, -np.inf)
    new = np.empty(S)
    bp = np.empty((T, S), dtype=np.int64)  # -2 stay, -1 from previous state, >=0 entering from unit
    for u in range(U):
        delta[3 * u] = entry_logp + E[0, 3 * u]
    bp[0, :] = -2
    C1 = n_centers + 1
    best = np.empty((n_centers, C1))
    best_u = np.empty((n_centers, C1), dtype=np.int64)
    anyc = np.empty(C1)
    anyc_u = np.empty(C1, dtype=np.int64)
    for t in range(1, T):
        best[:, :] = -np.inf
        best_u[:, :] = -1
        for x in range(U):
            v = delta[3 * x + 2] + adv[3 * x + 2]
            r = right[x] + 1
            c = center[x]
            if v > best[c, r]:
                best[c, r] = v
                best_u[c, r] = x
        anyc[:] = -np.inf
        anyc_u[:] = -1
        for r in range(C1):
            for c in range(n_centers):
                v = best[c, r]
                x = best_u[c, r]
                if v > anyc[r] or (v == anyc[r] and x >= 0 and (anyc_u[r] < 0 or x < anyc_u[r])):
                    anyc[r] = v
                    anyc_u[r] = x
        for y in range(U):
            cy = center[y] + 1
            if left[y] >= 0:
                v1, x1 = best[left[y], 0], best_u[left[y], 0]
                v2, x2 = best[left[y], cy], best_u[left[y], cy]
            else:
                v1, x1 = anyc[0], anyc_u[0]
                v2, x2 = anyc[cy], anyc_u[cy]
            if v2 > v1 or (v2 == v1 and x2 >= 0 and (x1 < 0 or x2 < x1)):
                v1, x1 = v2, x2
            s0 = 3 * y
            stay_v = delta[s0] + stay[s0]
            enter_v = v1 + entry_logp
            if enter_v > stay_v:
                new[s0] = enter_v + E[t, s0]
                bp[t, s0] = x1
            else:
                new[s0] = stay_v + E[t, s0]
                bp[t, s0] = -2
            for j in range(1, 3):
                s = s0 + j
                a = delta[s] + stay[s]
                b = delta[s - 1] + adv[s - 1]
                if b > a:
                    new[s] = b + E[t, s]
                    bp[t, s] = -1
                else:
                    new[s] = a + E[t, s]
                    bp[t, s] = -2
        delta[:] = new
    score = -np.inf
    last = -1
    for x in range(U):
        v = delta[3 * x + 2] + adv[3 * x + 2]
        if v > score:
            score = v
            last = 3 * x + 2
    path = np.zeros(T, dtype=np.int64)
    if last < 0:
        return path, score
    s = last
    for t in range(T - 1, -1, -1):
        path[t] = s
        b = bp[t, s]
        if t == 0:
            break
        if b == -1:
            s -= 1
        elif b >= 0:
            s = 3 * b + 2
    return path, score
