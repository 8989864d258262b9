"""Pure-Python reference implementation of the hot kernels.

Must stay semantically identical to ``_fast.pyx``; the backend agreement
test compares the two on random inputs.
"""

import math

TINY_TARGET = 1e-12
EXP_CLAMP = 600.0
_MAX_BISECT = 200


def v_star(gamma: float, eps: float) -> float:
    """Root of (p + eps) = (1/gamma + p) * ln(1 + gamma*p), p >= 0.

    Bracketed bisection with an expanding upper bracket; exact 0 when
    eps == 0.  The residual of the returned root is below 1e-9.
    """
    if eps <= 0.0:
        return 0.0
    inv = 1.0 / gamma

    def f(p: float) -> float:
        return (inv + p) * math.log1p(gamma * p) - (p + eps)

    hi = 1.0
    grow = 0
    while f(hi) < 0.0:
        hi *= 2.0
        grow += 1
        if grow > _MAX_BISECT:
            break
    lo = 0.0
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def pour(taus, gammas, vstars, eps, target, data_target=False):
    """Fill cells to a common glue level until `target` is used.

    Cells are (duration, gain, threshold-power) triples; the glue level of
    cell j starts moving at the threshold 1/gamma_j + vstar_j.  Walking the
    sorted thresholds, usage grows linearly in the level between thresholds
    (all earlier cells full) and jumps by the bursty capacity
    tau*(vstar+eps) (energy) or tau*rate(gamma, vstar) (data) at each
    threshold.  The walk inverts that monotone map exactly.

    Returns (powers, durations, level); level is 0.0 when nothing is
    allocated.
    """
    n = len(taus)
    p = [0.0] * n
    th = [0.0] * n
    if n == 0 or target <= TINY_TARGET:
        return p, th, 0.0
    thr = [1.0 / gammas[j] + vstars[j] for j in range(n)]
    order = sorted(range(n), key=lambda j: thr[j])
    s_tau = 0.0
    at = 0.0
    cur = thr[order[0]]
    active = []
    for idx in order:
        t = thr[idx]
        if s_tau > 0.0 and t > cur:
            if data_target:
                seg = 0.5 * s_tau * math.log(t / cur)
            else:
                seg = s_tau * (t - cur)
            if at + seg >= target:
                xi = _level_on_segment(cur, s_tau, target - at, data_target)
                _fill(active, xi, taus, gammas, p, th)
                return p, th, xi
            at += seg
        cur = t
        if data_target:
            unit = 0.5 * math.log1p(gammas[idx] * vstars[idx])
        else:
            unit = vstars[idx] + eps
        jump = taus[idx] * unit
        if jump > 0.0 and at + jump >= target:
            _fill(active, t, taus, gammas, p, th)
            p[idx] = vstars[idx]
            th[idx] = (target - at) / unit
            return p, th, t
        at += jump
        active.append(idx)
        s_tau += taus[idx]
    xi = _level_on_segment(cur, s_tau, target - at, data_target)
    _fill(active, xi, taus, gammas, p, th)
    return p, th, xi


def _level_on_segment(cur, s_tau, amount, data_target):
    if data_target:
        return cur * math.exp(min(2.0 * amount / s_tau, EXP_CLAMP))
    return cur + amount / s_tau


def _fill(active, xi, taus, gammas, p, th):
    for j in active:
        p[j] = xi - 1.0 / gammas[j]
        th[j] = taus[j]
