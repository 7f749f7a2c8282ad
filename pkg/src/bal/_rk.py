"""Dormand-Prince 5(4) integrator for the mean-field equations, JIT-compiled.

Coefficients follow Dormand & Prince (1980); the continuous extension is the
standard quartic interpolant of DOPRI5.  Step-size control uses the usual
RMS norm of the embedded error scaled by ``atol + rtol*max(|y_old|, |y_new|)``.
"""

import numpy as np
from numba import njit

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
])
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

OK = 0
UNDERFLOW = 1
MAX_STEPS = 2


@njit(cache=True, nogil=True)
def rhs(y, rates, out):
    """Mean-field drift on ``y = [a_c, n_1..n_N]``.

    ``rates = [hop, gamma_up, gamma_down, kappa_c, kappa_l, kappa_0]``.
    """
    hop, gup, gdn, kc, kl, k0 = rates[0], rates[1], rates[2], rates[3], rates[4], rates[5]
    a = y[0]
    N = y.shape[0] - 1
    stim = 1.0 + a * a
    jcum = 0.0
    for i in range(1, N + 1):
        out[i] = -k0 * y[i]
    for p in range(1, N):
        j = hop * y[p] * (1.0 + y[p + 1])
        jcum += j
        out[p] -= stim * j
        out[p + 1] += stim * j
    out[1] += gup * (1.0 + y[1]) - gdn * y[1]
    out[N] -= kl * y[N]
    out[0] = 0.5 * (jcum - kc) * a


@njit(cache=True)
def _initial_step(y0, f0, rates, rtol, atol, span):
    n = y0.shape[0]
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + abs(y0[i]) * rtol
        d0 += (y0[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = np.sqrt(d0 / n)
    d1 = np.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    f1 = np.empty(n)
    rhs(y1, rates, f1)
    d2 = 0.0
    for i in range(n):
        sc = atol + abs(y0[i]) * rtol
        d2 += ((f1[i] - f0[i]) / sc) ** 2
    d2 = np.sqrt(d2 / n) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


@njit(cache=True, nogil=True)
def integrate(y0, rates, t_end, rtol, atol, t_eval, clamp_tol, max_steps):
    """Integrate from t=0 to ``t_end``; return states at ``t_eval``.

    Returns ``(out, status, n_accepted, n_rejected)``.  Ladder occupations
    that dip into ``(-clamp_tol, 0)`` after an accepted step are reset to 0.
    """
    n = y0.shape[0]
    m = t_eval.shape[0]
    out = np.full((m, n), np.nan)
    K = np.zeros((7, n))
    y = y0.copy()
    ynew = np.empty(n)
    ytmp = np.empty(n)
    f = np.empty(n)
    rhs(y, rates, f)
    t = 0.0
    h = _initial_step(y, f, rates, rtol, atol, t_end)
    k_eval = 0
    while k_eval < m and t_eval[k_eval] <= 0.0:
        out[k_eval] = y
        k_eval += 1
    n_acc = 0
    n_rej = 0
    status = OK
    while t < t_end:
        if n_acc + n_rej >= max_steps:
            status = MAX_STEPS
            break
        hmin = 10.0 * np.finfo(np.float64).eps * max(abs(t), 1.0)
        if h < hmin:
            status = UNDERFLOW
            break
        if t + h > t_end:
            h = t_end - t
        for i in range(n):
            K[0, i] = f[i]
        for s in range(1, 6):
            for i in range(n):
                acc = 0.0
                for j in range(s):
                    acc += A[s, j] * K[j, i]
                ytmp[i] = y[i] + h * acc
            rhs(ytmp, rates, K[s])
        for i in range(n):
            acc = 0.0
            for j in range(6):
                acc += B[j] * K[j, i]
            ynew[i] = y[i] + h * acc
        rhs(ynew, rates, K[6])
        err = 0.0
        for i in range(n):
            e = 0.0
            for j in range(7):
                e += E[j] * K[j, i]
            sc = atol + max(abs(y[i]), abs(ynew[i])) * rtol
            err += (h * e / sc) ** 2
        err = np.sqrt(err / n)
        if err <= 1.0:
            t_new = t + h
            # dense output for all requested times in (t, t_new]
            while k_eval < m and t_eval[k_eval] <= t_new:
                x = (t_eval[k_eval] - t) / h
                for i in range(n):
                    q = 0.0
                    xp = 1.0
                    for c in range(4):
                        xp *= x
                        acc = 0.0
                        for j in range(7):
                            acc += K[j, i] * P[j, c]
                        q += acc * xp
                    out[k_eval, i] = y[i] + h * q
                for i in range(1, n):
                    if -clamp_tol < out[k_eval, i] < 0.0:
                        out[k_eval, i] = 0.0
                k_eval += 1
            clamped = False
            for i in range(1, n):
                if -clamp_tol < ynew[i] < 0.0:
                    ynew[i] = 0.0
                    clamped = True
            t = t_new
            for i in range(n):
                y[i] = ynew[i]
            if clamped:
                rhs(y, rates, f)
            else:
                for i in range(n):
                    f[i] = K[6, i]
            n_acc += 1
            fac = 10.0 if err == 0.0 else min(10.0, 0.9 * err ** -0.2)
            h *= fac
        else:
            n_rej += 1
            h *= max(0.2, 0.9 * err ** -0.2)
    while k_eval < m and status == OK:
        out[k_eval] = y
        k_eval += 1
    return out, status, n_acc, n_rej
