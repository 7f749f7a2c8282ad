"""Independent reference values, frozen into ../fixtures/oracles.json.

Nothing here imports the package under test.  Run once; the JSON is
committed and the tests compare against it.
"""

import itertools
import json
from pathlib import Path

import mpmath as mp
import numpy as np
from scipy.linalg import expm
from scipy.optimize import root

mp.mp.dps = 40
OUT = Path(__file__).resolve().parent.parent / "fixtures" / "oracles.json"


def circuit():
    a2, a3 = mp.mpf("2.4"), mp.mpf("2.1")
    sp, sc, st = mp.mpf("-0.85"), mp.mpf("0.88"), mp.mpf("-0.33")
    cp, cc, ct = mp.sqrt(1 - sp ** 2), mp.sqrt(1 - sc ** 2), -mp.sqrt(1 - st ** 2)
    r1 = a3 * sp + a2 * sc + st
    r2 = a3 / 3 * cp + a2 / 2 * cc + ct
    r3 = a3 / 9 * sp + a2 / 4 * sc + st

    def B(n):
        p, even = divmod(n - 1, 2)
        w3, w2 = a3 / mp.mpf(3) ** (2 * p), a2 / mp.mpf(2) ** (2 * p)
        s = (-1) ** p
        return s * (w3 * cp + w2 * cc + ct) if even else s * (w3 * sp + w2 * sc + st)

    EJ, Z, Z0 = mp.mpf("50e9"), mp.mpf(160), mp.mpf("4.1e3")
    g = 2 * EJ * abs(st) / (3 * 5) * mp.mpf("0.25") * (Z / Z0) ** 2
    gamma = 4 * g ** 2 / mp.mpf("30e6")
    kerr = mp.mpf("0.75") * EJ * (Z / Z0) ** 2 / 2
    # best max|r| over all 64 sign choices
    best = min(
        max(abs(a3 * s[0] * abs(sp) + a2 * s[2] * abs(sc) + s[4] * abs(st)),
            abs(a3 / 3 * s[1] * cp + a2 / 2 * s[3] * cc + s[5] * abs(ct)),
            abs(a3 / 9 * s[0] * abs(sp) + a2 / 4 * s[2] * abs(sc) + s[4] * abs(st)))
        for s in itertools.product((1, -1), repeat=6))
    return {
        "residuals": [float(r1), float(r2), float(r3)],
        "B": [float(B(n)) for n in range(1, 10)],
        "g_hz": float(g), "hop_rate_hz": float(gamma), "kerr_hz_B4_075": float(kerr),
        "best_max_residual": float(best),
    }


def asip(gamma_g=5.0, hop=1.0, kappa_l=10.0, N=10):
    """Dark-cavity steady state: zero of the ladder drift, found numerically."""
    def f(n):
        J = hop * n[:-1] * (1 + n[1:])
        d = np.zeros(N)
        d[:-1] -= J
        d[1:] += J
        d[0] += gamma_g  # gamma(1+n1) - gamma n1
        d[-1] -= kappa_l * n[-1]
        return d
    sol = root(f, np.full(N, 1.0), method="hybr", tol=1e-14)
    assert sol.success
    return {"params": [gamma_g, hop, kappa_l, N], "profile": sol.x.tolist()}


def master(T=0.1, n_max=6):
    """N=2, all rates 1, dense generator from explicit state loops."""
    g = hop = kc = kl = 1.0
    states = list(itertools.product(range(n_max + 1), repeat=3))  # (n_c, n1, n2)
    index = {s: i for i, s in enumerate(states)}
    Q = np.zeros((len(states), len(states)))
    for s in states:
        nc, n1, n2 = s
        moves = [((nc + 1, n1 - 1, n2 + 1), hop * (1 + nc) * n1 * (1 + n2)),
                 ((nc, n1 + 1, n2), g * (1 + n1)),
                 ((nc, n1 - 1, n2), g * n1),
                 ((nc, n1, n2 - 1), kl * n2),
                 ((nc - 1, n1, n2), kc * nc)]
        for t, r in moves:
            if r > 0 and t in index:
                Q[index[t], index[s]] += r
                Q[index[s], index[s]] -= r
    p0 = np.zeros(len(states))
    p0[index[(0, 0, 0)]] = 1.0
    times = np.linspace(0, T, 21)
    occ = np.array(states, float)
    means = [(expm(Q * t) @ p0) @ occ for t in times]
    return {"T": T, "n_max": n_max, "times": times.tolist(), "mean": np.array(means).tolist()}


if __name__ == "__main__":
    data = {"circuit": circuit(), "asip": asip(), "master_N2": master()}
    OUT.write_text(json.dumps(data, indent=1) + "\n")
    print(f"wrote {OUT}")
