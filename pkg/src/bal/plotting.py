"""Static SVG figures for CLI outputs.

Every function takes plain arrays and a target path and writes one SVG.
Output is deterministic (fixed hash salt, no date stamp).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {
    "svg.hashsalt": "bal",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

PHASE_CODES = {"NonLasing": 0, "SelfPulsing": 1, "Lasing": 2}
PHASE_COLORS = ["#4c72b0", "#dd8452", "#55a868"]


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def meanfield_trace(t, n_c, n_final, path, title=""):
    with plt.rc_context(_RC):
        fig, (a, b) = plt.subplots(1, 2, figsize=(7, 2.8))
        a.plot(t, n_c, lw=0.8)
        a.set_xlabel("t")
        a.set_ylabel("n_c")
        b.bar(np.arange(1, len(n_final) + 1), n_final, color="0.4")
        b.set_xlabel("mode p")
        b.set_ylabel("n_p (final)")
        if title:
            fig.suptitle(title)
        _save(fig, path)


def phase_map(gs, kcs, labels, path, xlabel="gamma_g", ylabel="kappa_c"):
    """Heatmap of phase labels on a (gamma_g, kappa_c) grid.

    ``labels[i][j]`` belongs to ``gs[i]``, ``kcs[j]``; unknown labels are
    left blank.
    """
    from matplotlib.colors import ListedColormap
    codes = np.full((len(kcs), len(gs)), np.nan)
    for i in range(len(gs)):
        for j in range(len(kcs)):
            codes[j, i] = PHASE_CODES.get(labels[i][j], np.nan)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.2, 3.4))
        ax.pcolormesh(_edges(gs), _edges(kcs), codes, cmap=ListedColormap(PHASE_COLORS),
                      vmin=-0.5, vmax=2.5)
        if np.all(np.asarray(gs) > 0) and len(gs) > 2 and _is_log(gs):
            ax.set_xscale("log")
        if np.all(np.asarray(kcs) > 0) and len(kcs) > 2 and _is_log(kcs):
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in PHASE_COLORS]
        ax.legend(handles, list(PHASE_CODES), fontsize=7, loc="upper left", frameon=False)
        _save(fig, path)


def _is_log(x):
    x = np.asarray(x, float)
    r = x[1:] / x[:-1]
    return np.allclose(r, r[0], rtol=1e-6) and not np.allclose(np.diff(x), np.diff(x)[0])


def _edges(x):
    x = np.asarray(x, float)
    if x.size == 1:
        return np.array([x[0] * 0.9, x[0] * 1.1])
    if np.all(x > 0) and _is_log(x):
        lx = np.log(x)
        mid = 0.5 * (lx[1:] + lx[:-1])
        return np.exp(np.concatenate(([2 * lx[0] - mid[0]], mid, [2 * lx[-1] - mid[-1]])))
    mid = 0.5 * (x[1:] + x[:-1])
    return np.concatenate(([2 * x[0] - mid[0]], mid, [2 * x[-1] - mid[-1]]))


def period_collapse(curves, path):
    """``curves`` maps a label to ``(kappa_c/gamma_g, sqrt(gamma_g*hop)*tau)``."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for label, (x, y) in curves.items():
            ax.plot(x, y, "o-", ms=2.5, lw=0.8, label=label)
        ax.set_xlabel("kappa_c / gamma_g")
        ax.set_ylabel("sqrt(gamma_g Gamma) tau")
        if len(curves) <= 12:
            ax.legend(fontsize=5, frameon=False)
        _save(fig, path)


def ensemble_means(t, mean, se, labels, path, oracle=None):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for k, lab in enumerate(labels):
            line, = ax.plot(t, mean[:, k], lw=0.9, label=lab)
            ax.fill_between(t, mean[:, k] - se[:, k], mean[:, k] + se[:, k],
                            color=line.get_color(), alpha=0.25, lw=0)
            if oracle is not None:
                ax.plot(oracle[0], oracle[1][:, k], "k:", lw=0.8)
        ax.set_xlabel("t")
        ax.set_ylabel("mean occupation")
        ax.legend(fontsize=7, frameon=False)
        _save(fig, path)


def spectrum(omega, S, path, omega_max=None, omega_floor=None):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        sel = omega >= 0
        ax.plot(omega[sel], S[sel], lw=0.8)
        if omega_max is not None:
            ax.axvline(omega_max, color="C3", lw=0.6, ls="--")
        if omega_floor is not None:
            ax.axvline(omega_floor, color="0.5", lw=0.6, ls=":")
        ax.set_xlabel("omega")
        ax.set_ylabel("S(omega)")
        _save(fig, path)


def beta_curve(ratio, beta, err, path):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.errorbar(ratio, beta, yerr=err, fmt="*-", ms=6, lw=0.8, capsize=2)
        ax.set_xscale("log")
        ax.set_xlabel("gamma_g / kappa_c")
        ax.set_ylabel("beta")
        _save(fig, path)


def detector_histograms(hists, path):
    """``hists`` maps ``n1_init`` to an array of ``n_out`` values."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        hi = max(int(v.max()) for v in hists.values()) + 1
        bins = np.arange(0, hi + 1) - 0.5
        for n1, v in hists.items():
            ax.hist(v, bins=bins, histtype="stepfilled", alpha=0.45, label=f"n1={n1}")
        ax.set_xlabel("n_out")
        ax.set_ylabel("runs")
        ax.legend(fontsize=7, frameon=False)
        _save(fig, path)
