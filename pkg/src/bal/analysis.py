"""Correlation, normalized noise spectrum and coherence parameter of
cavity-occupation records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal.windows import tukey

from .model import FockConfig, SystemParams, make_pump
from .stochastic import EnsembleSpec, _ordered_map, simulate_trajectory, trajectory_seed

__all__ = [
    "DegenerateSeries",
    "AllDegenerate",
    "NoInteriorPeak",
    "SpectrumResult",
    "PeakStats",
    "autocorrelation",
    "normalized_correlation",
    "noise_spectrum",
    "spectrum_from_correlation",
    "peak_stats",
    "coherence_beta",
    "analyze_spectrum",
    "BetaPoint",
    "beta_sweep",
    "spectrum_point",
    "default_omega_floor",
    "default_max_lag",
    "default_record_length",
]

DEFAULT_FLAT_FRACTION = 0.8
DEFAULT_PAD = 4
# spectral lag window as a fraction of the record length; the full T/2 range
# leaves the peak width dominated by estimator noise at K ~ 50
DEFAULT_LAG_FRACTION = 0.2


class DegenerateSeries(ValueError):
    """Series has zero variance."""


class AllDegenerate(ValueError):
    pass


class NoInteriorPeak(ValueError):
    pass


def autocorrelation(series, dt: float, max_lag: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Time-averaged correlation of a uniformly sampled record.

    ``C(k) = mean_j x_j x_{j+k} - mean(x)^2``, each lag averaged over the
    ``M - k`` available pairs (no periodic wrap).  Lags run up to half the
    record unless ``max_lag`` is given.  Returns ``(lags, C)``.

    Raises
    ------
    DegenerateSeries
        If the record is constant.
    """
    x = np.asarray(series, dtype=float)
    M = x.size
    if M < 2:
        raise ValueError("need at least two samples")
    L = M // 2 if max_lag is None else min(M - 1, int(round(max_lag / dt)))
    m = x.mean()
    y = x - m
    # products are accumulated on the centred record and shifted back, which
    # is exact and avoids cancellation for large means
    nfft = 1 << int(math.ceil(math.log2(2 * M)))
    F = np.fft.rfft(y, nfft)
    yy = np.fft.irfft(F * np.conj(F), nfft)[:L + 1]
    cs = np.concatenate(([0.0], np.cumsum(y)))
    k = np.arange(L + 1)
    head = cs[M - k]           # sum_{j < M-k} y_j
    tail = cs[M] - cs[k]       # sum_{j >= k} y_j
    npairs = M - k
    C = (yy + m * (head + tail)) / npairs
    var = y @ y / M
    if not var > 1e-14 * max(1.0, m * m):
        raise DegenerateSeries("constant series has no fluctuations")
    C[0] = var
    return k * dt, C


def normalized_correlation(series, dt, max_lag=None):
    lags, C = autocorrelation(series, dt, max_lag)
    return lags, C / C[0]


@dataclass(frozen=True)
class PeakStats:
    omega_max: float
    S_max: float
    delta_omega: float
    one_sided: bool = False


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    """Normalized noise spectrum on a symmetric angular-frequency grid."""

    omega: np.ndarray = field(repr=False)
    S: np.ndarray = field(repr=False)
    omega_max: float | None = None
    S_max: float | None = None
    delta_omega: float | None = None
    beta: float | None = None
    one_sided: bool = False
    n_used: int = 0
    n_degenerate: int = 0
    meta: dict = field(default_factory=dict)


def spectrum_from_correlation(lags, c, kappa_c: float, flat_fraction: float = DEFAULT_FLAT_FRACTION,
                              pad: int = DEFAULT_PAD) -> tuple[np.ndarray, np.ndarray, float]:
    """Fourier transform of an even correlation given on lags ``0..L*dt``.

    The correlation is tapered with a Tukey window of the given flat
    fraction (applied over ``-L..L``), zero-padded by ``pad``, and scaled by
    ``kappa_c``.  Returns ``(omega, S, imag_residue)`` with ``omega`` sorted
    ascending and symmetric about 0.
    """
    c = np.asarray(c, dtype=float)
    L = c.size - 1
    dt = lags[1] - lags[0]
    w = tukey(2 * L + 1, alpha=1.0 - flat_fraction)
    full = np.concatenate((c[:0:-1], c)) * w  # lags -L..L
    n = pad * (2 * L + 1)
    buf = np.zeros(n)
    # place lag 0 at index 0 so the transform of an even sequence is real
    buf[:L + 1] = full[L:]
    buf[n - L:] = full[:L]
    F = np.fft.fft(buf) * dt * kappa_c
    omega = 2 * np.pi * np.fft.fftfreq(n, dt)
    order = np.argsort(omega, kind="stable")
    residue = float(np.abs(F.imag).max())
    return omega[order], F.real[order], residue


def peak_stats(omega, S, omega_floor: float = 0.0) -> PeakStats:
    """Location, height and half-width at half-maximum of the main peak.

    The peak is the largest value with ``omega >= omega_floor``.  Half-maximum
    crossings are linearly interpolated on each side; if the left crossing
    falls below the floor only the right half-width is used
    (``one_sided=True``).

    Raises
    ------
    NoInteriorPeak
        If the maximum sits on the floor or on the grid edge.
    """
    omega = np.asarray(omega, float)
    S = np.asarray(S, float)
    sel = np.flatnonzero(omega >= omega_floor)
    if sel.size < 3:
        raise NoInteriorPeak("fewer than three frequencies above the floor")
    w, s = omega[sel], S[sel]
    i = int(np.argmax(s))
    if i == 0 or i == s.size - 1:
        raise NoInteriorPeak(f"maximum at the edge of the window (omega={w[i]:.4g})")
    h = s[i]
    half = 0.5 * h
    right = None
    for j in range(i + 1, s.size):
        if s[j] <= half:
            right = w[j - 1] + (s[j - 1] - half) * (w[j] - w[j - 1]) / (s[j - 1] - s[j])
            break
    left = None
    # search below the floor too: the peak's own flank may extend there
    full_i = sel[i]
    for j in range(full_i - 1, -1, -1):
        if omega[j] < 0:
            break
        if S[j] <= half:
            left = omega[j] + (half - S[j]) * (omega[j + 1] - omega[j]) / (S[j + 1] - S[j])
            break
    if left is not None and left < omega_floor:
        left = None
    if right is None and left is None:
        raise NoInteriorPeak("no half-maximum crossing on either side")
    if left is None:
        return PeakStats(float(w[i]), float(h), float(right - w[i]), True)
    if right is None:
        return PeakStats(float(w[i]), float(h), float(w[i] - left), True)
    return PeakStats(float(w[i]), float(h), float(0.5 * (right - left)))


def coherence_beta(peak) -> float:
    """``(omega_max / delta_omega) * S_max``."""
    if isinstance(peak, PeakStats):
        om, smax, dw = peak.omega_max, peak.S_max, peak.delta_omega
    else:
        om, smax, dw = peak
    if not dw > 0:
        raise ValueError("delta_omega must be positive")
    return om / dw * smax


def _per_trajectory_correlations(records, dt, max_lag):
    out = []
    n_deg = 0
    for x in records:
        try:
            out.append(normalized_correlation(x, dt, max_lag)[1])
        except DegenerateSeries:
            n_deg += 1
    return out, n_deg


def noise_spectrum(records, dt: float, kappa_c: float, flat_fraction: float = DEFAULT_FLAT_FRACTION,
                   pad: int = DEFAULT_PAD, max_lag: float | None = None) -> SpectrumResult:
    """Trajectory-averaged normalized spectrum ``kappa_c * FT <C(s)/C(0)>``.

    ``records`` are cavity-occupation series on a common grid of step ``dt``.
    Constant records are skipped and counted in ``n_degenerate``.  Lags
    run up to ``max_lag`` (default: a fifth of the shortest record).

    Raises
    ------
    AllDegenerate
        If every record is constant.
    """
    records = [np.asarray(r).ravel() for r in records]
    if max_lag is None and records:
        max_lag = default_max_lag(min(r.size for r in records) * dt)
    cs, n_deg = _per_trajectory_correlations(records, dt, max_lag)
    if not cs:
        raise AllDegenerate("all trajectories have constant cavity occupation")
    L = min(c.size for c in cs)
    cbar = np.mean([c[:L] for c in cs], axis=0)
    lags = np.arange(L) * dt
    omega, S, residue = spectrum_from_correlation(lags, cbar, kappa_c, flat_fraction, pad)
    meta = dict(window="tukey", flat_fraction=flat_fraction, pad=pad, imag_residue=residue,
                max_lag=float(lags[-1]), averaging="per-trajectory C(s)/C(0), then mean")
    return SpectrumResult(omega, S, n_used=len(cs), n_degenerate=n_deg, meta=meta)


def default_max_lag(T: float) -> float:
    """Lag window used for spectra of records of length ``T``."""
    return DEFAULT_LAG_FRACTION * T


def default_record_length(params: SystemParams, n_periods: int = 40) -> float:
    """Analysed window: ``n_periods`` mean-field pulse periods when the
    deterministic dynamics pulses, else ``200 / kappa_c``."""
    from .meanfield import Inconclusive, Phase, StepSizeUnderflow, classify_point
    try:
        lab = classify_point(params)
    except (Inconclusive, StepSizeUnderflow):
        lab = None
    if lab is not None and lab.phase is Phase.SELF_PULSING and lab.tau:
        return n_periods * lab.tau
    if not params.kappa_c > 0:
        raise ValueError("cannot choose a record length: no pulsing and kappa_c = 0")
    return 200.0 / params.kappa_c


def default_omega_floor(T: float) -> float:
    return 2 * np.pi / (T / 4)


def analyze_spectrum(spec: SpectrumResult, T: float, omega_floor: float | None = None) -> SpectrumResult:
    """Attach peak statistics and beta to a spectrum."""
    floor = default_omega_floor(T) if omega_floor is None else omega_floor
    pk = peak_stats(spec.omega, spec.S, floor)
    meta = dict(spec.meta, omega_floor=floor)
    return SpectrumResult(spec.omega, spec.S, pk.omega_max, pk.S_max, pk.delta_omega,
                          coherence_beta(pk), pk.one_sided, spec.n_used, spec.n_degenerate, meta)


@dataclass(frozen=True)
class BetaPoint:
    gamma_g: float
    kappa_c: float
    beta: float | None
    beta_err: float | None
    omega_max: float | None
    S_max: float | None
    delta_omega: float | None
    n_used: int
    error: str | None = None

    @property
    def ratio(self):
        return self.gamma_g / self.kappa_c


def _cavity_record(args):
    spec, seed, dt, burn = args
    tr = simulate_trajectory(spec, seed, dt_sample=dt, record_events=False, sample="cavity")
    return tr.samples[burn:, 0]


def spectrum_point(params: SystemParams, K: int, T: float, dt: float | None = None,
                   master_seed: int = 0, burn_in: float = 0.0, workers: int = 1,
                   flat_fraction: float = DEFAULT_FLAT_FRACTION, pad: int = DEFAULT_PAD,
                   omega_floor: float | None = None, n_boot: int = 0, boot_seed: int = 0,
                   return_records: bool = False, max_lag: float | None = None):
    """Simulate ``K`` trajectories from the empty state and analyse ``n_c``.

    The first ``burn_in`` time units are dropped before correlating; the
    analysed window has length ``T``.  With ``n_boot > 0`` the trajectories
    are resampled with replacement to estimate the spread of beta (half
    the central 68% interval of the resampled values).
    Returns ``(SpectrumResult, beta_err or None)``.
    """
    dt = 0.05 / params.max_rate if dt is None else dt
    burn = int(round(burn_in / dt))
    spec = EnsembleSpec(params, FockConfig.empty(params.N), burn_in + T, K, master_seed)
    jobs = [(spec, trajectory_seed(master_seed, i), dt, burn) for i in range(K)]
    records = _ordered_map(_cavity_record, jobs, workers)
    max_lag = default_max_lag(T) if max_lag is None else max_lag
    cs, n_deg = _per_trajectory_correlations(records, dt, max_lag)
    if not cs:
        raise AllDegenerate("all trajectories have constant cavity occupation")
    L = min(c.size for c in cs)
    cs = np.array([c[:L] for c in cs])
    lags = np.arange(L) * dt
    omega, S, residue = spectrum_from_correlation(lags, cs.mean(axis=0), params.kappa_c,
                                                  flat_fraction, pad)
    meta = dict(window="tukey", flat_fraction=flat_fraction, pad=pad, imag_residue=residue,
                max_lag=float(lags[-1]), dt=dt, burn_in=burn_in, T=T,
                averaging="per-trajectory C(s)/C(0), then mean")
    res = analyze_spectrum(SpectrumResult(omega, S, n_used=len(cs), n_degenerate=n_deg, meta=meta),
                           T, omega_floor)
    err = None
    if n_boot > 0:
        rng = np.random.default_rng(boot_seed)
        floor = res.meta["omega_floor"]
        betas = []
        for _ in range(n_boot):
            pick = rng.integers(0, len(cs), len(cs))
            om, Sb, _ = spectrum_from_correlation(lags, cs[pick].mean(axis=0), params.kappa_c,
                                                  flat_fraction, pad)
            try:
                betas.append(coherence_beta(peak_stats(om, Sb, floor)))
            except NoInteriorPeak:
                continue
        # half the central 68% interval; a few resamples pick a noise spike
        # as the peak, which would dominate a plain standard deviation
        if len(betas) > 1:
            lo, hi = np.percentile(betas, [15.865, 84.135])
            err = float(0.5 * (hi - lo))
    if return_records:
        return res, err, records
    return res, err


def beta_sweep(gamma_gs, kappa_c: float, base: SystemParams, K: int = 50, T: float | None = None,
               pump: str = "infinite-temperature", dt: float | None = None, master_seed: int = 0,
               burn_in: float | None = None, n_boot: int = 100, workers: int = 1,
               flat_fraction: float = DEFAULT_FLAT_FRACTION, pad: int = DEFAULT_PAD,
               omega_floor: float | None = None, max_lag: float | None = None,
               zeta: float | None = None) -> list[BetaPoint]:
    """Coherence parameter versus pump rate at fixed cavity loss.

    ``base`` supplies ``N``, ``hop``, ``kappa_l`` and ``kappa_0``.  Point
    ``j`` uses master seed ``master_seed + j``.  ``T`` defaults per point to
    :func:`default_record_length` and the burn-in to ``T / 10``.
    """
    if K < 20:
        raise ValueError("beta_sweep needs K >= 20 trajectories per point")
    out = []
    for j, g in enumerate(gamma_gs):
        p = base.replace(pump=make_pump(pump, float(g), zeta), kappa_c=float(kappa_c))
        Tj = default_record_length(p) if T is None else T
        bj = 0.1 * Tj if burn_in is None else burn_in
        try:
            res, err = spectrum_point(p, K, Tj, dt, master_seed + j, bj, workers,
                                      flat_fraction, pad, omega_floor, n_boot, boot_seed=j,
                                      max_lag=max_lag)
        except (NoInteriorPeak, AllDegenerate) as exc:
            out.append(BetaPoint(float(g), kappa_c, None, None, None, None, None, 0, str(exc)))
            continue
        out.append(BetaPoint(float(g), kappa_c, res.beta, err, res.omega_max, res.S_max,
                             res.delta_omega, res.n_used))
    return out
