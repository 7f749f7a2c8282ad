"""Mean-field dynamics: integration, phase classification, pulsing period,
and steady profiles of the inclusion process on the ladder.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _rk
from .model import MeanFieldState, SystemParams, drift_vector, make_pump, staggered_population

__all__ = [
    "StepSizeUnderflow",
    "Inconclusive",
    "TooFewPeaks",
    "MeanFieldTrace",
    "Phase",
    "PhaseLabel",
    "Thresholds",
    "integrate",
    "classify_phase",
    "classify_point",
    "extract_period",
    "pulsing_period",
    "period_scan",
    "collapse_spread",
    "asip_steady_profile",
    "boundary_occupation_n1",
    "wave_speed",
    "phase_diagram_sweep",
]

DEFAULT_SEED_AMPLITUDE = math.sqrt(10.0)


class StepSizeUnderflow(RuntimeError):
    """Adaptive stepping stalled (stiff or degenerate parameters)."""


class Inconclusive(RuntimeError):
    """Trace too short to decide the phase; integrate longer."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


class TooFewPeaks(RuntimeError):
    pass


def _rates(params: SystemParams) -> np.ndarray:
    return np.array([params.hop, params.pump.gamma_up, params.pump.gamma_down,
                     params.kappa_c, params.kappa_l, params.kappa_0])


@dataclass(frozen=True, eq=False)
class MeanFieldTrace:
    """Sampled mean-field solution.

    ``y`` holds one packed state ``[a_c, n_1..n_N]`` per row of ``times``.
    """

    params: SystemParams
    times: np.ndarray
    y: np.ndarray = field(repr=False)
    tol: float = 1e-8

    @property
    def a_c(self) -> np.ndarray:
        return self.y[:, 0]

    @property
    def n_c(self) -> np.ndarray:
        return self.y[:, 0] ** 2

    @property
    def n(self) -> np.ndarray:
        return self.y[:, 1:]

    @property
    def n_stag(self) -> np.ndarray:
        return np.array([staggered_population(row) for row in self.n])

    @property
    def final(self) -> MeanFieldState:
        return MeanFieldState.from_vector(self.y[-1])

    def state(self, i: int) -> MeanFieldState:
        return MeanFieldState.from_vector(self.y[i])

    def __len__(self):
        return self.times.size


def integrate(params: SystemParams, initial: MeanFieldState | None, t_end: float,
              tol: float = 1e-8, t_eval=None, n_samples: int = 4001,
              max_steps: int = 50_000_000) -> MeanFieldTrace:
    """Integrate the mean-field equations from ``t = 0`` to ``t_end``.

    Parameters
    ----------
    params : SystemParams
    initial : MeanFieldState or None
        Starting state; ``None`` means an empty ladder with seed amplitude
        ``sqrt(10)``.
    t_end : float
    tol : float
        Relative (and absolute) local error tolerance, in ``(0, 1e-2]``.
    t_eval : array_like, optional
        Sampling grid within ``[0, t_end]``; defaults to ``n_samples``
        uniformly spaced points.

    Raises
    ------
    StepSizeUnderflow
        If the step size collapses below floating-point resolution.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if not 0 < tol <= 1e-2:
        raise ValueError("tol must lie in (0, 1e-2]")
    if initial is None:
        initial = MeanFieldState.empty(params.N, DEFAULT_SEED_AMPLITUDE)
    if initial.n.size != params.N:
        raise ValueError("initial state length does not match params.N")
    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, n_samples)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or t_eval.size < 1 or np.any(np.diff(t_eval) <= 0):
        raise ValueError("t_eval must be a strictly increasing 1-d grid")
    if t_eval[0] < 0 or t_eval[-1] > t_end:
        raise ValueError("t_eval must lie within [0, t_end]")
    out, status, _, _ = _rk.integrate(initial.to_vector(), _rates(params), float(t_end),
                                      tol, tol, t_eval, tol, max_steps)
    if status == _rk.UNDERFLOW:
        raise StepSizeUnderflow(f"step size underflow for {params}")
    if status == _rk.MAX_STEPS:
        raise StepSizeUnderflow(f"step budget {max_steps} exhausted for {params}")
    return MeanFieldTrace(params, t_eval, out, tol)


class Phase(str, enum.Enum):
    NON_LASING = "NonLasing"
    LASING = "Lasing"
    SELF_PULSING = "SelfPulsing"


@dataclass(frozen=True)
class Thresholds:
    """Classification knobs (all dimensionless).

    eps_c : cavity occupation separating dark from lasing.
    eps_d : convergence when ``max |dy/dt| / (1 + |y|)`` is below
        ``eps_d * max_rate``.
    eps_osc : terminal oscillation amplitude, relative to the window maximum,
        that counts as persistent pulsing.
    persistence : the last-quarter amplitude must be at least this fraction
        of the preceding quarter's, otherwise the oscillation is still decaying.
    """

    eps_c: float = 1e-3
    eps_d: float = 1e-6
    eps_osc: float = 1e-2
    persistence: float = 0.5


@dataclass(frozen=True)
class PhaseLabel:
    phase: Phase
    n_c: float
    n_stag: float
    amplitude: float
    tau: float | None = None
    t_end: float | None = None

    def __post_init__(self):
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")


def _drift_norm(y: np.ndarray, params: SystemParams) -> float:
    d = drift_vector(y, params)
    return float(np.max(np.abs(d) / (1.0 + np.abs(y))))


def classify_phase(trace: MeanFieldTrace, thresholds: Thresholds = Thresholds(),
                   with_period: bool = True) -> PhaseLabel:
    """Label the dynamical phase reached at the end of ``trace``.

    Raises
    ------
    Inconclusive
        If neither convergence nor persistent oscillation is established.
    """
    if len(trace) < 8:
        raise Inconclusive("trace has too few samples")
    params = trace.params
    nc = trace.n_c
    m = len(nc)
    last = nc[(3 * m) // 4:]
    prev = nc[m // 2:(3 * m) // 4]
    amp = float(last.max() - last.min())
    amp_prev = float(prev.max() - prev.min())
    y_end = trace.y[-1]
    n_end = float(nc[-1])
    nstag = staggered_population(y_end[1:])
    converged = _drift_norm(y_end, params) < thresholds.eps_d * params.max_rate
    diag = dict(n_c=n_end, n_stag=nstag, amplitude=amp, t_end=float(trace.times[-1]))
    if converged:
        phase = Phase.NON_LASING if n_end < thresholds.eps_c else Phase.LASING
        return PhaseLabel(phase, **diag)
    if amp > thresholds.eps_osc * float(last.max()) and amp >= thresholds.persistence * amp_prev:
        tau = None
        if with_period:
            try:
                tau = extract_period(trace)
            except TooFewPeaks as exc:
                raise Inconclusive(f"oscillating but {exc}", diag) from exc
        return PhaseLabel(Phase.SELF_PULSING, tau=tau, **diag)
    raise Inconclusive("no convergence and no persistent oscillation", diag)


def default_t_end(params: SystemParams) -> float:
    return 50.0 / min(x for x in (params.kappa_c, params.pump.gamma_up, params.hop) if x > 0)


def classify_point(params: SystemParams, t_end: float | None = None, tol: float = 1e-8,
                   thresholds: Thresholds = Thresholds(), max_doublings: int = 3,
                   seed_amplitude: float = DEFAULT_SEED_AMPLITUDE,
                   samples_per_unit: float | None = None) -> PhaseLabel:
    """Integrate from an empty ladder and classify, doubling ``t_end`` on
    :class:`Inconclusive` up to ``max_doublings`` times."""
    t_end = default_t_end(params) if t_end is None else t_end
    initial = MeanFieldState.empty(params.N, seed_amplitude)
    for attempt in range(max_doublings + 1):
        n_samples = _n_samples(params, t_end, samples_per_unit)
        trace = integrate(params, initial, t_end, tol, n_samples=n_samples)
        try:
            return classify_phase(trace, thresholds)
        except Inconclusive:
            if attempt == max_doublings:
                raise
            t_end *= 2.0
    raise AssertionError("unreachable")


def _n_samples(params, t_end, samples_per_unit=None):
    # ~40 samples per fastest time scale, bounded for memory
    spu = 40.0 * params.max_rate if samples_per_unit is None else samples_per_unit
    return int(min(max(2001, spu * t_end), 400_001))


def _peak_times(t: np.ndarray, x: np.ndarray, threshold: float) -> np.ndarray:
    above = x > threshold
    if not above.any():
        return np.empty(0)
    edges = np.diff(above.astype(np.int8))
    starts = list(np.flatnonzero(edges == 1) + 1)
    stops = list(np.flatnonzero(edges == -1) + 1)
    if above[0]:
        stops = stops[1:]  # drop segment cut by the window start
    if above[-1]:
        starts = starts[:len(stops)]
    peaks = []
    for a, b in zip(starts, stops):
        i = a + int(np.argmax(x[a:b]))
        ti = t[i]
        if 0 < i < x.size - 1:
            y0, y1, y2 = x[i - 1], x[i], x[i + 1]
            den = y0 - 2 * y1 + y2
            if den < 0:
                off = 0.5 * (y0 - y2) / den
                ti = t[i] + off * 0.5 * (t[i + 1] - t[i - 1])
        peaks.append(ti)
    return np.asarray(peaks)


def extract_period(trace_or_times, n_c=None, transient: float = 0.2,
                   min_peaks: int = 4) -> float:
    """Median spacing of cavity-occupation bursts.

    Accepts a :class:`MeanFieldTrace` or explicit ``(times, n_c)`` arrays.
    The first ``transient`` fraction of the record is discarded; one peak
    is taken per excursion above ``mean + 0.5*std`` of the remainder.
    """
    if n_c is None:
        t, x = trace_or_times.times, trace_or_times.n_c
    else:
        t, x = np.asarray(trace_or_times, float), np.asarray(n_c, float)
    k0 = int(transient * t.size)
    t, x = t[k0:], x[k0:]
    thr = x.mean() + 0.5 * x.std()
    peaks = _peak_times(t, x, thr)
    if peaks.size < min_peaks:
        raise TooFewPeaks(f"found {peaks.size} peaks, need {min_peaks}")
    return float(np.median(np.diff(peaks)))


def pulsing_period(params: SystemParams, tol: float = 1e-8, n_periods: int = 12,
                   t_end: float | None = None, max_extensions: int = 4,
                   thresholds: Thresholds = Thresholds()) -> PhaseLabel:
    """Classify and, when pulsing, make sure ``n_periods`` bursts are resolved."""
    label = classify_point(params, t_end, tol, thresholds)
    if label.phase is not Phase.SELF_PULSING:
        return label
    t_end = label.t_end
    for _ in range(max_extensions):
        if label.tau is not None and t_end >= 1.25 * n_periods * label.tau:
            break
        t_end = max(2.0 * t_end, 1.3 * n_periods * (label.tau or 0.0))
        trace = integrate(params, None, t_end, tol, n_samples=_n_samples(params, t_end))
        label = classify_phase(trace, thresholds)
        if label.phase is not Phase.SELF_PULSING:
            return label
    return label


@dataclass(frozen=True)
class ScanRow:
    N: int
    hop: float
    kappa_c: float
    kappa_l: float
    gamma_g: float
    phase: str
    tau: float | None

    @property
    def rescaled_period(self):
        return None if self.tau is None else math.sqrt(self.gamma_g * self.hop) * self.tau

    @property
    def loss_ratio(self):
        return self.kappa_c / self.gamma_g


def _scan_one(args):
    N, hop, kappa_c, kappa_l, gamma_g, pump, kappa_0, tol, zeta = args
    p = SystemParams(N, hop, make_pump(pump, gamma_g, zeta), kappa_c, kappa_l, kappa_0)
    try:
        label = pulsing_period(p, tol)
    except Inconclusive:
        return ScanRow(N, hop, kappa_c, kappa_l, gamma_g, "Inconclusive", None)
    return ScanRow(N, hop, kappa_c, kappa_l, gamma_g, label.phase.value, label.tau)


def period_scan(hops, kappa_cs, Ns, kappa_l: float = 1.0, loss_ratios=None,
                pump: str = "infinite-temperature", kappa_0: float = 0.0,
                tol: float = 1e-8, workers: int = 1, zeta: float | None = None) -> list[ScanRow]:
    """Pulsing period over a grid of curves.

    Each curve is a fixed ``(hop, kappa_c, N)``; along it the pump rate runs
    over ``gamma_g = kappa_c / loss_ratio``.  Rows are returned in grid order;
    points that do not pulse carry ``tau = None``.
    """
    if loss_ratios is None:
        loss_ratios = np.geomspace(0.3, 12.0, 17)
    jobs = [(int(N), float(h), float(kc), float(kappa_l), float(kc / r), pump, kappa_0, tol, zeta)
            for N in Ns for h in hops for kc in kappa_cs for r in loss_ratios]
    return _ordered_map(_scan_one, jobs, workers)


def collapse_spread(rows, n_grid: int = 50) -> tuple[float, tuple[float, float]]:
    """Worst relative spread of the rescaled period across curves.

    Curves are interpolated (in log coordinates) onto a common grid of
    ``kappa_c / gamma_g`` covering the range where every curve pulses.
    Returns ``(spread, (x_lo, x_hi))``; spread is ``(max - min) / mean``.
    """
    curves = {}
    for r in rows:
        if r.tau is None:
            continue
        curves.setdefault((r.N, r.hop, r.kappa_c), []).append((r.loss_ratio, r.rescaled_period))
    curves = {k: np.array(sorted(v)) for k, v in curves.items() if len(v) >= 2}
    if len(curves) < 2:
        raise ValueError("need at least two pulsing curves with two points each")
    lo = max(c[0, 0] for c in curves.values())
    hi = min(c[-1, 0] for c in curves.values())
    if not hi > lo:
        raise ValueError("curves have no overlapping range")
    xs = np.geomspace(lo, hi, n_grid)
    vals = np.array([np.exp(np.interp(np.log(xs), np.log(c[:, 0]), np.log(c[:, 1])))
                     for c in curves.values()])
    spread = (vals.max(axis=0) - vals.min(axis=0)) / vals.mean(axis=0)
    return float(spread.max()), (float(lo), float(hi))


def asip_steady_profile(J: float, hop: float, kappa_l: float, N: int) -> np.ndarray:
    """Occupations carrying the homogeneous current ``J`` on every bond.

    Backward recurrence from ``n_N = J / kappa_l`` via
    ``n_p = (J / hop) / (1 + n_{p+1})``.
    """
    if J == 0:
        return np.zeros(N)
    if not (J > 0 and hop > 0 and kappa_l > 0):
        raise ValueError("J, hop and kappa_l must be positive")
    n = np.empty(N)
    n[-1] = J / kappa_l
    for p in range(N - 2, -1, -1):
        n[p] = (J / hop) / (1.0 + n[p + 1])
    return n


def boundary_occupation_n1(gamma_g: float, hop: float) -> float:
    """Positive root of ``hop * n * (1 + n) = gamma_g``."""
    if hop <= 0 or gamma_g < 0:
        raise ValueError("need hop > 0 and gamma_g >= 0")
    x = 4.0 * gamma_g / hop
    # rationalized form avoids cancellation for small x
    return x / (2.0 * (1.0 + math.sqrt(1.0 + x)))


def wave_speed(n1: float, hop: float) -> float:
    """Propagation speed ``hop * (1 + 2 n1)`` of small density perturbations."""
    if n1 < 0:
        raise ValueError("n1 must be non-negative")
    return hop * (1.0 + 2.0 * n1)


@dataclass(frozen=True)
class SweepRow:
    gamma_g: float
    kappa_c: float
    phase: str
    n_c: float
    n_stag: float
    tau: float | None
    error: str | None = None


def _sweep_one(args):
    params, kw = args
    try:
        lab = classify_point(params, **kw)
    except Inconclusive as exc:
        d = exc.diagnostics
        return SweepRow(params.pump.gamma_up, params.kappa_c, "Inconclusive",
                        d.get("n_c", math.nan), d.get("n_stag", math.nan), None, str(exc))
    except StepSizeUnderflow as exc:
        return SweepRow(params.pump.gamma_up, params.kappa_c, "Failed",
                        math.nan, math.nan, None, str(exc))
    return SweepRow(params.pump.gamma_up, params.kappa_c, lab.phase.value,
                    lab.n_c, lab.n_stag, lab.tau)


def phase_diagram_sweep(gamma_gs, kappa_cs, base: SystemParams, pump: str = "infinite-temperature",
                        workers: int = 1, zeta: float | None = None, **classify_kw) -> list[SweepRow]:
    """Classify every ``(gamma_g, kappa_c)`` grid point.

    ``base`` supplies ``N``, ``hop``, ``kappa_l`` and ``kappa_0``.  Rows come
    back in grid order (``gamma_g`` outer) whatever the worker count.
    """
    jobs = [(base.replace(pump=make_pump(pump, float(g), zeta), kappa_c=float(kc)), classify_kw)
            for g in gamma_gs for kc in kappa_cs]
    return _ordered_map(_sweep_one, jobs, workers)


def _ordered_map(fn, jobs, workers):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))
