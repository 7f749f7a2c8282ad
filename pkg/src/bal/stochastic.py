"""Exact jump-process simulation of the occupation dynamics.

The direct-method kernel is compiled with numba and releases the GIL, so an
ensemble can be spread over a thread pool.  Each trajectory reseeds numba's
per-thread Mersenne Twister from a seed derived deterministically from the
ensemble's master seed, which makes every result independent of the worker
count and of scheduling order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .model import EventKind, FockConfig, JumpEvent, SystemParams, jump_rate_table

__all__ = [
    "Absorbed",
    "EventBudgetExceeded",
    "TruncationTooSmall",
    "EVENT_DTYPE",
    "RNG_NAME",
    "Trajectory",
    "EnsembleSpec",
    "trajectory_seed",
    "gillespie_step",
    "simulate_trajectory",
    "simulate_fixed_dt",
    "run_ensemble",
    "ensemble_moments",
    "replay_samples",
    "MasterResult",
    "truncated_master_integrate",
    "detector_params",
    "detector_run",
    "detector_ensemble",
    "detector_histogram",
    "histogram_overlap",
]

RNG_NAME = "numba MT19937, per-trajectory seed = SeedSequence(master_seed, spawn_key=(i,)) -> uint32"
DEFAULT_EVENT_CAP = 100_000_000

# little-endian f64 time, u8 kind, u16 site (11 bytes per record)
EVENT_DTYPE = np.dtype([("t", "<f8"), ("kind", "u1"), ("site", "<u2")])

SAMPLE_NONE = 0
SAMPLE_CAVITY = 1
SAMPLE_ALL = 2
_SAMPLE_MODES = {None: SAMPLE_NONE, "none": SAMPLE_NONE, "cavity": SAMPLE_CAVITY, "all": SAMPLE_ALL}

_ST_OK = 0
_ST_BUDGET = 1


class Absorbed(RuntimeError):
    """No jump channel has a positive rate; the state is frozen."""


class EventBudgetExceeded(RuntimeError):
    pass


class TruncationTooSmall(RuntimeError):
    pass


def _rates(params: SystemParams) -> np.ndarray:
    return np.array([params.hop, params.pump.gamma_up, params.pump.gamma_down,
                     params.kappa_c, params.kappa_l, params.kappa_0])


@njit(cache=True, nogil=True)
def _fill_rates(occ, rates, out):
    # channel order matches model.jump_rate_table:
    # hops 1..N-1, gain1, loss1, lossN, lossC, loss0 1..N
    N = occ.shape[0] - 1
    hop, gup, gdn, kc, kl, k0 = rates[0], rates[1], rates[2], rates[3], rates[4], rates[5]
    stim = hop * (1.0 + occ[0])
    total = 0.0
    for p in range(1, N):
        r = stim * occ[p] * (1.0 + occ[p + 1])
        out[p - 1] = r
        total += r
    j = N - 1
    out[j] = gup * (1.0 + occ[1])
    out[j + 1] = gdn * occ[1]
    out[j + 2] = kl * occ[N]
    out[j + 3] = kc * occ[0]
    total += out[j] + out[j + 1] + out[j + 2] + out[j + 3]
    for p in range(1, N + 1):
        r = k0 * occ[p]
        out[j + 3 + p] = r
        total += r
    return total


@njit(cache=True, nogil=True)
def _channel_event(ch, N):
    """Map a channel index to (kind, site)."""
    if ch < N - 1:
        return 0, ch + 1
    j = ch - (N - 1)
    if j == 0:
        return 1, 0
    if j == 1:
        return 2, 0
    if j == 2:
        return 3, 0
    if j == 3:
        return 4, 0
    return 5, j - 3


@njit(cache=True, nogil=True)
def _apply(occ, kind, site):
    N = occ.shape[0] - 1
    if kind == 0:
        occ[site] -= 1
        occ[site + 1] += 1
        occ[0] += 1
    elif kind == 1:
        occ[1] += 1
    elif kind == 2:
        occ[1] -= 1
    elif kind == 3:
        occ[N] -= 1
    elif kind == 4:
        occ[0] -= 1
    else:
        occ[site] -= 1


@njit(cache=True, nogil=True)
def _undo(occ, kind, site):
    N = occ.shape[0] - 1
    if kind == 0:
        occ[site] += 1
        occ[site + 1] -= 1
        occ[0] -= 1
    elif kind == 1:
        occ[1] -= 1
    elif kind == 2:
        occ[1] += 1
    elif kind == 3:
        occ[N] += 1
    elif kind == 4:
        occ[0] += 1
    else:
        occ[site] += 1


@njit(cache=True, nogil=True)
def _kernel(occ0, rates, T, seed, dt_sample, n_samples, sample_mode, record, event_cap):
    np.random.seed(seed)
    N = occ0.shape[0] - 1
    occ = occ0.copy()
    n_ch = 2 * N + 3
    r = np.zeros(n_ch)
    ncol = occ.shape[0] if sample_mode == 2 else 1
    samples = np.zeros((n_samples if sample_mode > 0 else 0, ncol), dtype=np.int64)
    cap = 1024 if record else 0
    ev_t = np.empty(cap)
    ev_k = np.empty(cap, dtype=np.uint8)
    ev_s = np.empty(cap, dtype=np.uint16)
    n_ev = 0
    emitted = 0
    k = 0
    t = 0.0
    status = 0
    while True:
        R = _fill_rates(occ, rates, r)
        if R > 0.0:
            t_next = t - np.log(1.0 - np.random.random()) / R
        else:
            t_next = np.inf
        if sample_mode > 0:
            while k < n_samples and k * dt_sample < t_next:
                if sample_mode == 2:
                    for i in range(occ.shape[0]):
                        samples[k, i] = occ[i]
                else:
                    samples[k, 0] = occ[0]
                k += 1
        if t_next > T:
            break
        if n_ev >= event_cap:
            status = 1
            break
        target = np.random.random() * R
        acc = 0.0
        ch = -1
        last_pos = 0
        for c in range(n_ch):
            if r[c] > 0.0:
                last_pos = c
                acc += r[c]
                if acc > target:
                    ch = c
                    break
        if ch < 0:
            ch = last_pos
        kind, site = _channel_event(ch, N)
        _apply(occ, kind, site)
        t = t_next
        if kind == 4:
            emitted += 1
        if record:
            if n_ev == cap:
                cap *= 2
                nt = np.empty(cap)
                nk = np.empty(cap, dtype=np.uint8)
                ns = np.empty(cap, dtype=np.uint16)
                nt[:n_ev] = ev_t[:n_ev]
                nk[:n_ev] = ev_k[:n_ev]
                ns[:n_ev] = ev_s[:n_ev]
                ev_t, ev_k, ev_s = nt, nk, ns
            ev_t[n_ev] = t
            ev_k[n_ev] = kind
            ev_s[n_ev] = site
        n_ev += 1
    return samples, ev_t[:n_ev if record else 0], ev_k[:n_ev if record else 0], \
        ev_s[:n_ev if record else 0], n_ev, emitted, status, occ


@njit(cache=True, nogil=True)
def _fixed_dt_kernel(occ0, rates, T, seed, dt, n_steps):
    # every channel fires independently with probability rate*dt per step
    np.random.seed(seed)
    N = occ0.shape[0] - 1
    occ = occ0.copy()
    n_ch = 2 * N + 3
    r = np.zeros(n_ch)
    fire = np.zeros(n_ch, dtype=np.bool_)
    out = np.zeros((n_steps + 1, occ.shape[0]), dtype=np.int64)
    out[0] = occ
    max_p = 0.0
    for s in range(n_steps):
        _fill_rates(occ, rates, r)
        for c in range(n_ch):
            p = r[c] * dt
            if p > max_p:
                max_p = p
            fire[c] = np.random.random() < p
        # simultaneous firings that would overdraw a mode are dropped (O(dt^2))
        for c in range(n_ch):
            if fire[c]:
                kind, site = _channel_event(c, N)
                _apply(occ, kind, site)
                ok = True
                for i in range(occ.shape[0]):
                    if occ[i] < 0:
                        ok = False
                if not ok:
                    _undo(occ, kind, site)
        out[s + 1] = occ
    return out, max_p


def trajectory_seed(master_seed: int, i: int) -> int:
    """Seed of trajectory ``i``: a pure function of ``(master_seed, i)``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(i),))
    return int(ss.generate_state(1, np.uint32)[0])


@dataclass(frozen=True)
class EnsembleSpec:
    params: SystemParams
    initial: FockConfig
    T: float
    K: int = 1
    master_seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.initial.N != self.params.N:
            raise ValueError("initial config length does not match params.N")

    def seed(self, i: int) -> int:
        return trajectory_seed(self.master_seed, i)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One stochastic run.

    ``events`` is a structured array with fields ``t``, ``kind``, ``site``
    (``None`` if recording was off).  ``samples`` holds zero-order-hold
    occupations at ``k * dt_sample``; columns are ``[n_c, n_1..n_N]``, or
    ``[n_c]`` only when sampled in cavity mode.
    """

    seed: int
    params: SystemParams
    initial: FockConfig
    T: float
    dt_sample: float
    events: np.ndarray | None = field(repr=False)
    samples: np.ndarray | None = field(repr=False)
    emitted_count: int = 0
    n_events: int = 0
    final: FockConfig | None = None

    @property
    def sample_times(self) -> np.ndarray:
        n = 0 if self.samples is None else self.samples.shape[0]
        return np.arange(n) * self.dt_sample

    @property
    def n_c(self) -> np.ndarray:
        return self.samples[:, 0]

    def event_list(self) -> list[tuple[float, JumpEvent]]:
        if self.events is None:
            raise ValueError("events were not recorded")
        return [(float(t), JumpEvent(EventKind(int(k)), int(s))) for t, k, s in self.events]


def default_dt_sample(params: SystemParams) -> float:
    return 0.05 / params.max_rate


def gillespie_step(cfg: FockConfig, params: SystemParams, rng: np.random.Generator):
    """One direct-method step: ``(waiting_time, event, rng)``.

    Raises
    ------
    Absorbed
        If every rate vanishes.
    """
    table = jump_rate_table(cfg, params)
    rates = np.array([r for _, r in table])
    R = rates.sum() if rates.size else 0.0
    if R <= 0:
        raise Absorbed(f"no active channel in {cfg}")
    dt = rng.exponential(1.0 / R)
    i = int(np.searchsorted(np.cumsum(rates), rng.random() * R, side="right"))
    i = min(i, len(table) - 1)
    return dt, table[i][0], rng


def simulate_trajectory(spec: EnsembleSpec, seed: int, dt_sample: float | None = None,
                        record_events: bool = True, sample: str | None = "all",
                        event_cap: int = DEFAULT_EVENT_CAP) -> Trajectory:
    """Run one trajectory from ``spec.initial`` up to ``spec.T``.

    Raises
    ------
    EventBudgetExceeded
        If more than ``event_cap`` events occur.
    """
    params = spec.params
    dt_sample = default_dt_sample(params) if dt_sample is None else float(dt_sample)
    mode = _SAMPLE_MODES[sample]
    n_samples = int(math.floor(spec.T / dt_sample + 1e-9)) + 1 if mode else 0
    samples, ev_t, ev_k, ev_s, n_ev, emitted, status, occ = _kernel(
        spec.initial.as_array(), _rates(params), float(spec.T), np.uint32(seed),
        dt_sample, n_samples, mode, bool(record_events), int(event_cap))
    if status == _ST_BUDGET:
        raise EventBudgetExceeded(f"more than {event_cap} events before T={spec.T}")
    events = None
    if record_events:
        events = np.empty(n_ev, dtype=EVENT_DTYPE)
        events["t"], events["kind"], events["site"] = ev_t, ev_k, ev_s
    return Trajectory(int(seed), params, spec.initial, float(spec.T), dt_sample, events,
                      samples if mode else None, int(emitted), int(n_ev),
                      FockConfig(int(occ[0]), tuple(int(x) for x in occ[1:])))


def replay_samples(traj: Trajectory) -> np.ndarray:
    """Rebuild the full sample grid from the event log."""
    if traj.events is None:
        raise ValueError("events were not recorded")
    N = traj.params.N
    times = np.arange(traj.samples.shape[0] if traj.samples is not None
                      else int(math.floor(traj.T / traj.dt_sample + 1e-9)) + 1) * traj.dt_sample
    occ = traj.initial.as_array()
    out = np.empty((times.size, N + 1), dtype=np.int64)
    j = 0
    ev = traj.events
    for k, tk in enumerate(times):
        while j < ev.size and ev["t"][j] <= tk:
            occ += JumpEvent(EventKind(int(ev["kind"][j])), int(ev["site"][j])).delta(N)
            if np.any(occ < 0):
                raise AssertionError("replayed event drove an occupation negative")
            j += 1
        out[k] = occ
    return out


def simulate_fixed_dt(spec: EnsembleSpec, seed: int, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-step scheme with independent binary jump variables per step.

    Cross-check only: it carries an ``O(dt)`` bias.  Returns ``(times, occ)``.
    """
    n_steps = int(round(spec.T / dt))
    occ, max_p = _fixed_dt_kernel(spec.initial.as_array(), _rates(spec.params), float(spec.T),
                                  np.uint32(seed), float(dt), n_steps)
    if max_p > 0.1:
        raise ValueError(f"dt too large: a channel fired with probability {max_p:.3f} per step")
    return np.arange(n_steps + 1) * dt, occ


def _ordered_map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def run_ensemble(spec: EnsembleSpec, workers: int = 1, **kw) -> list[Trajectory]:
    """``spec.K`` independent trajectories, ordered by index.

    Keyword arguments are forwarded to :func:`simulate_trajectory`.
    """
    return _ordered_map(lambda i: simulate_trajectory(spec, spec.seed(i), **kw),
                        range(spec.K), workers)


def ensemble_moments(trajs) -> tuple[np.ndarray, np.ndarray]:
    """Mean sampled occupations and their Monte-Carlo standard errors."""
    x = np.stack([tr.samples for tr in trajs]).astype(float)
    mean = x.mean(axis=0)
    if len(trajs) < 2:
        return mean, np.zeros_like(mean)
    return mean, x.std(axis=0, ddof=1) / math.sqrt(len(trajs))


@dataclass(frozen=True, eq=False)
class MasterResult:
    """Mean occupations from the truncated probability evolution.

    ``mean`` and ``var`` have columns ``[n_c, n_1, ..., n_N]``; ``norm`` is
    the total probability at each time; ``boundary_mass`` is the largest
    probability found on configurations with some occupation at the cutoff.
    """

    times: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    norm: np.ndarray
    boundary_mass: float
    n_states: int


def _master_generator(params: SystemParams, n_max: int):
    from scipy import sparse
    N = params.N
    shape = (n_max + 1,) * (N + 1)
    n_states = int(np.prod(shape))
    occ = np.array(np.unravel_index(np.arange(n_states), shape)).T  # (S, N+1)
    rows, cols, vals = [], [], []
    out_rate = np.zeros(n_states)
    blocked = np.zeros(n_states, dtype=bool)
    deltas = []
    for p in range(1, N):
        d = np.zeros(N + 1, int)
        d[p] -= 1
        d[p + 1] += 1
        d[0] += 1
        deltas.append((d, params.hop * (1 + occ[:, 0]) * occ[:, p] * (1 + occ[:, p + 1])))
    e = np.eye(N + 1, dtype=int)
    deltas.append((e[1], params.pump.gamma_up * (1 + occ[:, 1])))
    deltas.append((-e[1], params.pump.gamma_down * occ[:, 1]))
    deltas.append((-e[N], params.kappa_l * occ[:, N]))
    deltas.append((-e[0], params.kappa_c * occ[:, 0]))
    if params.kappa_0 > 0:
        for p in range(1, N + 1):
            deltas.append((-e[p], params.kappa_0 * occ[:, p]))
    idx = np.arange(n_states)
    for d, rate in deltas:
        tgt = occ + d
        inside = np.all((tgt >= 0) & (tgt <= n_max), axis=1)
        live = rate > 0
        blocked |= live & ~inside
        ok = live & inside
        j = np.ravel_multi_index(tgt[ok].T, shape)
        rows.append(j)
        cols.append(idx[ok])
        vals.append(rate[ok])
        out_rate[ok] += rate[ok]
    rows.append(idx)
    cols.append(idx)
    vals.append(-out_rate)
    Q = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n_states, n_states))
    on_edge = np.any(occ == n_max, axis=1)
    return Q, occ, on_edge, blocked


def truncated_master_integrate(params: SystemParams, initial: FockConfig, T: float, n_max: int,
                               times=None, n_times: int = 21,
                               boundary_tol: float = 1e-6) -> MasterResult:
    """Propagate configuration probabilities on the box ``0 <= n <= n_max``.

    Transitions that would leave the box are removed from the generator, so
    total probability is conserved exactly; the mass sitting on the box edge
    measures how much the cutoff distorts the dynamics.

    Raises
    ------
    TruncationTooSmall
        If the edge mass exceeds ``boundary_tol`` at any output time.
    """
    from scipy.sparse.linalg import expm_multiply
    N = params.N
    if (n_max + 1) ** (N + 1) > 10 ** 7:
        raise ValueError("configuration space exceeds 1e7 states")
    occ0 = initial.as_array()
    if np.any(occ0 > n_max):
        raise ValueError("initial configuration lies outside the truncation")
    Q, occ, on_edge, _ = _master_generator(params, n_max)
    shape = (n_max + 1,) * (N + 1)
    p0 = np.zeros(Q.shape[0])
    p0[np.ravel_multi_index(tuple(occ0), shape)] = 1.0
    if times is None:
        times = np.linspace(0.0, T, n_times)
    times = np.asarray(times, dtype=float)
    P = np.empty((times.size, Q.shape[0]))
    t_prev = 0.0
    p = p0
    for k, t in enumerate(times):
        if t > t_prev:
            p = expm_multiply(Q * (t - t_prev), p)
            t_prev = t
        P[k] = p
    mean = P @ occ
    var = P @ (occ.astype(float) ** 2) - mean ** 2
    norm = P.sum(axis=1)
    edge = float((P[:, on_edge]).sum(axis=1).max())
    if edge > boundary_tol:
        raise TruncationTooSmall(f"edge probability {edge:.3g} exceeds {boundary_tol:g}; raise n_max")
    return MasterResult(times, mean, np.maximum(var, 0.0), norm, edge, Q.shape[0])


def detector_params(N: int = 10, hop: float = 1.0, kappa_l: float = 10.0,
                    kappa_c: float = 0.2, kappa_0: float = 0.2) -> SystemParams:
    """Pump-free configuration used for photon-number detection."""
    from .model import PumpSpec
    return SystemParams(N, hop, PumpSpec(0.0, 0.0), kappa_c, kappa_l, kappa_0)


def _detector_spec(params, n1_init, T):
    if params.pump.gamma_up != 0 or params.pump.gamma_down != 0:
        raise ValueError("detector runs need the pump switched off")
    if n1_init < 0:
        raise ValueError("n1_init must be >= 0")
    if T is None:
        if params.kappa_0 <= 0:
            raise ValueError("default duration needs kappa_0 > 0; pass T explicitly")
        T = 10.0 / params.kappa_0
    init = FockConfig(0, (int(n1_init),) + (0,) * (params.N - 1))
    return EnsembleSpec(params, init, T)


def detector_run(params: SystemParams, n1_init: int, T: float | None = None, seed: int = 0) -> int:
    """Number of photons emitted by the cavity within ``[0, T]``.

    Starts from ``n1_init`` bosons on mode 1, everything else empty.
    ``T`` defaults to ``10 / kappa_0``.
    """
    spec = _detector_spec(params, n1_init, T)
    tr = simulate_trajectory(spec, seed, record_events=False, sample=None)
    return tr.emitted_count


def detector_ensemble(params: SystemParams, n1_inits, runs: int = 500, T: float | None = None,
                      master_seed: int = 0, workers: int = 1) -> dict[int, np.ndarray]:
    """``runs`` detector outputs for each initial population.

    Trajectory ``j`` of population ``n1`` uses seed index ``n1 * runs + j``.
    """
    out = {}
    for n1 in n1_inits:
        spec = _detector_spec(params, n1, T)
        base = int(n1) * runs
        vals = _ordered_map(
            lambda j: simulate_trajectory(spec, trajectory_seed(master_seed, base + j),
                                          record_events=False, sample=None).emitted_count,
            range(runs), workers)
        out[int(n1)] = np.asarray(vals, dtype=np.int64)
    return out


def detector_histogram(runs, bins=None) -> tuple[np.ndarray, np.ndarray]:
    """Counts of ``n_out`` values.

    With ``bins=None`` every integer gets its own unit-width bin.  Returns
    ``(edges, counts)``; counts always sum to the number of runs.
    """
    runs = np.asarray(runs)
    if runs.size < 1:
        raise ValueError("need at least one run")
    if bins is None:
        bins = np.arange(runs.min(), runs.max() + 2) - 0.5
    counts, edges = np.histogram(runs, bins=bins)
    if counts.sum() != runs.size:
        raise ValueError("bins do not cover every run")
    return edges, counts


def histogram_overlap(a, b) -> float:
    """Shared probability mass of two integer samples (0 = disjoint, 1 = equal)."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    ha = np.bincount(a - lo, minlength=hi - lo + 1) / a.size
    hb = np.bincount(b - lo, minlength=hi - lo + 1) / b.size
    return float(np.minimum(ha, hb).sum())
