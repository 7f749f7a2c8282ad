"""Domain types and elementary rate formulas for the bosonic avalanche laser.

A ladder of ``N`` bosonic modes is pumped on mode 1 and drained on mode ``N``.
Each hop ``p -> p+1`` emits one photon into a common lasing cavity and is
stimulated both by the cavity occupation and by the target-site occupation.
The functions here are shared by the mean-field integrator and by the
stochastic jump-process engine, so both sample exactly the same model.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "PumpSpec",
    "SystemParams",
    "FockConfig",
    "MeanFieldState",
    "EventKind",
    "JumpEvent",
    "bond_current",
    "cumulative_current",
    "staggered_population",
    "meanfield_drift",
    "jump_rate_table",
    "apply_event",
]


@dataclass(frozen=True)
class PumpSpec:
    """Gain/loss coefficients acting on the first ladder mode.

    Gain events occur at ``gamma_up * (1 + n1)`` and loss events at
    ``gamma_down * n1``.
    """

    gamma_up: float
    gamma_down: float

    def __post_init__(self):
        for name in ("gamma_up", "gamma_down"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")

    @classmethod
    def infinite_temperature(cls, gamma_g: float) -> "PumpSpec":
        return cls(gamma_g, gamma_g)

    @classmethod
    def pure_gain(cls, gamma_g: float) -> "PumpSpec":
        return cls(gamma_g, 0.0)

    @classmethod
    def lindblad(cls, gamma_g: float, zeta: float) -> "PumpSpec":
        """Literal reservoir weighting: up = gamma_g*zeta, down = gamma_g*(1-zeta).

        Note that at ``zeta = 1/2`` this gives half the net injection of
        :meth:`infinite_temperature`.
        """
        if not 0.0 <= zeta <= 1.0:
            raise ValueError(f"zeta must lie in [0, 1], got {zeta!r}")
        return cls(gamma_g * zeta, gamma_g * (1.0 - zeta))

    @property
    def net_injection(self) -> float:
        """Net injection rate at zero occupation, ``gamma_up``."""
        return self.gamma_up


@dataclass(frozen=True)
class SystemParams:
    """Model rates and sizes.

    Parameters
    ----------
    N : int
        Number of ladder modes (>= 2).
    hop : float
        Hop rate Gamma (> 0).
    pump : PumpSpec
        Gain/loss on mode 1.
    kappa_c : float
        Cavity loss rate.
    kappa_l : float
        Loss rate of the last ladder mode.
    kappa_0 : float
        Intrinsic loss rate applied to every ladder mode.
    """

    N: int
    hop: float
    pump: PumpSpec
    kappa_c: float
    kappa_l: float
    kappa_0: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        if not math.isfinite(self.hop) or self.hop <= 0:
            raise ValueError(f"hop rate must be finite and > 0, got {self.hop!r}")
        for name in ("kappa_c", "kappa_l", "kappa_0"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")

    @classmethod
    def make(cls, N, hop=1.0, gamma_g=1.0, kappa_c=1.0, kappa_l=1.0,
             kappa_0=0.0, pump="infinite-temperature") -> "SystemParams":
        """Build from a scalar pump rate and a preset name."""
        return cls(N, hop, make_pump(pump, gamma_g), kappa_c, kappa_l, kappa_0)

    def replace(self, **changes) -> "SystemParams":
        from dataclasses import replace
        return replace(self, **changes)

    def scaled(self, s: float) -> "SystemParams":
        """All rates divided by ``s`` (time unit multiplied by ``s``)."""
        return SystemParams(
            self.N, self.hop / s,
            PumpSpec(self.pump.gamma_up / s, self.pump.gamma_down / s),
            self.kappa_c / s, self.kappa_l / s, self.kappa_0 / s,
        )

    @property
    def max_rate(self) -> float:
        return max(self.hop, self.pump.gamma_up, self.pump.gamma_down,
                   self.kappa_c, self.kappa_l, self.kappa_0)


def make_pump(kind: str, gamma_g: float, zeta: float | None = None) -> PumpSpec:
    kind = kind.replace("_", "-").lower()
    if kind == "infinite-temperature":
        return PumpSpec.infinite_temperature(gamma_g)
    if kind == "pure-gain":
        return PumpSpec.pure_gain(gamma_g)
    if kind == "lindblad":
        if zeta is None:
            raise ValueError("the 'lindblad' pump needs zeta")
        return PumpSpec.lindblad(gamma_g, zeta)
    raise ValueError(f"unknown pump preset {kind!r}")


@dataclass(frozen=True)
class FockConfig:
    """Integer occupations ``(n_c; n_1..n_N)``."""

    n_c: int
    n: tuple[int, ...]

    def __post_init__(self):
        n = tuple(int(x) for x in self.n)
        if any(x < 0 for x in n) or int(self.n_c) < 0:
            raise ValueError("occupations must be non-negative")
        if len(n) < 1:
            raise ValueError("ladder must have at least one mode")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "n_c", int(self.n_c))

    @classmethod
    def empty(cls, N: int) -> "FockConfig":
        return cls(0, (0,) * N)

    @property
    def N(self) -> int:
        return len(self.n)

    def as_array(self) -> np.ndarray:
        """Occupations as ``[n_c, n_1, ..., n_N]``."""
        return np.array((self.n_c,) + self.n, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class MeanFieldState:
    """Cavity amplitude ``a_c = |alpha_c|`` and real ladder occupations."""

    a_c: float
    n: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = np.array(self.n, dtype=float)
        n.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "a_c", float(self.a_c))

    @classmethod
    def empty(cls, N: int, a_c: float = math.sqrt(10.0)) -> "MeanFieldState":
        return cls(a_c, np.zeros(N))

    @classmethod
    def from_vector(cls, y) -> "MeanFieldState":
        return cls(y[0], y[1:])

    def to_vector(self) -> np.ndarray:
        return np.concatenate(([self.a_c], self.n))

    @property
    def n_c(self) -> float:
        return self.a_c ** 2


class EventKind(enum.IntEnum):
    HOP = 0
    GAIN1 = 1
    LOSS1 = 2
    LOSSN = 3
    LOSS_CAVITY = 4
    LOSS0 = 5


class JumpEvent(NamedTuple):
    """A jump of the occupation process.

    ``site`` is the 1-based ladder index for ``HOP`` (source site) and
    ``LOSS0``; it is 0 for every other kind.
    """

    kind: EventKind
    site: int = 0

    def delta(self, N: int) -> np.ndarray:
        """Occupation change as ``[dn_c, dn_1, ..., dn_N]``."""
        d = np.zeros(N + 1, dtype=np.int64)
        k = self.kind
        if k == EventKind.HOP:
            d[self.site] -= 1
            d[self.site + 1] += 1
            d[0] += 1
        elif k == EventKind.GAIN1:
            d[1] += 1
        elif k == EventKind.LOSS1:
            d[1] -= 1
        elif k == EventKind.LOSSN:
            d[N] -= 1
        elif k == EventKind.LOSS_CAVITY:
            d[0] -= 1
        elif k == EventKind.LOSS0:
            d[self.site] -= 1
        return d

    def __str__(self):
        if self.kind in (EventKind.HOP, EventKind.LOSS0):
            return f"{self.kind.name}({self.site})"
        return self.kind.name


def apply_event(cfg: FockConfig, event: JumpEvent) -> FockConfig:
    occ = cfg.as_array() + event.delta(cfg.N)
    if np.any(occ < 0):
        raise ValueError(f"{event} would drive an occupation negative in {cfg}")
    return FockConfig(int(occ[0]), tuple(occ[1:]))


def bond_current(n_p, n_next, hop):
    """Bosonic current ``hop * n_p * (1 + n_next)`` between neighbouring sites."""
    return hop * n_p * (1.0 + n_next)


def _bond_currents(n: np.ndarray, hop: float) -> np.ndarray:
    return bond_current(n[:-1], n[1:], hop)


def cumulative_current(state: MeanFieldState, params: SystemParams) -> float:
    return float(np.sum(_bond_currents(state.n, params.hop)))


def staggered_population(n) -> float:
    """Alternating sum ``sum_p (-1)^p (n_p - n_1)`` with 1-based ``p``."""
    n = np.asarray(n, dtype=float)
    signs = np.where(np.arange(1, n.size + 1) % 2 == 0, 1.0, -1.0)
    return float(np.sum(signs * (n - n[0])))


def drift_vector(y: np.ndarray, params: SystemParams) -> np.ndarray:
    """Mean-field right-hand side on the packed vector ``[a_c, n_1..n_N]``."""
    a = y[0]
    n = y[1:]
    J = _bond_currents(n, params.hop)
    flow = np.zeros_like(n)
    flow[:-1] -= J
    flow[1:] += J
    dn = (1.0 + a * a) * flow - params.kappa_0 * n
    pump = params.pump
    dn[0] += pump.gamma_up * (1.0 + n[0]) - pump.gamma_down * n[0]
    dn[-1] -= params.kappa_l * n[-1]
    da = 0.5 * (J.sum() - params.kappa_c) * a
    out = np.empty_like(y)
    out[0] = da
    out[1:] = dn
    return out


def meanfield_drift(state: MeanFieldState, params: SystemParams) -> MeanFieldState:
    """Time derivative of ``state``, returned in the same container.

    The derivative may be negative, so the returned value is not a physical
    state; read ``.a_c`` and ``.n`` directly.
    """
    if state.n.size != params.N:
        raise ValueError("state length does not match params.N")
    d = drift_vector(state.to_vector(), params)
    return MeanFieldState(d[0], d[1:])


def jump_rate_table(cfg: FockConfig, params: SystemParams) -> list[tuple[JumpEvent, float]]:
    """All jump channels with strictly positive rate, in a fixed order.

    Order: hops ``1..N-1``, gain on mode 1, loss on mode 1, loss on mode N,
    cavity loss, intrinsic losses ``1..N``.
    """
    if cfg.N != params.N:
        raise ValueError("config length does not match params.N")
    n = cfg.n
    nc = cfg.n_c
    N = params.N
    out = []
    stim = params.hop * (1 + nc)
    for p in range(N - 1):
        r = stim * n[p] * (1 + n[p + 1])
        if r > 0:
            out.append((JumpEvent(EventKind.HOP, p + 1), float(r)))
    rg = params.pump.gamma_up * (1 + n[0])
    if rg > 0:
        out.append((JumpEvent(EventKind.GAIN1), float(rg)))
    rl = params.pump.gamma_down * n[0]
    if rl > 0:
        out.append((JumpEvent(EventKind.LOSS1), float(rl)))
    rn = params.kappa_l * n[-1]
    if rn > 0:
        out.append((JumpEvent(EventKind.LOSSN), float(rn)))
    rc = params.kappa_c * nc
    if rc > 0:
        out.append((JumpEvent(EventKind.LOSS_CAVITY), float(rc)))
    if params.kappa_0 > 0:
        for p in range(N):
            r = params.kappa_0 * n[p]
            if r > 0:
                out.append((JumpEvent(EventKind.LOSS0, p + 1), float(r)))
    return out
