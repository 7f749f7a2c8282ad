"""Closed-form circuit design formulas for a superconducting realization.

All frequencies are ordinary frequencies (Hz, i.e. value/2pi), matching how
design tables are usually quoted.  The nonlinear coupler has three branches
with 1, 2 and 3 junctions; its branch phases enter only through the
(sin, cos) pairs of ``theta``, ``chi/2`` and ``psi/3``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, replace

__all__ = [
    "Z0_DEFAULT",
    "AnglePair",
    "CircuitParams",
    "b_coefficient",
    "cancellation_residuals",
    "sign_search",
    "coupling_g",
    "hopping_gamma",
    "kerr_scale",
    "hierarchy_check",
    "HierarchyReport",
    "design_report",
]

Z0_DEFAULT = 4.1e3  # hbar / e^2 rounded, Ohm
MUCH_LESS_FACTOR = 3.0


@dataclass(frozen=True)
class AnglePair:
    """An angle stored as an explicit ``(sin, cos)`` pair."""

    sin: float
    cos: float

    def __post_init__(self):
        if abs(self.sin ** 2 + self.cos ** 2 - 1.0) > 1e-6:
            raise ValueError(f"sin^2 + cos^2 = {self.sin ** 2 + self.cos ** 2:.8f}, expected 1")

    @classmethod
    def from_sin(cls, s: float, cos_sign: int = 1) -> "AnglePair":
        """Pair with the given sine and the cosine of sign ``cos_sign``."""
        if not -1.0 <= s <= 1.0:
            raise ValueError(f"|sin| must not exceed 1, got {s!r}")
        c = math.sqrt(max(0.0, 1.0 - s * s))
        return cls(s, c if cos_sign >= 0 else -c)

    @classmethod
    def from_angle(cls, x: float) -> "AnglePair":
        return cls(math.sin(x), math.cos(x))


@dataclass(frozen=True)
class CircuitParams:
    """Circuit parameters.  Energies and rates in Hz (E/h, rate/2pi)."""

    E_J: float
    alpha2: float
    alpha3: float
    psi3: AnglePair
    chi2: AnglePair
    theta: AnglePair
    Z: float
    delta_phi_e: float
    kappa_b: float
    N: int
    Z0: float = Z0_DEFAULT
    omega_1: float = 0.0
    delta_omega: float = 0.0
    omega_c: float = 0.0
    omega_b: float = 0.0
    kappa_c: float = 0.0
    kappa_0: float = 0.0

    def __post_init__(self):
        for name in ("psi3", "chi2", "theta"):
            v = getattr(self, name)
            if not isinstance(v, AnglePair):
                object.__setattr__(self, name, AnglePair(*v))
        for name in ("E_J", "Z", "Z0", "kappa_b"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v!r}")
        for name in ("delta_phi_e", "omega_1", "delta_omega", "omega_c", "omega_b",
                     "kappa_c", "kappa_0", "alpha2", "alpha3"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))

    @classmethod
    def table_example(cls) -> "CircuitParams":
        """Five-mode design example with a sign assignment that cancels the
        low-order terms (see :func:`sign_search`)."""
        return cls(
            E_J=50e9, alpha2=2.4, alpha3=2.1,
            psi3=AnglePair.from_sin(-0.85, +1),
            chi2=AnglePair.from_sin(0.88, +1),
            theta=AnglePair.from_sin(-0.33, -1),
            Z=160.0, delta_phi_e=0.25, kappa_b=30e6, N=5,
            omega_1=4.7e9, delta_omega=300e6, omega_c=3.6e9, omega_b=10.7e9,
            kappa_c=0.02e6, kappa_0=20e3,
        )

    def replace(self, **changes) -> "CircuitParams":
        return replace(self, **changes)

    @property
    def impedance_ratio_sq(self) -> float:
        return (self.Z / self.Z0) ** 2

    def mode_frequency(self, p: int) -> float:
        """Ladder mode ``p`` (1-based): ``omega_1 - (p-1)*delta_omega``."""
        return self.omega_1 - (p - 1) * self.delta_omega

    def drive_frequency(self, p: int = 1) -> float:
        """Flux-modulation frequency resonant with the hop ``p -> p+1``."""
        return self.mode_frequency(p + 1) - self.mode_frequency(p) + self.omega_c + self.omega_b

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CircuitParams":
        d = dict(d)
        for name in ("psi3", "chi2", "theta"):
            v = d[name]
            d[name] = AnglePair(**v) if isinstance(v, dict) else AnglePair(*v)
        return cls(**d)


def b_coefficient(n: int, c: CircuitParams) -> float:
    """Expansion coefficient ``B_n`` of the coupler energy, ``n >= 1``.

    Odd orders collect sines and even orders cosines, each branch weighted
    by ``alpha_k / k^(2p)`` with ``n = 2p+1`` or ``n = 2p+2``.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"order must be an integer >= 1, got {n!r}")
    p, even = divmod(int(n) - 1, 2)
    sign = -1.0 if p % 2 else 1.0
    w3 = c.alpha3 / 3.0 ** (2 * p)
    w2 = c.alpha2 / 2.0 ** (2 * p)
    if even:
        return sign * (w3 * c.psi3.cos + w2 * c.chi2.cos + c.theta.cos)
    return sign * (w3 * c.psi3.sin + w2 * c.chi2.sin + c.theta.sin)


def cancellation_residuals(c: CircuitParams) -> tuple[float, float, float]:
    """Residuals of the three low-order cancellation conditions."""
    a2, a3 = c.alpha2, c.alpha3
    r1 = a3 * c.psi3.sin + a2 * c.chi2.sin + c.theta.sin
    r2 = a3 / 3 * c.psi3.cos + a2 / 2 * c.chi2.cos + c.theta.cos
    r3 = a3 / 9 * c.psi3.sin + a2 / 4 * c.chi2.sin + c.theta.sin
    return r1, r2, r3


def sign_search(c: CircuitParams) -> list[tuple[float, CircuitParams]]:
    """Try all 64 sign choices of the six trig components.

    Magnitudes are taken from ``c``.  Returns ``(max|r_i|, params)`` for
    every assignment, best first; ties keep enumeration order.
    """
    mags = [(abs(p.sin), abs(p.cos)) for p in (c.psi3, c.chi2, c.theta)]
    out = []
    for signs in itertools.product((1.0, -1.0), repeat=6):
        pairs = [AnglePair(signs[2 * k] * s, signs[2 * k + 1] * co) for k, (s, co) in enumerate(mags)]
        cand = replace(c, psi3=pairs[0], chi2=pairs[1], theta=pairs[2])
        out.append((max(abs(r) for r in cancellation_residuals(cand)), cand))
    out.sort(key=lambda t: t[0])
    return out


def coupling_g(c: CircuitParams) -> float:
    """Effective three-mode coupling ``g``, in Hz."""
    return 2.0 * c.E_J * abs(c.theta.sin) / (3.0 * c.N) * c.delta_phi_e * c.impedance_ratio_sq


def hopping_gamma(g: float, kappa_b: float) -> float:
    """Incoherent hop rate ``4 g^2 / kappa_b`` after eliminating the waste mode."""
    if not kappa_b > 0:
        raise ValueError("kappa_b must be > 0")
    return 4.0 * g * g / kappa_b


def kerr_scale(c: CircuitParams, B4: float | None = None) -> float:
    """Kerr prefactor ``B4 * E_J * (Z/Z0)^2 / 2`` in Hz.

    ``B4`` defaults to the value implied by the stored angles.
    """
    if B4 is None:
        B4 = abs(b_coefficient(4, c))
    return B4 * c.E_J * c.impedance_ratio_sq / 2.0


@dataclass(frozen=True)
class HierarchyReport:
    left: float
    kappa_b: float
    delta_min: float
    kerr_below_kappa_b: bool
    kappa_b_well_below_delta_min: bool
    factor: float

    @property
    def satisfied(self) -> bool:
        return self.kerr_below_kappa_b and self.kappa_b_well_below_delta_min


def hierarchy_check(c: CircuitParams, B4: float | None, n_bar: float, n_bar_c: float,
                    delta_min: float, factor: float = MUCH_LESS_FACTOR) -> HierarchyReport:
    """Check ``kerr * max(n, n_c/N^2) <~ kappa_b << delta_min``.

    ``<~`` is a plain comparison and ``<<`` means smaller by at least
    ``factor``.
    """
    left = kerr_scale(c, B4) * max(n_bar, n_bar_c / c.N ** 2)
    return HierarchyReport(left, c.kappa_b, delta_min, left <= c.kappa_b,
                           factor * c.kappa_b <= delta_min, factor)


def design_report(c: CircuitParams, n_bar: float = 1.0, n_bar_c: float = 10.0,
                  delta_min: float = 200e6, B4: float | None = None,
                  factor: float = MUCH_LESS_FACTOR) -> dict:
    """All derived circuit quantities as a JSON-ready dict (Hz)."""
    g = coupling_g(c)
    best_res, best = sign_search(c)[0]
    B4_angles = b_coefficient(4, c)
    h = hierarchy_check(c, B4, n_bar, n_bar_c, delta_min, factor)
    return {
        "g_hz": g,
        "hop_rate_hz": hopping_gamma(g, c.kappa_b),
        "residuals": list(cancellation_residuals(c)),
        "max_residual": max(abs(r) for r in cancellation_residuals(c)),
        "best_sign_assignment": {
            "max_residual": best_res,
            "sin_psi3": best.psi3.sin, "cos_psi3": best.psi3.cos,
            "sin_chi2": best.chi2.sin, "cos_chi2": best.chi2.cos,
            "sin_theta": best.theta.sin, "cos_theta": best.theta.cos,
        },
        "B": {str(n): b_coefficient(n, c) for n in range(1, 6)},
        "B4_used": abs(B4_angles) if B4 is None else B4,
        "B4_from_angles": B4_angles,
        "kerr_scale_hz": kerr_scale(c, B4),
        "drive_frequency_hz": c.drive_frequency(1),
        "hierarchy": {
            "left_hz": h.left, "kappa_b_hz": h.kappa_b, "delta_min_hz": h.delta_min,
            "kerr_below_kappa_b": h.kerr_below_kappa_b,
            "kappa_b_well_below_delta_min": h.kappa_b_well_below_delta_min,
            "much_less_factor": h.factor, "satisfied": h.satisfied,
        },
    }
