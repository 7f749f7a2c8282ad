"""TOML run configuration: schema, defaults, validation and hashing.

A config file holds one table per concern::

    [run]           seed, threads, out, experiment
    [system]        N, hop, gamma_g, kappa_c, kappa_l, kappa_0, pump, zeta
    [meanfield]     t_end, tol, seed_amplitude, n_samples
    [thresholds]    eps_c, eps_d, eps_osc, persistence
    [phase_diagram] gamma_g, kappa_c          (grids)
    [period_scan]   hops, kappa_cs, Ns, kappa_l, loss_ratios, tol
    [trajectories]  K, T, initial, dt_sample, event_log, oracle_n_max, n_checkpoints
    [spectrum]      K, T, burn_in, dt, flat_fraction, pad, omega_floor, max_lag, n_boot
    [beta_scan]     gamma_g                    (grid; spectrum knobs come from [spectrum])
    [detector]      N, hop, kappa_l, kappa_c, kappa_0, n1_init, runs, T
    [circuit]       circuit parameters and hierarchy inputs (Hz)

A grid is either an explicit list or a table ``{start, stop, num, spacing}``
with ``spacing`` one of ``"linear"`` / ``"log"``.  Unknown tables or keys are
rejected.  Only ``BAL_OUT`` and ``BAL_THREADS`` may be overridden from the
environment.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .model import SystemParams, make_pump

__all__ = [
    "EXPERIMENTS",
    "ParseError",
    "ValidationError",
    "RunConfig",
    "load_config",
    "loads_config",
    "build_config",
    "parse_toml",
    "grid_values",
]

EXPERIMENTS = ("meanfield", "phase-diagram", "period-scan", "trajectories",
               "spectrum", "beta-scan", "detector", "circuit")

ENV_OUT = "BAL_OUT"
ENV_THREADS = "BAL_THREADS"

_REQ = object()  # marks a required key


class ParseError(ValueError):
    """Config text is not valid TOML."""

    def __init__(self, msg, path=None, line=None, col=None):
        self.path, self.line, self.col = path, line, col
        where = "" if path is None else f"{path}:"
        if line is not None:
            where += f"{line}:{col}:" if col is not None else f"{line}:"
        super().__init__(f"{where} {msg}".strip())


class ValidationError(ValueError):
    """A config value breaks the schema; ``field`` is the dotted key."""

    def __init__(self, field_name, msg, line=None):
        self.field = field_name
        self.line = line
        loc = f" (line {line})" if line is not None else ""
        super().__init__(f"{field_name}: {msg}{loc}")


# -- value checkers ---------------------------------------------------------

def _num(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(name, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ValidationError(name, "must be finite")
    return v


def _nonneg(v, name):
    v = _num(v, name)
    if v < 0:
        raise ValidationError(name, f"must be >= 0, got {v!r}")
    return v


def _pos(v, name):
    v = _num(v, name)
    if not v > 0:
        raise ValidationError(name, f"must be > 0, got {v!r}")
    return v


def _int_ge(lo):
    def check(v, name):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ValidationError(name, f"expected an integer, got {v!r}")
        if v < lo:
            raise ValidationError(name, f"must be >= {lo}, got {v!r}")
        return int(v)
    return check


def _u64(v, name):
    v = _int_ge(0)(v, name)
    if v >= 2 ** 64:
        raise ValidationError(name, "must fit in an unsigned 64-bit integer")
    return v


def _unit_interval(v, name):
    v = _num(v, name)
    if not 0.0 <= v <= 1.0:
        raise ValidationError(name, f"must lie in [0, 1], got {v!r}")
    return v


def _opt(check):
    def inner(v, name):
        return None if v is None else check(v, name)
    return inner


def _str_in(choices):
    def check(v, name):
        if not isinstance(v, str) or v not in choices:
            raise ValidationError(name, f"must be one of {sorted(choices)}, got {v!r}")
        return v
    return check


def _text(v, name):
    if not isinstance(v, str):
        raise ValidationError(name, f"expected a string, got {v!r}")
    return v


def _bool(v, name):
    if not isinstance(v, bool):
        raise ValidationError(name, f"expected true/false, got {v!r}")
    return v


def _list_of(check, min_len=1):
    def inner(v, name):
        if not isinstance(v, list) or len(v) < min_len:
            raise ValidationError(name, f"expected a list with at least {min_len} entries")
        return [check(x, f"{name}[{i}]") for i, x in enumerate(v)]
    return inner


_GRID_KEYS = {"start", "stop", "num", "spacing"}


def _grid(v, name):
    if isinstance(v, list):
        return _list_of(_pos)(v, name)
    if isinstance(v, dict):
        extra = set(v) - _GRID_KEYS
        if extra:
            raise ValidationError(f"{name}.{sorted(extra)[0]}", "unknown grid key")
        missing = {"start", "stop", "num"} - set(v)
        if missing:
            raise ValidationError(f"{name}.{sorted(missing)[0]}", "required grid key missing")
        out = {"start": _pos(v["start"], f"{name}.start"),
               "stop": _pos(v["stop"], f"{name}.stop"),
               "num": _int_ge(1)(v["num"], f"{name}.num"),
               "spacing": _str_in({"linear", "log"})(v.get("spacing", "log"), f"{name}.spacing")}
        return out
    raise ValidationError(name, "expected a list or a {start, stop, num, spacing} table")


def grid_values(g) -> np.ndarray:
    """Expand a validated grid into an array."""
    if isinstance(g, dict):
        f = np.geomspace if g["spacing"] == "log" else np.linspace
        return f(g["start"], g["stop"], g["num"])
    return np.asarray(g, dtype=float)


_PUMPS = {"infinite-temperature", "pure-gain", "lindblad"}

SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "experiment": (_opt(_str_in(set(EXPERIMENTS))), None),
        "seed": (_u64, 0),
        "threads": (_int_ge(1), 1),
        "out": (_text, "out"),
    },
    "system": {
        "N": (_int_ge(2), _REQ),
        "hop": (_pos, _REQ),
        "gamma_g": (_nonneg, _REQ),
        "kappa_c": (_nonneg, _REQ),
        "kappa_l": (_nonneg, _REQ),
        "kappa_0": (_nonneg, 0.0),
        "pump": (_str_in(_PUMPS), "infinite-temperature"),
        "zeta": (_opt(_unit_interval), None),
    },
    "meanfield": {
        "t_end": (_opt(_pos), None),
        "tol": (_pos, 1e-8),
        "seed_amplitude": (_nonneg, math.sqrt(10.0)),
        "n_samples": (_int_ge(2), 4001),
    },
    "thresholds": {
        "eps_c": (_pos, 1e-3),
        "eps_d": (_pos, 1e-6),
        "eps_osc": (_pos, 1e-2),
        "persistence": (_nonneg, 0.5),
    },
    "phase_diagram": {
        "gamma_g": (_grid, {"start": 1.0, "stop": 1000.0, "num": 13, "spacing": "log"}),
        "kappa_c": (_grid, {"start": 3.0, "stop": 300.0, "num": 11, "spacing": "log"}),
    },
    "period_scan": {
        "hops": (_list_of(_pos), [0.05, 0.1, 0.5]),
        "kappa_cs": (_list_of(_pos), [1.0, 5.0, 10.0, 25.0, 50.0]),
        "Ns": (_list_of(_int_ge(2)), [10, 20]),
        "kappa_l": (_pos, 1.0),
        "loss_ratios": (_grid, {"start": 0.3, "stop": 12.0, "num": 17, "spacing": "log"}),
        "tol": (_pos, 1e-8),
    },
    "trajectories": {
        "K": (_int_ge(1), 100),
        "T": (_pos, 1.0),
        "initial": (_opt(_list_of(_int_ge(0), 2)), None),
        "dt_sample": (_opt(_pos), None),
        "event_log": (_bool, False),
        "oracle_n_max": (_int_ge(0), 0),
        "n_checkpoints": (_int_ge(2), 21),
    },
    "spectrum": {
        "K": (_int_ge(1), 50),
        "T": (_opt(_pos), None),
        "burn_in": (_opt(_nonneg), None),
        "dt": (_opt(_pos), None),
        "flat_fraction": (_unit_interval, 0.8),
        "pad": (_int_ge(1), 4),
        "omega_floor": (_opt(_nonneg), None),
        "max_lag": (_opt(_pos), None),
        "n_boot": (_int_ge(0), 100),
    },
    "beta_scan": {
        "gamma_g": (_grid, [2.0, 4.0, 7.0, 10.0, 14.0, 20.0, 28.0, 40.0, 60.0]),
    },
    "detector": {
        "N": (_int_ge(2), 10),
        "hop": (_pos, 1.0),
        "kappa_l": (_nonneg, 10.0),
        "kappa_c": (_nonneg, 0.2),
        "kappa_0": (_nonneg, 0.2),
        "n1_init": (_list_of(_int_ge(0)), [0, 1, 2, 3, 4, 5]),
        "runs": (_int_ge(1), 500),
        "T": (_opt(_pos), None),
    },
    "circuit": {
        "E_J": (_pos, 50e9),
        "alpha2": (_nonneg, 2.4),
        "alpha3": (_nonneg, 2.1),
        "sin_psi3": (_num, -0.85),
        "cos_psi3": (_opt(_num), None),
        "sin_chi2": (_num, 0.88),
        "cos_chi2": (_opt(_num), None),
        "sin_theta": (_num, -0.33),
        "cos_theta": (_opt(_num), None),
        "Z": (_pos, 160.0),
        "Z0": (_pos, 4.1e3),
        "delta_phi_e": (_nonneg, 0.25),
        "kappa_b": (_pos, 30e6),
        "N": (_int_ge(1), 5),
        "omega_1": (_nonneg, 4.7e9),
        "delta_omega": (_nonneg, 300e6),
        "omega_c": (_nonneg, 3.6e9),
        "omega_b": (_nonneg, 10.7e9),
        "kappa_c": (_nonneg, 0.02e6),
        "kappa_0": (_nonneg, 20e3),
        "n_bar": (_nonneg, 1.0),
        "n_bar_c": (_nonneg, 10.0),
        "delta_min": (_pos, 200e6),
        "B4": (_opt(_num), None),
        "much_less_factor": (_pos, 3.0),
    },
}

# default cosine signs of the circuit angle pairs when only sines are given
_COS_SIGN = {"psi3": 1, "chi2": 1, "theta": -1}

_NEEDS_SYSTEM = {"meanfield", "phase-diagram", "trajectories", "spectrum", "beta-scan"}


def _line_of(text: str | None, section: str, key: str | None = None) -> int | None:
    """Best-effort line number of ``[section]`` or of ``key`` inside it."""
    if not text:
        return None
    lines = text.splitlines()
    head = re.compile(r"^\s*\[\s*" + re.escape(section) + r"\s*\]")
    any_head = re.compile(r"^\s*\[")
    start = None
    for i, ln in enumerate(lines):
        if head.match(ln):
            start = i
            break
    if start is None:
        return None
    if key is None:
        return start + 1
    kre = re.compile(r"^\s*" + re.escape(key) + r"\s*[=.]")
    for j in range(start + 1, len(lines)):
        if any_head.match(lines[j]):
            break
        if kre.match(lines[j]):
            return j + 1
    return start + 1


@dataclass
class RunConfig:
    """Validated configuration with every default filled in.

    ``sections`` maps table names to validated key/value dicts.  Only the
    tables present in the source (plus ``run``) are stored, so a round trip
    through :meth:`to_toml` is the identity.
    """

    sections: dict = field(default_factory=dict)
    source: str | None = None

    # -- construction --------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict, text: str | None = None, source: str | None = None) -> "RunConfig":
        if not isinstance(data, dict):
            raise ValidationError("<root>", "expected a table")
        sections = {}
        for name, raw in data.items():
            if name not in SCHEMA:
                raise ValidationError(name, "unknown table", _line_of(text, name))
            if not isinstance(raw, dict):
                raise ValidationError(name, "expected a table")
            sections[name] = _validate_section(name, raw, text)
        sections.setdefault("run", _validate_section("run", {}, text))
        cfg = cls(sections, source)
        cfg._cross_checks(text)
        return cfg

    def _cross_checks(self, text):
        s = self.sections.get("system")
        if s is not None:
            if s["pump"] == "lindblad" and s["zeta"] is None:
                raise ValidationError("system.zeta", "required for the 'lindblad' pump",
                                      _line_of(text, "system", "pump"))
            try:
                self.system_params()
            except ValueError as exc:
                raise ValidationError("system", str(exc), _line_of(text, "system")) from exc
            t = self.sections.get("trajectories")
            if t and t["initial"] is not None and len(t["initial"]) != s["N"] + 1:
                raise ValidationError("trajectories.initial",
                                      f"needs N+1 = {s['N'] + 1} entries [n_c, n_1..n_N]",
                                      _line_of(text, "trajectories", "initial"))
        if "circuit" in self.sections:
            try:
                self.circuit_params()
            except ValueError as exc:
                raise ValidationError("circuit", str(exc), _line_of(text, "circuit")) from exc
        exp = self.sections["run"]["experiment"]
        if exp in _NEEDS_SYSTEM and s is None:
            raise ValidationError("system", f"experiment {exp!r} needs a [system] table")

    # -- accessors -----------------------------------------------------------
    def section(self, name: str) -> dict:
        """Validated table ``name``; absent tables come back with defaults."""
        if name in self.sections:
            return self.sections[name]
        return _validate_section(name, {}, None)

    @property
    def experiment(self) -> str | None:
        return self.sections["run"]["experiment"]

    @property
    def seed(self) -> int:
        return self.sections["run"]["seed"]

    @property
    def threads(self) -> int:
        return self.sections["run"]["threads"]

    @property
    def out(self) -> str:
        return self.sections["run"]["out"]

    def system_params(self) -> SystemParams:
        s = self.sections.get("system")
        if s is None:
            raise ValidationError("system", "no [system] table in config")
        pump = make_pump(s["pump"], s["gamma_g"], s["zeta"])
        return SystemParams(s["N"], s["hop"], pump, s["kappa_c"], s["kappa_l"], s["kappa_0"])

    def thresholds(self):
        from .meanfield import Thresholds
        return Thresholds(**self.section("thresholds"))

    def circuit_params(self):
        from .circuit import AnglePair, CircuitParams
        c = self.section("circuit")
        pairs = {}
        for k in ("psi3", "chi2", "theta"):
            s, co = c[f"sin_{k}"], c[f"cos_{k}"]
            pairs[k] = AnglePair.from_sin(s, _COS_SIGN[k]) if co is None else AnglePair(s, co)
        keep = ("E_J", "alpha2", "alpha3", "Z", "Z0", "delta_phi_e", "kappa_b", "N",
                "omega_1", "delta_omega", "omega_c", "omega_b", "kappa_c", "kappa_0")
        return CircuitParams(**{k: c[k] for k in keep}, **pairs)

    def with_overrides(self, **run_changes) -> "RunConfig":
        """Copy with keys of ``[run]`` replaced (``None`` values ignored)."""
        new = copy.deepcopy(self)
        for k, v in run_changes.items():
            if v is None:
                continue
            checker, _ = SCHEMA["run"][k]
            new.sections["run"][k] = checker(v, f"run.{k}")
        return new

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return copy.deepcopy(self.sections)

    def to_toml(self) -> str:
        return tomli_w.dumps(_drop_none(self.to_dict()))

    def hash(self) -> str:
        """SHA-256 of the canonical JSON of the resolved config, excluding
        ``run.out`` and ``run.threads`` which never change results."""
        d = self.to_dict()
        d["run"] = {k: v for k, v in d["run"].items() if k not in ("out", "threads")}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), allow_nan=False)
        return hashlib.sha256(blob.encode()).hexdigest()


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    return d


def _validate_section(name: str, raw: dict, text: str | None) -> dict:
    schema = SCHEMA[name]
    out = {}
    for key in raw:
        if key not in schema:
            raise ValidationError(f"{name}.{key}", "unknown key", _line_of(text, name, key))
    for key, (check, default) in schema.items():
        if key in raw:
            try:
                out[key] = check(raw[key], f"{name}.{key}")
            except ValidationError as exc:
                if exc.line is None:
                    exc = ValidationError(exc.field, str(exc).split(": ", 1)[1],
                                          _line_of(text, name, key))
                raise exc from None
        elif default is _REQ:
            raise ValidationError(f"{name}.{key}", "required key missing", _line_of(text, name))
        else:
            out[key] = copy.deepcopy(default)
    return out


def parse_toml(text: str, source: str | None = None) -> dict:
    """TOML text to a plain dict; syntax errors become :class:`ParseError`."""
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(getattr(exc, "msg", str(exc)), source,
                         getattr(exc, "lineno", None), getattr(exc, "colno", None)) from None


def read_text(path) -> str:
    p = Path(path)
    try:
        return p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read config: {exc.strerror}", str(p)) from None


def build_config(data: dict, text: str | None = None, source: str | None = None,
                 env=None) -> RunConfig:
    """Validate a parsed dict and apply environment overrides."""
    cfg = RunConfig.from_dict(data, text, source)
    return _apply_env(cfg, os.environ if env is None else env)


def loads_config(text: str, source: str | None = None, env=None) -> RunConfig:
    """Parse and validate TOML text, then apply environment overrides."""
    return build_config(parse_toml(text, source), text, source, env)


def load_config(path, env=None) -> RunConfig:
    return loads_config(read_text(path), str(path), env)


def _apply_env(cfg: RunConfig, env) -> RunConfig:
    out = env.get(ENV_OUT)
    threads = env.get(ENV_THREADS)
    if threads is not None:
        try:
            threads = int(threads)
        except ValueError:
            raise ValidationError(ENV_THREADS, f"expected an integer, got {threads!r}") from None
    return cfg.with_overrides(out=out or None, threads=threads)
