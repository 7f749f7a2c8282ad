"""Command-line entry point: one experiment per invocation.

Usage::

    bal <experiment> [--config FILE] [--out DIR] [--seed N] [--threads N] [--plot]

Every run writes CSV tables (first line carries the CSV schema version and
config hash), a ``<experiment>.meta.json`` sidecar and, with ``--plot``,
SVG figures.  Exit status: 0 on success, 2 for config errors, 1 for
runtime failures (an ``error.json`` report is written when possible).
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import (EXPERIMENTS, ParseError, RunConfig, ValidationError, build_config,
                     grid_values, parse_toml, read_text)
from .output import write_csv, write_events, write_json

__all__ = ["main", "run_experiment", "build_parser", "DEFAULT_SYSTEMS"]

# reference parameters used when a config has no [system] table
DEFAULT_SYSTEMS = {
    "meanfield": dict(N=10, hop=1.0, gamma_g=12.0, kappa_c=20.0, kappa_l=10.0),
    "phase-diagram": dict(N=10, hop=1.0, gamma_g=12.0, kappa_c=20.0, kappa_l=10.0),
    "trajectories": dict(N=2, hop=1.0, gamma_g=1.0, kappa_c=1.0, kappa_l=1.0),
    "spectrum": dict(N=10, hop=1.0, gamma_g=20.0, kappa_c=20.0, kappa_l=20.0),
    "beta-scan": dict(N=10, hop=1.0, gamma_g=20.0, kappa_c=20.0, kappa_l=20.0),
}


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _pos_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bal", description="Bosonic avalanche laser simulation lab.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    helps = {
        "meanfield": "integrate the mean-field equations and classify the phase",
        "phase-diagram": "classify a (gamma_g, kappa_c) grid",
        "period-scan": "self-pulsing period over the scan grid and collapse spread",
        "trajectories": "stochastic ensemble means (optionally vs. the truncated master equation)",
        "spectrum": "noise spectrum and coherence parameter at one point",
        "beta-scan": "coherence parameter versus pump rate",
        "detector": "photon-number detector histograms",
        "circuit": "circuit design report",
    }
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", type=Path, help="TOML config file")
        p.add_argument("--out", type=Path, help="output directory (env BAL_OUT)")
        p.add_argument("--seed", type=_u64, help="master seed (overrides run.seed)")
        p.add_argument("--threads", type=_pos_int, help="worker threads (env BAL_THREADS)")
        p.add_argument("--plot", action="store_true", help="also write SVG figures")
    return ap


def _load(args, env=None) -> RunConfig:
    if args.config is not None:
        text = read_text(args.config)
        data = parse_toml(text, str(args.config))
        source = str(args.config)
    else:
        text, data, source = None, {}, None
    run = dict(data.get("run", {}))
    if run.get("experiment") not in (None, args.experiment):
        raise ValidationError("run.experiment",
                              f"config is for {run['experiment']!r}, not {args.experiment!r}")
    run["experiment"] = args.experiment
    if args.seed is not None:
        run["seed"] = args.seed
    data = dict(data, run=run)
    if "system" not in data and args.experiment in DEFAULT_SYSTEMS:
        data["system"] = dict(DEFAULT_SYSTEMS[args.experiment])
    cfg = build_config(data, text, source, env)
    return cfg.with_overrides(out=None if args.out is None else str(args.out),
                              threads=args.threads)


# -- experiments ------------------------------------------------------------

class _Run:
    """Collects written files and metadata for one invocation."""

    def __init__(self, cfg: RunConfig, plot: bool):
        self.cfg = cfg
        self.hash = cfg.hash()
        self.out = Path(cfg.out)
        self.plot = plot
        self.files: list[str] = []
        self.meta: dict = {}
        self.assumptions: list[str] = []
        self.partial: dict = {}

    def csv(self, name, schema, header, rows):
        self.files.append(write_csv(self.out / name, schema, self.hash, header, rows).name)

    def json(self, name, obj):
        self.files.append(write_json(self.out / name, obj).name)

    def svg(self, name, fn, *a, **kw):
        if self.plot:
            fn(*a, path=self.out / name, **kw)
            self.files.append(name)


def _exp_meanfield(r: _Run):
    from .meanfield import Inconclusive, classify_phase, default_t_end, integrate
    from .model import MeanFieldState
    p = r.cfg.system_params()
    m = r.cfg.section("meanfield")
    t_end = default_t_end(p) if m["t_end"] is None else m["t_end"]
    tr = integrate(p, MeanFieldState.empty(p.N, m["seed_amplitude"]), t_end, m["tol"],
                   n_samples=m["n_samples"])
    try:
        lab = classify_phase(tr, r.cfg.thresholds())
        r.meta["phase"] = dict(label=lab.phase.value, n_c=lab.n_c, n_stag=lab.n_stag,
                               amplitude=lab.amplitude, tau=lab.tau)
    except Inconclusive as exc:
        r.meta["phase"] = dict(label="Inconclusive", error=str(exc), **(exc.diagnostics or {}))
        r.partial["classification"] = str(exc)
    header = ["t", "a_c", "n_c", "n_stag"] + [f"n_{k}" for k in range(1, p.N + 1)]
    rows = (
        [t, y[0], y[0] ** 2, s, *y[1:]]
        for t, y, s in zip(tr.times, tr.y, tr.n_stag)
    )
    r.meta["t_end"] = t_end
    r.csv("meanfield_trace.csv", "meanfield_trace", header, rows)
    from . import plotting
    r.svg("meanfield.svg", plotting.meanfield_trace, tr.times, tr.n_c, tr.final.n,
          title=r.meta["phase"]["label"])


def _exp_phase_diagram(r: _Run):
    from .meanfield import phase_diagram_sweep
    base = r.cfg.system_params()
    s = r.cfg.section("system")
    g = r.cfg.section("phase_diagram")
    gs, kcs = grid_values(g["gamma_g"]), grid_values(g["kappa_c"])
    m = r.cfg.section("meanfield")
    rows = phase_diagram_sweep(gs, kcs, base, s["pump"], r.cfg.threads, zeta=s["zeta"],
                               t_end=m["t_end"], tol=m["tol"], thresholds=r.cfg.thresholds(),
                               seed_amplitude=m["seed_amplitude"])
    header = ["gamma_g_over_hop", "kappa_c_over_hop", "label", "n_c", "n_stag", "tau", "error"]
    r.csv("phase_diagram.csv", "phase_diagram", header,
          ([row.gamma_g / base.hop, row.kappa_c / base.hop, row.phase, row.n_c, row.n_stag,
            row.tau, row.error] for row in rows))
    counts = {}
    for row in rows:
        counts[row.phase] = counts.get(row.phase, 0) + 1
    r.meta["label_counts"] = counts
    bad = [row for row in rows if row.error]
    if bad:
        r.partial["unclassified_points"] = len(bad)
    labels = [[rows[i * len(kcs) + j].phase for j in range(len(kcs))] for i in range(len(gs))]
    from . import plotting
    r.svg("phase_diagram.svg", plotting.phase_map, gs / base.hop, kcs / base.hop, labels,
          xlabel="gamma_g / Gamma", ylabel="kappa_c / Gamma")


def _exp_period_scan(r: _Run):
    from .meanfield import collapse_spread, period_scan
    c = r.cfg.section("period_scan")
    s = r.cfg.sections.get("system")
    pump = s["pump"] if s else "infinite-temperature"
    zeta = s["zeta"] if s else None
    kappa_0 = s["kappa_0"] if s else 0.0
    rows = period_scan(c["hops"], c["kappa_cs"], c["Ns"], c["kappa_l"],
                       grid_values(c["loss_ratios"]), pump, kappa_0, c["tol"], r.cfg.threads,
                       zeta=zeta)
    header = ["N", "hop", "kappa_c", "kappa_l", "gamma_g", "phase", "tau",
              "rescaled_period", "loss_ratio"]
    r.csv("period_scan.csv", "period_scan", header,
          ([x.N, x.hop, x.kappa_c, x.kappa_l, x.gamma_g, x.phase, x.tau, x.rescaled_period,
            x.loss_ratio] for x in rows))
    try:
        spread, rng = collapse_spread(rows)
        r.meta["collapse"] = dict(max_relative_spread=spread, overlap=list(rng))
    except ValueError as exc:
        r.meta["collapse"] = dict(error=str(exc))
        r.partial["collapse"] = str(exc)
    curves = {}
    for x in rows:
        if x.tau is not None:
            key = f"N={x.N} G={x.hop:g} kc={x.kappa_c:g}"
            curves.setdefault(key, ([], []))
            curves[key][0].append(x.loss_ratio)
            curves[key][1].append(x.rescaled_period)
    from . import plotting
    r.svg("period_collapse.svg", plotting.period_collapse, curves)


def _exp_trajectories(r: _Run):
    from .model import FockConfig
    from .stochastic import (RNG_NAME, EnsembleSpec, ensemble_moments, run_ensemble,
                             truncated_master_integrate)
    p = r.cfg.system_params()
    t = r.cfg.section("trajectories")
    init = FockConfig.empty(p.N) if t["initial"] is None else FockConfig(t["initial"][0],
                                                                         t["initial"][1:])
    spec = EnsembleSpec(p, init, t["T"], t["K"], r.cfg.seed)
    dt = t["dt_sample"] if t["dt_sample"] is not None else t["T"] / (t["n_checkpoints"] - 1)
    trajs = run_ensemble(spec, r.cfg.threads, dt_sample=dt, record_events=t["event_log"],
                         sample="all")
    mean, se = ensemble_moments(trajs)
    times = trajs[0].sample_times
    names = ["n_c"] + [f"n_{k}" for k in range(1, p.N + 1)]
    header = ["t"] + [f"{pre}_{n}" for n in names for pre in ("mean", "se")]
    cols = [times] + [a[:, k] for k in range(len(names)) for a in (mean, se)]
    oracle = None
    if t["oracle_n_max"] > 0:
        res = truncated_master_integrate(p, init, t["T"], t["oracle_n_max"], times=times)
        se_exact = np.sqrt(res.var / t["K"])
        z = np.where(se_exact > 0, (mean - res.mean) / np.where(se_exact > 0, se_exact, 1), 0.0)
        header += [f"master_{n}" for n in names] + [f"z_{n}" for n in names]
        cols += [res.mean[:, k] for k in range(len(names))] + [z[:, k] for k in range(len(names))]
        r.meta["oracle"] = dict(n_max=t["oracle_n_max"], boundary_mass=res.boundary_mass,
                                n_states=res.n_states, max_abs_z=float(np.abs(z).max()),
                                z_reference="exact variance / K")
        oracle = (times, res.mean)
    r.csv("ensemble_means.csv", "ensemble_means", header, zip(*cols))
    fin_header = ["index", "seed", "n_events", "emitted"] + [f"final_{n}" for n in names]
    r.csv("trajectories_final.csv", "trajectories_final", fin_header,
          ([i, tr.seed, tr.n_events, tr.emitted_count, *tr.final.as_array()]
           for i, tr in enumerate(trajs)))
    if t["event_log"]:
        idx = write_events(r.out / "events.bin", [tr.events for tr in trajs])
        r.files.append("events.bin")
        r.csv("events_index.csv", "events_index", ["index", "seed", "offset", "count"],
              ([i, tr.seed, off, n] for i, (tr, (off, n)) in enumerate(zip(trajs, idx))))
    r.meta["rng"] = RNG_NAME
    r.meta["dt_sample"] = dt
    from . import plotting
    r.svg("ensemble_means.svg", plotting.ensemble_means, times, mean, se, names, oracle=oracle)


def _spectrum_knobs(r: _Run):
    sp = r.cfg.section("spectrum")
    return dict(dt=sp["dt"], flat_fraction=sp["flat_fraction"], pad=sp["pad"],
                omega_floor=sp["omega_floor"], max_lag=sp["max_lag"])


def _exp_spectrum(r: _Run):
    from .analysis import default_record_length, spectrum_point
    p = r.cfg.system_params()
    sp = r.cfg.section("spectrum")
    T = default_record_length(p) if sp["T"] is None else sp["T"]
    burn = 0.1 * T if sp["burn_in"] is None else sp["burn_in"]
    res, err = spectrum_point(p, sp["K"], T, master_seed=r.cfg.seed, burn_in=burn,
                              workers=r.cfg.threads, n_boot=sp["n_boot"], boot_seed=r.cfg.seed,
                              **_spectrum_knobs(r))
    r.csv("spectrum.csv", "spectrum", ["omega", "S"], zip(res.omega, res.S))
    r.meta["peak"] = dict(omega_max=res.omega_max, S_max=res.S_max, delta_omega=res.delta_omega,
                          beta=res.beta, beta_err=err, one_sided=res.one_sided,
                          n_used=res.n_used, n_degenerate=res.n_degenerate)
    r.meta["estimator"] = res.meta
    r.assumptions.append("lag window, taper and DC floor are analysis choices; see estimator")
    from . import plotting
    r.svg("spectrum.svg", plotting.spectrum, res.omega, res.S, omega_max=res.omega_max,
          omega_floor=res.meta.get("omega_floor"))


def _exp_beta_scan(r: _Run):
    from .analysis import beta_sweep
    p = r.cfg.system_params()
    s = r.cfg.section("system")
    sp = r.cfg.section("spectrum")
    gs = grid_values(r.cfg.section("beta_scan")["gamma_g"])
    rows = beta_sweep(gs, p.kappa_c, p, sp["K"], sp["T"], s["pump"], master_seed=r.cfg.seed,
                      burn_in=sp["burn_in"], n_boot=sp["n_boot"], workers=r.cfg.threads,
                      zeta=s["zeta"], **{k: v for k, v in _spectrum_knobs(r).items()})
    header = ["gamma_g_over_kappa_c", "gamma_g", "kappa_c", "beta", "beta_err", "omega_max",
              "S_max", "delta_omega", "n_used", "error"]
    r.csv("beta_scan.csv", "beta_scan", header,
          ([x.ratio, x.gamma_g, x.kappa_c, x.beta, x.beta_err, x.omega_max, x.S_max,
            x.delta_omega, x.n_used, x.error] for x in rows))
    bad = [x for x in rows if x.error]
    if bad:
        r.partial["points_without_peak"] = len(bad)
    ok = [x for x in rows if x.beta is not None]
    from . import plotting
    if ok:
        r.svg("beta_scan.svg", plotting.beta_curve, [x.ratio for x in ok], [x.beta for x in ok],
              [x.beta_err or 0.0 for x in ok])


def _exp_detector(r: _Run):
    from .stochastic import detector_ensemble, detector_params, histogram_overlap
    d = r.cfg.section("detector")
    p = detector_params(d["N"], d["hop"], d["kappa_l"], d["kappa_c"], d["kappa_0"])
    hists = detector_ensemble(p, d["n1_init"], d["runs"], d["T"], r.cfg.seed, r.cfg.threads)
    rows = []
    for n1, v in hists.items():
        counts = np.bincount(v)
        rows += [[n1, k, int(c)] for k, c in enumerate(counts) if c]
    r.csv("detector_histograms.csv", "detector_histograms", ["n1_init", "n_out", "count"], rows)
    keys = list(hists)
    summary = []
    for i, n1 in enumerate(keys):
        v = hists[n1]
        ov = histogram_overlap(v, hists[keys[i + 1]]) if i + 1 < len(keys) else None
        summary.append([n1, v.size, float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0,
                        ov])
    r.csv("detector_summary.csv", "detector_summary",
          ["n1_init", "runs", "mean_n_out", "std_n_out", "overlap_with_next"], summary)
    T = d["T"] if d["T"] is not None else 10.0 / p.kappa_0
    r.meta["duration"] = T
    if d["T"] is None:
        r.assumptions.append("detection window defaults to 10/kappa_0")
    r.assumptions.append("pump switched off during detection")
    from . import plotting
    r.svg("detector.svg", plotting.detector_histograms, hists)


def _exp_circuit(r: _Run):
    from .circuit import design_report
    c = r.cfg.section("circuit")
    cp = r.cfg.circuit_params()
    rep = design_report(cp, c["n_bar"], c["n_bar_c"], c["delta_min"], c["B4"],
                        c["much_less_factor"])
    rep["params"] = cp.to_dict()
    r.json("circuit_report.json", rep)
    flat = [("g_hz", rep["g_hz"]), ("hop_rate_hz", rep["hop_rate_hz"]),
            ("kerr_scale_hz", rep["kerr_scale_hz"]), ("B4_used", rep["B4_used"]),
            ("B4_from_angles", rep["B4_from_angles"])]
    flat += [(f"r{i + 1}", v) for i, v in enumerate(rep["residuals"])]
    flat += [("hierarchy_satisfied", rep["hierarchy"]["satisfied"])]
    r.csv("circuit.csv", "circuit", ["quantity", "value"], flat)
    if abs(rep["B4_used"] - abs(rep["B4_from_angles"])) > 1e-12:
        r.assumptions.append("B4 supplied in config differs from the value implied by the angles")


_RUNNERS = {
    "meanfield": _exp_meanfield,
    "phase-diagram": _exp_phase_diagram,
    "period-scan": _exp_period_scan,
    "trajectories": _exp_trajectories,
    "spectrum": _exp_spectrum,
    "beta-scan": _exp_beta_scan,
    "detector": _exp_detector,
    "circuit": _exp_circuit,
}


def run_experiment(cfg: RunConfig, plot: bool = False) -> dict:
    """Run ``cfg.experiment`` and write all outputs; return the metadata."""
    exp = cfg.experiment
    if exp not in _RUNNERS:
        raise ValidationError("run.experiment", f"unknown experiment {exp!r}")
    r = _Run(cfg, plot)
    r.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    _RUNNERS[exp](r)
    wall = time.perf_counter() - t0
    meta = {
        "tool": "bal",
        "version": __version__,
        "experiment": exp,
        "config": cfg.to_dict(),
        "config_hash": r.hash,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "wall_time_s": wall,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "outputs": list(r.files),
        "assumptions": r.assumptions,
        "partial": r.partial or None,
        **r.meta,
    }
    write_json(r.out / f"{exp}.meta.json", meta)
    return meta


def _error_report(exc, kind):
    rep = {"error": type(exc).__name__, "kind": kind, "message": str(exc)}
    for attr in ("field", "line", "col", "path"):
        v = getattr(exc, attr, None)
        if v is not None:
            rep[attr] = v
    return rep


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except (ParseError, ValidationError) as exc:
        print(json.dumps(_error_report(exc, "config")), file=sys.stderr)
        return 2
    try:
        meta = run_experiment(cfg, args.plot)
    except Exception as exc:  # report, never crash silently
        rep = _error_report(exc, "runtime")
        rep["traceback"] = traceback.format_exc()
        try:
            Path(cfg.out).mkdir(parents=True, exist_ok=True)
            write_json(Path(cfg.out) / "error.json", rep)
        except OSError:
            pass
        print(json.dumps({k: v for k, v in rep.items() if k != "traceback"}), file=sys.stderr)
        return 1
    wall = meta["wall_time_s"]
    print(f"{meta['experiment']}: wrote {len(meta['outputs']) + 1} files to {cfg.out} "
          f"in {wall:.1f} s (config {meta['config_hash'][:12]})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
