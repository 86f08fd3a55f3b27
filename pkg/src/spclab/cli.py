"""Command-line entry point: subcommands over a JSON config, artifacts on disk.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 study error.  Identical configs produce byte-identical artifacts; progress
chatter goes to stderr only.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import evolution, scattering, statics, studies
from ._io import config_hash, write_csv, write_json
from .core import PotentialModel, build_grid
from .errors import (
    ConfigurationError,
    NumericalFailure,
    SpclabError,
    StudyError,
    UsageError,
)

COMMANDS = (
    "critical",
    "track",
    "resonance",
    "fit",
    "evolve",
    "static-decay",
    "short-time",
    "scaling",
    "spectrum-compare",
)

_SECTION_KEYS = {
    "model": {"shape", "R", "lambda_c", "lambda_slope", "sign", "channel",
              "lambda_bracket"},
    "grid": {"r_max", "n"},
    "critical": {"delta_edge", "delta_edges"},
    "track": {"sigmas"},
    "resonance": {"sigmas", "k_points", "k_lo", "k_hi", "delta_edge"},
    "fit": {"pin_c0"},
    "evolve": {"epsilon", "s_start", "s_end", "kind", "rate", "sigma0",
               "sigma_max", "spectrum", "reference", "delta_edge"},
    "static-decay": {"sigma", "epsilon"},
    "short-time": {"a", "S", "epsilon"},
    "scaling": {"epsilons", "mode"},
    "spectrum-compare": {"sigma", "epsilon", "schedule", "rate", "s_end_factor"},
}

_REQUIRED = {
    "critical": ("model", "grid"),
    "track": ("model", "grid", "track"),
    "resonance": ("model", "grid", "resonance"),
    "fit": ("model", "grid", "resonance"),
    "evolve": ("model", "grid", "evolve"),
    "static-decay": ("model", "grid", "static-decay"),
    "short-time": ("model", "grid", "short-time"),
    "scaling": ("model", "grid", "scaling"),
    "spectrum-compare": ("model", "grid", "resonance", "spectrum-compare"),
}


def _validate_config(cmd, config):
    problems = []
    for section in _REQUIRED[cmd]:
        if section not in config:
            problems.append(f"missing required section '{section}'")
    for section, body in config.items():
        if section not in _SECTION_KEYS:
            problems.append(f"unknown section '{section}'")
            continue
        if not isinstance(body, dict):
            problems.append(f"section '{section}' must be an object")
            continue
        extra = set(body) - _SECTION_KEYS[section]
        for key in sorted(extra):
            problems.append(f"unknown key '{section}.{key}'")
    if problems:
        raise ConfigurationError("config validation failed:\n  " + "\n  ".join(problems))


def _build_model(config, auto_ok=True):
    m = config["model"]
    lam = m.get("lambda_c", "auto")
    channel = int(m.get("channel", 1))
    bracket = tuple(m.get("lambda_bracket", (3.7, 6.0)))
    model = PotentialModel(
        R=float(m.get("R", 1.0)),
        lambda_c=1.0 if lam == "auto" else float(lam),
        lambda_slope=float(m.get("lambda_slope", 1.0)),
        sign=int(m.get("sign", 1)),
        shape=m.get("shape", "well"),
    )
    auto_meta = None
    if lam == "auto":
        if not auto_ok:
            raise ConfigurationError("lambda_c='auto' not supported by this command")
        lam_c, unc, _ = statics.find_critical_coupling(
            model, lambda_bracket=bracket, channel=channel
        )
        model = model.with_lambda_c(lam_c)
        auto_meta = {"lambda_c": lam_c, "lambda_c_uncertainty": unc}
    return model, channel, bracket, auto_meta


def _build_grid(config):
    g = config["grid"]
    return build_grid(float(g["r_max"]), int(g["n"]))


def _resonance_profiles(config, model, grid, channel, bracket, verbose):
    r = config["resonance"]
    delta_edge = float(r.get("delta_edge", 2.5e-4))
    bs, _ = statics.sampled_edge_state(model, grid, delta_edge=delta_edge,
                                       lambda_bracket=bracket, channel=channel)
    Phi = bs.wavefunction
    profiles = []
    for s in r["sigmas"]:
        kg = scattering.default_k_grid(
            float(s), n=int(r.get("k_points", 320)), lo=float(r.get("k_lo", 0.25)),
            hi=float(r.get("k_hi", 3.5)), r_max=grid.r_max,
        )
        profiles.append(scattering.scan_resonance(model, grid, float(s), kg, Phi=Phi))
        if verbose:
            print(f"scanned sigma={s}", file=sys.stderr)
    return profiles, Phi


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------


def _cmd_critical(config, out, sha, jobs, verbose):
    model, channel, bracket, auto_meta = _build_model(config)
    grid = _build_grid(config)
    crit = config.get("critical", {})
    data = statics.compute_critical_data(
        model, grid,
        delta_edge=float(crit.get("delta_edge", 2.5e-4)),
        lambda_bracket=bracket,
        delta_edges=tuple(crit.get("delta_edges", (1e-3, 5e-4, 2.5e-4))),
        channel=channel,
    )
    payload = {
        "lambda_c": data.lambda_c,
        "lambda_c_uncertainty": data.lambda_c_uncertainty,
        "C0": data.C0,
        "identity_residual": data.identity_residual,
        "delta_edge": data.delta_edge,
        "sigma_ref": data.sigma_ref,
        "energy": data.energy,
    }
    write_json(out / "critical.json", payload, sha)
    return f"lambda_c={data.lambda_c:.8f} C0={data.C0:.6f} residual={data.identity_residual:.3e}"


def _cmd_track(config, out, sha, jobs, verbose):
    model, channel, bracket, _ = _build_model(config)
    grid = _build_grid(config)
    track = statics.track_eigenvalue(model, grid, config["track"]["sigmas"],
                                     channel=channel)
    rows = [
        (s, e, float(np.sqrt(max(0.0, 1 - e * e))), r)
        for (s, e), r in zip(track.samples, track.identity_residuals)
    ]
    write_csv(out / "track.csv", ["sigma", "energy", "kappa", "identity_residual"],
              rows, sha)
    write_json(out / "track.json", track.diagnostics | {
        "dE_dsigma_at_c": track.dE_dsigma_at_c}, sha)
    d = track.diagnostics
    return (f"{len(rows)} samples, kappa^2 slope={d['kappa_sq_slope']:.4f} "
            f"R2={d['kappa_sq_r2']:.5f}")


def _cmd_resonance(config, out, sha, jobs, verbose):
    model, channel, bracket, _ = _build_model(config)
    grid = _build_grid(config)
    profiles, _ = _resonance_profiles(config, model, grid, channel, bracket, verbose)
    rows = []
    meta = []
    for p in profiles:
        rows.extend((p.sigma, k, y) for k, y in zip(p.k, p.phi_out_sq))
        meta.append({"sigma": p.sigma, "k_peak": p.k_peak,
                     "delta_width": p.delta_width})
    write_csv(out / "resonance.csv", ["sigma", "k", "phi_out_sq"], rows, sha)
    write_json(out / "profiles.json", {"profiles": meta}, sha)
    return f"{len(profiles)} profiles, k_peak range " + (
        f"[{profiles[0].k_peak:.4f}, {profiles[-1].k_peak:.4f}]")


def _cmd_fit(config, out, sha, jobs, verbose):
    model, channel, bracket, _ = _build_model(config)
    grid = _build_grid(config)
    profiles, Phi = _resonance_profiles(config, model, grid, channel, bracket, verbose)
    pin = config.get("fit", {}).get("pin_c0", True)
    c0 = statics.c0_from_state(Phi, model) if pin else None
    constants = scattering.fit_constants(profiles, c0=c0)
    rows = []
    for p in profiles:
        rows.extend((p.sigma, k, y) for k, y in zip(p.k, p.phi_out_sq))
    write_csv(out / "resonance.csv", ["sigma", "k", "phi_out_sq"], rows, sha)
    write_json(out / "constants.json", constants.as_dict(), sha)
    return (f"C0={constants.C0:.5f} |C2|={constants.absC2:.5f} "
            f"|C3|={constants.absC3:.5f} residual={constants.fit_residual:.4f}")


def _cmd_evolve(config, out, sha, jobs, verbose):
    model, channel, bracket, _ = _build_model(config)
    grid = _build_grid(config)
    e = config["evolve"]
    sched = evolution.Schedule(
        epsilon=float(e["epsilon"]), s_start=float(e["s_start"]),
        s_end=float(e["s_end"]), kind=e.get("kind", "linear"),
        rate=float(e.get("rate", 1.0)), sigma0=float(e.get("sigma0", 0.0)),
        sigma_max=float(e.get("sigma_max", 0.0)),
    )
    Phi = evolution.critical_reference_state(
        model, grid, delta_edge=float(e.get("delta_edge", 1e-3)),
        lambda_bracket=bracket, channel=channel,
    )[0].wavefunction
    res = evolution.propagate(model, grid, sched, Phi, channel=channel)
    write_csv(out / "survival.csv", ["s", "survival"],
              list(zip(res.times, res.survival)), sha)
    try:
        s_d = evolution.decay_time(res)
    except SpclabError:
        s_d = None
    if e.get("spectrum", True):
        samples, acct = evolution.outgoing_spectrum(res, model, grid, channel=channel)
        write_csv(out / "spectrum.csv", ["k", "weight"], samples, sha)
    else:
        acct = {}
    write_json(out / "run.json", {
        "epsilon": sched.epsilon,
        "schedule": {"kind": sched.kind, "s_start": sched.s_start,
                     "s_end": sched.s_end, "rate": sched.rate,
                     "sigma0": sched.sigma0, "sigma_max": sched.sigma_max},
        "grid": {"r_max": grid.r_max, "n": grid.n},
        "model": {"R": model.R, "lambda_c": model.lambda_c,
                  "lambda_slope": model.lambda_slope, "sign": model.sign},
        "norm_drift": res.norm_drift,
        "s_d": s_d,
        "accounting": acct,
    }, sha)
    return f"norm_drift={res.norm_drift:.2e} s_d={s_d}"


def _cmd_static_decay(config, out, sha, jobs, verbose):
    model, channel, bracket, _ = _build_model(config)
    grid = _build_grid(config)
    sd = config["static-decay"]
    s_m, s_f, res = evolution.static_decay_check(
        model, grid, float(sd["sigma"]), float(sd["epsilon"]),
        lambda_bracket=bracket, channel=channel,
    )
    write_csv(out / "survival.csv", ["s", "survival"],
              list(zip(res.times, res.survival)), sha)
    write_json(out / "static_decay.json", {
        "sigma": float(sd["sigma"]), "epsilon": float(sd["epsilon"]),
        "s_d_measured": s_m, "s_d_formula": s_f, "ratio": s_m / s_f,
    }, sha)
    return f"s_d measured={s_m:.5f} formula={s_f:.5f}"


def _cmd_short_time(config, out, sha, jobs, verbose):
    model, channel, bracket, _ = _build_model(config)
    grid = _build_grid(config)
    st = config["short-time"]
    cfg = evolution.ShortTimeConfig(a=float(st["a"]), S=float(st["S"]),
                                    epsilon=float(st["epsilon"]))
    p, est, _ = evolution.short_time_probability(
        model, grid, cfg, lambda_bracket=bracket, channel=channel)
    write_json(out / "short_time.json", {
        "a": cfg.a, "S": cfg.S, "epsilon": cfg.epsilon,
        "p_measured": p, "p_estimate": est,
    }, sha)
    return f"p_measured={p:.3e} p_estimate={est:.3e}"


def _cmd_scaling(config, out, sha, jobs, verbose):
    model, channel, bracket, _ = _build_model(config)
    grid = _build_grid(config)
    sc = config["scaling"]
    eps = [float(x) for x in sc["epsilons"]]
    if len(eps) < 3:
        raise StudyError("fewer than 3 valid points")
    mode = sc.get("mode", "time-dependent")
    if mode == "static":
        r = config.get("resonance", {})
        profiles, Phi = _resonance_profiles(
            {"resonance": {"sigmas": r.get("sigmas", [0.0025, 0.005, 0.01, 0.025]),
                           **{k: v for k, v in r.items() if k != "sigmas"}}},
            model, grid, channel, bracket, verbose)
        c0 = statics.c0_from_state(Phi, model)
        constants = scattering.fit_constants(profiles, c0=c0)
        fit = studies.static_scaling_study(model, grid, constants, eps,
                                           channel=channel,
                                           lambda_bracket=bracket, jobs=jobs)
    elif mode == "time-dependent":
        fit = studies.td_scaling_study(model, grid, eps, channel=channel,
                                       lambda_bracket=bracket, jobs=jobs)
    else:
        raise ConfigurationError(f"unknown scaling mode {mode!r}")
    write_csv(out / "runs.csv", ["epsilon", "s_d"], fit.points, sha)
    write_json(out / "scaling.json", fit.as_dict() | {"mode": mode}, sha)
    return f"slope={fit.slope:.4f} +- {fit.stderr:.4f}"


def _cmd_spectrum_compare(config, out, sha, jobs, verbose):
    model, channel, bracket, _ = _build_model(config)
    grid = _build_grid(config)
    scfg = config["spectrum-compare"]
    sigma = float(scfg["sigma"])
    epsilon = float(scfg["epsilon"])
    profiles, Phi = _resonance_profiles(
        {"resonance": {"sigmas": [sigma], **{k: v for k, v in
                                             config["resonance"].items()
                                             if k != "sigmas"}}},
        model, grid, channel, bracket, verbose)
    profile = profiles[0]
    kind = scfg.get("schedule", "constant")
    if kind == "constant":
        s_end = float(scfg.get("s_end_factor", 2.5)) * 4.0 * epsilon / (
            profile.k_peak * profile.delta_width)
        sched = evolution.Schedule(epsilon=epsilon, s_start=0.0, s_end=s_end,
                                   kind="constant", sigma0=sigma)
    else:
        rate = float(scfg.get("rate", 1.0))
        half = sigma / rate
        sched = evolution.Schedule(epsilon=epsilon, s_start=-2.0 * half,
                                   s_end=2.0 * half, kind="tent", rate=rate,
                                   sigma_max=sigma)
    Phi_evo = evolution.critical_reference_state(
        model, grid, lambda_bracket=bracket, channel=channel)[0].wavefunction
    res = evolution.propagate(model, grid, sched, Phi_evo, channel=channel)
    k_grid = np.arange(scattering.FOUR_PI / grid.r_max * (1 + 1e-12),
                       profile.k.max(), np.pi / (3.0 * grid.r_max))
    samples = evolution.spectrum_weights(res.final_state, model, grid,
                                         profile.sigma if kind == "constant" else 0.0,
                                         k_grid, channel=channel)
    report = studies.spectrum_comparison(samples, profile)
    write_csv(out / "spectrum.csv", ["k", "weight"], samples, sha)
    write_csv(out / "profile.csv", ["sigma", "k", "phi_out_sq"],
              [(profile.sigma, k, y) for k, y in zip(profile.k, profile.phi_out_sq)],
              sha)
    write_json(out / "comparison.json", report, sha)
    return f"{report['label']} (L1={report['l1_distance']:.3f})"


_HANDLERS = {
    "critical": _cmd_critical,
    "track": _cmd_track,
    "resonance": _cmd_resonance,
    "fit": _cmd_fit,
    "evolve": _cmd_evolve,
    "static-decay": _cmd_static_decay,
    "short-time": _cmd_short_time,
    "scaling": _cmd_scaling,
    "spectrum-compare": _cmd_spectrum_compare,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="spclab",
        description="Desk-scale laboratory for overcritical Dirac wells.",
    )
    parser.add_argument("command", choices=COMMANDS, metavar="command",
                        help="one of: " + ", ".join(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON configuration file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker pool size for studies")
    parser.add_argument("--verbose", action="store_true")
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return 2 if ex.code not in (0,) else 0

    config_path = Path(args.config)
    if not config_path.is_file():
        print(f"error: config file not found: {config_path}", file=sys.stderr)
        return 2
    try:
        config = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as ex:
        print(f"error: malformed JSON in {config_path}: {ex}", file=sys.stderr)
        return 2

    out = Path(args.out)
    try:
        _validate_config(args.command, config)
        sha = config_hash(config)
        summary = _HANDLERS[args.command](config, out, sha, args.jobs, args.verbose)
    except (ConfigurationError, UsageError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 2
    except NumericalFailure as ex:
        print(f"numerical failure: {ex}", file=sys.stderr)
        return 3
    except (StudyError, SpclabError) as ex:
        print(f"study error: {ex}", file=sys.stderr)
        return 4
    print(f"{args.command}: {summary}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
