"""Parameter sweeps, log-log scaling fits, fixed-point decay time, comparisons.

Sweep runs are independent; they execute on a bounded process pool and are
merged in sweep order, so study outputs are a pure function of their inputs.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import StudyError, UsageError
from . import evolution, scattering, statics


@dataclass(frozen=True)
class SweepSpec:
    """One swept variable over positive, sorted values; `fixed` holds the rest."""

    variable: str
    values: tuple
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variable not in ("epsilon", "a", "S", "sigma"):
            raise UsageError(f"unknown sweep variable {self.variable!r}")
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 3:
            raise UsageError("sweeps need at least 3 values for any fit")
        if any(v <= 0 for v in vals) or list(vals) != sorted(vals):
            raise UsageError("sweep values must be positive and ascending")
        object.__setattr__(self, "values", vals)


@dataclass
class ScalingFit:
    slope: float
    intercept: float
    stderr: float
    r_squared: float
    points: list
    excluded: int = 0

    def as_dict(self):
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "r_squared": self.r_squared,
            "excluded_runs": self.excluded,
        }


def fit_loglog(xs, ys):
    """Ordinary least squares of log y on log x with the OLS slope stderr."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 3:
        raise StudyError(f"fewer than 3 valid points ({xs.size})")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise UsageError("log-log fit needs positive data")
    lx, ly = np.log(xs), np.log(ys)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ coef
    resid = ly - pred
    dof = max(1, lx.size - 2)
    s2 = float(np.sum(resid**2) / dof)
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    stderr = math.sqrt(s2 / sxx) if sxx > 0 else float("inf")
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(
        slope=float(coef[0]),
        intercept=float(coef[1]),
        stderr=stderr,
        r_squared=r2,
        points=list(zip(xs.tolist(), ys.tolist())),
    )


# ---------------------------------------------------------------------------
# fixed-point decay time
# ---------------------------------------------------------------------------


def kdelta_of_sigma(constants, sigma):
    """k(sigma) * Delta(sigma) from fitted constants:
    (C0/|C2|)^(3/2) * (|C3|/(2|C2|)) * sigma^(3/2)."""
    a = constants.C0 / constants.absC2
    w = constants.absC3 / (2.0 * constants.absC2)
    return a**1.5 * w * sigma**1.5


def fixed_point_sd(constants, epsilon):
    """Closed form of s_d = 4 eps / (k(s_d) Delta(s_d)) under sigma = s_d.

    s_d = (4 eps (2|C2|/|C3|) (|C2|/C0)^(3/2))^(2/5), so s_d scales as
    epsilon^(2/5) exactly.
    """
    if epsilon <= 0:
        raise UsageError("epsilon must be positive")
    pref = 4.0 * (2.0 * constants.absC2 / constants.absC3) * (
        constants.absC2 / constants.C0
    ) ** 1.5
    return float((pref * epsilon) ** 0.4)


def fixed_point_sd_iterative(constants, epsilon, tol=1e-12, max_iter=200):
    """Damped fixed-point iteration oracle for s_d = 4 eps / (k Delta)(s_d)."""
    s = float(epsilon) ** 0.4
    for _ in range(max_iter):
        target = 4.0 * epsilon / kdelta_of_sigma(constants, s)
        # the raw map has slope -3/2 at the fixed point; solve in log space
        # with 2/5 damping, which contracts
        s_new = s ** (3.0 / 5.0) * target ** (2.0 / 5.0)
        if abs(s_new - s) < tol * max(s, 1e-300):
            return float(s_new)
        s = s_new
    return float(s)


# ---------------------------------------------------------------------------
# scaling studies
# ---------------------------------------------------------------------------


def _static_run_worker(args):
    (model, grid, epsilon, constants, channel, lam_bracket) = args
    # freeze at sigma = s_d self-consistently: seed with the closed form and
    # solve s_d_measured(sigma) = sigma by a few secant steps
    Phi = evolution.critical_reference_state(
        model, grid, lambda_bracket=lam_bracket, channel=channel
    )[0].wavefunction

    def measured(sig):
        sd, _, _ = evolution.static_decay_check(
            model, grid, sig, epsilon, Phi=Phi, lambda_bracket=lam_bracket,
            channel=channel,
        )
        return sd

    s0 = fixed_point_sd(constants, epsilon)
    f0 = measured(s0) - s0
    s1 = s0 * (1.0 + 0.5 * f0 / s0)
    s1 = min(max(s1, 0.25 * s0), 4.0 * s0)
    f1 = measured(s1) - s1
    for _ in range(3):
        if abs(f1) < 0.02 * s1 or f1 == f0:
            break
        s2 = s1 - f1 * (s1 - s0) / (f1 - f0)
        s2 = min(max(s2, 0.2 * s1), 5.0 * s1)
        s0, f0, s1 = s1, f1, s2
        f1 = measured(s1) - s1
    return float(s1 + f1)  # the measured decay time at the near-fixed point


def static_scaling_study(model, grid, constants, epsilons, channel=None,
                         lambda_bracket=(3.7, 6.0), jobs=None):
    """Measured s_d(eps) with the operator frozen at the self-consistent sigma.

    Fits log s_d against log eps; the fixed-point argument predicts slope 2/5.
    """
    eps = sorted(float(e) for e in epsilons)
    if len(eps) < 5 or eps[-1] / eps[0] < 10**1.5 * 0.999:
        raise UsageError("need >= 5 epsilon values spanning >= 1.5 decades")
    args = [(model, grid, e, constants, channel, lambda_bracket) for e in eps]
    results = _run_pool(_static_run_worker, args, jobs)
    sds, valid_eps, excluded = [], [], 0
    for e, r in zip(eps, results):
        if isinstance(r, Exception):
            warnings.warn(f"static run at eps={e} excluded: {r}", stacklevel=2)
            excluded += 1
            continue
        valid_eps.append(e)
        sds.append(r)
    fit = fit_loglog(valid_eps, sds)
    fit.excluded = excluded
    return fit


def _td_run_worker(args):
    (model, grid, epsilon, s_start, s_end, Phi_data, channel) = args
    Phi = Phi_data
    sched = evolution.Schedule(epsilon=epsilon, s_start=s_start, s_end=s_end,
                               kind="linear")
    res = evolution.propagate(model, grid, sched, Phi, reference=Phi,
                              stop_below=0.35, channel=channel)
    return evolution.decay_time(res)


def td_scaling_study(model, grid, epsilons, channel=None,
                     lambda_bracket=(3.7, 6.0), s_start=-0.05,
                     s_end_estimate=None, jobs=None, step_check=True):
    """Full time-dependent runs sigma(s) = s; fit of the measured s_d exponent.

    Each run starts subcritically at s_start with the near-critical reference
    state and is validated by a halved-step re-run at the extreme epsilon
    (5 percent agreement required).
    """
    eps = sorted(float(e) for e in epsilons)
    if len(eps) < 5 or eps[-1] / eps[0] < 10**1.5 * 0.999:
        raise UsageError("need >= 5 epsilon values spanning >= 1.5 decades")
    Phi = evolution.critical_reference_state(
        model, grid, lambda_bracket=lambda_bracket, channel=channel
    )[0].wavefunction

    def s_end_for(e):
        if s_end_estimate is not None:
            return s_end_estimate(e)
        return 2.5 * (14.0 * e) ** 0.4 + 0.02

    args = [(model, grid, e, s_start, s_end_for(e), Phi, channel) for e in eps]
    results = _run_pool(_td_run_worker, args, jobs)
    sds, valid_eps, excluded = [], [], 0
    for e, r in zip(eps, results):
        if isinstance(r, Exception):
            warnings.warn(f"time-dependent run at eps={e} excluded: {r}", stacklevel=2)
            excluded += 1
            continue
        valid_eps.append(e)
        sds.append(r)
    fit = fit_loglog(valid_eps, sds)
    fit.excluded = excluded

    if step_check and valid_eps:
        e = valid_eps[-1]
        sched = evolution.Schedule(epsilon=e, s_start=s_start, s_end=s_end_for(e),
                                   kind="linear")
        res2 = evolution.propagate(model, grid, sched, Phi, reference=Phi,
                                   stop_below=0.35, channel=channel,
                                   ds=None)
        ds_half = res2.meta["ds"] / 2.0
        res3 = evolution.propagate(model, grid, sched, Phi, reference=Phi,
                                   stop_below=0.35, channel=channel, ds=ds_half)
        sd2, sd3 = evolution.decay_time(res2), evolution.decay_time(res3)
        fit_meta = abs(sd2 / sd3 - 1.0)
        if fit_meta > 0.05:
            raise StudyError(f"step-refinement check failed: {fit_meta:.3f} > 0.05")
    return fit


def short_time_study(model, grid, sweep_a, sweep_S, channel=None,
                     lambda_bracket=(3.7, 6.0)):
    """Slopes of log p vs log a and log p vs log S (both expected = 2).

    Points outside the perturbative regime (p >= 0.05) are excluded with a
    warning.
    """
    Phi = evolution.critical_reference_state(
        model, grid, lambda_bracket=lambda_bracket, channel=channel
    )[0].wavefunction

    def run(a, S, eps):
        cfg = evolution.ShortTimeConfig(a=a, S=S, epsilon=eps)
        p, _, _ = evolution.short_time_probability(
            model, grid, cfg, Phi=Phi, lambda_bracket=lambda_bracket,
            channel=channel,
        )
        return p

    fits = []
    for sweep in (sweep_a, sweep_S):
        xs, ps, excluded = [], [], 0
        for v in sweep.values:
            a = v if sweep.variable == "a" else sweep.fixed["a"]
            S = v if sweep.variable == "S" else sweep.fixed["S"]
            eps = sweep.fixed["epsilon"]
            p = run(a, S, eps)
            if p >= 0.05:
                warnings.warn(
                    f"short-time point {sweep.variable}={v} non-perturbative "
                    f"(p={p:.3f}); excluded",
                    stacklevel=2,
                )
                excluded += 1
                continue
            xs.append(v)
            ps.append(p)
        fit = fit_loglog(xs, ps)
        fit.excluded = excluded
        fits.append(fit)
    return tuple(fits)


# ---------------------------------------------------------------------------
# spectrum comparison
# ---------------------------------------------------------------------------


def spectrum_comparison(spectrum_samples, profile):
    """Normalized L1 distance between a run spectrum and a resonance profile.

    Both densities are interpolated onto the overlap of their k supports and
    normalized to unit integral there; the distance is
    0.5 * integral |p - q| dk, in [0, 1].  Runs closer than 0.3 are labeled
    'resonance-like', the rest 'washed-out'.
    """
    ks = np.array([k for k, _ in spectrum_samples])
    ws = np.array([w for _, w in spectrum_samples])
    kp = np.asarray(profile.k, dtype=float)
    yp = np.asarray(profile.phi_out_sq, dtype=float) * kp**2  # back to density
    lo = max(ks.min(), kp.min())
    hi = min(ks.max(), kp.max())
    if not lo < hi:
        raise UsageError("spectrum and profile do not overlap in k")
    kk = np.linspace(lo, hi, 1200)
    p = np.interp(kk, ks, ws)
    q = np.interp(kk, kp, yp)
    ip = np.trapz(p, kk)
    iq = np.trapz(q, kk)
    if ip <= 0 or iq <= 0:
        raise UsageError("degenerate spectra")
    p /= ip
    q /= iq
    dist = 0.5 * float(np.trapz(np.abs(p - q), kk))
    peak_run = float(kk[np.argmax(p)])
    peak_profile = float(kk[np.argmax(q)])
    label = "resonance-like" if dist < 0.3 else "washed-out"
    return {
        "l1_distance": dist,
        "label": label,
        "peak_run": peak_run,
        "peak_profile": peak_profile,
        "peak_offset": peak_run - peak_profile,
    }


# ---------------------------------------------------------------------------
# pool plumbing
# ---------------------------------------------------------------------------


def _run_pool(worker, args, jobs):
    """Run worker over args, preserving order; exceptions returned in place."""
    if jobs is None or jobs <= 1 or len(args) == 1:
        out = []
        for a in args:
            try:
                out.append(worker(a))
            except Exception as ex:  # noqa: BLE001 - reported to caller
                out.append(ex)
        return out
    out = [None] * len(args)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(worker, a) for a in args]
        for i, fut in enumerate(futures):
            try:
                out[i] = fut.result()
            except Exception as ex:  # noqa: BLE001
                out[i] = ex
    return out
