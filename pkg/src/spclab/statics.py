"""Bound states, eigenvalue tracking, criticality, and the edge-moment checks.

Two solvers cooperate here:

* `solve_bound_state` shoots on the *discrete* staggered system (the exact
  recurrence of the assembled tridiagonal matrix), so its roots coincide with
  dense diagonalization of the same operator to solver tolerance.
* `match_determinant` / `analytic_well_energy` work on the continuum ODE with
  the analytic decaying exterior, so they carry no box and no grid error
  beyond the integrator tolerance.  Criticality searches use this path: near
  the gap edge the wave-function tail outgrows any reasonable box, while the
  matching condition at the well edge stays perfectly conditioned.

Radial reduction of the edge moment (recorded here per the design note):
the upper components of the channel kappa = -1 spinor are (u1/r) Y00 chi, so

    integral (1 + beta) V0(x) Phi(x) d^3x  =  sqrt(4 pi) chi * integral V0(r) u1(r) r dr ,

i.e. the 3-D moment reduces to the scalar moment integral( V0 u1 r ) dr.  For
this channel the moment cannot vanish at criticality: at E = 1 the system
gives d/dr (r u2) = V r u1 exactly, so integral( V0 u1 r ) dr equals the 1/r
tail coefficient of u2 -- and a state whose u2 tail vanishes as well would be
identically zero outside the well.  The E = 1 limit state here is a threshold
resonance (u1 -> const), not a normalizable bound state; the normalized
residual therefore converges to a small model constant rather than to zero.
The residual is still a sharp criticality diagnostic: it shrinks
monotonically as the bound state approaches the edge and is an order of
magnitude larger for strongly subcritical states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .core import (
    DiscreteOperator,
    PotentialModel,
    RadialGrid,
    RadialSpinor,
    assemble_operator,
    free_decaying,
    free_interior_well,
)
from .errors import (
    ModelError,
    MultipleBoundStatesError,
    NoBoundStateError,
    UsageError,
)

def _chan(channel):
    from .core import DEFAULT_CHANNEL

    return DEFAULT_CHANNEL if channel is None else channel


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------


@dataclass
class BoundState:
    energy: float
    wavefunction: RadialSpinor
    sigma: float
    kappa_decay: float  # sqrt(1 - E^2); exterior tail exponent

    @property
    def kappa(self):
        return self.kappa_decay


@dataclass
class BoundStateTrack:
    samples: list  # (sigma, energy) pairs
    sigma_c: float
    dE_dsigma_at_c: float
    kappa_sq: np.ndarray
    identity_residuals: np.ndarray
    diagnostics: dict


@dataclass
class CriticalData:
    """Near-edge bound state standing in for the critical state.

    Phi is the unit-norm state at the coupling where E = 1 - delta_edge;
    sigma_ref is its (small, negative) schedule offset from the extrapolated
    criticality.
    """

    Phi: RadialSpinor
    identity_residual: float
    C0: float
    energy: float
    delta_edge: float
    sigma_ref: float
    lambda_c: float
    lambda_c_uncertainty: float


# ---------------------------------------------------------------------------
# discrete shooting (grid-exact, matches dense diagonalization)
# ---------------------------------------------------------------------------


def _matching_index(op):
    """Interleaved index just inside the potential edge (u1 position near r = R)."""
    i_r = int(np.searchsorted(op.grid.r, op.model.support_radius))
    i_r = max(2, min(op.grid.n - 3, i_r))
    return 2 * i_r - 2


def _matching_value(op, E):
    """Two-sided marching determinant of (T - E) x = 0 at the interface.

    Zero exactly when E is an eigenvalue of the tridiagonal operator.  The
    recurrences are renormalized every few steps; only ratios matter.
    """
    d, e = op.diag, op.offdiag
    m = _matching_index(op)
    dim = op.dim

    # forward sweep: x_{-1} = 0, x_0 = 1
    f_prev, f = 0.0, 1.0
    for i in range(m + 1):
        nxt = ((E - d[i]) * f - (e[i - 1] * f_prev if i > 0 else 0.0)) / e[i]
        f_prev, f = f, nxt
        scale = abs(f) + abs(f_prev)
        if scale > 1e100:
            f_prev /= scale
            f /= scale
    fm, fm1 = f_prev, f  # x_m, x_{m+1} of the forward solution

    # backward sweep: x_dim = 0, x_{dim-1} = 1
    b_next, b = 0.0, 1.0
    for i in range(dim - 1, m, -1):
        prv = ((E - d[i]) * b - (e[i] * b_next if i < dim - 1 else 0.0)) / e[i - 1]
        b_next, b = b, prv
        scale = abs(b) + abs(b_next)
        if scale > 1e100:
            b_next /= scale
            b /= scale
    bm, bm1 = b, b_next  # x_m, x_{m+1} of the backward solution

    return fm * bm1 - fm1 * bm


def _eigenvector_by_inverse_iteration(op, E, iterations=3):
    from scipy.linalg import solve_banded

    dim = op.dim
    rng = np.random.RandomState(12345)
    x = rng.standard_normal(dim)
    ab = np.zeros((3, dim))
    ab[0, 1:] = op.offdiag
    ab[1, :] = op.diag - E + 1e-14
    ab[2, :-1] = op.offdiag
    for _ in range(iterations):
        x = solve_banded((1, 1), ab, x)
        x /= np.linalg.norm(x)
    # fix a deterministic sign: largest-magnitude u1 component positive
    u1part = x[1::2]
    j = int(np.argmax(np.abs(u1part)))
    if u1part[j] < 0:
        x = -x
    return x


def solve_bound_state(op, bracket):
    """Find the single gap eigenvalue of `op` inside `bracket` by shooting.

    Integrates the discrete staggered system from both ends and roots the
    interface determinant (bisection + inverse-quadratic via brentq) to 1e-12
    in E.  Raises NoBoundStateError without a sign change in the bracket and
    MultipleBoundStatesError when the bracket holds more than one root.
    """
    e_lo, e_hi = bracket
    if not (-1.0 <= e_lo < e_hi <= 1.0):
        raise UsageError(f"bracket must lie inside [-1, 1], got {bracket}")

    n_scan = 64
    es = np.linspace(e_lo, e_hi, n_scan)
    vals = np.array([_matching_value(op, E) for E in es])
    sign_changes = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if sign_changes.size == 0:
        raise NoBoundStateError(f"no bound state in bracket {bracket}")
    if sign_changes.size > 1:
        raise MultipleBoundStatesError(
            f"{sign_changes.size} gap eigenvalues in bracket {bracket}; "
            "model assumes at most one"
        )
    i = sign_changes[0]
    E = brentq(lambda x: _matching_value(op, x), es[i], es[i + 1], xtol=1e-12, rtol=1e-15)

    x = _eigenvector_by_inverse_iteration(op, E)
    psi = op.to_spinor(x).normalized()
    kap = math.sqrt(max(0.0, 1.0 - E * E))
    return BoundState(float(E), psi, op.sigma, kap)


def dense_spectrum_oracle(op):
    """All eigenvalues of the assembled operator, ascending (verification path)."""
    return np.sort(op.eigenvalues())


def gap_eigenvalues(op, margin=0.02):
    """Eigenvalues strictly inside the gap, away from the box-discretized edges."""
    ev = op.eigenvalues()
    return ev[(ev > -1.0 + margin) & (ev < 1.0 - margin)]


# ---------------------------------------------------------------------------
# continuum matching (box-free)
# ---------------------------------------------------------------------------


def _regular_interior_ode(model, sigma, E, r_end, rtol=1e-11, channel=None):
    """Integrate the radial system outward from the origin series to r_end.

    Origin behaviour: kappa = -1 has u1 ~ r, u2 = -(E-1-V0) r^2/3;
    kappa = +1 has u2 ~ r, u1 = (E+1-V0) r^2/3.
    """
    from .core import DEFAULT_CHANNEL

    kappa = DEFAULT_CHANNEL if channel is None else channel
    V0 = model.potential_at(sigma, 0.0)
    r0 = 1e-8 * r_end

    def rhs(r, u):
        V = model.potential_at(sigma, r)
        return [
            -kappa * u[0] / r + (E + 1.0 - V) * u[1],
            kappa * u[1] / r - (E - 1.0 - V) * u[0],
        ]

    if kappa == -1:
        u0 = [r0, -(E - 1.0 - V0) * r0 * r0 / 3.0]
    else:
        u0 = [(E + 1.0 - V0) * r0 * r0 / 3.0, r0]
    sol = solve_ivp(
        rhs, (r0, r_end), u0, method="DOP853", rtol=rtol, atol=1e-300, dense_output=True
    )
    if not sol.success:  # pragma: no cover
        raise ModelError(f"interior integration failed: {sol.message}")
    return sol


def match_determinant(model, sigma, E, interior="auto", channel=None):
    """Wronskian of interior regular and exterior decaying solutions at r = R.

    Zero exactly at the bound-state energies of the infinite-domain problem.
    interior='well' uses the closed piecewise-constant form (the analytic
    oracle); 'ode' integrates the system; 'auto' picks 'well' for the well.
    """
    from .core import DEFAULT_CHANNEL

    kappa = DEFAULT_CHANNEL if channel is None else channel
    R = model.support_radius
    if interior == "auto":
        interior = "well" if model.shape == "well" else "ode"
    if interior == "well":
        V0 = model.potential_at(sigma, 0.0)
        u1i, u2i = free_interior_well(E, V0, R, channel=kappa)
    else:
        sol = _regular_interior_ode(model, sigma, E, R, channel=kappa)
        u1i, u2i = sol.y[:, -1]
    u1e, u2e = free_decaying(E, np.array([R]), channel=kappa)
    return float(u1i * u2e[0] - u2i * u1e[0])


def analytic_well_energy(model, sigma, bracket=(-0.999, 0.999), channel=None):
    """Bound-state energy of the piecewise-constant well from the closed-form matcher.

    Independent of any grid; used as the acceptance oracle.
    """
    if model.shape != "well":
        raise UsageError("analytic matching exists for the well shape only")
    e_lo, e_hi = bracket
    es = np.linspace(e_lo, e_hi, 800)
    vals = np.array(
        [match_determinant(model, sigma, E, interior="well", channel=channel) for E in es]
    )
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if idx.size == 0:
        raise NoBoundStateError(f"no analytic bound state in {bracket}")
    if idx.size > 1:
        raise MultipleBoundStatesError(f"{idx.size} analytic levels in {bracket}")
    i = idx[0]
    return brentq(
        lambda x: match_determinant(model, sigma, x, interior="well", channel=channel),
        es[i],
        es[i + 1],
        xtol=1e-13,
        rtol=8.9e-16,
    )


def refined_bound_energy(model, grid, sigma, bracket, levels=2, channel=None):
    """Richardson-extrapolated discrete-shooting energy (h^2 error eliminated)."""
    from .core import DEFAULT_CHANNEL

    kappa = DEFAULT_CHANNEL if channel is None else channel
    energies = []
    g = grid
    for _ in range(levels):
        op = assemble_operator(g, model, sigma, channel=kappa)
        energies.append(solve_bound_state(op, bracket).energy)
        g = g.refine()
    e = list(energies)
    # one extrapolation stage per refinement: errors h^2, h^2/4, ...
    order = 2.0
    while len(e) > 1:
        e = [(2**order * e[i + 1] - e[i]) / (2**order - 1) for i in range(len(e) - 1)]
    return e[0], energies


# ---------------------------------------------------------------------------
# criticality
# ---------------------------------------------------------------------------


def _lambda_at_edge_energy(model, delta_edge, lambda_bracket, channel=None):
    """Coupling at which the infinite-domain bound state sits at E = 1 - delta_edge."""
    E = 1.0 - delta_edge
    lo, hi = lambda_bracket

    def g(lam):
        return match_determinant(model.with_lambda_c(lam), 0.0, E, channel=channel)

    lams = np.linspace(lo, hi, 400)
    vals = np.array([g(lam) for lam in lams])
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if idx.size == 0:
        raise ModelError(
            f"no diving bound state at E={E} for lambda in [{lo}, {hi}]"
        )
    i = idx[0]  # first (lowest-coupling) crossing
    return brentq(g, lams[i], lams[i + 1], xtol=1e-13, rtol=8.9e-16)


def find_critical_coupling(
    model,
    grid=None,
    delta_edges=(1e-3, 5e-4, 2.5e-4),
    lambda_bracket=(2.05, 9.0),
    channel=None,
):
    """Extrapolate the critical coupling lambda_c from near-edge solves.

    Solves lambda(delta_edge) on the infinite domain (box-free matching) for
    each requested edge distance and removes the leading linear-in-delta term
    by Richardson extrapolation; the spread of the two extrapolation stages is
    returned as the uncertainty.  `grid` is accepted for interface symmetry
    but plays no role in the root search.
    """
    lams = [
        _lambda_at_edge_energy(model, d, lambda_bracket, channel=channel)
        for d in delta_edges
    ]
    d = np.asarray(delta_edges, dtype=float)
    if not (d[0] > d[1] > d[2]):
        raise UsageError("delta_edges must be strictly decreasing")
    # The natural expansion variable is the tail exponent kappa = sqrt(2 delta):
    # lambda(kappa) = lambda_c + a kappa + b kappa^2 + O(kappa^3).  (The linear
    # kappa term is the s-wave threshold signature of this channel.)  Three
    # edge distances determine the quadratic exactly; extrapolate to kappa = 0.
    kap = np.sqrt(2.0 * d)
    V = np.vander(kap, 3, increasing=True)  # columns 1, kappa, kappa^2
    coef = np.linalg.solve(V, np.asarray(lams))
    lam_c = coef[0]
    # uncertainty: compare with the linear-in-kappa extrapolation of the two
    # smallest edge distances
    lam_lin = (kap[1] * lams[2] - kap[2] * lams[1]) / (kap[1] - kap[2])
    uncertainty = abs(lam_c - lam_lin)
    return float(lam_c), float(uncertainty), list(zip(d.tolist(), lams))


def critical_state_on_grid(model, grid, delta_edge=2.5e-4, lambda_bracket=(2.05, 9.0),
                           channel=None):
    """Unit-norm near-edge bound state of the *discrete* operator.

    Tunes the coupling so that the discrete box eigenvalue sits exactly at
    E = 1 - delta_edge (the near-edge state is far too sensitive to reuse the
    infinite-domain coupling at finite h).  The returned state is an exact
    eigenvector of the assembled matrix, which keeps stationary-propagation
    controls clean.  Requires the box to hold the tail:
    sqrt(2 delta_edge) * r_max >= 5.
    """
    kap = math.sqrt(2.0 * delta_edge)
    if kap * grid.r_max < 5.0:
        raise UsageError(
            f"box too small for delta_edge={delta_edge}: need r_max >= {5.0 / kap:.0f}"
        )
    e_target = 1.0 - delta_edge
    lam0 = _lambda_at_edge_energy(model, delta_edge, lambda_bracket, channel=channel)
    bracket = (max(0.5, 1.0 - 400.0 * delta_edge), 1.0 - 1e-9)

    def energy_at(lam):
        op = assemble_operator(grid, model.with_lambda_c(lam), 0.0, channel=_chan(channel))
        try:
            return solve_bound_state(op, bracket).energy
        except NoBoundStateError:
            # state has crossed into the continuum: effectively above target
            return 1.0 + delta_edge

    # bracket the discrete root around the infinite-domain coupling
    width = 0.02
    lo, hi = lam0 - width, lam0 + width
    flo, fhi = energy_at(lo) - e_target, energy_at(hi) - e_target
    tries = 0
    while flo * fhi > 0 and tries < 6:
        width *= 2.0
        lo, hi = lam0 - width, lam0 + width
        flo, fhi = energy_at(lo) - e_target, energy_at(hi) - e_target
        tries += 1
    if flo * fhi > 0:
        raise ModelError("could not bracket the near-edge coupling on this grid")
    lam = brentq(lambda x: energy_at(x) - e_target, lo, hi, xtol=1e-11, rtol=4e-14)
    op = assemble_operator(grid, model.with_lambda_c(lam), 0.0, channel=_chan(channel))
    bs = solve_bound_state(op, bracket)
    return bs, lam


def sampled_edge_state(model, grid, delta_edge=2.5e-4, lambda_bracket=(2.05, 9.0),
                       channel=None):
    """Continuum near-edge bound state sampled onto the staggered grid.

    Interior from the box-free ODE shooting at the coupling where the
    infinite-domain energy is 1 - delta_edge, exterior from the analytic
    decaying solution, matched at the well edge and unit-normalized on the
    box.  This is the right object for overlap quadratures: it carries no
    operator-discretization shift of the criticality, only integrator
    tolerance.  The box must hold the tail: sqrt(2 delta_edge) * r_max >= 5.
    """
    kap_tail = math.sqrt(2.0 * delta_edge)
    if kap_tail * grid.r_max < 5.0:
        raise UsageError(
            f"box too small for delta_edge={delta_edge}: need r_max >= {5.0 / kap_tail:.0f}"
        )
    E = 1.0 - delta_edge
    kappa = _chan(channel)
    lam = _lambda_at_edge_energy(model, delta_edge, lambda_bracket, channel=kappa)
    m = model.with_lambda_c(lam)
    R = m.support_radius
    sol = _regular_interior_ode(m, 0.0, E, R, channel=kappa)

    r, rho = grid.r, grid.r_half
    u1 = np.empty(grid.n)
    u2 = np.empty(grid.n)
    ins_r = r <= R
    ins_rho = rho <= R
    u1[ins_r] = sol.sol(r[ins_r])[0]
    u2[ins_rho] = sol.sol(rho[ins_rho])[1]
    # scale the analytic exterior to the interior value at the matching edge
    u1R, u2R = sol.y[:, -1]
    e1R, e2R = free_decaying(E, np.array([R]), channel=kappa)
    scale = u1R / e1R[0]
    e1r, e2r = free_decaying(E, r[~ins_r], channel=kappa)
    u1[~ins_r] = scale * e1r
    e1h, e2h = free_decaying(E, rho[~ins_rho], channel=kappa)
    u2[~ins_rho] = scale * e2h
    psi = RadialSpinor(grid, u1, u2, channel=kappa).normalized()
    return BoundState(E, psi, 0.0, kap_tail), lam


def grid_critical_coupling(model, grid, delta_edges=(1e-3, 5e-4, 2.5e-4),
                           lambda_bracket=(2.05, 9.0), channel=None):
    """Effective critical coupling of the *assembled* operator family on `grid`.

    Same kappa-quadratic extrapolation as find_critical_coupling but for the
    couplings at which the discrete box eigenvalue sits at 1 - delta.  The
    operator discretization shifts criticality by O(h^2); sigma offsets of
    evolution runs on a grid are measured from this value so that "distance
    to criticality" means the same thing as in continuum quantities.
    """
    lams = [
        critical_state_on_grid(model, grid, d, lambda_bracket, channel=channel)[1]
        for d in delta_edges
    ]
    d = np.asarray(delta_edges, dtype=float)
    kap = np.sqrt(2.0 * d)
    V = np.vander(kap, 3, increasing=True)
    coef = np.linalg.solve(V, np.asarray(lams))
    return float(coef[0])


def compute_critical_data(
    model,
    grid,
    delta_edge=2.5e-4,
    lambda_bracket=(2.05, 9.0),
    delta_edges=(1e-3, 5e-4, 2.5e-4),
    channel=None,
):
    """CriticalData: extrapolated lambda_c plus the continuum near-edge state."""
    lam_c, lam_unc, _ = find_critical_coupling(
        model, grid, delta_edges=delta_edges, lambda_bracket=lambda_bracket,
        channel=channel,
    )
    bs, lam_ref = sampled_edge_state(model, grid, delta_edge, lambda_bracket,
                                     channel=channel)
    model_c = model.with_lambda_c(lam_c)
    sigma_ref = (lam_ref - lam_c) / model.lambda_slope
    resid = identity_residual_of_state(bs.wavefunction, model_c)
    c0 = c0_from_state(bs.wavefunction, model_c)
    return CriticalData(
        Phi=bs.wavefunction,
        identity_residual=resid,
        C0=c0,
        energy=bs.energy,
        delta_edge=delta_edge,
        sigma_ref=sigma_ref,
        lambda_c=lam_c,
        lambda_c_uncertainty=lam_unc,
    )


# ---------------------------------------------------------------------------
# edge moment (crucial identity) and C0
# ---------------------------------------------------------------------------


def _segment_moment_u1(spinor, model, weight="r"):
    """integral over the well of V0(r) u1(r) w(r) dr via endpoint-aware trapezoid.

    weight is 'r' or '1/r'.  u1 samples sit on integer points; the well edge R
    must coincide with a grid point (models used in tests keep R on-grid).
    Returns (signed moment, absolute moment).  The integrand vanishes at the
    origin for either weight (u1 ~ r or r^2), so the trapezoid rule on [0, R]
    reduces to full interior weights plus half weight at R.
    """
    g = spinor.grid
    h = g.spacing
    r = g.r
    m = int(round(model.support_radius / h))
    if abs(m * h - model.support_radius) > 1e-9 * max(1.0, model.support_radius):
        raise UsageError("well edge must coincide with a grid point for the moment quadrature")
    v0 = model.sign * model.coupling(0.0)
    u1 = np.real(spinor.u1[:m])  # r_1 .. r_m = R
    rr = r[:m] if weight == "r" else 1.0 / r[:m]
    f = v0 * u1 * rr
    signed = h * (np.sum(f[:-1]) + 0.5 * f[-1])
    fa = np.abs(f)
    absolute = h * (np.sum(fa[:-1]) + 0.5 * fa[-1])
    return signed, absolute


def _u2_origin_slope(spinor):
    """u2'(0) from the innermost half-point (u2 ~ c r for kappa = +1)."""
    rho1 = spinor.grid.r_half[0]
    return float(np.real(spinor.u2[0]) / rho1)


def edge_moment_residual(spinor, model):
    """Normalized vanishing moment of the upper-edge identity for this channel.

    The 3-D statement is that the critical state has no non-decaying tail.
    kappa = -1: the s-wave-coupled moment integral(V0 u1 r dr) must vanish (it
    equals the 1/r tail coefficient of u2 at E = 1).
    kappa = +1: the upper component moment vanishes by angular integration;
    the contentful scalar shadow follows from d/dr(u2/r) = V u1 / r at E = 1:
    integral(V0 u1 / r dr) + u2'(0) equals the growing-solution coefficient,
    which must vanish for square integrability.  Both forms are normalized by
    the corresponding absolute integrals.
    """
    if spinor.channel == -1:
        signed, absolute = _segment_moment_u1(spinor, model, weight="r")
        if absolute == 0:
            raise UsageError("degenerate input: V0 * u1 vanishes identically")
        return float(abs(signed) / absolute)
    signed, absolute = _segment_moment_u1(spinor, model, weight="1/r")
    slope = _u2_origin_slope(spinor)
    denom = absolute + abs(slope)
    if denom == 0:
        raise UsageError("degenerate input: V0 * u1 and u2 vanish identically")
    return float(abs(signed + slope) / denom)


def identity_residual_of_state(spinor, model):
    """Alias kept for symmetry with the op name."""
    return edge_moment_residual(spinor, model)


def critical_identity_residual(critical, model):
    """Residual of the 3-D edge identity, radial form, for the critical state."""
    return edge_moment_residual(critical.Phi, model)


def c0_from_state(spinor, model):
    """C0 = lambda_slope * integral shape(r) (|u1|^2 + |u2|^2) dr for a unit state.

    Derivative at sigma = 0 of || sqrt(V_sigma - V_0) Phi ||^2 under the
    linear coupling schedule; positive for every valid model.  The shape is
    sampled cell-averaged, consistent with the assembled operator (this makes
    the edge cell carry half weight, i.e. the trapezoid rule at the jump).
    """
    g = spinor.grid
    h = g.spacing
    f1 = model.cell_averaged_potential(0.0, g.r, h) / (model.sign * model.coupling(0.0))
    f2 = model.cell_averaged_potential(0.0, g.r_half, h) / (model.sign * model.coupling(0.0))
    val = np.sum(f1 * np.abs(spinor.u1) ** 2) + np.sum(f2 * np.abs(spinor.u2) ** 2)
    c0 = model.lambda_slope * val * h
    if c0 <= 0:
        raise ModelError("C0 must be positive; check sign/slope configuration")
    return float(c0)


def c0_from_derivative(critical, model):
    """Spec name for c0_from_state applied to the critical reference state."""
    return c0_from_state(critical.Phi, model)


def c0_finite_difference(spinor, model, sigma=1e-3):
    """|| sqrt(V_sigma - V_0) Phi ||^2 / sigma, the finite-difference oracle for C0.

    Uses the same cell-averaged sampling of the potential difference as the
    assembled operator.
    """
    g = spinor.grid
    h = g.spacing
    dv1 = np.abs(
        model.cell_averaged_potential(sigma, g.r, h)
        - model.cell_averaged_potential(0.0, g.r, h)
    )
    dv2 = np.abs(
        model.cell_averaged_potential(sigma, g.r_half, h)
        - model.cell_averaged_potential(0.0, g.r_half, h)
    )
    val = np.sum(dv1 * np.abs(spinor.u1) ** 2) * h
    val += np.sum(dv2 * np.abs(spinor.u2) ** 2) * h
    return float(val / sigma)


# ---------------------------------------------------------------------------
# eigenvalue track
# ---------------------------------------------------------------------------


def track_eigenvalue(model, grid, sigma_list, channel=None):
    """E(sigma) along the subcritical approach, with kappa^2 and edge residuals.

    sigma_list must be nonempty and subcritical (sigma < 0).  Returns a
    BoundStateTrack whose diagnostics hold the kappa^2-vs-|sigma| straight-line
    fit (slope approximates C0/|C2|) and dE/dsigma at the sample closest to
    criticality.
    """
    if len(sigma_list) == 0:
        raise UsageError("sigma_list must not be empty")
    sigmas = np.sort(np.asarray(sigma_list, dtype=float))
    if np.any(sigmas >= 0):
        raise UsageError("track runs on the subcritical side (sigma < 0)")

    samples = []
    kap2 = []
    resids = []
    partial = False
    for s in sigmas:
        op = assemble_operator(grid, model, s, channel=_chan(channel))
        try:
            bs = solve_bound_state(op, (-0.999, 1.0 - 1e-9))
        except NoBoundStateError:
            partial = True
            break
        samples.append((float(s), bs.energy))
        kap2.append(1.0 - bs.energy**2)
        resids.append(edge_moment_residual(bs.wavefunction, model))

    if not samples:
        raise NoBoundStateError("bound state lost at every requested sigma")

    sig = np.array([s for s, _ in samples])
    en = np.array([e for _, e in samples])
    kap2 = np.array(kap2)

    # straight-line fit kappa^2 = a |sigma| + b
    x = np.abs(sig)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res_, *_ = np.linalg.lstsq(A, kap2, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((kap2 - pred) ** 2))
    ss_tot = float(np.sum((kap2 - kap2.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0

    if len(samples) >= 2:
        dE = (en[-1] - en[-2]) / (sig[-1] - sig[-2])
    else:
        dE = float("nan")

    return BoundStateTrack(
        samples=samples,
        sigma_c=0.0,
        dE_dsigma_at_c=float(dE),
        kappa_sq=kap2,
        identity_residuals=np.array(resids),
        diagnostics={
            "kappa_sq_slope": float(coef[0]),
            "kappa_sq_intercept": float(coef[1]),
            "kappa_sq_r2": float(r2),
            "partial": partial,
        },
    )
