"""Radial Dirac machinery: units, potential family, grid, spinors, operator assembly.

Units
-----
Energies are measured in units of mc^2 and lengths in hbar/(mc), so the free
continuum edges sit exactly at E = +-1.  Microscopic time is tau = (mc^2/hbar) t
and the macroscopic (slow) time is s = epsilon * tau, where epsilon is the
adiabatic parameter of the external field.

Radial reduction
----------------
The potential is a real multiple of the identity on spinor space with compact
support, taken spherically symmetric here.  Writing a j = 1/2 four-spinor as
psi = (1/r) (u1(r) Omega_{kappa}, i u2(r) Omega_{-kappa}), the eigenvalue
problem E psi = (D0 + V) psi becomes the first-order radial system

    u1' = -(kappa/r) u1 + (E + 1 - V(r)) u2
    u2' = +(kappa/r) u2 - (E - 1 - V(r)) u1

with the scalar product integral( |u1|^2 + |u2|^2 ) dr.  Both j = 1/2
channels are supported:

* kappa = +1 (upper component p-wave, lower s-wave; origin behaviour
  u1 ~ r^2, u2 ~ r).  This is the baseline channel: the state that rises
  from the lower continuum meets the upper gap edge E = +1 with a
  square-integrable threshold wave function (u1 ~ 1/r outside the support),
  which is the transversal-crossing regime all the near-critical resonance
  and decay laws assume.
* kappa = -1 (upper s-wave, u1 ~ r, u2 ~ r^2).  At the upper edge this
  channel has a zero-energy resonance instead of a bound state (u1 -> const);
  it is kept for the charge-conjugation mirror: kappa -> -kappa together
  with V -> -V and E -> -E maps the two channels onto each other, which is
  how the positron-picture symmetry check is run.

Discretization
--------------
Naive one-grid central differences of a first-order system double the fermion
spectrum; we avoid that with staggered components: u1 lives on integer points
r_i = i h (i = 1..n-1; u1 = 0 at r = 0 and at the hard wall r_max), u2 lives
on half-integer points rho_j = (j - 1/2) h (j = 1..n).  The derivative of one
component is then a centered two-point difference at the points of the other,
and the kappa/r coupling is averaged over the two neighbours, which keeps the
scheme second order and makes the assembled operator exactly symmetric.  In
the position-interleaved ordering (u2_1, u1_1, u2_2, u1_2, ..., u2_n) the
matrix is symmetric tridiagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ConfigurationError, UsageError

GAP_EDGES = (-1.0, 1.0)

# baseline angular channel: kappa = +1 carries the diving state into a
# square-integrable upper-edge threshold (see module docstring)
DEFAULT_CHANNEL = +1


class Units:
    """Documentation-bearing constants; no numerical content beyond the gap edges.

    energy   : mc^2            (continuum edges at E = +-1)
    length   : hbar / (m c)
    time     : tau = (mc^2/hbar) t  (microscopic), s = epsilon * tau (macroscopic)
    """

    gap_edges = GAP_EDGES


# ---------------------------------------------------------------------------
# potential family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PotentialModel:
    """Spherically symmetric scalar potential family  V_sigma(r) = sign * lam(sigma) * shape(r).

    The baseline shape is the piecewise-constant well: shape(r) = 1 for r < R,
    0 for r >= R.  The coupling follows the linear near-critical schedule
    lam(sigma) = lambda_c + sigma * lambda_slope, so sigma = 0 is criticality
    (bound state at the upper gap edge), sigma < 0 subcritical, sigma > 0
    overcritical.

    sign = +1 pushes levels up: the bound state emerges from the lower
    continuum and dives into the upper one, matching the pair-creation
    scenario; sign = -1 is the charge mirror.
    """

    R: float = 1.0
    lambda_c: float = 0.0
    lambda_slope: float = 1.0
    sign: int = +1
    shape: str = "well"

    def __post_init__(self):
        if self.R <= 0:
            raise ConfigurationError(f"well radius must be positive, got {self.R}")
        if self.lambda_slope <= 0:
            raise ConfigurationError("lambda_slope must be positive (|V| grows with sigma)")
        if self.sign not in (+1, -1):
            raise ConfigurationError(f"sign must be +-1, got {self.sign}")
        if self.shape != "well":
            raise ConfigurationError(f"unknown shape {self.shape!r}; baseline is 'well'")

    def coupling(self, sigma):
        """lam(sigma) = lambda_c + sigma * lambda_slope."""
        return self.lambda_c + sigma * self.lambda_slope

    def shape_at(self, r):
        """Dimensionless radial profile, 1 inside the well and 0 outside."""
        return np.where(np.asarray(r, dtype=float) < self.R, 1.0, 0.0)

    def potential_at(self, sigma, r):
        """V_sigma(r); scalar in, scalar out (vectorizes over r)."""
        if np.any(np.asarray(r) < 0):
            raise UsageError("r must be nonnegative")
        out = self.sign * self.coupling(sigma) * self.shape_at(r)
        return out if np.ndim(r) else float(out)

    def cell_averaged_potential(self, sigma, r, h):
        """V_sigma averaged over [r - h/2, r + h/2].

        Grid sampling of the discontinuous well is first-order accurate at the
        edge; the cell average restores second order for quadratic forms.
        """
        r = np.asarray(r, dtype=float)
        frac = np.clip((self.R - (r - 0.5 * h)) / h, 0.0, 1.0)
        return self.sign * self.coupling(sigma) * frac

    @property
    def support_radius(self):
        return self.R

    def with_lambda_c(self, lambda_c):
        return replace(self, lambda_c=float(lambda_c))


def potential_at(model, sigma, r):
    """Module-level alias for PotentialModel.potential_at."""
    return model.potential_at(sigma, r)


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial grid on (0, r_max] with staggered companion points.

    r      : integer points i*h, i = 1..n      (u1 samples; r[-1] = r_max)
    r_half : half points (i - 1/2)*h, i = 1..n (u2 samples)

    The origin is not a grid point; regularity there is a boundary condition.
    """

    r_max: float
    n: int
    spacing: float = field(init=False)

    def __post_init__(self):
        if self.r_max <= 0:
            raise ConfigurationError(f"r_max must be positive, got {self.r_max}")
        if self.n < 16:
            raise ConfigurationError(f"need at least 16 grid points, got {self.n}")
        object.__setattr__(self, "spacing", self.r_max / self.n)

    @property
    def r(self):
        return self.spacing * np.arange(1, self.n + 1)

    @property
    def r_half(self):
        return self.spacing * (np.arange(1, self.n + 1) - 0.5)

    def refine(self, factor=2):
        return RadialGrid(self.r_max, self.n * factor)

    def widen(self, factor=2):
        """Double the box at fixed spacing (box-independence checks)."""
        return RadialGrid(self.r_max * factor, self.n * factor)


def build_grid(r_max, n):
    """Spec entry point; see RadialGrid."""
    if not float(r_max) > 0:
        raise ConfigurationError(f"r_max must be positive, got {r_max}")
    if int(n) < 16:
        raise ConfigurationError(f"n too small: {n} < 16")
    return RadialGrid(float(r_max), int(n))


# ---------------------------------------------------------------------------
# spinors
# ---------------------------------------------------------------------------


@dataclass
class RadialSpinor:
    """Two-component radial wave function on a staggered grid.

    u1 is sampled on grid.r (integer points), u2 on grid.r_half.  norm_kind
    records the normalization convention: 'unit' (sum(|u|^2) h = 1),
    'delta-in-k' for continuum waves, or 'unnormalized'.
    """

    grid: RadialGrid
    u1: np.ndarray
    u2: np.ndarray
    channel: int = DEFAULT_CHANNEL
    norm_kind: str = "unnormalized"

    def __post_init__(self):
        self.u1 = np.asarray(self.u1)
        self.u2 = np.asarray(self.u2)
        if self.u1.shape != (self.grid.n,) or self.u2.shape != (self.grid.n,):
            raise UsageError("component arrays must match the grid size")

    def norm(self):
        h = self.grid.spacing
        return float(np.sqrt((np.sum(np.abs(self.u1) ** 2) + np.sum(np.abs(self.u2) ** 2)) * h))

    def normalized(self):
        nrm = self.norm()
        if nrm == 0:
            raise UsageError("cannot normalize the zero spinor")
        return RadialSpinor(self.grid, self.u1 / nrm, self.u2 / nrm, self.channel, "unit")

    def density(self):
        """|u1|^2 + |u2|^2 with u2 interpolated onto integer points (diagnostics)."""
        u2i = 0.5 * (self.u2 + np.roll(self.u2, -1))
        u2i[-1] = self.u2[-1]
        return np.abs(self.u1) ** 2 + np.abs(u2i) ** 2


def inner_product(a, b):
    """<a, b> = sum( conj(a.u1) b.u1 + conj(a.u2) b.u2 ) * spacing.

    Both spinors must live on the same grid and channel.  This is the
    second-order quadrature of integral( a^bar b ) dr natural to the staggered
    layout.
    """
    if a.grid != b.grid:
        raise UsageError("inner_product requires a common grid")
    if a.channel != b.channel:
        raise UsageError("inner_product requires a common channel")
    h = a.grid.spacing
    s = np.sum(np.conj(a.u1) * b.u1) + np.sum(np.conj(a.u2) * b.u2)
    return complex(s * h)


# ---------------------------------------------------------------------------
# discrete operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteOperator:
    """Symmetric tridiagonal representation of D_sigma on the staggered grid.

    State vector ordered by position.  For kappa = +1 (dimension 2n-1):
        x = (u2_1, u1_1, u2_2, u1_2, ..., u2_{n-1}, u1_{n-1}, u2_n)
    u1_n is eliminated by the hard wall u1(r_max) = 0, u1_0 = 0 by origin
    regularity.  For kappa = -1 the innermost half-point component u2_1 is
    dropped as well (dimension 2n-2): there the staggered coupling
    (1/h + kappa/(2 rho_1)) vanishes identically (d/dr + kappa/r annihilates
    the regular u1 ~ r behaviour at this order), so u2_1 would otherwise sit
    in the matrix as an exactly decoupled spurious mode; regularity pins it
    at O(h^2).
    """

    grid: RadialGrid
    model: PotentialModel
    sigma: float
    diag: np.ndarray
    offdiag: np.ndarray
    channel: int = DEFAULT_CHANNEL

    @property
    def dim(self):
        return self.diag.size

    @property
    def _keeps_first_half_point(self):
        return self.channel != -1

    def dense(self):
        m = np.diag(self.diag)
        idx = np.arange(self.dim - 1)
        m[idx, idx + 1] = self.offdiag
        m[idx + 1, idx] = self.offdiag
        return m

    def eigenvalues(self):
        """All eigenvalues, ascending (dense oracle path)."""
        return eigh_tridiagonal(self.diag, self.offdiag, eigvals_only=True)

    def eigensystem(self):
        return eigh_tridiagonal(self.diag, self.offdiag)

    def apply(self, x):
        y = self.diag * x
        y[:-1] += self.offdiag * x[1:]
        y[1:] += self.offdiag * x[:-1]
        return y

    def spectral_radius_bound(self):
        """Gershgorin bound; cheap and safe for step-size control."""
        rad = np.abs(self.diag).copy()
        rad[:-1] += np.abs(self.offdiag)
        rad[1:] += np.abs(self.offdiag)
        return float(rad.max())

    def to_spinor(self, x, norm_kind="unnormalized"):
        """Unpack an interleaved state vector into a RadialSpinor."""
        n = self.grid.n
        u1 = np.zeros(n, dtype=x.dtype)
        u2 = np.zeros(n, dtype=x.dtype)
        if self._keeps_first_half_point:
            u2[:] = x[0::2]
            u1[: n - 1] = x[1::2]
        else:
            u1[: n - 1] = x[0::2]
            u2[1:] = x[1::2]
        return RadialSpinor(self.grid, u1, u2, self.channel, norm_kind)

    def from_spinor(self, spinor):
        if spinor.grid != self.grid:
            raise UsageError("spinor grid does not match operator grid")
        x = np.empty(self.dim, dtype=np.result_type(spinor.u1, spinor.u2))
        if self._keeps_first_half_point:
            x[0::2] = spinor.u2
            x[1::2] = spinor.u1[: self.grid.n - 1]
        else:
            x[0::2] = spinor.u1[: self.grid.n - 1]
            x[1::2] = spinor.u2[1:]
        return x


def assemble_operator(grid, model, sigma, channel=DEFAULT_CHANNEL):
    """Assemble the staggered radial Dirac operator D_sigma in channel kappa.

    Diagonal: +-1 mass term plus the (cell-averaged) potential at the point of
    each component.  Off-diagonal: the staggered derivative +-1/h combined
    with the averaged kappa/r coupling, symmetric by construction.
    """
    if channel not in (+1, -1):
        raise ConfigurationError(f"channel must be +-1, got {channel}")
    kappa = channel
    n = grid.n
    h = grid.spacing
    r = grid.r
    rho = grid.r_half

    # full interleaving (u2_1, u1_1, u2_2, ..., u2_n)
    full = 2 * n - 1
    diag = np.empty(full)
    diag[0::2] = -1.0 + model.cell_averaged_potential(sigma, rho, h)
    diag[1::2] = +1.0 + model.cell_averaged_potential(sigma, r[: n - 1], h)

    # off-diagonal couples u2_j with u1_{j-1} and u1_j:
    #   (u2_j, u1_j)  : +1/h + kappa/(2 rho_j)
    #   (u1_j, u2_{j+1}): -1/h + kappa/(2 rho_{j+1})
    offdiag = np.empty(full - 1)
    offdiag[0::2] = 1.0 / h + kappa / (2.0 * rho[: n - 1])
    offdiag[1::2] = -1.0 / h + kappa / (2.0 * rho[1:n])
    if kappa == -1:
        # drop the exactly decoupled u2_1 mode (see DiscreteOperator)
        diag, offdiag = diag[1:], offdiag[1:]
    return DiscreteOperator(grid, model, float(sigma), diag, offdiag, kappa)


# ---------------------------------------------------------------------------
# exact free-space radial solutions (matching / oracles)
# ---------------------------------------------------------------------------


def free_decaying(E, r, channel=DEFAULT_CHANNEL):
    """Decaying exterior solution in the gap, kap = sqrt(1 - E^2).

    kappa = +1: u2 = exp(-kap r),  u1 = exp(-kap r) (kap + 1/r) / (E - 1)
    kappa = -1: u1 = exp(-kap r),  u2 = -exp(-kap r) (kap + 1/r) / (E + 1)

    (The component without the 1/r dressing solves u'' = kap^2 u exactly in
    its channel.)  Overall scale is arbitrary.
    """
    if not -1.0 < E < 1.0:
        raise UsageError(f"free_decaying needs E in the open gap, got {E}")
    kap = np.sqrt(1.0 - E * E)
    r = np.asarray(r, dtype=float)
    tail = np.exp(-kap * r)
    if channel == -1:
        u1 = tail
        u2 = -tail * (kap + 1.0 / r) / (E + 1.0)
    else:
        u2 = tail
        u1 = tail * (kap + 1.0 / r) / (E - 1.0)
    return u1, u2


def _rj0(z, r):
    """r * j0(z r) = sin(z r)/z, entire in z^2 (z may be imaginary)."""
    zr = z * r
    small = np.abs(zr) < 1e-8
    out = np.where(small, r * (1 - zr * zr / 6.0), np.sin(zr) / np.where(z == 0, 1, z))
    return out


def _rj1_scaled(z, r):
    """(sin(zr)/(zr) - cos(zr)), entire in z^2; equals z*r*j1(z*r)."""
    zr = z * r
    small = np.abs(zr) < 1e-6
    return np.where(small, zr * zr / 3.0, np.sin(zr) / np.where(zr == 0, 1, zr) - np.cos(zr))


def _r2_j1_over_x(z, r):
    """r^2 * j1(z r)/(z r) = (sin(zr)/(zr) - cos(zr)) / z^2, entire in z^2."""
    z2 = z * z
    return np.where(
        np.abs(z2) < 1e-12, r * r / 3.0, _rj1_scaled(z, r) / np.where(z2 == 0, 1, z2)
    )


def free_interior_well(E, V0, r, channel=DEFAULT_CHANNEL):
    """Regular solution for constant potential V0 at energy E.

    With W = E - V0 and p^2 = W^2 - 1 (p imaginary handled through forms
    entire in p^2):

    kappa = +1: u1 = r^2 j1(pr)/(pr),          u2 = r j0(pr) / (W + 1)
    kappa = -1: u1 = r j0(pr),   u2 = -(sin(pr)/(pr) - cos(pr)) / (W + 1)
    """
    W = E - V0
    p2 = W * W - 1.0
    z = np.sqrt(complex(p2))
    r = np.asarray(r, dtype=float)
    if channel == -1:
        u1 = _rj0(z, r)
        u2 = -_rj1_scaled(z, r) / (W + 1.0)
    else:
        u1 = _r2_j1_over_x(z, r)
        u2 = _rj0(z, r) / (W + 1.0)
    return np.real(u1), np.real(u2)


def free_oscillatory_basis(E, r, channel=DEFAULT_CHANNEL):
    """Free-space (j, y)-type solution pair at |E| > 1, k = sqrt(E^2 - 1).

    Both pairs are scaled to unit asymptotic u1 envelope:

    kappa = +1 (upper component l = 1):
        j-type: u1 = k r j1(kr) = sin(kr)/(kr) - cos(kr),  u2 = k sin(kr)/(E+1)
        y-type: u1 = k r y1(kr) = -cos(kr)/(kr) - sin(kr), u2 = -k cos(kr)/(E+1)
    kappa = -1 (upper component l = 0):
        j-type: u1 = sin(kr),  u2 = -k (sin(kr)/(kr) - cos(kr))/(E+1)
        y-type: u1 = -cos(kr), u2 = -k (-cos(kr)/(kr) - sin(kr))/(E+1)

    For the combination alpha*j + beta*y the asymptote is
    u1 -> sqrt(alpha^2+beta^2) sin(kr - l pi/2 + delta) with
    delta = atan2(-beta, alpha) in both channels.
    """
    if abs(E) <= 1.0:
        raise UsageError(f"oscillatory basis needs |E| > 1, got {E}")
    k = np.sqrt(E * E - 1.0)
    r = np.asarray(r, dtype=float)
    kr = k * r
    if channel == -1:
        u1j = np.sin(kr)
        u2j = -(np.sin(kr) / kr - np.cos(kr)) * k / (E + 1.0)
        u1y = -np.cos(kr)
        u2y = -(-np.cos(kr) / kr - np.sin(kr)) * k / (E + 1.0)
    else:
        u1j = np.sin(kr) / kr - np.cos(kr)
        u2j = k * np.sin(kr) / (E + 1.0)
        u1y = -np.cos(kr) / kr - np.sin(kr)
        u2y = -k * np.cos(kr) / (E + 1.0)
    return (u1j, u2j), (u1y, u2y)


def delta_in_k_amplitude(E):
    """Asymptotic u1 envelope sqrt((E+1)/(pi E)) of a delta-in-k normalized wave.

    Channel independent (asymptotics carry no kappa/r term); positive on both
    continuum branches.
    """
    val = (E + 1.0) / (np.pi * E)
    if val <= 0:
        raise UsageError(f"|E| must exceed 1, got {E}")
    return float(np.sqrt(val))
