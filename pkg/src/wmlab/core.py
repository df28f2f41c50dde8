"""Closed-form ingredients of the corotational blow-up model.

The degree-one corotational reduction of the wave map into the sphere is the
scalar equation

    -u_tt + u_rr + u_r / r = sin(2u) / (2 r^2),   r > 0,

whose static ground state is Q(r) = 2 arctan r.  Blow-up solutions
concentrate Q at the scale R = lambda(t) r with lambda(t) = t^(-1-nu) and
blow up at t = 0.  This module holds the parameter record and coordinate
maps, the sampled radial-profile container, the residual of the equation
under a second-order finite-difference stencil, the conserved (reduced)
energy, and the closed form of the residual generated by Q(lambda(t) r).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

__all__ = [
    "BlowupParams",
    "RadialProfile",
    "SelfSimilarContext",
    "ground_state",
    "sin_2q",
    "cos_2q",
    "e0_closed_form",
    "pde_residual",
    "reduced_energy",
    "log_grid",
]

GROUND_STATE_ENERGY = 4.0  # integral of 8 r / (1+r^2)^2 over (0, inf)


def log_grid(lo=1e-3, hi=1e3, n=2048):
    """Geometric grid, the default sampling for radial profiles."""
    return np.geomspace(lo, hi, n)


@dataclass(frozen=True)
class BlowupParams:
    """Blow-up exponent and the derived scales.

    lambda(t) = t^(-1-nu) is the concentration scale, tau = t^(-nu)/nu the
    renormalized time; lambda expressed through tau is (nu tau)^((1+nu)/nu).
    Any nu > 0 is accepted; nu <= 1/2 is the regime of interest.
    """

    nu: float
    t_ref: float = 0.01
    cone_radius_factor: float = 1.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ContractViolation(f"nu must be positive, got {self.nu}")
        if not self.t_ref > 0:
            raise ContractViolation(f"t_ref must be positive, got {self.t_ref}")
        if not 0 < self.cone_radius_factor <= 1:
            raise ContractViolation(
                f"cone_radius_factor must lie in (0, 1], got {self.cone_radius_factor}"
            )

    def lam(self, t):
        return t ** (-1.0 - self.nu)

    def tlam(self, t):
        """t * lambda(t) = t^(-nu); corrections carry powers of 1/(t lambda)^2."""
        return t ** (-self.nu)

    def tau(self, t):
        return t ** (-self.nu) / self.nu

    def t_of_tau(self, tau):
        return (self.nu * tau) ** (-1.0 / self.nu)

    def lam_of_tau(self, tau):
        return (self.nu * tau) ** ((1.0 + self.nu) / self.nu)

    def R(self, t, r):
        return self.lam(t) * np.asarray(r)


@dataclass(frozen=True)
class SelfSimilarContext:
    """Coordinates attached to one event (t, r) inside the light cone."""

    t: float
    r: float
    a: float
    R: float
    b1: float
    b2: float

    @classmethod
    def at(cls, params: BlowupParams, t: float, r: float) -> "SelfSimilarContext":
        R = float(params.R(t, r))
        tl = params.tlam(t)
        return cls(
            t=t,
            r=r,
            a=r / t,
            R=R,
            b1=float(np.log1p(R**2) ** 2 / tl**2),
            b2=float(1.0 / tl**2),
        )


@dataclass
class RadialProfile:
    """A function of R sampled on a positive increasing grid.

    ``vanishing_order`` declares the power of R at the axis and
    ``log_growth = (k, l)`` the R^k (log R)^l envelope at infinity; both are
    metadata checked by the validation helpers, not enforced on construction.
    """

    grid: np.ndarray
    values: np.ndarray
    vanishing_order: int = 0
    log_growth: tuple = (0, 0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.ndim != 1 or self.grid.shape != self.values.shape:
            raise ContractViolation("grid and values must be 1-d arrays of equal length")
        if self.grid[0] <= 0 or np.any(np.diff(self.grid) <= 0):
            raise ContractViolation("grid must be strictly increasing with first point > 0")

    def axis_ratio(self):
        """values / R^vanishing_order on the first decade of the grid."""
        mask = self.grid <= self.grid[0] * 10.0
        return self.values[mask] / self.grid[mask] ** self.vanishing_order

    def envelope_ratio(self):
        """values / (R^k (log R)^l) on the last decade of the grid."""
        k, l = self.log_growth
        mask = self.grid >= self.grid[-1] / 10.0
        env = self.grid[mask] ** k * np.log(self.grid[mask]) ** l
        return self.values[mask] / env


def ground_state(R):
    """Q(R) = 2 arctan R, the degree-one harmonic map profile."""
    return 2.0 * np.arctan(R)


def sin_2q(R):
    """sin(2 Q(R)) = 4 R (1 - R^2) / (1 + R^2)^2 without trig roundoff."""
    R = np.asarray(R, dtype=float)
    return 4.0 * R * (1.0 - R**2) / (1.0 + R**2) ** 2


def cos_2q(R):
    """cos(2 Q(R)) = (1 - 6 R^2 + R^4) / (1 + R^2)^2."""
    R = np.asarray(R, dtype=float)
    return (1.0 - 6.0 * R**2 + R**4) / (1.0 + R**2) ** 2


def e0_closed_form(t, R, nu):
    """Residual of the pure rescaled ground state Q(lambda(t) r).

    The static terms cancel; what is left is the time curvature

        e0 = ( (nu+1)^2 * 4R/(1+R^2)^2 - nu(nu+1) * 2R/(1+R^2) ) / t^2,

    a pure function of R and nu up to the overall 1/t^2.
    """
    R = np.asarray(R, dtype=float)
    shell = 4.0 * R / (1.0 + R**2) ** 2
    tail = 2.0 * R / (1.0 + R**2)
    return ((nu + 1.0) ** 2 * shell - nu * (nu + 1.0) * tail) / t**2


def pde_residual(u_before, u_at, u_after, r, dt):
    """Second-order finite-difference residual on interior grid points.

    Takes three time slices at t-dt, t, t+dt on one uniform-enough r grid and
    returns  u_tt - u_rr - u_r/r + sin(2u)/(2 r^2)  at r[1:-1]; for an exact
    solution this is O(dr^2 + dt^2).
    """
    r = np.asarray(r, dtype=float)
    slices = [np.asarray(u, dtype=float) for u in (u_before, u_at, u_after)]
    if any(s.shape != r.shape for s in slices):
        raise ContractViolation("time slices must share the r grid")
    if dt <= 0:
        raise ContractViolation("dt must be positive")
    um, u0, up = slices
    dr = np.diff(r)
    if np.any(dr <= 0):
        raise ContractViolation("r grid must be strictly increasing")

    utt = (up - 2.0 * u0 + um) / dt**2
    # centered first/second derivatives valid on nonuniform grids
    h_l = r[1:-1] - r[:-2]
    h_r = r[2:] - r[1:-1]
    u_l, u_c, u_r_ = u0[:-2], u0[1:-1], u0[2:]
    ur = (u_r_ * h_l**2 - u_l * h_r**2 + u_c * (h_r**2 - h_l**2)) / (
        h_l * h_r * (h_l + h_r)
    )
    urr = 2.0 * (u_l * h_r + u_r_ * h_l - u_c * (h_l + h_r)) / (
        h_l * h_r * (h_l + h_r)
    )
    rc = r[1:-1]
    return utt[1:-1] - urr - ur / rc + np.sin(2.0 * u0[1:-1]) / (2.0 * rc**2)


def reduced_energy(r, u, ut):
    """Composite quadrature of the conserved energy
    int [u_t^2 + u_r^2 + sin^2(u)/r^2] r dr on the sampled grid.

    The axis term sin^2(u)/r^2 equals (u/r)^2 (sin u / u)^2, finite for the
    odd-parity fields used here; the grid never contains r = 0.
    """
    r = np.asarray(r, dtype=float)
    u = np.asarray(u, dtype=float)
    ut = np.asarray(ut, dtype=float)
    if np.any(~np.isfinite(u)) or np.any(~np.isfinite(ut)):
        raise ContractViolation("field contains non-finite values")
    ur = np.gradient(u, r, edge_order=2)
    integrand = (ut**2 + ur**2 + (np.sin(u) / r) ** 2) * r
    return float(np.trapezoid(integrand, r))
