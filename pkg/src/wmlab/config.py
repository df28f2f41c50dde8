"""Numerical knobs collected in one record.

Every tolerance or switch point used by the solvers lives here, so a run
manifest can pin them and tests can tighten or loosen them in one place.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict


@dataclass(frozen=True)
class Tolerances:
    # adaptive quadrature (variation-of-constants integrals, energies)
    quad_abs: float = 1e-10
    quad_rel: float = 1e-8
    # adaptive ODE integration (eigenfunctions, singular a-ODEs, symbol S)
    ode_rtol: float = 1e-10
    ode_atol: float = 1e-12
    # series launch of singular ODEs
    frobenius_order: int = 8
    a_switch: float = 0.05
    r_switch: float = 1e-3
    # distance kept from the a = 1 edge of the light cone
    delta_edge: float = 1e-3
    # finite-difference step for residual spot checks (relative)
    fd_step: float = 1e-5

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class GridSpec:
    """Default grids; the profile grid is geometric because the profile
    asymptotics are polynomial-in-log across six decades."""

    r_min: float = 1e-3
    r_max: float = 1e3
    n_r: int = 2048
    xi_min: float = 1e-4
    xi_max: float = 1e4
    n_xi: int = 512

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT_GRIDS = GridSpec()
