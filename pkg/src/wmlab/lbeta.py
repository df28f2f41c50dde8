"""Regular solutions of the singular self-similar operators on [0, 1).

The light-cone reduction of the wave operator acting on profiles of the
variable a = r/t produces the one-parameter family

    L_beta = (1 - a^2) d2/da2 + (1/a + 2 a beta - 2 a) d/da
             + (-beta^2 + beta - 1/a^2).

a = 0 and a = 1 are regular singular points.  On a monomial,

    L_beta a^m = (m^2 - 1) a^(m-2) - (m - beta)(m + 1 - beta) a^m,

so matching a smooth right-hand side Sum rho_m a^m with an ansatz vanishing
to the declared leading order gives the recursion

    alpha_(m+2) = [rho_m + (m - beta)(m + 1 - beta) alpha_m] / ((m+2)^2 - 1).

The solver launches this series on [0, a_switch] and continues with an
adaptive integrator up to a = 1 - delta_edge; the (1-a)^(beta+1/2) edge
behavior is approached but never resolved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import ContractViolation, IndicialMismatchError, IntegratorStallError

__all__ = ["SelfSimilarSolution", "solve_lbeta", "apply_lbeta", "rhs_taylor"]


def apply_lbeta(beta, a, w, wp, wpp):
    """Evaluate L_beta pointwise from supplied value/derivative samples."""
    a = np.asarray(a, dtype=float)
    return (
        (1.0 - a**2) * wpp
        + (1.0 / a + 2.0 * a * (beta - 1.0)) * wp
        + (beta - beta**2 - 1.0 / a**2) * w
    )


@dataclass
class SelfSimilarSolution:
    """Solution of L_beta W = rhs, regular at a = 0, tabulated on [0, 1-delta].

    ``series`` holds the Frobenius coefficients alpha_m indexed by absolute
    power m = leading, leading+2, ...; below ``a_switch`` the series is the
    evaluator, above it the dense adaptive solution.
    """

    beta: float
    parity: str
    leading: int
    delta_edge: float
    a_switch: float
    series_powers: np.ndarray
    series_coeffs: np.ndarray
    a_grid: np.ndarray = field(repr=False)
    samples: np.ndarray = field(repr=False)
    _dense: object = field(default=None, repr=False)

    def __call__(self, a):
        return self._eval(a, order=0)

    def derivative(self, a):
        return self._eval(a, order=1)

    def _eval(self, a, order):
        a = np.asarray(a, dtype=float)
        scalar = a.ndim == 0
        a = np.atleast_1d(a)
        if np.any(a < 0) or np.any(a > 1.0 - self.delta_edge + 1e-12):
            raise ContractViolation(
                f"evaluation outside [0, {1.0 - self.delta_edge}] requested"
            )
        out = np.empty_like(a)
        low = a <= self.a_switch
        if np.any(low):
            p = self.series_powers
            c = self.series_coeffs
            if order == 0:
                out[low] = (c * a[low, None] ** p).sum(axis=1)
            else:
                out[low] = (c * p * a[low, None] ** (p - 1)).sum(axis=1)
        if np.any(~low):
            y = self._dense(a[~low])
            out[~low] = y[order]
        return float(out[0]) if scalar else out

    def envelope_deviation(self, fit_lo=0.5, degree=4):
        """Distance from a polynomial fit on [fit_lo, 1-delta], per point.

        The edge expansion carries a (1-a)^(beta+1/2) branch on top of a
        smooth part; the returned deviation isolates that branch.
        """
        mask = self.a_grid >= fit_lo
        x = self.a_grid[mask]
        coef = np.polynomial.polynomial.polyfit(x, self.samples[mask], degree)
        return x, self.samples[mask] - np.polynomial.polynomial.polyval(x, coef)


def rhs_taylor(rhs, n_coeffs, a_fit=0.1, n_pts=64):
    """Taylor coefficients of a smooth rhs at a = 0 by Chebyshev-point fit."""
    x = a_fit * (1.0 - np.cos(np.linspace(0.0, np.pi, n_pts))) / 2.0
    x[0] = 1e-9 * a_fit  # rhs may divide by a; stay off zero
    vals = np.asarray([float(rhs(xi)) for xi in x])
    coef, *_ = np.linalg.lstsq(np.vander(x, n_coeffs, increasing=True), vals, rcond=None)
    return coef


def solve_lbeta(
    beta,
    rhs,
    parity,
    leading,
    delta_edge=None,
    rhs_series=None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    n_samples=2001,
):
    """Regular solution of L_beta W = rhs with W ~ a^leading at the axis.

    ``parity`` is 'odd' or 'even' and must match ``leading``; ``rhs_series``
    optionally supplies Taylor coefficients of rhs at a = 0 (index = power),
    otherwise they are fit numerically.  Raises IndicialMismatchError when
    the rhs carries coefficients the ansatz cannot match, and
    IntegratorStallError when the continuation stalls before 1 - delta_edge.
    """
    if parity not in ("odd", "even"):
        raise ContractViolation("parity must be 'odd' or 'even'")
    if leading % 2 != (1 if parity == "odd" else 0):
        raise ContractViolation(f"leading order {leading} inconsistent with {parity} parity")
    if delta_edge is None:
        delta_edge = tolerances.delta_edge
    a_switch = tolerances.a_switch
    order = tolerances.frobenius_order

    n_coeffs = leading + order + 1
    if rhs_series is None:
        rho = rhs_taylor(rhs, n_coeffs)
    else:
        rho = np.zeros(n_coeffs)
        got = np.asarray(rhs_series, dtype=float)
        rho[: min(len(got), n_coeffs)] = got[:n_coeffs]

    scale = max(np.max(np.abs(rho)), 1e-300)
    # the ansatz only produces powers >= leading of the declared parity, so
    # L_beta of it only produces rhs powers >= leading - 2 of that parity
    for m in range(min(leading - 2, n_coeffs)):
        if abs(rho[m]) > 1e-8 * scale:
            raise IndicialMismatchError(
                f"rhs coefficient at order {m} cannot be matched by a"
                f" solution of leading order {leading}",
                order=m,
            )
    start = leading - 2
    for m in range(start, n_coeffs):
        if (m - start) % 2 == 1 and abs(rho[m]) > 1e-8 * scale:
            raise IndicialMismatchError(
                f"rhs coefficient at order {m} has the wrong parity for"
                f" leading order {leading}",
                order=m,
            )

    powers = np.arange(leading, leading + order + 1, 2)
    coeffs = np.zeros_like(powers, dtype=float)
    alpha_prev = 0.0
    for k, m_out in enumerate(powers):
        m = m_out - 2  # rhs order matched by alpha_(m_out)
        rho_m = rho[m] if 0 <= m < n_coeffs else 0.0
        coeffs[k] = (rho_m + (m - beta) * (m + 1.0 - beta) * alpha_prev) / (
            m_out**2 - 1.0
        )
        alpha_prev = coeffs[k]

    w0 = float((coeffs * a_switch**powers).sum())
    w1 = float((coeffs * powers * a_switch ** (powers - 1)).sum())

    def odefun(a, y):
        w, wp = y
        wpp = (
            rhs(a)
            - (1.0 / a + 2.0 * a * (beta - 1.0)) * wp
            - (beta - beta**2 - 1.0 / a**2) * w
        ) / (1.0 - a**2)
        return [wp, wpp]

    a_end = 1.0 - delta_edge
    sol = solve_ivp(
        odefun,
        (a_switch, a_end),
        [w0, w1],
        method="DOP853",
        rtol=tolerances.ode_rtol,
        atol=tolerances.ode_atol,
        dense_output=True,
    )
    if not sol.success or sol.t[-1] < a_end * (1.0 - 1e-12):
        raise IntegratorStallError(
            f"continuation stalled at a = {sol.t[-1]:.6f} before {a_end}",
            reached=float(sol.t[-1]),
        )

    result = SelfSimilarSolution(
        beta=beta,
        parity=parity,
        leading=leading,
        delta_edge=delta_edge,
        a_switch=a_switch,
        series_powers=powers,
        series_coeffs=coeffs,
        a_grid=np.empty(0),
        samples=np.empty(0),
        _dense=sol.sol,
    )
    a_grid = np.linspace(0.0, a_end, n_samples)
    result.a_grid = a_grid
    result.samples = result(a_grid)
    return result
