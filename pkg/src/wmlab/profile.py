"""Construction of the approximate blow-up solution u = Q + v1 + v2.

The first correction kills the residual of the rescaled ground state through
the static linearized operator

    Ltil = d2/dR2 + (1/R) d/dR - cos(2Q)/R^2,

conjugate to  -L = d2/dR2 - 3/(4R^2) + 8/(1+R^2)^2  via -L(sqrt(R) v) =
sqrt(R) Ltil v.  A fundamental system for L is

    phi(R)   = R^(3/2) / (1+R^2),
    theta(R) = (-1 + 4 R^2 log R + R^4) / (sqrt(R) (1+R^2)),

with Wronskian phi theta' - phi' theta = 2, which gives the variation of
constants formula for (t lambda)^2 v1 as a pure function of R.

The second correction repairs the large-R part of the remaining error near
the light cone through four regular solutions of the self-similar operators
L_nu and L_(2nu) (see lbeta), reassembled with the axis-regular weights
(1/2) log(1+R^2) and R/(1+R^2)^(1/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .config import DEFAULT_TOLERANCES, Tolerances
from .core import BlowupParams, RadialProfile, cos_2q, ground_state, log_grid, sin_2q
from .errors import ContractViolation, QuadratureError
from .lbeta import SelfSimilarSolution, solve_lbeta

__all__ = [
    "FundamentalPair",
    "first_correction",
    "fit_v1_tail",
    "first_error_expansion",
    "fit_e1_coefficients",
    "SecondCorrection",
    "second_correction",
    "ApproxSolution",
    "assemble",
]


class FundamentalPair:
    """The zero-energy fundamental system (phi, theta) of L, W(phi, theta) = 2."""

    wronskian = 2.0

    @staticmethod
    def phi(R):
        R = np.asarray(R, dtype=float)
        return R**1.5 / (1.0 + R**2)

    @staticmethod
    def dphi(R):
        R = np.asarray(R, dtype=float)
        return np.sqrt(R) * (3.0 - R**2) / (2.0 * (1.0 + R**2) ** 2)

    @staticmethod
    def theta(R):
        R = np.asarray(R, dtype=float)
        return (-1.0 + 4.0 * R**2 * np.log(R) + R**4) / (np.sqrt(R) * (1.0 + R**2))

    @staticmethod
    def dtheta(R):
        R = np.asarray(R, dtype=float)
        num = -1.0 + 4.0 * R**2 * np.log(R) + R**4
        dnum = 8.0 * R * np.log(R) + 4.0 * R + 4.0 * R**3
        den = np.sqrt(R) * (1.0 + R**2)
        dden = 0.5 / np.sqrt(R) + 2.5 * R**1.5
        return (dnum * den - num * dden) / den**2

    @classmethod
    def wronskian_samples(cls, R):
        return cls.phi(R) * cls.dtheta(R) - cls.dphi(R) * cls.theta(R)


def _t2e0_profile(R, nu):
    """t^2 e0 as a pure function of R (the 1/t^2 factor scaled out)."""
    R = np.asarray(R, dtype=float)
    return (nu + 1.0) ** 2 * 4.0 * R / (1.0 + R**2) ** 2 - nu * (nu + 1.0) * 2.0 * R / (
        1.0 + R**2
    )


def _cumulative_quad(func, grid, tolerances):
    """Cumulative integral of func from 0 along the grid, panel by panel."""
    out = np.empty_like(grid)
    total = 0.0
    lo = 0.0
    for i, hi in enumerate(grid):
        val, err = quad(
            func, lo, hi, epsabs=tolerances.quad_abs, epsrel=tolerances.quad_rel,
            limit=200,
        )
        if not np.isfinite(val) or err > tolerances.quad_abs + 10.0 * tolerances.quad_rel * abs(val):
            raise QuadratureError(
                f"quadrature failed on [{lo:g}, {hi:g}] (err {err:g})",
                interval=(lo, hi),
            )
        total += val
        out[i] = total
        lo = hi
    return out


def first_correction(nu, grid=None, tolerances: Tolerances = DEFAULT_TOLERANCES):
    """Premultiplied first correction (t lambda)^2 v1 as a function of R.

    Variation of constants against (phi, theta) with source f = t^2 e0:

        g(R) = (1/2) R^(-1/2) [ theta(R) I_phi(R) - phi(R) I_theta(R) ],
        I_phi = int_0^R phi sqrt(R') f dR',  I_theta = int_0^R theta sqrt(R') f dR'.

    Both integrands are bounded at R' = 0 (f vanishes linearly); the mild
    R'^2 log R' behavior is left to the adaptive panels.
    """
    if nu <= 0:
        raise ContractViolation("nu must be positive")
    if grid is None:
        grid = log_grid()
    grid = np.asarray(grid, dtype=float)
    if grid[0] <= 0 or np.any(np.diff(grid) <= 0):
        raise ContractViolation("grid must be positive and strictly increasing")

    def integrand_phi(s):
        return s**2 / (1.0 + s**2) * _t2e0_profile(s, nu)

    def integrand_theta(s):
        # theta(s) sqrt(s) = (-1 + 4 s^2 log s + s^4) / (1 + s^2), finite at 0
        sl = np.log(s) if s > 0 else 0.0
        return (-1.0 + 4.0 * s**2 * sl + s**4) / (1.0 + s**2) * _t2e0_profile(s, nu)

    i_phi = _cumulative_quad(integrand_phi, grid, tolerances)
    i_theta = _cumulative_quad(integrand_theta, grid, tolerances)
    g = 0.5 / np.sqrt(grid) * (
        FundamentalPair.theta(grid) * i_phi - FundamentalPair.phi(grid) * i_theta
    )
    prof = RadialProfile(grid, g, vanishing_order=3, log_growth=(1, 1))
    d1, d2, resid = fit_v1_tail(prof)
    prof.meta.update({"nu": nu, "d1": d1, "d2": d2, "tail_fit_residual": resid})
    return prof


def fit_v1_tail(profile, decades=1.0):
    """Least-squares d1 R log R + d2 R on the last grid decade(s)."""
    R = profile.grid
    mask = R >= R[-1] / 10.0**decades
    x, y = R[mask], profile.values[mask]
    basis = np.column_stack([x * np.log(x), x])
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    resid = np.sqrt(np.mean((basis @ coef - y) ** 2)) / np.sqrt(np.mean(y**2))
    return float(coef[0]), float(coef[1]), float(resid)


def _odd_cubic_defect(v):
    """2v - sin(2v) with the cancellation-safe series branch."""
    v = np.asarray(v, dtype=float)
    small = np.abs(v) < 1e-4
    out = 2.0 * v - np.sin(2.0 * v)
    # (2v)^3/6 - (2v)^5/120 for |v| << 1
    w = 2.0 * v[small]
    out[small] = w**3 / 6.0 - w**5 / 120.0
    return out


def first_error_expansion(nu, v1, t_ref=None, tolerances: Tolerances = DEFAULT_TOLERANCES):
    """Coefficient profile of the 1/(t lambda)^2 part of t^2 e1.

    With v1(t, r) = t^(2 nu) g(R) exactly, the time curvature is analytic in
    the prefactor powers and R d/dR:

        t^2 d_tt v1 = t^(2 nu) [ 2 nu (2 nu - 1) g
                                 + (1+nu)(2-3 nu) R g' + (1+nu)^2 R^2 g'' ],

    and of the trigonometric terms only the quadratic defect
    -sin(2Q) g^2 / R^2 sits at the same order; the cubic-and-beyond defects
    carry extra powers of t^(2 nu) and are dropped (they belong to the
    neglected higher-order error).  Passing a finite ``t_ref`` keeps them,
    evaluated at that reference time, for cross-checks.  R g' and R^2 g''
    are realized by finite differences in log R, so the grid must resolve a
    decade with a healthy stencil.
    """
    R = v1.grid
    g = v1.values
    per_decade = (len(R) - 1) / np.log10(R[-1] / R[0])
    if per_decade < 16:
        raise ContractViolation(
            f"grid too coarse for the log-R stencil ({per_decade:.0f} points/decade)"
        )
    x = np.log(R)
    gx = np.gradient(g, x, edge_order=2)
    gxx = np.gradient(gx, x, edge_order=2)
    r_gp = gx                 # R g'
    r2_gpp = gxx - gx         # R^2 g''

    curvature = (
        2.0 * nu * (2.0 * nu - 1.0) * g
        + (1.0 + nu) * (2.0 - 3.0 * nu) * r_gp
        + (1.0 + nu) ** 2 * r2_gpp
    )
    if t_ref is None:
        trig = sin_2q(R) / R**2 * g**2
    else:
        s = t_ref ** (2.0 * nu)
        v = s * g
        trig = (
            sin_2q(R) / (2.0 * R**2) * 2.0 * np.sin(v) ** 2
            + cos_2q(R) / (2.0 * R**2) * _odd_cubic_defect(v)
        ) / s**2
    prof = RadialProfile(R, curvature - trig, vanishing_order=3, log_growth=(1, 1))
    c, resid = fit_e1_coefficients(prof)
    prof.meta.update({"nu": nu, "t_ref": t_ref, "c": c, "c_fit_residual": resid})
    return prof


def fit_e1_coefficients(e1, decades=1.0, edge_skip=8):
    """(c1..c4) of the large-R model c1 R log R + c2 R + c3 log R + c4.

    The last few samples are excluded: the log-R derivative stencil behind
    e1 loses accuracy at the one-sided boundary.
    """
    R = e1.grid[:-edge_skip] if edge_skip else e1.grid
    vals = e1.values[: len(R)]
    mask = R >= R[-1] / 10.0**decades
    x, y = R[mask], vals[mask]
    basis = np.column_stack([x * np.log(x), x, np.log(x), np.ones_like(x)])
    scale = np.sqrt((basis**2).mean(axis=0))
    coef, *_ = np.linalg.lstsq(basis / scale, y, rcond=None)
    coef = coef / scale
    resid = np.sqrt(np.mean((basis @ coef - y) ** 2)) / np.sqrt(np.mean(y**2))
    return tuple(float(v) for v in coef), float(resid)


def _coupling_series(kappa, nu, w: SelfSimilarSolution, n_coeffs):
    """Taylor coefficients at a = 0 of kappa W + 2 (1/a - (1+nu) a) W'."""
    rho = np.zeros(n_coeffs)
    alpha = dict(zip(w.series_powers.tolist(), w.series_coeffs.tolist()))
    for m in range(n_coeffs):
        c = kappa * alpha.get(m, 0.0)
        c += 2.0 * (m + 2) * alpha.get(m + 2, 0.0)          # a^-1 W'
        c -= 2.0 * (1.0 + nu) * m * alpha.get(m, 0.0)       # a W'
        rho[m] = c
    return rho


@dataclass
class SecondCorrection:
    """The four self-similar components and the re-defined evaluators.

    w2      = (1/(t lambda))   [ W21(a) (1/2) log(1+R^2) + W20(a) ]
    w2tilde = (1/(t lambda)^2) R (1+R^2)^(-1/2)
              [ Wt21(a) (1/2) log(1+R^2) + Wt20(a) ]
    """

    nu: float
    c: tuple
    w21: SelfSimilarSolution
    w20: SelfSimilarSolution
    wt21: SelfSimilarSolution
    wt20: SelfSimilarSolution

    @property
    def delta_edge(self):
        return self.w21.delta_edge

    def _check_domain(self, t, r):
        a = np.asarray(r, dtype=float) / t
        if np.any(a > 1.0 - self.delta_edge + 1e-12):
            raise ContractViolation(
                f"second correction undefined outside r <= (1 - {self.delta_edge}) t"
            )
        return a

    def w2(self, t, r):
        a = self._check_domain(t, r)
        R = np.asarray(r) * t ** (-1.0 - self.nu)
        half_log = 0.5 * np.log1p(R**2)
        return t**self.nu * (self.w21(a) * half_log + self.w20(a))

    def w2_tilde(self, t, r):
        a = self._check_domain(t, r)
        R = np.asarray(r) * t ** (-1.0 - self.nu)
        half_log = 0.5 * np.log1p(R**2)
        shell = R / np.sqrt(1.0 + R**2)
        return t ** (2.0 * self.nu) * shell * (self.wt21(a) * half_log + self.wt20(a))

    def v2(self, t, r):
        return self.w2(t, r) + self.w2_tilde(t, r)


def second_correction(nu, c, tolerances: Tolerances = DEFAULT_TOLERANCES):
    """Solve the four L_beta systems fed by the e1 expansion coefficients.

    The log-matching of the wave operator on (1/(t lambda)) [W1 log R + W0]
    couples the log^0 equation to W1 through

        F0 = (1+nu)(2 nu - 1) W1 + 2 (1/a - (1+nu) a) W1',

    and likewise for the (1/(t lambda)^2) pair with
    Ft0 = (1+nu)(4 nu - 1) Wt1 + 2 (1/a - (1+nu) a) Wt1'; the log^1
    equations are uncoupled.  Systems, in solving order:

        L_nu  W21 = c1 a          L_(2nu) Wt21 = c3
        L_nu  W20 = c2 a - F0     L_(2nu) Wt20 = c4 - Ft0
    """
    c1, c2, c3, c4 = c
    n_coeffs = 3 + tolerances.frobenius_order + 1

    w21 = solve_lbeta(
        nu, lambda a: c1 * a, "odd", 3, rhs_series=[0.0, c1], tolerances=tolerances
    )
    kappa = (1.0 + nu) * (2.0 * nu - 1.0)

    def f0(a):
        return kappa * w21(a) + 2.0 * (1.0 / a - (1.0 + nu) * a) * w21.derivative(a)

    rho20 = -_coupling_series(kappa, nu, w21, n_coeffs)
    rho20[1] += c2
    w20 = solve_lbeta(
        nu, lambda a: c2 * a - f0(a), "odd", 3, rhs_series=rho20, tolerances=tolerances
    )

    wt21 = solve_lbeta(
        2.0 * nu, lambda a: c3 + 0.0 * a, "even", 2, rhs_series=[c3], tolerances=tolerances
    )
    kappa_t = (1.0 + nu) * (4.0 * nu - 1.0)

    def ft0(a):
        return kappa_t * wt21(a) + 2.0 * (1.0 / a - (1.0 + nu) * a) * wt21.derivative(a)

    rho_t20 = -_coupling_series(kappa_t, nu, wt21, n_coeffs)
    rho_t20[0] += c4
    wt20 = solve_lbeta(
        2.0 * nu, lambda a: c4 - ft0(a), "even", 2, rhs_series=rho_t20,
        tolerances=tolerances,
    )
    return SecondCorrection(nu=nu, c=tuple(c), w21=w21, w20=w20, wt21=wt21, wt20=wt20)


@dataclass
class ApproxSolution:
    """Evaluator for u_approx(t, r) = Q(lambda(t) r) + corrections.

    ``order`` counts implemented corrections: 0 none, 1 adds t^(2 nu) g(R),
    2 adds the self-similar pair, defined for r <= (1 - delta_edge) t only.
    """

    params: BlowupParams
    order: int
    v1: RadialProfile = None
    second: SecondCorrection = None
    _spline: CubicSpline = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.order >= 1:
            self._spline = CubicSpline(np.log(self.v1.grid), self.v1.values)

    def v1_of_R(self, R):
        """g(R) with the proven asymptotics continued beyond the grid."""
        R = np.asarray(R, dtype=float)
        scalar = R.ndim == 0
        R = np.atleast_1d(R).astype(float)
        g = np.empty_like(R)
        lo, hi = self.v1.grid[0], self.v1.grid[-1]
        inside = (R >= lo) & (R <= hi)
        g[inside] = self._spline(np.log(R[inside]))
        below = R < lo
        if np.any(below):
            g[below] = self._spline(np.log(lo)) * (R[below] / lo) ** 3
        above = R > hi
        if np.any(above):
            d1, d2 = self.v1.meta["d1"], self.v1.meta["d2"]
            g[above] = d1 * R[above] * np.log(R[above]) + d2 * R[above]
        return float(g[0]) if scalar else g

    def __call__(self, t, r):
        r = np.asarray(r, dtype=float)
        R = self.params.R(t, r)
        u = ground_state(R)
        if self.order >= 1:
            u = u + t ** (2.0 * self.params.nu) * self.v1_of_R(R)
        if self.order >= 2:
            u = u + self.second.v2(t, r)
        return u

    def dt(self, t, r, rel_step=1e-5):
        """Centered t-derivative of the evaluator."""
        h = rel_step * t
        return (self(t + h, r) - self(t - h, r)) / (2.0 * h)


def assemble(nu, order=2, grid=None, t_ref=None,
             tolerances: Tolerances = DEFAULT_TOLERANCES):
    """Build the approximate solution through the requested correction order."""
    if order not in (0, 1, 2):
        raise ContractViolation("order must be 0, 1 or 2")
    params = BlowupParams(nu=nu, t_ref=t_ref if t_ref else 0.01)
    if order == 0:
        return ApproxSolution(params=params, order=0, meta={"nu": nu, "order": 0})
    v1 = first_correction(nu, grid=grid, tolerances=tolerances)
    meta = {
        "nu": nu,
        "order": order,
        "d1": v1.meta["d1"],
        "d2": v1.meta["d2"],
        "v1_tail_fit_residual": v1.meta["tail_fit_residual"],
    }
    if order == 1:
        return ApproxSolution(params=params, order=1, v1=v1, meta=meta)
    e1 = first_error_expansion(nu, v1, t_ref=t_ref, tolerances=tolerances)
    second = second_correction(nu, e1.meta["c"], tolerances=tolerances)
    meta.update({
        "c": e1.meta["c"],
        "c_fit_residual": e1.meta["c_fit_residual"],
        "t_ref": e1.meta["t_ref"],
    })
    return ApproxSolution(params=params, order=2, v1=v1, second=second, meta=meta)
