"""Oscillator symbol and retarded parametrix on the Fourier side.

In renormalized time tau = t^(-nu)/nu the scale factor is
lambda(tau) = (nu tau)^((1+nu)/nu), and the model transport-free equation
for the Fourier coefficients is

    d2x/dtau2 + lambda^(-2)(tau) xi x = f.

Its retarded fundamental solution is the symbol S(tau, sigma, xi) defined by

    d2S/dtau2 + lambda^(-2)(tau) xi S = 0,
    S(tau, tau, xi) = 0,   dS/dtau at tau = sigma equals -1,

which obeys the exact scaling S(tau, sigma, xi) =
xi^(nu/2) S(tau xi^(-nu/2), sigma xi^(-nu/2), 1) and, at xi = 0, the closed
form S = sigma - tau.  The full parametrix

    (U f)(tau, xi) = int_tau^inf (lambda(tau)/lambda(sigma))^(3/2)
                     sqrt(rho(lambda^2(tau)/lambda^2(sigma) xi) / rho(xi))
                     S(tau, sigma, lambda^2(tau) xi)
                     f(sigma, lambda^2(tau)/lambda^2(sigma) xi) dsigma

undoes the frequency transport as well: substituting
x(tau, xi) = lambda^(3/2)(tau) rho^(-1/2)(xi) w(tau, lambda^2(tau) xi)
turns the transported equation into the model oscillator per comoving
frequency, which S solves.  The zeroth iterate feeds U with the transformed,
cone-truncated residual of the approximate blow-up solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp

from .config import DEFAULT_TOLERANCES, Tolerances
from .core import BlowupParams, pde_residual
from .errors import ContractViolation, TailEstimateError
from .spectral import DistortedTransform, SpectralTables

__all__ = [
    "SymbolS",
    "bound_check",
    "SourceSample",
    "apply_U",
    "zeroth_iterate",
]


@dataclass(frozen=True)
class SymbolS:
    """Evaluator for the retarded oscillator symbol at one blow-up exponent."""

    nu: float
    tolerances: Tolerances = DEFAULT_TOLERANCES

    def lam(self, tau):
        return (self.nu * tau) ** ((1.0 + self.nu) / self.nu)

    def inv_lam2(self, tau):
        return (self.nu * tau) ** (-2.0 * (1.0 + self.nu) / self.nu)

    def __call__(self, tau, sigma, xi):
        """S(tau, sigma, xi) for 0 < tau <= sigma, xi >= 0."""
        if not 0 < tau <= sigma:
            raise ContractViolation("symbol requires 0 < tau <= sigma")
        if xi < 0:
            raise ContractViolation("xi must be nonnegative")
        if xi == 0.0 or tau == sigma:
            return sigma - tau
        sol = solve_ivp(
            lambda s, y: [y[1], -self.inv_lam2(s) * xi * y[0]],
            (sigma, tau),
            [0.0, -1.0],
            method="DOP853",
            rtol=self.tolerances.ode_rtol,
            atol=self.tolerances.ode_atol,
        )
        if not sol.success:
            raise ContractViolation(f"symbol integration failed: {sol.message}")
        return float(sol.y[0, -1])

    def along_sigma(self, tau, tau_max, xi_eff):
        """Dense sigma -> S(tau, sigma, xi_eff) on [tau, tau_max].

        S(tau, .) is the solution of the same oscillator with data (0, 1) at
        sigma = tau, so one forward integration serves every quadrature node.
        """
        if xi_eff == 0.0:
            return lambda s: np.asarray(s) - tau
        sol = solve_ivp(
            lambda s, y: [y[1], -self.inv_lam2(s) * xi_eff * y[0]],
            (tau, tau_max),
            [0.0, 1.0],
            method="DOP853",
            rtol=self.tolerances.ode_rtol,
            atol=self.tolerances.ode_atol,
            dense_output=True,
        )
        if not sol.success:
            raise ContractViolation(f"symbol integration failed: {sol.message}")
        return lambda s: sol.sol(s)[0]


def bound_check(nu, n_samples=1000, seed=0, tau_range=(0.5, 20.0),
                sigma_factor=20.0, xi_range=(1e-3, 1e3),
                tolerances: Tolerances = DEFAULT_TOLERANCES):
    """Empirical verification of the retarded symbol bounds.

    Samples (tau, sigma, xi) log-uniformly (a Latin hypercube per axis),
    fits the smallest growth exponent C making
    |S| <= M sigma (sigma/tau)^C (1 + tau^(-2/nu) xi)^(-1/2) hold with the
    least M, and reports M with a doubled-sample stability factor.
    """
    rng = np.random.default_rng(seed)
    sym = SymbolS(nu, tolerances)

    def latin(n, lo, hi):
        u = (rng.permutation(n) + rng.random(n)) / n
        return lo * (hi / lo) ** u

    def max_ratio(n):
        tau = latin(n, *tau_range)
        sig = tau * latin(n, 1.0 + 1e-6, sigma_factor)
        xi = latin(n, *xi_range)
        s_vals = np.array([sym(t, s, x) for t, s, x in zip(tau, sig, xi)])
        weight = 1.0 / np.sqrt(1.0 + tau ** (-2.0 / nu) * xi)
        best = None
        for C in np.linspace(0.0, 6.0, 61):
            m = np.max(np.abs(s_vals) / (sig * (sig / tau) ** C * weight))
            if best is None or m < best[1]:
                best = (C, m)
        return best

    c1, m1 = max_ratio(n_samples)
    c2, m2 = max_ratio(2 * n_samples)
    return {
        "nu": nu,
        "fitted_C": c1,
        "max_ratio": m1,
        "doubled_max_ratio": m2,
        "stable": bool(m2 <= 2.0 * m1 and np.isfinite(m2)),
        "n_samples": n_samples,
    }


@dataclass
class SourceSample:
    """A sampled source f(sigma, xi) with a declared temporal envelope.

    ``decay_power`` is the exponent N of the declared sigma^-N envelope; the
    parametrix uses it to bound the tail beyond the grid.  Off-grid
    frequencies are interpolated bilinearly in (log sigma, log xi) and
    clamped at the grid edges.
    """

    tau_grid: np.ndarray
    xi_grid: np.ndarray
    values: np.ndarray
    decay_power: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau_grid = np.asarray(self.tau_grid, dtype=float)
        self.xi_grid = np.asarray(self.xi_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.tau_grid), len(self.xi_grid)):
            raise ContractViolation("values must be (n_tau, n_xi)")
        if not np.all(np.isfinite(self.values)):
            raise ContractViolation("source contains non-finite values")
        from scipy.interpolate import RegularGridInterpolator

        self._interp = RegularGridInterpolator(
            (np.log(self.tau_grid), np.log(self.xi_grid)),
            self.values,
            method="linear",
            bounds_error=False,
            fill_value=None,  # linear extension; clamped below
        )

    def __call__(self, sigma, xi):
        ls = np.clip(np.log(sigma), np.log(self.tau_grid[0]), np.log(self.tau_grid[-1]))
        lx = np.clip(np.log(xi), np.log(self.xi_grid[0]), np.log(self.xi_grid[-1]))
        return float(self._interp((ls, lx)))

    def envelope_check(self):
        """Fitted decay exponent of ||f(sigma, .)||_inf on the last decade."""
        mask = self.tau_grid >= self.tau_grid[-1] / 10.0
        amp = np.max(np.abs(self.values[mask]), axis=1) + 1e-300
        slope = np.polyfit(np.log(self.tau_grid[mask]), np.log(amp), 1)[0]
        return -slope


def apply_U(source: SourceSample, tau, xi, nu, tables: SpectralTables,
            tolerances: Tolerances = DEFAULT_TOLERANCES, tail_rtol=0.02):
    """(U f)(tau, xi) by quadrature in sigma plus an analytic tail estimate.

    Raises TailEstimateError when the declared sigma^-N envelope leaves more
    than ``tail_rtol`` of the computed integral beyond the sampled range.
    """
    if xi < 0:
        raise ContractViolation("xi must be nonnegative")
    sym = SymbolS(nu, tolerances)
    tau_max = source.tau_grid[-1]
    if tau >= tau_max:
        raise ContractViolation("tau must lie inside the sampled sigma range")
    lam_t = sym.lam(tau)
    xi_eff = lam_t**2 * xi
    s_dense = sym.along_sigma(tau, tau_max, xi_eff)
    rho_xi = tables.rho_of(xi) if xi > 0 else 1.0

    def integrand(sigma):
        ratio2 = (tau / sigma) ** (2.0 * (1.0 + nu) / nu)
        xi_s = ratio2 * xi
        pref = ratio2 ** 0.75  # (lambda(tau)/lambda(sigma))^(3/2)
        if xi > 0:
            pref *= np.sqrt(tables.rho_of(xi_s) / rho_xi)
        return pref * s_dense(sigma) * source(sigma, xi_s)

    val, err = quad(
        integrand, tau, tau_max,
        epsabs=tolerances.quad_abs, epsrel=1e-8, limit=400,
    )
    # tail estimate from the declared envelope: integrand ~ A sigma^(-q)
    n = source.decay_power
    q = n - 1.0 - (1.0 + nu) / (2.0 * nu)
    edge = abs(integrand(0.99 * tau_max))
    tail = edge * tau_max / max(q - 1.0, 0.5)
    scale = max(abs(val), tolerances.quad_abs)
    if tail > tail_rtol * scale:
        raise TailEstimateError(
            f"sigma tail beyond {tau_max:g} estimated at {tail:.2e} vs integral "
            f"{val:.2e}; increase tau_max or the envelope power N"
        )
    return float(val)


def zeroth_iterate(approx, tau_grid, xi_grid, transform: DistortedTransform,
                   tolerances: Tolerances = DEFAULT_TOLERANCES,
                   cone_margin=5e-3, out_fraction=0.25):
    """x0 = U[lambda^-2 F(R^(1/2) e~)] for the assembled approximate solution.

    Per source time sigma the residual of the evaluator is formed by
    centered finite differences, sharply truncated to the light cone
    (a margin keeps the self-similar factors inside their domain), weighted
    by R^(1/2) lambda^-2 and transformed.  The output grid keeps the tau
    nodes below ``out_fraction`` of the sampled range so the sigma integral
    retains a usable tail.
    """
    params: BlowupParams = approx.params
    nu = params.nu
    tau_grid = np.asarray(tau_grid, dtype=float)
    xi_grid = np.asarray(xi_grid, dtype=float)
    R_grid = transform.r_grid

    f_vals = np.empty((len(tau_grid), len(transform.xi_grid)))
    for i, sigma in enumerate(tau_grid):
        t = params.t_of_tau(sigma)
        lam = params.lam(t)
        r = R_grid / lam
        keep = r <= (1.0 - cone_margin) * t
        dt = 1e-4 * t
        w = np.zeros_like(R_grid)
        if np.any(keep):
            rk = r[keep]
            slices = [approx(t + s * dt, rk) for s in (-1, 0, 1)]
            res = pde_residual(slices[0], slices[1], slices[2], rk, dt)
            # interior residual lives on rk[1:-1]; map back onto the R grid
            w_keep = np.zeros_like(rk)
            w_keep[1:-1] = res
            w[keep] = w_keep
        src = lam**-2 * np.sqrt(R_grid) * w
        f_vals[i] = transform.forward(src).values

    source = SourceSample(
        tau_grid=tau_grid, xi_grid=transform.xi_grid, values=f_vals,
        decay_power=4.0, meta={"nu": nu, "cone_margin": cone_margin},
    )
    tau_out = tau_grid[tau_grid <= tau_grid[0] + out_fraction * (tau_grid[-1] - tau_grid[0])]
    x0 = np.empty((len(tau_out), len(xi_grid)))
    for i, tau in enumerate(tau_out):
        for j, xi in enumerate(xi_grid):
            x0[i, j] = apply_U(source, float(tau), float(xi), nu,
                               transform.tables, tolerances)
    out = SourceSample(
        tau_grid=tau_out, xi_grid=xi_grid, values=x0,
        decay_power=max(source.envelope_check() - 2.0, 0.0),
        meta={"nu": nu, "source_envelope": source.envelope_check()},
    )
    return out, source
