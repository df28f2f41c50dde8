"""Radial corotational wave evolution and blow-up rate diagnostics.

The field is evolved toward the blow-up time t = 0 from data posed at t0.
Writing s = t0 - t, the time symmetry of the equation makes this a plain
forward integration of

    u_ss = u_rr + u_r / r - sin(2u) / (2 r^2)

by velocity Verlet on a uniform grid with an odd ghost at the axis and an
outgoing condition at r_max.  Concentration is measured through the radius
where u crosses pi/2 (Q(1) = pi/2, so lambda_est = 1/r*), and the blow-up
exponent through a log-log fit of lambda_est against t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ground_state, reduced_energy
from .errors import ContractViolation
from .profile import ApproxSolution

__all__ = [
    "WaveField",
    "init_from_profile",
    "evolve",
    "extract_lambda",
    "RateSeries",
    "rate_fit",
    "local_error_energy",
]


@dataclass
class WaveField:
    """One time slice (u, u_t) on a uniform r grid starting at dr."""

    t: float
    r_grid: np.ndarray
    u: np.ndarray
    ut: np.ndarray
    parity: str = "odd"

    def energy(self):
        return reduced_energy(self.r_grid, self.u, self.ut)

    def copy(self):
        return WaveField(self.t, self.r_grid, self.u.copy(), self.ut.copy())


def _blend_weight(r, lo, hi):
    """1 below lo, 0 above hi, C^1 cosine ramp between."""
    w = np.ones_like(r)
    w[r >= hi] = 0.0
    ramp = (r > lo) & (r < hi)
    w[ramp] = 0.5 * (1.0 + np.cos(np.pi * (r[ramp] - lo) / (hi - lo)))
    return w


def init_from_profile(approx: ApproxSolution, t0, r_max, dr, blend_delta=0.05):
    """Wave data from the approximate profile, blended to pure Q outside.

    The self-similar corrections live strictly inside the cone, so they are
    faded out over [(1-blend_delta) t0, (1-2 delta_edge) t0]; outside only
    Q(lambda(t0) r) remains.  u_t comes from a centered t-difference of the
    blended construction with the blend weight frozen.
    """
    if not 0 < t0:
        raise ContractViolation("t0 must be positive")
    if r_max < 2.0 * t0:
        raise ContractViolation("r_max must be at least 2 t0")
    params = approx.params
    n = int(round(r_max / dr))
    r = dr * np.arange(1, n + 1)

    lo = (1.0 - blend_delta) * t0
    delta_edge = (
        approx.second.delta_edge if approx.order >= 2 else 1e-3
    )
    hi = (1.0 - 2.0 * delta_edge) * t0
    if (hi - lo) / dr < 8:
        raise ContractViolation(
            f"blend region [{lo:g}, {hi:g}] spans fewer than 8 cells at dr={dr:g}"
        )
    w = _blend_weight(r, lo, hi)
    inside = w > 0.0

    def slice_at(t):
        u = ground_state(params.R(t, r))
        if approx.order >= 1:
            corr = np.zeros_like(r)
            corr[inside] = approx(t, r[inside]) - ground_state(params.R(t, r[inside]))
            u = u + w * corr
        return u

    h = 1e-4 * t0
    u0 = slice_at(t0)
    ut0 = (slice_at(t0 + h) - slice_at(t0 - h)) / (2.0 * h)
    return WaveField(t=t0, r_grid=r, u=u0, ut=ut0)


def _acceleration(u, r, dr):
    """Spatial operator with odd axis ghost; last cell handled separately."""
    acc = np.empty_like(u)
    # interior: u(0) = 0 supplies the left neighbor of the first cell
    u_pad = np.concatenate(([0.0], u))
    acc[:-1] = (
        (u_pad[2:] - 2.0 * u_pad[1:-1] + u_pad[:-2]) / dr**2
        + (u_pad[2:] - u_pad[:-2]) / (2.0 * dr) / r[:-1]
        - np.sin(2.0 * u[:-1]) / (2.0 * r[:-1] ** 2)
    )
    acc[-1] = 0.0  # boundary cell advanced by the one-way condition
    return acc


def evolve(
    field: WaveField,
    t_end,
    cfl=0.8,
    snapshot_times=None,
    under_resolution_factor=0.05,
    track_rate=True,
):
    """March the field from field.t down to t_end; returns (snapshots, info).

    Velocity Verlet in s = t0 - t; the last cell obeys the one-way equation
    u_s = -u_r - (u - u_ref)/(2 r).  Stops early with a truncation marker
    when the crossing radius is resolved by fewer than
    1/under_resolution_factor cells or the field stops being finite.
    """
    if not 0 < cfl < 1:
        raise ContractViolation("cfl must lie in (0, 1)")
    if t_end >= field.t:
        raise ContractViolation("t_end must be below the initial time")
    t0 = field.t
    r = field.r_grid
    dr = float(r[1] - r[0])
    dt = cfl * dr
    u = field.u.copy()
    v = -field.ut.copy()  # d/ds = -d/dt
    # the one-way condition damps deviations from the initial profile, so a
    # static solution is preserved exactly at the boundary as well
    u_ref_b = float(u[-1])
    u_ref_bm = float(u[-2])

    if snapshot_times is None:
        snapshot_times = np.geomspace(t0 * 0.98, max(t_end, 1e-6), 25)
    want = sorted(set(float(x) for x in snapshot_times if t_end <= x <= t0), reverse=True)

    snapshots = []
    rate_t, rate_lam = [], []
    info = {"truncated": False, "reason": None, "steps": 0}

    def record(t_now):
        fld = WaveField(t=t_now, r_grid=r, u=u.copy(), ut=-v.copy())
        snapshots.append(fld)
        if track_rate:
            try:
                lam = extract_lambda(fld)
            except ContractViolation:
                return True
            rate_t.append(t_now)
            rate_lam.append(lam)
            if lam * dr > under_resolution_factor:
                info["truncated"] = True
                info["reason"] = "under-resolved: lambda*dr exceeded threshold"
                return False
        return True

    s_now = 0.0
    s_final = t0 - t_end
    acc = _acceleration(u, r, dr)
    next_snap = want.pop(0) if want else None
    ok = True
    while s_now < s_final - 1e-14 and ok:
        step = min(dt, s_final - s_now)
        v_half = v + 0.5 * step * acc
        u_new = u + step * v_half
        # one-way outgoing update of the deviation at the boundary cell
        w_b, w_bm = u[-1] - u_ref_b, u[-2] - u_ref_bm
        u_new[-1] = u[-1] + step * (
            -(w_b - w_bm) / dr - w_b / (2.0 * r[-1])
        )
        acc_new = _acceleration(u_new, r, dr)
        v = v_half + 0.5 * step * acc_new
        v[-1] = (u_new[-1] - u[-1]) / step
        u, acc = u_new, acc_new
        s_now += step
        info["steps"] += 1
        if not np.all(np.isfinite(u)):
            info["truncated"] = True
            info["reason"] = "non-finite field (collapse beyond resolution)"
            u = snapshots[-1].u if snapshots else field.u
            break
        while next_snap is not None and t0 - s_now <= next_snap + 1e-14:
            ok = record(t0 - s_now)
            next_snap = want.pop(0) if want else None
            if not ok or info["truncated"]:
                ok = False
                break
    info["rate_series"] = RateSeries(
        t=np.asarray(rate_t), lam=np.asarray(rate_lam)
    ) if rate_t else None
    return snapshots, info


def extract_lambda(field: WaveField):
    """1/r* from the first upward crossing of u through pi/2."""
    u = field.u
    r = field.r_grid
    target = np.pi / 2.0
    if u[0] >= target:
        raise ContractViolation("profile concentrated below the first grid cell")
    idx = np.nonzero((u[:-1] < target) & (u[1:] >= target))[0]
    if idx.size == 0:
        raise ContractViolation("field never crosses pi/2: profile not concentrated")
    i = idx[0]
    frac = (target - u[i]) / (u[i + 1] - u[i])
    r_star = r[i] + frac * (r[i + 1] - r[i])
    return 1.0 / r_star


@dataclass
class RateSeries:
    """Concentration scale samples (t decreasing along the run)."""

    t: np.ndarray
    lam: np.ndarray
    fit: dict = field(default_factory=dict)


def rate_fit(series: RateSeries):
    """Least squares of log lam against log t: lam ~ A t^(-p)."""
    t = np.asarray(series.t, dtype=float)
    lam = np.asarray(series.lam, dtype=float)
    if t.size < 8:
        raise ContractViolation(f"need at least 8 samples, got {t.size}")
    span = t.max() / t.min()
    if span < 4.0:
        raise ContractViolation(f"need a factor 4 span in t, got {span:.2f}")
    basis = np.column_stack([-np.log(t), np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(basis, np.log(lam), rcond=None)
    p, log_a = float(coef[0]), float(coef[1])
    resid = float(np.sqrt(np.mean((basis @ coef - np.log(lam)) ** 2)))
    series.fit.update({"p": p, "A": float(np.exp(log_a)), "residual": resid})
    return p, float(np.exp(log_a)), resid


def local_error_energy(field: WaveField, lambda_est, rate_p=None,
                       cone_radius_factor=1.0):
    """Reduced energy of the error u - Q(lambda_est r) inside the cone.

    The time derivative of the moving profile uses the fitted rate:
    d_t Q(lambda(t) r) = -(p/t) R Q'(R); rate_p defaults to the
    instantaneous value implied by lambda_est = t^-p.
    """
    if lambda_est <= 1.0 / field.t:
        raise ContractViolation("profile not concentrated inside the cone")
    r = field.r_grid
    mask = r < cone_radius_factor * field.t
    r = r[mask]
    R = lambda_est * r
    if rate_p is None:
        rate_p = np.log(lambda_est) / np.log(1.0 / field.t)
    eps = field.u[mask] - ground_state(R)
    profile_dt = -(rate_p / field.t) * R * 2.0 / (1.0 + R**2)
    eps_t = field.ut[mask] - profile_dt
    return reduced_energy(r, eps, eps_t)
