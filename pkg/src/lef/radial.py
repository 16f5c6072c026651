"""Radial Lane-Emden solver on balls and annuli, plus explicit profiles.

The ODE u'' + u'/r + |u|^{p-1} u = 0 is integrated in the log-radius
variable t = log r, where it becomes u_tt = -e^{2t} |u|^{p-1} u.  This is
essential at large p: the positive ball solution normalized to u(0) = 1
has its first zero at r ~ e^{p/4}, far outside any fixed interval, while
in t the solution is uniformly smooth.  Energies are also natural there:

    integral u'(r)^2 r dr = integral u_t(t)^2 dt.

Profiles are sampled geometrically in r (uniformly in t), which resolves
the concentration layers both on the ball (near r = 0) and on annuli with
tiny inner radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.special import logsumexp

from .energy import EnergyReport

ENDPOINT_TOL = 1e-10
AMPLITUDE_EXPONENT_GUARD = 600.0  # reject alpha * p beyond this


class RadialSolveError(RuntimeError):
    """Shooting/integration failure with diagnostics."""


@dataclass
class RadialProfile:
    """Sampled radial function with derivative on [r_in, r_out].

    ``segments`` lists index ranges of smooth pieces (quadrature is done
    per piece; piecewise-defined profiles have a derivative jump at the
    break point).
    """

    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    r_in: float
    r_out: float
    p: float
    segments: tuple[tuple[int, int], ...] = field(default=None)  # type: ignore

    def __post_init__(self):
        if self.segments is None:
            self.segments = ((0, len(self.r)),)
        self._interp = None

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.u)))

    def __call__(self, r) -> np.ndarray:
        """Interpolated values; zero outside [r_in, r_out]."""
        if self._interp is None:
            # piecewise profiles repeat the break radius at segment joints
            keep = np.concatenate([[True], np.diff(self.r) > 0.0])
            self._interp = PchipInterpolator(self.r[keep], self.u[keep],
                                             extrapolate=False)
        r = np.asarray(r, dtype=float)
        out = self._interp(r)
        return np.nan_to_num(out, nan=0.0)

    def scaled(self, lam: float) -> "RadialProfile":
        """Similarity rescaling u_lam(r) = lam^{2/(p-1)} u(lam r)."""
        amp = lam ** (2.0 / (self.p - 1.0))
        return RadialProfile(self.r / lam, amp * self.u, amp * lam * self.du,
                             self.r_in / lam, self.r_out / lam, self.p,
                             self.segments)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def _log_quadrature_lp1(profile: RadialProfile, p: float) -> float:
    """2 pi * integral |u|^{p+1} r dr, accumulated in the log domain."""
    total_parts = []
    for a, b in profile.segments:
        r, u = profile.r[a:b], np.abs(profile.u[a:b])
        nz = u > 0.0
        if nz.sum() < 3:
            continue
        # trapezoid weights on the sample grid
        w = np.zeros_like(r)
        w[1:] += 0.5 * np.diff(r)
        w[:-1] += 0.5 * np.diff(r)
        good = nz & (w > 0) & (r > 0)
        logs = (p + 1.0) * np.log(u[good]) + np.log(r[good] * w[good])
        total_parts.append(logsumexp(logs))
    if not total_parts:
        return 0.0
    return float(2.0 * math.pi * np.exp(logsumexp(np.array(total_parts))))


def radial_energy(profile: RadialProfile, p: float | None = None) -> EnergyReport:
    """Energy report from 1D quadrature (Simpson per smooth segment)."""
    if p is None:
        p = profile.p
    grad = 0.0
    lp1_direct = 0.0
    overflow = False
    sup = profile.sup
    for a, b in profile.segments:
        r, u, du = profile.r[a:b], profile.u[a:b], profile.du[a:b]
        if len(r) < 3:
            continue
        grad += 2.0 * math.pi * simpson(du * du * r, x=r)
        if sup > 0 and (p + 1.0) * math.log(max(sup, 1e-300)) < 600.0:
            lp1_direct += 2.0 * math.pi * simpson(np.abs(u) ** (p + 1.0) * r, x=r)
        else:
            overflow = True
    lp1 = _log_quadrature_lp1(profile, p) if overflow else lp1_direct
    return EnergyReport.from_norms(grad, lp1, p)


# ---------------------------------------------------------------------------
# ball solution
# ---------------------------------------------------------------------------

def _make_rhs(p: float):
    """RHS of u_tt = -e^{2t} |u|^{p-1} u, overflow-guarded on trial steps."""
    def rhs(t, y):
        u, ut = y
        if u == 0.0:
            return [ut, 0.0]
        log_mag = 2.0 * t + p * math.log(abs(u))
        force = math.copysign(math.exp(min(log_mag, 700.0)), u)
        return [ut, -force]
    return rhs


def _integrate_ball_log(p: float, rtol: float = 1e-11):
    """Integrate from u(0)=1 in t = log r up to the first zero.

    Returns (solution_bunch, t_start, t_zero).
    """
    # series start: u = 1 - e^{2t}/4 + O(e^{4t}); valid where e^{2t} tiny
    t_start = 0.5 * math.log(1.0 / max(p, 1.0)) - 8.0

    rhs = _make_rhs(p)

    def hit_zero(t, y):
        return y[0]
    hit_zero.terminal = True
    hit_zero.direction = -1

    e2t = math.exp(2.0 * t_start)
    y0 = [1.0 - e2t / 4.0, -e2t / 2.0]
    t_end = t_start + max(40.0, 0.3 * p + 40.0)
    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve_ivp(rhs, (t_start, t_end), y0, method="DOP853",
                        rtol=rtol, atol=1e-14, events=hit_zero,
                        dense_output=True)
    if not sol.t_events[0].size:
        raise RadialSolveError(
            f"no zero of the ball solution found for p={p} "
            f"(integrated to log r = {t_end:.1f})")
    return sol, t_start, float(sol.t_events[0][0])


def solve_ball(p: float, R: float = 1.0, n_samples: int = 4096,
               rtol: float = 1e-11) -> RadialProfile:
    """Positive radial solution on the ball of radius R with u(R) = 0.

    Integrates from the center with unit amplitude, locates the first zero
    r0 and applies the exact similarity rescaling with lambda = r0 / R.
    """
    if p <= 1:
        raise ValueError("need p > 1")
    if R <= 0:
        raise ValueError("need R > 0")
    sol, t_start, t_zero = _integrate_ball_log(p, rtol)
    lam = math.exp(t_zero) / R  # can be huge; amplitude below stays finite
    amp = lam ** (2.0 / (p - 1.0))

    t_s = np.linspace(t_start, t_zero, n_samples - 1)
    y = sol.sol(t_s)
    u_t, ut_t = y[0], y[1]
    u_t[-1] = 0.0  # exact Dirichlet endpoint
    r_unscaled = np.exp(t_s)

    r = np.empty(n_samples)
    u = np.empty(n_samples)
    du = np.empty(n_samples)
    r[0], u[0], du[0] = 0.0, amp, 0.0
    r[1:] = r_unscaled / lam
    u[1:] = amp * u_t
    du[1:] = amp * ut_t / (r_unscaled / lam)
    r[-1] = R
    return RadialProfile(r, u, du, 0.0, R, p)


def ball_energy(p: float, R: float = 1.0) -> EnergyReport:
    """Energy report of the positive ball solution."""
    return radial_energy(solve_ball(p, R), p)


def build_ball_solution_scaled(p: float, alpha: float,
                               n_samples: int = 4096) -> RadialProfile:
    """u_{p,2,alpha}: the ball solution rescaled to radius e^{-alpha p}.

    Exact similarity rescaling of solve_ball(p, 1); no re-integration.
    """
    if alpha < 0:
        raise ValueError("need alpha >= 0")
    if alpha * p > AMPLITUDE_EXPONENT_GUARD:
        raise ValueError(f"alpha*p = {alpha * p:.1f} too large; the scaled "
                         "amplitude exceeds the overflow guard")
    w = solve_ball(p, 1.0, n_samples=n_samples)
    return w.scaled(math.exp(alpha * p))


def ball_scaled_energy(p: float, alpha: float) -> EnergyReport:
    """Energy of u_{p,2,alpha} via the exact scaling identity.

    ||grad u_{p,2,alpha}||^2 = e^{4 alpha p/(p-1)} ||grad w_p||^2, and the
    L^{p+1} power scales identically (the profile solves the equation, so
    both norms agree up to the solver's Nehari residual).
    """
    base = ball_energy(p)
    factor = math.exp(4.0 * alpha * p / (p - 1.0))
    return EnergyReport.from_norms(base.grad_norm_sq * factor,
                                   base.lp1_norm_pow * factor, p)


# ---------------------------------------------------------------------------
# annulus solution (shooting)
# ---------------------------------------------------------------------------

def _shoot_annulus(p: float, t_a: float, t_b: float, slope: float,
                   rtol: float, dense: bool = False):
    """Integrate in t from (0, slope) at t_a; returns the solution bunch."""
    rhs = _make_rhs(p)

    def hit_zero(t, y):
        return y[0]
    hit_zero.terminal = True
    hit_zero.direction = -1

    # steep trial shots overflow |u|^{p-1} before hitting the zero event;
    # the integrator rejects those steps on its own
    with np.errstate(over="ignore", invalid="ignore"):
        return solve_ivp(rhs, (t_a, t_b), [0.0, slope], method="DOP853",
                         rtol=rtol, atol=1e-14, events=hit_zero,
                         dense_output=dense,
                         first_step=min(1e-3, (t_b - t_a) / 100))


def solve_annulus(p: float, a: float, b: float, n_samples: int = 4096,
                  rtol: float = 1e-11, max_expand: int = 200) -> RadialProfile:
    """Positive radial solution on the annulus a < r < b, zero at both ends.

    Bisection on the initial slope: too-steep shots hit an interior zero
    before r = b, too-shallow shots arrive at b with u(b) > 0.
    """
    if p <= 1:
        raise ValueError("need p > 1")
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    t_a, t_b = math.log(a), math.log(b)

    def classify(slope):
        sol = _shoot_annulus(p, t_a, t_b, slope, rtol)
        interior_zero = bool(sol.t_events[0].size) and sol.t_events[0][0] < t_b - 1e-13
        u_end = 0.0 if interior_zero else float(sol.y[0, -1])
        return interior_zero, u_end, sol

    # bracket: expand/contract by factor 2 from slope 1
    s_low = s_high = None
    s = 1.0
    hi, u_end, _ = classify(s)
    if hi:
        s_high = s
        for _ in range(max_expand):
            s /= 2.0
            hi, u_end, _ = classify(s)
            if not hi:
                s_low = s
                break
            s_high = s
    else:
        s_low = s
        for _ in range(max_expand):
            s *= 2.0
            hi, u_end, _ = classify(s)
            if hi:
                s_high = s
                break
            s_low = s
    if s_low is None or s_high is None:
        raise RadialSolveError(
            f"slope bracket failure for annulus p={p}, a={a}, b={b}")

    best = None
    for _ in range(200):
        s_mid = 0.5 * (s_low + s_high)
        hi, u_end, sol = classify(s_mid)
        if hi:
            s_high = s_mid
        else:
            s_low = s_mid
            sup = float(np.max(np.abs(sol.y[0])))
            best = (s_mid, u_end, sup)
            if u_end < ENDPOINT_TOL * sup:
                break
    if best is None:
        raise RadialSolveError("slope bisection did not produce an "
                               "admissible shot")

    s_final = best[0]
    sol = _shoot_annulus(p, t_a, t_b, s_final, rtol, dense=True)
    t_s = np.linspace(t_a, t_b, n_samples)
    y = sol.sol(t_s)
    u, ut = y[0].copy(), y[1]
    u[0] = 0.0
    u[-1] = 0.0  # snap residual endpoint value (< ENDPOINT_TOL * sup)
    r = np.exp(t_s)
    return RadialProfile(r, u, ut / r, a, b, p)


# ---------------------------------------------------------------------------
# explicit logarithmic test profile
# ---------------------------------------------------------------------------

def omega_test_function(p: float, alpha: float, b: float,
                        n_samples: int = 4096) -> RadialProfile:
    """Piecewise-logarithmic test profile on e^{-alpha p} < r < b.

    Rises as log r from the inner edge, falls as log(b/r) to the outer
    edge, normalized to peak value 1 at r = sqrt(b) e^{-alpha p / 2}; its
    Dirichlet energy is exactly 8 pi / (alpha p + log b).
    """
    if alpha <= 0 or b <= 0:
        raise ValueError("need alpha > 0 and b > 0")
    r_in = math.exp(-alpha * p)
    if r_in >= b:
        raise ValueError("domain ordering violated: e^{-alpha p} >= b")
    c = alpha * p + math.log(b)
    t_in, t_out = -alpha * p, math.log(b)
    t_break = 0.5 * (t_in + t_out)  # log of sqrt(b) e^{-alpha p/2}

    n1 = n_samples // 2
    n2 = n_samples - n1
    t1 = np.linspace(t_in, t_break, n1)
    t2 = np.linspace(t_break, t_out, n2)
    r1, r2 = np.exp(t1), np.exp(t2)
    u1 = 2.0 * (alpha * p + t1) / c
    u2 = 2.0 * (t_out - t2) / c
    du1 = 2.0 / (c * r1)
    du2 = -2.0 / (c * r2)

    r = np.concatenate([r1, r2])
    u = np.concatenate([u1, u2])
    du = np.concatenate([du1, du2])
    u[0] = 0.0
    u[-1] = 0.0
    return RadialProfile(r, u, du, r_in, b, p,
                         segments=((0, n1), (n1, n_samples)))


def optimal_alpha(p: float, bounds: tuple = (0.05, 0.9),
                  xatol: float = 1e-5) -> float:
    """Alpha minimizing the measured two-profile energy sum at this p.

    Minimizes p E_p(annulus solution on (e^{-alpha p}, 1)) plus
    p E_p(scaled ball solution on B_{e^{-alpha p}}).  As p grows the
    minimizer approaches the stationary point of the limit profile
    e^{2 alpha - 1}/alpha + e^{4 alpha}; at moderate p the two differ
    enough to matter for energy budgets.
    """
    from scipy.optimize import minimize_scalar

    def total(alpha):
        ann = solve_annulus(p, math.exp(-alpha * p), 1.0, n_samples=2048)
        return p * (radial_energy(ann, p).energy
                    + ball_scaled_energy(p, alpha).energy)

    res = minimize_scalar(total, bounds=bounds, method="bounded",
                          options={"xatol": xatol})
    if not res.success:
        raise RadialSolveError(f"alpha optimization failed: {res.message}")
    return float(res.x)


def omega_energy_closed_form(p: float, alpha: float, b: float) -> float:
    """Exact Dirichlet energy 8 pi / (alpha p + log b) of the test profile."""
    return 8.0 * math.pi / (alpha * p + math.log(b))
