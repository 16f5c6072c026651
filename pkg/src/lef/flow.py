"""Semilinear heat flow: IMEX stepping, classification, threshold search.

One step solves (W + dt K) v_{n+1} = W (v_n + dt |v_n|^{p-1} v_n): implicit
backward-Euler diffusion (sparse LU, factorizations cached per step size on
the grid), explicit reaction.  Steps that would raise the energy beyond
roundoff slack are rejected and retried with a smaller dt, so the discrete
energy is a Lyapunov functional by construction.

Trajectories are classified as decay to zero, blow-up, convergence to a
steady state (small elliptic residual) or time-out.  Negative energy is
used as an early blow-up certificate: the energy decreases along the flow
and no globally decaying trajectory can have E_p < 0.

Threshold initial data on the boundary of the attraction domain of zero
are located by bisection along rays of initial data, with an outer scan
over the mixing angle in the 2D space spanned by two disjointly supported
profiles.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import energy as energy_mod
from . import nodal as nodal_mod
from . import spectrum as spectrum_mod
from .geometry import SymmetryGroup


class Classification(str, Enum):
    DECAY = "DecayToZero"
    BLOWUP = "Blowup"
    STEADY = "ConvergedSteady"
    MAXTIME = "MaxTimeReached"


@dataclass
class ScalarField:
    """Grid field with implicit zero Dirichlet boundary values."""

    grid: object
    values: np.ndarray
    time_stamp: float = 0.0

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def __neg__(self) -> "ScalarField":
        return dataclasses.replace(self, values=-self.values)

    def scaled(self, lam: float) -> "ScalarField":
        return dataclasses.replace(self, values=lam * self.values)


def field_from_radial(grid, profile, sign: float = 1.0,
                      time_stamp: float = 0.0) -> ScalarField:
    """Sample a radial profile onto a grid (zero outside its support)."""
    r = np.hypot(grid.xy[:, 0], grid.xy[:, 1])
    return ScalarField(grid, sign * profile(r), time_stamp)


@dataclass(frozen=True)
class FlowConfig:
    dt_max: float = 0.05
    c_stab: float = 0.2            # explicit-reaction stability constant
    t_max: float = 50.0
    decay_factor: float = 1e-6     # decay threshold, relative to initial sup
    blowup_factor: float = 1e4     # blow-up threshold, relative to initial sup
    residual_tol: float = 1e-6     # ConvergedSteady elliptic residual
    dt_min: float = 1e-12
    project_every: int = 10        # symmetry projection cadence (steps)
    residual_every: int = 20       # elliptic-residual check cadence (steps)
    record_nodal_every: int = 0    # 0: off; else nodal count cadence (steps)
    energy_slack: float = 1e-10    # relative per-step energy increase slack


@dataclass
class Trajectory:
    times: np.ndarray
    energies: np.ndarray
    sup_norms: np.ndarray
    vdot_sq: np.ndarray            # ||(v_{n+1}-v_n)/dt||_2^2 per accepted step
    dts: np.ndarray
    classification: Classification
    final: ScalarField
    final_residual: float
    nodal_counts: list = field(default_factory=list)  # (t, count) samples
    # least-residual snapshot seen along the run (hovering near a saddle)
    best_snapshot: ScalarField | None = None
    best_residual: float = math.inf

    @property
    def t_final(self) -> float:
        return float(self.times[-1])


def _lu_for(grid, dt: float):
    cache = getattr(grid, "_flow_lu", None)
    if cache is None:
        cache = {}
        grid._flow_lu = cache
    key = float(dt)
    if key not in cache:
        mat = (sp.diags(grid.weights) + dt * grid.stiffness).tocsc()
        cache[key] = spla.splu(mat)
    return cache[key]


def step(v: ScalarField, p: float, dt: float, *,
         reaction: bool = True) -> ScalarField:
    """One IMEX step; ``reaction=False`` gives the pure heat step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = v.grid
    rhs = v.values
    if reaction:
        rhs = rhs + dt * np.abs(v.values) ** (p - 1.0) * v.values
    lu = _lu_for(grid, dt)
    out = lu.solve(grid.weights * rhs)
    return ScalarField(grid, out, v.time_stamp + dt)


def _energy_of(grid, values: np.ndarray, p: float) -> float:
    grad = grid.dirichlet_form(values)
    lp1 = energy_mod.lp1_norm_pow(grid, values, p)
    return 0.5 * grad - lp1 / (p + 1.0)


def _quantized_dt(dt_max: float, dt_target: float, extra_halvings: int) -> float:
    k = max(0, math.ceil(math.log2(max(dt_max / max(dt_target, 1e-300), 1.0))))
    return dt_max / 2.0 ** (k + extra_halvings)


def evolve(v0: ScalarField, p: float, config: FlowConfig = FlowConfig(),
           group: SymmetryGroup | None = None) -> Trajectory:
    """Time-step the flow from v0 until classification or t_max."""
    grid = v0.grid
    v = np.asarray(v0.values, dtype=float).copy()
    sup0 = float(np.max(np.abs(v)))
    if sup0 == 0.0:
        zero = ScalarField(grid, v, v0.time_stamp)
        return Trajectory(np.array([0.0]), np.array([0.0]), np.array([0.0]),
                          np.array([]), np.array([]), Classification.STEADY,
                          zero, 0.0)
    decay_at = config.decay_factor * sup0
    blowup_at = config.blowup_factor * sup0

    E = _energy_of(grid, v, p)
    energy_scale = max(abs(E), grid.dirichlet_form(v))
    times, energies, sups = [0.0], [E], [sup0]
    vdots, dts, nodal_counts = [], [], []
    t = 0.0
    n_step = 0
    extra = 0
    cls = None
    residual = math.inf
    best_snapshot = None
    best_residual = math.inf

    def residual_of(values):
        return spectrum_mod.elliptic_residual(ScalarField(grid, values), p)

    if E < -1e-9 * max(energy_scale, 1.0):
        cls = Classification.BLOWUP

    while cls is None:
        sup = float(np.max(np.abs(v)))
        dt_target = min(config.dt_max,
                        config.c_stab / max(p * sup ** (p - 1.0), 1e-300))
        dt = _quantized_dt(config.dt_max, dt_target, extra)
        if dt < config.dt_min:
            cls = Classification.BLOWUP  # step-size underflow
            break
        nxt = step(ScalarField(grid, v), p, dt).values
        if not np.all(np.isfinite(nxt)):
            cls = Classification.BLOWUP
            break
        E_new = _energy_of(grid, nxt, p)
        if E_new > E + config.energy_slack * abs(E):
            extra += 1
            continue
        if extra > 0 and n_step % 16 == 15:
            extra -= 1

        vdots.append(float(grid.weights @ ((nxt - v) / dt) ** 2))
        dts.append(dt)
        v = nxt
        t += dt
        n_step += 1
        E = E_new
        if group is not None and n_step % config.project_every == 0:
            v = grid.symmetrize(v, group)
            E = _energy_of(grid, v, p)
        times.append(t)
        energies.append(E)
        sup = float(np.max(np.abs(v)))
        sups.append(sup)

        if config.record_nodal_every and n_step % config.record_nodal_every == 0:
            dec = nodal_mod.decompose(ScalarField(grid, v))
            nodal_counts.append((t, dec.n_domains))

        if sup < decay_at:
            cls = Classification.DECAY
        elif sup > blowup_at:
            cls = Classification.BLOWUP
        elif E < -1e-9 * max(energy_scale, 1.0):
            cls = Classification.BLOWUP
        elif n_step % config.residual_every == 0:
            residual = residual_of(v)
            if residual < best_residual and sup > 10.0 * decay_at:
                best_residual = residual
                best_snapshot = ScalarField(grid, v.copy(), v0.time_stamp + t)
            if residual < config.residual_tol and sup > 10.0 * decay_at:
                cls = Classification.STEADY
        if cls is None and t >= config.t_max:
            cls = Classification.MAXTIME

    if not math.isfinite(residual):
        residual = residual_of(v) if np.all(np.isfinite(v)) else math.inf
    final = ScalarField(grid, v, v0.time_stamp + t)
    if cls == Classification.STEADY and residual < best_residual:
        best_snapshot, best_residual = final, residual
    return Trajectory(np.array(times), np.array(energies), np.array(sups),
                      np.array(vdots), np.array(dts), cls, final, residual,
                      nodal_counts, best_snapshot, best_residual)


# ---------------------------------------------------------------------------
# threshold bisection
# ---------------------------------------------------------------------------

class BracketError(RuntimeError):
    """No decay/blow-up bracket exists along the ray."""


@dataclass
class ThresholdResult:
    lambda_star: float
    v0: ScalarField
    omega_candidate: ScalarField | None
    bisection_width: float
    residual: float
    sign_changing: bool
    probes: list  # (lambda, classification) log
    # sign of the blow-up closest to the threshold (+1/-1, 0 if none seen)
    blowup_sign: int = 0
    # Newton applied to the threshold datum itself; near a transition angle
    # the datum sits close to the stable manifold of the separating saddle
    datum_candidate: ScalarField | None = None
    datum_residual: float = math.inf

    def best_sign_changing(self) -> tuple[ScalarField | None, float]:
        out, res = None, math.inf
        for cand, r in ((self.omega_candidate, self.residual),
                        (self.datum_candidate, self.datum_residual)):
            if cand is not None and r < res and _is_sign_changing(cand.values):
                out, res = cand, r
        return out, res

    def to_dict(self) -> dict:
        return {"lambda_star": self.lambda_star,
                "bisection_width": self.bisection_width,
                "residual": self.residual,
                "sign_changing": self.sign_changing,
                "blowup_sign": self.blowup_sign,
                "datum_residual": (None if math.isinf(self.datum_residual)
                                   else self.datum_residual),
                "probes": [(lam, c.value) for lam, c in self.probes]}


def _is_sign_changing(values: np.ndarray, rel_tol: float = 1e-3) -> bool:
    sup = float(np.max(np.abs(values))) if values.size else 0.0
    if sup == 0.0:
        return False
    t = rel_tol * sup
    return bool(np.min(values) < -t and np.max(values) > t)


def threshold_bisect(direction: ScalarField, p: float,
                     config: FlowConfig = FlowConfig(),
                     group: SymmetryGroup | None = None,
                     lambda_init: float = 1.0,
                     width_tol: float = 1e-3,
                     polish: bool = True,
                     max_bracket: int = 60) -> ThresholdResult:
    """Bisect the ray {lam * direction} for the decay/blow-up threshold.

    MaxTimeReached probes count toward the decay side (their energy stayed
    nonnegative).  If a probe converges to a steady state the bisection
    stops there: that field is already the omega-limit candidate.
    """
    if direction.sup == 0.0:
        raise ValueError("direction must be nonzero")

    probes: list = []
    best = {"field": None, "res": math.inf}
    blow = {"lam": math.inf, "sign": 0}

    def classify(lam: float) -> str:
        traj = evolve(direction.scaled(lam), p, config, group)
        probes.append((lam, traj.classification))
        if traj.best_snapshot is not None and traj.best_residual < best["res"]:
            best["field"], best["res"] = traj.best_snapshot, traj.best_residual
        if traj.classification == Classification.BLOWUP:
            if lam < blow["lam"]:
                v = traj.final.values
                mask = np.isfinite(v)
                if np.any(mask):
                    vv = np.where(mask, v, 0.0)
                    blow["lam"] = lam
                    blow["sign"] = int(np.sign(vv[np.argmax(np.abs(vv))]))
            return "blow"
        if traj.classification == Classification.STEADY:
            return "steady"
        return "decay"

    lam_lo = lam_hi = None
    lam = lambda_init
    out = classify(lam)
    if out == "blow":
        lam_hi = lam
        for _ in range(max_bracket):
            lam /= 2.0
            out = classify(lam)
            if out != "blow":
                lam_lo = lam
                break
            lam_hi = lam
    else:
        lam_lo = lam
        if out != "steady":
            for _ in range(max_bracket):
                lam *= 2.0
                out = classify(lam)
                if out == "blow":
                    lam_hi = lam
                    break
                lam_lo = lam
    if out != "steady" and (lam_lo is None or lam_hi is None):
        raise BracketError(
            f"no decay/blow-up bracket found along the ray; probes: "
            f"{[(l, c.value) for l, c in probes]}")

    if out != "steady":
        while (lam_hi - lam_lo) / (0.5 * (lam_hi + lam_lo)) > width_tol:
            mid = 0.5 * (lam_lo + lam_hi)
            res = classify(mid)
            if res == "steady":
                lam_lo = lam_hi = mid
                break
            if res == "blow":
                lam_hi = mid
            else:
                lam_lo = mid

    lam_star = 0.5 * (lam_lo + lam_hi) if lam_hi is not None else lam_lo
    width = ((lam_hi - lam_lo) / (2.0 * lam_star)
             if lam_hi is not None and lam_hi > lam_lo else width_tol)

    def _polish(fld: ScalarField) -> tuple[ScalarField, float]:
        polished, pres = spectrum_mod.newton_polish(fld, p)
        if group is not None and pres < 1e-6:
            sym = fld.grid.symmetrize(polished.values, group)
            polished = dataclasses.replace(polished, values=sym)
            pres = spectrum_mod.elliptic_residual(polished, p)
        return polished, pres

    v0 = direction.scaled(lam_star)
    candidate = None
    residual = math.inf
    if best["field"] is not None:
        candidate = best["field"]
        residual = best["res"]
        if polish and candidate.sup > 0:
            polished, pres = _polish(candidate)
            if pres < residual:
                candidate, residual = polished, pres

    datum_candidate = None
    datum_residual = math.inf
    if polish:
        polished, pres = _polish(v0)
        if pres < 1e-6 and polished.sup > 0:
            datum_candidate, datum_residual = polished, pres

    return ThresholdResult(lam_star, v0, candidate,
                           width,
                           residual,
                           candidate is not None
                           and _is_sign_changing(candidate.values),
                           probes, blow["sign"],
                           datum_candidate, datum_residual)


# ---------------------------------------------------------------------------
# ray scan over the 2D subspace span(u1, u2)
# ---------------------------------------------------------------------------

@dataclass
class RayScanResult:
    best: ThresholdResult | None
    best_theta: float | None
    best_candidate: ScalarField | None
    best_residual: float
    all_results: list  # (theta, ThresholdResult | error string)

    @property
    def success(self) -> bool:
        return self.best_candidate is not None


def _candidate_sign(res: ThresholdResult, residual_tol: float = 1e-6) -> int:
    """+1 / -1 for converged one-signed candidates, else 0.

    Unconverged snapshots (left over from a run that simply decayed) carry
    no usable sign information and must not steer the angle refinement.
    """
    if res.omega_candidate is None or res.omega_candidate.sup == 0.0:
        return 0
    if res.sign_changing or res.residual > residual_tol:
        return 0
    return 1 if float(np.max(res.omega_candidate.values)) > 0 else -1


def _transition_sign(res: ThresholdResult) -> int:
    """Which sign wins just past the threshold of this ray.

    A converged one-signed omega-candidate carries the sign directly;
    otherwise the sign of the blow-up closest to the threshold is used.
    """
    s = _candidate_sign(res)
    return s if s != 0 else res.blowup_sign


def ray_scan(u1: ScalarField, u2: ScalarField, p: float,
             ratios=None, config: FlowConfig = FlowConfig(),
             group: SymmetryGroup | None = None,
             refine: int = 30, **bisect_kw) -> RayScanResult:
    """Threshold-bisect along cos(theta) u1 + sin(theta) u2 per ratio.

    The sign-changing saddle separates angles whose threshold dynamics end
    up positive from those that end up negative, so the scan bisects the
    mixing angle on that sign until a sign-changing candidate appears,
    either as a hovering snapshot or by polishing the threshold datum.
    Returns the sign-changing candidate with the smallest elliptic
    residual; an empty scan is a labeled outcome, not an error.
    """
    overlap = (u1.values != 0.0) & (u2.values != 0.0)
    if np.any(overlap):
        raise ValueError("u1 and u2 must have disjoint supports")
    if ratios is None:
        ratios = np.linspace(0.1, math.pi / 2.0 - 0.1, 7)

    results: list = []

    def run(theta: float) -> ThresholdResult | None:
        vals = math.cos(theta) * u1.values + math.sin(theta) * u2.values
        d = ScalarField(u1.grid, vals)
        try:
            res = threshold_bisect(d, p, config, group, **bisect_kw)
        except BracketError as exc:
            results.append((theta, str(exc)))
            return None
        results.append((theta, res))
        return res

    def found() -> bool:
        return any(isinstance(r, ThresholdResult)
                   and r.best_sign_changing()[0] is not None
                   for _, r in results)

    scan = [(th, run(th)) for th in ratios]

    if not found():
        signed = [(th, _transition_sign(r)) for th, r in scan
                  if r is not None and _transition_sign(r) != 0]
        pair = None
        for (t1, s1), (t2, s2) in zip(signed, signed[1:]):
            if s1 != s2:
                pair = [t1, t2, s1]
                break
        if pair is not None:
            lo, hi, s_lo = pair
            for _ in range(refine):
                mid = 0.5 * (lo + hi)
                r = run(mid)
                if found():
                    break
                s = _transition_sign(r) if r is not None else 0
                if s == 0:
                    break
                if s == s_lo:
                    lo = mid
                else:
                    hi = mid

    best, best_theta = None, None
    best_cand, best_res = None, math.inf
    for th, r in results:
        if not isinstance(r, ThresholdResult):
            continue
        cand, res = r.best_sign_changing()
        if cand is not None and res < best_res:
            best, best_theta, best_cand, best_res = r, th, cand, res
    return RayScanResult(best, best_theta, best_cand, best_res, results)


def refine_transition(u1: ScalarField, u2: ScalarField, p: float,
                      scan: RayScanResult,
                      config: FlowConfig = FlowConfig(),
                      group: SymmetryGroup | None = None,
                      iters: int = 20) -> tuple[ThresholdResult, float] | None:
    """Shrink the scan's sign-flip bracket onto the transition angle.

    Homes in on the flip of the supercritical blow-up sign, whose crossing
    marks where the threshold family passes the sign-changing saddle.  The
    threshold datum there is the energy-consistent initial condition: it
    sits above the saddle in energy, while data on rays away from the
    transition may not.  Returns (threshold result, angle) at the refined
    transition, or None when the scan shows no flip.
    """
    signed = []
    for th, r in sorted(scan.all_results, key=lambda x: x[0]):
        if isinstance(r, ThresholdResult) and r.blowup_sign != 0:
            signed.append((th, r.blowup_sign))
    bracket = None
    for (t1, s1), (t2, s2) in zip(signed, signed[1:]):
        if s1 != s2:
            bracket = [t1, t2, s1]
            break
    if bracket is None:
        return None
    lo, hi, s_lo = bracket
    last = None

    def run(theta):
        vals = math.cos(theta) * u1.values + math.sin(theta) * u2.values
        return threshold_bisect(ScalarField(u1.grid, vals), p, config, group,
                                polish=False)

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        r = run(mid)
        s = r.blowup_sign
        if s == 0:
            break
        last = (r, mid)
        if s == s_lo:
            lo = mid
        else:
            hi = mid
    return last


def select_restart_pair(u: ScalarField,
                        decomposition: "nodal_mod.NodalDecomposition",
                        p: float) -> tuple[ScalarField, ScalarField]:
    """Pick two adjacent opposite-sign nodal domains and Nehari-project them.

    Adjacency means sharing a zero-band component or touching directly.
    Among eligible pairs the one with the largest combined Dirichlet energy
    is kept; returns the (positive, negative) restricted projections.
    """
    if decomposition.n_domains < 3:
        raise ValueError("nothing to restart: need >= 3 nodal domains")

    a, b = decomposition.grid.adjacency().nonzero()
    lab = decomposition.labels
    zl = decomposition.zero_labels
    signs = decomposition.signs

    candidates = set()
    zmap: dict[int, set] = {}
    mask = (zl[a] > 0) & (lab[b] > 0)
    for zc, dom in zip(zl[a][mask], lab[b][mask]):
        zmap.setdefault(int(zc), set()).add(int(dom))
    for doms in zmap.values():
        for d1 in doms:
            for d2 in doms:
                if d1 < d2 and signs[d1 - 1] != signs[d2 - 1]:
                    candidates.add((d1, d2))
    direct = (lab[a] > 0) & (lab[b] > 0) & (lab[a] != lab[b])
    for d1, d2 in zip(lab[a][direct], lab[b][direct]):
        d1, d2 = int(min(d1, d2)), int(max(d1, d2))
        if signs[d1 - 1] != signs[d2 - 1]:
            candidates.add((d1, d2))
    if not candidates:
        raise ValueError("no adjacent opposite-sign nodal domain pair found")

    grads = [decomposition.grid.dirichlet_form(
        nodal_mod.restricted_field(u, decomposition, d).values)
        for d in range(1, decomposition.n_domains + 1)]
    d1, d2 = max(candidates,
                 key=lambda pr: grads[pr[0] - 1] + grads[pr[1] - 1])
    if signs[d1 - 1] < 0:
        d1, d2 = d2, d1
    u1 = nodal_mod.restricted_field(u, decomposition, d1)
    u2 = nodal_mod.restricted_field(u, decomposition, d2)
    u1, _ = energy_mod.nehari_project(u1, p)
    u2, _ = energy_mod.nehari_project(u2, p)
    return u1, u2


def restart_from_nodal_pair(u: ScalarField,
                            decomposition: "nodal_mod.NodalDecomposition",
                            p: float, config: FlowConfig = FlowConfig(),
                            group: SymmetryGroup | None = None,
                            **scan_kw) -> RayScanResult:
    """Restart the threshold search from two opposite-sign nodal domains.

    Restricts u to two adjacent nodal domains of opposite sign, projects
    each restriction onto the Nehari manifold and reruns the ray scan.
    """
    u1, u2 = select_restart_pair(u, decomposition, p)
    return ray_scan(u1, u2, p, config=config, group=group, **scan_kw)
