"""Command line front end: constants, radial sweeps, flows, pipeline, spectra.

Subcommands:
  constants   print the sharp constants and exit 0 iff the chain holds
  radial      CSV sweep of the two-profile energy budget over p
  flow        evolve one configured initial datum, dump the trajectory
  pipeline    end-to-end sign-changing candidate search plus audit
  spectrum    Morse report for a field dump

Configs are JSON (see README).  Field dumps are a single JSON header line
followed by the node values as row-major little-endian float64.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import energy, flow, nodal, radial, spectrum
from .geometry import (CartesianMaskedGrid, DomainSpec, PolarGrid,
                       SymmetryGroup, check_admissible, cyclic, dihedral,
                       squircle_mask)


def _np_default(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, default=_np_default)


# ---------------------------------------------------------------------------
# field dumps
# ---------------------------------------------------------------------------

def _domain_config_of(grid) -> dict:
    """Serializable recipe of the grid's domain, for dump round-trips."""
    cfg = getattr(grid, "_domain_config", None)
    if cfg is not None:
        return cfg
    dom = grid.domain
    if dom.shape == "disk":
        return {"type": "disk", "radius": dom.radius}
    if dom.shape == "annulus":
        return {"type": "annulus", "a": dom.inner_radius, "b": dom.radius}
    cfg = getattr(dom, "_config", None)
    if cfg is not None:
        return cfg
    raise TypeError("mask domain carries no serializable recipe; build the "
                    "grid from a config dict or use a named mask factory")


def dump_field(path, field: flow.ScalarField, p: float | None = None,
               extra: dict | None = None) -> None:
    """Write a field as one JSON header line plus little-endian float64."""
    grid = field.grid
    header = {"count": int(field.values.size), "dtype": "<f8"}
    if p is not None:
        header["p"] = p
    if isinstance(grid, PolarGrid):
        header["grid"] = {"type": "polar", "n_r": grid.n_r,
                          "n_theta": grid.n_theta, "r_in": grid.r_in,
                          "r_out": grid.r_out}
    elif isinstance(grid, CartesianMaskedGrid):
        header["grid"] = {"type": "cartesian", "n": grid.n,
                          "extent": grid.extent,
                          "domain": _domain_config_of(grid)}
    else:
        raise TypeError(f"cannot serialize grid of type {type(grid)}")
    if extra:
        header.update(extra)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(field.values.astype("<f8").tobytes())


def load_field(path) -> tuple[flow.ScalarField, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != header["count"]:
        raise ValueError(f"{path}: expected {header['count']} values, "
                         f"found {data.size}")
    gspec = header["grid"]
    if gspec["type"] == "polar":
        grid = PolarGrid(gspec["n_r"], gspec["n_theta"],
                         r_out=gspec["r_out"], r_in=gspec["r_in"])
    elif gspec["type"] == "cartesian":
        domain = _build_domain(gspec["domain"])
        grid = _cartesian_grid(domain, gspec["n"], gspec["extent"],
                               gspec["domain"])
    else:
        raise ValueError(f"unknown grid type {gspec['type']!r}")
    return flow.ScalarField(grid, np.array(data)), header


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def _build_domain(spec: dict) -> DomainSpec:
    kind = spec.get("type", "disk")
    if kind == "disk":
        return DomainSpec.disk(spec.get("radius", 1.0))
    if kind == "annulus":
        return DomainSpec.annulus(spec["a"], spec["b"])
    if kind == "squircle":
        return squircle_mask(spec.get("radius", 1.0),
                             spec.get("power", 4.0))
    raise ValueError(f"unknown domain type {kind!r}")


def _cartesian_grid(domain, n, extent, domain_spec):
    grid = CartesianMaskedGrid(domain, n, extent=extent)
    grid._domain_config = domain_spec  # kept for round-tripping dumps
    return grid


def _build_grid(config: dict):
    dom_spec = config.get("domain", {"type": "disk", "radius": 1.0})
    domain = _build_domain(dom_spec)
    gspec = config.get("grid", {"type": "polar", "n_r": 96, "n_theta": 32})
    if gspec["type"] == "polar":
        if dom_spec.get("type", "disk") == "annulus":
            return PolarGrid(gspec["n_r"], gspec["n_theta"],
                             r_in=dom_spec["a"], r_out=dom_spec["b"]), domain
        return PolarGrid(gspec["n_r"], gspec["n_theta"],
                         r_out=dom_spec.get("radius", 1.0)), domain
    if gspec["type"] == "cartesian":
        return _cartesian_grid(domain, gspec["n"], gspec.get("extent"),
                               dom_spec), domain
    raise ValueError(f"unknown grid type {gspec['type']!r}")


def _build_group(spec: dict | None) -> SymmetryGroup | None:
    if spec is None:
        return None
    if spec["kind"] == "cyclic":
        return cyclic(spec["order"])
    if spec["kind"] == "dihedral":
        return dihedral(spec["order"], spec.get("axis_angle", 0.0))
    raise ValueError(f"unknown group kind {spec['kind']!r}")


def _flow_config(spec: dict | None) -> flow.FlowConfig:
    return flow.FlowConfig(**(spec or {}))


def _resolve_alpha(alpha, p: float) -> float:
    """Numeric alpha, or a named policy: 'optimal' minimizes the measured
    two-profile sum at this p, 'asymptotic' uses the limit optimizer."""
    if alpha in (None, "optimal"):
        return radial.optimal_alpha(p)
    if alpha == "asymptotic":
        return energy.minimize_f().alpha_bar
    return float(alpha)


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

def run_constants(args) -> int:
    opt = energy.minimize_f()
    f_fifth = energy.f_alpha(0.2)
    rows = [
        ("4*pi*e", energy.FOUR_PI_E, "limit of inf_N p E_p", "PAPER"),
        ("8*pi*e", 2 * energy.FOUR_PI_E, "ball energy limit", "PAPER"),
        ("alpha_bar", opt.alpha_bar, "argmin of e^(2a-1)/a + e^(4a)",
         "DERIVED"),
        ("f(alpha_bar)", opt.f_value, "min two-profile budget factor",
         "DERIVED"),
        ("f(1/5)", f_fifth, "budget factor at alpha = 1/5", "PAPER"),
        ("4.97*4*pi*e", energy.UPPER_BOUND_CONST, "energy upper bound",
         "PAPER"),
        ("|f'(alpha_bar)|", abs(energy.f_alpha_prime(opt.alpha_bar)),
         "stationarity residual", "TRIVIAL"),
    ]
    report = {name: {"value": val, "note": note, "tag": tag}
              for name, val, note, tag in rows}
    chain_ok = (opt.f_value <= f_fifth <= 4.97
                and abs(energy.f_alpha_prime(opt.alpha_bar)) < 1e-8)
    report["chain"] = {"f(alpha_bar) <= f(1/5) <= 4.97": chain_ok}
    print(_json(report))
    return 0 if chain_ok else 1


# ---------------------------------------------------------------------------
# radial sweep
# ---------------------------------------------------------------------------

def run_radial_sweep(args) -> int:
    p_list = [float(tok) for tok in args.p.split(",")]
    lines = ["p,alpha,pE_annulus,pE_ball,total,bound,delta"]
    for p in p_list:
        alpha = _resolve_alpha(args.alpha, p)
        rep = energy.upper_bound_report(p, alpha=alpha)
        delta = rep.total / rep.bound
        lines.append(f"{p:g},{alpha:.10g},{rep.p_energy_annulus:.10g},"
                     f"{rep.p_energy_ball:.10g},{rep.total:.10g},"
                     f"{rep.bound:.10g},{delta:.10g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# single flow
# ---------------------------------------------------------------------------

def _initial_field(spec: dict, grid, p: float, alpha: float):
    kind = spec.get("type", "ball")
    scale = spec.get("scale", 1.0)
    if kind == "ball":
        prof = radial.solve_ball(p)
        return flow.field_from_radial(grid, prof).scaled(scale)
    if kind == "scaled-ball":
        prof = radial.build_ball_solution_scaled(p, alpha)
        return flow.field_from_radial(grid, prof).scaled(scale)
    if kind == "annulus":
        prof = radial.solve_annulus(p, spec["a"], spec.get("b", 1.0))
        return flow.field_from_radial(grid, prof).scaled(scale)
    if kind == "dump":
        field, _ = load_field(spec["path"])
        return field.scaled(scale)
    raise ValueError(f"unknown initial datum type {kind!r}")


def run_flow(args) -> int:
    config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    p = float(config["p"])
    grid, _ = _build_grid(config)
    group = _build_group(config.get("group"))
    cfg = _flow_config(config.get("flow"))
    alpha = _resolve_alpha(config.get("alpha"), p)
    v0 = _initial_field(config.get("initial", {"type": "ball"}), grid, p,
                        alpha)
    traj = flow.evolve(v0, p, cfg, group)
    outdir = Path(config.get("outdir", "."))
    outdir.mkdir(parents=True, exist_ok=True)
    rows = ["t,energy,sup"]
    rows += [f"{t:.10g},{e:.10g},{s:.10g}"
             for t, e, s in zip(traj.times, traj.energies, traj.sup_norms)]
    (outdir / "trajectory.csv").write_text("\n".join(rows) + "\n",
                                           encoding="utf-8")
    dump_field(outdir / "final.bin", traj.final, p=p)
    report = {"classification": traj.classification.value,
              "t_final": traj.t_final,
              "final_residual": traj.final_residual,
              "steps": int(len(traj.dts)),
              "energy_initial": float(traj.energies[0]),
              "energy_final": float(traj.energies[-1]),
              "nodal_counts": traj.nodal_counts}
    (outdir / "flow_report.json").write_text(_json(report),
                                             encoding="utf-8")
    print(_json(report))
    return 0


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def _audit_candidate(cand: flow.ScalarField, p: float, group, grid) -> dict:
    dec = nodal.decompose(cand)
    origin = None
    if getattr(grid, "origin_ring", None) is not None or \
            isinstance(grid, CartesianMaskedGrid):
        try:
            origin = nodal.contains_origin(dec)
        except ValueError:
            origin = None
    audit = {
        "elliptic_residual": spectrum.elliptic_residual(cand, p),
        "nodal_count": dec.n_domains,
        "boundary_contact": bool(nodal.nodal_line_touches_boundary(dec)),
        "origin_domain": origin,
        "origin_interior": origin is not None,
        "per_domain_pE": [p * r.energy
                          for r in nodal.per_domain_energy(cand, dec, p)],
    }
    if group is not None:
        audit["symmetry_defect"] = float(
            grid.symmetry_defect(cand.values, group))
    return audit, dec


def run_pipeline(args) -> int:
    config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    p = float(config["p"])
    grid, domain = _build_grid(config)
    group = _build_group(config.get("group", {"kind": "cyclic", "order": 4}))
    cfg = _flow_config(config.get("flow", {"t_max": 120.0}))
    scan_spec = config.get("scan", {})
    seed = int(config.get("seed", 0))
    outdir = Path(config.get("outdir", "pipeline_out"))
    outdir.mkdir(parents=True, exist_ok=True)

    report: dict = {"p": p, "config": config}
    admissible = check_admissible(group, domain)
    report["admissible"] = bool(admissible)
    if not admissible:
        print(_json(report))
        return 2

    alpha = _resolve_alpha(config.get("alpha", "optimal"), p)
    report["alpha"] = alpha
    inner = radial.build_ball_solution_scaled(p, alpha)
    outer = radial.solve_annulus(p, math.exp(-alpha * p), 1.0)
    u1, t1n = energy.nehari_project(flow.field_from_radial(grid, inner), p)
    u2, t2n = energy.nehari_project(
        flow.field_from_radial(grid, outer, sign=-1.0), p)
    pE1 = p * energy.field_energy(u1, p).energy
    pE2 = p * energy.field_energy(u2, p).energy
    report["component_pE"] = {"ball": pE1, "annulus": pE2, "sum": pE1 + pE2}

    ratios = scan_spec.get("ratios")
    if ratios is None:
        ratios = np.linspace(0.1, math.pi / 2 - 0.1, 7)
    ratios = np.array(ratios, dtype=float)
    # scan order is seeded but the outcome set is order-independent
    rng = np.random.default_rng(seed)
    ratios = ratios[rng.permutation(len(ratios))]
    ratios.sort()

    scan = flow.ray_scan(u1, u2, p, ratios=ratios, config=cfg, group=group,
                         refine=scan_spec.get("refine", 30))
    report["scan"] = {
        "n_rays": len(scan.all_results),
        "success": scan.success,
        "rays": [(th, r if isinstance(r, str) else r.to_dict())
                 for th, r in scan.all_results],
    }
    if not scan.success:
        print(_json(report))
        return 3

    # energy-consistent datum: the transition angle's threshold point
    trans = flow.refine_transition(u1, u2, p, scan, cfg, group)
    chosen_res, chosen_theta = (trans if trans is not None
                                else (scan.best, scan.best_theta))
    lam = chosen_res.lambda_star
    v0 = chosen_res.v0
    report["chosen"] = {"theta": chosen_theta,
                        "t1": lam * math.cos(chosen_theta),
                        "t2": lam * math.sin(chosen_theta),
                        "lambda_star": lam,
                        "bisection_width": chosen_res.bisection_width}

    candidate = scan.best_candidate
    stages = [("v0", p * energy.field_energy(v0, p).energy),
              ("candidate", p * energy.field_energy(candidate, p).energy)]
    audit, dec = _audit_candidate(candidate, p, group, grid)
    report["audit"] = audit

    restarts = []
    while dec.n_domains > 2 and len(restarts) < 2:
        rescan = flow.restart_from_nodal_pair(candidate, dec, p, config=cfg,
                                              group=group)
        entry = {"success": rescan.success}
        if not rescan.success:
            restarts.append(entry)
            break
        candidate = rescan.best_candidate
        audit, dec = _audit_candidate(candidate, p, group, grid)
        entry["audit"] = audit
        stages.append((f"restart_{len(restarts) + 1}",
                       p * energy.field_energy(candidate, p).energy))
        restarts.append(entry)
        report["audit"] = audit
    report["restarts"] = restarts
    report["restart_count"] = len(restarts)

    report["energy_ledger"] = {
        "stages": stages,
        "bound": energy.UPPER_BOUND_CONST,
        "nonincreasing": all(a >= b - 1e-9 for (_, a), (_, b)
                             in zip(stages, stages[1:])),
    }

    dump_field(outdir / "candidate.bin", candidate, p=p)
    dump_field(outdir / "v0.bin", v0, p=p)
    report["outputs"] = {"candidate": str(outdir / "candidate.bin"),
                         "v0": str(outdir / "v0.bin")}

    try:
        spec_rep = spectrum.morse_index(candidate, p, group)
        report["morse"] = spec_rep.to_dict()
        if isinstance(grid, PolarGrid):
            mu, mu_info = spectrum.half_domain_mu(candidate, p)
            report["morse"]["half_domain_mu"] = mu
            report["morse"]["odd_extension_residual"] = \
                mu_info["odd_extension_residual"]
    except Exception as exc:  # audit failure is reported, not fatal
        report["morse"] = {"error": str(exc)}

    (outdir / "pipeline_report.json").write_text(
        _json(report), encoding="utf-8")
    print(_json(report))

    ok = (audit["elliptic_residual"] < cfg.residual_tol
          and not audit["boundary_contact"]
          and report["energy_ledger"]["nonincreasing"])
    return 0 if ok else 4


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------

def run_spectrum(args) -> int:
    field, header = load_field(args.field)
    p = args.p if args.p is not None else header.get("p")
    if p is None:
        raise SystemExit("p not in dump header; pass --p")
    group = None
    if args.group:
        kind, order = args.group.split(":")
        group = _build_group({"kind": kind, "order": int(order)})
    rep = spectrum.morse_index(field, float(p), group, k=args.k)
    out = rep.to_dict()
    if isinstance(field.grid, PolarGrid):
        mu, info = spectrum.half_domain_mu(field, float(p))
        out["half_domain_mu"] = mu
        out["odd_extension_residual"] = info["odd_extension_residual"]
    print(_json(out))
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lef",
        description="Sign-changing steady states of -Lap u = |u|^(p-1) u "
                    "via the semilinear heat flow")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("constants", help="sharp constants and their chain")

    p_rad = sub.add_parser("radial", help="two-profile energy sweep (CSV)")
    p_rad.add_argument("--p", required=True,
                       help="comma-separated exponents, e.g. 20,50,100,200")
    p_rad.add_argument("--alpha", default="optimal",
                       help="number, 'optimal' (per-p) or 'asymptotic'")
    p_rad.add_argument("--out", default=None, help="CSV path (default stdout)")

    p_flow = sub.add_parser("flow", help="evolve one configured datum")
    p_flow.add_argument("--config", required=True)

    p_pipe = sub.add_parser("pipeline", help="sign-changing candidate search")
    p_pipe.add_argument("--config", required=True)

    p_spec = sub.add_parser("spectrum", help="Morse report for a field dump")
    p_spec.add_argument("--field", required=True)
    p_spec.add_argument("--p", type=float, default=None)
    p_spec.add_argument("--k", type=int, default=12)
    p_spec.add_argument("--group", default=None,
                        help="kind:order, e.g. cyclic:4")

    args = parser.parse_args(argv)
    handlers = {"constants": run_constants, "radial": run_radial_sweep,
                "flow": run_flow, "pipeline": run_pipeline,
                "spectrum": run_spectrum}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
