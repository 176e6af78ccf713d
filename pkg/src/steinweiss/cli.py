"""Command-line entry point: one run, one manifest, exit status 0 iff every verdict passes."""

from __future__ import annotations

import argparse
import io
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import (ArtifactError, RunManifest, Verdict, atomic_write, default_output_dir, grid_record,
                        load_solution, make_grids, params_record, save_solution)
from .config import ConfigError, RunConfig, load_config
from .extremal import DegenerateStartError, power_iterate, random_start
from .grid import StructureError, field_from_csv, field_to_csv
from .operators import KernelDomainError, KernelParams, get_operator
from .params import (DegenerateExponentError, ParameterDomainError, asymptotic_hypotheses,
                     derive_el_exponents, pohozaev_residual, regularity_window, validate)
from .rearrangement import (NormDomainError, decreasing_rearrangement, lorentz_norm, lp_norm,
                            radial_symmetrize, riesz_check)
from .symmetry import barycenter, moving_plane_scan, symmetry_deviation
from .system import (PreconditionError, SystemSolution, asymptotic_check, fixed_point_defect,
                     pohozaev_check, regularity_probe, solve_single_weight, solve_system)

EXIT_FAIL = 1
EXIT_ERROR = 2


class UsageError(RuntimeError):
    pass


def _need(cfg: RunConfig, kind: str):
    obj = getattr(cfg, kind)
    if obj is None:
        raise ConfigError(f"run file has no [{kind}] section", cfg.path)
    return obj


def _config(args) -> RunConfig:
    return load_config(args.params, getattr(args, "grid", None))


def _manifest(cmd, cfg: RunConfig | None, bg=None, hg=None, obj=None, **options) -> RunManifest:
    m = RunManifest(cmd, options={k: v for k, v in options.items() if v is not None})
    if cfg is not None:
        m.params = params_record(obj if obj is not None else (cfg.inequality or cfg.system))
        m.seed = cfg.seed
        if bg is not None:
            m.grid = grid_record(cfg.grid, bg, hg, cfg.full, cfg.layout)
    return m


def _grids(cfg: RunConfig):
    return make_grids(cfg.grid, cfg.full, cfg.layout)


# --- check -----------------------------------------------------------------

def cmd_check(args):
    cfg = _config(args)
    m = _manifest("check", cfg, gate=args.gate)
    if cfg.inequality is not None:
        ip = cfg.inequality
        rep = validate(ip, args.gate)
        m.results["conditions"] = [c.as_record() for c in rep.conditions]
        m.results["q"] = ip.q
        m.results["p_prime"] = ip.p_prime
        m.results["inv_q"] = ip.inv_q
        m.results["inv_p_prime_dual"] = ip.inv_p_prime_dual
        try:
            sp = derive_el_exponents(ip, check=False)
            m.results["p0"] = sp.p0
            m.results["q0"] = sp.q0
            m.results["pohozaev_residual"] = pohozaev_residual(sp)
        except DegenerateExponentError as exc:
            m.results["el_exponents"] = str(exc)
        m.verdicts.append(Verdict("admissible", rep.verdict, note=", ".join(rep.failing())))
    if cfg.system is not None:
        sp = cfg.system
        win = regularity_window(sp)
        m.results["system"] = {
            "balance_slack": sp.balance_slack(), "pohozaev_residual": pohozaev_residual(sp),
            "window_inv_r": str(win.inv_r), "window_inv_s": str(win.inv_s),
            "asymptotic_slack": asymptotic_hypotheses(sp)}
        m.verdicts.append(Verdict("balanced", sp.balanced(), sp.balance_slack(), 0))
    if not m.verdicts:
        raise ConfigError("run file needs an [inequality] or [system] section", cfg.path)
    return m, Path(args.out) if args.out else default_output_dir("check")


# --- sharp constant ----------------------------------------------------------

def _trace_csv(trace) -> str:
    buf = io.StringIO()
    buf.write("iteration,J\n")
    for i, J in enumerate(trace):
        buf.write(f"{i},{float(J)!r}\n")
    return buf.getvalue()


def cmd_sharp_constant(args):
    cfg = _config(args)
    ip = _need(cfg, "inequality")
    if args.full:
        cfg.full = True
    opts = cfg.extremal_options(max_iters=args.max_iters, seed=args.seed,
                                symmetrize_each_step=True if args.symmetrize_each_step else None)
    bg, hg = _grids(cfg)
    f0 = random_start(ip, bg, opts.seed) if args.start == "random" else None
    res = power_iterate(ip, bg, hg, opts, f0=f0)
    m = _manifest("sharp-constant", cfg, bg, hg, start=args.start, **opts.as_dict())
    m.seed = opts.seed
    m.results.update(res.as_record())
    m.verdicts.append(Verdict("converged", res.converged, res.status, note=res.message))
    out = Path(args.out) if args.out else default_output_dir("sharp-constant")
    save_solution(out, m, {"f": res.f, "g": res.g}, bg, hg, {"trace.csv": _trace_csv(res.trace)})
    return m, out


# --- integral system -----------------------------------------------------------

def _history_csv(history) -> str:
    return "iteration,residual\n" + "".join(f"{i + 1},{float(r)!r}\n" for i, r in enumerate(history))


def cmd_solve_system(args):
    cfg = _config(args)
    sp = _need(cfg, "system")
    opts = cfg.system_options(max_iters=args.max_iters)
    bg, hg = _grids(cfg)
    solve = solve_single_weight if args.single_weight else solve_system
    sol = solve(sp, bg, hg, opts)
    m = _manifest("solve-system", cfg, bg, hg, single_weight=args.single_weight,
                  max_iters=opts.max_iters, tol=opts.tol, damping=opts.damping_for(sp), anderson=opts.anderson)
    m.results.update(sol.as_record())
    m.verdicts.append(Verdict("converged", sol.converged, sol.status, note=sol.message))
    if sol.converged:
        d = fixed_point_defect(sol)
        m.results["fixed_point_defect"] = d
        m.verdicts.append(Verdict("fixed_point", d <= args.tol, d, args.tol))
    out = Path(args.out) if args.out else default_output_dir("solve-system")
    save_solution(out, m, {"u": sol.u, "v": sol.v}, bg, hg, {"history.csv": _history_csv(sol.history)})
    return m, out


def _load_system(path) -> tuple:
    ld = load_solution(path)
    if ld.params is None or ld.manifest["params"].get("kind") != "system":
        raise ArtifactError(f"{path}: not an integral-system solution")
    if "u" not in ld.fields or "v" not in ld.fields:
        raise ArtifactError(f"{path}: solution needs fields u and v")
    r = ld.manifest["results"]
    residual = r.get("residual", math.inf)
    residual = float(residual) if not isinstance(residual, str) else float(residual.strip("'"))
    sol = SystemSolution(ld.fields["u"], ld.fields["v"], ld.params, residual, int(r.get("iterations", 0)),
                         r.get("status", "unknown"), bool(r.get("single_weight", False)),
                         float(r.get("eigenvalue", math.nan)), float(r.get("scale", 1.0)))
    return ld, sol


# --- verify ------------------------------------------------------------------

def _verify_duality(args):
    cfg = _config(args)
    ip = _need(cfg, "inequality")
    bg, hg = _grids(cfg)
    op = get_operator(bg, hg, KernelParams.of(ip))
    rng = np.random.default_rng(cfg.seed if args.seed is None else args.seed)
    gaps = []
    a, b = float(ip.alpha), float(ip.beta)
    for _ in range(args.pairs):
        f = rng.standard_normal(bg.size)
        g = rng.standard_normal(hg.size)
        lhs = math.fsum(hg.weights * op.V(f, a, b) * g)
        rhs = math.fsum(bg.weights * f * op.W(g, a, b))
        scale = math.fsum(hg.weights * np.abs(op.V(np.abs(f), a, b)) * np.abs(g))
        gaps.append(abs(lhs - rhs) / scale)
    m = _manifest("verify-duality", cfg, bg, hg, pairs=args.pairs)
    worst = max(gaps)
    m.results["max_relative_gap"] = worst
    m.verdicts.append(Verdict("duality", worst <= args.tol, worst, args.tol))
    return m


def _verify_pohozaev(args):
    ld, sol = _load_system(args.solution)
    m = RunManifest("verify-pohozaev", params=ld.manifest["params"], grid=ld.manifest["grid"],
                    options={"tol": args.tol, "solution": str(args.solution)})
    rep = pohozaev_check(sol)
    m.results.update(rep.as_record())
    m.verdicts.append(Verdict("pohozaev", rep.residual <= args.tol, rep.residual, args.tol))
    return m


def _verify_asymptotics(args):
    ld, sol = _load_system(args.solution)
    m = RunManifest("verify-asymptotics", params=ld.manifest["params"], grid=ld.manifest["grid"],
                    options={"tol": args.tol, "solution": str(args.solution)})
    rep = asymptotic_check(sol)
    m.results.update(rep.as_record())
    for side in ("u", "v"):
        skipped = getattr(rep, f"skipped_{side}")
        err = getattr(rep, f"error_{side}")
        if skipped:
            m.results[f"note_{side}"] = f"skipped: {skipped}"
        else:
            m.verdicts.append(Verdict(f"limit_{side}", err <= args.tol, err, args.tol))
    if not m.verdicts:
        m.verdicts.append(Verdict("limits", True, note="every limit hypothesis fails; nothing to compare"))
    return m


def _verify_regularity(args):
    cfg = _config(args)
    sp = _need(cfg, "system")
    win = regularity_window(sp)

    def mid(iv):
        return [] if iv.empty else [float((iv.lo + iv.hi) / 2)]

    inv_r = args.inv_r if args.inv_r is not None else mid(win.inv_r)
    inv_s = args.inv_s if args.inv_s is not None else mid(win.inv_s)
    rep = regularity_probe(sp, cfg.grid, inv_r, inv_s, tuple(args.r_max), cfg.system_options(),
                           single_weight=args.single_weight, stable_tol=args.tol)
    m = _manifest("verify-regularity", cfg, single_weight=args.single_weight, r_max=args.r_max, tol=args.tol)
    m.grid = {"spec": cfg.grid.as_dict(), "sweep_r_max": list(args.r_max)}
    m.results.update(rep.as_record())
    if rep.message:
        m.verdicts.append(Verdict("window", True, note=rep.message))
    for kind, inv, inside, norms, change, stable in rep.rows:
        if inside:
            m.verdicts.append(Verdict(f"stable_{kind}_{inv:g}", stable, change, args.tol))
    if not m.verdicts:
        m.verdicts.append(Verdict("window", True, note="no sample inside a window"))
    return m


def _verify_symmetry(args):
    ld = load_solution(args.solution)
    name = args.field or ("f" if "f" in ld.fields else "u")
    if name not in ld.fields:
        raise ArtifactError(f"{args.solution}: no field {name!r}")
    f = ld.fields[name]
    if f.grid.kind != "boundary":
        raise ArtifactError(f"field {name!r} is not a boundary field")
    c = barycenter(f) if f.grid.full else None
    radial, mono = symmetry_deviation(f, c)
    m = RunManifest("verify-symmetry", params=ld.manifest["params"], grid=ld.manifest["grid"],
                    options={"tol": args.tol, "field": name, "solution": str(args.solution)})
    m.results.update({"radial_deviation": radial, "monotonicity_deviation": mono,
                      "center": [] if c is None else list(c)})
    m.verdicts.append(Verdict("radial", radial <= args.tol, radial, args.tol))
    m.verdicts.append(Verdict("monotone", mono <= args.tol, mono, args.tol))
    if args.axis is not None:
        _scan(args, ld, m)
    return m


def _verify_riesz(args):
    cfg = _config(args)
    ip = _need(cfg, "inequality")
    bg, hg = _grids(cfg)
    rng = np.random.default_rng(cfg.seed if args.seed is None else args.seed)
    held = 0
    worst = math.inf
    for _ in range(args.pairs):
        f = bg.field(rng.random(bg.size))
        g = hg.field(rng.random(hg.size))
        r = riesz_check(f, g, ip)
        held += r.holds
        worst = min(worst, r.J_after - r.J_before)
    frac = held / args.pairs
    m = _manifest("verify-riesz", cfg, bg, hg, pairs=args.pairs)
    m.results.update({"fraction_holding": frac, "worst_gain": worst})
    m.verdicts.append(Verdict("riesz", frac >= args.min_fraction, frac, args.min_fraction))
    return m


def _taus(text):
    try:
        a, b, step = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a:b:step, got {text!r}") from exc
    if step <= 0 or b < a:
        raise argparse.ArgumentTypeError("need a <= b and step > 0")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [a + i * step for i in range(count)]


def _planes_csv(reports) -> str:
    out = ["tau,measure_u,measure_v,amplitude,gg_residual"]
    out += [f"{r.tau!r},{r.measure_u!r},{r.measure_v!r},{r.amplitude!r},{r.gg_residual!r}" for r in reports]
    return "\n".join(out) + "\n"


def _scan(args, ld, m):
    names = ("u", "v") if "u" in ld.fields else ("f", "g")
    if not all(k in ld.fields for k in names):
        raise ArtifactError(f"{args.solution}: moving-plane scan needs a boundary and a half-space field")
    sp = ld.params
    if sp is not None and not hasattr(sp, "p0"):
        sp = derive_el_exponents(sp)
    u, v = ld.fields[names[0]], ld.fields[names[1]]
    reps = moving_plane_scan(u, v, args.axis, args.taus or [0.0], sp)
    out = Path(args.out) if args.out else default_output_dir("verify-symmetry")
    atomic_write(out / "planes.csv", _planes_csv(reps))
    m.artifacts = {"tables": ["planes.csv"]}
    left = [r for r in reps if r.tau <= 0]
    meas = max((max(r.measure_u, r.measure_v) for r in left), default=0.0)
    gg = max(r.gg_residual for r in reps)
    m.results.update({"max_violation_measure_nonpositive_tau": meas, "max_gg_residual": gg})
    m.verdicts.append(Verdict("no_violation_for_nonpositive_tau", meas == 0.0, meas, 0.0))
    m.verdicts.append(Verdict("reflection_identity", gg <= args.gg_tol, gg, args.gg_tol))


VERIFIERS = {"duality": _verify_duality, "pohozaev": _verify_pohozaev, "asymptotics": _verify_asymptotics,
             "regularity": _verify_regularity, "symmetry": _verify_symmetry, "riesz": _verify_riesz}


def cmd_verify(args):
    m = VERIFIERS[args.kind](args)
    out = Path(args.out) if args.out else default_output_dir(f"verify-{args.kind}")
    return m, out


# --- fields: rearrange, norms, operators ------------------------------------

def _input_field(args):
    """Field from --solution/--field or from --input CSV on the grid of --params/--grid."""
    if args.solution:
        ld = load_solution(args.solution)
        name = args.field or next(iter(ld.fields))
        if name not in ld.fields:
            raise ArtifactError(f"{args.solution}: no field {name!r}")
        return ld.fields[name], {"solution": str(args.solution), "field": name}
    if not (args.input and args.params):
        raise UsageError("give --solution DIR or --input CSV with --params")
    cfg = _config(args)
    bg, hg = _grids(cfg)
    grid = hg if args.half else bg
    return field_from_csv(Path(args.input).read_text(), grid), {"input": str(args.input)}


def cmd_rearrange(args):
    f, src = _input_field(args)
    prof = decreasing_rearrangement(f)
    m = RunManifest("rearrange", options=src)
    m.results.update({"support_measure": prof.support_measure, "levels": int(prof.values.size)})
    tables = {"profile.csv": prof.to_csv()}
    if f.grid.kind == "boundary":
        fs = radial_symmetrize(f)
        tables["symmetrized.csv"] = field_to_csv(fs)
        checks = []
        for p in (1.0, 2.0, math.inf):
            a, b = lp_norm(f, p=p), lp_norm(fs, p=p)
            checks.append(abs(a - b) / max(a, 1e-300))
        worst = max(checks)
        m.results["max_norm_change"] = worst
        m.verdicts.append(Verdict("equimeasurable", worst <= 1e-12, worst, 1e-12))
    else:
        m.verdicts.append(Verdict("profile", True, note="half-space field: profile only"))
    out = Path(args.out) if args.out else default_output_dir("rearrange")
    for name, text in tables.items():
        atomic_write(out / name, text)
    m.artifacts = {"tables": sorted(tables)}
    return m, out


def cmd_norm(args):
    f, src = _input_field(args)
    m = RunManifest(f"norm-{args.kind}", options={**src, "p": args.p, "r": args.r, "s": args.s})
    if args.kind == "lp":
        val = lp_norm(f, p=args.p)
    else:
        val = lorentz_norm(f, r=args.r, s=args.s)
    m.results["norm"] = val
    m.verdicts.append(Verdict("finite", math.isfinite(val), val))
    return m, Path(args.out) if args.out else default_output_dir(f"norm-{args.kind}")


def cmd_op(args):
    cfg = _config(args)
    ip = _need(cfg, "inequality")
    bg, hg = _grids(cfg)
    op = get_operator(bg, hg, KernelParams.of(ip))
    a, b = float(ip.alpha), float(ip.beta)
    m = _manifest(f"op-{args.action}", cfg, bg, hg)
    out = Path(args.out) if args.out else default_output_dir(f"op-{args.action}")
    if args.action == "apply-v":
        if not args.input:
            raise UsageError("apply-v needs --input (boundary field CSV)")
        f = field_from_csv(Path(args.input).read_text(), bg)
        res = hg.field(op.V(f.values, a, b))
        atomic_write(out / "Vf.csv", field_to_csv(res))
        m.results["output"] = "Vf.csv"
        m.verdicts.append(Verdict("finite", bool(np.all(np.isfinite(res.values)))))
    elif args.action == "apply-w":
        if not args.input:
            raise UsageError("apply-w needs --input (half-space field CSV)")
        g = field_from_csv(Path(args.input).read_text(), hg)
        res = bg.field(op.W(g.values, a, b))
        atomic_write(out / "Wg.csv", field_to_csv(res))
        m.results["output"] = "Wg.csv"
        m.verdicts.append(Verdict("finite", bool(np.all(np.isfinite(res.values)))))
    else:
        rng = np.random.default_rng(cfg.seed if args.seed is None else args.seed)
        f = field_from_csv(Path(args.f).read_text(), bg).values if args.f else rng.standard_normal(bg.size)
        g = field_from_csv(Path(args.g).read_text(), hg).values if args.g else rng.standard_normal(hg.size)
        f, g = np.ravel(f), np.ravel(g)
        lhs = math.fsum(hg.weights * op.V(f, a, b) * g)
        rhs = math.fsum(bg.weights * f * op.W(g, a, b))
        gap = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
        m.results.update({"Vf_g": lhs, "f_Wg": rhs, "relative_gap": gap})
        m.verdicts.append(Verdict("duality", gap <= args.tol, gap, args.tol))
    return m, out


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="steinweiss", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, params=True, grid=True):
        if params:
            p.add_argument("--params", required=True, help="run file with [inequality]/[system] sections")
        if grid:
            p.add_argument("--grid", help="file with a [grid] (and optional [solver]) section")
        p.add_argument("--out", help="output directory (default from $STEINWEISS_OUTPUT_DIR)")

    p = sub.add_parser("check", help="admissibility and derived exponents")
    common(p, grid=False)
    p.add_argument("--gate", choices=("inequality", "extremal"), default="inequality")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("sharp-constant", help="extremal ascent for the sharp constant")
    common(p)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--start", choices=("default", "random"), default="default")
    p.add_argument("--symmetrize-each-step", action="store_true")
    p.add_argument("--full", "--full-mode", dest="full", action="store_true", help="angular (full-mode) grids")
    p.set_defaults(func=cmd_sharp_constant)

    p = sub.add_parser("solve-system", help="fixed point of the Euler-Lagrange system")
    common(p)
    p.add_argument("--single-weight", action="store_true")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--tol", type=float, default=1e-6, help="fixed-point defect accepted")
    p.set_defaults(func=cmd_solve_system)

    p = sub.add_parser("verify", help="run one verifier")
    vs = p.add_subparsers(dest="kind", required=True)
    v = vs.add_parser("duality")
    common(v)
    v.add_argument("--pairs", type=int, default=100)
    v.add_argument("--seed", type=int)
    v.add_argument("--tol", type=float, default=1e-12)
    v = vs.add_parser("pohozaev")
    common(v, params=False, grid=False)
    v.add_argument("--solution", required=True)
    v.add_argument("--tol", type=float, default=0.02)
    v = vs.add_parser("asymptotics")
    common(v, params=False, grid=False)
    v.add_argument("--solution", required=True)
    v.add_argument("--tol", type=float, default=0.05)
    v = vs.add_parser("regularity")
    common(v)
    v.add_argument("--single-weight", action="store_true")
    v.add_argument("--inv-r", type=float, nargs="*")
    v.add_argument("--inv-s", type=float, nargs="*")
    v.add_argument("--r-max", type=float, nargs="+", default=[250.0, 500.0, 1000.0])
    v.add_argument("--tol", type=float, default=0.02)
    v = vs.add_parser("symmetry")
    common(v, params=False, grid=False)
    v.add_argument("--solution", required=True)
    v.add_argument("--field")
    v.add_argument("--tol", type=float, default=1e-4)
    v.add_argument("--axis", type=int, help="tangential axis for a moving-plane scan")
    v.add_argument("--taus", type=_taus, help="plane offsets a:b:step")
    v.add_argument("--gg-tol", type=float, default=1e-8)
    v = vs.add_parser("riesz")
    common(v)
    v.add_argument("--pairs", type=int, default=500)
    v.add_argument("--seed", type=int)
    v.add_argument("--min-fraction", type=float, default=0.95)
    p.set_defaults(func=cmd_verify)

    def field_source(p):
        p.add_argument("--solution", help="solution directory")
        p.add_argument("--field", help="field name inside the solution")
        p.add_argument("--input", help="field CSV (node_id,value)")
        p.add_argument("--params", help="run file defining the grid of --input")
        p.add_argument("--grid")
        p.add_argument("--half", action="store_true", help="--input lives on the half-space grid")
        p.add_argument("--out")

    p = sub.add_parser("rearrange", help="decreasing rearrangement of a field")
    field_source(p)
    p.set_defaults(func=cmd_rearrange)

    p = sub.add_parser("norm", help="Lebesgue or Lorentz norm of a field")
    p.add_argument("kind", choices=("lp", "lorentz"))
    field_source(p)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--r", type=float, default=2.0)
    p.add_argument("--s", type=float, default=2.0)
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("op", help="apply the weighted operators")
    p.add_argument("action", choices=("apply-v", "apply-w", "duality-gap"))
    common(p)
    p.add_argument("--input")
    p.add_argument("--f")
    p.add_argument("--g")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(func=cmd_op)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        m, out = args.func(args)
    except (ConfigError, ArtifactError, UsageError, PreconditionError, StructureError) as exc:
        print(f"error={type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ParameterDomainError, DegenerateExponentError, KernelDomainError, NormDomainError,
            DegenerateStartError, ValueError) as exc:
        print(f"error={type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    m.wall_clock = time.perf_counter() - t0
    m.write(out)
    print("\n".join(m.report_lines()))
    print(f"output={out}")
    return 0 if m.passed else EXIT_FAIL


if __name__ == "__main__":
    raise SystemExit(main())
