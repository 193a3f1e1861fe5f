"""Command-line front end: solve, sweep, decay, evolve, verify.

Configuration comes from flags or a JSON file (``--config``); flags
override file values.  All CSV output uses 17 significant digits, LF line
endings, and a mandatory header row, so identical configurations produce
byte-identical files.  Exit codes: 0 success, 1 configuration error,
2 solver failure, 3 invariant violation; failures also emit a
machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import evolve as ev
from . import forms, grid as gridmod, solver, special
from .errors import InvariantViolation, SolverError


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_csv(path, header, rows):
    lines = [header]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pointnls", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file; flags override it")
        p.add_argument("--dim", type=int, choices=(2, 3))
        p.add_argument("--alpha", type=float)
        p.add_argument("--p", type=float, dest="power")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--n", type=int, help="grid size override")
        p.add_argument("--r-min", type=float)
        p.add_argument("--r-max", type=float)
        p.add_argument("--grading", type=float)

    ps = sub.add_parser("solve", help="run both solvers, cross-validate, write profiles")
    common(ps)
    ps.add_argument("--omega", type=float, required=False)

    pw = sub.add_parser("sweep", help="least action over a frequency grid")
    common(pw)
    pw.add_argument("--omegas", help="comma-separated frequencies")
    pw.add_argument("--workers", type=int, default=4)

    pd = sub.add_parser("decay", help="zero-mass tail analysis and L2 threshold")
    common(pd)
    pd.add_argument("--omega", type=float, default=0.0)
    pd.add_argument("--r-list", default="40,80,160,320")

    pe = sub.add_parser("evolve", help="conservative evolution and stability table")
    common(pe)
    pe.add_argument("--omega", type=float, required=False)
    pe.add_argument("--dt", type=float, default=1e-3)
    pe.add_argument("--t-final", type=float)
    pe.add_argument("--deltas", default="0.02,0.01,0.005")
    pe.add_argument("--delta", type=float, help="single perturbation amplitude")
    pe.add_argument("--metric", choices=("H1_alpha", "X0"), default="H1_alpha")
    pe.add_argument("--record-every", type=int, default=20)

    pv = sub.add_parser("verify", help="run the structural invariant suite")
    common(pv)
    return ap


def _load_config(args) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = json.load(fh)
    return cfg


def _get(args, cfg, flag, section, key, default=None):
    val = getattr(args, flag, None)
    if val is not None:
        return val
    sec = cfg.get(section, {}) if section else cfg
    return sec.get(key, default)


def _params_from(args, cfg) -> special.InteractionParams:
    dim = _get(args, cfg, "dim", "params", "dim")
    alpha = _get(args, cfg, "alpha", "params", "alpha")
    p = _get(args, cfg, "power", "params", "p")
    if dim is None or alpha is None or p is None:
        raise ValueError("dim, alpha, and p are required (flags or config file)")
    return special.InteractionParams(int(dim), float(alpha), float(p))


def _grid_from(args, cfg, params, omega):
    n = _get(args, cfg, "n", "grid", "n")
    r_min = _get(args, cfg, "r_min", "grid", "r_min")
    r_max = _get(args, cfg, "r_max", "grid", "r_max")
    grading = _get(args, cfg, "grading", "grid", "grading")
    base = gridmod.default_grid(params, omega, int(n) if n else 4096)
    if r_min is None and r_max is None and grading is None:
        return base
    return gridmod.build_grid(
        params.dim,
        float(r_min) if r_min is not None else base.r_min,
        float(r_max) if r_max is not None else base.r_max,
        base.n,
        float(grading) if grading is not None else base.grading,
    )


def _outdir(args, cfg) -> str:
    out = _get(args, cfg, "out", None, "out", ".")
    os.makedirs(out, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise ValueError(f"output directory {out!r} is not writable")
    return out


def _check_omega_config(params, omega):
    if omega is None:
        raise ValueError("omega is required")
    if not 0.0 <= omega < params.omega_alpha:
        raise ValueError(
            f"omega must lie in [0, omega_alpha) = [0, {params.omega_alpha:g}), got {omega:g}"
        )
    return float(omega)


def _run_config_json(args, cfg, params, extra) -> dict:
    meta = {
        "command": args.command,
        "params": {"dim": params.dim, "alpha": params.alpha, "p": params.p},
        "seed": int(_get(args, cfg, "seed", None, "seed", 0)),
    }
    meta.update(extra)
    return meta


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    params = _params_from(args, cfg)
    omega = _check_omega_config(params, _get(args, cfg, "omega", None, "omega"))
    out = _outdir(args, cfg)
    grid = _grid_from(args, cfg, params, omega)
    report = solver.cross_validate(params, omega, grid)
    for tag in ("minimize", "shoot"):
        res = report[tag]
        gridmod.write_field(
            res.profile, params,
            os.path.join(out, f"profile_{tag}.csv"),
            os.path.join(out, f"profile_{tag}.json"),
        )
        _write_json(os.path.join(out, f"summary_{tag}.json"), res.summary())
    _write_json(
        os.path.join(out, "crossval.json"),
        {
            "sup_rel_diff": report["sup_rel_diff"],
            "d_rel_diff": report["d_rel_diff"],
            "run": _run_config_json(args, cfg, params, {"omega": omega, "grid_n": grid.n,
                                                        "grid_r_max": grid.r_max}),
        },
    )
    if report["sup_rel_diff"] > 1e-3:
        raise InvariantViolation(
            f"solver disagreement {report['sup_rel_diff']:.3e} exceeds 1e-3"
        )
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    params = _params_from(args, cfg)
    out = _outdir(args, cfg)
    raw = _get(args, cfg, "omegas", None, "omegas")
    if not raw:
        raise ValueError("sweep requires --omegas")
    if isinstance(raw, str):
        omegas = [float(tok) for tok in raw.split(",") if tok.strip()]
    else:
        omegas = [float(x) for x in raw]
    if not omegas:
        raise ValueError("empty omega range")
    for om in omegas:
        _check_omega_config(params, om)
    workers = int(_get(args, cfg, "workers", None, "workers", 4))

    def one(om):
        res = solver.minimize_action(params, om)
        return res.summary()

    with ThreadPoolExecutor(max_workers=max(1, min(workers, len(omegas)))) as ex:
        results = list(ex.map(one, omegas))
    order = np.argsort(omegas)
    rows = []
    for i in order:
        s = results[i]
        rows.append((omegas[i], s["d_omega"], s["c_re"], s["sup_phi"], s["residual"]))
    _write_csv(os.path.join(out, "sweep.csv"), "omega,d_omega,c,sup_phi,residual", rows)
    _write_json(os.path.join(out, "sweep_run.json"),
                _run_config_json(args, cfg, params, {"omegas": sorted(omegas)}))
    ds = [rows[k][1] for k in range(len(rows))]
    if any(d >= 0.0 for d in ds):
        raise InvariantViolation("least action failed to be negative on the sweep")
    if any(ds[k] > ds[k + 1] + 1e-10 for k in range(len(ds) - 1)):
        raise InvariantViolation("least action failed to be nondecreasing in omega")
    return 0


def cmd_decay(args) -> int:
    cfg = _load_config(args)
    params = _params_from(args, cfg)
    omega = float(_get(args, cfg, "omega", None, "omega", 0.0))
    if omega != 0.0:
        raise ValueError("decay analysis is defined for omega = 0")
    out = _outdir(args, cfg)
    shot = solver.shoot_profile(params, 0.0)
    fit = solver.fit_tail_exponent(shot)
    expected = -2.0 / (params.p - 1.0)

    r = shot.profile.grid.nodes
    vals = shot.profile.values().real
    sel = r >= 1.0
    ell = solver.veron_constant(params.p, params.dim)
    k = 2.0 / (params.p - 1.0)
    exact = ell * r[sel] ** -k
    eps_upper = min(1.0, exact[0] / vals[sel][0])
    upper = solver.comparison_sandwich_check(r[sel], exact, vals[sel], eps_upper)
    eps_lower = min(1.0, vals[sel][0] / exact[0])
    lower = solver.comparison_sandwich_check(r[sel], vals[sel], exact, eps_lower)

    verdict = None
    threshold_rows = []
    if params.dim == 2:
        raw = _get(args, cfg, "r_list", None, "r_list", "40,80,160,320")
        if isinstance(raw, str):
            r_list = [float(tok) for tok in raw.split(",") if tok.strip()]
        else:
            r_list = [float(x) for x in raw]
        threshold_rows = solver.l2_threshold_experiment(params, r_list)
        inc = np.diff([m for _, m in threshold_rows])
        slope = float(np.polyfit(np.log([R for R, _ in threshold_rows][1:]), np.log(inc), 1)[0])
        if slope < -0.25:
            verdict = "convergent"
        elif slope > 0.25:
            verdict = "divergent"
        else:
            verdict = "log-divergent"
        _write_csv(os.path.join(out, "l2_threshold.csv"), "R,truncated_mass",
                   threshold_rows)
    _write_json(
        os.path.join(out, "decay.json"),
        {
            "tail_exponent": fit.exponent,
            "expected_exponent": expected,
            "fit_rms": fit.rms_residual,
            "fit_window": list(fit.window),
            "veron_residual": solver.veron_exact_residual(
                params.p, params.dim, np.geomspace(1.0, 100.0, 25)
            ),
            "sandwich_upper": bool(upper),
            "sandwich_lower": bool(lower),
            "l2_verdict": verdict,
            "boundary_defect": shot.boundary_defect,
            "run": _run_config_json(args, cfg, params, {"omega": 0.0}),
        },
    )
    if not (upper and lower):
        raise InvariantViolation("comparison sandwich failed")
    if abs(fit.exponent - expected) > 0.05 * abs(expected):
        raise InvariantViolation(
            f"tail exponent {fit.exponent:.4f} deviates more than 5% from {expected:.4f}"
        )
    return 0


def cmd_evolve(args) -> int:
    cfg = _load_config(args)
    params = _params_from(args, cfg)
    omega = _check_omega_config(params, _get(args, cfg, "omega", None, "omega"))
    out = _outdir(args, cfg)
    metric = _get(args, cfg, "metric", "evolve", "metric", "H1_alpha")
    if metric == "H1_alpha" and omega == 0.0 and params.dim == 2 and params.p >= 3.0:
        raise ValueError("zero-mass profile is not square-integrable here; use --metric X0")
    t_final = _get(args, cfg, "t_final", "evolve", "t_final")
    t_final = float(t_final) if t_final else 30.0 / params.omega_alpha
    config = ev.EvolutionConfig(
        dt=float(_get(args, cfg, "dt", "evolve", "dt", 1e-3)),
        t_final=t_final,
        record_every=int(_get(args, cfg, "record_every", "evolve", "record_every", 20)),
        metric=metric,
    )
    single = _get(args, cfg, "delta", "evolve", "delta")
    if single is not None:
        deltas = [float(single)]
    else:
        raw = _get(args, cfg, "deltas", "evolve", "deltas", "0.02,0.01,0.005")
        deltas = [float(tok) for tok in raw.split(",")] if isinstance(raw, str) else [float(x) for x in raw]
    egrid = ev.default_evolution_grid(params)
    sol = solver.minimize_action(params, omega, egrid, solver.SolverOptions(tol=1e-11))
    rows = []
    for delta in deltas:
        if delta == 0.0:
            trace = ev.run_evolution(params, sol.profile, config,
                                     reference=sol.profile, omega_ref=omega)
            D = float(np.nanmax(trace.orbital_distance))
            rows.append({"delta": 0.0, "D": D, "ratio": math.nan,
                         "mass_drift": ev.conserve_report(trace)[0],
                         "energy_drift": ev.conserve_report(trace)[1]})
        else:
            rows.extend(
                ev.stability_experiment(params, omega, [delta], config, egrid, sol.profile)
            )
        tag = _fmt(delta).replace(".", "p").replace("-", "m")
        trace = ev.run_evolution(
            params,
            sol.profile if delta == 0.0 else sol.profile
            + ev.perturbation_bump(egrid, 1.0 / math.sqrt(params.omega_alpha)).scaled(delta),
            ev.EvolutionConfig(dt=config.dt, t_final=min(config.t_final, 2.0),
                               record_every=config.record_every, metric=metric),
            reference=sol.profile,
            omega_ref=omega,
        )
        _write_csv(
            os.path.join(out, f"trace_delta_{tag}.csv"),
            "t,mass,energy,orbital_distance,c_re,c_im",
            list(trace.rows()),
        )
    _write_csv(
        os.path.join(out, "stability.csv"),
        "delta,D,D_over_delta,mass_drift,energy_drift",
        [(r["delta"], r["D"], r["ratio"], r["mass_drift"], r["energy_drift"]) for r in rows],
    )
    _write_json(
        os.path.join(out, "evolve_run.json"),
        _run_config_json(
            args, cfg, params,
            {
                "omega": omega,
                "dt": config.dt,
                "t_final": config.t_final,
                "metric": metric,
                "deltas": deltas,
                "grid_n": egrid.n,
                "grid_r_max": egrid.r_max,
                "domain_truncated": omega == 0.0,
            },
        ),
    )
    finite = [r for r in rows if r["delta"] > 0.0]
    if any(r["ratio"] > 10.0 for r in finite):
        raise InvariantViolation("orbital excursion exceeded 10x the perturbation")
    return 0


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args, cfg)
    seed = int(_get(args, cfg, "seed", None, "seed", 0))
    failures = []

    def check(name, ok, detail=""):
        print(f"{'PASS' if ok else 'FAIL'}  {name}{(': ' + detail) if detail else ''}")
        if not ok:
            failures.append(name)

    rng = np.random.default_rng(seed)
    # spectral constants: defining root and closed forms
    worst = 0.0
    for _ in range(50):
        dim = int(rng.integers(2, 4))
        alpha = float(rng.uniform(-0.5, 0.5)) if dim == 2 else float(-rng.uniform(0.01, 0.5))
        P = special.InteractionParams(dim, alpha, 1.5)
        worst = max(worst, abs(P.alpha + special.beta(P, P.omega_alpha)))
    check("defining root alpha+beta(omega_alpha)=0", worst <= 1e-12, f"worst {worst:.1e}")

    # resolvent identity
    worst = 0.0
    P2 = special.InteractionParams(2, 0.1, 2.0)
    P3 = special.InteractionParams(3, -0.2, 1.5)
    for _ in range(100):
        lam, mu = rng.uniform(0.1, 100.0, 2)
        for P in (P2, P3):
            gi = special.green_inner(P, lam, mu)
            res = abs((lam - mu) * gi + special.beta(P, mu) - special.beta(P, lam))
            worst = max(worst, res / (1.0 + abs(special.beta(P, lam))))
    check("resolvent identity", worst <= 1e-10, f"worst {worst:.1e}")

    # form identities on random fields
    P = special.InteractionParams(3, -1.0 / (4.0 * math.pi), 1.5)
    g = gridmod.default_grid(P, 0.5, n=1024)
    asm = forms.FormAssembly(P, g)
    r = g.nodes
    worst_par = worst_lam = worst_sym = 0.0
    for _ in range(20):
        fu = rng.normal() * np.exp(-((r - 1.5) ** 2)) + 1j * rng.normal() * np.exp(-((r - 3.0) ** 2))
        fv = rng.normal() * np.exp(-((r - 2.0) ** 2)) + 1j * rng.normal() * np.exp(-(r - 1.0) ** 2)
        u = gridmod.DecomposedField(g, fu, complex(rng.normal(), rng.normal()), asm.lam)
        v = gridmod.DecomposedField(g, fv, complex(rng.normal(), rng.normal()), asm.lam)
        Qu, Qv = asm.quadratic(u), asm.quadratic(v)
        par = abs(asm.quadratic(u + v) + asm.quadratic(u - v) - 2 * Qu - 2 * Qv)
        worst_par = max(worst_par, par / (1.0 + abs(Qu) + abs(Qv)))
        u2 = gridmod.rebase(u, 0.5 * asm.lam)
        worst_lam = max(worst_lam, abs(asm.quadratic(u2) - Qu) / (1.0 + abs(Qu)))
        worst_sym = max(worst_sym, abs(asm.bilinear(u, v) - np.conj(asm.bilinear(v, u))))
    check("parallelogram identity", worst_par <= 1e-10, f"worst {worst_par:.1e}")
    check("lambda independence of Q", worst_lam <= 1e-8, f"worst {worst_lam:.1e}")
    check("sesquilinear symmetry", worst_sym <= 1e-10, f"worst {worst_sym:.1e}")

    # exact algebraic tail solution
    res = solver.veron_exact_residual(1.5, 3, np.geomspace(0.5, 50.0, 20))
    check("exact tail solution residual", res <= 1e-10, f"{res:.1e}")

    # comparison sandwich on a computed zero-mass profile
    P2d = special.InteractionParams(2, special.alpha_for_omega(2, 1.0), 2.0)
    shot = solver.shoot_profile(P2d, 0.0)
    rr = shot.profile.grid.nodes
    vals = shot.profile.values().real
    sel = rr >= 1.0
    ell = solver.veron_constant(2.0, 2)
    exact = ell * rr[sel] ** -2.0
    eps = min(1.0, exact[0] / vals[sel][0])
    ok_u = solver.comparison_sandwich_check(rr[sel], exact, vals[sel], eps)
    eps2 = min(1.0, vals[sel][0] / exact[0])
    ok_l = solver.comparison_sandwich_check(rr[sel], vals[sel], exact, eps2)
    check("comparison sandwich (both orders)", ok_u and ok_l)

    # eigenpair on the default grid
    gd_ = gridmod.default_grid(P, P.omega_alpha)
    asm2 = forms.FormAssembly(P, gd_)
    c_chi = 1.0 / math.sqrt(special.green_l2_norm_sq(P, P.omega_alpha))
    chi = gridmod.DecomposedField(gd_, np.zeros(gd_.n), c_chi, P.omega_alpha)
    qerr = abs(asm2.quadratic(chi) - P.e_alpha)
    merr = abs(asm2.mass(chi) - 1.0)
    check("eigenpair Q(chi)", qerr <= 2e-3 * abs(P.e_alpha), f"{qerr:.1e}")
    check("eigenpair mass(chi)", merr <= 1e-6, f"{merr:.1e}")

    _write_json(os.path.join(out, "verify.json"), {"failures": failures, "seed": seed})
    if failures:
        raise InvariantViolation("verification failures: " + ", ".join(failures))
    return 0


_COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "decay": cmd_decay,
    "evolve": cmd_evolve,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    except SolverError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
