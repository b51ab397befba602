"""Command line: fundsep [global flags] <command> [command flags].

Exit codes: 0 ok, 1 parse/config error, 2 model assumption violated,
3 a verification check (or --check digest comparison) failed.
"""
from __future__ import annotations

import argparse
import math
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import EXPERIMENT_KEYS, load_config, resolve_config
from .convergence import fit_decay_rate, stationary_mean
from .errors import CheckFailed, ConfigError, FundsepError
from .feynman_kac import (_est, estimate_f, estimate_moment_32, gaussian_f_oracle, hs_identity, f_martingale_check,
                          moment_32_hyp1f1)
from .io import RunManifest, file_digest, read_manifest, write_csv, write_plot_data
from .kalman import (filter_log_returns, ingest_prices, mean_square_error, riccati_residual, run_filter,
                     simulate_joint, steady_state_variance, write_prices)
from .model import FILTERED_OU, THREE_HALVES, Dynamics, derive_constants, eigen_residual
from .portfolio import dynamic_portfolio, fund_table, static_portfolio
from .sde import simulate, simulate_dynamics, girsanov_weight
from .sensitivity import sensitivity_report, static_sensitivity

COMMANDS = ("derive", "portfolio", "simulate", "verify-hs", "rate", "sens", "filter", "report")


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; we reserve 2 for assumption failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="TOML configuration file")
    p.add_argument("--model", default=d, help="default model kind when the config has no [model] kind")
    p.add_argument("--seed", type=int, default=d)
    p.add_argument("--paths", type=int, default=d, help="number of Monte Carlo paths")
    p.add_argument("--dt", type=float, default=d)
    p.add_argument("--out-dir", default=d, help="output directory (default: out)")
    p.add_argument("--expensive", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="also run nested Monte Carlo checks")
    p.add_argument("--check", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="re-run and compare output digests with the stored manifest")
    p.add_argument("--static", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="static (T = infinity) quantities only, no simulation")
    p.add_argument("--myopic-scaling", choices=("linear", "sqrt"), default=d)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fundsep", description="Fund separation under stochastic opportunity sets.")
    parser.add_argument("--version", action="version", version=__version__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    helps = {
        "derive": "print derived constants and the eigen residual",
        "portfolio": "fund decomposition of the optimal portfolio",
        "simulate": "simulate the state and summarise it at record times",
        "verify-hs": "run the factorisation and oracle checks",
        "rate": "fit the decay rate of the intertemporal weight",
        "sens": "portfolio sensitivities and the decay of their gap",
        "filter": "Kalman filter on synthetic or supplied prices",
        "report": "summarise manifests in the output directory",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        _global_flags(p, suppress=True)
        if name in ("portfolio", "simulate", "rate", "sens", "verify-hs"):
            p.add_argument("--z", type=float)
        if name == "portfolio":
            p.add_argument("--t", type=float)
            p.add_argument("--T", type=float)
            p.add_argument("--method", choices=("mc", "exact"))
        if name in ("portfolio", "rate", "sens"):
            p.add_argument("--representation", choices=("tilde", "hat"))
        if name == "simulate":
            p.add_argument("--measure", choices=("P", "PTilde", "PHat", "PBar"))
            p.add_argument("--horizon", type=float)
        if name == "sens":
            p.add_argument("--parameter", choices=("z", "b", "a", "sigma"))
        if name == "filter":
            p.add_argument("--prices", help="price CSV with header time,asset_1..asset_n")
    return parser


def _overrides(args) -> dict:
    out = {}
    for key in ("z", "t", "T", "method", "representation", "measure", "horizon", "parameter", "prices"):
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    if getattr(args, "myopic_scaling", None):
        out["scaling"] = args.myopic_scaling
    return out


def _resolve(args):
    data = load_config(args.config) if args.config else {}
    exp = dict(data.get("experiment", {}))
    exp.update(_overrides(args))
    unknown = set(exp) - EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s) in [experiment]: {', '.join(sorted(unknown))}")
    data = dict(data)
    data["experiment"] = exp
    return resolve_config(data, kind=args.model, seed=args.seed, paths=args.paths, dt=args.dt)


# --- helpers -----------------------------------------------------------------------------


def _state(rc, consts, key="z"):
    if key in rc.experiment:
        return float(rc.experiment[key])
    return stationary_mean(rc.model, consts)


def _eigen_grid(model, consts):
    if model.kind == FILTERED_OU:
        return np.linspace(-3.0, 3.0, 50)
    return np.geomspace(0.05, 20.0, 50)


def _print_table(rows):
    w = max(len(str(r[0])) for r in rows)
    for k, v in rows:
        print(f"{str(k):<{w}}  {v}")


def _fmt_val(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(f"{float(x):.10g}" for x in v) + "]"
    return str(v)


# --- commands --------------------------------------------------------------------------------


def cmd_derive(rc, out: Path, args) -> list:
    c = derive_constants(rc.spec, rc.model)
    rows = [("model", rc.model.kind), ("q", c.q), ("delta", c.delta), ("theta", c.theta), ("kappa", c.kappa),
            ("eta", c.eta), ("xi", c.xi), ("zeta", c.zeta), ("lambda", c.lam), ("lambda_hat", c.lam_hat),
            ("P0", c.P0), ("assumption_ok", c.assumption_ok)]
    if c.assumption_ok:
        rows.append(("eigen_residual", eigen_residual(rc.model, c, _eigen_grid(rc.model, c))))
    _print_table([(k, _fmt_val(v)) for k, v in rows])
    flat = []
    for k, v in rows:
        if isinstance(v, np.ndarray):
            flat += [(f"{k}_{i + 1}", float(x)) for i, x in enumerate(v)]
        else:
            flat.append((k, v))
    path = write_csv(out / "derive.csv", ["quantity", "value"], flat)
    if not c.assumption_ok:
        print(f"assumption violated: {c.assumption_note}", file=sys.stderr)
    c.require()
    return [path]


def cmd_portfolio(rc, out, args) -> list:
    spec, model = rc.spec, rc.model
    c = derive_constants(spec, model).require()
    exp = rc.experiment
    scaling = exp.get("scaling", "linear")
    z = _state(rc, c)
    t = float(exp.get("t", 0.0))
    T = float(exp.get("T", 5.0))
    name = model.kind
    rows = []
    funds = fund_table(spec, model, c, scaling)
    if args.static:
        total = static_portfolio(spec, model, c, z, scaling)
        for f in funds:
            if not f.static or f.weight is None:
                continue
            for i, v in enumerate(f.vector(z)):
                rows.append((name, z, t, "inf", f.name, f.weight, i + 1, float(v), 0.0))
        for i, v in enumerate(total):
            rows.append((name, z, t, "inf", "total", 1.0, i + 1, float(v), 0.0))
        rows.append((name, z, t, "inf", "safe", 1.0, 0, 1.0 - float(total.sum()), 0.0))
        print(f"static portfolio at z={z:.6g}: {_fmt_val(total)}")
    else:
        d = dynamic_portfolio(spec, model, c, z, t, T, rc.sim, exp.get("representation", "tilde"),
                              exp.get("method", "mc"), scaling)
        for f in funds:
            if f.weight is None:
                continue
            for i, v in enumerate(f.vector(z)):
                rows.append((name, z, t, T, f.name, f.weight, i + 1, float(v), 0.0))
        w = d.intertemporal_weight
        iw = d.scale * w.value
        for i, v in enumerate(d.intertemporal_direction):
            rows.append((name, z, t, T, "intertemporal", iw, i + 1, float(v), float(d.total_dynamic_se[i])))
        for i, v in enumerate(d.total_dynamic):
            rows.append((name, z, t, T, "total", 1.0, i + 1, float(v), float(d.total_dynamic_se[i])))
        se_sum = abs(d.scale * float(d.intertemporal_direction.sum())) * w.std_error
        rows.append((name, z, t, T, "safe", 1.0, 0, 1.0 - float(d.total_dynamic.sum()), se_sum))
        print(f"dynamic portfolio at z={z:.6g}, t={t:g}, T={T:g}: {_fmt_val(d.total_dynamic)}")
        print(f"intertemporal weight f_z/f = {w.value:.6g} +- {w.std_error:.2g}")
    header = ["model", "z", "t", "T", "fund", "weight", "component_index", "value", "std_error"]
    return [write_csv(out / "portfolio.csv", header, rows)]


def cmd_simulate(rc, out, args) -> list:
    c = derive_constants(rc.spec, rc.model)
    exp = rc.experiment
    measure = exp.get("measure", "PTilde")
    if measure != "P":
        c.require()
    z = float(exp["z"]) if "z" in exp else (stationary_mean(rc.model, c) if c.assumption_ok else 1.0)
    horizon = float(exp.get("horizon", 1.0))
    times = exp.get("record_times") or list(np.linspace(0.0, horizon, 11))
    cfg = rc.sim.with_(horizon=horizon, record_times=tuple(times))
    batch = simulate(rc.model, c, measure, z, cfg)
    rows = []
    for j, t in enumerate(batch.times):
        x = batch.states[:, j]
        e = _est(x, cfg)
        rows.append((float(t), e.value, e.std_error, float(x.std(ddof=1)), float(x.min()), float(x.max())))
    print(f"simulated {cfg.n_paths} paths under {measure} from z={z:.6g}; clamps={batch.clamp_count}")
    print(f"Z_T mean {rows[-1][1]:.6g} +- {rows[-1][2]:.2g}")
    return [write_csv(out / "simulate.csv", ["t", "mean", "std_error", "sd", "min", "max"], rows)]


def _hs_points(model, c, exp):
    if "hs_z" in exp:
        return [float(x) for x in exp["hs_z"]]
    m = stationary_mean(model, c)
    if model.kind == FILTERED_OU:
        sd = math.sqrt(c.theta_norm2 / (2.0 * c.lam_hat))
        return [m - sd, m, m + sd]
    return [0.5 * m, m, 2.0 * m]


def cmd_verify_hs(rc, out, args) -> list:
    spec, model, cfg = rc.spec, rc.model, rc.sim
    c = derive_constants(spec, model).require()
    exp = rc.experiment
    ts = [float(t) for t in exp.get("hs_times", [0.5, 1.0, 2.0])]
    zs = [float(exp["z"])] if "z" in exp else _hs_points(model, c, exp)
    rows = []

    def record(check, t, z, est, ref, se, tol_z=3.0, abs_tol=None):
        if abs_tol is not None:
            score = abs(est - ref)
            ok = score <= abs_tol
            tol = abs_tol
        else:
            score = abs(est - ref) / se if se > 0 else (0.0 if est == ref else math.inf)
            ok = score <= tol_z
            tol = tol_z
        rows.append((check, t, z, est, ref, se, score, tol, ok))

    for i, z in enumerate(zs):
        for t in ts:
            u, ef = hs_identity(model, c, z, t, cfg, seed_u=cfg.seed + 10 * i, seed_f=cfg.seed + 10 * i + 1)
            record("hs_identity", t, z, u.value, ef.value, math.hypot(u.std_error, ef.std_error))
    z0 = zs[len(zs) // 2]
    name = "int_z" if model.kind == THREE_HALVES else "int_z2"
    gcfg = cfg.with_(horizon=max(ts), record_times=tuple(ts), seed=cfg.seed + 101)
    batch = simulate(model, c, "P", z0, gcfg, [name])
    for t in ts:
        e = _est(girsanov_weight(model, c, batch, "P", "PTilde", t), gcfg)
        record("girsanov_P_PTilde", t, z0, e.value, 1.0, e.std_error)
    if model.kind != FILTERED_OU:
        batch = simulate(model, c, "PTilde", z0, gcfg.with_(seed=cfg.seed + 102), [name])
        for t in ts:
            e = _est(girsanov_weight(model, c, batch, "PTilde", "PHat", t), gcfg)
            record("girsanov_PTilde_PHat", t, z0, e.value, 1.0, e.std_error)
    if model.kind == THREE_HALVES:
        kappa = 2.0 * model.a / model.sigma ** 2 + 1.0
        dyn = Dynamics(THREE_HALVES, "P", model.b, model.a, model.sigma)
        mcfg = cfg.with_(horizon=2.0, record_times=(0.5, 2.0), seed=cfg.seed + 103)
        mb = simulate_dynamics(dyn, z0, mcfg)
        for nu in (0.5, 0.5 * kappa):
            for t in (0.5, 2.0):
                quadv = estimate_moment_32(model, z0, nu, t)
                record(f"moment_nu={nu:g}_hyp1f1", t, z0, quadv, moment_32_hyp1f1(model, z0, nu, t), 0.0,
                       abs_tol=1e-8 * max(1.0, abs(quadv)))
                e = _est(mb.at(t) ** nu, mcfg)
                record(f"moment_nu={nu:g}_mc", t, z0, e.value, quadv, e.std_error)
    if model.kind == FILTERED_OU:
        for i, z in enumerate(zs):
            for t in ts:
                ef = estimate_f(model, c, z, t, cfg.with_(seed=cfg.seed + 200 + i))
                record("gaussian_oracle", t, z, ef.value, float(gaussian_f_oracle(c, z, t)), ef.std_error)
    if model.kind == FILTERED_OU or args.expensive:
        n_out = min(cfg.n_paths, 2000 if model.kind != FILTERED_OU else cfg.n_paths)
        e = f_martingale_check(model, c, z0, max(ts), 0.5 * max(ts), cfg.with_(n_paths=n_out, seed=cfg.seed + 301))
        record("f_martingale", 0.5 * max(ts), z0, e.value, 1.0, e.std_error)
    header = ["check", "t", "z", "estimate", "reference", "std_error", "score", "tolerance", "passed"]
    path = write_csv(out / "verify_hs.csv", header, rows)
    failed = [r for r in rows if not r[-1]]
    for r in rows:
        print(f"{'PASS' if r[-1] else 'FAIL'}  {r[0]:<24} t={r[1]:<5g} z={r[2]:<10.5g} score={r[6]:.3g}")
    if failed:
        raise CheckFailed(f"{len(failed)} of {len(rows)} checks failed")
    return [path]


def cmd_rate(rc, out, args) -> list:
    model = rc.model
    c = derive_constants(rc.spec, model).require()
    exp = rc.experiment
    z = _state(rc, c)
    grid = exp.get("t_grid") or list(np.linspace(1.0, 6.0, 11))
    rep = exp.get("representation", "tilde")
    burn = exp.get("burn_in")
    fit = fit_decay_rate(model, c, z, grid, rc.sim, rep, burn_in=burn)
    resc = fit.rescaled()
    rows = [(t, v, s, r) for t, v, s, r in zip(fit.t_grid, fit.values, fit.std_errors, resc)]
    p1 = write_csv(out / "rate.csv", ["t", "estimate", "std_error", "rescaled"], rows)
    bound = float(exp.get("sandwich_bound", 10.0))
    ratio = float(resc.max() / resc.min())
    summary = [("slope", fit.slope), ("intercept", fit.intercept), ("r_squared", fit.r_squared),
               ("fitted_rate", fit.fitted_rate), ("analytic_rate", fit.analytic_rate),
               ("rel_error", fit.rel_error), ("z", z), ("rescaled_ratio", ratio), ("sandwich_bound", bound),
               ("sandwich_passed", ratio <= bound)]
    p2 = write_csv(out / "rate_summary.csv", ["quantity", "value"], summary)
    p3 = write_plot_data(out / "rate.dat", ["t", "log_abs_weight", "std_error_of_log"],
                         [(t, math.log(v), s / v) for t, v, s in zip(fit.t_grid, fit.values, fit.std_errors)],
                         comment=f"fitted slope {fit.slope!r}")
    print(f"fitted rate {fit.fitted_rate:.6g}  analytic lambda_hat {fit.analytic_rate:.6g}  "
          f"relative error {fit.rel_error:.3%}  r^2 {fit.r_squared:.4f}")
    print(f"rescaled weight max/min {ratio:.3g} (bound {bound:g})")
    return [p1, p2, p3]


def cmd_sens(rc, out, args) -> list:
    spec, model = rc.spec, rc.model
    c = derive_constants(spec, model).require()
    exp = rc.experiment
    z = _state(rc, c)
    par = exp.get("parameter", "z")
    scaling = exp.get("scaling", "linear")
    if args.static:
        s = static_sensitivity(spec, model, c, z, par, scaling)
        print(f"static sensitivity d pi_inf / d {par}: {_fmt_val(s)}")
        return [write_csv(out / "sens.csv", ["component_index", "static"], [(i + 1, float(v)) for i, v in enumerate(s)])]
    T_grid = exp.get("T_grid") or [k / c.lam_hat for k in (2.0, 4.0, 6.0, 8.0)]
    rep = sensitivity_report(spec, model, c, z, par, T_grid, rc.sim, t=float(exp.get("t", 0.0)),
                             representation=exp.get("representation", "tilde"), scaling=scaling)
    rows = []
    for k, T in enumerate(rep.T_grid):
        for i in range(spec.n):
            rows.append((T, i + 1, float(rep.dynamic_sens[k, i]), float(rep.dynamic_se[k, i]),
                         float(rep.static_sens[i]), rep.gap_norm[k], rep.gap_se[k]))
    p1 = write_csv(out / "sens.csv", ["T", "component_index", "dynamic", "dynamic_se", "static", "gap_norm", "gap_se"], rows)
    summary = [("parameter", par), ("z", z), ("fitted_rate", rep.fitted_rate), ("analytic_rate", c.lam_hat),
               ("r_squared", rep.r_squared), ("crn_checksums_equal", rep.checksums_equal)]
    if rep.envelope is not None:
        summary += [("envelope_C", rep.envelope.C), ("envelope_degree", rep.envelope.degree),
                    ("envelope_residual", rep.envelope.residual)]
    p2 = write_csv(out / "sens_summary.csv", ["quantity", "value"], summary)
    p3 = write_plot_data(out / "sens.dat", ["T", "gap_norm", "gap_se"], zip(rep.T_grid, rep.gap_norm, rep.gap_se))
    print(f"gap |d pi_T/d {par} - d pi_inf/d {par}| over T: " + ", ".join(f"{g:.4g}" for g in rep.gap_norm))
    print(f"fitted decay rate {rep.fitted_rate:.6g} (lambda_hat {c.lam_hat:.6g})")
    return [p1, p2, p3]


def cmd_filter(rc, out, args) -> list:
    spec, model = rc.spec, rc.model
    if model.kind != FILTERED_OU:
        raise ConfigError("filter needs the filtered OU model ([model] kind = \"fou\")")
    exp = rc.experiment
    P0 = steady_state_variance(spec, model)
    res = riccati_residual(spec, model, P0)
    y0 = exp.get("y0_hat")
    outputs = []
    summary = [("P0", P0), ("riccati_residual", res)]
    if "prices" in exp:
        series = ingest_prices(exp["prices"])
        fr = run_filter(spec, model, P0, series, y0)
        times, yh, nu = fr.times, fr.y_hat, fr.innovations
    else:
        horizon = float(exp.get("filter_horizon", 50.0 / model.a))
        dt = float(exp.get("filter_dt", rc.sim.dt))
        n = int(exp.get("filter_paths", 16))
        cfg = rc.sim.with_(dt=dt, horizon=horizon, n_paths=max(n, 2), antithetic=False)
        js = simulate_joint(spec, model, cfg)
        series = js.price_series(0)
        outputs.append(out / "filter_prices.csv")
        write_prices(outputs[-1], series)
        yh_all, nu_all = filter_log_returns(spec, model, P0, np.diff(js.log_prices[:n], axis=1), cfg.step, y0)
        start = int(round(5.0 / model.a / cfg.step))
        mse = mean_square_error(js.true_path[:n], yh_all, start)
        summary += [("mean_square_error", mse), ("mse_over_P0", mse / P0)]
        times, yh, nu = js.times, yh_all[0], nu_all[0]
        print(f"mean-square filter error {mse:.6g} vs P0 {P0:.6g} (ratio {mse / P0:.4f})")
    gain = spec.solve_sigma_t(P0 * spec.mu + model.sigma * spec.rho)
    summary += [(f"gain_{i + 1}", float(g)) for i, g in enumerate(gain)]
    rows = []
    for k, t in enumerate(times):
        inn = [None] * spec.n if k == 0 else [float(x) for x in nu[k - 1]]
        rows.append([float(t), float(yh[k])] + inn)
    header = ["time", "y_hat"] + [f"innovation_{i + 1}" for i in range(spec.n)]
    outputs.insert(0, write_csv(out / "filter.csv", header, rows))
    outputs.append(write_csv(out / "filter_summary.csv", ["quantity", "value"], summary))
    print(f"P0 {P0:.10g}  Riccati residual {res:.3g}  final y_hat {float(yh[-1]):.6g}")
    return outputs


def cmd_report(rc, out, args) -> list:
    src = Path(args.out_dir or "out")
    manifests = sorted(src.glob("*.manifest.json"))
    rows = []
    bad = 0
    for mpath in manifests:
        m = read_manifest(mpath)
        for fname, digest in sorted(m.outputs.items()):
            f = src / fname
            ok = f.exists() and file_digest(f) == digest
            bad += not ok
            rows.append((m.command, fname, digest, m.config_hash, m.seed, ok))
            print(f"{'ok ' if ok else 'BAD'} {m.command:<10} {fname:<22} {digest[:16]}")
    if not manifests:
        print(f"no manifests in {src}")
    path = write_csv(out / "report.csv", ["command", "file", "sha256", "config_hash", "seed", "digest_ok"], rows)
    if bad:
        raise CheckFailed(f"{bad} output file(s) missing or changed since their manifest was written")
    return [path]


HANDLERS = {
    "derive": cmd_derive, "portfolio": cmd_portfolio, "simulate": cmd_simulate, "verify-hs": cmd_verify_hs,
    "rate": cmd_rate, "sens": cmd_sens, "filter": cmd_filter, "report": cmd_report,
}


def _run(args) -> int:
    rc = _resolve(args)
    out_dir = Path(args.out_dir or "out")
    command = args.command
    stem = command.replace("-", "_")
    if args.check:
        mpath = out_dir / f"{stem}.manifest.json"
        if not mpath.exists():
            raise CheckFailed(f"--check: no manifest {mpath} to compare against")
        old = read_manifest(mpath)
        tmp = Path(tempfile.mkdtemp(prefix="fundsep-check-"))
        try:
            paths = HANDLERS[command](rc, tmp, args)
            new = {p.name: file_digest(p) for p in paths}
        finally:
            shutil.rmtree(tmp, ignore_errors=True)
        diff = sorted(k for k in set(new) | set(old.outputs) if new.get(k) != old.outputs.get(k))
        if old.config_hash != rc.config_hash:
            raise CheckFailed("--check: configuration differs from the stored manifest")
        if diff:
            raise CheckFailed(f"--check: digests differ for {', '.join(diff)}")
        print(f"--check: {len(new)} file(s) reproduced bit-identically")
        return 0
    out_dir.mkdir(parents=True, exist_ok=True)
    man = RunManifest(rc.config_hash, rc.sim.seed, __version__, stem)
    try:
        paths = HANDLERS[command](rc, out_dir, args)
    except CheckFailed:
        # keep the evidence of a failed verification
        written = {"verify-hs": ["verify_hs.csv"], "report": ["report.csv"]}.get(command, [])
        for name in written:
            if (out_dir / name).exists():
                man.add(out_dir / name)
        man.write(out_dir)
        raise
    for p in paths:
        man.add(p)
    man.write(out_dir)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key, default in (("config", None), ("model", None), ("seed", None), ("paths", None), ("dt", None),
                         ("out_dir", None), ("expensive", False), ("check", False), ("static", False),
                         ("myopic_scaling", None)):
        if not hasattr(args, key):
            setattr(args, key, default)
    try:
        return _run(args)
    except FundsepError as exc:
        print(f"fundsep {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
