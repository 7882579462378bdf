"""Command-line front end.

Every command validates its configuration before computing, writes data
files (CSV for time series, JSON for reports) and pairs each output with a
JSON manifest echoing the resolved configuration and library version.

Exit codes: 0 success, 1 configuration error, 2 numerical or audit
failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, fock, povm, scheme, sme
from . import gaussian as gc
from .errors import DomainError, GendyneError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

TRAJECTORY_COLUMNS = ("t", "dw1", "dw2", "theta1", "theta2", "mean_q", "mean_p",
                      "var_q", "var_p", "cov_qp", "trace_err")
ENSEMBLE_COLUMNS = ("t", "n_mean", "n_se", "n_lindblad", "mean_q", "mean_q_se", "mean_p",
                    "mean_p_se", "var_q", "var_q_se", "var_p", "var_p_se")


class ConfigError(Exception):
    pass


def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    path.write_text(text)


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.stem + ".manifest.json")


def _manifest(command: str, args: argparse.Namespace, extra: dict | None = None) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",)}
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}
    out = {"command": command, "config": cfg, "library": "gendyne", "version": __version__}
    if extra:
        out.update(extra)
    return out


def _table(columns, rows, fmt: str) -> str:
    if fmt == "json":
        return _json({c: [None if math.isnan(float(r[i])) else float(r[i]) for r in rows]
                      for i, c in enumerate(columns)})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


# -- validation -----------------------------------------------------------------

def _unravelling(args) -> povm.Unravelling:
    try:
        return povm.Unravelling(args.upsilon, args.n_bath)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def _sme_config(args, upsilon=None) -> sme.SmeConfig:
    un = _unravelling(args) if upsilon is None else povm.Unravelling(upsilon, args.n_bath)
    if args.t_final <= 0:
        raise ConfigError("--t-final must be positive")
    n_steps = int(round(args.t_final / args.dt))
    if abs(n_steps * args.dt - args.t_final) > 1e-9 * max(1.0, args.t_final):
        raise ConfigError("--t-final must be a multiple of --dt")
    try:
        return sme.SmeConfig(un, dt=args.dt, n_steps=n_steps, dim=args.dim, seed=args.seed,
                             engine=args.engine, scheme=args.scheme)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def _initial_state(args) -> gc.GaussianState:
    if args.n0 < 0:
        raise ConfigError("--n0 must be >= 0")
    alpha = complex(args.alpha.replace(" ", ""))
    return gc.GaussianState([2 * alpha.real, 2 * alpha.imag], (2 * args.n0 + 1) * np.eye(2))


# -- commands ---------------------------------------------------------------------

def _trajectory_rows(rec: sme.TrajectoryRecord):
    rows = []
    for i, t in enumerate(rec.times):
        step = i < len(rec.dw)
        dw = rec.dw[i] if step else (np.nan, np.nan)
        th = rec.theta[i] if step else (np.nan, np.nan)
        c = rec.cov[i]
        rows.append((t, dw[0], dw[1], th[0], th[1], rec.mean[i, 0], rec.mean[i, 1],
                     c[0, 0], c[1, 1], c[0, 1], rec.trace_err[i]))
    return rows


def cmd_trajectory(args) -> int:
    cfg = _sme_config(args)
    init = _initial_state(args)
    if args.out is None and cfg.engine == "both":
        raise ConfigError("--engine both writes two files and needs --out")
    result = sme.run_trajectory(cfg, init)
    records = result if cfg.engine == "both" else {cfg.engine: result}
    files = {}
    for name, rec in records.items():
        path = args.out
        if cfg.engine == "both":
            path = args.out.with_name(f"{args.out.stem}.{name}{args.out.suffix or '.csv'}")
        _write(path, _table(TRAJECTORY_COLUMNS, _trajectory_rows(rec), args.format))
        files[name] = str(path) if path else "<stdout>"
    extra = {"files": files, "degenerate": {k: list(r.degenerate) for k, r in records.items()}}
    if cfg.engine == "both":
        f, g = records["fock"], records["gaussian"]
        diff = {
            "max_abs_mean_diff": float(np.max(np.abs(f.mean - g.mean))),
            "max_abs_cov_diff": float(np.max(np.abs(f.cov - g.cov))),
            "final_mean_fock": f.mean[-1].tolist(),
            "final_mean_gaussian": g.mean[-1].tolist(),
        }
        diff_path = args.out.with_name(args.out.stem + ".diff.json")
        _write(diff_path, _json(diff))
        extra["diff"] = str(diff_path)
    if args.out is not None:
        _write(_manifest_path(args.out), _json(_manifest("trajectory", args, extra)))
    return EXIT_OK


def cmd_ensemble(args) -> int:
    cfg = _sme_config(args)
    if args.n_traj < 1:
        raise ConfigError("--n-traj must be >= 1")
    init = _initial_state(args)
    n0 = (np.trace(init.cov) + init.mean @ init.mean - 2) / 4
    stats = sme.run_ensemble(cfg, args.n_traj, init)
    stats = stats if cfg.engine == "both" else {cfg.engine: stats}
    files = {}
    for name, st in stats.items():
        ref = sme.thermal_photon_number(n0, args.n_bath, st.times)
        rows = [(t, st.photon_number[i], st.photon_number_se[i], ref[i],
                 st.mean[i, 0], st.mean_se[i, 0], st.mean[i, 1], st.mean_se[i, 1],
                 st.cond_var[i, 0], st.cond_var_se[i, 0], st.cond_var[i, 1], st.cond_var_se[i, 1])
                for i, t in enumerate(st.times)]
        path = args.out
        if cfg.engine == "both":
            if path is None:
                raise ConfigError("--engine both writes two files and needs --out")
            path = args.out.with_name(f"{args.out.stem}.{name}{args.out.suffix or '.csv'}")
        _write(path, _table(ENSEMBLE_COLUMNS, rows, args.format))
        files[name] = str(path) if path else "<stdout>"
    if args.out is not None:
        _write(_manifest_path(args.out), _json(_manifest("ensemble", args, {"files": files})))
    return EXIT_OK


def _verdict(value, tol, ok=None):
    ok = (value < tol) if ok is None else ok
    return {"value": float(value), "tolerance": float(tol), "pass": bool(ok)}


def cmd_povm_audit(args) -> int:
    un = _unravelling(args)
    if args.dim < 2 or args.dim > fock.MAX_DIM:
        raise ConfigError(f"--dim must lie in [2, {fock.MAX_DIM}]")
    u, n = un.upsilon, un.n_bath
    audits = {}
    dim_rho = max(args.dim, 40)
    rho = fock.thermal_density(n, dim_rho)
    if un.degenerate_axis is None:
        dev = np.max(np.abs(povm.completeness(u, args.dim) - np.eye(args.dim)))
        audits["completeness"] = _verdict(dev, 1e-3)
        grid = [complex(a, b) for a in (-1.0, 0.0, 1.5) for b in (-0.5, 0.0, 1.0)]
        audits["ode_residual"] = _verdict(max(povm.ode_residual(t, u) for t in grid), 1e-6)
        audits["fock_eigen_residual"] = _verdict(
            max(povm.povm_element(t, u, args.dim).eigen_residual() for t in grid), 1e-6)
        _, cov, _ = povm.outcome_moments(rho, u)
        audits["outcome_covariance"] = _verdict(np.max(np.abs(cov - un.outcome_cov)), 1e-8)
        if u == 0:
            pts = [(0.3, -0.2), (1.0, 0.5), (-1.2, 2.0)]
            p = povm.outcome_distribution(rho, u)
            husimi = [1 / (math.pi * (1 + n)) * math.exp(-(a * a + b * b) / (1 + n)) for a, b in pts]
            dev = max(abs(float(p(a, b)) - h) for (a, b), h in zip(pts, husimi))
            audits["husimi_q_law"] = _verdict(dev, 1e-8)
    else:
        # both quadratures of a thermal state share the homodyne variance
        law = povm.homodyne_limit_distribution(n)
        _, var = povm.outcome_marginal_moments(rho, u, axis=1 - un.degenerate_axis)
        audits["homodyne_variance"] = _verdict(abs(var / law.variance - 1), 1e-2)
    passed = all(a["pass"] for a in audits.values())
    report = {"upsilon": u, "n_bath": n, "dim": args.dim, "audits": audits, "pass": passed}
    _write(args.out, _json(report))
    if args.out is not None:
        _write(_manifest_path(args.out), _json(_manifest("povm-audit", args)))
    return EXIT_OK if passed else EXIT_NUMERICAL


def cmd_scheme_check(args) -> int:
    un = _unravelling(args)
    t = scheme.transmissivity_for(un.upsilon)
    if un.degenerate_axis is not None:
        raise ConfigError("scheme-check needs |upsilon| < 1; the homodyne branch has no eigenstate")
    theta = complex(args.theta.replace(" ", ""))
    residuals = {}
    for z in (0, 1, 1 + 1j, -0.5 + 2j):
        residuals[str(complex(z))] = scheme.eigenstate_params(z, t).eigen_residual(args.dim)
    cc = scheme.scheme_povm_crosscheck(un.upsilon, theta, args.dim)
    eig = scheme.eigenstate_for_theta(theta, un.upsilon)
    audits = {
        "eigen_residual": _verdict(max(residuals.values()), 1e-6),
        "overlap_direct": _verdict(1 - cc.direct, scheme.OVERLAP_TOL),
        "overlap_limit": _verdict(1 - cc.limit, scheme.OVERLAP_TOL),
        "overlap_extrapolated": _verdict(1 - cc.extrapolated, scheme.OVERLAP_TOL),
    }
    passed = all(a["pass"] for a in audits.values())
    report = {
        "upsilon": un.upsilon, "transmissivity": t, "theta": [theta.real, theta.imag],
        "beta": [eig.beta.real, eig.beta.imag], "r": eig.r,
        "eigen_residuals": residuals,
        "convergence": {"s": list(cc.squeezings),
                        "overlap": [None if math.isnan(f) else f for f in cc.curve]},
        "audits": audits, "pass": passed,
    }
    _write(args.out, _json(report))
    if args.out is not None:
        _write(_manifest_path(args.out), _json(_manifest("scheme-check", args)))
    return EXIT_OK if passed else EXIT_NUMERICAL


def cmd_scheme_sample(args) -> int:
    un = _unravelling(args)
    if args.n_samples < 2:
        raise ConfigError("--n-samples must be >= 2")
    init = _initial_state(args)
    rng = np.random.default_rng(args.seed)
    theta = scheme.scheme_outcome_sample(init, un.upsilon, rng, size=args.n_samples)
    live = ~np.all(np.isnan(theta), axis=0)
    emp = np.full((2, 2), np.nan)
    sub = theta[:, live]
    emp[np.ix_(live, live)] = np.atleast_2d(np.cov(sub, rowvar=False))
    scale = np.diag([(1 + un.upsilon) / 2, (1 - un.upsilon) / 2])
    pred = scale @ init.cov @ scale + (1 - un.upsilon ** 2) / 4 * np.eye(2)
    se = np.sqrt((pred ** 2 + np.outer(np.diag(pred), np.diag(pred))) / (args.n_samples - 1))
    z = np.abs(emp - pred) / se
    ok = bool(np.all(z[np.ix_(live, live)] < 3))
    report = {
        "upsilon": un.upsilon, "n_samples": args.n_samples, "seed": args.seed,
        "empirical_cov": [[None if math.isnan(x) else float(x) for x in row] for row in emp],
        "predicted_cov": pred.tolist(),
        "standard_error": se.tolist(),
        "pass": ok,
    }
    if args.out is not None:
        samples = args.out.with_name(args.out.stem + ".samples.csv")
        _write(samples, _table(("theta1", "theta2"), theta, "csv"))
        report["samples"] = str(samples)
        _write(_manifest_path(args.out), _json(_manifest("scheme-sample", args)))
    _write(args.out, _json(report))
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_steady_scan(args) -> int:
    ups = sorted(set(args.upsilon))
    cfgs = [_sme_config(args, upsilon=u) for u in ups]
    if args.n_traj < 1:
        raise ConfigError("--n-traj must be >= 1")
    init = _initial_state(args)
    target = 2 * args.n_bath + 1
    bound = 1 / target
    rows = []
    for u, cfg in zip(ups, cfgs):
        est = sme.steady_state_variance(cfg, args.n_traj, init, args.t_final / 2)
        for name, (v, e) in sorted(est.items()):
            rows.append({"upsilon": u, "engine": name, "var_q": v, "error": e,
                         "rel_dev": abs(v / target - 1)})
    min_var = min(r["var_q"] for r in rows)
    ok = all(r["rel_dev"] < 0.05 for r in rows)
    report = {
        "n_bath": args.n_bath, "thermal_variance": target, "bound": bound,
        "rows": rows, "min_var_q": min_var,
        "verdict": "saturated" if min_var <= bound * 1.05 else "NOT saturated",
        "pass": ok,
    }
    if args.format == "csv":
        text = _table(("upsilon", "var_q", "error", "rel_dev"),
                      [(r["upsilon"], r["var_q"], r["error"], r["rel_dev"]) for r in rows], "csv")
        _write(args.out, text)
    else:
        _write(args.out, _json(report))
    if args.out is not None:
        _write(_manifest_path(args.out), _json(_manifest("steady-scan", args, {"report": report})))
    return EXIT_OK if report["pass"] else EXIT_NUMERICAL


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gendyne", description="General-dyne monitoring toolkit")
    p.add_argument("--version", action="version", version=f"gendyne {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, upsilon_many=False, dt=1e-3, t_final=1.0, n_traj=100, dim=30):
        if upsilon_many:
            sp.add_argument("--upsilon", type=float, nargs="+",
                            default=[-0.9, -0.5, 0.0, 0.5, 0.9])
        else:
            sp.add_argument("--upsilon", type=float, default=0.0)
        sp.add_argument("--n-bath", type=float, default=0.0)
        sp.add_argument("--dt", type=float, default=dt)
        sp.add_argument("--t-final", type=float, default=t_final)
        sp.add_argument("--n-traj", type=int, default=n_traj)
        sp.add_argument("--dim", type=int, default=dim)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--engine", choices=sme.ENGINES, default="fock")
        sp.add_argument("--scheme", choices=sme.SCHEMES, default="euler",
                        help="Fock-engine integrator")
        sp.add_argument("--n0", type=float, default=0.2,
                        help="thermal photon number of the initial state")
        sp.add_argument("--alpha", default="0", help="initial displacement, e.g. 1+0.5j")
        sp.add_argument("--out", type=Path, default=None)
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("trajectory", help="one conditional trajectory")
    common(sp)
    sp.set_defaults(func=cmd_trajectory)

    sp = sub.add_parser("ensemble", help="ensemble statistics of conditional moments")
    common(sp)
    sp.set_defaults(func=cmd_ensemble)

    sp = sub.add_parser("povm-audit", help="completeness, eigen-residual and statistics audits")
    common(sp, dim=15)
    sp.set_defaults(func=cmd_povm_audit, format="json")

    sp = sub.add_parser("scheme-check", help="double-homodyne eigenstate checks")
    common(sp, dim=40)
    sp.add_argument("--theta", default="1", help="eigenvalue to cross-check, e.g. 1+0.5j")
    sp.set_defaults(func=cmd_scheme_check, format="json")

    sp = sub.add_parser("scheme-sample", help="sample rescaled double-homodyne outcomes")
    common(sp)
    sp.add_argument("--n-samples", type=int, default=100000)
    sp.set_defaults(func=cmd_scheme_sample, format="json", n0=None)

    sp = sub.add_parser("steady-scan", help="steady conditional variance versus upsilon")
    common(sp, upsilon_many=True, t_final=8.0, n_traj=20)
    sp.set_defaults(func=cmd_steady_scan, format="json")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "scheme-sample" and args.n0 is None:
        args.n0 = args.n_bath
    try:
        return args.func(args)
    except (ConfigError, DomainError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, GendyneError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
