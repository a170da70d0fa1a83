"""Command-line experiment runner.

    kac-relax <subcommand> --config PATH [--seed N] [--out DIR] [--svg]

Exit codes: 0 success, 2 configuration error, 3 numerical-quality error,
4 resource limit.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds, mckean, metrics, report
from .config import SUBCOMMANDS, load_config
from .errors import (
    ConfigError,
    InsufficientDataError,
    InternalInconsistencyError,
    KacRelaxError,
    UnsupportedOperationError,
)
from .grids import DensityGrid
from .initial_data import make_datum, symmetrize
from .wild_solver import (
    cf_moment,
    solution_density,
    solution_moment4,
    solve_times,
    write_solution_csv,
)


def build_datum(spec):
    if "family" not in spec:
        return None
    datum = make_datum({k: v for k, v in spec.items() if k != "symmetrize"})
    return symmetrize(datum) if spec.get("symmetrize") else datum


def _tag(t):
    return f"{t:g}".replace(".", "p")


def _out(cfg, name):
    return cfg.out_dir / name


def _equilibrium(datum, grid_like):
    return metrics.gaussian_density(grid_like.v, datum.m2)


def _theorem_constant(datum):
    """Constant for ``C e^{-t/4}``, or None when the datum is outside its hypotheses."""
    if not datum.symmetric or datum.m4 is None or not math.isfinite(datum.m4):
        return None, None
    try:
        env = bounds.gamma_envelope(datum)
        prof = datum.tail_profile()
        return bounds.theorem_constant(datum.m4, datum.sigma, prof.p, prof.L_p, env), env
    except (KacRelaxError, ValueError):
        return None, None


def _theorem_bound(const, t):
    if const is None:
        return math.nan
    log10_b = const.log10_C_total - t / (4.0 * math.log(10.0))
    return 10.0**log10_b if log10_b < 308 else math.inf


# ------------------------------------------------------------- subcommands


def cmd_solve(cfg, datum):
    written = []
    rows = []
    dens = {}
    for sol in solve_times(datum, cfg.times, cfg.solver):
        path = _out(cfg, f"cf_t{_tag(sol.t)}.csv")
        write_solution_csv(path, sol)
        written.append(path)
        m4_closed = math.nan
        try:
            m4_closed = solution_moment4(datum, sol.t)
        except (UnsupportedOperationError, TypeError):
            pass
        mass = math.nan
        if datum.has_density:
            d = solution_density(datum, sol, cfg.run["v_max"], cfg.run["n_v"], taper=cfg.run["taper"])
            mass = d.mass()
            dens[sol.t] = d
            path = _out(cfg, f"density_t{_tag(sol.t)}.csv")
            report.write_csv(path, ["v", "f"], zip(d.v, d.values), {"t": sol.t})
            written.append(path)
        rows.append((
            sol.t, sol.truncation_N, sol.steps, sol.tail_bound,
            cf_moment(sol.cf, 2), cf_moment(sol.cf, 4), m4_closed, mass,
        ))
    path = _out(cfg, "solve_summary.csv")
    report.write_csv(
        path, ["t", "truncation_N", "steps", "tail_bound", "m2_cf", "m4_cf", "m4_closed", "mass"], rows
    )
    written.append(path)
    if cfg.emit_svg and dens:
        any_d = next(iter(dens.values()))
        series = {f"t={t:g}": d.values for t, d in dens.items()}
        if datum.m2:
            series["equilibrium"] = _equilibrium(datum, any_d)
        path = _out(cfg, "density.svg")
        report.line_plot(path, any_d.v, series, "v", "f(v, t)")
        written.append(path)
    return written


def cmd_relax_rate(cfg, datum):
    if datum.m2 is None:
        raise UnsupportedOperationError("relax-rate needs a datum with finite energy")
    const, _ = _theorem_constant(datum)
    rows = []
    times, dists, floors = [], [], []
    for sol in solve_times(datum, cfg.times, cfg.solver):
        d = solution_density(datum, sol, cfg.run["v_max"], cfg.run["n_v"], taper=cfg.run["taper"])
        g = DensityGrid(d.v_max, d.n_points, _equilibrium(datum, d))
        l1 = metrics.l1_distance(d, g)
        gauss_cf = np.exp(-0.5 * datum.m2 * sol.cf.xi**2)
        diff = sol.cf.like(sol.cf.values - gauss_cf)
        # cutting the H1 integrals at xi_max can only lower the right-hand side
        h1 = metrics.h1_fourier_norm(diff, decay_tol=None)
        holds = math.sqrt(2.0) * l1 <= h1 + metrics.BEURLING_SLACK
        bound = _theorem_bound(const, sol.t)
        rows.append((sol.t, l1, h1 / math.sqrt(2.0), bound, holds, sol.tail_bound))
        times.append(sol.t)
        dists.append(l1)
        floors.append(10.0 * sol.tail_bound)
    path = _out(cfg, "relax_rate.csv")
    report.write_csv(
        path, ["t", "l1_distance", "h1_bound", "theorem_bound", "beurling_holds", "tail_bound"], rows
    )
    written = [path]
    try:
        fit = metrics.fit_decay_rate(times, dists, floors)
        fit_row = (fit.rate, fit.log_intercept, fit.r_squared, fit.points_used, "ok")
    except InsufficientDataError:
        fit = None
        fit_row = (math.nan, math.nan, math.nan, 0, "insufficient")
    path = _out(cfg, "rate_fit.csv")
    report.write_csv(path, ["rate", "log_intercept", "r_squared", "points_used", "status"], [fit_row])
    written.append(path)
    if const is not None:
        path = _out(cfg, "theorem_constant.csv")
        report.write_csv(path, ["quantity", "value"], _constant_rows(const))
        written.append(path)
    if cfg.emit_svg:
        t = np.array(times)
        series = {"L1 distance": np.maximum(dists, 1e-300), "H1 bound": [r[2] for r in rows]}
        if fit is not None:
            series["fit"] = np.exp(fit.log_intercept - fit.rate * t)
        path = _out(cfg, "relax_rate.svg")
        report.line_plot(path, t, series, "t", "distance", logy=True, styles={"L1 distance": "o-", "fit": "--"})
        written.append(path)
    return written


def _constant_rows(const):
    names = (
        "n_bar", "delta_bar", "eps_bar", "coeff_26", "coeff_27", "coeff_28", "coeff_29",
        "coeff_31", "c_tilde", "c_tilde_lambda", "M", "C_total", "log10_C_total", "overflow",
    )
    rows = []
    for name in names:
        val = getattr(const, name)
        rows.append((name, math.nan if val is None else val))
    return rows


def _z(mean, se, ref):
    if se == 0:
        return 0.0 if abs(mean - ref) <= 1e-12 else math.inf
    return (mean - ref) / se


def cmd_moment_check(cfg, datum):
    seed = cfg.seed
    stream = 0
    rows = []
    for m in cfg.run["m_values"]:
        for t in cfg.times:
            st = mckean.estimate_power_sum(m, t, cfg.trials, mckean.RngStream(seed, stream))
            stream += 1
            ref = mckean.expected_power_sum(m, t)
            z = _z(st.mean_power_sum, st.std_error, ref)
            rows.append(("power_sum", m, t, "", cfg.trials, st.mean_power_sum, st.std_error, ref, z, abs(z) <= 3))
        for n in cfg.run["nus"]:
            st = mckean.estimate_power_sum(m, 1.0, cfg.trials, mckean.RngStream(seed, stream), nu=n)
            stream += 1
            ref = mckean.conditional_power_sum_mean(m, n)
            z = _z(st.mean_power_sum, st.std_error, ref)
            rows.append(("conditional", m, "", n, cfg.trials, st.mean_power_sum, st.std_error, ref, z, abs(z) <= 3))
    written = []
    n_v = cfg.run["velocity_samples"]
    if n_v and datum is not None:
        for t in cfg.times:
            v, nus = mckean.sample_velocities(datum, t, n_v, mckean.RngStream(seed, stream), return_nu=True)
            stream += 1
            if datum.symmetric and datum.m4 is not None and math.isfinite(datum.m4):
                x = v**4
                ref = solution_moment4(datum, t)
                kind, moment = "velocity_m4", 4
            else:
                x = v
                ref = datum.mean * math.exp(-t)
                kind, moment = "velocity_mean", 1
            mean, se = float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(n_v))
            z = _z(mean, se, ref)
            rows.append((kind, moment, t, "", n_v, mean, se, ref, z, abs(z) <= 3))
            if cfg.run["dump_samples"]:
                path = _out(cfg, f"samples_t{_tag(t)}.csv")
                mckean.write_samples_csv(path, v, nus)
                written.append(path)
    path = _out(cfg, "moment_check.csv")
    report.write_csv(
        path, ["kind", "m", "t", "nu", "trials", "mean", "std_error", "closed_form", "z", "pass"], rows,
        {"seed": seed},
    )
    written.append(path)
    if cfg.emit_svg:
        pw = [r for r in rows if r[0] == "power_sum"]
        if pw:
            t = [r[2] for r in pw]
            path = _out(cfg, "moment_check.svg")
            report.line_plot(
                path, t, {"Monte Carlo": [r[5] for r in pw], "closed form": [r[7] for r in pw]},
                "t", "E sum |pi|^m", logy=True, styles={"Monte Carlo": "o", "closed form": "-"},
            )
            written.append(path)
    return written


def cmd_bounds_audit(cfg, datum):
    rows = []

    def add(name, value, bound, ok):
        rows.append((name, value, bound, bound - value, bool(ok)))

    for m in cfg.run["alpha_m_values"]:
        q = bounds.alpha_m(m, check=False)
        c = bounds.alpha_m_closed(m)
        add(f"alpha_m[{m:g}] quad-closed", abs(q - c), 1e-10, abs(q - c) <= 1e-10)

    # Lemma A.1 on the 4-fold uniform sum (zeta^2 = 1/3, L = 16)
    xi = np.linspace(0.0, 50.0, 1000)
    psi = np.abs(np.sinc(xi / (2 * np.pi)) ** 4)
    a1 = bounds.lemma_a1_bound(3.0**-0.5, 16.0, xi)
    add("lemma_a1 max(psi - bound)", float(np.max(psi - a1)), 0.0, np.all(psi <= a1))

    for n in cfg.run["audit_n"]:
        au = bounds.audit_uniform_sum(n)
        add(f"pointwise_cf[n={n}] ratio", au.pointwise_cf, 1.0, au.pointwise_cf <= 1.0)
        add(f"pointwise_deriv[n={n}] ratio", au.pointwise_deriv, 1.0, au.pointwise_deriv <= 1.0)
        add(f"l2_cf[n={n}]", au.l2_cf, au.l2_cf_bound, au.l2_cf <= au.l2_cf_bound + 1e-6)
        add(f"l2_deriv[n={n}]", au.l2_deriv, au.l2_deriv_bound, au.l2_deriv <= au.l2_deriv_bound + 1e-6)

    target = datum if datum is not None else make_datum({"family": "uniform", "halfwidth": math.sqrt(3.0)})
    if not target.symmetric:
        target = symmetrize(target)
    env = bounds.gamma_envelope(target)
    add("envelope max |phi0|/envelope", env.audit_max_ratio, 1.0, env.audit_max_ratio <= 1.0 + 1e-12)
    add("envelope analytic tail beyond 1e3", float(env.tail_covered), 1.0, env.tail_covered)
    const_rows = [("lambda", env.lam), ("alpha", env.alpha), ("k", env.k), ("L", env.L), ("M_envelope", env.M)]
    if target.m4 is not None and math.isfinite(target.m4):
        prof = target.tail_profile()
        const = bounds.theorem_constant(target.m4, target.sigma, prof.p, prof.L_p, env)
        lhs = const.recompute_log10()
        err = abs(lhs - const.log10_C_total)
        add("C_total log10 identity", err, 1e-12 * abs(lhs), err <= 1e-12 * abs(lhs))
        const_rows += _constant_rows(const)

    written = [_out(cfg, "bounds_audit.csv"), _out(cfg, "constants.csv")]
    report.write_csv(written[0], ["quantity", "value", "bound", "margin", "pass"], rows)
    report.write_csv(written[1], ["quantity", "value"], const_rows)
    if cfg.emit_svg:
        xs = np.linspace(0.0, 50.0, 1000)
        path = _out(cfg, "envelope.svg")
        report.line_plot(
            path, xs, {"|phi0|": np.abs(target.cf(xs)), "envelope": env(xs)}, "xi", "modulus", logy=True
        )
        written.append(path)
    failed = [r[0] for r in rows if not r[4]]
    if failed:
        raise InternalInconsistencyError(f"audit failed: {', '.join(failed)}")
    return written


def cmd_counterexample(cfg, datum):
    if datum.m2 is None:
        raise UnsupportedOperationError("counterexample needs finite energy")
    sols = list(solve_times(datum, cfg.times, cfg.solver))
    grid = sols[0].cf
    idx = {}
    for x in cfg.run["xi_star"]:
        try:
            idx[x] = grid.index_of(x)
        except KacRelaxError:
            raise ConfigError(f"xi_star={x} is not a point of the solver grid", key="xi_star") from None
    ref_rate = bounds.lower_bound_rate(datum.params["beta"]) if datum.family == "power_law" else math.nan
    rows, fits = [], []
    for x, i in idx.items():
        g = math.exp(-0.5 * datum.m2 * x * x)
        dev = [abs(s.cf.values[i] - g) for s in sols]
        rows += [(s.t, x, d) for s, d in zip(sols, dev)]
        fit = metrics.fit_decay_rate([s.t for s in sols], dev, [10.0 * s.tail_bound for s in sols])
        fits.append((
            x, fit.rate, fit.r_squared, fit.points_used, ref_rate,
            abs(fit.rate - ref_rate) <= 0.02, fit.rate < 0.24,
        ))
    written = [_out(cfg, "counterexample.csv"), _out(cfg, "counterexample_fit.csv")]
    report.write_csv(written[0], ["t", "xi", "deviation"], rows)
    report.write_csv(
        written[1],
        ["xi", "rate", "r_squared", "points_used", "lower_bound_rate", "within_0.02", "slower_than_quarter"],
        fits,
    )
    if cfg.emit_svg:
        t = [s.t for s in sols]
        series = {f"xi={x:g}": [r[2] for r in rows if r[1] == x] for x in idx}
        path = _out(cfg, "counterexample.svg")
        report.line_plot(path, t, series, "t", "|phi(xi,t) - G(xi)|", logy=True)
        written.append(path)
    return written


COMMANDS = {
    "solve": cmd_solve,
    "relax-rate": cmd_relax_rate,
    "moment-check": cmd_moment_check,
    "bounds-audit": cmd_bounds_audit,
    "counterexample": cmd_counterexample,
}


def run(cfg):
    """Run one experiment; returns the list of files written."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    datum = build_datum(cfg.datum)
    return COMMANDS[cfg.subcommand](cfg, datum)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="kac-relax", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="experiment config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="output directory (overrides out_dir)")
    parser.add_argument("--svg", action="store_true", help="also render SVG figures")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.subcommand)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = Path(args.out)
        cfg.emit_svg = cfg.emit_svg or args.svg
        for path in run(cfg):
            print(path)
    except KacRelaxError as exc:
        print(f"kac-relax: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
