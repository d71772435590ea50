"""Command-line entry point: ``hop {run,validate,sweep,bench}``.

Output files
------------
``run`` writes into ``--out``:

* ``steps_seed<S>.csv``  ``k,epoch,p,loss_online,loss_benchmark,cum_regret``
  (one row per base time ``k``, i.e. per forecast of ``y_{k+H}``)
* ``checkpoints.csv``    ``N,median_regret,q25,q75`` on the grid ``T_init * 2^j``
* ``trace_seed<S>.csv``  raw forecasts (only with ``--trace``)
* ``config.cfg``         the effective configuration, re-runnable as is
* ``manifest.json``

``sweep`` writes ``sweep.csv`` (``system,H,median_regret,q25,q75``), ``fit.csv``
(``system,slope,intercept,r_squared,max_ratio``) and, with ``--svg``, one
``regret_<system>.svg`` chart per system.

Exit codes: 0 ok, 1 validation failure, 2 config error, 3 numerical failure.
"""

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from hop import __version__
from hop import config as cfgmod
from hop.harness import (fit_h_scaling, resolve_system, seed_sweep, system_kappa,
                         theoretical_beta)
from hop.lin_core import ConvergenceError, solve_dare
from hop.svg import line_chart

log = logging.getLogger("hop")

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
STEP_HEADER = "k,epoch,p,loss_online,loss_benchmark,cum_regret"
CHECKPOINT_HEADER = "N,median_regret,q25,q75"


class NumericalFailure(RuntimeError):
    pass


def _num(x):
    x = float(x)
    if not math.isfinite(x):
        raise NumericalFailure("non-finite value in output")
    return repr(x)


def _parse_seeds(text):
    text = text.strip()
    try:
        if "," in text or text.startswith("["):
            seeds = tuple(int(s) for s in text.strip("[]").split(",") if s.strip())
        else:
            seeds = tuple(range(int(text)))
    except ValueError:
        raise cfgmod.ConfigError(f"--seeds: cannot parse {text!r}", key="seeds", source="<cli>")
    if not seeds or any(s < 0 for s in seeds):
        raise cfgmod.ConfigError("--seeds must name at least one nonnegative seed",
                                 key="seeds", source="<cli>")
    return seeds


def _load_config(args):
    if args.config is None:
        cfg = cfgmod.parse_text("", source="<defaults>")
    else:
        path = Path(args.config)
        if not path.exists():
            bundled = Path(__file__).parent / "configs" / (path.name if path.suffix else path.name + ".cfg")
            if not bundled.exists():
                raise cfgmod.ConfigError(f"no such config file: {args.config}", source=str(path))
            path = bundled
        cfg = cfgmod.load(path)
    if getattr(args, "seeds", None):
        cfg = cfgmod.with_overrides(cfg, seeds=_parse_seeds(args.seeds))
    return cfg


def _write_lines(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _write_steps(path, series):
    cum = series.cum_regret
    rows = ([str(int(k)), str(int(e)), str(int(p)), _num(lo), _num(lb), _num(c)]
            for k, e, p, lo, lb, c in zip(series.k, series.epoch, series.p,
                                          series.loss_online, series.loss_benchmark, cum))
    _write_lines(path, STEP_HEADER, rows)


def _write_checkpoints(path, sweep):
    rows = ([str(int(N)), _num(m), _num(a), _num(b)]
            for N, m, a, b in zip(sweep.N_grid, sweep.median, sweep.q25, sweep.q75))
    _write_lines(path, CHECKPOINT_HEADER, rows)


def cmd_run(args):
    t0 = time.perf_counter()
    cfg = _load_config(args)
    sys_ = resolve_system(cfg.system, cfg.custom)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sweep = seed_sweep(sys_, cfg)
    files = []
    for run in sweep.runs:
        p = out / f"steps_seed{run.seed}.csv"
        _write_steps(p, run)
        files.append(p.name)
    if args.trace:
        from hop.harness import paired_trace
        for seed in cfg.seeds:
            p = out / f"trace_seed{seed}.csv"
            paired_trace(sys_, cfg, seed, p)
            files.append(p.name)
    _write_checkpoints(out / "checkpoints.csv", sweep)
    files.append("checkpoints.csv")
    (out / "config.cfg").write_text(cfgmod.to_text(cfg))
    files.append("config.cfg")
    if args.svg:
        chart = line_chart([(f"H={cfg.H} median", sweep.runs[0].k, sweep.median_trace())],
                           title=f"Regret, {sys_.name}", xlabel="k", ylabel="R_k")
        (out / "regret.svg").write_text(chart)
        files.append("regret.svg")

    sol = solve_dare(sys_.A, sys_.C, sys_.Q, sys_.R)
    kappa = system_kappa(sys_, cfg.kappa)
    manifest = {
        "version": __version__,
        "config": cfgmod.to_text(cfg),
        "seeds": list(cfg.seeds),
        "outputs": files + ["manifest.json"],
        "checksums": {str(r.seed): r.checksum for r in sweep.runs},
        "kappa": kappa,
        "theoretical_beta": theoretical_beta(sol, kappa, cfg.H),
        "wall_clock_seconds": time.perf_counter() - t0,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"{sys_.name}  H={cfg.H}  N={cfg.N}  seeds={len(cfg.seeds)}")
    print(CHECKPOINT_HEADER)
    for N, m, a, b in zip(sweep.N_grid, sweep.median, sweep.q25, sweep.q75):
        print(f"{N},{m:.4g},{a:.4g},{b:.4g}")
    return EXIT_OK


def cmd_validate(args):
    from hop.validation import run_all

    t0 = time.perf_counter()
    checks = run_all(fast=args.fast)
    for c in checks:
        print(c.line())
    failed = [c.name for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} identities passed "
          f"in {time.perf_counter() - t0:.1f}s")
    if failed:
        print("failing: " + "; ".join(failed))
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load_config(args)
    horizons = cfg.horizons or (cfg.H,)
    systems = cfg.systems or (cfg.system,)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table, fits, charts = {}, {}, {}
    for name in systems:
        sys_ = resolve_system(name, cfg.custom)
        charts[name] = []
        for H in horizons:
            res = seed_sweep(sys_, cfg, H=H)
            table[name, H] = res
            charts[name].append((f"H={H}", res.runs[0].k, res.median_trace()))
        if len(horizons) >= 3:
            fits[name] = fit_h_scaling(horizons, [table[name, H].final_median for H in horizons])

    width = max(len(s) for s in systems) + 2
    print(f"median R_N over {len(cfg.seeds)} seed(s), N = {cfg.N}")
    print("H".ljust(width) + "".join(f"{H:>10d}" for H in horizons))
    for name in systems:
        print(name.ljust(width) + "".join(f"{table[name, H].final_median:>10.4g}" for H in horizons))
    rows = ([name, str(H), _num(r.final_median), _num(r.q25[-1]), _num(r.q75[-1])]
            for (name, H), r in table.items())
    _write_lines(out / "sweep.csv", "system,H,median_regret,q25,q75", rows)

    if fits:
        for name, f in fits.items():
            note = ""
            if f.max_ratio < 2.0:
                note = "  (near flat: regret saturates in H)"
            print(f"{name}: log-log slope {f.slope:.3f}, R^2 {f.r_squared:.3f}, "
                  f"R(H_max)/R(H_min) {f.max_ratio:.3f}{note}")
        _write_lines(out / "fit.csv", "system,slope,intercept,r_squared,max_ratio",
                     ([n, _num(f.slope), _num(f.intercept), _num(f.r_squared), _num(f.max_ratio)]
                      for n, f in fits.items()))
    else:
        print("fewer than three horizons: scaling fit skipped")
    if args.svg:
        for name, series in charts.items():
            (out / f"regret_{name}.svg").write_text(
                line_chart(series, title=f"Median regret, {name}", xlabel="k", ylabel="R_k"))
    return EXIT_OK


def cmd_bench(args):
    from hop.harness import paired_run

    cfg = _load_config(args)
    sys_ = resolve_system(cfg.system, cfg.custom)
    seeds = cfg.seeds[: args.repeat]
    t0 = time.perf_counter()
    finals = [paired_run(sys_, cfg, s).final_regret for s in seeds]
    dt = time.perf_counter() - t0
    print(f"{len(seeds)} paired run(s), N={cfg.N}, H={cfg.H}: {dt:.2f}s total, "
          f"{dt / len(seeds):.3f}s per run, median R_N {np.median(finals):.4g}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="hop", description="Online H-step-ahead prediction experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out="hop_out"):
        p.add_argument("--config", help="config file (or name of a bundled config)")
        p.add_argument("--seeds", help="seed count or comma-separated list")
        p.add_argument("--out", default=out, help="output directory")
        p.add_argument("--svg", action="store_true", help="also emit an SVG regret chart")

    p = sub.add_parser("run", help="paired HOP vs. Kalman run(s) for one configuration")
    common(p)
    p.add_argument("--trace", action="store_true", help="write raw forecasts per seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check the analytical identities numerically")
    p.add_argument("--fast", action="store_true", help="scalar plant only")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="regret table over systems and horizons")
    common(p, out="hop_sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="time paired runs")
    p.add_argument("--config")
    p.add_argument("--seeds")
    p.add_argument("--repeat", type=int, default=3)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with np.errstate(over="raise", invalid="raise"):
            return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, NumericalFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
