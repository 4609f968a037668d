"""Command-line front end.

Usage::

    graphonmf <subcommand> --scenario <path|builtin> --out <dir> [--seed S] [--threads T]

Subcommands: validate, simulate, limit, lln, poc, empmeasure, cutnorm.

Exit codes:
    0  success
    1  any other error (bad arguments, schema errors, numerical failures)
    2  AssumptionFailure: the scenario's graphon or initial law fails a hypothesis
       the experiment requires

The thread count falls back to the ``GRAPHONMF_THREADS`` environment variable.
Every output directory receives ``manifest.json`` and a verbatim copy of the
scenario as ``scenario.toml``.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cutnorm import cut_norm, inf_to_one_norm
from .dynamics import lipschitz_probe
from .errors import AssumptionFailure, GraphonMFError, SchemaError
from .experiments import (emp_measure_experiment, lln_experiment, poc_experiment, solve_flow,
                          _verdicts)
from .graphon import discretize, uniform_labels
from .particles import build_system, simulate
from .rng import BrownianStore
from .scenario import resolve

SUBCOMMANDS = ("validate", "simulate", "limit", "lln", "poc", "empmeasure", "cutnorm")
EXIT_OK, EXIT_ERROR, EXIT_ASSUMPTION = 0, 1, 2
THREADS_ENV = "GRAPHONMF_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors share the generic failure code
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ERROR)


def build_parser():
    p = _Parser(prog="graphonmf", description="Graphon mean-field particle experiments.")
    p.add_argument("--version", action="version", version=f"graphonmf {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--scenario", required=True, help="scenario TOML path or built-in name")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        s.add_argument("--threads", type=int, default=None,
                       help=f"worker threads (default ${THREADS_ENV} or 1)")
        if name == "simulate":
            s.add_argument("--n", type=int, default=None,
                           help="particle count (default: largest n_list entry)")
            s.add_argument("--full-paths", action="store_true", help="record every time step")
        if name == "lln":
            s.add_argument("--no-secondary", action="store_true",
                           help="skip the smoothed-measure W2 integral")
        if name == "poc":
            s.add_argument("--save-sup", action="store_true",
                           help="also write per-particle sup errors to coupled_sup.npz")
    return p


def _threads(arg):
    if arg is not None:
        return max(1, arg)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def _json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(out, command, scenario, argv, extra=None):
    man = {"tool": "graphonmf", "version": __version__, "command": command, "argv": argv,
           "seed": scenario.seed, "scenario": scenario.describe(),
           "rerun": ["graphonmf", command, "--scenario", "scenario.toml", "--out", str(out),
                     "--seed", str(scenario.seed)]}
    if extra:
        man.update(extra)
    _json(out / "manifest.json", man)
    (out / "scenario.toml").write_text(scenario.source)
    # grid graphons reference a CSV; copy it so the scenario copy re-runs in place
    grid = scenario.data.get("graphon", {}).get("path")
    if isinstance(grid, str) and hasattr(scenario.graphon, "to_csv"):
        target = out / (grid if not Path(grid).is_absolute() and ".." not in Path(grid).parts
                        else Path(grid).name)
        target.parent.mkdir(parents=True, exist_ok=True)
        scenario.graphon.to_csv(target)


# ---------------------------------------------------------------- subcommands


def _validate(sc, out, args, threads):
    _, verdicts = _verdicts(sc)
    probe = lipschitz_probe(sc.model, trials=sc.lipschitz_trials, seed=sc.seed)
    K = sc.model.declared_lipschitz
    verdicts["lipschitz_probe"] = {"observed": probe, "declared": K, "within": probe <= K + 1e-9}
    _json(out / "validate.json", verdicts)
    v = verdicts["verdicts"]
    return {"assumptions": verdicts}, ("verdicts " + " ".join(f"{k}={v[k]}" for k in sorted(v))
                                       + f" probe={probe:.3g}<=K={K:.3g}")


def _simulate(sc, out, args, threads):
    n = args.n if args.n is not None else max(sc.n_list)
    config = sc.config
    if args.full_paths:
        from dataclasses import replace
        config = replace(config, record_full_paths=True)
    store = BrownianStore(sc.seed)
    state = build_system(sc.graphon, n, sc.initial, store)
    ens = simulate(state, sc.model, config, threads)
    ens.to_csv(out / "trajectories.csv")
    np.savetxt(out / "sup_sq.csv", ens.sup_sq, delimiter=",", fmt="%.17g")
    msg = f"N={n} replicas={ens.replicas} mean|X_T|²={np.mean(np.sum(ens.final**2, -1)):.6g}"
    return {"n": n, "n_steps": config.n_steps}, msg


def _limit(sc, out, args, threads):
    store = BrownianStore(sc.seed)
    _, verdicts = _verdicts(sc)
    flow = solve_flow(sc, store)
    flow.to_dir(out / "flow")
    man = flow.manifest()
    man["assumptions"] = verdicts
    _json(out / "flow" / "manifest.json", man)
    return {"flow": man}, (f"m={flow.grid_size} M={flow.ensemble_size} "
                           f"iterations={flow.iterations} residual={flow.residual:.3g}")


def _report(rep, out, name):
    rep.to_csv(out / f"{name}.csv")
    rep.to_json(out / f"{name}.json")
    slopes = " ".join(f"{k}:slope={v['slope']:.3f},R2={v['r_squared']:.3f}"
                      for k, v in sorted(rep.slopes.items()))
    return {"report": f"{name}.csv"}, slopes or "no slope fitted"


def _lln(sc, out, args, threads):
    rep = lln_experiment(sc, threads=threads, secondary=not args.no_secondary)
    return _report(rep, out, "lln")


def _poc(sc, out, args, threads):
    rep = poc_experiment(sc, threads=threads, keep_sup=args.save_sup)
    if args.save_sup:
        np.savez(out / "coupled_sup.npz", **{f"N{n}": a for n, a in rep.sup_samples.items()})
    return _report(rep, out, "poc")


def _empmeasure(sc, out, args, threads):
    rep = emp_measure_experiment(sc, threads=threads)
    return _report(rep, out, "empmeasure")


def cutnorm_rows(g, n_list):
    """``(N, lower, upper, exact, inf_to_one)`` for ``G_N`` against ``G`` at resolution ``2N``.

    ``G_N`` is lifted to the finer partition by repeating each cell 2x2 and
    compared with ``G`` at the cell midpoints of the ``2N`` grid.
    """
    rows = []
    for n in n_list:
        lifted = np.kron(discretize(g, n).values, np.ones((2, 2)))
        mid = uniform_labels(2 * n) - 0.5 / (2 * n)
        fine = np.clip(np.asarray(g(mid[:, None], mid[None, :]), dtype=float), 0.0, 1.0)
        method = "bruteforce" if 2 * n <= 20 else "greedy_local_search"
        res = cut_norm(lifted, fine, method=method)
        rows.append((n, res.lower, res.upper, res.exact, inf_to_one_norm(lifted - fine)))
    return rows


def _cutnorm(sc, out, args, threads):
    rows = cutnorm_rows(sc.graphon, sc.n_list)
    with open(out / "cutnorm.csv", "w") as fh:
        fh.write("N,lower,upper,exact,inf_to_one\n")
        for n, lo, up, ex, io in rows:
            fh.write(f"{n},{lo!r},{up!r},{int(ex)},{io!r}\n")
    n, lo, up, _, _ = rows[-1]
    return {}, f"N={n} cut norm in [{lo:.4g}, {up:.4g}]"


HANDLERS = {"validate": _validate, "simulate": _simulate, "limit": _limit, "lln": _lln,
            "poc": _poc, "empmeasure": _empmeasure, "cutnorm": _cutnorm}


def run(command, scenario, out_dir, seed=None, threads=None, argv=None, args=None):
    """Run one subcommand and return its exit status."""
    if command not in HANDLERS:
        print(f"unknown subcommand {command!r}", file=sys.stderr)
        return EXIT_ERROR
    try:
        sc = resolve(scenario) if isinstance(scenario, (str, os.PathLike)) else scenario
        if seed is not None:
            sc = sc.with_overrides(seed=seed)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args is None:
            args = build_parser().parse_args([command, "--scenario", "-", "--out", str(out)])
        extra, msg = HANDLERS[command](sc, out, args, _threads(threads))
        _manifest(out, command, sc, list(argv or []), extra)
    except AssumptionFailure as exc:
        print(f"{command}: assumption failure: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except SchemaError as exc:
        print(f"{command}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (GraphonMFError, ValueError, KeyError, OSError) as exc:
        print(f"{command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{command} {sc.name}: {msg}")
    return EXIT_OK


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    return run(args.command, args.scenario, args.out, seed=args.seed, threads=args.threads,
               argv=argv, args=args)


if __name__ == "__main__":
    sys.exit(main())
