"""Command line entry point.

    chainclose run          run one scenario, write its record
    chainclose study        convergence table over k
    chainclose classes      chain-class covers of a preset
    chainclose shadow-bench empirical shadowing constants

Options may also come from an INI file (``--config``) with a ``[scenario]``
section using the long option names, e.g. ``k = 10 20 40``.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from pathlib import Path

from . import lab
from .presets import PresetError, get_preset

DEFAULTS = {
    "preset": "cat_skew",
    "k": [10, 20, 40],
    "eps": None,
    "resolution": None,
    "graph_eps": None,
    "seed": 0,
    "recipe": "fine",
    "x": None,
    "y": None,
    "periodic": False,
    "winding": 0,
    "length": 12,
    "format": "csv",
    "trials": 20,
}

_LISTS = {"k": int, "x": float, "y": float}
_SCALARS = {"eps": float, "resolution": int, "graph_eps": float, "seed": int, "winding": int, "length": int,
            "trials": int}


def load_config(path) -> dict:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    if "scenario" not in cp:
        raise ValueError(f"{path}: missing [scenario] section")
    out = {}
    for key, raw in cp["scenario"].items():
        key = key.replace("-", "_")
        if key in _LISTS:
            out[key] = [_LISTS[key](v) for v in raw.replace(",", " ").split()]
        elif key in _SCALARS:
            out[key] = _SCALARS[key](raw)
        elif key == "periodic":
            out[key] = cp["scenario"].getboolean(key)
        else:
            out[key] = raw.strip()
    return out


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with a [scenario] section")
    common.add_argument("--preset")
    common.add_argument("--k", type=int, nargs="+")
    common.add_argument("--eps", type=float, help="fixed epsilon (default 1/(2k))")
    common.add_argument("--resolution", type=int, help="box grid resolution (power of two)")
    common.add_argument("--graph-eps", type=float, dest="graph_eps")
    common.add_argument("--seed", type=int)
    common.add_argument("--recipe", choices=lab.RECIPES)
    common.add_argument("--x", type=float, nargs=3)
    common.add_argument("--y", type=float, nargs=3)
    common.add_argument("--periodic", action="store_true", default=None)
    common.add_argument("--winding", type=int)
    common.add_argument("--length", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--plot", action="store_true", help="also render PNG figures")

    p = argparse.ArgumentParser(prog="chainclose", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "study", "classes", "shadow-bench"):
        sub.add_parser(name, parents=[common])
    return p


def _options(args) -> dict:
    opts = dict(DEFAULTS)
    if args.config:
        opts.update(load_config(args.config))
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            opts[key] = v
    return opts


def _scenario(opts, sid=None) -> lab.Scenario:
    return lab.Scenario(
        id=sid or f"{opts['preset']}_s{opts['seed']}",
        preset=opts["preset"], k_list=tuple(opts["k"]),
        x=tuple(opts["x"]) if opts["x"] else None, y=tuple(opts["y"]) if opts["y"] else None,
        periodic=bool(opts["periodic"]), eps=opts["eps"], resolution=opts["resolution"],
        graph_eps=opts["graph_eps"], seed=opts["seed"], recipe=opts["recipe"],
        length=opts["length"], winding=opts["winding"],
    )


def cmd_run(opts, out: Path, plot: bool) -> int:
    sc = _scenario(opts)
    t0 = time.perf_counter()
    rec = lab.run_scenario(sc)
    dt = time.perf_counter() - t0
    if opts["format"] == "json":
        path = out / f"{sc.id}.json"
        path.write_text(rec.to_json())
    else:
        path = out / f"{sc.id}.csv"
        lab.write_table([dict(zip(lab.STUDY_COLUMNS, [r.k, r.eps, r.n_k, r.tau_k, r.d_x, r.d_y, r.bound, r.margin]))
                         for r in rec.results], path)
    files = lab.emit_plot_data(rec, out)
    print(f"{sc.id}: {rec.status} in {dt:.2f}s -> {path}")
    for f in rec.failures:
        print(f"  [{f.stage}] {f.message}")
    if plot:
        from .plotting import plot_record
        for p in plot_record(rec, out):
            print(f"  figure {p}")
    for f in files.values():
        print(f"  points {f}")
    return 0 if rec.status != "failed" else 1


def cmd_study(opts, out: Path, plot: bool) -> int:
    sc = _scenario(opts)
    rec = lab.run_scenario(sc)
    rows = lab.convergence_study(sc, rec)
    if opts["format"] == "json":
        path = out / f"{sc.id}_study.json"
        path.write_text(json.dumps(rows, indent=1))
    else:
        path = out / f"{sc.id}_study.csv"
        lab.write_table(rows, path)
    lab.emit_plot_data(rec, out)
    for r in rows:
        print(f"k={r['k']:4d} eps={r['eps']:.5f} n={r['n_k']:4d} tau={r['tau_k']:+.3e} "
              f"d_x={r['d_x_pk']:.3e} d_y={r['d_y_end']:.3e} bound={r['bound']:.3e}")
    if plot:
        from .plotting import plot_record
        plot_record(rec, out)
    print(f"-> {path}")
    return 0 if rec.status != "failed" else 1


def cmd_classes(opts, out: Path, plot: bool) -> int:
    from .chain_engine import build_chain_graph, chain_recurrent_classes, write_classes_csv

    system = get_preset(opts["preset"]).system
    res = opts["resolution"] or 32
    eps = opts["eps"] if opts["eps"] is not None else 2.0 * 3 ** 0.5 / res
    t0 = time.perf_counter()
    g = build_chain_graph(system, res, eps)
    classes = chain_recurrent_classes(g)
    dt = time.perf_counter() - t0
    stem = f"{opts['preset']}_r{res}"
    if opts["format"] == "json":
        path = out / f"{stem}_classes.json"
        path.write_text(json.dumps({"resolution": res, "epsilon": eps,
                                    "classes": [c.boxes.tolist() for c in classes]}))
    else:
        path = out / f"{stem}_classes.csv"
        write_classes_csv(g, classes, path)
    lab.write_box_points(g, classes, out / f"{stem}_boxes.dat")
    print(f"{stem}: {g.n_edges} edges, {len(classes)} classes {[len(c) for c in classes]} in {dt:.1f}s -> {path}")
    if plot:
        from .plotting import plot_classes
        print(f"  figure {plot_classes(g, classes, out / f'{stem}_classes.png')}")
    return 0


def cmd_shadow_bench(opts, out: Path, plot: bool) -> int:
    from .center_shadowing import measure_lipschitz_L

    system = get_preset(opts["preset"]).system
    eps_list = [opts["eps"]] if opts["eps"] is not None else [0.1, 0.05, 0.025]
    table = measure_lipschitz_L(system, opts["trials"], eps_list, seed=opts["seed"])
    path = out / f"{opts['preset']}_shadow.csv"
    table.write_csv(path)
    lb = system.shadowing_constant()
    for e, v in sorted(table.sup_by_eps().items(), reverse=True):
        print(f"eps={e:<8g} sup d/eps = {v:.4f}   (L_b + 1 = {lb + 1:.4f})")
    if plot:
        from .plotting import plot_shadow_table
        plot_shadow_table(table, out / f"{opts['preset']}_shadow.png")
    print(f"-> {path}")
    return 0


COMMANDS = {"run": cmd_run, "study": cmd_study, "classes": cmd_classes, "shadow-bench": cmd_shadow_bench}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        opts = _options(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](opts, out, args.plot)
    except PresetError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
