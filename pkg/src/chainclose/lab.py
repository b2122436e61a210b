"""Scenario runner: chain -> center shadow -> reorder -> lift -> close -> verify."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .center_lift import lift_chain, reorder_chain
from .center_shadowing import EPS0, center_shadow, center_shadow_periodic
from .chain_engine import (NotAttainableError, build_chain_graph, chain_attainable, fine_chain,
                           random_pseudo_orbit)
from .closing_solver import (PerturbationFamily, find_closing_tau, min_center_push, verify_connection)
from .models import torus_dist, wrap
from .presets import get_preset

RECIPES = ("random", "fine")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.message = message


@dataclass
class Scenario:
    id: str
    preset: str
    k_list: tuple[int, ...] = (10, 20, 40)
    x: tuple[float, float, float] | None = None
    y: tuple[float, float, float] | None = None
    periodic: bool = False
    eps: float | None = None  # None means eps(k) = 1/(2k)
    resolution: int | None = None
    graph_eps: float | None = None
    seed: int = 0
    recipe: str = "fine"
    length: int = 12
    winding: int = 0  # extra fiber turns for the "fine" recipe

    def __post_init__(self):
        self.k_list = tuple(int(k) for k in self.k_list)
        if self.recipe not in RECIPES:
            raise ValueError(f"unknown chain recipe {self.recipe!r}; choose from {RECIPES}")
        for k in self.k_list:
            if not self.epsilon(k) < EPS0:
                raise ValueError(f"eps({k}) = {self.epsilon(k)} must be below {EPS0}")

    def epsilon(self, k: int) -> float:
        return float(self.eps) if self.eps is not None else 1.0 / (2 * k)


@dataclass
class Failure:
    stage: str
    message: str


@dataclass
class KResult:
    k: int
    eps: float
    n_k: int
    tau_k: float
    d_x: float
    d_y: float
    bound: float
    L_meas: float
    L_shadow: float
    L_section: float
    push: float
    degenerate: bool
    periodic: bool
    closure_residual: float | None
    inequalities: list[str]

    @property
    def margin(self) -> float:
        return self.bound - max(self.d_x, self.d_y)


@dataclass
class RunRecord:
    scenario_id: str
    status: str = "ok"  # ok | failed | not chain attainable
    x: list[float] = field(default_factory=list)
    y: list[float] = field(default_factory=list)
    results: list[KResult] = field(default_factory=list)
    failures: list[Failure] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == "ok" and not self.failures

    def to_dict(self) -> dict:
        d = asdict(self)
        for r, rd in zip(self.results, d["results"]):
            rd["margin"] = r.margin
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


@lru_cache(maxsize=4)
def _graph(preset: str, resolution: int, eps: float):
    return build_chain_graph(get_preset(preset).system, resolution, eps)


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except PipelineError:
        raise
    except Exception as exc:  # annotate and pass on
        raise PipelineError(name, f"{type(exc).__name__}: {exc}") from exc


def _center_chain(sc: Scenario, system, x, y, eps, rng):
    """Pseudo-orbit and center chain whose jumps and endpoint offsets stay below eps.

    The raw jump scale is halved until the center chain fits.
    """
    scale = 1.0
    for _ in range(12):
        if sc.recipe == "random":
            w = random_pseudo_orbit(system, x, sc.length, eps, rng, fill=0.9 * scale)
        else:
            w = fine_chain(system, x, y, eps * scale, winding=sc.winding)
        shadow = center_shadow_periodic if sc.periodic else center_shadow
        c = shadow(system, w)
        t = np.abs(c.jump_times)
        ends = max(float(torus_dist(c.points[0], w.points[0])), float(torus_dist(c.points[-1], w.points[-1])))
        if (t.max(initial=0.0) < eps) and ends < eps:
            return w, c
        scale *= 0.5
    raise PipelineError("center_shadow", f"center jumps {t.max():.4g} or endpoint offset {ends:.4g} >= eps {eps}")


def _run_k(sc: Scenario, preset, k: int, x, y) -> KResult:
    system = preset.system
    family = PerturbationFamily(system, preset.field())
    eps = sc.epsilon(k)
    push = _stage("min_center_push", min_center_push, family, 1.0 / k, 256, sc.seed).delta
    if push < eps:
        eps = 0.5 * push
    rng = np.random.default_rng([sc.seed, k])
    w, c = _stage("chain", _center_chain, sc, system, x, y, eps, rng)
    if sc.recipe == "random":
        y = w.points[-1]
    lifted = _stage("lift", lift_chain, system, c, eps)
    ordered = _stage("reorder", reorder_chain, lifted)
    res = _stage("close", find_closing_tau, family, ordered, k)
    L_shadow = float(torus_dist(c.points, w.points).max()) / eps
    L_meas = max(L_shadow, res.section_lipschitz)
    rep = _stage("verify", verify_connection, family, res, x, y, k, L_meas, ordered, False)
    ineq = rep.inequalities()
    if not rep.passed:
        raise PipelineError("verify", "; ".join(ineq))
    if res.periodic and not (res.closure_residual is not None and res.closure_residual < 1e-10):
        raise PipelineError("verify", f"closure residual {res.closure_residual} >= 1e-10")
    if not abs(res.tau_k) <= 1.0 / k:
        raise PipelineError("close", f"|tau_k| = {abs(res.tau_k)} > 1/k = {1.0 / k}")
    return KResult(k, eps, res.n_k, res.tau_k, rep.d_x_pk, rep.d_y_end, rep.bound, L_meas, L_shadow,
                   res.section_lipschitz, push, res.degenerate, res.periodic, res.closure_residual, ineq)


def scenario_points(sc: Scenario):
    rng = np.random.default_rng([sc.seed, 0])
    x = wrap(np.array(sc.x, dtype=float)) if sc.x is not None else rng.random(3)
    if sc.periodic:
        y = x.copy()
    elif sc.y is not None:
        y = wrap(np.array(sc.y, dtype=float))
    else:
        y = rng.random(3)
    return x, y


def run_scenario(sc: Scenario, strict: bool = False) -> RunRecord:
    preset = get_preset(sc.preset)
    x, y = scenario_points(sc)
    rec = RunRecord(sc.id, x=x.tolist(), y=y.tolist())
    if sc.resolution is not None:
        geps = sc.graph_eps if sc.graph_eps is not None else 1.1 * math.sqrt(3) / sc.resolution
        g = _graph(sc.preset, sc.resolution, float(geps))
        if chain_attainable(g, x, y) is None:
            rec.status = "not chain attainable"
            return rec
    for k in sorted(sc.k_list):
        try:
            rec.results.append(_run_k(sc, preset, k, x, y))
        except PipelineError as exc:
            rec.failures.append(Failure(exc.stage, f"k={k}: {exc.message}"))
            if strict:
                raise
        except NotAttainableError as exc:
            rec.failures.append(Failure("chain", f"k={k}: {exc}"))
            if strict:
                raise PipelineError("chain", str(exc)) from exc
    if rec.failures:
        rec.status = "failed"
    return rec


def run_campaign(scenarios, workers: int = 1) -> list[RunRecord]:
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(run_scenario, scenarios))
    return [run_scenario(s) for s in scenarios]


# --------------------------------------------------------------------------
# tables and point files

STUDY_COLUMNS = ["k", "eps", "n_k", "tau_k", "d_x_pk", "d_y_end", "bound", "margin"]


def convergence_study(sc: Scenario, record: RunRecord | None = None) -> list[dict]:
    if len(set(sc.k_list)) < 3:
        raise ValueError("a convergence study needs at least three values of k")
    record = record or run_scenario(sc)
    rows = []
    for r in sorted(record.results, key=lambda r: r.k):
        rows.append(dict(zip(STUDY_COLUMNS, [r.k, r.eps, r.n_k, r.tau_k, r.d_x, r.d_y, r.bound, r.margin])))
    return rows


def write_table(rows: list[dict], path, columns=STUDY_COLUMNS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({c: repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns})


def _write_points(path, columns, data) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("# " + " ".join(columns) + "\n")
        for row in data:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    return path


def read_point_file(path) -> tuple[list[str], np.ndarray]:
    """Parse a point file: one '# col col ...' header, then whitespace-separated floats."""
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing '# columns' header")
        cols = header[1:].split()
        rows = [[float(v) for v in line.split()] for line in fh if line.strip()]
    data = np.array(rows, dtype=float).reshape(-1, len(cols))
    return cols, data


def _log(v):
    return math.log(v) if v > 0 else float("-inf")


def emit_plot_data(record: RunRecord, out_dir, graph=None, classes=None) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rs = sorted(record.results, key=lambda r: r.k)
    files = {
        "tau": _write_points(out / f"{record.scenario_id}_tau.dat", ["log_k", "log_tau"],
                             [(_log(r.k), _log(abs(r.tau_k))) for r in rs]),
        "dist": _write_points(out / f"{record.scenario_id}_dist.dat", ["log_k", "log_d_x", "log_d_y", "log_bound"],
                              [(_log(r.k), _log(r.d_x), _log(r.d_y), _log(r.bound)) for r in rs]),
    }
    if graph is not None and classes is not None:
        files["boxes"] = write_box_points(graph, classes, out / f"{record.scenario_id}_boxes.dat")
    return files


def write_box_points(graph, classes, path) -> Path:
    rows = []
    for cid, c in enumerate(classes):
        corners = graph.grid.corner(c.boxes)
        for b, p in zip(c.boxes, corners):
            rows.append((b, cid, *p, graph.grid.side))
    return _write_points(path, ["box", "class", "x0", "y0", "theta0", "side"], rows)
