"""Set-oriented chain recurrence on a uniform box grid of T^3.

Boxes are half-open cubes of side 1/resolution indexed by
``(i * res + j) * res + l``.  The transition graph has an edge B -> B' when
the per-coordinate Lipschitz enclosure of f(B) comes within ``epsilon`` of B',
which over-approximates epsilon-reachability between boxes.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .models import SkewProductSystem, reduce_signed, torus_dist, wrap
from .numerics import bisect_increasing

MAX_RESOLUTION = 2 ** 8
MAX_EDGES = 320_000_000  # build peaks near 8 bytes per edge; sized for ~5 GB hosts


class MemoryGuardError(ValueError):
    pass


class NotAttainableError(RuntimeError):
    pass


@dataclass(frozen=True)
class BoxGrid:
    resolution: int

    def __post_init__(self):
        r = self.resolution
        if r < 1 or r & (r - 1):
            raise ValueError(f"resolution must be a power of two, got {r}")
        if r > MAX_RESOLUTION:
            raise MemoryGuardError(f"resolution {r} exceeds {MAX_RESOLUTION} (2^24 boxes)")

    @property
    def n_boxes(self) -> int:
        return self.resolution ** 3

    @property
    def side(self) -> float:
        return 1.0 / self.resolution

    @property
    def diameter(self) -> float:
        return math.sqrt(3.0) / self.resolution

    def index(self, p):
        ijk = np.floor(wrap(p) * self.resolution).astype(np.int64)
        ijk = np.minimum(ijk, self.resolution - 1)
        return self.flat(ijk)

    def flat(self, ijk):
        r = self.resolution
        ijk = np.asarray(ijk, dtype=np.int64)
        return (ijk[..., 0] * r + ijk[..., 1]) * r + ijk[..., 2]

    def unflat(self, idx):
        r = self.resolution
        idx = np.asarray(idx, dtype=np.int64)
        return np.stack([idx // (r * r), (idx // r) % r, idx % r], axis=-1)

    def corner(self, idx):
        return self.unflat(idx) / self.resolution

    def center(self, idx):
        return (self.unflat(idx) + 0.5) / self.resolution


@dataclass
class PseudoOrbit:
    points: np.ndarray
    epsilon: float

    def __len__(self):
        return len(self.points)

    def jumps(self, system: SkewProductSystem) -> np.ndarray:
        """d(x_{i+1}, f(x_i)) for consecutive pairs."""
        return torus_dist(system.apply(self.points[:-1]), self.points[1:])

    def max_jump(self, system) -> float:
        if len(self.points) < 2:
            return 0.0
        return float(self.jumps(system).max())

    def check(self, system) -> None:
        m = self.max_jump(system)
        if not m < self.epsilon:
            raise AssertionError(f"pseudo-orbit jump {m:.6g} >= epsilon {self.epsilon:.6g}")


@dataclass
class ChainGraph:
    system: SkewProductSystem
    grid: BoxGrid
    epsilon: float
    adjacency: sparse.csr_matrix

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.nnz)

    def image_halfwidths(self) -> np.ndarray:
        return self.system.lipschitz_halfwidths() * (0.5 * self.grid.side)

    @property
    def witness_bound(self) -> float:
        """Jump bound for pseudo-orbits extracted through box centers.

        A center c of B_i lies within the image enclosure of any point of B_i,
        so d(f(x_i), c_{i+1}) <= 2 |r| + epsilon + diam, with r the enclosure
        half-widths.
        """
        return self.epsilon + 2.0 * float(np.linalg.norm(self.image_halfwidths())) + self.grid.diameter

    def successors(self, box: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[box]:a.indptr[box + 1]]


def _edges_for_chunk(system, grid, eps, r, ranges, boxes):
    # the gap to a candidate box is separable per axis, so work on small
    # per-axis tables and broadcast only for the final mask and indices
    res = grid.resolution
    h = 0.5 * grid.side
    img = system.apply(grid.center(boxes))
    target = np.minimum(np.floor(img * res).astype(np.int64), res - 1)
    g2 = []
    idx = []
    for k in range(3):
        cand = target[:, k:k + 1] + ranges[k][None, :]
        d = np.abs(reduce_signed((cand + 0.5) / res - img[:, k:k + 1]))
        g = np.maximum(d - (r[k] + h), 0.0)
        g2.append(g * g)
        idx.append((cand % res).astype(np.int32))
    total = g2[0][:, :, None, None] + g2[1][:, None, :, None] + g2[2][:, None, None, :]
    keep = total < eps * eps
    flat = (idx[0][:, :, None, None] * res + idx[1][:, None, :, None]) * res + idx[2][:, None, None, :]
    cols = flat[keep]
    counts = keep.reshape(len(boxes), -1).sum(axis=1)
    return cols, counts


def estimated_edges(system: SkewProductSystem, resolution: int, epsilon: float) -> int:
    """Upper estimate of the edge count from the inflated enclosure's bounding box."""
    side = 1.0 / resolution
    r = system.lipschitz_halfwidths() * (0.5 * side)
    per_box = np.prod(np.minimum(2 * (r + 0.5 * side + epsilon) * resolution + 1, resolution))
    return int(per_box * resolution ** 3)


def build_chain_graph(system: SkewProductSystem, resolution: int, epsilon: float,
                      workers: int = 1, chunk_size: int | None = None,
                      max_edges: int = MAX_EDGES) -> ChainGraph:
    grid = BoxGrid(resolution)
    if not epsilon > grid.diameter:
        raise ValueError(
            f"epsilon {epsilon} must exceed the box diameter {grid.diameter:.4g} at resolution {resolution}"
        )
    est = estimated_edges(system, resolution, epsilon)
    if est > max_edges:
        raise MemoryGuardError(f"about {est:.3g} edges expected at resolution {resolution}, "
                               f"epsilon {epsilon}; limit is {max_edges:.3g}")
    r = system.lipschitz_halfwidths() * (0.5 * grid.side)
    m = np.ceil((r + 0.5 * grid.side + epsilon) / grid.side).astype(int) + 1
    ranges = [np.arange(-mk, mk + 1) for mk in m]
    if chunk_size is None:
        chunk_size = max(1, 4_000_000 // int(np.prod(2 * m + 1)))
    starts = range(0, grid.n_boxes, chunk_size)

    def work(s):
        boxes = np.arange(s, min(s + chunk_size, grid.n_boxes))
        return _edges_for_chunk(system, grid, epsilon, r, ranges, boxes)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]

    indptr = np.zeros(grid.n_boxes + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(np.concatenate([c for _, c in parts]))
    indices = np.concatenate([c for c, _ in parts])
    data = np.ones(len(indices), dtype=np.int8)
    adj = sparse.csr_matrix((data, indices, indptr), shape=(grid.n_boxes, grid.n_boxes))
    if np.any(2 * m + 1 > resolution):
        # offsets wrap around the torus and can repeat a target box
        adj.sum_duplicates()
        adj.data[:] = 1
    adj.sort_indices()
    return ChainGraph(system, grid, float(epsilon), adj)


def refine(graph: ChainGraph, workers: int = 1) -> ChainGraph:
    """Same epsilon at twice the resolution."""
    return build_chain_graph(graph.system, graph.grid.resolution * 2, graph.epsilon, workers=workers)


# --------------------------------------------------------------------------
# paths

def _bfs_path(graph: ChainGraph, source: int, target: int, chunk: int = 16_384) -> list[int] | None:
    """Shortest path with at least one edge from ``source`` to ``target``.

    Level-synchronous BFS; frontier rows are expanded in chunks so a level of
    a dense graph never materializes all its edges at once.
    """
    a = graph.adjacency
    n = a.shape[0]
    seen = np.zeros(n, dtype=bool)
    parent = np.full(n, -1, dtype=np.int64)
    frontier = np.array([source], dtype=np.int64)
    while frontier.size:
        found = []
        for lo in range(0, frontier.size, chunk):
            rows = frontier[lo:lo + chunk]
            sub = a[rows]
            cols = sub.indices.astype(np.int64)
            src = np.repeat(rows, np.diff(sub.indptr))
            fresh = ~seen[cols]
            cols, src = cols[fresh], src[fresh]
            new, first = np.unique(cols, return_index=True)
            parent[new] = src[first]
            seen[new] = True
            found.append(new)
            if seen[target]:
                path = [target]
                v = int(parent[target])
                path.append(v)
                while v != source:
                    v = int(parent[v])
                    path.append(v)
                return path[::-1]
        frontier = np.concatenate(found)
    return None


def box_path(graph: ChainGraph, x, y) -> list[int] | None:
    return _bfs_path(graph, int(graph.grid.index(x)), int(graph.grid.index(y)))


def chain_attainable(graph: ChainGraph, x, y) -> PseudoOrbit | None:
    """Pseudo-orbit from x to y through box centers, or None if no path exists."""
    x, y = wrap(x), wrap(y)
    path = box_path(graph, x, y)
    if path is None:
        return None
    centers = graph.grid.center(np.array(path[1:-1], dtype=np.int64)).reshape(-1, 3)
    pts = np.vstack([x[None], centers, y[None]])
    orbit = PseudoOrbit(pts, graph.witness_bound)
    orbit.check(graph.system)
    return orbit


# --------------------------------------------------------------------------
# chain recurrent classes

@dataclass
class ChainClass:
    boxes: np.ndarray
    components: tuple[int, ...]

    def __len__(self):
        return len(self.boxes)


def strongly_connected(graph: ChainGraph) -> tuple[int, np.ndarray]:
    return csgraph.connected_components(graph.adjacency, directed=True, connection="strong")


def _nontrivial(graph, n_comp, labels):
    sizes = np.bincount(labels, minlength=n_comp)
    loops = graph.adjacency.diagonal() > 0
    has_loop = np.zeros(n_comp, dtype=bool)
    has_loop[labels[loops]] = True
    return (sizes > 1) | has_loop


def _neighbor_offsets():
    r = (-1, 0, 1)
    return np.array([(a, b, c) for a in r for b in r for c in r if (a, b, c) != (0, 0, 0)])


def chain_recurrent_classes(graph: ChainGraph, merge_boundary: bool = True) -> list[ChainClass]:
    """Covers of the chain classes: SCCs with at least one internal edge.

    With ``merge_boundary`` two such SCCs are merged when they touch on the
    grid and one reaches the other.  Uniform grids produce thin spurious SCCs
    next to repelling sets (boxes that can stay put but not step back); this
    folds them into the class they bound.
    """
    n_comp, labels = strongly_connected(graph)
    nontrivial = _nontrivial(graph, n_comp, labels)
    comps = np.flatnonzero(nontrivial)
    parent = {int(c): int(c) for c in comps}

    def find(c):
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    if merge_boundary and len(comps) > 1:
        grid = graph.grid
        in_cr = np.flatnonzero(nontrivial[labels])
        ijk = grid.unflat(in_cr)
        pairs = set()
        for off in _neighbor_offsets():
            nb = grid.flat((ijk + off) % grid.resolution)
            la, lb = labels[in_cr], labels[nb]
            mask = nontrivial[lb] & (la != lb)
            for p, q in set(zip(la[mask].tolist(), lb[mask].tolist())):
                pairs.add((min(p, q), max(p, q)))
        if pairs:
            rows, cols = graph.adjacency.nonzero()
            cond = sparse.csr_matrix(
                (np.ones(len(rows), dtype=np.int8), (labels[rows], labels[cols])), shape=(n_comp, n_comp)
            )
            reach = {}

            def reachable(c):
                if c not in reach:
                    order = csgraph.breadth_first_order(cond, c, directed=True, return_predecessors=False)
                    reach[c] = set(order.tolist())
                return reach[c]

            for p, q in sorted(pairs):
                if q in reachable(p) or p in reachable(q):
                    parent[find(p)] = find(q)

    groups: dict[int, list[int]] = {}
    for c in comps:
        groups.setdefault(find(int(c)), []).append(int(c))
    classes = []
    for members in groups.values():
        boxes = np.flatnonzero(np.isin(labels, members))
        classes.append(ChainClass(boxes, tuple(sorted(members))))
    classes.sort(key=lambda c: int(c.boxes[0]))
    return classes


def class_of(graph: ChainGraph, classes: list[ChainClass], p) -> int | None:
    box = int(graph.grid.index(p))
    for k, c in enumerate(classes):
        pos = np.searchsorted(c.boxes, box)
        if pos < len(c.boxes) and c.boxes[pos] == box:
            return k
    return None


def write_classes_csv(graph: ChainGraph, classes: list[ChainClass], path) -> int:
    """Write (box, class, corner x/y/theta, side) rows; returns the row count."""
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["box", "class", "x0", "y0", "theta0", "side"])
        for k, c in enumerate(classes):
            corners = graph.grid.corner(c.boxes)
            for b, (cx, cy, cz) in zip(c.boxes.tolist(), corners):
                w.writerow([b, k, repr(float(cx)), repr(float(cy)), repr(float(cz)), repr(graph.grid.side)])
                rows += 1
    return rows


def read_classes_csv(path) -> dict[int, np.ndarray]:
    out: dict[int, list[int]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(int(row["class"]), []).append(int(row["box"]))
    return {k: np.array(v, dtype=np.int64) for k, v in out.items()}


# --------------------------------------------------------------------------
# fine witnesses

_Q = 2 ** 50  # base points are kept on this dyadic grid so A-orbits are exact


def _to_grid(v) -> np.ndarray:
    return np.round(wrap(v) * _Q).astype(object) % _Q


def _from_grid(k) -> np.ndarray:
    return np.array([int(c) / _Q for c in k], dtype=float)


def _base_chain(system, bx, by, n, step_bound):
    """Base pseudo-orbit of length n from bx to by with jumps <= step_bound, or None.

    One jump along E^u placed as late as possible fixes the unstable
    discrepancy; jumps along E^s in the last few steps fix the stable one.  The
    integer lift of the target is chosen to make the stable discrepancy small.
    """
    lam_u, lam_s, eu, es = system.eigen()
    P = system.eigenbasis()
    A = [[int(x) for x in row] for row in system.matrix]

    def step(k):
        return [(A[0][0] * k[0] + A[0][1] * k[1]) % _Q, (A[1][0] * k[0] + A[1][1] * k[1]) % _Q]

    k0 = list(_to_grid(bx))
    k = k0
    for _ in range(n):
        k = step(k)
    c0 = reduce_signed(np.asarray(by, dtype=float) - _from_grid(k))
    n_stable = min(6, n - 1)
    if n_stable < 1:
        return None
    s_sum = sum(lam_s ** j for j in range(n_stable))
    allowed_s = 0.95 * step_bound * abs(s_sum)
    best = None
    for M in (2, 4, 8, 16, 32, 64, 128, 256, 512):
        g = np.arange(-M, M + 1)
        m = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
        coords = np.linalg.solve(P, (c0[None, :] + m).T).T
        ok = np.abs(coords[:, 1]) <= allowed_s
        if np.any(ok):
            cand = coords[ok]
            best = cand[np.argmin(np.abs(cand[:, 0]))]
            break
    if best is None:
        return None
    c_u, c_s = best
    # unstable jump at step i_u: amplified by lam_u^(n - i_u)
    need = 0 if c_u == 0 else math.ceil(math.log(max(abs(c_u) / (0.95 * step_bound), 1.0)) / math.log(abs(lam_u)))
    i_u = n - n_stable - need
    if i_u < 1:
        return None
    xi = c_u / lam_u ** (n - i_u)
    eta = c_s / s_sum
    jumps = np.zeros((n + 1, 2))
    jumps[i_u] += xi * eu
    jumps[n - n_stable + 1:] += eta * es
    pts = [k0]
    for i in range(1, n + 1):
        k = step(pts[-1])
        if np.any(jumps[i]):
            k = [(k[0] + int(round(jumps[i][0] * _Q))) % _Q, (k[1] + int(round(jumps[i][1] * _Q))) % _Q]
        pts.append(k)
    base = np.array([_from_grid(p) for p in pts])
    base[0] = wrap(bx)
    base[-1] = wrap(by)
    return base


def fine_chain(system: SkewProductSystem, x, y, epsilon: float, n_min: int = 8,
               n_max: int = 600, winding: int = 0) -> PseudoOrbit:
    """Constructive epsilon-pseudo-orbit from x to y.

    Base: a true orbit with a few corrective jumps along the eigen-directions.
    Fiber: every step adds the same push c, found by bisection so the lifted
    fiber lands on y.  Both jump components stay below 0.45 * epsilon.
    ``winding`` shifts the integer lift of the fiber target.  Raises
    NotAttainableError when no n <= n_max works.
    """
    x, y = wrap(x), wrap(y)
    bound = 0.45 * epsilon
    n = max(n_min, 2)
    while n <= n_max:
        base = _base_chain(system, x[:2], y[:2], n, bound)
        if base is not None:
            def end_fiber(c):
                T = x[2]
                for i in range(n):
                    T = float(system.fiber_lift(base[i], T)) + c
                return T

            lo, hi = end_fiber(-bound), end_fiber(bound)
            mid = end_fiber(0.0)
            j = math.floor(mid - y[2] + 0.5) + winding
            Y = y[2] + j
            if lo <= Y <= hi:
                c, _, _ = bisect_increasing(lambda c: end_fiber(c) - Y, -bound, bound, tol=1e-13)
                pts = np.empty((n + 1, 3))
                pts[:, :2] = base
                T = x[2]
                pts[0, 2] = T
                for i in range(n):
                    T = float(system.fiber_lift(base[i], T)) + c
                    pts[i + 1, 2] = T
                pts = wrap(pts)
                pts[0], pts[-1] = x, y
                orbit = PseudoOrbit(pts, float(epsilon))
                orbit.check(system)
                return orbit
        n += max(1, n // 4)
    raise NotAttainableError(f"no {epsilon:g}-chain from {x} to {y} with at most {n_max} steps")


def random_pseudo_orbit(system: SkewProductSystem, x, n: int, epsilon: float, rng,
                        fill: float = 0.9) -> PseudoOrbit:
    """x followed by n steps of f, each perturbed by a random jump of norm fill * epsilon."""
    pts = np.empty((n + 1, 3))
    pts[0] = wrap(x)
    d = rng.normal(size=(n, 3))
    d *= (fill * epsilon) / np.linalg.norm(d, axis=1, keepdims=True)
    for i in range(n):
        pts[i + 1] = wrap(system.apply(pts[i]) + d[i])
    return PseudoOrbit(pts, float(epsilon))
