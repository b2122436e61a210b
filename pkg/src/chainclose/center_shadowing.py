"""Upgrading pseudo-orbits to center pseudo-orbits.

For the skew products in ``models`` the local product structure is global in
eigen-fiber coordinates: the base is shadowed by the classical linear
recursion and the fiber coordinate is left where the pseudo-orbit put it, so
every remaining jump runs along a center leaf.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .chain_engine import PseudoOrbit, random_pseudo_orbit
from .models import SkewProductSystem, reduce_signed, torus_dist, wrap
from .numerics import ConvergenceError

EPS0 = 0.1


@dataclass
class CenterPseudoOrbit:
    """Points x_0..x_n with f(x_{i-1}) = x_i moved by t_i along the fiber.

    ``jump_times[i-1]`` is t_i; a negative value means x_i sits ahead of
    f(x_{i-1}) on the leaf.
    """

    points: np.ndarray
    epsilon: float
    jump_times: np.ndarray
    lipschitz_estimate: float = 0.0
    source_epsilon: float = 0.0
    iterations: int = 0

    def __len__(self):
        return len(self.points)

    @property
    def n(self) -> int:
        return len(self.points) - 1

    def check(self, system: SkewProductSystem, tol: float = 1e-10) -> None:
        img = system.apply(self.points[:-1])
        base_gap = np.abs(reduce_signed(img[:, :2] - self.points[1:, :2]))
        if base_gap.size and base_gap.max() > tol:
            raise AssertionError(f"jump leaves the center leaf by {base_gap.max():.3g}")
        t = np.abs(self.jump_times)
        if t.size and not t.max() < self.epsilon:
            raise AssertionError(f"center jump {t.max():.6g} >= epsilon {self.epsilon:.6g}")


def center_jump_times(system: SkewProductSystem, points) -> np.ndarray:
    """t_i = fiber(f(x_{i-1})) - fiber(x_i), reduced to [-1/2, 1/2)."""
    pts = np.asarray(points, dtype=float)
    img = system.apply(pts[:-1])
    return reduce_signed(img[:, 2] - pts[1:, 2])


def _as_points(orbit) -> tuple[np.ndarray, float | None]:
    if isinstance(orbit, PseudoOrbit):
        return wrap(orbit.points), orbit.epsilon
    return wrap(np.asarray(orbit, dtype=float)), None


def _eigen_coords(system, vectors):
    return np.linalg.solve(system.eigenbasis(), np.asarray(vectors, dtype=float).T).T


def base_jumps(system: SkewProductSystem, base) -> np.ndarray:
    """e_i = base(w_i) - A base(w_{i-1}) as signed vectors, i = 1..n."""
    base = np.asarray(base, dtype=float)
    return reduce_signed(base[1:] - base[:-1] @ system.A.T)


# --------------------------------------------------------------------------
# holonomies

@dataclass(frozen=True)
class HolonomyStep:
    """Stable holonomy between the local stable disks at w_i and w_{i+1}.

    Disks are parametrized by the stable eigen-coordinate relative to the
    anchor; the map is z -> lam_s z - e^s_{i+1}.
    """

    source: np.ndarray
    target: np.ndarray
    lam_s: float
    offset: float
    stable_direction: np.ndarray

    def __call__(self, z):
        return self.lam_s * np.asarray(z) - self.offset

    def point(self, z) -> np.ndarray:
        """Base point of h(z) on the stable disk of the target."""
        return wrap(self.target[:2] + self(z) * self.stable_direction)

    @property
    def contraction(self) -> float:
        return abs(self.lam_s)


def stable_holonomies(system: SkewProductSystem, points) -> list[HolonomyStep]:
    pts = np.asarray(points, dtype=float)
    e = _eigen_coords(system, base_jumps(system, pts[:, :2]))
    _, lam_s, _, es = system.eigen()
    return [HolonomyStep(pts[i].copy(), pts[i + 1].copy(), lam_s, float(e[i, 1]), es)
            for i in range(len(pts) - 1)]


def compose(steps, z):
    for h in steps:
        z = h(z)
    return z


def _fixed_point(step, tol=1e-12, max_iter=10_000):
    """Banach iteration of a contraction from 0; returns (fixed point, iterations)."""
    z = 0.0
    for it in range(1, max_iter + 1):
        nz = step(z)
        if abs(nz - z) < tol:
            return nz, it
        z = nz
    raise ConvergenceError(f"composed holonomy did not settle in {max_iter} iterations")


def holonomy_iteration_bound(system: SkewProductSystem, n: int) -> int:
    return math.ceil(-12 * math.log(10) / (n * math.log(system.lambda_s))) + 1


# --------------------------------------------------------------------------
# base shadowing

@dataclass
class BaseShadow:
    base: np.ndarray
    offsets: np.ndarray
    iterations: int = 0


def _check_jumps(system, pts, eps0):
    if len(pts) > 1:
        m = float(torus_dist(system.apply(pts[:-1]), pts[1:]).max())
        if not m < eps0:
            raise ValueError(f"jumps too large for shadowing: {m:.4g} >= eps0 {eps0}")


def _shadow_offsets(system, base, periodic, tol=1e-12):
    lam_u, lam_s, _, _ = system.eigen()
    n = len(base) - 1
    e = _eigen_coords(system, base_jumps(system, base))
    eu, es = e[:, 0], e[:, 1]
    s0 = u_n = 0.0
    iters = 0
    if periodic and n > 0:
        def stable_round(z):
            for j in range(n):
                z = lam_s * z - es[j]
            return z

        def unstable_round(z):
            for j in range(n - 1, -1, -1):
                z = (z + eu[j]) / lam_u
            return z

        s0, it_s = _fixed_point(stable_round, tol)
        u_n, it_u = _fixed_point(unstable_round, tol)
        iters = max(it_s, it_u)
    s = np.empty(n + 1)
    u = np.empty(n + 1)
    s[0] = s0
    for i in range(1, n + 1):
        s[i] = lam_s * s[i - 1] - es[i - 1]
    u[n] = u_n
    for i in range(n - 1, -1, -1):
        u[i] = (u[i + 1] + eu[i]) / lam_u
    offsets = np.column_stack([u, s]) @ system.eigenbasis().T
    return offsets, iters


def base_shadow(system: SkewProductSystem, orbit, eps0: float = EPS0, periodic: bool = False) -> BaseShadow:
    """True base orbit shadowing the base part of ``orbit``.

    Non-periodic chains are treated as true orbits before step 0 and after
    step n, so the stable offset vanishes at 0 and the unstable one at n.
    """
    pts, _ = _as_points(orbit)
    _check_jumps(system, pts, eps0)
    offsets, iters = _shadow_offsets(system, pts[:, :2], periodic)
    base = wrap(pts[:, :2] + offsets)
    if periodic:
        base[-1] = base[0]
    return BaseShadow(base, offsets, iters)


# --------------------------------------------------------------------------
# center shadowing

def _center_from_base(system, pts, shadow, eps, eps0):
    x = np.empty_like(pts)
    x[:, :2] = shadow.base
    x[:, 2] = pts[:, 2]
    t = center_jump_times(system, x)
    dist = torus_dist(x, pts)
    lb = system.shadowing_constant()
    if eps is None:
        eps = max(float(torus_dist(system.apply(pts[:-1]), pts[1:]).max(initial=0.0)), 1e-12)
    L_meas = float(dist.max(initial=0.0)) / eps
    if not L_meas <= lb + 1.0:
        raise AssertionError(f"shadowing distance {L_meas:.4g} eps exceeds (L_b + 1) eps = {lb + 1:.4g} eps")
    grad = float(system.phi.gradient_bound().sum())
    L_out = 1.0 + lb * (1.0 + grad)
    c = CenterPseudoOrbit(x, L_out * eps, t, L_meas, eps)
    c.check(system)
    return c


def center_shadow(system: SkewProductSystem, orbit, eps0: float = EPS0) -> CenterPseudoOrbit:
    pts, eps = _as_points(orbit)
    shadow = base_shadow(system, pts, eps0)
    return _center_from_base(system, pts, shadow, eps, eps0)


def center_shadow_periodic(system: SkewProductSystem, orbit, eps0: float = EPS0) -> CenterPseudoOrbit:
    pts, eps = _as_points(orbit)
    if not np.array_equal(pts[0], pts[-1]):
        raise ValueError("periodic shadowing needs w_a == w_b exactly")
    shadow = base_shadow(system, pts, eps0, periodic=True)
    c = _center_from_base(system, pts, shadow, eps, eps0)
    c.points[-1] = c.points[0]
    c.jump_times = center_jump_times(system, c.points)
    c.check(system)
    c.iterations = shadow.iterations
    return c


# --------------------------------------------------------------------------
# measurement

@dataclass
class ShadowRow:
    epsilon: float
    trial: int
    max_distance: float
    lipschitz_estimate: float


@dataclass
class LipschitzTable:
    rows: list[ShadowRow] = field(default_factory=list)

    def sup_by_eps(self) -> dict[float, float]:
        out: dict[float, float] = {}
        for r in self.rows:
            out[r.epsilon] = max(out.get(r.epsilon, 0.0), r.lipschitz_estimate)
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", "trial", "max_distance", "L_estimate"])
            for r in self.rows:
                w.writerow([repr(r.epsilon), r.trial, repr(r.max_distance), repr(r.lipschitz_estimate)])


def measure_lipschitz_L(system: SkewProductSystem, trial_count: int, eps_list, seed: int = 0,
                        length: int = 30, fill: float = 0.9, true_orbits: bool = False) -> LipschitzTable:
    """Empirical sup d(x_i, w_i)/eps over random eps-pseudo-orbits."""
    rng = np.random.default_rng(seed)
    table = LipschitzTable()
    for eps in eps_list:
        for trial in range(trial_count):
            x0 = rng.random(3)
            if true_orbits:
                w = PseudoOrbit(system.orbit(x0, length), float(eps))
            else:
                w = random_pseudo_orbit(system, x0, length, eps, rng, fill=fill)
            c = center_shadow(system, w)
            d = float(torus_dist(c.points, w.points).max())
            table.rows.append(ShadowRow(float(eps), trial, d, d / eps))
    return table
