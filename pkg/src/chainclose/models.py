"""Skew products over hyperbolic toral automorphisms.

The phase space is T^3 = T^2 x S^1 with coordinates ``(v1, v2, theta)``, all
taken mod 1.  A system is

    f(v, theta) = (A v mod 1, theta + phi(v) + (a / 2pi) sin(2 pi theta) mod 1)

with ``A`` an integer hyperbolic matrix.  The circle fibers are the center
leaves, so dynamical coherence and plaque expansiveness hold by construction.
Points are plain float arrays of shape ``(3,)`` (or ``(N, 3)`` for batches).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import ConvergenceError, solve_increasing

TWO_PI = 2.0 * math.pi


# --------------------------------------------------------------------------
# torus geometry

def wrap(p):
    """Reduce coordinates to [0, 1)."""
    p = np.asarray(p, dtype=float)
    q = p - np.floor(p)
    # p - floor(p) can round up to exactly 1.0 for tiny negative p
    return np.where(q >= 1.0, 0.0, q)


def reduce_signed(d):
    """Reduce differences to [-1/2, 1/2)."""
    d = np.asarray(d, dtype=float)
    return d - np.floor(d + 0.5)


def torus_diff(p, q):
    """Shortest displacement from ``p`` to ``q`` on the flat torus."""
    return reduce_signed(np.asarray(q, dtype=float) - np.asarray(p, dtype=float))


def torus_dist(p, q):
    """Flat quotient distance; works on single points and on batches."""
    return np.linalg.norm(torus_diff(p, q), axis=-1)


def point(v1: float, v2: float, theta: float) -> np.ndarray:
    return wrap(np.array([v1, v2, theta], dtype=float))


# --------------------------------------------------------------------------
# the system

@dataclass(frozen=True)
class FiberTranslation:
    """Trigonometric polynomial phi(v) = sum amp * sin(2 pi (m1 v1 + m2 v2))."""

    terms: tuple[tuple[tuple[int, int], float], ...] = ()

    @classmethod
    def from_terms(cls, terms) -> "FiberTranslation":
        return cls(tuple(((int(m[0]), int(m[1])), float(amp)) for m, amp in terms))

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape[:-1])
        for (m1, m2), amp in self.terms:
            out = out + amp * np.sin(TWO_PI * (m1 * v[..., 0] + m2 * v[..., 1]))
        return out

    def gradient(self, v):
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape)
        for (m1, m2), amp in self.terms:
            c = amp * TWO_PI * np.cos(TWO_PI * (m1 * v[..., 0] + m2 * v[..., 1]))
            out[..., 0] += c * m1
            out[..., 1] += c * m2
        return out

    def gradient_bound(self) -> np.ndarray:
        """Upper bound on |d phi / d v_j| for j = 1, 2."""
        b = np.zeros(2)
        for (m1, m2), amp in self.terms:
            b += abs(amp) * TWO_PI * np.array([abs(m1), abs(m2)])
        return b

    def is_zero(self) -> bool:
        return all(amp == 0 for _, amp in self.terms)


@dataclass(frozen=True)
class SkewProductSystem:
    matrix: tuple[tuple[int, int], tuple[int, int]]
    phi: FiberTranslation = field(default_factory=FiberTranslation)
    nonlinearity: float = 0.0
    name: str = ""

    def __post_init__(self):
        A = np.array(self.matrix, dtype=np.int64)
        if A.shape != (2, 2):
            raise ValueError("base matrix must be 2x2")
        det = int(round(np.linalg.det(A)))
        if det != 1 or A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0] != 1:
            raise ValueError(f"base matrix must have determinant 1, got {det}")
        if abs(int(A[0, 0] + A[1, 1])) <= 2:
            raise ValueError("base matrix is not hyperbolic: |trace| <= 2")
        if not abs(self.nonlinearity) < 1.0:
            raise ValueError("fiber nonlinearity amplitude must satisfy |a| < 1")

    # -- constructors -------------------------------------------------------

    @classmethod
    def create(cls, matrix, phi_terms=(), nonlinearity=0.0, name=""):
        m = tuple(tuple(int(x) for x in row) for row in matrix)
        return cls(m, FiberTranslation.from_terms(phi_terms), float(nonlinearity), name)

    # -- linear algebra of the base ----------------------------------------

    @property
    def A(self) -> np.ndarray:
        return np.array(self.matrix, dtype=float)

    @property
    def A_int(self) -> np.ndarray:
        return np.array(self.matrix, dtype=np.int64)

    @property
    def A_inv(self) -> np.ndarray:
        (a, b), (c, d) = self.matrix
        return np.array([[d, -b], [-c, a]], dtype=float)

    def eigen(self):
        """Return ``(lam_u, lam_s, e_u, e_s)`` with |lam_s| < 1 < |lam_u|.

        Eigenvectors are unit base vectors with nonnegative first entry.
        """
        (a, b), (c, d) = self.matrix
        tr = a + d
        disc = math.sqrt(tr * tr - 4.0)
        big = (tr + math.copysign(disc, tr)) / 2.0
        small = 1.0 / big

        def vec(lam):
            # (A - lam I) x = 0
            if b != 0:
                x = np.array([b, lam - a], dtype=float)
            else:
                x = np.array([lam - d, c], dtype=float)
            x /= np.linalg.norm(x)
            if x[0] < 0 or (x[0] == 0 and x[1] < 0):
                x = -x
            return x

        return big, small, vec(big), vec(small)

    @property
    def lambda_u(self) -> float:
        return abs(self.eigen()[0])

    @property
    def lambda_s(self) -> float:
        return abs(self.eigen()[1])

    def eigenbasis(self) -> np.ndarray:
        """Columns (e_u, e_s) of the base eigenbasis."""
        _, _, eu, es = self.eigen()
        return np.column_stack([eu, es])

    def shadowing_constant(self) -> float:
        """L_b = 1/(1 - lam_s) + 1/(1 - 1/lam_u) for base shadowing."""
        return 1.0 / (1.0 - self.lambda_s) + 1.0 / (1.0 - 1.0 / self.lambda_u)

    # -- the map -----------------------------------------------------------

    def fiber_lift(self, v, T):
        """Lifted fiber map over base point ``v``: T -> T + phi(v) + nonlinear term."""
        a = self.nonlinearity
        return T + self.phi(v) + (a / TWO_PI) * np.sin(TWO_PI * np.asarray(T))

    def fiber_derivative(self, T):
        return 1.0 + self.nonlinearity * np.cos(TWO_PI * np.asarray(T))

    def fiber_lift_inverse(self, v, y):
        """Solve fiber_lift(v, T) = y for T (vectorized over y)."""
        a = self.nonlinearity
        target = np.asarray(y, dtype=float) - self.phi(v)
        if a == 0.0:
            return target
        spread = abs(a) / TWO_PI
        return solve_increasing(
            lambda T: T + (a / TWO_PI) * np.sin(TWO_PI * T),
            self.fiber_derivative,
            target,
            target - spread,
            target + spread,
        )

    def apply(self, p):
        p = np.asarray(p, dtype=float)
        v = p[..., :2]
        base = v @ self.A.T
        fib = self.fiber_lift(v, p[..., 2])
        return wrap(np.concatenate([base, fib[..., None]], axis=-1))

    def apply_inverse(self, p):
        p = np.asarray(p, dtype=float)
        v = wrap(p[..., :2] @ self.A_inv.T)
        T = self.fiber_lift_inverse(v, p[..., 2])
        return wrap(np.concatenate([v, np.asarray(T)[..., None]], axis=-1))

    def orbit(self, p, n: int) -> np.ndarray:
        """Points p, f(p), ..., f^n(p)."""
        out = np.empty((n + 1, 3))
        out[0] = wrap(p)
        for i in range(n):
            out[i + 1] = self.apply(out[i])
        return out

    def differential(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        D = np.zeros((3, 3))
        D[:2, :2] = self.A
        D[2, :2] = self.phi.gradient(p[:2])
        D[2, 2] = self.fiber_derivative(p[2])
        return D

    def lipschitz_halfwidths(self) -> np.ndarray:
        """Per-coordinate bound on |f(z) - f(z')| given |z - z'| <= 1 coordinatewise."""
        rows = np.abs(self.A).sum(axis=1)
        fib = 1.0 + abs(self.nonlinearity) + self.phi.gradient_bound().sum()
        return np.array([rows[0], rows[1], fib])

    def norm_bound(self) -> float:
        """Upper bound on sup ||Df|| (operator 2-norm)."""
        M = np.zeros((3, 3))
        M[:2, :2] = np.abs(self.A)
        M[2, :2] = self.phi.gradient_bound()
        M[2, 2] = 1.0 + abs(self.nonlinearity)
        return float(np.linalg.norm(M, 2))


# --------------------------------------------------------------------------
# invariant splitting

@dataclass(frozen=True)
class SplittingFrame:
    point: np.ndarray
    e_s: np.ndarray
    e_c: np.ndarray
    e_u: np.ndarray

    def basis(self) -> np.ndarray:
        return np.column_stack([self.e_s, self.e_c, self.e_u])

    def decompose(self, v) -> np.ndarray:
        """Coefficients (c_s, c_c, c_u) of ``v`` in the frame."""
        return np.linalg.solve(self.basis(), np.asarray(v, dtype=float))

    def min_angle(self) -> float:
        vs = (self.e_s, self.e_c, self.e_u)
        angles = []
        for i in range(3):
            for j in range(i + 1, 3):
                c = abs(float(np.dot(vs[i], vs[j])))
                angles.append(math.acos(min(1.0, c)))
        return min(angles)


def _unit(v):
    return v / np.linalg.norm(v)


def _push_unstable(system, p, depth):
    _, _, eu, _ = system.eigen()
    pts = [np.asarray(p, dtype=float)]
    for _ in range(depth):
        pts.append(system.apply_inverse(pts[-1]))
    v = np.array([eu[0], eu[1], 0.0])
    history = []
    for z in reversed(pts[1:]):
        v = _unit(system.differential(z) @ v)
        history.append(v)
    return history


def _pull_stable(system, p, depth):
    _, _, _, es = system.eigen()
    pts = system.orbit(p, depth)
    v = np.array([es[0], es[1], 0.0])
    history = []
    for z in reversed(pts[:-1]):
        v = _unit(np.linalg.solve(system.differential(z), v))
        history.append(v)
    return history


def compute_splitting(system: SkewProductSystem, p, depth: int = 80, tol: float = 1e-8) -> SplittingFrame:
    """Approximate E^s, E^c, E^u at ``p`` by power iteration along the orbit.

    E^u comes from pushing the base unstable direction forward along the
    backward orbit ending at ``p``; E^s from pulling the base stable direction
    back along the forward orbit.  E^c is the fiber direction.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    p = wrap(p)
    hu = _push_unstable(system, p, depth)
    hs = _pull_stable(system, p, depth)
    if depth >= 2:
        # the fiber component is the only free entry; compare with a run one step shorter
        hu_short = _push_unstable(system, p, depth - 1)[-1]
        hs_short = _pull_stable(system, p, depth - 1)[-1]
        err = max(np.linalg.norm(hu[-1] - hu_short), np.linalg.norm(hs[-1] - hs_short))
        if err > tol:
            raise ConvergenceError(
                f"splitting not converged at depth {depth}: change {err:.2e} > {tol:.1e}"
            )
    return SplittingFrame(p, hs[-1], np.array([0.0, 0.0, 1.0]), hu[-1])


@dataclass
class PHReport:
    lambda_estimate: float
    lower_margin: float
    upper_margin: float
    min_angle: float
    passed: bool
    worst_point: np.ndarray

    @property
    def margin(self) -> float:
        return min(self.lower_margin, self.upper_margin)


def verify_partial_hyperbolicity(system, sample_count: int = 64, k: int = 1, seed: int = 0,
                                 depth: int = 80) -> PHReport:
    """Check ||Df^k e_s|| < min(1, ||Df^k e_c||) <= max(1, ||Df^k e_c||) < ||Df^k e_u||.

    Margins are in log scale; a failing sample gives a negative margin and
    ``passed=False`` rather than an exception.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    lower, upper, lam, angle = math.inf, math.inf, 0.0, math.inf
    worst = None
    worst_margin = math.inf
    for z in rng.random((sample_count, 3)):
        fr = compute_splitting(system, z, depth=depth, tol=1.0)
        M = np.eye(3)
        w = z
        for _ in range(k):
            M = system.differential(w) @ M
            w = system.apply(w)
        ns = np.linalg.norm(M @ fr.e_s)
        nc = np.linalg.norm(M @ fr.e_c)
        nu = np.linalg.norm(M @ fr.e_u)
        lo = math.log(min(1.0, nc)) - math.log(ns)
        up = math.log(nu) - math.log(max(1.0, nc))
        lower, upper = min(lower, lo), min(upper, up)
        lam = max(lam, ns ** (1.0 / k), nu ** (-1.0 / k))
        angle = min(angle, fr.min_angle())
        if min(lo, up) < worst_margin:
            worst_margin, worst = min(lo, up), z
    return PHReport(lam, lower, upper, angle, lower > 0 and upper > 0, worst)


def cone_check(system, curve, a_cone: float, depth: int = 60) -> bool:
    """True iff every chord of the sampled curve lies in the a-cone of E^c."""
    curve = np.asarray(curve, dtype=float)
    chords = torus_diff(curve[:-1], curve[1:])
    if np.any(np.linalg.norm(chords, axis=-1) >= 1e-2):
        raise ValueError("curve samples too sparse: consecutive samples must be closer than 1e-2")
    for p, v in zip(curve[:-1], chords):
        fr = compute_splitting(system, p, depth=depth, tol=1.0)
        cs, cc, cu = fr.decompose(v)
        su = np.linalg.norm(cs * fr.e_s + cu * fr.e_u)
        if su > a_cone * abs(cc) * (1 + 1e-12) + 1e-15:
            return False
    return True


# --------------------------------------------------------------------------
# transverse field

@dataclass(frozen=True)
class CenterVectorField:
    """Constant vector field X on T^3; its flow X_tau is translation by tau * X.

    The default is the unit fiber field, i.e. the positive unit vector of E^c.
    """

    system: SkewProductSystem
    base_component: tuple[float, float] = (0.0, 0.0)
    fiber_component: float = 1.0

    @classmethod
    def tilted(cls, system, unstable: float = 0.1, stable: float = 0.0):
        _, _, eu, es = system.eigen()
        b = unstable * eu + stable * es
        return cls(system, (float(b[0]), float(b[1])), 1.0)

    @property
    def vector(self) -> np.ndarray:
        return np.array([*self.base_component, self.fiber_component], dtype=float)

    def is_vertical(self) -> bool:
        return self.base_component == (0.0, 0.0)

    def flow(self, p, tau: float):
        return wrap(np.asarray(p, dtype=float) + tau * self.vector)

    def center_component(self, p, depth: int = 60) -> float:
        """pi^c(X(p)): the E^c coefficient in the splitting at p."""
        fr = compute_splitting(self.system, p, depth=depth, tol=1.0)
        return float(fr.decompose(self.vector)[1])

    def eigen_components(self) -> np.ndarray:
        """Base part of X in (unstable, stable) eigen-coordinates."""
        return np.linalg.solve(self.system.eigenbasis(), np.array(self.base_component))
