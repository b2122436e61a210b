"""Closing and connecting by composing f with the flow of a transverse field.

Along a lifted center chain the perturbed orbit is followed in eigen-fiber
coordinates: the base part sits at a constant offset delta from the chain's
base orbit (the bounded solution of delta' = A delta + tau X_base) and the
fiber part is iterated by the lifted map.  D(tau) compares the lifted fiber
coordinate after n steps with the last anchor; a root of D gives the orbit.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .center_lift import ORDER_TOL, LiftedChain
from .models import CenterVectorField, SkewProductSystem, torus_dist, wrap
from .numerics import ConvergenceError, bisect_increasing

TAU_MAX = 0.1  # covers tau in (0, 1/k] down to k = 10
REPLAY_MAX = 10  # a float replay drifts like lam_u^n * 1e-16


class ClosingError(RuntimeError):
    pass


class ConnectionViolation(AssertionError):
    pass


@dataclass(frozen=True)
class PerturbationFamily:
    system: SkewProductSystem
    field: CenterVectorField
    tau_max: float = TAU_MAX

    @classmethod
    def vertical(cls, system, tau_max=TAU_MAX):
        return cls(system, CenterVectorField(system), tau_max)

    def __call__(self, tau: float, p):
        return perturbed_map(self, tau, p)


def perturbed_map(family: PerturbationFamily, tau: float, p):
    if not abs(tau) < 0.5:
        raise ValueError(f"|tau| must be < 1/2, got {tau}")
    return family.field.flow(family.system.apply(p), tau)


def replay(family: PerturbationFamily, tau: float, p, n: int) -> np.ndarray:
    out = np.empty((n + 1, 3))
    out[0] = wrap(p)
    for i in range(n):
        out[i + 1] = perturbed_map(family, tau, out[i])
    return out


# --------------------------------------------------------------------------
# sections

def section_offset(family: PerturbationFamily, tau: float, tol: float = 1e-12, max_iter: int = 10_000) -> np.ndarray:
    """Bounded solution of delta = A delta + tau X_base (constant along the chain).

    Stable coordinate iterated forward, unstable one backward.
    """
    lam_u, lam_s, _, _ = family.system.eigen()
    xu, xs = tau * family.field.eigen_components()
    s = u = 0.0
    for _ in range(max_iter):
        ns, nu = lam_s * s + xs, (u - xu) / lam_u
        done = abs(ns - s) < tol and abs(nu - u) < tol
        s, u = ns, nu
        if done:
            return family.system.eigenbasis() @ np.array([u, s])
    raise ConvergenceError("section offset contraction did not converge")


@dataclass
class ContinuedSection:
    chain: LiftedChain
    tau: float
    points: np.ndarray
    lifted_fiber: np.ndarray
    su_offsets: np.ndarray
    conjugacy_offsets: np.ndarray

    @property
    def su_sup(self) -> float:
        return float(np.linalg.norm(self.su_offsets, axis=1).max())

    @property
    def lipschitz(self) -> float:
        return self.su_sup / abs(self.tau) if self.tau else 0.0

    @property
    def displacement(self) -> float:
        return float(self.lifted_fiber[-1] - self.chain.offsets[-1])

    def step_residual(self, family: PerturbationFamily) -> float:
        """max_i d(f_tau(p_i), p_{i+1}), one step at a time."""
        if len(self.points) < 2:
            return 0.0
        img = perturbed_map(family, self.tau, self.points[:-1])
        return float(torus_dist(img, self.points[1:]).max())


def continue_section(family: PerturbationFamily, lifted: LiftedChain, tau: float) -> ContinuedSection:
    if not abs(tau) <= family.tau_max + 1e-15:
        raise ValueError(f"|tau| = {abs(tau)} exceeds tau_max = {family.tau_max}")
    system = family.system
    n = lifted.n
    delta = section_offset(family, tau) if tau else np.zeros(2)
    base = lifted.base + delta
    xc = family.field.fiber_component
    T = np.empty(n + 1)
    T[0] = lifted.offsets[0]
    for i in range(n):
        T[i + 1] = system.fiber_lift(base[i], T[i]) + tau * xc
    pts = wrap(np.column_stack([base, T]))
    su = np.broadcast_to(delta, (n + 1, 2)).copy()
    return ContinuedSection(lifted, float(tau), pts, T, su, np.zeros(n + 1))


def displacement(family: PerturbationFamily, lifted: LiftedChain, tau: float) -> float:
    return continue_section(family, lifted, tau).displacement


# --------------------------------------------------------------------------
# center push

@dataclass
class PushEstimate:
    tau: float
    delta: float
    argmin: np.ndarray

    @property
    def ratio(self) -> float:
        return self.delta / self.tau


def min_center_push(family: PerturbationFamily, tau: float, sample_count: int = 256, seed: int = 0) -> PushEstimate:
    """Smallest one-step gain of the perturbed lift over the unperturbed one.

    At z = (v, T) the section point over v is (v + delta, T); the gain is
    G(v + delta, T) + tau X_c - G(v, T).
    """
    if not 0 < tau <= family.tau_max:
        raise ValueError(f"tau must lie in (0, {family.tau_max}]")
    rng = np.random.default_rng(seed)
    z = rng.random((sample_count, 3))
    delta = section_offset(family, tau)
    sys = family.system
    gain = (sys.fiber_lift(z[:, :2] + delta, z[:, 2]) + tau * family.field.fiber_component
            - sys.fiber_lift(z[:, :2], z[:, 2]))
    i = int(np.argmin(gain))
    est = PushEstimate(float(tau), float(gain[i]), z[i])
    if not est.delta > 0:
        raise ClosingError(f"non-positive center push {est.delta:.3g} at tau = {tau}")
    return est


# --------------------------------------------------------------------------
# closing

@dataclass
class ClosingResult:
    k: int
    tau_k: float
    p_k: np.ndarray
    n_k: int
    endpoint: np.ndarray
    displacement_residual: float
    step_residual: float
    degenerate: bool = False
    periodic: bool = False
    closure_residual: float | None = None
    direction: int = 1
    iterations: int = 0
    section_lipschitz: float = 0.0
    endpoint_distances: tuple[float, float] | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p_k"] = self.p_k.tolist()
        d["endpoint"] = self.endpoint.tolist()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _chain_sign(lifted: LiftedChain, tol: float) -> int:
    t = lifted.jump_times
    neg, pos = bool(np.any(t < -tol)), bool(np.any(t > tol))
    if neg and pos:
        raise ValueError("jump times have mixed signs; reorder the chain first")
    return 1 if pos else -1


def is_periodic_chain(lifted: LiftedChain, tol: float = 1e-12) -> bool:
    """x_0 = x_n up to the rounding left by summing lifted offsets."""
    pts = lifted.points()
    return lifted.n > 0 and float(torus_dist(pts[0], pts[-1])) <= tol


def find_closing_tau(family: PerturbationFamily, lifted: LiftedChain, k: int, tol: float = 1e-12) -> ClosingResult:
    """Smallest-magnitude parameter tau in (0, 1/k) with D(tau) = 0.

    Chains with t_i >= 0 are handled by reflection: tau runs over (-1/k, 0).
    """
    if lifted.n == 0:
        raise ValueError("chain has no steps")
    top = 1.0 / k
    if top > family.tau_max + 1e-15:
        raise ValueError(f"1/k = {top} exceeds tau_max = {family.tau_max}")
    if not lifted.epsilon < top:
        raise ValueError(f"chain epsilon {lifted.epsilon} must be below 1/k = {top}")
    sign = -_chain_sign(lifted, ORDER_TOL)  # direction of tau

    def D(sigma):
        return sign * displacement(family, lifted, sign * sigma)

    d0 = D(0.0)
    if abs(d0) < tol:
        tau, res, it, degenerate = 0.0, abs(d0), 0, True
    else:
        if d0 > 0:
            raise ClosingError(f"D(0) = {sign * d0:.3g} has the wrong sign for an ordered chain")
        d1 = D(top)
        if not d1 > 0:
            raise ClosingError(f"D(1/k) = {sign * d1:.3g} <= 0: choose a smaller epsilon than {lifted.epsilon}")
        sigma, res, it = bisect_increasing(D, 0.0, top, tol=tol)
        tau, res, degenerate = sign * sigma, abs(res), False
    sec = continue_section(family, lifted, tau)
    p_k = sec.points[0].copy()
    result = ClosingResult(
        k=int(k), tau_k=float(tau), p_k=p_k, n_k=lifted.n, endpoint=sec.points[-1].copy(),
        displacement_residual=float(res), step_residual=sec.step_residual(family),
        degenerate=degenerate, direction=sign, iterations=int(it), section_lipschitz=sec.lipschitz,
    )
    if result.step_residual > 1e-12:
        raise ClosingError(f"section is not an f_tau orbit: step residual {result.step_residual:.3g}")
    if is_periodic_chain(lifted):
        result.periodic = True
        # the section orbit is checked step by step above; a plain replay is
        # only trustworthy for short orbits
        result.closure_residual = float(torus_dist(result.endpoint, p_k))
        if lifted.n <= REPLAY_MAX:
            end = replay(family, tau, p_k, lifted.n)[-1]
            result.closure_residual = max(result.closure_residual, float(torus_dist(end, p_k)))
    return result


# --------------------------------------------------------------------------
# verification

@dataclass
class ConnectionReport:
    k: int
    tau_k: float
    L_meas: float
    bound: float
    d_x_x0: float
    d_x0_pk: float
    d_x_pk: float
    d_y_yn: float
    d_yn_end: float
    d_y_end: float
    epsilon: float
    passed: bool = field(default=True)

    def inequalities(self) -> list[str]:
        return [
            f"d(x,p_k) = {self.d_x_pk:.6g} <= d(x,x_0) + d(x_0,p_k) = {self.d_x_x0:.6g} + {self.d_x0_pk:.6g}"
            f" < (L+1)/k = {self.bound:.6g}",
            f"d(y,f^n(p_k)) = {self.d_y_end:.6g} <= {self.d_y_yn:.6g} + {self.d_yn_end:.6g}"
            f" < (L+1)/k = {self.bound:.6g}",
        ]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["inequalities"] = self.inequalities()
        return d


def verify_connection(family: PerturbationFamily, result: ClosingResult, x, y, k: int, L_meas: float,
                      lifted: LiftedChain | None = None, strict: bool = True) -> ConnectionReport:
    """Check d(x, p_k) and d(y, f^n(p_k)) against (L_meas + 1)/k."""
    x, y = wrap(x), wrap(y)
    bound = (L_meas + 1.0) / k
    if lifted is not None:
        x0, xn, eps = lifted.anchor(0), lifted.anchor(lifted.n), lifted.epsilon
    else:
        x0, xn, eps = result.p_k, result.endpoint, float("nan")
    d = lambda a, b: float(torus_dist(a, b))  # noqa: E731
    rep = ConnectionReport(
        k=int(k), tau_k=result.tau_k, L_meas=float(L_meas), bound=bound,
        d_x_x0=d(x, x0), d_x0_pk=d(x0, result.p_k), d_x_pk=d(x, result.p_k),
        d_y_yn=d(y, xn), d_yn_end=d(xn, result.endpoint), d_y_end=d(y, result.endpoint),
        epsilon=eps,
    )
    rep.passed = rep.d_x_pk < bound and rep.d_y_end < bound
    result.endpoint_distances = (rep.d_x_pk, rep.d_y_end)
    if strict and not rep.passed:
        raise ConnectionViolation("; ".join(rep.inequalities()))
    return rep
