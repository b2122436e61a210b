"""Lifted center dynamics along a center pseudo-orbit and the ordering rewrite.

Each anchor x_i gets a chart t -> (v_i, Theta_i + t mod 1), where Theta_i is a
real lift of the fiber coordinate.  The lifts are chosen so that
f_hat_i(t) = G_i(Theta_i + t) - Theta_{i+1}, with G_i the lifted fiber map over
v_i, satisfies f_hat_i(0) = t_{i+1}.  Rewriting a chain only moves anchors
along their leaves, so it is recorded as shifts s_i of the chart origins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .center_shadowing import CenterPseudoOrbit
from .models import SkewProductSystem, reduce_signed, wrap

ORDER_TOL = 1e-12


@dataclass(frozen=True)
class CenterLeafChart:
    anchor: np.ndarray
    offset: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (3,))
        out[..., :2] = self.anchor[:2]
        out[..., 2] = np.mod(self.offset + t, 1.0)
        return out


@dataclass
class LiftedChain:
    system: SkewProductSystem
    base: np.ndarray
    offsets: np.ndarray
    epsilon: float
    jump_times: np.ndarray
    rewrite_steps: int = 0

    @classmethod
    def from_offsets(cls, system, base, offsets, epsilon, rewrite_steps=0):
        base = np.asarray(base, dtype=float)
        offsets = np.asarray(offsets, dtype=float)
        t = system.fiber_lift(base[:-1], offsets[:-1]) - offsets[1:]
        return cls(system, base, offsets, float(epsilon), np.asarray(t, dtype=float), rewrite_steps)

    @classmethod
    def from_jump_times(cls, system, base, theta0: float, jump_times, epsilon):
        """Chain over ``base`` whose i-th step lands t_i behind the anchor."""
        base = np.asarray(base, dtype=float)
        t = np.asarray(jump_times, dtype=float)
        offsets = np.empty(len(base))
        offsets[0] = theta0
        for i in range(len(t)):
            offsets[i + 1] = system.fiber_lift(base[i], offsets[i]) - t[i]
        return cls.from_offsets(system, base, offsets, epsilon)

    @property
    def n(self) -> int:
        return len(self.base) - 1

    def chart(self, i: int) -> CenterLeafChart:
        return CenterLeafChart(self.anchor(i), float(self.offsets[i]))

    def anchor(self, i: int) -> np.ndarray:
        return np.array([*self.base[i], self.offsets[i] % 1.0])

    def points(self) -> np.ndarray:
        return wrap(np.column_stack([self.base, self.offsets]))

    def forward(self, i: int, t):
        """f_hat on R_i, landing in R_{i+1}."""
        return self.system.fiber_lift(self.base[i], self.offsets[i] + np.asarray(t)) - self.offsets[i + 1]

    def inverse(self, i: int, u):
        """Inverse of f_hat on R_i: R_{i+1} -> R_i."""
        return self.system.fiber_lift_inverse(self.base[i], self.offsets[i + 1] + np.asarray(u)) - self.offsets[i]

    def orbit_of_origin(self) -> np.ndarray:
        """f_hat^i(0_0) for i = 0..n."""
        o = np.zeros(self.n + 1)
        for i in range(self.n):
            o[i + 1] = self.forward(i, o[i])
        return o

    def commuting_residual(self, ts) -> float:
        """sup |theta_{i+1}(f_hat(t)) - f(theta_i(t))| over the given t values."""
        ts = np.asarray(ts, dtype=float)
        worst = 0.0
        for i in range(self.n):
            lhs = self.chart(i + 1)(self.forward(i, ts))
            rhs = self.system.apply(self.chart(i)(ts))
            rhs[:, :2] = self.base[i + 1]  # base agreement is the center chain's business
            worst = max(worst, float(np.abs(reduce_signed(lhs - rhs)).max()))
        return worst

    def deck_residual(self, ts) -> float:
        ts = np.asarray(ts, dtype=float)
        return max(float(np.abs(self.forward(i, ts + 1.0) - self.forward(i, ts) - 1.0).max())
                   for i in range(self.n)) if self.n else 0.0

    def check(self) -> None:
        t = np.abs(self.jump_times)
        if t.size and not t.max() < self.epsilon:
            raise AssertionError(f"lifted jump {t.max():.6g} >= epsilon {self.epsilon:.6g}")

    def to_json(self) -> str:
        return json.dumps({
            "epsilon": self.epsilon,
            "base": self.base.tolist(),
            "offsets": self.offsets.tolist(),
            "jump_times": self.jump_times.tolist(),
            "rewrite_steps": self.rewrite_steps,
        })

    @classmethod
    def from_json(cls, system, text: str) -> "LiftedChain":
        d = json.loads(text)
        return cls(system, np.array(d["base"], dtype=float), np.array(d["offsets"], dtype=float),
                   float(d["epsilon"]), np.array(d["jump_times"], dtype=float), int(d.get("rewrite_steps", 0)))


def lift_chain(system: SkewProductSystem, chain: CenterPseudoOrbit, epsilon: float | None = None) -> LiftedChain:
    eps = chain.epsilon if epsilon is None else float(epsilon)
    if not eps < 0.5:
        raise ValueError(f"no unique lift with |f_hat(0)| < {eps}: need epsilon < 1/2")
    t = reduce_signed(np.asarray(chain.jump_times, dtype=float))
    lifted = LiftedChain.from_jump_times(system, chain.points[:, :2], float(chain.points[0, 2]), t, eps)
    if t.size and np.abs(lifted.jump_times - t).max() > 1e-12:
        raise AssertionError("lifted jump times disagree with the center chain")
    lifted.check()
    return lifted


# --------------------------------------------------------------------------
# ordering

def _reorder_shifts(fwd, inv, n: int, tol: float) -> tuple[np.ndarray, int]:
    """Chart shifts making every jump <= 0, given f_hat^n(0_0) <= 0_n.

    ``fwd(i, t)`` and ``inv(i, u)`` are f_hat on R_i and its inverse.
    """
    s = np.zeros(n + 1)
    o = np.zeros(n + 1)
    for i in range(n):
        o[i + 1] = fwd(i, o[i])
    steps = 0
    while True:
        img = np.array([fwd(i, s[i]) for i in range(n)])
        ok = (o[1:] <= img + tol) & (img <= s[1:] + tol)
        if not ok[n - 1]:
            k = n
        else:
            bad = np.flatnonzero(~ok)
            k = int(bad[-1]) + 1 if bad.size else 0
        if k == 0:
            break
        steps += 1
        if steps > n:
            raise AssertionError(f"ordering loop exceeded {n} rewrites")
        if img[k - 1] > s[k] + tol:
            # (b): splice the backward orbit of the k-th anchor
            back = np.empty(k + 1)
            back[k] = s[k]
            for i in range(k - 1, 0, -1):
                back[i] = inv(i, back[i + 1])
            above = [i for i in range(1, k) if s[i] > back[i]]
            j = above[0] if above else k - 1
            s[j:k] = back[j:k]
        else:
            # (a): follow the true orbit of x_0 up to step k
            s[1:k] = o[1:k]
            break
    return s, steps


def reorder_chain(lifted: LiftedChain, tol: float = ORDER_TOL) -> LiftedChain:
    """Rewrite intermediate anchors so all jump times share one sign.

    Endpoints and chain length are kept.  The case f_hat^n(0_0) > 0_n is the
    mirror image and runs through the same routine on t -> -t.
    """
    n = lifted.n
    if n == 0:
        return lifted
    o_n = lifted.orbit_of_origin()[n]
    if o_n <= tol:
        s, steps = _reorder_shifts(lifted.forward, lifted.inverse, n, tol)
    else:
        s, steps = _reorder_shifts(lambda i, t: -lifted.forward(i, -t),
                                   lambda i, u: -lifted.inverse(i, -u), n, tol)
        s = -s
    out = LiftedChain.from_offsets(lifted.system, lifted.base, lifted.offsets + s, lifted.epsilon, steps)
    t = out.jump_times
    t[np.abs(t) <= tol] = 0.0
    if np.any(t > 0) and np.any(t < 0):
        raise AssertionError("reordered chain still has mixed signs")
    out.check()
    return out


@dataclass
class OrderReport:
    sign: int | None  # None when jump times have mixed signs
    comparisons: list[tuple[int, float, str]]


def chain_order_report(lifted: LiftedChain, tol: float = ORDER_TOL) -> OrderReport:
    t = lifted.jump_times
    neg, pos = bool(np.any(t < -tol)), bool(np.any(t > tol))
    sign = None if (neg and pos) else (-1 if neg else (1 if pos else 0))
    o = lifted.orbit_of_origin()
    comps = []
    for i in range(1, lifted.n + 1):
        rel = "=" if abs(o[i]) <= tol else ("<" if o[i] < 0 else ">")
        comps.append((i, float(o[i]), rel))
    return OrderReport(sign, comps)
