import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainclose.center_lift import LiftedChain, chain_order_report, lift_chain, reorder_chain
from chainclose.center_shadowing import center_shadow
from chainclose.chain_engine import random_pseudo_orbit
from tests.oracles import ordering


def _lifted(system, jumps, x0=(0.3, 0.7), theta0=0.25, eps=0.1):
    base = system.orbit([*x0, 0.0], len(jumps))[:, :2]
    return LiftedChain.from_jump_times(system, base, theta0, jumps, eps)


def _oracle(lifted):
    F = lambda i, t: float(lifted.forward(i, t))  # noqa: E731
    Finv = lambda i, u: float(lifted.inverse(i, u))  # noqa: E731
    return ordering.rewrite(F, Finv, lifted.n)


def test_frozen_pure_fiber_example(product, frozen):
    fz = frozen["reorder_example"]
    lc = _lifted(product, fz["t"], theta0=0.0)  # forward map t -> t + t_i
    out = reorder_chain(lc)
    assert np.allclose(out.offsets - lc.offsets, fz["shifts"], atol=1e-15)
    assert out.rewrite_steps == fz["rounds"]
    assert np.allclose(out.jump_times, fz["t_out"], atol=1e-15)


def test_uniform_sign_unchanged(cat_skew):
    lc = _lifted(cat_skew, [0.01, 0.02, 0.005, 0.03])
    out = reorder_chain(lc)
    assert out.rewrite_steps == 0
    assert np.array_equal(out.offsets, lc.offsets)


def test_zero_chain(cat_skew):
    lc = _lifted(cat_skew, np.zeros(6))
    out = reorder_chain(lc)
    assert out.rewrite_steps == 0 and not out.jump_times.any()
    assert chain_order_report(out).sign == 0


def test_reorder_keeps_endpoints_and_length(cat_skew):
    lc = _lifted(cat_skew, [0.03, -0.04, 0.02, -0.01, 0.05, -0.02, 0.01])
    out = reorder_chain(lc)
    assert out.n == lc.n
    assert out.offsets[0] == lc.offsets[0] and out.offsets[-1] == lc.offsets[-1]
    assert chain_order_report(out).sign in (-1, 0, 1)
    assert np.abs(out.jump_times).max() < out.epsilon


def test_residuals(cat_skew):
    lc = _lifted(cat_skew, np.random.default_rng(0).uniform(-0.05, 0.05, 15))
    ts = np.linspace(-2, 2, 41)
    assert lc.commuting_residual(ts) < 1e-12
    assert lc.deck_residual(ts) < 1e-12
    u = lc.forward(3, ts)
    assert np.abs(lc.inverse(3, u) - ts).max() < 1e-12


def test_lift_agrees_with_center_chain(cat_skew):
    po = random_pseudo_orbit(cat_skew, [0.5, 0.1, 0.9], 20, 0.01, np.random.default_rng(5))
    c = center_shadow(cat_skew, po)
    lc = lift_chain(cat_skew, c)
    assert np.abs(lc.jump_times - c.jump_times).max() < 1e-12
    assert np.abs(np.mod(lc.offsets - c.points[:, 2] + 0.5, 1.0) - 0.5).max() < 1e-12


def test_lift_needs_small_epsilon(cat_skew):
    po = random_pseudo_orbit(cat_skew, [0.5, 0.1, 0.9], 3, 0.01, np.random.default_rng(5))
    with pytest.raises(ValueError, match="1/2"):
        lift_chain(cat_skew, center_shadow(cat_skew, po), epsilon=0.6)


def test_json_roundtrip(cat_skew):
    lc = reorder_chain(_lifted(cat_skew, [0.02, -0.03, 0.01]))
    back = LiftedChain.from_json(cat_skew, lc.to_json())
    assert np.array_equal(back.offsets, lc.offsets)
    assert np.array_equal(back.jump_times, lc.jump_times)
    assert back.rewrite_steps == lc.rewrite_steps


def test_order_report(cat_skew):
    assert chain_order_report(_lifted(cat_skew, [0.01, -0.01])).sign is None
    assert chain_order_report(_lifted(cat_skew, [0.01, 0.02])).sign == 1
    rep = chain_order_report(_lifted(cat_skew, [-0.01, -0.02]))
    assert rep.sign == -1 and all(r == "<" for _, _, r in rep.comparisons)


jumps = st.lists(st.floats(-0.049, 0.049, allow_nan=False), min_size=1, max_size=25)


@settings(max_examples=150, deadline=None)
@given(jumps, st.floats(0, 1, exclude_max=True), st.sampled_from(["product", "cat_skew", "two_circle"]))
def test_matches_literal_rewrite(ts, theta0, name):
    from chainclose.presets import get_preset

    system = get_preset(name).system
    lc = _lifted(system, ts, theta0=theta0, eps=0.05)
    out = reorder_chain(lc)
    s, rounds = _oracle(lc)
    expect = lc.offsets + np.array(s)
    assert out.offsets.tobytes() == expect.tobytes()
    assert out.rewrite_steps == rounds <= lc.n
