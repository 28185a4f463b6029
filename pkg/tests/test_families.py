import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from twistlab import expr as ex
from twistlab.families import (Family, FamilyError, FamilyParams, base_flow,
                               cbrt_flow_twist, constant_flow_twist, example_scene,
                               family_scene, killing_twist)
from twistlab.manifold import GridSpec
from twistlab.lie import LieCalculus, Mode, base_ode_residual, two_killing_residual

RNG_POINTS = np.random.default_rng(5)
TS = RNG_POINTS.uniform(1, 2, 100)
XS = RNG_POINTS.uniform(0, 1, 100)


def on_points(e, x="x"):
    return ex.evaluate(e, {"t": TS, x: XS})


# -- base flows --------------------------------------------------------------------

def test_base_flow_forms():
    assert base_flow(1, 0) == ex.Unary("cbrt", ex.Var("t"))
    assert base_flow(0, 8) == ex.Const(2.0)
    assert base_ode_residual(base_flow(2, -2), np.linspace(2.05, 2.95, 9)).sup < 1e-12


def test_base_flow_scene_is_constant_for_zero_c1():
    scene = family_scene(FamilyParams(Family.BASE_FLOW, c1=0, c2=8), 0)
    assert scene.vector_field.components["I"] == (ex.Const(2.0),)
    assert two_killing_residual(scene).sup == 0


# -- closed forms ----------------------------------------------------------------------

def test_cbrt_flow_reproduces_first_example():
    f = cbrt_flow_twist(FamilyParams(a=1, b=0, k=1, c1=1, c2=0, c0=0, c0p=0, sign=1))
    expected = np.exp(XS / 2) * np.exp(-0.75 * np.cbrt(TS) ** 2)
    np.testing.assert_allclose(on_points(f), expected, rtol=1e-12)


def test_cbrt_flow_zero_k_reproduces_second_example():
    f = cbrt_flow_twist(FamilyParams(a=1, k=0, c1=1, c2=0, c0=math.log(2 / 3), c0p=0))
    np.testing.assert_allclose(on_points(f), np.exp(XS / 2) * np.cbrt(TS), rtol=1e-12)


def test_constant_flow_reproduces_examples():
    f = constant_flow_twist(FamilyParams(Family.CONSTANT_FLOW, a=1, c=-1, k=1, sign=-1))
    np.testing.assert_allclose(on_points(f), np.sqrt(np.exp(TS + XS)), rtol=1e-12)
    f = constant_flow_twist(FamilyParams(Family.CONSTANT_FLOW, a=1, k=0))
    np.testing.assert_allclose(on_points(f), np.exp(XS / 2) * np.sqrt(TS), rtol=1e-12)


def test_killing_twist_forms():
    np.testing.assert_allclose(on_points(killing_twist(1, 1, 1, 1)), np.exp(XS - TS),
                               rtol=1e-12)
    np.testing.assert_allclose(on_points(killing_twist(2, 1, 1, 1)), np.exp(XS - TS / 2),
                               rtol=1e-12)


@pytest.mark.parametrize("id, closed_form", [
    (43, lambda t, x: np.exp(2 * x - 3 * np.cbrt(t ** 2)) ** 0.25),
    (44, lambda t, x: np.cbrt(t) * np.sqrt(np.exp(x))),
    (47, lambda t, x: np.sqrt(np.exp(t + x))),
    (48, lambda t, x: np.sqrt(np.abs(t) * np.exp(x))),
])
def test_example_twists_match_closed_forms(id, closed_form):
    scene = example_scene(id, 2)
    for tw, x in zip(scene.twists, ("x2", "x3")):
        np.testing.assert_allclose(on_points(tw.f, x), closed_form(TS, XS), rtol=1e-12)


def test_example_scene_shapes():
    scene = example_scene(43, 2)
    assert scene.metric.vars == ("t", "x2", "x3")
    assert scene.checked_field.flat(scene.factors) == [
        ex.Unary("cbrt", ex.Var("t")), ex.ONE, ex.ONE]
    scene = example_scene(48, 1, c=1.0)
    assert scene.vector_field.components["I"] == (ex.ONE,)
    with pytest.raises(ValueError):
        example_scene(45)


# -- validity domain ------------------------------------------------------------------

@pytest.mark.parametrize("make", [
    lambda: cbrt_flow_twist(FamilyParams(c1=0)),
    lambda: cbrt_flow_twist(FamilyParams(c1=1, c2=-1.5)),
    lambda: cbrt_flow_twist(FamilyParams(a=0)),
    lambda: cbrt_flow_twist(FamilyParams(k=1, a=1, c0p=-0.2)),
    lambda: constant_flow_twist(FamilyParams(Family.CONSTANT_FLOW, c=0)),
    lambda: constant_flow_twist(FamilyParams(Family.CONSTANT_FLOW, k=0, c0p=-1.5)),
    lambda: killing_twist(1, 1, 1, -1),
    lambda: killing_twist(0, 1, 1, 1),
    lambda: killing_twist(1, 1, 0, 1),
    lambda: FamilyParams(sign=2),
    lambda: FamilyParams(interval=(2, 1)),
    lambda: family_scene(FamilyParams(Family.BASE_FLOW, c1=1, c2=-1.5)),
])
def test_invalid_parameters_raise(make):
    with pytest.raises(FamilyError):
        make()


def test_root_just_outside_the_interval_is_accepted():
    cbrt_flow_twist(FamilyParams(c1=1, c2=-0.5))


# -- generator soundness ------------------------------------------------------------

def inside_sign(p, t):
    if p.family is Family.CBRT_FLOW:
        u2 = np.cbrt(p.c1 * t + p.c2) ** 2
        h = p.sign / (p.a * p.k) * np.exp(p.c0 - 3 * p.a * p.k * u2 / (2 * p.c1)) + p.c0p
    else:
        h = p.sign * p.c / (p.a * p.k) * np.exp(p.c0 - p.a * p.k * t / p.c) + p.c0p
    return np.sign(h)


params = st.builds(
    FamilyParams,
    family=st.sampled_from([Family.CBRT_FLOW, Family.CONSTANT_FLOW]),
    c1=st.sampled_from([1.0, 2.0, -1.0]),
    c2=st.sampled_from([0.0, 1.0, 5.0]),
    c=st.sampled_from([1.0, -1.0, 2.5]),
    k=st.sampled_from([0.0, 1.0, -0.5, 2.0]),
    a=st.sampled_from([1.0, -1.0, 0.5]),
    b=st.floats(-1, 1),
    c0=st.floats(-1, 1),
    c0p=st.floats(-1, 1),
    sign=st.sampled_from([1, -1]),
)


def scene_with_grid(p):
    try:
        scene = family_scene(p, 1)
    except FamilyError:
        assume(False)
    return replace(scene, grid=GridSpec(points_per_dim=5, guards=scene.grid.guards))


@given(params)
@settings(max_examples=40, deadline=None)
def test_generated_twists_pass_in_paper_mode(p):
    scene = scene_with_grid(p)
    assert two_killing_residual(scene, Mode.PAPER).sup < 1e-8


@given(params)
@settings(max_examples=40, deadline=None)
def test_oracle_residual_is_the_dropped_term(p):
    scene = scene_with_grid(p)
    report = two_killing_residual(scene)
    if p.k == 0:
        assert report.sup < 1e-8
        return
    cols = report.points.columns()
    t, x = cols["t"], cols["x2"]
    expected = inside_sign(p, t) * p.a ** 2 * p.k ** 2 * p.c0p * np.exp(p.a * x + p.b)
    got = report.component("x2", "x2")
    scale = np.max(np.abs(expected)) + LieCalculus.for_scene(scene).metric_on_grid(
        report.points)[:, 1, 1].max()
    assert np.max(np.abs(got - expected)) <= 1e-8 * scale
    for a, b in (("t", "t"), ("t", "x2")):
        assert np.max(np.abs(report.component(a, b))) <= 1e-8 * (1 + scale)


@pytest.mark.parametrize("c0p", [0.5, -0.25])
def test_oracle_residual_relative_to_prediction(c0p):
    p = FamilyParams(a=1, k=1, c1=1, c2=0, c0=1.5, c0p=c0p)
    report = two_killing_residual(family_scene(p))
    x = report.points.columns()["x2"]
    np.testing.assert_allclose(report.component("x2", "x2"), c0p * np.exp(x), rtol=1e-8)
