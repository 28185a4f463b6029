import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twistlab import expr as ex
from twistlab.families import FamilyParams, Family, example_scene, family_scene
from twistlab.lie import (Classification, LieCalculus, Mode, NotLiftedError,
                          base_ode_residual, classify, compare, factor_conditions,
                          killing_residual, lie1_oracle, lie1_structural, lie2_oracle,
                          lie2_structural, two_killing_residual)
from twistlab.manifold import (FactorChart, GridSpec, Scene, TwistFunction,
                               VectorFieldSpec)

from _support import fd_lie_tensors, pullback_lie, random_corpus, random_lifted_scene

T = FactorChart.interval("I", "t", 1, 2, sign=-1.0)
X = FactorChart.interval("I2", "x", 0, 1)


def simple_scene(f, vt, vx, box_t=(1, 2)):
    base = FactorChart.interval("I", "t", *box_t, sign=-1.0)
    return Scene([base, X], [TwistFunction("I2", f)],
                 VectorFieldSpec({"I": [vt], "I2": [vx]}))


DISCREPANCY = simple_scene("sqrt(exp(t + x))", "0", "1")
EX43 = simple_scene("exp((2*x - 3*cbrt(t^2))/4)", "cbrt(t)", "1")


def close(a, b, rel):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b)) <= rel * (1 + np.max(np.abs(b)))


# -- oracle examples ---------------------------------------------------------------

def test_example_first_derivative_at_unit_time():
    got = lie1_oracle(EX43.metric, EX43.vector_field, {"t": 1.0, "x": 0.0})
    np.testing.assert_allclose(got, [[-2 / 3, 0], [0, 0]], atol=1e-15)


def test_example_first_derivative_matches_flow_pullback():
    # V = cbrt(t) d/dt + d/dx integrates to t^(2/3) growing linearly in s
    def flow(s, y):
        return [(y[0] ** (mp.mpf(2) / 3) + 2 * s / 3) ** mp.mpf(1.5), y[1] + s]

    def metric(y):
        f2 = mp.exp((2 * y[1] - 3 * mp.cbrt(y[0] ** 2)) / 2)
        return [[-1, 0], [0, f2]]

    for point in ([1.0, 0.0], [1.4, 0.7]):
        L1, L2 = pullback_lie(metric, flow, point)
        env = dict(zip(("t", "x"), point))
        assert close(lie1_oracle(EX43.metric, EX43.vector_field, env), L1, 1e-12)
        assert close(lie2_oracle(EX43.metric, EX43.vector_field, env), L2, 1e-12)
    assert L1[0, 0] == pytest.approx(-2 / 3 * 1.4 ** (-2 / 3), rel=1e-12)


def test_discrepancy_second_derivative_is_exp():
    got = lie2_oracle(DISCREPANCY.metric, DISCREPANCY.vector_field, {"t": 0.0, "x": 0.0})
    np.testing.assert_allclose(got, [[0, 0], [0, 1]], atol=1e-15)
    L1, L2 = pullback_lie(lambda y: [[-1, 0], [0, mp.exp(y[0] + y[1])]],
                          lambda s, y: [y[0], y[1] + s], [0.3, 0.2])
    assert L2[1, 1] == pytest.approx(math.exp(0.5), rel=1e-12)
    assert close(lie2_oracle(DISCREPANCY.metric, DISCREPANCY.vector_field,
                             {"t": 0.3, "x": 0.2}), L2, 1e-12)


@pytest.mark.parametrize("order", [1, 2])
def test_zero_field_gives_zero_in_every_mode(order):
    scene = EX43.with_field(VectorFieldSpec({"I": ["0"], "I2": ["0"]}))
    calc = LieCalculus.for_scene(scene)
    for mode in Mode:
        assert np.all(calc.at({"t": 1.2, "x": 0.3}, order, mode) == 0)


def test_translation_of_flat_product_is_an_isometry():
    scene = simple_scene("1", "0", "1")
    calc = LieCalculus.for_scene(scene)
    for order in (1, 2):
        assert np.all(calc.at({"t": 1.5, "x": 0.5}, order) == 0)


# -- structural modes ------------------------------------------------------------------

def test_paper_and_corrected_split_on_the_discrepancy_scene():
    p = {"t": 1.2, "x": 0.4}
    paper = lie2_structural(DISCREPANCY, p, Mode.PAPER)
    corrected = lie2_structural(DISCREPANCY, p, Mode.CORRECTED)
    assert np.all(paper == 0)
    assert corrected[1, 1] == pytest.approx(math.exp(1.6), rel=1e-14)


def test_example_paper_and_corrected_agree_and_vanish():
    points = EX43.sample()
    for mode in (Mode.PAPER, Mode.CORRECTED):
        assert two_killing_residual(EX43, mode, points).sup < 1e-12


def test_structural_cross_blocks_are_literal_zeros():
    scene = random_lifted_scene(np.random.default_rng(7))
    calc = LieCalculus.for_scene(scene)
    blocks = calc.metric.blocks
    for mode in (Mode.PAPER, Mode.CORRECTED):
        for order in (1, 2):
            tensor = calc.tensor(order, mode)
            for na, sa in blocks.items():
                for nb, sb in blocks.items():
                    if na != nb:
                        assert all(tensor[a][b] == ex.ZERO
                                   for a in range(sa.start, sa.stop)
                                   for b in range(sb.start, sb.stop))


def test_constant_twist_with_killing_factor_fields():
    scene = simple_scene("3", "1", "1")
    assert np.all(lie1_structural(scene, {"t": 1.5, "x": 0.5}) == 0)


def test_structural_modes_reject_unlifted_fields():
    scene = EX43.with_field(VectorFieldSpec({"I": ["x"], "I2": ["t"]}, lifted=False))
    point = {"t": 1.5, "x": 0.5}
    lie1_oracle(scene.metric, scene.vector_field, point)
    with pytest.raises(NotLiftedError):
        lie1_structural(scene, point)
    with pytest.raises(NotLiftedError):
        lie2_structural(scene, point, Mode.CORRECTED)
    comparison = compare(scene)
    assert list(comparison.reports) == [Mode.ORACLE]


def test_structural_wrappers_refuse_oracle_mode():
    with pytest.raises(ValueError):
        lie1_structural(EX43, {"t": 1, "x": 0}, Mode.ORACLE)


# -- invariants on the random corpus -------------------------------------------------------

CORPUS = random_corpus(12, seed=99, points_per_dim=3)


@pytest.mark.parametrize("scene", CORPUS, ids=lambda s: s.name)
def test_oracle_and_structural_agree(scene):
    calc = LieCalculus.for_scene(scene)
    points = scene.sample()
    o1, o2 = calc.on_grid(points, 1), calc.on_grid(points, 2)
    assert close(calc.on_grid(points, 1, Mode.PAPER), o1, 1e-9)
    assert close(calc.on_grid(points, 2, Mode.CORRECTED), o2, 1e-9)


@pytest.mark.parametrize("scene", CORPUS, ids=lambda s: s.name)
def test_symmetry_and_cross_block_vanishing(scene):
    calc = LieCalculus.for_scene(scene)
    points = scene.sample()
    for mode in Mode:
        for order in (1, 2):
            values = calc.on_grid(points, order, mode)
            assert np.max(np.abs(values - values.transpose(0, 2, 1))) <= 1e-12
            if mode is Mode.ORACLE:
                for na, sa in calc.metric.blocks.items():
                    for nb, sb in calc.metric.blocks.items():
                        if na != nb:
                            assert np.max(np.abs(values[:, sa, sb]), initial=0) <= 1e-10


@pytest.mark.parametrize("scene", CORPUS[:6], ids=lambda s: s.name)
def test_nested_finite_differences_corroborate_oracle(scene):
    calc = LieCalculus.for_scene(scene)
    for point in scene.sample()[::5]:
        fd1, fd2 = fd_lie_tensors(scene, point, h=1e-4)
        assert close(calc.at(point, 1), fd1, 1e-5)
        assert close(calc.at(point, 2), fd2, 1e-5)


def test_paper_mode_differs_from_oracle_somewhere():
    # the printed expansion drops V_i(u_i), which is generically nonzero
    gaps = []
    for scene in CORPUS:
        calc = LieCalculus.for_scene(scene)
        points = scene.sample()
        gaps.append(np.max(np.abs(calc.on_grid(points, 2, Mode.PAPER)
                                  - calc.on_grid(points, 2))))
    assert max(gaps) > 1e-3


@given(st.integers(0, 2**32 - 1), st.sampled_from([-2.0, 0.5, 3.0]))
@settings(max_examples=15, deadline=None)
def test_scaling_laws(seed, c):
    scene = random_lifted_scene(np.random.default_rng(seed), points_per_dim=3)
    points = scene.sample()
    base = LieCalculus.for_scene(scene)
    scaled = LieCalculus.for_scene(scene.with_field(scene.vector_field.scaled(c)))
    assert close(scaled.on_grid(points, 1), c * base.on_grid(points, 1), 1e-9)
    assert close(scaled.on_grid(points, 2), c * c * base.on_grid(points, 2), 1e-9)


def test_thread_count_does_not_change_results():
    scene = CORPUS[3]
    calc = LieCalculus.for_scene(scene)
    points = scene.sample()
    one = two_killing_residual(scene, Mode.ORACLE, points, calc=calc, threads=1)
    many = two_killing_residual(scene, Mode.ORACLE, points, calc=calc, threads=6)
    np.testing.assert_array_equal(one.values, many.values)
    assert one.sup == many.sup


# -- residual reports ------------------------------------------------------------------------

def test_example_is_not_killing_and_names_the_time_component():
    report = killing_residual(EX43)
    assert not report.is_killing
    np.testing.assert_allclose(report.component("t", "t"),
                               -2 / 3 * report.points.columns()["t"] ** (-2 / 3),
                               rtol=1e-14)
    assert report.argmax_component == ("t", "t")
    assert report.argmax["t"] == pytest.approx(1.05)
    # normalized by 1 + |g_tt| = 2
    assert report.sup == pytest.approx(1 / 3 * 1.05 ** (-2 / 3), rel=1e-14)


def test_report_sup_is_max_and_verdicts_are_monotone():
    report = two_killing_residual(DISCREPANCY)
    assert report.sup == report.per_point.max()
    taus = np.logspace(-12, 2, 30)
    verdicts = [report.holds(t) for t in taus]
    assert verdicts == sorted(verdicts)
    assert not report.is_2killing and report.is_killing is False


def test_killing_family_residuals():
    scene = family_scene(FamilyParams(Family.KILLING, c=1, k=1, a=1, ci=1))
    first, second = killing_residual(scene), two_killing_residual(scene)
    assert first.sup < 1e-12 and first.is_killing
    # Killing implies 2-Killing
    assert second.sup < 1e-10


def test_example_47_and_48_residuals():
    assert two_killing_residual(example_scene(47)).sup < 1e-9
    assert two_killing_residual(example_scene(48, c=2.0)).sup < 1e-9


@pytest.mark.parametrize("order", [1, 2])
def test_factor_conditions_match_divided_blocks(order):
    scene = random_lifted_scene(np.random.default_rng(11), points_per_dim=3)
    points = scene.sample()
    blocks = factor_conditions(scene, order, Mode.CORRECTED, points)
    full = LieCalculus.for_scene(scene).on_grid(points, order)
    metric = scene.metric
    cols = points.columns()
    for k, (name, value) in enumerate(blocks.items()):
        s = metric.blocks[name]
        expected = full[:, s, s]
        if k > 0:
            expected = expected / ex.evaluate(metric.f_squared(name), cols)[:, None, None]
        assert close(value, expected, 1e-10)


# -- base ODE -------------------------------------------------------------------------------

def test_base_ode_examples():
    t = np.linspace(1.05, 1.95, 9)
    assert base_ode_residual("cbrt(t)", t).sup < 1e-12
    linear = base_ode_residual("t", t)
    assert np.all(linear.values == 2.0)
    constant = base_ode_residual("5", t)
    assert constant.sup == 0 and constant.is_killing()
    shifted = base_ode_residual("cbrt(2*t - 2)", np.linspace(2.05, 2.95, 9))
    assert shifted.sup < 1e-12


def test_base_ode_ties_to_second_lie_derivative():
    scene = simple_scene("1", "t", "0")
    value = LieCalculus.for_scene(scene).at({"t": 1.3, "x": 0.5}, 2)
    assert value[0, 0] == pytest.approx(-4.0, abs=1e-14)


def test_base_ode_rejects_other_variables():
    with pytest.raises(ValueError):
        base_ode_residual("t*x", [1.0])


# -- classification -----------------------------------------------------------------------

def both(scene, mode=Mode.ORACLE):
    points = scene.sample()
    return (killing_residual(scene, mode, points), two_killing_residual(scene, mode, points))


def test_classification_examples():
    assert classify(*both(simple_scene("sqrt(exp(t + x))", "-1", "1"))) is Classification.KILLING
    assert classify(*both(simple_scene("sqrt(t*exp(x))", "2", "0"))) is Classification.TWO_KILLING_ONLY
    assert classify(*both(DISCREPANCY, Mode.PAPER)) is Classification.TWO_KILLING_ONLY
    assert classify(*both(DISCREPANCY)) is Classification.NEITHER


def test_example_47_is_killing():
    assert classify(*both(example_scene(47))) is Classification.KILLING


def test_classify_rejects_mismatched_reports():
    r1, r2 = both(EX43)
    with pytest.raises(ValueError):
        classify(r2, r1)
    other = killing_residual(EX43, Mode.PAPER)
    with pytest.raises(ValueError):
        classify(other, r2)
    coarse = two_killing_residual(Scene(EX43.factors, EX43.twists, EX43.vector_field,
                                        GridSpec(points_per_dim=3)))
    with pytest.raises(ValueError):
        classify(r1, coarse)


def test_compare_flags_the_discrepancy():
    comparison = compare(DISCREPANCY)
    assert not comparison.agree
    (flag,) = comparison.disagreements
    assert flag["order"] == 2 and flag["mode"] == "paper"
    assert flag["mode_sup"] == 0.0
    assert flag["argmax"] == {"t": 1.95, "x": 0.95}
    assert comparison.classifications[Mode.CORRECTED] is Classification.NEITHER


def test_compare_agrees_on_example_47():
    comparison = compare(example_scene(47))
    assert comparison.agree
    assert set(comparison.classifications.values()) == {Classification.KILLING}
