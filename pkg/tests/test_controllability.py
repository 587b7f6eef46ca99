"""
Tests for the Lie-algebraic controllability diagnostics.
"""
import json

import numpy as np
import pytest

from engine import catalog
from engine.controllability import (
    ControllabilityReport, Verdict, bracket_closure, check_individual_rules, compute_a, compute_h,
    controllability_report, d_orbit, eigensplit, is_D_invariant, rank_condition, render_report,
    report_to_dict, restricted_spectrum,
)
from engine.errors import ModelError, NumericalError
from engine.flows import SolveMethod, solve_piecewise
from engine.matcore import projection_residual
from engine.models import AlgebraElement, ControlRange, Derivation, LinearControlSystem, derivation_from_inner, load_system
from tests.helpers import (
    INNER_MODELS, fixture_text, heisenberg_derivation, heisenberg_system, random_control, random_coords,
)

ROTATION = np.array([[0.0, -1.0], [1.0, 0.0]])
NILPOTENT2 = np.array([[0.0, 1.0], [0.0, 0.0]])


def contained(small, big, tol=1e-8):
    return all(projection_residual(big, v) <= tol for v in small)


def same_span(a, b):
    return a.shape == b.shape and contained(a, b) and contained(b, a)


def random_rotation(rng, n):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q


def sl2_system(*fields):
    model = catalog.sl2_model()
    h = AlgebraElement(model, [1.0, 0.0, 0.0])
    return LinearControlSystem(model, derivation_from_inner(model, h),
                               tuple(AlgebraElement(model, f) for f in fields))


def r2_rotation_system():
    model = catalog.abelian_model(2)
    return LinearControlSystem(model, Derivation(model, ROTATION), (AlgebraElement(model, [1.0, 0.0]),))


# --- subspaces ---

def test_bracket_closure_examples():
    heis = catalog.heisenberg_model()
    assert bracket_closure(heis, [np.array([0.0, 0.0, 1.0])]).shape == (1, 3)
    assert bracket_closure(heis, [np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])]).shape == (3, 3)
    sl2 = catalog.sl2_model()
    e, f = AlgebraElement(sl2, [0.0, 1.0, 0.0]), AlgebraElement(sl2, [0.0, 0.0, 1.0])
    assert bracket_closure(sl2, [e, f]).shape == (3, 3)
    assert bracket_closure(sl2, [e]).shape == (1, 3)
    with pytest.raises(ModelError):
        bracket_closure(sl2, [])
    with pytest.raises(ModelError):
        bracket_closure(sl2, [np.array([1.0, 0.0])])


def test_bracket_closure_idempotent_and_monotone(rng):
    for model in (catalog.so3_model(), catalog.heisenberg_model(), catalog.gl_plus_model(3)):
        for _ in range(10):
            gens = [random_coords(model, rng) for _ in range(rng.integers(1, 3))]
            closed = bracket_closure(model, gens)
            assert same_span(bracket_closure(model, list(closed)), closed)
            extra = bracket_closure(model, gens + [random_coords(model, rng)])
            assert contained(closed, extra)


def test_d_orbit_examples():
    center = np.array([[0.0, 0.0, 1.0]])
    assert same_span(d_orbit(np.zeros((3, 3)), center), center)
    assert d_orbit(ROTATION, np.array([[1.0, 0.0]])).shape == (2, 2)
    assert d_orbit(1e12 * ROTATION, np.array([[1.0, 0.0]])).shape == (2, 2)
    d = heisenberg_derivation(0.5, 1.0, -2.0, 0.3)
    assert same_span(d_orbit(d, center), center)


def test_compute_h_examples():
    model = catalog.so3_model()
    x = AlgebraElement(model, [0.2, -0.1, 0.4])
    spanning = LinearControlSystem(model, derivation_from_inner(model, x), (
        AlgebraElement(model, [1.0, 0.0, 0.0]), AlgebraElement(model, [0.0, 1.0, 0.0])))
    assert compute_h(spanning).shape[0] == 3
    heis = heisenberg_system(heisenberg_derivation(1.0, 0.0, 0.0, -1.0), [[0.0, 0.0, 2.0]])
    assert compute_h(heis).shape[0] == 1
    assert compute_h(sl2_system([0.0, 1.0, 0.0])).shape[0] == 1
    assert compute_h(sl2_system([0.0, 1.0, 0.0], [0.0, 0.0, 1.0])).shape[0] == 3


def test_rank_condition_examples():
    heis = heisenberg_system(heisenberg_derivation(1.0, 0.0, 0.0, -1.0), [[0.0, 0.0, 2.0]])
    assert not rank_condition(heis)
    assert rank_condition(r2_rotation_system())
    assert rank_condition(sl2_system([0.0, 1.0, 0.0], [0.0, 0.0, 1.0]))


def test_is_D_invariant_examples(rng):
    basis = np.array([[1.0, 0.0, 0.0]])
    assert is_D_invariant(np.zeros((3, 3)), basis)
    center = np.array([[0.0, 0.0, 1.0]])
    for _ in range(10):
        d = heisenberg_derivation(*rng.uniform(-2.0, 2.0, 6))
        assert is_D_invariant(d, center)
    assert not is_D_invariant(ROTATION, np.array([[1.0, 0.0]]))


def test_h_is_always_D_invariant_and_contains_a(rng):
    for factory in INNER_MODELS.values():
        model = factory()
        for _ in range(5):
            x = AlgebraElement(model, random_coords(model, rng))
            system = LinearControlSystem(model, derivation_from_inner(model, x),
                                         (AlgebraElement(model, random_coords(model, rng)),))
            a, h = compute_a(system), compute_h(system)
            assert is_D_invariant(system.derivation, h)
            assert contained(a, h)


def _random_system(model, rng):
    kind = rng.integers(0, 3)
    if model.name == "heisenberg":
        d = heisenberg_derivation(*rng.uniform(-1.0, 1.0, 6))
        fields = [[0.0, 0.0, 1.0]] if kind == 0 else [random_coords(model, rng) for _ in range(kind)]
        return heisenberg_system(d, fields)
    x = AlgebraElement(model, random_coords(model, rng))
    if kind == 0:
        fields = (AlgebraElement(model, 0.5 * x.coords),)
    else:
        fields = tuple(AlgebraElement(model, random_coords(model, rng)) for _ in range(kind))
    return LinearControlSystem(model, derivation_from_inner(model, x), fields)


@pytest.mark.parametrize("count", [pytest.param(100, id="default"),
                                   pytest.param(1000, id="acceptance", marks=pytest.mark.slow)])
def test_a_equals_h_iff_a_is_D_invariant(count, rng):
    models = [factory() for factory in INNER_MODELS.values()] + [catalog.heisenberg_model()]
    seen = set()
    for k in range(count):
        system = _random_system(models[k % len(models)], rng)
        a, h = compute_a(system), compute_h(system)
        invariant = is_D_invariant(system.derivation, a)
        assert (a.shape[0] == h.shape[0]) == invariant
        seen.add(invariant)
    assert seen == {True, False}


# --- eigensplit ---

def test_eigensplit_examples():
    nilpotent = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    assert eigensplit(nilpotent, np.eye(3)) == (0, 3, 0)
    assert eigensplit(np.diag([1.0, 0.0, -1.0]), np.eye(3)) == (1, 1, 1)
    d = heisenberg_derivation(1.0, 0.0, 0.0, -2.0)
    assert eigensplit(d, np.eye(3)) == (1, 0, 2)
    assert eigensplit(d, np.zeros((0, 3))) == (0, 0, 0)
    assert eigensplit(ROTATION, np.eye(2)) == (0, 2, 0)


def test_eigensplit_counts_generalized_eigenspaces():
    jordan = np.array([[2.0, 1.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, -3.0]])
    assert eigensplit(jordan, np.eye(3)) == (2, 0, 1)


def test_eigensplit_in_rotated_bases(rng):
    nilpotent3 = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    jordan = np.array([[2.0, 1.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, -3.0]])
    for _ in range(200):
        assert eigensplit(NILPOTENT2, random_rotation(rng, 2)) == (0, 2, 0)
        q = random_rotation(rng, 3)
        assert eigensplit(nilpotent3, q) == (0, 3, 0)
        assert eigensplit(np.diag([1.0, 0.0, -1.0]), q) == (1, 1, 1)
        assert eigensplit(jordan, q) == (2, 0, 1)


def test_eigensplit_keeps_close_distinct_eigenvalues_apart(rng):
    for _ in range(20):
        assert eigensplit(np.diag([1e-3, -1e-3]), random_rotation(rng, 2)) == (1, 0, 1)
    assert eigensplit(np.zeros((2, 2)), random_rotation(rng, 2)) == (0, 2, 0)


def test_heisenberg_derivation_spectrum():
    d = heisenberg_derivation(1.0, 0.5, 0.0, 2.0, 0.3, -0.2)
    assert np.allclose(restricted_spectrum(d, np.eye(3)), [3.0, 2.0, 1.0], atol=1e-12)
    assert eigensplit(d, np.eye(3)) == (3, 0, 0)


def test_eigensplit_requires_invariance():
    with pytest.raises(NumericalError):
        eigensplit(ROTATION, np.array([[1.0, 0.0]]))


def test_restricted_spectrum():
    vals = restricted_spectrum(ROTATION, np.eye(2))
    assert sorted((round(v.imag, 12) for v in vals)) == [-1.0, 1.0]
    assert restricted_spectrum(ROTATION, np.zeros((0, 2))) == []


def test_eigensplit_independent_of_generator_order(rng):
    model = catalog.gl_plus_model(2)
    for _ in range(10):
        x = AlgebraElement(model, random_coords(model, rng))
        fields = [AlgebraElement(model, random_coords(model, rng)) for _ in range(2)]
        d = derivation_from_inner(model, x)
        forward = LinearControlSystem(model, d, tuple(fields))
        backward = LinearControlSystem(model, d, tuple(reversed(fields)))
        h1, h2 = compute_h(forward), compute_h(backward)
        assert same_span(h1, h2)
        assert eigensplit(d, h1) == eigensplit(d, h2)


# --- reports ---

def test_heisenberg_center_not_controllable():
    system, _ = load_system(fixture_text("heisenberg_center.json"))
    report = controllability_report(system)
    assert report.verdict is Verdict.NOT_CONTROLLABLE_ON_G
    assert report.decisive.rule == "a"
    assert (report.dim_a, report.dim_h, report.dim_g) == (1, 1, 3)
    assert not report.rank_condition
    assert report.scope == "H"


@pytest.mark.parametrize("count", [pytest.param(50, id="default"),
                                   pytest.param(1000, id="acceptance", marks=pytest.mark.slow)])
def test_center_verdict_agrees_with_simulation(count, rng):
    d = heisenberg_derivation(*rng.uniform(-1.0, 1.0, 6))
    system = heisenberg_system(d, [[0.0, 0.0, 2.0]])
    assert controllability_report(system).verdict is Verdict.NOT_CONTROLLABLE_ON_G
    for _ in range(count):
        traj = solve_piecewise(system, random_control(rng, 1), SolveMethod("product", 4))
        x, y, _ = catalog.heisenberg_coords(traj.endpoint)
        assert abs(x) <= 1e-8 and abs(y) <= 1e-8


def test_spanning_fields_are_controllable_on_g(rng):
    for factory in INNER_MODELS.values():
        model = factory()
        x = AlgebraElement(model, random_coords(model, rng))
        fields = tuple(AlgebraElement(model, row) for row in np.eye(model.dim))
        report = controllability_report(LinearControlSystem(model, derivation_from_inner(model, x), fields))
        assert report.verdict is Verdict.CONTROLLABLE_ON_H
        assert report.decisive.rule == "b"
        assert report.scope == "G"


def test_nilpotent_bounded_rule():
    system, _ = load_system(fixture_text("heisenberg_unstable.json"))
    report = controllability_report(system)
    assert report.split_dims == (1, 0, 2)
    assert report.decisive.rule == "d"
    assert report.verdict is Verdict.NOT_CONTROLLABLE_ON_H


def test_nilpotent_rule_needs_bounded_range():
    d = heisenberg_derivation(1.0, 0.0, 0.0, -2.0)
    model = catalog.heisenberg_model()
    fields = (AlgebraElement(model, [1.0, 1.0, 0.0]),)
    unbounded = LinearControlSystem(model, d, fields)
    assert controllability_report(unbounded).verdict is Verdict.INCONCLUSIVE
    bounded = LinearControlSystem(model, d, fields, ControlRange([-1.0], [1.0]))
    assert controllability_report(bounded).verdict is Verdict.NOT_CONTROLLABLE_ON_H


def test_nilpotent_rule_central_spectrum_is_controllable():
    model = catalog.heisenberg_model()
    d = heisenberg_derivation(0.0, -1.0, 1.0, 0.0)
    system = LinearControlSystem(model, d, (AlgebraElement(model, [1.0, 0.0, 0.0]),), ControlRange([-1.0], [1.0]))
    report = controllability_report(system)
    assert report.rank_condition
    # solvable with central spectrum already decides it
    assert report.decisive.rule == "c"
    assert report.verdict is Verdict.CONTROLLABLE_ON_H
    assert check_individual_rules(system)["d"]


def test_r2_rotation_report():
    report = controllability_report(r2_rotation_system())
    assert (report.dim_a, report.dim_h) == (1, 2)
    assert not report.a_is_D_invariant
    assert report.decisive.rule == "c"
    assert report.verdict is Verdict.CONTROLLABLE_ON_H


def test_abelian_nilpotent_drift_is_controllable(rng):
    model = catalog.abelian_model(2)
    d = Derivation(model, NILPOTENT2)
    for _ in range(200):
        b = AlgebraElement(model, rng.standard_normal(2))
        report = controllability_report(LinearControlSystem(model, d, (b,), ControlRange([-1.0], [1.0])))
        assert report.split_dims == (0, 2, 0)
        assert report.decisive.rule == "c"
        assert report.verdict is Verdict.CONTROLLABLE_ON_H


def test_inner_heisenberg_split_is_central(rng):
    model = catalog.heisenberg_model()
    for _ in range(200):
        x = AlgebraElement(model, random_coords(model, rng))
        fields = tuple(AlgebraElement(model, random_coords(model, rng)) for _ in range(rng.integers(1, 3)))
        report = controllability_report(LinearControlSystem(model, derivation_from_inner(model, x), fields))
        assert report.split_dims == (0, report.dim_h, 0)


def test_large_drift_keeps_a_inside_h(rng):
    model = catalog.gl_plus_model(3)
    for _ in range(20):
        x = 8.0 * rng.standard_normal(9)
        y = AlgebraElement(model, random_coords(model, rng))
        reports = [controllability_report(LinearControlSystem(
            model, derivation_from_inner(model, AlgebraElement(model, scale * x)), (y,))) for scale in (1.0, 0.125)]
        for report in reports:
            assert report.dim_h == 9
            assert contained(report.a_basis, report.h_basis)
        assert reports[0].dim_a == reports[1].dim_a


def test_su2_example_is_inconclusive():
    system, _ = load_system(fixture_text("su2_inner.json"))
    report = controllability_report(system)
    assert report.verdict is Verdict.INCONCLUSIVE
    assert report.decisive.rule == "e"


def test_gl_trail_mentions_invariant_span():
    system, _ = load_system(fixture_text("gl2_inner.json"))
    report = controllability_report(system)
    assert report.verdict is Verdict.NOT_CONTROLLABLE_ON_G
    rule_b = report.verdicts[1]
    assert rule_b.applies
    assert "span{B_j} is invariant under ad(A)" in rule_b.trail


def test_check_individual_rules():
    system, _ = load_system(fixture_text("heisenberg_center.json"))
    rules = check_individual_rules(system)
    assert list(rules) == ["a", "b", "c", "d", "e"]
    assert rules["a"] and rules["b"] and rules["e"]
    assert not rules["d"]


def test_report_to_dict_is_json_ready():
    system, _ = load_system(fixture_text("heisenberg_unstable.json"))
    doc = report_to_dict(controllability_report(system))
    again = json.loads(json.dumps(doc))
    assert again["split_dims"] == {"plus": 1, "zero": 0, "minus": 2}
    assert again["verdict"] == "NOT_CONTROLLABLE_ON_H"
    assert again["scope"] == "G"
    assert [r["rule"] for r in again["rules"]] == ["a", "b", "c", "d", "e"]
    assert len(again["h_spectrum"]) == 3


def test_render_report():
    system, _ = load_system(fixture_text("heisenberg_center.json"))
    text = render_report(controllability_report(system))
    assert "dim a = 1, dim h = 1, dim g = 3" in text
    assert " -> (a) ✓" in text
    assert text.splitlines()[-1] == "verdict: NOT_CONTROLLABLE_ON_G (scope H)"


def test_report_consistency_checks():
    basis = np.zeros((0, 3))
    with pytest.raises(NumericalError):
        ControllabilityReport(basis, basis, 2, 1, 3, False, True, (0, 1, 0), (), ())
    with pytest.raises(NumericalError):
        ControllabilityReport(basis, basis, 1, 1, 3, False, True, (0, 2, 0), (), ())
    with pytest.raises(NumericalError):
        ControllabilityReport(basis, basis, 1, 3, 3, False, True, (0, 3, 0), (), ())
