import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maxconf.qstate import INCONCLUSIVE, Ensemble, OutcomeNeverOccursError, PureQubit, povm_validate
from maxconf.strategies import (
    MAX_CONFIDENCE,
    MIN_ERROR,
    TrineParams,
    build_povm,
    confidence_from_normalized_voltages,
    confidences,
    max_confidence_direction,
    min_error_srm,
    outcome_probability_matrix,
    strategy_report,
    strategy_sweep,
    success_probability,
    symmetric_states,
    trine_max_confidence_povm,
)

thetas = st.floats(0, 45, allow_nan=False)
open_thetas = st.floats(0.5, 44.5, allow_nan=False)


def trine_vectors(theta_deg):
    """Plain-numpy oracle for the three symmetric kets."""
    t = np.deg2rad(theta_deg)
    return [np.array([np.cos(t), np.exp(1j * p) * np.sin(t)]) for p in (0, 2 * np.pi / 3, -2 * np.pi / 3)]


def srm_oracle(theta_deg):
    """SRM elements built directly from rho^-1/2 via eig, full-rank case."""
    vs = trine_vectors(theta_deg)
    rho = sum(np.outer(v, v.conj()) for v in vs) / 3
    w, u = np.linalg.eig(rho)
    r = u @ np.diag(w.real ** -0.5) @ np.linalg.inv(u)
    return [np.outer(r @ v, (r @ v).conj()) / 3 for v in vs]


@pytest.mark.parametrize("bad", [-1, 45.01, np.nan, np.inf])
def test_trine_params_domain(bad):
    with pytest.raises(ValueError):
        TrineParams(bad)


def test_symmetric_states_match_oracle():
    ens = symmetric_states(20)
    for s, v in zip(ens.states, trine_vectors(20)):
        assert np.allclose(s.vector, v, atol=1e-15)
    assert ens.priors == (1 / 3, 1 / 3, 1 / 3)


def test_theta_45_is_standard_trine():
    vs = trine_vectors(45)
    for a in range(3):
        for b in range(a + 1, 3):
            assert abs(np.vdot(vs[a], vs[b])) ** 2 == pytest.approx(0.25, abs=1e-15)


@given(open_thetas)
def test_max_confidence_povm_valid_and_equal_to_direction(theta):
    povm = trine_max_confidence_povm(theta)
    assert povm_validate(povm)
    ens = symmetric_states(theta)
    for j in range(3):
        d = max_confidence_direction(ens, j).matrix
        e = povm[j].matrix
        scale = np.trace(e).real / np.trace(d).real
        assert np.allclose(e, scale * d, atol=1e-9)


@given(open_thetas)
def test_max_confidence_confidence_is_two_thirds(theta):
    for c in confidences(symmetric_states(theta), trine_max_confidence_povm(theta)):
        assert c == pytest.approx(2 / 3, abs=1e-9)


@given(thetas)
def test_inconclusive_probability_law(theta):
    rep = strategy_report(theta, MAX_CONFIDENCE)
    law = np.cos(2 * np.deg2rad(theta))
    assert rep.inconclusive_probability == pytest.approx(law, abs=1e-12)
    assert np.allclose(rep.probabilities.column(INCONCLUSIVE), law, atol=1e-12)


def test_theta_zero_examples():
    rep = strategy_report(0, MAX_CONFIDENCE)
    assert rep.inconclusive_probability == pytest.approx(1.0, abs=1e-15)
    assert rep.confidence_per_outcome == (None, None, None)
    pq = trine_max_confidence_povm(0)[INCONCLUSIVE].matrix
    assert np.allclose(pq, np.diag([1, 0]))


def test_theta_45_has_no_inconclusive_weight():
    povm = trine_max_confidence_povm(45)
    assert np.allclose(povm[INCONCLUSIVE].matrix, 0, atol=1e-15)
    for j in range(3):
        assert np.trace(povm[j].matrix).real == pytest.approx(2 / 3, abs=1e-12)


def test_element_example_at_30_degrees():
    # weight 1/(3 cos^2 30) = 4/9, |phi_0> = (1/2, sqrt3/2)
    expected = (4 / 9) * np.array([[0.25, np.sqrt(3) / 4], [np.sqrt(3) / 4, 0.75]])
    assert np.allclose(trine_max_confidence_povm(30)[0].matrix, expected, atol=1e-15)
    assert np.allclose(trine_max_confidence_povm(30)[INCONCLUSIVE].matrix, np.diag([2 / 3, 0]), atol=1e-15)


@given(open_thetas)
def test_srm_matches_independent_oracle(theta):
    povm = min_error_srm(symmetric_states(theta))
    for j, e in enumerate(srm_oracle(theta)):
        assert np.allclose(povm[j].matrix, e, atol=1e-9)


@given(st.one_of(st.just(0.0), st.floats(0.01, 45, allow_nan=False)))
def test_srm_confidence_closed_form(theta):
    ens = symmetric_states(theta)
    povm = min_error_srm(ens)
    assert povm_validate(povm)
    closed = (1 + np.sin(2 * np.deg2rad(theta))) / 3
    for c in confidences(ens, povm):
        assert c == pytest.approx(closed, abs=1e-9)
    assert success_probability(ens, povm) == pytest.approx(closed, abs=1e-9)


@given(st.floats(0, 0.01, allow_nan=False))
def test_srm_near_degenerate_band_is_bounded(theta):
    # below the support cutoff the |1> weight is dropped; the loss is at most sin(2t)/3
    ens = symmetric_states(theta)
    closed = (1 + np.sin(2 * np.deg2rad(theta))) / 3
    for c in confidences(ens, min_error_srm(ens)):
        assert abs(c - closed) <= np.sin(2 * np.deg2rad(theta)) / 3 + 1e-9


def test_srm_rank_deficient_theta_zero():
    povm = min_error_srm(symmetric_states(0))
    assert povm_validate(povm)
    assert confidences(symmetric_states(0), povm) == pytest.approx((1 / 3,) * 3, abs=1e-12)


def test_srm_refuses_unequal_priors_and_asymmetric_sets():
    s = symmetric_states(20).states
    with pytest.raises(ValueError):
        min_error_srm(Ensemble(s, (0.5, 0.25, 0.25)))
    skew = (PureQubit(1, 0), PureQubit.normalized(1, 1), PureQubit.normalized(1, 0.2j))
    with pytest.raises(ValueError):
        min_error_srm(Ensemble.equiprobable(skew))


@given(open_thetas)
def test_min_error_below_max_confidence(theta):
    mc = strategy_report(theta, MAX_CONFIDENCE).confidence_per_outcome
    me = strategy_report(theta, MIN_ERROR).confidence_per_outcome
    assert all(a < b for a, b in zip(me, mc))


def test_strategies_agree_at_45():
    for a, b in zip(
        strategy_report(45, MAX_CONFIDENCE).confidence_per_outcome,
        strategy_report(45, MIN_ERROR).confidence_per_outcome,
    ):
        assert a == pytest.approx(b, abs=1e-9)


@given(thetas, st.sampled_from([MAX_CONFIDENCE, MIN_ERROR]))
def test_probability_rows_sum_to_one_and_cyclic(theta, strategy):
    m = outcome_probability_matrix(symmetric_states(theta), build_povm(strategy, theta))
    assert m.row_sum_error() <= 1e-10
    v = m.values
    for i in range(3):
        for j in range(3):
            assert v[i, j] == pytest.approx(v[0, (j - i) % 3], abs=1e-12)


def test_build_povm_unknown_strategy():
    with pytest.raises(ValueError):
        build_povm("unambiguous", 10)


def test_sweep_order():
    reps = strategy_sweep([0, 15, 45], MIN_ERROR)
    assert [r.theta for r in reps] == [0, 15, 45]


def test_max_confidence_direction_zero_prior():
    s = symmetric_states(20).states
    with pytest.raises(ValueError):
        max_confidence_direction(Ensemble(s, (0.5, 0.5, 0.0)), 2)


def test_confidence_from_voltages():
    assert confidence_from_normalized_voltages([0.2, 0.05, 0.05]) == pytest.approx(2 / 3)
    assert confidence_from_normalized_voltages([0.05, 0.2, 0.05], detector=1) == pytest.approx(2 / 3)
    with pytest.raises(OutcomeNeverOccursError):
        confidence_from_normalized_voltages([0, 0, 0])
    with pytest.raises(OutcomeNeverOccursError):
        confidence_from_normalized_voltages([1e-33, 4e-34, 0])
    with pytest.raises(ValueError):
        confidence_from_normalized_voltages([-0.1, 0.2, 0.2])
