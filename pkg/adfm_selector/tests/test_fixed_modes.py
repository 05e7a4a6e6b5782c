import math

import numpy as np
import pytest

from adfm_selector.exceptions import BudgetExceededError
from adfm_selector.models import Bipartition, StationPartition, SystemModel
from adfm_selector.services.fixed_modes import (
    adfm_measure,
    bipartition_cost,
    build_w,
    classify_modes,
    condition_number,
    dfm_test,
    dfm_witnesses,
    iter_bipartitions,
    m_matrix,
    random_feedback_oracle,
)
from adfm_selector.services.rdfm import certificate_tolerance
from adfm_selector.services.spectral import canonicalize

# sigma=1 certificate matrix as printed to three decimals
REFERENCE_M_SIGMA1 = np.array([
    [14, 0, 0, 0.004],
    [-53.333, -56, -52.333, -0.012],
    [38, 52, 0.002, 0.010],
    [10.833, -24, -20.666, 9.336],
])


def test_m_matrix_sigma1(example1):
    M = m_matrix(canonicalize(example1, 1.0))
    np.testing.assert_allclose(M.entries, REFERENCE_M_SIGMA1, atol=5e-4)


def test_m13_pins_the_d13_entry(example1):
    # M13 = 27 - D13, and the reference M13 is zero
    M = m_matrix(canonicalize(example1, 1.0))
    assert example1.D[0, 2] == 27
    assert M.entries[0, 2] == pytest.approx(0.0, abs=1e-12)


def test_m_matrix_ignores_first_row_and_column(example1):
    cs = canonicalize(example1, 1.0)
    B = cs.B_tilde.copy()
    C = cs.C_tilde.copy()
    B[0] = 123.0
    C[:, 0] = -7.0
    changed = type(cs)(
        sigma=cs.sigma, A_tilde=cs.A_tilde, B_tilde=B, C_tilde=C, D_tilde=cs.D_tilde,
        T=cs.T, T_inv=cs.T_inv, partition=cs.partition,
    )
    np.testing.assert_array_equal(m_matrix(changed).entries, m_matrix(cs).entries)


def test_bipartitions_in_canonical_order():
    order = [(b.eta, b.gamma) for b in iter_bipartitions(3)]
    assert order == [
        ((1,), (2, 3)), ((2,), (1, 3)), ((3,), (1, 2)),
        ((1, 2), (3,)), ((1, 3), (2,)), ((2, 3), (1,)),
    ]


def test_bipartition_cost_sigma1(example1):
    cs = canonicalize(example1, 1.0)
    M = m_matrix(cs)
    assert bipartition_cost(cs, M, Bipartition(eta=(2, 3, 4), gamma=(1,))) == pytest.approx(0.005)
    assert bipartition_cost(cs, M, Bipartition(eta=(4,), gamma=(1, 2, 3))) == pytest.approx(0.012, abs=1e-9)


def test_example1_has_no_exact_dfm(example1):
    for sigma in (1.0, 2.0, 3.0, 4.0):
        cs = canonicalize(example1, sigma)
        assert dfm_test(cs) is None
        assert dfm_witnesses(cs) == []


def test_dfm_fixture_witness(dfm_model):
    cs = canonicalize(dfm_model, 1.0)
    assert dfm_test(cs) == Bipartition(eta=(1,), gamma=(2,))
    assert dfm_witnesses(cs) == [Bipartition(eta=(1,), gamma=(2,))]


def test_dfm_fixture_measure_is_infinite(dfm_model):
    result = adfm_measure(dfm_model, 1.0)
    assert math.isinf(result.value)
    assert result.is_dfm
    assert result.classified_adfm


def test_dfm_fixture_oracle_does_not_move_sigma(dfm_model):
    verdict = random_feedback_oracle(dfm_model, 1.0, trials=200, gain_magnitude=10.0, seed=7)
    assert verdict.fixed
    assert verdict.max_displacement <= 1e-9
    assert verdict.trials == 200


def test_oracle_moves_a_free_mode(dfm_model):
    verdict = random_feedback_oracle(dfm_model, 2.0, trials=20)
    assert not verdict.fixed
    assert verdict.max_displacement > 1e-3


def test_oracle_is_reproducible(example1):
    first = random_feedback_oracle(example1, 1.0, trials=30, seed=11)
    second = random_feedback_oracle(example1, 1.0, trials=30, seed=11, n_jobs=2)
    assert first == second


def test_oracle_rejects_zero_trials(example1):
    with pytest.raises(ValueError):
        random_feedback_oracle(example1, 1.0, trials=0)


def test_build_w_layout(example1):
    W = build_w(example1, (1, 3), 1.0)
    assert W.shape == (6, 6)
    np.testing.assert_array_equal(W[:4, :4], example1.A - np.eye(4))
    np.testing.assert_array_equal(W[:4, 4], example1.B[:, 0])
    np.testing.assert_array_equal(W[:4, 5], example1.B[:, 2])
    np.testing.assert_array_equal(W[4, :4], example1.C[0])
    np.testing.assert_array_equal(W[5, :4], example1.C[2])
    # own-station feedthrough is zeroed, cross-station D kept
    assert W[4, 4] == 0 and W[5, 5] == 0
    assert W[4, 5] == example1.D[0, 2]
    assert W[5, 4] == example1.D[2, 0]


def test_condition_number_of_singular_matrix_is_infinite():
    assert math.isinf(condition_number(np.array([[1.0, 2.0], [2.0, 4.0]])))
    assert condition_number(np.diag([4.0, 2.0])) == pytest.approx(2.0)


# sigma=3 is printed as 0.25e5 in the reference listing; every norm gives 2.51e5
REFERENCE_MEASURES = {1.0: 1.63e5, 2.0: 13.36, 3.0: 2.51e5, 4.0: 10.07}


@pytest.mark.parametrize('sigma, expected', sorted(REFERENCE_MEASURES.items()))
def test_example1_measures(example1, sigma, expected):
    result = adfm_measure(example1, sigma)
    assert result.value == pytest.approx(expected, rel=0.02)
    assert result.table[result.argmin_subset] == result.value
    assert len(result.table) == 15


def test_sigma3_measure_comes_from_station_three_alone(example1):
    result = adfm_measure(example1, 3.0)
    assert result.argmin_subset == (3,)
    assert result.value > 2.5e5

    D = np.array(example1.D)
    D[0, 2] = 227.0
    shifted = SystemModel(name='d13', A=example1.A, B=example1.B, C=example1.C, D=D, partition=example1.partition)
    assert adfm_measure(shifted, 3.0).value == pytest.approx(result.value, rel=1e-12)


def test_classify_modes_flags_one_and_three(example1):
    results = classify_modes(example1)
    flags = {mode.value.real: measure.classified_adfm for mode, measure in results}
    assert flags == {1.0: True, 2.0: False, 3.0: True, 4.0: False}
    assert not any(measure.is_dfm for _, measure in results)


def test_threshold_changes_classification(example1):
    results = classify_modes(example1, threshold=10.0)
    assert all(measure.classified_adfm for _, measure in results)


def test_subset_cap_is_enforced(example1):
    with pytest.raises(BudgetExceededError):
        adfm_measure(example1, 1.0, subset_cap=3)


def test_conjugate_modes_share_measure():
    model = SystemModel(
        name='oscillator',
        A=np.array([[0.0, 2.0, 0.0], [-2.0, 0.0, 0.0], [0.0, 0.0, -1.0]]),
        B=np.array([[1.0, 0.0], [0.5, 1.0], [0.0, 2.0]]),
        C=np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.5]]),
        D=None,
        partition=StationPartition(stations=((1, 1), (1, 1))),
    )
    pair = [(mode, measure) for mode, measure in classify_modes(model) if not mode.is_real]
    assert [mode.value.imag for mode, _ in pair] == pytest.approx([-2.0, 2.0])
    (_, lower_measure), (upper, upper_measure) = pair
    assert lower_measure.value == upper_measure.value
    assert upper_measure.value == pytest.approx(adfm_measure(model, upper.value).value, rel=1e-10)


@pytest.mark.parametrize('fixture, sigma', [('dfm_model', 1.0), ('rdfm_sigma1', 1.0), ('rdfm_sigma3', 3.0)])
def test_witness_implies_diagonal_oracle_fixed(request, fixture, sigma):
    value = request.getfixturevalue(fixture)
    model = getattr(value, 'model', value)
    cs = canonicalize(model, sigma)
    assert dfm_test(cs, certificate_tolerance(cs)) is not None
    assert random_feedback_oracle(model, sigma, trials=50, seed=3).fixed
