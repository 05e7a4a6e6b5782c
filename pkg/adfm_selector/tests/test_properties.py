import math

import numpy as np
import pytest

from adfm_selector.cli import main
from adfm_selector.exceptions import NoCandidateError
from adfm_selector.models import InteractionPattern, SystemModel
from adfm_selector.services.fixed_modes import adfm_measure, dfm_test, dfm_witnesses, iter_bipartitions, m_matrix
from adfm_selector.services.overlap import expand_structure, measure_under_pattern, minimal_removal_sets
from adfm_selector.services.rdfm import candidate_bipartitions, certificate_tolerance, epsilon_scan, make_rdfm
from adfm_selector.services.spectral import as_scalar, canonicalize, modes, norm_scale
from adfm_selector.services.system_loader import dump_model, station_blocks

from .conftest import PROPERTY_SEEDS, random_model, random_model_with_isolated_mode, random_partitioned_model


def _simple_modes(model):
    return [mode for mode in modes(model) if mode.multiplicity == 1]


@pytest.mark.parametrize('seed', PROPERTY_SEEDS)
def test_measure_is_conjugate_symmetric(seed):
    model = random_model(seed)
    for mode in _simple_modes(model):
        if mode.value.imag <= 0:
            continue
        upper = adfm_measure(model, mode.value).value
        lower = adfm_measure(model, mode.value.conjugate()).value
        if math.isinf(upper):
            assert math.isinf(lower)
        else:
            assert lower == pytest.approx(upper, rel=1e-10)


@pytest.mark.parametrize('seed', PROPERTY_SEEDS)
def test_identity_expansion_is_exact(seed):
    model = random_model(seed)
    expanded = expand_structure(model, InteractionPattern.diagonal(model.v)).model
    for name in ('A', 'B', 'C', 'D'):
        np.testing.assert_array_equal(getattr(expanded, name), getattr(model, name))

    sigma = modes(model)[0].value
    direct = adfm_measure(model, sigma)
    through_pattern = measure_under_pattern(model, InteractionPattern.diagonal(model.v), sigma)
    assert through_pattern.value == direct.value
    assert through_pattern.argmin_subset == direct.argmin_subset


@pytest.mark.parametrize('seed', PROPERTY_SEEDS)
def test_candidates_grow_with_epsilon(seed):
    model = random_model(seed)
    sigma = _simple_modes(model)[0].value
    cs = canonicalize(model, sigma)
    scan = epsilon_scan(cs)
    costs = sorted({cost for _, cost in scan})

    previous = set()
    for epsilon in costs:
        found = {bip for bip, _ in candidate_bipartitions(cs, epsilon)}
        assert previous <= found
        assert found == {bip for bip, cost in scan if cost <= epsilon}
        previous = found

    with pytest.raises(NoCandidateError) as excinfo:
        candidate_bipartitions(cs, costs[0] / 2)
    assert excinfo.value.minimal_epsilon == costs[0]


@pytest.mark.parametrize('seed', PROPERTY_SEEDS)
def test_removal_sets_form_an_antichain(seed):
    model = random_model_with_isolated_mode(seed)
    cs = canonicalize(model, 10.0)
    scan = epsilon_scan(cs)
    bip, cost = scan[seed % len(scan)]
    ps = make_rdfm(cs, bip, cost, source=model)

    sets = minimal_removal_sets(ps.model, 10.0, max_links=2)
    for i, first in enumerate(sets):
        for second in sets[i + 1:]:
            assert not first.issubset(second)
            assert not second.issubset(first)
    assert [p.alpha for p in sets] == sorted(p.alpha for p in sets)


@pytest.mark.parametrize('seed', PROPERTY_SEEDS)
def test_analyze_json_is_byte_identical(seed, tmp_path, capsys):
    path = tmp_path / 'model.json'
    dump_model(random_model(seed), path)
    argv = ['analyze', str(path), '--format', 'json', '--seed', str(seed)]

    assert main(argv) == 0
    first = capsys.readouterr().out
    assert main(argv) == 0
    assert capsys.readouterr().out == first


def _witness(model, sigma):
    cs = canonicalize(model, sigma)
    return dfm_test(cs, certificate_tolerance(cs))


def _isolated_pair(seed):
    """A random model with an isolated mode at 10 and an exact-DFM perturbation of it."""
    model = random_model_with_isolated_mode(seed)
    cs = canonicalize(model, 10.0)
    bip, cost = epsilon_scan(cs)[0]
    return model, make_rdfm(cs, bip, cost, source=model).model


@pytest.mark.parametrize('seed', PROPERTY_SEEDS)
def test_station_blocks_tile_inputs_and_outputs(seed):
    model = random_partitioned_model(seed)
    blocks = station_blocks(model)
    assert [block.station for block in blocks] == list(range(1, model.v + 1))
    for attr, total in (('input_range', model.m), ('output_range', model.r)):
        ranges = [getattr(block, attr) for block in blocks]
        assert ranges[0][0] == 0 and ranges[-1][1] == total
        for (start, stop), (next_start, _) in zip(ranges, ranges[1:]):
            assert start < stop == next_start
        covered = np.concatenate([np.arange(*bounds) for bounds in ranges])
        np.testing.assert_array_equal(covered, np.arange(total))


@pytest.mark.parametrize('seed', PROPERTY_SEEDS)
def test_m_blocks_assemble_into_the_bipartition_submatrix(seed):
    model = random_partitioned_model(seed)
    part = model.partition
    M = m_matrix(canonicalize(model, _simple_modes(model)[0].value))
    for bip in iter_bipartitions(model.v):
        expected = M.entries[np.ix_(part.output_indices(bip.gamma), part.input_indices(bip.eta))]
        assembled = np.block([[M.block((g,), (e,)) for e in bip.eta] for g in bip.gamma])
        np.testing.assert_array_equal(assembled, expected)
        np.testing.assert_array_equal(M.block(bip.gamma, bip.eta), expected)


@pytest.mark.parametrize('seed', PROPERTY_SEEDS)
def test_canonical_form_keeps_the_spectrum(seed):
    model = random_model(seed)
    scale = norm_scale(model.A)
    for mode in _simple_modes(model):
        cs = canonicalize(model, mode.value)
        remaining = [complex(cs.sigma)] + [complex(x) for x in np.linalg.eigvals(cs.A_tilde)]
        for value in np.linalg.eigvals(model.A):
            k = int(np.argmin([abs(value - other) for other in remaining]))
            assert abs(value - remaining.pop(k)) <= 1e-6 * max(abs(value), scale)
        assert remaining == []


@pytest.mark.parametrize('seed', PROPERTY_SEEDS)
def test_recanonicalizing_keeps_dfm_verdicts(seed):
    for model in _isolated_pair(seed):
        cs = canonicalize(model, 10.0)
        sigma = as_scalar(cs.sigma)
        A = np.zeros((cs.n, cs.n), dtype=np.result_type(cs.A_tilde, sigma))
        A[0, 0] = sigma
        A[1:, 1:] = cs.A_tilde
        canonical = SystemModel(
            name=f"{model.name} canonical", A=A, B=cs.B_tilde, C=cs.C_tilde, D=cs.D_tilde,
            partition=model.partition,
        )
        again = canonicalize(canonical, sigma)
        assert dfm_witnesses(again, certificate_tolerance(again)) == dfm_witnesses(cs, certificate_tolerance(cs))
        np.testing.assert_allclose(m_matrix(again).entries, m_matrix(cs).entries, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize('seed', PROPERTY_SEEDS)
def test_scaling_inputs_and_outputs_keeps_dfm_verdict(seed):
    rng = np.random.default_rng(seed)
    b, c = rng.uniform(0.2, 5.0, size=2) * rng.choice([-1.0, 1.0], size=2)
    free, fixed = _isolated_pair(seed)
    assert _witness(free, 10.0) is None
    assert _witness(fixed, 10.0) is not None
    for model in (free, fixed):
        # D carries the product of the input and output scalings
        scaled = SystemModel(
            name=f"{model.name} scaled", A=model.A, B=b * model.B, C=c * model.C, D=b * c * model.D,
            partition=model.partition,
        )
        assert (_witness(scaled, 10.0) is None) == (_witness(model, 10.0) is None)
