"""Exact DFM certificates, the randomized feedback oracle and the ADFM condition-number measure."""
import dataclasses
import logging
import math
from itertools import combinations

import numpy as np
import scipy.linalg
from joblib import Parallel, delayed

from .. import settings
from ..exceptions import BudgetExceededError, InternalInconsistencyError, OracleSamplingError
from ..models import Bipartition, MeasureResult, MMatrix, OracleVerdict
from .spectral import as_scalar, modes
from .system_loader import central_check

logger = logging.getLogger(__name__)


# =====================================================
# bipartition certificate
# =====================================================

def m_matrix(cs):
    """M = C~ blockdiag(0, (A~ - sigma I)^-1) B~ - D~."""
    n = cs.n
    sigma = as_scalar(cs.sigma)
    if n == 1:
        return MMatrix(entries=-cs.D_tilde, partition=cs.partition)

    shifted = cs.A_tilde - sigma * np.eye(n - 1)
    sep = scipy.linalg.svdvals(shifted)[-1]
    if sep <= np.finfo(float).eps * (n - 1) * max(1.0, float(np.linalg.norm(shifted, 2))):
        raise InternalInconsistencyError(f"A~ - sigma I is singular at sigma={cs.sigma}; sigma is repeated")

    resolvent_b = scipy.linalg.solve(shifted, cs.B_tilde[1:, :])
    entries = cs.C_tilde[:, 1:] @ resolvent_b - cs.D_tilde
    return MMatrix(entries=entries, partition=cs.partition)


def iter_bipartitions(v):
    """All 2^v - 2 bipartitions, by |eta| then lexicographic eta."""
    for w in range(1, v):
        for eta in combinations(range(1, v + 1), w):
            yield Bipartition.from_eta(eta, v)


def first_row_magnitudes(cs):
    part = cs.partition
    return {s: float(np.abs(cs.B_tilde[0, part.input_slice(s)]).max()) for s in range(1, cs.v + 1)}


def first_column_magnitudes(cs):
    part = cs.partition
    return {s: float(np.abs(cs.C_tilde[part.output_slice(s), 0]).max()) for s in range(1, cs.v + 1)}


def bipartition_cost(cs, M, bipartition):
    """Largest entry that must vanish for ``bipartition`` to certify a DFM."""
    part = cs.partition
    b_entries = np.abs(cs.B_tilde[0, part.input_indices(bipartition.eta)])
    c_entries = np.abs(cs.C_tilde[part.output_indices(bipartition.gamma), 0])
    m_entries = np.abs(M.block(bipartition.gamma, bipartition.eta))
    return float(max(b_entries.max(), c_entries.max(), m_entries.max()))


def dfm_witnesses(cs, zero_tol=settings.ZERO_TOL):
    M = m_matrix(cs)
    return [bip for bip in iter_bipartitions(cs.v) if bipartition_cost(cs, M, bip) <= zero_tol]


def dfm_test(cs, zero_tol=settings.ZERO_TOL):
    """First bipartition witness in canonical order, or None."""
    M = m_matrix(cs)
    for bip in iter_bipartitions(cs.v):
        if bipartition_cost(cs, M, bip) <= zero_tol:
            return bip
    return None


# =====================================================
# Randomized feedback oracle
# =====================================================

def feedback_mask(partition, pattern=None):
    """m x r 0/1 mask of the gain blocks K_ij allowed by ``pattern`` (diagonal when None)."""
    links = pattern.links if pattern is not None else {(s, s) for s in range(1, partition.v + 1)}
    mask = np.zeros((partition.m, partition.r))
    for i, j in links:
        mask[partition.input_slice(i), partition.output_slice(j)] = 1.0
    return mask


def _oracle_trial(model, mask, sigma, gain_magnitude, seed_seq, max_resamples, rcond):
    rng = np.random.default_rng(seed_seq)
    identity = np.eye(model.r)
    for attempt in range(max_resamples + 1):
        K = rng.uniform(-gain_magnitude, gain_magnitude, size=mask.shape) * mask
        F = identity - model.D @ K
        if 1.0 / np.linalg.cond(F) >= rcond:
            break
    else:
        raise OracleSamplingError(
            f"I - DK stayed near-singular over {max_resamples + 1} draws; D is pathological for this gain scale"
        )
    closed_loop = model.A + model.B @ K @ np.linalg.solve(F, model.C)
    eigenvalues = scipy.linalg.eigvals(closed_loop)
    return float(np.min(np.abs(eigenvalues - sigma))), attempt


def random_feedback_oracle(model, sigma, pattern=None, trials=settings.ORACLE_TRIALS,
                           gain_magnitude=settings.ORACLE_GAIN, displacement_tol=None,
                           seed=settings.SEED, max_resamples=settings.ORACLE_MAX_RESAMPLES,
                           rcond=settings.ORACLE_RCOND, n_jobs=settings.N_JOBS):
    """Sample structured static gains and report how far ``sigma`` moves.

    Any movement proves the mode is not fixed; no movement over all trials is
    only evidence that it is. Each trial draws from its own child of
    ``SeedSequence(seed)`` so the verdict does not depend on scheduling.
    """
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    sigma = complex(sigma)
    if displacement_tol is None:
        displacement_tol = settings.ORACLE_DISPLACEMENT_TOL * (1.0 + abs(sigma))

    mask = feedback_mask(model.partition, pattern)
    children = np.random.SeedSequence(seed).spawn(trials)
    outcomes = Parallel(n_jobs=n_jobs)(
        delayed(_oracle_trial)(model, mask, sigma, gain_magnitude, child, max_resamples, rcond)
        for child in children
    )
    max_displacement = max(displacement for displacement, _ in outcomes)
    resamples = sum(attempt for _, attempt in outcomes)

    verdict = OracleVerdict(
        fixed=bool(max_displacement <= displacement_tol),
        max_displacement=max_displacement,
        trials=trials,
        gain_magnitude=float(gain_magnitude),
        displacement_tol=float(displacement_tol),
        resamples=resamples,
    )
    logger.debug(
        f"Oracle sigma={sigma} | trials={trials} gain={gain_magnitude} "
        f"max_displacement={max_displacement:.3e} fixed={verdict.fixed}"
    )
    return verdict


# =====================================================
# ADFM condition-number measure
# =====================================================

def build_w(model, subset, sigma):
    """Bordered matrix [[A - sigma I, B_s...], [C_s, D cross-blocks]] with zero diagonal D blocks."""
    stations = sorted(set(subset))
    if not stations or stations[0] < 1 or stations[-1] > model.v:
        raise ValueError(f"Subset {subset} must be a nonempty subset of 1..{model.v}")

    sigma = as_scalar(sigma)
    rows = [[model.A - sigma * np.eye(model.n)] + [model.b_block(s) for s in stations]]
    for si in stations:
        m_i, r_i = model.partition.stations[si - 1]
        row = [model.c_block(si)]
        for sj in stations:
            row.append(np.zeros((r_i, m_i)) if sj == si else model.d_block(si, sj))
        rows.append(row)
    return np.block(rows)


def condition_number(W, rank_tol=settings.RANK_TOL):
    s = scipy.linalg.svdvals(W)
    if s[0] == 0 or s[-1] <= rank_tol * s[0]:
        return math.inf
    return float(s[0] / s[-1])


def adfm_measure(model, sigma, subset_cap=settings.SUBSET_CAP, rank_tol=settings.RANK_TOL,
                 threshold=settings.ADFM_THRESHOLD):
    """Minimum of cond(W_s(sigma)) over every nonempty station subset s."""
    v = model.v
    if v > subset_cap:
        raise BudgetExceededError(
            f"{v} stations means {2 ** v - 1} subsets; the cap is {subset_cap} stations"
        )

    table = {}
    for size in range(1, v + 1):
        for subset in combinations(range(1, v + 1), size):
            table[subset] = condition_number(build_w(model, subset, sigma), rank_tol)

    value = min(table.values())
    argmin = next(subset for subset, cond in table.items() if cond == value)
    return MeasureResult(
        sigma=complex(sigma),
        value=value,
        argmin_subset=argmin,
        table=table,
        threshold=float(threshold),
        classified_adfm=bool(value >= threshold),
    )


def classify_modes(model, threshold=settings.ADFM_THRESHOLD, cluster_tol=settings.CLUSTER_TOL,
                   subset_cap=settings.SUBSET_CAP, rank_tol=settings.RANK_TOL, check_central=True):
    if check_central:
        central_check(model)
    catalog = modes(model, cluster_tol)
    results = []
    for index, mode in enumerate(catalog):
        partner = mode.conjugate_index
        if model.is_real and partner is not None and partner < index:
            mirrored = results[partner][1]
            measure = dataclasses.replace(mirrored, sigma=mode.value)
        else:
            measure = adfm_measure(model, mode.value, subset_cap, rank_tol, threshold)
        results.append((mode, measure))

        if measure.is_dfm:
            logger.info(f"Mode {mode.value} is a DFM of '{model.name}'")
        elif measure.classified_adfm:
            logger.info(f"Mode {mode.value} is an ADFM of '{model.name}' | measure={measure.value:.4g}")
    return results
