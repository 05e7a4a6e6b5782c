"""Resemblant DFMs: perturb B~, C~, D~ so that an ADFM becomes an exact DFM."""
import logging
from itertools import combinations

import numpy as np
import scipy.linalg

from .. import settings
from ..exceptions import NoCandidateError, RdfmVerificationError
from ..models import (
    Bipartition,
    DAdjustment,
    PerturbationRecord,
    PerturbedSystem,
    RdfmVerification,
    SystemModel,
    ZeroedEntry,
)
from .fixed_modes import (
    bipartition_cost,
    dfm_test,
    first_column_magnitudes,
    first_row_magnitudes,
    iter_bipartitions,
    m_matrix,
    random_feedback_oracle,
)
from .spectral import as_scalar, canonicalize

logger = logging.getLogger(__name__)


def _candidate_order(item):
    bip, cost = item
    return (cost, bip.w, bip.eta)


def epsilon_scan(cs):
    """Every bipartition with the smallest epsilon that admits it, cheapest first."""
    M = m_matrix(cs)
    scan = [(bip, bipartition_cost(cs, M, bip)) for bip in iter_bipartitions(cs.v)]
    return sorted(scan, key=_candidate_order)


def candidate_bipartitions(cs, epsilon):
    """Bipartitions whose required entries are all within ``epsilon``, cheapest first.

    A station whose first-row B~ entries exceed epsilon can only sit in gamma,
    one whose first-column C~ entries exceed epsilon only in eta; the remaining
    stations are enumerated in ascending first-row magnitude.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")

    v = cs.v
    b_mag = first_row_magnitudes(cs)
    c_mag = first_column_magnitudes(cs)
    forced_gamma = {s for s in range(1, v + 1) if b_mag[s] > epsilon}
    forced_eta = {s for s in range(1, v + 1) if c_mag[s] > epsilon}

    found = []
    if not forced_gamma & forced_eta:
        M = m_matrix(cs)
        free = sorted(set(range(1, v + 1)) - forced_gamma - forced_eta, key=lambda s: (b_mag[s], s))
        for size in range(len(free) + 1):
            for extra in combinations(free, size):
                eta = forced_eta | set(extra)
                if not eta or len(eta) == v:
                    continue
                bip = Bipartition.from_eta(eta, v)
                cost = bipartition_cost(cs, M, bip)
                if cost <= epsilon:
                    found.append((bip, cost))

    if not found:
        minimal = epsilon_scan(cs)[0][1]
        raise NoCandidateError(
            f"No bipartition makes sigma={cs.sigma} a DFM at epsilon={epsilon:g}; "
            f"the smallest feasible epsilon is {minimal:.6g}",
            minimal_epsilon=minimal,
        )

    found.sort(key=_candidate_order)
    logger.info(f"sigma={cs.sigma} | {len(found)} candidate bipartitions at epsilon={epsilon:g}")
    return found


def certificate_tolerance(cs, zero_tol=settings.ZERO_TOL):
    """zero_tol scaled by the conditioning of M, for re-checking perturbed systems."""
    scale = 1.0 + float(np.linalg.norm(cs.D_tilde, 2))
    if cs.n > 1:
        shifted = cs.A_tilde - as_scalar(cs.sigma) * np.eye(cs.n - 1)
        sep = scipy.linalg.svdvals(shifted)[-1]
        scale += float(np.linalg.norm(cs.C_tilde, 2) * np.linalg.norm(cs.B_tilde, 2)) / sep
    return zero_tol * scale


def _source_from_canonical(cs):
    A_canon = scipy.linalg.block_diag([[as_scalar(cs.sigma)]], cs.A_tilde)
    return SystemModel(
        name='canonical',
        A=cs.T @ A_canon @ cs.T_inv,
        B=cs.T @ cs.B_tilde,
        C=cs.C_tilde @ cs.T_inv,
        D=cs.D_tilde,
        partition=cs.partition,
    )


def _plain(value):
    value = complex(value)
    return value.real if value.imag == 0 else value


def make_rdfm(cs, bipartition, epsilon, source=None, zero_tol=settings.ZERO_TOL,
              cluster_tol=settings.CLUSTER_TOL):
    """Zero the entries one or more candidate bipartitions require and return the perturbed model.

    First-row B~ / first-column C~ entries are set to zero; each block M[gamma, eta]
    is cancelled through D~[gamma, eta] += M[gamma, eta], which is exact because M is
    affine in D~ with coefficient -1. The result is mapped back through T.
    """
    bipartitions = (bipartition,) if isinstance(bipartition, Bipartition) else tuple(bipartition)
    if not bipartitions:
        raise ValueError("At least one bipartition is required")
    source = source if source is not None else _source_from_canonical(cs)

    M = m_matrix(cs)
    for bip in bipartitions:
        cost = bipartition_cost(cs, M, bip)
        if cost > epsilon:
            raise NoCandidateError(f"{bip} needs epsilon >= {cost:.6g}, got {epsilon:g}", minimal_epsilon=cost)

    part = cs.partition
    B_new = np.array(cs.B_tilde, copy=True)
    C_new = np.array(cs.C_tilde, copy=True)
    D_new = np.array(cs.D_tilde, dtype=np.result_type(cs.D_tilde, M.entries), copy=True)

    zeroed_b, zeroed_c, adjustments = [], [], []
    adjusted_blocks = set()
    for bip in bipartitions:
        for s in bip.eta:
            for col in range(*part.input_ranges[s - 1]):
                if B_new[0, col] != 0:
                    zeroed_b.append(ZeroedEntry(station=s, position=col, value=_plain(B_new[0, col])))
                    B_new[0, col] = 0
        for s in bip.gamma:
            for row in range(*part.output_ranges[s - 1]):
                if C_new[row, 0] != 0:
                    zeroed_c.append(ZeroedEntry(station=s, position=row, value=_plain(C_new[row, 0])))
                    C_new[row, 0] = 0
        for g in bip.gamma:
            for e in bip.eta:
                if (g, e) in adjusted_blocks:
                    continue
                adjusted_blocks.add((g, e))
                rows, cols = part.output_slice(g), part.input_slice(e)
                block = M.entries[rows, cols]
                if not np.any(block):
                    continue
                original = D_new[rows, cols].copy()
                D_new[rows, cols] = original + block
                adjustments.append(DAdjustment(gamma=g, eta=e, original=original, adjusted=D_new[rows, cols].copy()))

    B_out = cs.T @ B_new
    C_out = C_new @ cs.T_inv
    D_out = D_new
    if source.is_real and complex(cs.sigma).imag == 0:
        B_out, C_out, D_out = np.real(B_out), np.real(C_out), np.real(D_out)
    else:
        logger.warning(f"sigma={cs.sigma} is not real; the perturbed model carries complex entries")

    model = SystemModel(
        name=f"{source.name} (RDFM sigma={_plain(cs.sigma)})",
        A=source.A,
        B=B_out,
        C=C_out,
        D=D_out,
        partition=part,
    )
    record = PerturbationRecord(
        zeroed_b_entries=tuple(zeroed_b),
        zeroed_c_entries=tuple(zeroed_c),
        d_adjustments=tuple(adjustments),
        frobenius_delta={
            'B': float(np.linalg.norm(B_out - source.B)),
            'C': float(np.linalg.norm(C_out - source.C)),
            'D': float(np.linalg.norm(D_out - source.D)),
        },
        canonical_delta={
            'B': float(np.linalg.norm(B_new - cs.B_tilde)),
            'C': float(np.linalg.norm(C_new - cs.C_tilde)),
            'D': float(np.linalg.norm(D_new - cs.D_tilde)),
        },
        bipartitions=bipartitions,
        epsilon=float(epsilon),
    )

    check = canonicalize(model, cs.sigma, cluster_tol)
    witness = dfm_test(check, certificate_tolerance(check, zero_tol))
    if witness is None:
        raise RdfmVerificationError(
            f"Perturbed model has no bipartition witness at sigma={cs.sigma}; the transform is inconsistent"
        )

    logger.info(
        f"RDFM sigma={cs.sigma} | bipartitions={[str(b) for b in bipartitions]} "
        f"zeroed B={len(zeroed_b)} C={len(zeroed_c)} D blocks={len(adjustments)} "
        f"delta={record.total_delta:.4g}"
    )
    return PerturbedSystem(model=model, record=record, target_sigma=complex(cs.sigma), source=source)


def verify_rdfm(ps, trials=settings.ORACLE_TRIALS, gain_magnitude=settings.ORACLE_GAIN,
                seed=settings.SEED, zero_tol=settings.ZERO_TOL, cluster_tol=settings.CLUSTER_TOL):
    """Independent re-check: bipartition witness plus the decentralized feedback oracle."""
    sigma = ps.target_sigma
    discrepancies = []

    cs = canonicalize(ps.model, sigma, cluster_tol)
    witness = dfm_test(cs, certificate_tolerance(cs, zero_tol))
    if witness is None:
        discrepancies.append(f"no bipartition witness at sigma={_plain(sigma)}")

    oracle = random_feedback_oracle(ps.model, sigma, trials=trials, gain_magnitude=gain_magnitude, seed=seed)
    if not oracle.fixed:
        discrepancies.append(
            f"decentralized feedback moved sigma by {oracle.max_displacement:.3e} "
            f"(tolerance {oracle.displacement_tol:.1e})"
        )

    summary = dict(ps.record.frobenius_delta)
    summary['total'] = ps.record.total_delta
    for note in discrepancies:
        logger.warning(f"RDFM verification for '{ps.model.name}': {note}")
    return RdfmVerification(witness=witness, oracle=oracle, delta_summary=summary, discrepancies=tuple(discrepancies))


def perturbation_report(ps):
    """Every entry of B, C, D that differs between the source and the perturbed model."""
    changes = []
    for name in ('B', 'C', 'D'):
        before, after = getattr(ps.source, name), getattr(ps.model, name)
        for row, col in zip(*np.nonzero(before != after)):
            changes.append({
                'matrix': name,
                'row': int(row),
                'col': int(col),
                'original': _plain(before[row, col]),
                'new': _plain(after[row, col]),
            })
    return changes
