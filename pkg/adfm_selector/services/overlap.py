"""Overlapping interaction patterns: expansion, structured fixed modes, removal sets and ranking."""
import logging
import math
import re
from functools import reduce
from itertools import combinations, product

import numpy as np
from joblib import Parallel, delayed

from .. import settings
from ..exceptions import PatternError
from ..models import (
    ExpandedSystem,
    InteractionPattern,
    RankedCandidate,
    RankedSelection,
    StationPartition,
    StructuredVerdict,
    SystemModel,
)
from .fixed_modes import adfm_measure, dfm_test, random_feedback_oracle
from .rdfm import certificate_tolerance
from .spectral import canonicalize

logger = logging.getLogger(__name__)

_EXPLICIT_LINK = re.compile(r'K\((\d+),(\d+)\)')
_COMPACT_LINK = re.compile(r'K(\d)(\d)')
# commas outside K(i,j) parentheses
_LINK_SEPARATOR = re.compile(r',(?![^()]*\))')


# =====================================================
# Pattern literals
# =====================================================

def parse_pattern(text, v):
    """``K14,K41`` or ``K(12,3)`` (required when v >= 10); ``diag`` or empty for no links."""
    body = text.strip().strip('{}').replace(' ', '')
    if body.lower() in ('', 'diag'):
        return InteractionPattern.diagonal(v)

    links = set()
    for token in _LINK_SEPARATOR.split(body.upper()):
        match = _EXPLICIT_LINK.fullmatch(token)
        if match is None and v < 10:
            match = _COMPACT_LINK.fullmatch(token)
        if match is None:
            hint = " (use K(i,j) for 10 or more stations)" if v >= 10 else ""
            raise PatternError(f"Cannot read link '{token}'{hint}")
        links.add((int(match.group(1)), int(match.group(2))))
    return InteractionPattern(v=v, links=frozenset(links))


def format_pattern(pattern):
    return pattern.literal()


# =====================================================
# Expansion into perfect decentralized form
# =====================================================

def expand_structure(model, pattern):
    """One single-role station per link (i, j): inputs of station i, outputs of station j.

    D-bar block (a, b) is D[j_a, i_b], so y-bar reproduces the original outputs.
    """
    if pattern.v != model.v:
        raise PatternError(f"Pattern is for {pattern.v} stations, model '{model.name}' has {model.v}")

    station_map = tuple(sorted(pattern.links))
    part = model.partition
    stations = tuple((part.stations[i - 1][0], part.stations[j - 1][1]) for i, j in station_map)

    B = np.hstack([model.b_block(i) for i, _ in station_map])
    C = np.vstack([model.c_block(j) for _, j in station_map])
    D = np.block([[model.d_block(j_a, i_b) for i_b, _ in station_map] for _, j_a in station_map])

    expanded = SystemModel(
        name=f"{model.name}[{pattern}]",
        A=model.A,
        B=B,
        C=C,
        D=D,
        partition=StationPartition(stations=stations),
    )
    return ExpandedSystem(model=expanded, station_map=station_map, source=model)


# =====================================================
# Structured fixed modes
# =====================================================

def structured_fixed_test(model, pattern, sigma, zero_tol=settings.ZERO_TOL,
                          oracle_trials=settings.ORACLE_TRIALS, seed=settings.SEED,
                          gain_magnitude=settings.ORACLE_GAIN, cluster_tol=settings.CLUSTER_TOL):
    """Bipartition test on the expansion, cross-checked by the oracle with the sparse gain.

    ``oracle_trials=0`` skips the oracle. The deterministic test decides.
    """
    expanded = expand_structure(model, pattern)
    cs = canonicalize(expanded.model, sigma, cluster_tol)
    witness = dfm_test(cs, certificate_tolerance(cs, zero_tol))
    fixed = witness is not None

    oracle = None
    if oracle_trials > 0:
        oracle = random_feedback_oracle(
            model, sigma, pattern=pattern, trials=oracle_trials, gain_magnitude=gain_magnitude, seed=seed,
        )
    verdict = StructuredVerdict(fixed=fixed, witness=witness, oracle=oracle)
    if not verdict.agrees:
        logger.warning(
            f"Pattern {pattern} at sigma={sigma}: certificate says fixed={fixed}, "
            f"oracle moved sigma by {oracle.max_displacement:.3e}"
        )
    return verdict


def minimal_removal_sets(model, sigma, max_links=settings.MAX_LINKS, zero_tol=settings.ZERO_TOL,
                         oracle_trials=0, seed=settings.SEED, cluster_tol=settings.CLUSTER_TOL):
    """Inclusion-minimal off-diagonal link sets that stop ``sigma`` being fixed.

    Sets are enumerated by cardinality, lexicographically within one; supersets
    of a set already kept are never tested.
    """
    if max_links < 1:
        raise ValueError(f"max_links must be at least 1, got {max_links}")

    v = model.v

    def is_fixed(pattern):
        return structured_fixed_test(
            model, pattern, sigma, zero_tol=zero_tol, oracle_trials=oracle_trials, seed=seed,
            cluster_tol=cluster_tol,
        ).fixed

    if not is_fixed(InteractionPattern.diagonal(v)):
        logger.warning(
            f"sigma={sigma} is not a DFM of '{model.name}' under decentralized control; nothing to remove"
        )
        return []

    off_diagonal = [(i, j) for i in range(1, v + 1) for j in range(1, v + 1) if i != j]
    kept = []
    for size in range(1, min(max_links, len(off_diagonal)) + 1):
        for links in combinations(off_diagonal, size):
            pattern = InteractionPattern(v=v, links=frozenset(links))
            if any(smaller.issubset(pattern) for smaller in kept):
                continue
            if not is_fixed(pattern):
                kept.append(pattern)

    if kept:
        logger.info(f"sigma={sigma} | removal sets: {[str(p) for p in kept]}")
    else:
        logger.warning(f"No link set of at most {max_links} links removes sigma={sigma}")
    return kept


def combine_sets(per_mode):
    """Unions over the Cartesian product of per-mode choices, deduplicated."""
    if not per_mode or any(not choices for choices in per_mode):
        raise ValueError("Every target mode needs at least one removal set")

    unions = {}
    for choice in product(*per_mode):
        union = reduce(InteractionPattern.union, choice)
        unions.setdefault(union.links, union)
    return sorted(unions.values(), key=InteractionPattern.sort_key)


# =====================================================
# Ranking
# =====================================================

def measure_under_pattern(model, pattern, sigma, subset_cap=settings.SUBSET_CAP,
                          rank_tol=settings.RANK_TOL, threshold=settings.ADFM_THRESHOLD):
    expanded = expand_structure(model, pattern)
    return adfm_measure(expanded.model, sigma, subset_cap=subset_cap, rank_tol=rank_tol, threshold=threshold)


def rank_patterns(model, candidates, target_modes, n_jobs=settings.N_JOBS, subset_cap=settings.SUBSET_CAP,
                  rank_tol=settings.RANK_TOL, threshold=settings.ADFM_THRESHOLD, mode_models=None):
    """Order candidates by (worst case, sum, cardinality, links) of their measures at the target modes.

    ``mode_models`` optionally gives one model per target mode (each mode's RDFM);
    otherwise every mode is measured on ``model``.
    """
    candidates = list(candidates)
    target_modes = tuple(complex(sigma) for sigma in target_modes)
    if not candidates:
        raise ValueError("rank_patterns needs at least one candidate")
    if not target_modes:
        raise ValueError("rank_patterns needs at least one target mode")

    if mode_models is None:
        mode_models = (model,) * len(target_modes)
    if len(mode_models) != len(target_modes):
        raise ValueError("mode_models must give one model per target mode")

    jobs = [
        (pattern, mode_model, sigma)
        for pattern in candidates
        for mode_model, sigma in zip(mode_models, target_modes)
    ]
    results = Parallel(n_jobs=n_jobs)(
        delayed(measure_under_pattern)(mode_model, pattern, sigma, subset_cap, rank_tol, threshold)
        for pattern, mode_model, sigma in jobs
    )

    k = len(target_modes)
    ranked = []
    for index, pattern in enumerate(candidates):
        measures = tuple(results[index * k:(index + 1) * k])
        values = [measure.value for measure in measures]
        ranked.append(RankedCandidate(
            pattern=pattern,
            measures=measures,
            worst_case=max(values),
            total=math.fsum(values),
            cardinality=pattern.alpha,
        ))
    ranked.sort(key=RankedCandidate.sort_key)

    selection = RankedSelection(candidates=tuple(ranked), target_modes=target_modes)
    logger.info(f"Winner {selection.winner.pattern} | worst case {selection.winner.worst_case:.4g}")
    return selection
