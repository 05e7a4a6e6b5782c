from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .exceptions import DimensionMismatchError, ModelFormatError, NonFiniteEntryError, PatternError


def _frozen_matrix(name, data):
    try:
        arr = np.array(data)
        if arr.dtype.kind not in 'biufc':
            raise TypeError(f"non-numeric dtype {arr.dtype}")
        arr = arr.astype(np.complex128 if arr.dtype.kind == 'c' else np.float64)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"Matrix {name} is not numeric: {exc}") from exc
    if arr.ndim != 2:
        raise DimensionMismatchError(f"Matrix {name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteEntryError(f"Matrix {name} contains NaN or infinite entries")
    arr.setflags(write=False)
    return arr


def _prefix_ranges(sizes):
    offsets = np.concatenate(([0], np.cumsum(sizes))).astype(int)
    return tuple((int(offsets[k]), int(offsets[k + 1])) for k in range(len(sizes)))


# =====================================================
# Plant model
# =====================================================

@dataclass(frozen=True)
class StationPartition:
    """Per-station (input count, output count); station order is block order."""

    stations: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        stations = tuple((int(m), int(r)) for m, r in self.stations)
        object.__setattr__(self, 'stations', stations)
        if len(stations) < 2:
            raise ModelFormatError(f"A decentralized model needs at least 2 stations, got {len(stations)}")
        for index, (m_i, r_i) in enumerate(stations, start=1):
            if m_i < 1 or r_i < 1:
                raise DimensionMismatchError(
                    f"Station {index} must own at least one input and one output, got ({m_i}, {r_i})"
                )

    @property
    def v(self):
        return len(self.stations)

    @property
    def m(self):
        return sum(m_i for m_i, _ in self.stations)

    @property
    def r(self):
        return sum(r_i for _, r_i in self.stations)

    @property
    def input_ranges(self):
        return _prefix_ranges([m_i for m_i, _ in self.stations])

    @property
    def output_ranges(self):
        return _prefix_ranges([r_i for _, r_i in self.stations])

    def input_slice(self, station):
        start, stop = self.input_ranges[station - 1]
        return slice(start, stop)

    def output_slice(self, station):
        start, stop = self.output_ranges[station - 1]
        return slice(start, stop)

    def input_indices(self, stations):
        return np.concatenate([np.arange(*self.input_ranges[s - 1]) for s in stations]).astype(int)

    def output_indices(self, stations):
        return np.concatenate([np.arange(*self.output_ranges[s - 1]) for s in stations]).astype(int)


@dataclass(frozen=True)
class BlockIndex:
    station: int
    input_range: Tuple[int, int]
    output_range: Tuple[int, int]


@dataclass(frozen=True, eq=False)
class SystemModel:
    """x' = Ax + Bu, y = Cx + Du with inputs/outputs split per station."""

    name: str
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: Optional[np.ndarray]
    partition: StationPartition

    def __post_init__(self):
        A = _frozen_matrix('A', self.A)
        B = _frozen_matrix('B', self.B)
        C = _frozen_matrix('C', self.C)
        part = self.partition
        if self.D is None:
            D = np.zeros((C.shape[0], B.shape[1]))
            D.setflags(write=False)
        else:
            D = _frozen_matrix('D', self.D)

        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatchError(f"Matrix A must be square, got shape {A.shape}")
        if B.shape[0] != n:
            raise DimensionMismatchError(f"Matrix B has {B.shape[0]} rows, expected n={n}")
        if B.shape[1] != part.m:
            raise DimensionMismatchError(
                f"Matrix B has {B.shape[1]} columns but the station inputs sum to {part.m}"
            )
        if C.shape[1] != n:
            raise DimensionMismatchError(f"Matrix C has {C.shape[1]} columns, expected n={n}")
        if C.shape[0] != part.r:
            raise DimensionMismatchError(
                f"Matrix C has {C.shape[0]} rows but the station outputs sum to {part.r}"
            )
        if D.shape != (part.r, part.m):
            raise DimensionMismatchError(f"Matrix D has shape {D.shape}, expected {(part.r, part.m)}")

        for attr, value in (('A', A), ('B', B), ('C', C), ('D', D)):
            object.__setattr__(self, attr, value)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.partition.m

    @property
    def r(self):
        return self.partition.r

    @property
    def v(self):
        return self.partition.v

    @property
    def is_real(self):
        return all(np.isrealobj(mat) for mat in (self.A, self.B, self.C, self.D))

    def b_block(self, station):
        return self.B[:, self.partition.input_slice(station)]

    def c_block(self, station):
        return self.C[self.partition.output_slice(station), :]

    def d_block(self, out_station, in_station):
        return self.D[self.partition.output_slice(out_station), self.partition.input_slice(in_station)]


@dataclass(frozen=True)
class ModeReachability:
    value: complex
    multiplicity: int
    controllable: bool
    observable: bool


@dataclass(frozen=True)
class CentralReport:
    modes: Tuple[ModeReachability, ...]

    @property
    def uncontrollable(self):
        return [entry.value for entry in self.modes if not entry.controllable]

    @property
    def unobservable(self):
        return [entry.value for entry in self.modes if not entry.observable]

    @property
    def ok(self):
        return not self.uncontrollable and not self.unobservable


# =====================================================
# Spectral data
# =====================================================

@dataclass(frozen=True)
class Mode:
    value: complex
    multiplicity: int = 1
    conjugate_index: Optional[int] = None

    @property
    def is_real(self):
        return self.value.imag == 0


@dataclass(frozen=True, eq=False)
class CanonicalSystem:
    """Coordinates in which A = blockdiag(sigma, A_tilde)."""

    sigma: complex
    A_tilde: np.ndarray
    B_tilde: np.ndarray
    C_tilde: np.ndarray
    D_tilde: np.ndarray
    T: np.ndarray
    T_inv: np.ndarray
    partition: StationPartition

    @property
    def n(self):
        return self.T.shape[0]

    @property
    def v(self):
        return self.partition.v


# =====================================================
# Fixed-mode certificates and measures
# =====================================================

@dataclass(frozen=True)
class Bipartition:
    """Input side eta, output side gamma of a fixed-mode certificate."""

    eta: Tuple[int, ...]
    gamma: Tuple[int, ...]

    def __post_init__(self):
        eta = tuple(sorted(int(s) for s in self.eta))
        gamma = tuple(sorted(int(s) for s in self.gamma))
        object.__setattr__(self, 'eta', eta)
        object.__setattr__(self, 'gamma', gamma)
        if not eta or not gamma:
            raise ValueError("Both sides of a bipartition must be nonempty")
        if set(eta) & set(gamma):
            raise ValueError(f"Stations {sorted(set(eta) & set(gamma))} appear on both sides")

    @classmethod
    def from_eta(cls, eta, v):
        eta = tuple(sorted(eta))
        return cls(eta=eta, gamma=tuple(s for s in range(1, v + 1) if s not in eta))

    @property
    def w(self):
        return len(self.eta)

    def __str__(self):
        eta = ','.join(str(s) for s in self.eta)
        gamma = ','.join(str(s) for s in self.gamma)
        return f"eta={{{eta}}} gamma={{{gamma}}}"


@dataclass(frozen=True, eq=False)
class MMatrix:
    entries: np.ndarray
    partition: StationPartition

    def block(self, gamma, eta):
        """Rows of the output stations in gamma, columns of the input stations in eta."""
        rows = self.partition.output_indices(gamma)
        cols = self.partition.input_indices(eta)
        return self.entries[np.ix_(rows, cols)]


@dataclass(frozen=True)
class MeasureResult:
    sigma: complex
    value: float
    argmin_subset: Tuple[int, ...]
    table: Dict[Tuple[int, ...], float]
    threshold: float
    classified_adfm: bool

    @property
    def is_dfm(self):
        return bool(np.isinf(self.value))


@dataclass(frozen=True)
class OracleVerdict:
    fixed: bool
    max_displacement: float
    trials: int
    gain_magnitude: float
    displacement_tol: float
    resamples: int = 0


# =====================================================
# Resemblant DFM construction
# =====================================================

@dataclass(frozen=True)
class ZeroedEntry:
    station: int
    position: int
    value: complex


@dataclass(frozen=True, eq=False)
class DAdjustment:
    gamma: int
    eta: int
    original: np.ndarray
    adjusted: np.ndarray

    @property
    def magnitude(self):
        return float(np.linalg.norm(self.adjusted - self.original))


@dataclass(frozen=True)
class PerturbationRecord:
    zeroed_b_entries: Tuple[ZeroedEntry, ...]
    zeroed_c_entries: Tuple[ZeroedEntry, ...]
    d_adjustments: Tuple[DAdjustment, ...]
    # frobenius_delta is in the model's own coordinates, canonical_delta in the decoupled ones
    frobenius_delta: Dict[str, float]
    bipartitions: Tuple[Bipartition, ...]
    epsilon: float
    canonical_delta: Dict[str, float] = field(default_factory=dict)

    @property
    def bipartition(self):
        return self.bipartitions[0]

    @property
    def total_delta(self):
        # Frobenius norm of the stacked change [dB; dC; dD]
        return float(np.sqrt(sum(value ** 2 for value in self.frobenius_delta.values())))


@dataclass(frozen=True)
class PerturbedSystem:
    model: SystemModel
    record: PerturbationRecord
    target_sigma: complex
    source: SystemModel


@dataclass(frozen=True)
class RdfmVerification:
    witness: Optional[Bipartition]
    oracle: OracleVerdict
    delta_summary: Dict[str, float]
    discrepancies: Tuple[str, ...] = ()

    @property
    def verified(self):
        return self.witness is not None and self.oracle.fixed


# =====================================================
# Overlapping interaction patterns
# =====================================================

@dataclass(frozen=True)
class InteractionPattern:
    """Links (i, j): input station i may use output station j. Diagonal always present."""

    v: int
    links: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        links = set()
        for link in self.links:
            i, j = (int(k) for k in link)
            if not (1 <= i <= self.v and 1 <= j <= self.v):
                raise PatternError(f"Link K({i},{j}) is out of range for {self.v} stations")
            links.add((i, j))
        links.update((s, s) for s in range(1, self.v + 1))
        object.__setattr__(self, 'links', frozenset(links))

    @classmethod
    def diagonal(cls, v):
        return cls(v=v)

    @property
    def off_diagonal(self):
        return tuple(sorted(link for link in self.links if link[0] != link[1]))

    @property
    def alpha(self):
        return len(self.off_diagonal)

    def sort_key(self):
        return (self.alpha, self.off_diagonal)

    def union(self, other):
        return InteractionPattern(v=self.v, links=self.links | other.links)

    def issubset(self, other):
        return self.links <= other.links

    def literal(self):
        if not self.off_diagonal:
            return 'diag'
        if self.v >= 10:
            return ','.join(f"K({i},{j})" for i, j in self.off_diagonal)
        return ','.join(f"K{i}{j}" for i, j in self.off_diagonal)

    def __str__(self):
        return self.literal()


@dataclass(frozen=True)
class ExpandedSystem:
    model: SystemModel
    station_map: Tuple[Tuple[int, int], ...]
    source: SystemModel


@dataclass(frozen=True)
class StructuredVerdict:
    fixed: bool
    witness: Optional[Bipartition]
    oracle: Optional[OracleVerdict]

    @property
    def agrees(self):
        return self.oracle is None or self.oracle.fixed == self.fixed


@dataclass(frozen=True)
class RankedCandidate:
    pattern: InteractionPattern
    measures: Tuple[MeasureResult, ...]
    worst_case: float
    total: float
    cardinality: int

    def sort_key(self):
        return (self.worst_case, self.total, self.cardinality, self.pattern.off_diagonal)


@dataclass(frozen=True)
class RankedSelection:
    candidates: Tuple[RankedCandidate, ...]
    target_modes: Tuple[complex, ...]
    ordering: str = 'worst_case,sum,cardinality,lexicographic'

    @property
    def winner(self):
        return self.candidates[0]


# =====================================================
# Command runs
# =====================================================

@dataclass(frozen=True)
class RunConfig:
    command: str
    model_path: str
    modes: Tuple[str, ...] = ()
    epsilon: Optional[float] = None
    threshold: float = 1e3
    max_links: int = 2
    seed: int = 0
    subset_cap: int = 20
    output_format: str = 'text'
    output_path: Optional[str] = None
    oracle_trials: int = 100
    scan: bool = False
    all_candidates: bool = False
    rdfm_scope: str = 'all'
    rank_against: str = 'original'
    n_jobs: int = 1

    def to_document(self):
        return {
            'command': self.command,
            'model': self.model_path,
            'modes': list(self.modes),
            'epsilon': self.epsilon,
            'threshold': self.threshold,
            'max_links': self.max_links,
            'seed': self.seed,
            'subset_cap': self.subset_cap,
            'format': self.output_format,
            'output': self.output_path,
            'oracle_trials': self.oracle_trials,
            'scan': self.scan,
            'all_candidates': self.all_candidates,
            'rdfm_scope': self.rdfm_scope,
            'rank_against': self.rank_against,
        }
