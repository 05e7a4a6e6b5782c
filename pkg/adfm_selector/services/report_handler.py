"""Runs one command against a model document and renders the text or JSON report."""
import json
import logging
import math
from pathlib import Path

import pandas as pd

from .. import __version__, settings
from ..exceptions import ModeSelectionError, NoRemovalSetError
from .fixed_modes import classify_modes, m_matrix
from .overlap import combine_sets, format_pattern, minimal_removal_sets, rank_patterns
from .rdfm import candidate_bipartitions, epsilon_scan, make_rdfm, perturbation_report, verify_rdfm
from .spectral import canonicalize, match_mode, modes, norm_scale
from .system_loader import central_check, dump_model, load_model

logger = logging.getLogger(__name__)

REPORT_KEYS = (
    'config', 'version', 'modes', 'measures', 'mmatrix', 'bipartitions', 'epsilon_scan',
    'perturbation', 'candidates', 'ranking', 'warnings',
)
EXPANSION_CONVENTION = 'Dbar[a, b] = D[j_a, i_b]'
REMOVAL_SET_NOTES = {
    'all': (
        'removal sets come from the RDFM that zeroes every candidate bipartition; '
        'it can admit more minimal sets than a single-bipartition RDFM'
    ),
    'best': 'removal sets come from the RDFM of the cheapest bipartition only',
}


# =====================================================
# Number and mode literals
# =====================================================

def parse_mode_literal(text):
    """``1``, ``-0.2+3.1i`` or ``-0.2+3.1j`` to a complex number."""
    literal = text.strip().lower().replace(' ', '').replace('i', 'j')
    try:
        return complex(literal)
    except ValueError as exc:
        raise ModeSelectionError(f"Cannot read mode selector '{text}'") from exc


def _encode_real(x):
    if math.isinf(x):
        return 'inf' if x > 0 else '-inf'
    return float(x)


def encode_number(value):
    """JSON form: float, "inf", or {"real", "imag"} for non-real values."""
    value = complex(value)
    if value.imag != 0:
        return {'real': _encode_real(value.real), 'imag': _encode_real(value.imag)}
    return _encode_real(value.real)


def encode_matrix(matrix):
    return [[encode_number(x) for x in row] for row in matrix]


def decode_number(value):
    if isinstance(value, dict):
        return complex(float(value['real']), float(value['imag']))
    return float(value)


def format_number(value):
    value = complex(value)
    if value.imag == 0:
        return f"{value.real:.6g}"
    return f"{value.real:.6g}{value.imag:+.6g}i"


def _subset_label(stations):
    return '{' + ','.join(str(s) for s in stations) + '}'


class ReportHandler:
    def __init__(self, config):
        self.config = config
        self.warnings = []

        self.commands = {
            'analyze': self.handle_analyze,
            'mmatrix': self.handle_mmatrix,
            'rdfm': self.handle_rdfm,
            'select': self.handle_select,
        }

    def run(self):
        """Load the model, run the configured command, return the report document."""
        model = load_model(self.config.model_path)
        report = dict.fromkeys(REPORT_KEYS)
        report['config'] = self.config.to_document()
        report['version'] = __version__

        self.commands[self.config.command](model, report)

        report['warnings'] = list(self.warnings)
        return report

    def render(self, report):
        if self.config.output_format == 'json':
            return json.dumps(report, indent=2)
        return self.format_text(report)

    def resolve_mode(self, model, literal):
        sigma = parse_mode_literal(literal)
        mode = match_mode(modes(model), sigma, settings.MODE_MATCH_TOL * norm_scale(model.A))
        return mode.value

    def _resolve_modes(self, model):
        resolved = []
        for literal in self.config.modes:
            sigma = self.resolve_mode(model, literal)
            if sigma not in resolved:
                resolved.append(sigma)
        return resolved

    # =====================================================
    # Commands
    # =====================================================

    def handle_analyze(self, model, report):
        central = central_check(model)
        for value in central.uncontrollable:
            self.warnings.append(f"mode {format_number(value)} is centrally uncontrollable")
        for value in central.unobservable:
            self.warnings.append(f"mode {format_number(value)} is centrally unobservable")

        results = classify_modes(
            model,
            threshold=self.config.threshold,
            subset_cap=self.config.subset_cap,
            check_central=False,
        )
        report['modes'] = [
            {
                'value': encode_number(mode.value),
                'multiplicity': mode.multiplicity,
                'conjugate_index': mode.conjugate_index,
                'controllable': reach.controllable,
                'observable': reach.observable,
            }
            for (mode, _), reach in zip(results, central.modes)
        ]
        report['measures'] = [
            {
                'sigma': encode_number(measure.sigma),
                'value': encode_number(measure.value),
                'argmin_subset': list(measure.argmin_subset),
                'dfm': measure.is_dfm,
                'adfm': measure.classified_adfm,
                'threshold': measure.threshold,
            }
            for _, measure in results
        ]

    def handle_mmatrix(self, model, report):
        sigma = self.resolve_mode(model, self.config.modes[0])
        cs = canonicalize(model, sigma)
        report['mmatrix'] = {
            'sigma': encode_number(cs.sigma),
            'entries': encode_matrix(m_matrix(cs).entries),
        }
        report['epsilon_scan'] = self._bipartition_rows(epsilon_scan(cs))

    def handle_rdfm(self, model, report):
        config = self.config
        sigma = self.resolve_mode(model, config.modes[0])
        cs = canonicalize(model, sigma)

        if config.scan:
            report['epsilon_scan'] = self._bipartition_rows(epsilon_scan(cs))
            if config.epsilon is None:
                return

        candidates = candidate_bipartitions(cs, config.epsilon)
        report['bipartitions'] = self._bipartition_rows(candidates)
        chosen = [bip for bip, _ in candidates] if config.all_candidates else [candidates[0][0]]

        ps = make_rdfm(cs, chosen, config.epsilon, source=model)
        verification = verify_rdfm(ps, trials=config.oracle_trials, seed=config.seed)
        self.warnings.extend(verification.discrepancies)
        document = self._perturbation_document(ps, verification)
        report['perturbation'] = [document]

        if config.output_path:
            dump_model(ps.model, config.output_path)
            sidecar = Path(f"{config.output_path}.perturbation.json")
            sidecar.write_text(json.dumps(document['changes'], indent=2) + '\n', encoding='utf-8')
            logger.info(f"Wrote perturbed model to {config.output_path} and changes to {sidecar}")

    def handle_select(self, model, report):
        config = self.config
        sigmas = self._resolve_modes(model)

        per_mode, mode_models = [], []
        bipartitions, perturbations, removal = [], [], []
        for sigma in sigmas:
            cs = canonicalize(model, sigma)
            candidates = candidate_bipartitions(cs, config.epsilon)
            chosen = [bip for bip, _ in candidates] if config.rdfm_scope == 'all' else [candidates[0][0]]
            ps = make_rdfm(cs, chosen, config.epsilon, source=model)

            sets = minimal_removal_sets(ps.model, sigma, max_links=config.max_links)
            if not sets:
                raise NoRemovalSetError(
                    f"No set of at most {config.max_links} links removes sigma={format_number(sigma)}; "
                    f"raise --max-links"
                )
            per_mode.append(sets)
            mode_models.append(ps.model)

            bipartitions.append({'sigma': encode_number(sigma), 'candidates': self._bipartition_rows(candidates)})
            perturbations.append(self._perturbation_document(ps))
            removal.append({'sigma': encode_number(sigma), 'removal_sets': [format_pattern(p) for p in sets]})

        selection = rank_patterns(
            model,
            combine_sets(per_mode),
            sigmas,
            n_jobs=config.n_jobs,
            subset_cap=config.subset_cap,
            threshold=config.threshold,
            mode_models=mode_models if config.rank_against == 'perturbed' else None,
        )

        report['bipartitions'] = bipartitions
        report['perturbation'] = perturbations
        report['candidates'] = removal
        report['ranking'] = {
            'ordering': selection.ordering,
            'rank_against': config.rank_against,
            'expansion_convention': EXPANSION_CONVENTION,
            'rdfm_scope': config.rdfm_scope,
            'notes': [REMOVAL_SET_NOTES[config.rdfm_scope]],
            'target_modes': [encode_number(sigma) for sigma in selection.target_modes],
            'winner': format_pattern(selection.winner.pattern),
            'rows': [
                {
                    'pattern': format_pattern(candidate.pattern),
                    'links': [list(link) for link in candidate.pattern.off_diagonal],
                    'measures': [encode_number(measure.value) for measure in candidate.measures],
                    'worst_case': encode_number(candidate.worst_case),
                    'sum': encode_number(candidate.total),
                    'cardinality': candidate.cardinality,
                }
                for candidate in selection.candidates
            ],
        }

    # =====================================================
    # Report sections
    # =====================================================

    def _bipartition_rows(self, scored):
        return [
            {'eta': list(bip.eta), 'gamma': list(bip.gamma), 'cost': encode_number(cost)}
            for bip, cost in scored
        ]

    def _perturbation_document(self, ps, verification=None):
        record = ps.record
        delta = dict(record.frobenius_delta)
        delta['total'] = record.total_delta
        document = {
            'sigma': encode_number(ps.target_sigma),
            'epsilon': record.epsilon,
            'bipartitions': [{'eta': list(b.eta), 'gamma': list(b.gamma)} for b in record.bipartitions],
            'zeroed_b': [
                {'station': e.station, 'column': e.position, 'value': encode_number(e.value)}
                for e in record.zeroed_b_entries
            ],
            'zeroed_c': [
                {'station': e.station, 'row': e.position, 'value': encode_number(e.value)}
                for e in record.zeroed_c_entries
            ],
            'd_adjustments': [
                {
                    'gamma': adj.gamma,
                    'eta': adj.eta,
                    'original': encode_matrix(adj.original),
                    'adjusted': encode_matrix(adj.adjusted),
                    'magnitude': adj.magnitude,
                }
                for adj in record.d_adjustments
            ],
            'frobenius_delta': delta,
            'canonical_delta': dict(record.canonical_delta),
            'changes': [
                dict(change, original=encode_number(change['original']), new=encode_number(change['new']))
                for change in perturbation_report(ps)
            ],
            'verification': None,
        }
        if verification is not None:
            witness = verification.witness
            oracle = verification.oracle
            document['verification'] = {
                'verified': verification.verified,
                'witness': None if witness is None else {'eta': list(witness.eta), 'gamma': list(witness.gamma)},
                'oracle': {
                    'fixed': oracle.fixed,
                    'max_displacement': oracle.max_displacement,
                    'trials': oracle.trials,
                    'gain_magnitude': oracle.gain_magnitude,
                    'displacement_tol': oracle.displacement_tol,
                    'resamples': oracle.resamples,
                },
                'discrepancies': list(verification.discrepancies),
            }
        return document

    # =====================================================
    # Text rendering
    # =====================================================

    def format_text(self, report):
        config = report['config']
        sections = [f"adfm-selector {report['version']} | {config['command']} {config['model']}"]

        if report['measures'] is not None:
            sections.append(self.format_measures(report))
        if report['mmatrix'] is not None:
            sections.append(self.format_mmatrix(report['mmatrix']))
        if report['epsilon_scan'] is not None:
            sections.append("Epsilon scan (smallest epsilon per bipartition)\n"
                            + self.format_bipartitions(report['epsilon_scan']))
        if report['bipartitions'] is not None:
            sections.append(self.format_candidates(report))
        if report['perturbation'] is not None:
            sections.extend(self.format_perturbation(p) for p in report['perturbation'])
        if report['ranking'] is not None:
            sections.append(self.format_ranking(report))
        if report['warnings']:
            sections.append("Warnings\n" + '\n'.join(f"  - {w}" for w in report['warnings']))
        return '\n\n'.join(sections) + '\n'

    def format_measures(self, report):
        rows = []
        for mode, measure in zip(report['modes'], report['measures']):
            rows.append({
                'mode': format_number(decode_number(mode['value'])),
                'mult': mode['multiplicity'],
                'measure': format_number(decode_number(measure['value'])),
                'argmin': _subset_label(measure['argmin_subset']),
                'DFM': 'yes' if measure['dfm'] else 'no',
                'ADFM': 'yes' if measure['adfm'] else 'no',
                'ctrb': 'yes' if mode['controllable'] else 'no',
                'obsv': 'yes' if mode['observable'] else 'no',
            })
        threshold = format_number(report['config']['threshold'])
        return f"ADFM measures (threshold {threshold})\n" + pd.DataFrame(rows).to_string(index=False)

    def format_mmatrix(self, mmatrix):
        entries = [[format_number(decode_number(x)) for x in row] for row in mmatrix['entries']]
        frame = pd.DataFrame(
            entries,
            index=[f"y{k}" for k in range(1, len(entries) + 1)],
            columns=[f"u{k}" for k in range(1, len(entries[0]) + 1)],
        )
        return f"M at sigma={format_number(decode_number(mmatrix['sigma']))}\n" + frame.to_string()

    def format_bipartitions(self, rows):
        frame = pd.DataFrame([
            {
                'eta': _subset_label(row['eta']),
                'gamma': _subset_label(row['gamma']),
                'cost': format_number(decode_number(row['cost'])),
            }
            for row in rows
        ])
        return frame.to_string(index=False)

    def format_candidates(self, report):
        bipartitions = report['bipartitions']
        if bipartitions and 'candidates' in bipartitions[0]:
            blocks = [
                f"Candidate bipartitions at sigma={format_number(decode_number(entry['sigma']))}\n"
                + self.format_bipartitions(entry['candidates'])
                for entry in bipartitions
            ]
            for entry in report['candidates'] or ():
                blocks.append(
                    f"Removal sets at sigma={format_number(decode_number(entry['sigma']))}: "
                    + ' | '.join(entry['removal_sets'])
                )
            return '\n\n'.join(blocks)
        return f"Candidate bipartitions at epsilon={report['config']['epsilon']:g}\n" + self.format_bipartitions(bipartitions)

    def format_perturbation(self, document):
        delta = document['frobenius_delta']
        lines = [
            f"RDFM at sigma={format_number(decode_number(document['sigma']))}, epsilon={document['epsilon']:g}",
            "  bipartitions: " + ', '.join(
                f"eta={_subset_label(b['eta'])} gamma={_subset_label(b['gamma'])}" for b in document['bipartitions']
            ),
            f"  zeroed B~ entries: {len(document['zeroed_b'])}, zeroed C~ entries: {len(document['zeroed_c'])}, "
            f"D blocks adjusted: {len(document['d_adjustments'])}",
            "  Frobenius change: " + ', '.join(f"{name}={value:.6g}" for name, value in delta.items()),
        ]
        verification = document['verification']
        if verification is not None:
            oracle = verification['oracle']
            status = 'verified exact DFM' if verification['verified'] else 'NOT verified'
            lines.append(
                f"  {status}: witness={verification['witness']}, oracle max displacement "
                f"{oracle['max_displacement']:.3e} over {oracle['trials']} trials"
            )
        return '\n'.join(lines)

    def format_ranking(self, report):
        ranking = report['ranking']
        labels = [f"sigma={format_number(decode_number(s))}" for s in ranking['target_modes']]
        rows = []
        for row in ranking['rows']:
            entry = {'pattern': row['pattern']}
            for label, value in zip(labels, row['measures']):
                entry[label] = format_number(decode_number(value))
            entry['worst'] = format_number(decode_number(row['worst_case']))
            entry['sum'] = format_number(decode_number(row['sum']))
            entry['links'] = row['cardinality']
            rows.append(entry)
        return (
            f"Ranking ({ranking['ordering']}; measured on the {ranking['rank_against']} model; "
            f"{ranking['expansion_convention']})\n"
            + pd.DataFrame(rows).to_string(index=False)
            + f"\n\nWinner: {ranking['winner']}"
            + ''.join(f"\nNote: {note}" for note in ranking['notes'])
        )
