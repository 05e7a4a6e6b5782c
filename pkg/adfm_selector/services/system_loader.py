"""Model documents: loading, validation, serialization, station blocks, PBH checks."""
import json
import logging
from pathlib import Path

import numpy as np
import scipy.linalg

from .. import settings
from ..exceptions import ModelFormatError
from ..models import BlockIndex, CentralReport, ModeReachability, StationPartition, SystemModel
from .spectral import modes

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ('stations', 'A', 'B', 'C')


def _matrix_from_document(name, data):
    # {"real": [[...]], "imag": [[...]]} carries non-real entries
    if isinstance(data, dict):
        if set(data) != {'real', 'imag'}:
            raise ModelFormatError(f"Matrix {name} object must have exactly the keys 'real' and 'imag'")
        try:
            return np.array(data['real'], dtype=float) + 1j * np.array(data['imag'], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ModelFormatError(f"Matrix {name} is not numeric: {exc}") from exc
    if not isinstance(data, list):
        raise ModelFormatError(f"Matrix {name} must be a list of rows")
    return data


def _matrix_to_document(matrix):
    if np.iscomplexobj(matrix):
        return {'real': np.real(matrix).tolist(), 'imag': np.imag(matrix).tolist()}
    return matrix.tolist()


def _parse_stations(data):
    if not isinstance(data, list):
        raise ModelFormatError("'stations' must be a list of {\"inputs\", \"outputs\"} objects")
    stations = []
    for index, entry in enumerate(data, start=1):
        try:
            m_i, r_i = entry['inputs'], entry['outputs']
        except (KeyError, TypeError) as exc:
            raise ModelFormatError(f"Station {index} must define 'inputs' and 'outputs'") from exc
        if isinstance(m_i, bool) or isinstance(r_i, bool) or not isinstance(m_i, int) or not isinstance(r_i, int):
            raise ModelFormatError(f"Station {index} counts must be integers")
        stations.append((m_i, r_i))
    return StationPartition(stations=tuple(stations))


def model_from_document(document, default_name='model'):
    if not isinstance(document, dict):
        raise ModelFormatError("Model document must be a JSON object")
    missing = [key for key in REQUIRED_KEYS if key not in document]
    if missing:
        raise ModelFormatError(f"Model document is missing {', '.join(missing)}")

    partition = _parse_stations(document['stations'])
    D = document.get('D')
    return SystemModel(
        name=str(document.get('name', default_name)),
        A=_matrix_from_document('A', document['A']),
        B=_matrix_from_document('B', document['B']),
        C=_matrix_from_document('C', document['C']),
        D=None if D is None else _matrix_from_document('D', D),
        partition=partition,
    )


def load_model(source):
    """Read a model document from a path or a byte/text stream."""
    if hasattr(source, 'read'):
        raw = source.read()
        default_name = Path(getattr(source, 'name', 'model')).stem
    else:
        path = Path(source)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise ModelFormatError(f"Cannot read model file {path}: {exc.strerror}") from exc
        default_name = path.stem

    try:
        document = json.loads(raw)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"Malformed model document: {exc}") from exc

    model = model_from_document(document, default_name=default_name)
    logger.info(f"Loaded model '{model.name}' | n={model.n} v={model.v} m={model.m} r={model.r}")
    return model


def model_to_document(model):
    return {
        'name': model.name,
        'stations': [{'inputs': m_i, 'outputs': r_i} for m_i, r_i in model.partition.stations],
        'A': _matrix_to_document(model.A),
        'B': _matrix_to_document(model.B),
        'C': _matrix_to_document(model.C),
        'D': _matrix_to_document(model.D),
    }


def dump_model(model, target=None):
    """Serialize to the model document; ``repr`` floats make the round trip exact."""
    text = json.dumps(model_to_document(model), indent=2)
    if target is not None:
        Path(target).write_text(text + '\n', encoding='utf-8')
    return text


def station_blocks(model):
    part = model.partition
    return [
        BlockIndex(station=k, input_range=in_range, output_range=out_range)
        for k, (in_range, out_range) in enumerate(zip(part.input_ranges, part.output_ranges), start=1)
    ]


def _full_rank(matrix, tol):
    s = scipy.linalg.svdvals(matrix)
    return bool(s.size > 0 and s[0] > 0 and s[-1] >= tol * s[0])


def central_check(model, tol=settings.PBH_TOL):
    """PBH rank tests at every mode of A."""
    n = model.n
    identity = np.eye(n)
    entries = []
    for mode in modes(model):
        shifted = model.A - mode.value * identity
        controllable = _full_rank(np.hstack([shifted, model.B]), tol)
        observable = _full_rank(np.vstack([shifted, model.C]), tol)
        entries.append(ModeReachability(
            value=mode.value,
            multiplicity=mode.multiplicity,
            controllable=controllable,
            observable=observable,
        ))

    report = CentralReport(modes=tuple(entries))
    if report.uncontrollable:
        logger.warning(f"Model '{model.name}' has centrally uncontrollable modes {report.uncontrollable}")
    if report.unobservable:
        logger.warning(f"Model '{model.name}' has centrally unobservable modes {report.unobservable}")
    return report
