"""Read and write the JSON documents: polytopes, bodies, Wulff shapes, perturbations."""
import json
import logging
import sys
from pathlib import Path

import numpy as np

from anisotropy import WulffShape
from data_gen import preset
from errors import DegenerateError, InputError
from parallel import PerturbationVector
from polytope import BodyMesh, polytope_from_inequalities
from settings import DEFAULT_TOLERANCES

logger = logging.getLogger(__name__)


def read_json(path):
    """Parse a JSON file ('-' reads stdin); syntax errors become InputError."""
    try:
        text = sys.stdin.read() if str(path) == '-' else Path(path).read_text()
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def write_json(doc, path=None):
    text = json.dumps(doc, indent=2, default=_default)
    if path is None or str(path) == '-':
        sys.stdout.write(text + '\n')
    else:
        Path(path).write_text(text + '\n')
        logger.info("wrote %s", path)


def _default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _rows(doc):
    if not isinstance(doc, dict) or 'halfspaces' not in doc:
        raise InputError("polytope document needs a 'halfspaces' list")
    try:
        normals = np.array([h['normal'] for h in doc['halfspaces']], dtype=float)
        offsets = np.array([h['offset'] for h in doc['halfspaces']], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed halfspace entry: {exc}") from exc
    dim = doc.get('dim', normals.shape[1] if normals.ndim == 2 else None)
    if normals.ndim != 2 or normals.shape[1] != dim:
        raise InputError(f"halfspace normals do not all have dimension {dim}")
    return normals, offsets


def polytope_from_dict(doc, tol=DEFAULT_TOLERANCES):
    polytope = polytope_from_inequalities(*_rows(doc), tol, check_bounded=True)
    if polytope is None:
        raise DegenerateError("polytope document describes an empty or flat set")
    return polytope


def body_from_dict(doc, tol=DEFAULT_TOLERANCES):
    """BodyMesh from either the cell-list or the single-polytope schema."""
    if isinstance(doc, dict) and 'cells' in doc:
        return BodyMesh.from_cells([polytope_from_dict(c, tol) for c in doc['cells']], tol)
    if isinstance(doc, dict) and 'polytope' in doc:
        return BodyMesh.from_polytope(polytope_from_dict(doc['polytope'], tol))
    return BodyMesh.from_polytope(polytope_from_dict(doc, tol))


def wulff_from_dict(doc, tol=DEFAULT_TOLERANCES):
    if isinstance(doc, str):
        return preset(doc)
    normals, offsets = _rows(doc)
    return WulffShape.from_arrays(normals, offsets, doc.get('name', 'custom'), tol)


def perturbation_from_dict(doc, tol=DEFAULT_TOLERANCES):
    """(WulffShape, PerturbationVector) from {"base": ..., "a": [...]}."""
    if not isinstance(doc, dict) or 'base' not in doc or 'a' not in doc:
        raise InputError("perturbation document needs 'base' and 'a'")
    W = wulff_from_dict(doc['base'], tol)
    return W, PerturbationVector(doc['a'], W)
