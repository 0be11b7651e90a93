import json

import numpy as np
import pytest

from errors import DimensionMismatch, InputError, UnboundedError
from ingest import (body_from_dict, perturbation_from_dict, polytope_from_dict, read_json, wulff_from_dict,
                    write_json)

SQUARE_DOC = {
    'dim': 2,
    'halfspaces': [
        {'normal': [1, 0], 'offset': 1},
        {'normal': [-1, 0], 'offset': 1},
        {'normal': [0, 1], 'offset': 1},
        {'normal': [0, -1], 'offset': 1},
    ],
}


def test_json_round_trip(tmp_path):
    path = tmp_path / 'doc.json'
    write_json({'values': np.arange(3), 'scale': np.float64(0.5)}, path)
    assert read_json(path) == {'values': [0, 1, 2], 'scale': 0.5}


def test_malformed_json(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text('{"halfspaces": [')
    with pytest.raises(InputError, match='invalid JSON'):
        read_json(path)


def test_polytope_document():
    P = polytope_from_dict(SQUARE_DOC)
    assert P.volume == pytest.approx(4.0)
    with pytest.raises(InputError):
        polytope_from_dict({'dim': 2})
    with pytest.raises(InputError):
        polytope_from_dict({'dim': 3, 'halfspaces': SQUARE_DOC['halfspaces']})
    with pytest.raises(UnboundedError):
        polytope_from_dict({'dim': 2, 'halfspaces': SQUARE_DOC['halfspaces'][:3]})


def test_body_documents():
    cells = {'dim': 2, 'cells': [SQUARE_DOC, {'dim': 2, 'halfspaces': [
        {'normal': [1, 0], 'offset': 2}, {'normal': [-1, 0], 'offset': -1},
        {'normal': [0, 1], 'offset': 1}, {'normal': [0, -1], 'offset': 1},
    ]}]}
    body = body_from_dict(cells)
    assert body.volume == pytest.approx(6.0)
    assert sum(p.area for p in body.boundary) == pytest.approx(10.0)
    assert body_from_dict({'polytope': SQUARE_DOC}).volume == pytest.approx(4.0)
    assert body_from_dict(SQUARE_DOC).is_convex_cell


def test_wulff_documents(square):
    assert wulff_from_dict('square') is square
    W = wulff_from_dict(dict(SQUARE_DOC, name='mine'))
    assert W.name == 'mine'
    assert W.volume == pytest.approx(4.0)
    assert wulff_from_dict(square.to_dict()).volume == pytest.approx(square.volume)


def test_perturbation_document():
    W, a = perturbation_from_dict({'base': 'square', 'a': [0.1, 0.0, 0.0, 0.0]})
    assert W.name == 'square'
    assert a.norm_inf == pytest.approx(0.1)
    with pytest.raises(InputError):
        perturbation_from_dict({'a': [0.1]})
    with pytest.raises(DimensionMismatch):
        perturbation_from_dict({'base': 'square', 'a': [0.1]})


def test_stdout_output(capsys):
    write_json({'ok': True})
    assert json.loads(capsys.readouterr().out) == {'ok': True}
