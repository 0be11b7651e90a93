"""
records.py

Machine-readable residual records emitted by every check, and the pandas
table they collect into.
"""
from dataclasses import asdict, dataclass

import pandas as pd

RECORD_FIELDS = ['check', 'lhs', 'rhs', 'residual', 'pass', 'detail']


@dataclass(frozen=True)
class ResidualRecord:
    check: str
    lhs: float
    rhs: float
    residual: float
    passed: bool
    detail: str = ''

    @classmethod
    def identity(cls, check, lhs, rhs, tol, scale=1.0, detail=''):
        """|lhs - rhs| <= tol * scale."""
        residual = abs(float(lhs) - float(rhs))
        return cls(check, float(lhs), float(rhs), residual, bool(residual <= tol * scale), detail)

    @classmethod
    def inequality(cls, check, lhs, rhs, slack=0.0, detail=''):
        """lhs <= rhs + slack; the residual is lhs - rhs, positive when the bound is exceeded."""
        residual = float(lhs) - float(rhs)
        return cls(check, float(lhs), float(rhs), residual, bool(residual <= slack), detail)

    def to_dict(self):
        doc = asdict(self)
        doc['pass'] = doc.pop('passed')
        return {k: doc[k] for k in RECORD_FIELDS}


def worst(check, records, detail=''):
    """Collapse a batch of records of one check into its worst member."""
    records = list(records)
    if not records:
        return ResidualRecord(check, 0.0, 0.0, 0.0, True, detail or 'no samples')
    failing = [r for r in records if not r.passed]
    pick = max(failing or records, key=lambda r: r.residual)
    note = f"{len(records)} evaluations, {len(failing)} failed"
    return ResidualRecord(check, pick.lhs, pick.rhs, pick.residual, not failing,
                          f"{note}; {detail or pick.detail}".rstrip('; '))


def records_frame(records):
    return pd.DataFrame([r.to_dict() for r in records], columns=RECORD_FIELDS)
