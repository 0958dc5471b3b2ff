"""Life-history panels: education coding, employment outcomes, CSV ingestion."""
from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .exceptions import EmptyPanel, GapInAges, OutOfRange, PanelFormatError

logger = logging.getLogger(__name__)

STATES = ("education", "employment", "unemployment", "out")
PANEL_COLUMNS = ("id", "birth_year", "age", "year", "state", "exited_employment",
                 "displaced", "injured", "pow", "female")
FLAG_COLUMNS = ("exited_employment", "displaced", "injured", "pow", "female")
PRESTIGE_MIN, PRESTIGE_MAX = 18, 78


class SchoolDegree(enum.Enum):
    None8 = "None8"
    Sonderschule8 = "Sonderschule8"
    Hauptschule8 = "Hauptschule8"
    MittlereReife10 = "MittlereReife10"
    Fachhochschulreife12 = "Fachhochschulreife12"
    Abitur13 = "Abitur13"


class VocationalDegree(enum.Enum):
    None0 = "None0"
    AgriHousehold2 = "AgriHousehold2"
    Industrial2 = "Industrial2"
    VocSchool2 = "VocSchool2"
    Commercial3 = "Commercial3"
    Master4 = "Master4"
    AppliedUni4 = "AppliedUni4"
    University5 = "University5"
    Other2 = "Other2"


# minimum years needed to earn each degree
SCHOOL_YEARS = {
    SchoolDegree.None8: 8,
    SchoolDegree.Sonderschule8: 8,
    SchoolDegree.Hauptschule8: 8,
    SchoolDegree.MittlereReife10: 10,
    SchoolDegree.Fachhochschulreife12: 12,
    SchoolDegree.Abitur13: 13,
}
VOCATIONAL_YEARS = {
    VocationalDegree.None0: 0,
    VocationalDegree.AgriHousehold2: 2,
    VocationalDegree.Industrial2: 2,
    VocationalDegree.VocSchool2: 2,
    VocationalDegree.Commercial3: 3,
    VocationalDegree.Master4: 4,
    VocationalDegree.AppliedUni4: 4,
    VocationalDegree.University5: 5,
    VocationalDegree.Other2: 2,
}


@dataclass(frozen=True)
class DegreeCode:
    school: SchoolDegree
    vocational: VocationalDegree


def _lookup(enum_cls, token):
    if isinstance(token, enum_cls):
        return token
    key = str(token).strip().lower()
    for member in enum_cls:
        if member.name.lower() == key:
            return member
    raise ValueError(f"unknown {enum_cls.__name__} token {token!r}")


def parse_degree(school, vocational) -> DegreeCode:
    """Case-insensitive token parse; unknown or missing tokens are rejected."""
    return DegreeCode(_lookup(SchoolDegree, school), _lookup(VocationalDegree, vocational))


def education_years(code: DegreeCode,
                    extra_vocational: Iterable[VocationalDegree] = ()) -> int:
    """School years plus vocational years.

    With several vocational degrees only the longest one counts.
    """
    voc = max([VOCATIONAL_YEARS[code.vocational], *(VOCATIONAL_YEARS[v] for v in extra_vocational)])
    return SCHOOL_YEARS[code.school] + voc


RowsLike = Union[pd.DataFrame, Sequence[tuple]]


def _ages_states(rows: RowsLike) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(rows, pd.DataFrame):
        frame = rows.sort_values("age")
        ages = frame["age"].to_numpy(dtype=int)
        states = frame["state"].to_numpy(dtype=object)
    else:
        pairs = sorted(rows, key=lambda p: p[0])
        ages = np.array([p[0] for p in pairs], dtype=int)
        states = np.array([p[1] for p in pairs], dtype=object)
    if len(ages) > 1 and np.any(np.diff(ages) != 1):
        bad = ages[1:][np.diff(ages) != 1][0]
        raise GapInAges(f"ages are not contiguous (break before age {bad})")
    return ages, states


def years_in_employment(rows: RowsLike, age_lo: int, age_hi: int) -> int:
    """Number of ages in ``[age_lo, age_hi]`` spent in employment."""
    ages, states = _ages_states(rows)
    mask = (ages >= age_lo) & (ages <= age_hi) & (states == "employment")
    return int(mask.sum())


def max_prestige(rows: pd.DataFrame) -> Optional[int]:
    """Highest prestige score over employment rows, ``None`` if never employed."""
    employed = rows[rows["state"] == "employment"]
    if employed.empty:
        return None
    scores = employed["prestige"].dropna()
    if scores.empty:
        return None
    bad = scores[(scores < PRESTIGE_MIN) | (scores > PRESTIGE_MAX)]
    if not bad.empty:
        raise OutOfRange(f"prestige {int(bad.iloc[0])} outside {PRESTIGE_MIN}..{PRESTIGE_MAX}")
    return int(scores.max())


def derive_exit_indicator(rows: RowsLike) -> list[int]:
    """Absorbing 0/1 exit flag per age (sorted ascending).

    Zero through the last employment age and one afterwards; earlier gaps
    stay zero. Without any employment, every age after education is one.
    """
    ages, states = _ages_states(rows)
    employed = np.flatnonzero(states == "employment")
    if employed.size:
        cut = employed[-1] + 1
    else:
        in_school = np.flatnonzero(states == "education")
        cut = in_school[-1] + 1 if in_school.size else 0
    out = np.zeros(len(ages), dtype=int)
    out[cut:] = 1
    return out.tolist()


def agent_outcomes(panel: pd.DataFrame) -> pd.DataFrame:
    """Per-agent summary outcomes (one row per id)."""
    if panel.empty:
        raise EmptyPanel("panel has no rows")
    has_prestige = "prestige" in panel.columns
    has_degrees = {"school_degree", "vocational_degree"} <= set(panel.columns)
    records = []
    for agent_id, rows in panel.groupby("id", sort=True):
        rec = {
            "id": agent_id,
            "birth_year": int(rows["birth_year"].iloc[0]),
            "years_employed_20_55": years_in_employment(rows, 20, 55),
            "years_employed_56_65": years_in_employment(rows, 56, 65),
        }
        exit_flags = derive_exit_indicator(rows)
        ages = np.sort(rows["age"].to_numpy())
        exited = np.flatnonzero(exit_flags)
        rec["exit_age"] = int(ages[exited[0]]) if exited.size else np.nan
        if has_prestige:
            rec["max_prestige"] = max_prestige(rows)
        if has_degrees:
            first = rows.iloc[0]
            rec["education_years"] = education_years(
                parse_degree(first["school_degree"], first["vocational_degree"]))
        records.append(rec)
    return pd.DataFrame.from_records(records)


# --- CSV ingestion -----------------------------------------------------------

def _parse_row(raw: dict, optional: set) -> dict:
    row = {}
    for col in ("id", "birth_year", "age", "year"):
        value = (raw.get(col) or "").strip()
        try:
            row[col] = int(value)
        except ValueError:
            raise ValueError(f"column {col!r}: expected integer, got {value!r}") from None
    state = (raw.get("state") or "").strip().lower()
    if state not in STATES:
        raise ValueError(f"column 'state': unknown token {raw.get('state')!r}")
    row["state"] = state
    for col in FLAG_COLUMNS:
        value = (raw.get(col) or "").strip()
        if value not in ("0", "1"):
            raise ValueError(f"column {col!r}: expected 0/1, got {value!r}")
        row[col] = int(value)
    if row["year"] != row["birth_year"] + row["age"]:
        raise ValueError("year must equal birth_year + age")
    if "prestige" in optional:
        value = (raw.get("prestige") or "").strip()
        if value:
            try:
                score = int(value)
            except ValueError:
                raise ValueError(f"column 'prestige': expected integer, got {value!r}") from None
            if not PRESTIGE_MIN <= score <= PRESTIGE_MAX:
                raise ValueError(f"column 'prestige': {score} outside {PRESTIGE_MIN}..{PRESTIGE_MAX}")
            row["prestige"] = score
        else:
            row["prestige"] = np.nan
    if "school_degree" in optional:
        row["school_degree"] = _lookup(SchoolDegree, raw.get("school_degree") or "").name
    if "vocational_degree" in optional:
        row["vocational_degree"] = _lookup(VocationalDegree, raw.get("vocational_degree") or "").name
    return row


def read_panel_csv(path: Union[str, Path], error_cap: int = 100) -> pd.DataFrame:
    """Load and validate a life-history panel.

    Malformed rows are dropped and logged with their line number; once more
    than ``error_cap`` rows fail the whole file is rejected. The collected
    messages are kept in ``df.attrs["errors"]``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in PANEL_COLUMNS if c not in header]
        if missing:
            raise PanelFormatError([f"line 1: missing columns {missing}"])
        optional = {c for c in ("prestige", "school_degree", "vocational_degree") if c in header}
        rows, errors = [], []
        for raw in reader:
            try:
                rows.append(_parse_row(raw, optional))
            except ValueError as exc:
                errors.append(f"line {reader.line_num}: {exc}")
                if len(errors) > error_cap:
                    raise PanelFormatError(errors) from None
    for msg in errors:
        logger.warning("skipping malformed row, %s", msg)
    if not rows:
        if errors:
            raise PanelFormatError(errors)
        raise EmptyPanel(f"{path} contains no data rows")
    cols = list(PANEL_COLUMNS) + [c for c in ("prestige", "school_degree", "vocational_degree") if c in optional]
    frame = pd.DataFrame.from_records(rows, columns=cols)
    frame.attrs["errors"] = errors
    return frame
