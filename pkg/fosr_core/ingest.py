"""
FOSR Ingest Module

Reads observation and covariate CSV files into a Dataset. Errors name the
file line (the header is line 1) or the data row they come from.
"""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from fosr_core.errors import DomainError, InputError
from fosr_core.models import Dataset, Domain, Subject

logger = logging.getLogger(__name__)

SUBJECT_COLUMN = "subject_id"
_NUMBERED = re.compile(r"^(coord|y|x)_(\d+)$")


def _read_table(path: Path | str) -> pd.DataFrame:
    """Read a CSV as strings, dropping blank lines but keeping line numbers in the index."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"file not found: {path}")
    try:
        raw = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError:
        raise InputError(f"{path.name}: line 1: file is empty") from None
    except pd.errors.ParserError as e:
        raise InputError(f"{path.name}: {e}") from None
    except UnicodeDecodeError as e:
        raise InputError(f"{path.name}: not valid UTF-8 ({e.reason})") from None

    raw.columns = [str(c).strip() for c in raw.columns]
    blank = raw.apply(lambda col: col.fillna("").str.strip() == "").all(axis=1)
    raw = raw[~blank]
    if raw.empty:
        raise InputError(f"{path.name}: no data rows after the header")
    return raw


def _numbered_columns(columns: list[str], prefix: str) -> list[str]:
    found = [c for c in columns if c.startswith(f"{prefix}_")]
    expected = [f"{prefix}_{i}" for i in range(1, len(found) + 1)]
    if found != expected:
        raise InputError(
            f"line 1: columns {', '.join(found) or '(none)'} should be "
            f"{', '.join(expected) or prefix + '_1'} in order"
        )
    return found


def _check_header(columns: list[str], prefixes: tuple[str, ...]) -> dict[str, list[str]]:
    if not columns or columns[0] != SUBJECT_COLUMN:
        raise InputError(f"line 1: first column must be '{SUBJECT_COLUMN}'")
    for c in columns[1:]:
        match = _NUMBERED.match(c)
        if not match or match.group(1) not in prefixes:
            raise InputError(f"line 1: unexpected column '{c}'")
    groups = {prefix: _numbered_columns(columns, prefix) for prefix in prefixes}
    for prefix, cols in groups.items():
        if not cols:
            raise InputError(f"line 1: missing column {prefix}_1")
    return groups


def _numeric_block(raw: pd.DataFrame, columns: list[str]) -> np.ndarray:
    """Convert columns to floats, naming the line of the first bad cell."""
    out = np.empty((len(raw), len(columns)))
    for j, col in enumerate(columns):
        text = raw[col].fillna("").str.strip()
        values = pd.to_numeric(text, errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(values)
        if bad.any():
            pos = int(np.argmax(bad))
            line = int(raw.index[pos]) + 2
            raise InputError(f"line {line}: non-numeric value '{text.iloc[pos]}' in column {col}")
        out[:, j] = values
    return out


def _subject_ids(raw: pd.DataFrame) -> pd.Series:
    ids = raw[SUBJECT_COLUMN].fillna("").str.strip()
    empty = ids == ""
    if empty.any():
        line = int(raw.index[int(np.argmax(empty.to_numpy()))]) + 2
        raise InputError(f"line {line}: empty {SUBJECT_COLUMN}")
    return ids


@dataclass
class ObservationTable:
    """Observations grouped by subject, in order of first appearance."""

    domain: Domain
    subject_ids: list[str] = field(default_factory=list)
    locations: dict[str, np.ndarray] = field(default_factory=dict)
    responses: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.subject_ids)

    @property
    def N(self) -> int:
        return sum(v.shape[0] for v in self.locations.values())

    @property
    def L(self) -> int:
        return next(iter(self.responses.values())).shape[1]


def load_observations(path: Path | str, domain: Domain) -> ObservationTable:
    """
    Load scattered observations.

    The header is ``subject_id,coord_1[,...],y_1[,...,y_L]``; the number of
    coordinate columns must match the domain. Rows of one subject may be
    interleaved with others and keep their file order.

    Raises:
        InputError: naming the line for malformed cells, or the data row for
            points that do not lie on the domain.
    """
    raw = _read_table(path)
    groups = _check_header(list(raw.columns), ("coord", "y"))
    coord_cols, y_cols = groups["coord"], groups["y"]
    if len(coord_cols) != domain.ambient_dim:
        raise InputError(
            f"line 1: the {domain} domain needs {domain.ambient_dim} coordinate column(s), "
            f"got {len(coord_cols)}"
        )

    ids = _subject_ids(raw)
    coords = _numeric_block(raw, coord_cols)
    ys = _numeric_block(raw, y_cols)
    try:
        coords = domain.validate_points(coords)
    except DomainError as e:
        row = (e.index or 0) + 1
        line = int(raw.index[row - 1]) + 2
        raise InputError(f"row {row}: {e.reason} (line {line})") from e

    table = ObservationTable(domain=domain)
    id_values = ids.to_numpy()
    for sid in pd.unique(id_values):
        mask = id_values == sid
        table.subject_ids.append(str(sid))
        table.locations[str(sid)] = coords[mask]
        table.responses[str(sid)] = ys[mask]
    logger.info("loaded %d observations of %d subjects (L=%d) from %s",
                table.N, table.n, table.L, Path(path).name)
    return table


def load_covariate_table(path: Path | str) -> tuple[list[str], np.ndarray]:
    """
    Read ``subject_id,x_1,...,x_P`` rows.

    Returns:
        The subject ids in file order and the ``(n, P)`` covariate matrix.

    Raises:
        InputError: on malformed cells or duplicate subject ids.
    """
    raw = _read_table(path)
    x_cols = _check_header(list(raw.columns), ("x",))["x"]
    ids = _subject_ids(raw)
    values = _numeric_block(raw, x_cols)

    duplicated = sorted(set(ids[ids.duplicated()]))
    if duplicated:
        raise InputError(f"duplicate {SUBJECT_COLUMN} in covariates: {', '.join(duplicated)}")
    return ids.tolist(), values


def load_covariates(path: Path | str, observations: ObservationTable) -> Dataset:
    """
    Load per-subject covariates and join them to the observations.

    The header is ``subject_id,x_1,...,x_P`` with exactly one row per
    subject.

    Raises:
        InputError: on duplicate subject ids, or ids present in one file but
            not the other (all offending ids are listed).
    """
    ids, values = load_covariate_table(path)
    by_id = dict(zip(ids, values))
    missing = [sid for sid in observations.subject_ids if sid not in by_id]
    if missing:
        raise InputError(f"no covariates for subject(s): {', '.join(missing)}")
    known = set(observations.subject_ids)
    extra = [sid for sid in ids if sid not in known]
    if extra:
        raise InputError(f"covariates for unknown subject(s): {', '.join(extra)}")

    subjects = [
        Subject(
            subject_id=sid,
            covariates=by_id[sid],
            locations=observations.locations[sid],
            responses=observations.responses[sid],
        )
        for sid in observations.subject_ids
    ]
    return Dataset(observations.domain, subjects)


def load_dataset(observations_path: Path | str, covariates_path: Path | str, domain: Domain) -> Dataset:
    """Load and join an observation file and a covariate file."""
    return load_covariates(covariates_path, load_observations(observations_path, domain))


def load_probe_points(path: Path | str, domain: Domain) -> np.ndarray:
    """
    Read a probe grid with header ``coord_1[,...]``.

    Raises:
        InputError: for malformed cells or points off the domain.
    """
    raw = _read_table(path)
    columns = list(raw.columns)
    for c in columns:
        if not c.startswith("coord_"):
            raise InputError(f"line 1: unexpected column '{c}'")
    coord_cols = _numbered_columns(columns, "coord")
    if len(coord_cols) != domain.ambient_dim:
        raise InputError(
            f"line 1: the {domain} domain needs {domain.ambient_dim} coordinate column(s), "
            f"got {len(coord_cols)}"
        )
    coords = _numeric_block(raw, coord_cols)
    try:
        return domain.validate_points(coords)
    except DomainError as e:
        row = (e.index or 0) + 1
        raise InputError(f"row {row}: {e.reason}") from e
