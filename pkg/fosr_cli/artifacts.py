"""
FOSR CLI Artifacts

Output files of a command are staged in a hidden directory next to their
destination and moved into place only when the command succeeds; on
failure nothing is left behind.
"""

import logging
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

from fosr_core import FittedModel, InputError, RateReport, minimax_rate
from fosr_core.simulate import ErrorRow, error_frame
from fosr_core.tuning import CandidateResult, TraceRow

logger = logging.getLogger(__name__)

PLOT_COLUMNS = ["x", "y", "series"]
ERROR_COLUMNS = ["setting", "n", "m", "rep", "sq_error", "cause"]


class ArtifactWriter:
    """
    Write-temp-then-rename for a command's outputs.

    Use as a context manager; files registered through :meth:`path` or the
    ``write_*`` helpers appear in ``out_dir`` only after a clean exit.
    """

    def __init__(self, out_dir: Path | str):
        self.out_dir = Path(out_dir)
        self.written: list[Path] = []
        self._staging: Path | None = None
        self._created_out_dir = False
        self._names: list[str] = []

    def __enter__(self) -> "ArtifactWriter":
        if not self.out_dir.exists():
            self.out_dir.mkdir(parents=True)
            self._created_out_dir = True
        self._staging = Path(tempfile.mkdtemp(prefix=".fosr-staging-", dir=self.out_dir))
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        staging = self._staging
        self._staging = None
        if exc_type is None:
            for name in self._names:
                target = self.out_dir / name
                os.replace(staging / name, target)
                self.written.append(target)
            shutil.rmtree(staging, ignore_errors=True)
            logger.debug("wrote %d artifact(s) to %s", len(self.written), self.out_dir)
            return

        shutil.rmtree(staging, ignore_errors=True)
        if self._created_out_dir and not any(self.out_dir.iterdir()):
            self.out_dir.rmdir()
        logger.debug("discarded staged artifacts after %s", exc_type.__name__)

    def path(self, name: str) -> Path:
        """Staging path for an output file called ``name``."""
        if self._staging is None:
            raise RuntimeError("ArtifactWriter used outside its context")
        if name not in self._names:
            self._names.append(name)
        return self._staging / name

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.path(name)
        frame.to_csv(path, index=False, lineterminator="\n")
        return path


def plot_frame(series: dict[str, tuple]) -> pd.DataFrame:
    """Long-format plot data: one (x, y) row per point, tagged with its series name."""
    parts = [
        pd.DataFrame({"x": np.asarray(x, dtype=float), "y": np.asarray(y, dtype=float), "series": name})
        for name, (x, y) in series.items()
    ]
    if not parts:
        return pd.DataFrame(columns=PLOT_COLUMNS)
    return pd.concat(parts, ignore_index=True)[PLOT_COLUMNS]


def coefficient_frame(model: FittedModel) -> pd.DataFrame:
    """Columns output, predictor, k (all 1-based) and coefficient."""
    L, P, k0 = model.coefficients.shape
    ll, pp, kk = np.meshgrid(np.arange(L), np.arange(P), np.arange(k0), indexing="ij")
    return pd.DataFrame({
        "output": ll.ravel() + 1,
        "predictor": pp.ravel() + 1,
        "k": kk.ravel() + 1,
        "coefficient": model.coefficients.ravel(),
    })


def coefficient_plot(model: FittedModel) -> pd.DataFrame:
    k = np.arange(1, model.k0 + 1)
    return plot_frame({
        f"beta_l{l + 1}_p{p + 1}": (k, model.coefficients[l, p])
        for l in range(model.L)
        for p in range(model.P)
    })


def trace_frame(trace: tuple[TraceRow, ...]) -> pd.DataFrame:
    return pd.DataFrame(
        [(row.cycle, row.predictor, row.lam, row.gcv, row.dof) for row in trace],
        columns=["cycle", "predictor", "lambda", "gcv", "dof"],
    )


def candidate_frame(candidates: tuple[CandidateResult, ...]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            (
                c.nu,
                c.rho,
                c.score,
                "" if c.penalty is None else ";".join(repr(float(v)) for v in c.penalty),
                c.error or "",
            )
            for c in candidates
        ],
        columns=["nu", "rho", "gcv", "lambda", "error"],
    )


def errors_to_frame(rows: list[ErrorRow]) -> pd.DataFrame:
    return error_frame(rows)[ERROR_COLUMNS]


def read_error_table(path: Path | str) -> pd.DataFrame:
    """
    Read an error table written by ``fosr simulate``.

    Raises:
        InputError: if the file is missing, unreadable or lacks columns.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"error table not found: {path}")
    try:
        frame = pd.read_csv(path)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise InputError(f"{path.name}: {e}") from None
    missing = [c for c in ERROR_COLUMNS[:5] if c not in frame.columns]
    if missing:
        raise InputError(f"{path.name}: line 1: missing column(s) {', '.join(missing)}")
    try:
        frame["sq_error"] = frame["sq_error"].astype(float)
        for col in ("setting", "n", "m", "rep"):
            frame[col] = frame[col].astype(int)
    except (TypeError, ValueError) as e:
        raise InputError(f"{path.name}: {e}") from None
    if "cause" not in frame.columns:
        frame["cause"] = ""
    frame["cause"] = frame["cause"].fillna("").astype(str)
    return frame


def rate_frames(report: RateReport) -> dict[str, pd.DataFrame]:
    """The slope, collapse, transition and plot tables of a rate report."""
    slopes = pd.DataFrame(
        [
            (s.setting, s.m, s.fit.slope, s.fit.stderr, s.fit.n_points,
             report.slow_exponent, report.fast_exponent)
            for s in report.slopes
        ],
        columns=["setting", "m", "slope", "stderr", "n_points", "slow_exponent", "fast_exponent"],
    )
    collapse = pd.DataFrame(
        [
            (c.setting, c.n, ";".join(str(m) for m in c.m_values), c.spread, c.collapsed)
            for c in report.collapse
        ],
        columns=["setting", "n", "m_values", "spread", "collapsed"],
    )
    transition = pd.DataFrame(
        [
            (setting, n, m_star if m_star is not None else np.nan,
             report.transition_exponent)
            for (setting, n), m_star in sorted(report.transition.items())
        ],
        columns=["setting", "n", "m_star", "predicted_exponent"],
    )

    series = {}
    for (setting, m), group in report.means.groupby(["setting", "m"], sort=True):
        n = group["n"].to_numpy(dtype=float)
        observed = group["mean_error"].to_numpy(dtype=float)
        envelope = np.array([minimax_rate(v, m, report.h) for v in n])
        series[f"setting{setting}_m{m}"] = (n, observed)
        # envelope scaled to meet the observed curve at the smallest n
        series[f"setting{setting}_m{m}_envelope"] = (n, envelope * observed[0] / envelope[0])
    return {
        "rates.csv": slopes,
        "collapse.csv": collapse,
        "transition.csv": transition,
        "plot.csv": plot_frame(series),
    }
