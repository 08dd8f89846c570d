"""
FOSR Persistence Module

Line-oriented text format for fitted models. A format tag and a version
line come first, followed by bracketed sections. Reals are written with
``repr`` (shortest round-trip decimal), so a loaded model predicts bit for
bit what the saved one did.
"""

import logging
from collections.abc import Iterator
from pathlib import Path

import numpy as np

from fosr_core.errors import FormatError, InputError
from fosr_core.models import Domain, KernelFamily, KernelSpec
from fosr_core.solver import FittedModel
from fosr_core.spectra import MercerBasis, Quadrature, analytic_laplacian_spectrum

logger = logging.getLogger(__name__)

FORMAT_TAG = "FOSR-MODEL"
FORMAT_VERSION = 1

SECTIONS = (
    "kernel",
    "quadrature",
    "eigenvalues",
    "node_eigenvectors",
    "penalty",
    "coefficients",
    "summary",
    "notes",
)


def _row(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def _dump_lines(model: FittedModel) -> Iterator[str]:
    basis = model.basis
    kernel = basis.kernel
    quad = basis.quadrature

    yield FORMAT_TAG
    yield f"version {FORMAT_VERSION}"

    yield "[kernel]"
    yield f"family {kernel.family.value}"
    yield f"domain {kernel.domain.name}"
    yield f"smoothness {kernel.smoothness!r}"
    yield f"range {kernel.range!r}"
    yield f"requested_k0 {basis.requested_k0}"

    yield "[quadrature]"
    yield f"size {quad.size}"
    for node, weight in zip(quad.nodes, quad.weights):
        yield f"{_row(node)} {float(weight)!r}"

    yield "[eigenvalues]"
    yield f"count {basis.k0}"
    for value in basis.eigenvalues:
        yield repr(float(value))

    yield "[node_eigenvectors]"
    for row in basis.node_eigenvectors:
        yield _row(row)

    yield "[penalty]"
    yield f"count {model.P}"
    for value in model.penalty:
        yield repr(float(value))

    yield "[coefficients]"
    yield f"shape {model.L} {model.P}"
    for l in range(model.L):
        for p in range(model.P):
            yield _row(model.coefficients[l, p])

    yield "[summary]"
    yield f"objective {float(model.objective_value)!r}"
    yield f"gcv {float(model.gcv_score)!r}"
    yield f"dof {float(model.dof)!r}"

    yield "[notes]"
    for note in model.notes:
        yield note.replace("\n", " ")
    yield "[end]"


def save_model(model: FittedModel, path: Path | str) -> Path:
    """Write a fitted model; returns the path written."""
    path = Path(path)
    path.write_text("\n".join(_dump_lines(model)) + "\n", encoding="utf-8")
    logger.debug("saved model (%s, k0=%d) to %s", model.basis.kernel.describe(), model.k0, path)
    return path


def _split_sections(lines: list[str]) -> dict[str, list[str]]:
    if not lines or lines[0].strip() != FORMAT_TAG:
        raise FormatError(f"missing '{FORMAT_TAG}' tag", section="header")
    if len(lines) < 2 or not lines[1].startswith("version "):
        raise FormatError("missing version line", section="header")
    try:
        version = int(lines[1].split()[1])
    except (IndexError, ValueError):
        raise FormatError(f"bad version line '{lines[1]}'", section="header") from None
    if version != FORMAT_VERSION:
        raise FormatError(
            f"unsupported version {version} (this build reads {FORMAT_VERSION})", section="header"
        )

    sections: dict[str, list[str]] = {}
    current = None
    ended = False
    for line in lines[2:]:
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1]
            if current == "end":
                ended = True
                break
            if current not in SECTIONS:
                raise FormatError("unknown section", section=current)
            sections[current] = []
        elif current is None:
            raise FormatError(f"content before the first section: '{stripped}'", section="header")
        elif stripped or current == "notes":
            sections[current].append(stripped)

    if not ended:
        raise FormatError("file is truncated (no [end] marker)", section=current or "header")
    for name in SECTIONS:
        if name not in sections:
            raise FormatError("section missing", section=name)
    return sections


def _keyed(lines: list[str]) -> dict[str, str]:
    out = {}
    for line in lines:
        key, _, value = line.partition(" ")
        out[key] = value.strip()
    return out


def _floats(line: str, section: str, width: int | None = None) -> np.ndarray:
    try:
        values = np.array([float(tok) for tok in line.split()])
    except ValueError:
        raise FormatError(f"non-numeric entry in '{line[:60]}'", section=section) from None
    if width is not None and values.size != width:
        raise FormatError(f"expected {width} values, got {values.size}", section=section)
    return values


def _count(header: str, key: str, section: str) -> int:
    name, _, value = header.partition(" ")
    if name != key:
        raise FormatError(f"expected '{key} <int>', got '{header}'", section=section)
    try:
        return int(value)
    except ValueError:
        raise FormatError(f"bad {key} '{value}'", section=section) from None


def _block(lines: list[str], section: str, rows: int, width: int) -> np.ndarray:
    if len(lines) != rows:
        raise FormatError(f"expected {rows} rows, got {len(lines)}", section=section)
    if rows == 0:
        return np.empty((0, width))
    return np.vstack([_floats(line, section, width) for line in lines])


def _parse_kernel(lines: list[str]) -> tuple[KernelSpec, int]:
    fields = _keyed(lines)
    try:
        family = KernelFamily(fields["family"])
        domain = Domain.parse(fields["domain"])
        spec = KernelSpec(family, domain, float(fields["smoothness"]), float(fields["range"]))
        requested = int(fields["requested_k0"])
    except KeyError as e:
        raise FormatError(f"missing field {e}", section="kernel") from None
    except (ValueError, InputError) as e:
        raise FormatError(str(e), section="kernel") from None
    return spec, requested


def load_model(path: Path | str) -> FittedModel:
    """
    Read a model written by :func:`save_model`.

    Sobolev bases get their closed-form spectrum rebuilt from the domain and
    k0, so their eigenfunctions evaluate exactly as before.

    Raises:
        FormatError: naming the offending section.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"model file not found: {path}")
    sections = _split_sections(path.read_text(encoding="utf-8").splitlines())

    spec, requested_k0 = _parse_kernel(sections["kernel"])
    domain = spec.domain
    amb = domain.ambient_dim

    quad_lines = sections["quadrature"]
    if not quad_lines:
        raise FormatError("empty section", section="quadrature")
    size = _count(quad_lines[0], "size", "quadrature")
    table = _block(quad_lines[1:], "quadrature", size, amb + 1)
    try:
        quad = Quadrature(domain, table[:, :amb], table[:, amb])
    except InputError as e:
        raise FormatError(str(e), section="quadrature") from None

    eig_lines = sections["eigenvalues"]
    if not eig_lines:
        raise FormatError("empty section", section="eigenvalues")
    k0 = _count(eig_lines[0], "count", "eigenvalues")
    eigenvalues = _block(eig_lines[1:], "eigenvalues", k0, 1)[:, 0]
    if not np.all(eigenvalues > 0):
        raise FormatError("eigenvalues must be positive", section="eigenvalues")

    vectors = _block(sections["node_eigenvectors"], "node_eigenvectors", size, k0)

    pen_lines = sections["penalty"]
    if not pen_lines:
        raise FormatError("empty section", section="penalty")
    P = _count(pen_lines[0], "count", "penalty")
    penalty = _block(pen_lines[1:], "penalty", P, 1)[:, 0]

    coef_lines = sections["coefficients"]
    if not coef_lines or not coef_lines[0].startswith("shape "):
        raise FormatError("missing shape line", section="coefficients")
    try:
        L, P_coef = (int(v) for v in coef_lines[0].split()[1:3])
    except ValueError:
        raise FormatError(f"bad shape line '{coef_lines[0]}'", section="coefficients") from None
    if P_coef != P:
        raise FormatError(f"{P_coef} predictors but {P} penalties", section="coefficients")
    coefficients = _block(coef_lines[1:], "coefficients", L * P, k0).reshape(L, P, k0)

    summary = _keyed(sections["summary"])
    try:
        objective_value = float(summary.get("objective", "nan"))
        gcv = float(summary.get("gcv", "nan"))
        dof = float(summary.get("dof", "nan"))
    except ValueError as e:
        raise FormatError(str(e), section="summary") from None

    spectrum = None
    if spec.family is KernelFamily.SOBOLEV_SPECTRAL:
        spectrum = analytic_laplacian_spectrum(domain, k0)

    basis = MercerBasis(
        kernel=spec,
        quadrature=quad,
        eigenvalues=eigenvalues,
        node_eigenvectors=vectors,
        requested_k0=requested_k0,
        spectrum=spectrum,
    )
    logger.debug("loaded model (%s, k0=%d, L=%d, P=%d) from %s", spec.describe(), k0, L, P, path)
    return FittedModel(
        basis=basis,
        coefficients=coefficients,
        penalty=penalty,
        objective_value=objective_value,
        gcv_score=gcv,
        dof=dof,
        notes=tuple(line for line in sections["notes"] if line),
    )
