"""Text formats: field dumps, iteration logs and legacy VTK export.

Field dump::

    glfield v1
    p=<p> level=<level> N=<N>
    # key=value        (any number of metadata lines)
    <re> <im>          (N lines, 17 significant digits)
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import StructuralError
from .fe_space import ComplexField, FESpace, build_space
from .mesh import build_uniform

MAGIC = "glfield v1"
LOG_COLUMNS = ("iter", "energy", "energy_diff", "beta", "tau", "residual")


def dump_field(u: ComplexField, path, metadata=None) -> None:
    s = u.space
    lines = [MAGIC, f"p={s.degree} level={s.mesh.level} N={s.dof_count}"]
    for key, value in (metadata or {}).items():
        lines.append(f"# {key}={value}")
    c = u.coefficients
    body = "\n".join(f"{z.real:.17g} {z.imag:.17g}" for z in c)
    Path(path).write_text("\n".join(lines) + "\n" + body + "\n")


def _parse_header(line):
    try:
        fields = dict(tok.split("=", 1) for tok in line.split())
        return int(fields["p"]), int(fields["level"]), int(fields["N"])
    except (ValueError, KeyError):
        raise StructuralError(f"malformed field header {line!r}") from None


def load_field(path, space: FESpace = None):
    """Read a field dump.

    Returns
    -------
    field : ComplexField
        On ``space`` if given (its size must match), otherwise on a freshly
        built uniform space of the recorded degree and level.
    metadata : dict
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise StructuralError(f"{path}: not a '{MAGIC}' field dump")
    if len(lines) < 2:
        raise StructuralError(f"{path}: missing header line")
    p, level, n = _parse_header(lines[1])
    meta = {}
    rows = []
    for ln in lines[2:]:
        if ln.startswith("#"):
            key, _, value = ln[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
        elif ln.strip():
            rows.append(ln.split())
    if len(rows) != n:
        raise StructuralError(f"{path}: header declares N={n} but {len(rows)} values follow")
    try:
        data = np.array(rows, dtype=float)
    except ValueError:
        raise StructuralError(f"{path}: non-numeric coefficient line") from None
    if data.shape != (n, 2):
        raise StructuralError(f"{path}: every coefficient line needs 're im'")
    if space is None:
        space = build_space(build_uniform(level), p)
    if space.dof_count != n or space.degree != p:
        raise StructuralError(
            f"{path}: dump has p={p}, N={n}; space has p={space.degree}, N={space.dof_count}"
        )
    return ComplexField(space, data[:, 0] + 1j * data[:, 1]), meta


def write_iteration_log(history, path, metadata=None) -> None:
    """CSV ``iter,energy,energy_diff,beta,tau,residual``, after ``# key=value`` lines."""
    with open(path, "w", newline="") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key}={value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for rec in history:
            w.writerow([rec.iter] + [f"{getattr(rec, k):.17g}" for k in LOG_COLUMNS[1:]])


def read_iteration_log(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))
    return [{k: (int(r[k]) if k == "iter" else float(r[k])) for k in LOG_COLUMNS} for r in rows]


def export_vtk(u: ComplexField, path, title="glfem field") -> None:
    """Legacy ASCII unstructured grid with point arrays ``re``, ``im``, ``abs``.

    P1 fields use linear triangles (cell type 5), P2 fields quadratic
    triangles (type 22), whose node order (vertices, then the midpoints of
    edges 01, 12, 20) coincides with the local dof order.
    """
    s = u.space
    pts = s.dof_points
    cells = s.element_dofs
    ctype = 5 if s.degree == 1 else 22
    c = u.coefficients
    out = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(pts)} double",
    ]
    out += [f"{x:.17g} {y:.17g} 0" for x, y in pts]
    nloc = cells.shape[1]
    out.append(f"CELLS {len(cells)} {len(cells) * (nloc + 1)}")
    out += [f"{nloc} " + " ".join(map(str, row)) for row in cells]
    out.append(f"CELL_TYPES {len(cells)}")
    out += [str(ctype)] * len(cells)
    out.append(f"POINT_DATA {len(pts)}")
    for name, arr in (("re", c.real), ("im", c.imag), ("abs", np.abs(c))):
        out.append(f"SCALARS {name} double 1")
        out.append("LOOKUP_TABLE default")
        out += [f"{v:.17g}" for v in arr]
    Path(path).write_text("\n".join(out) + "\n")


def read_vtk_point_data(path):
    """Minimal reader for files written by :func:`export_vtk` (used in tests)."""
    lines = Path(path).read_text().splitlines()
    data = {}
    npts = None
    i = 0
    while i < len(lines):
        tok = lines[i].split()
        if tok and tok[0] == "POINTS":
            npts = int(tok[1])
        elif tok and tok[0] == "SCALARS":
            name = tok[1]
            data[name] = np.array(lines[i + 2:i + 2 + npts], dtype=float)
            i += 2 + npts
            continue
        i += 1
    return npts, data
