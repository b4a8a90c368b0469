"""Reading, validating and transforming expression matrices and label files.

Everything is normalised to a dense cells-as-rows float64 layout on load.
"""

from __future__ import annotations

import csv
import gzip
import io
import os
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ParseError, ValidationError

FORMATS = ("dense-csv", "dense-tsv", "matrix-market")
ORIENTATIONS = ("genes-as-rows", "cells-as-rows")


def _duplicates(ids):
    return [k for k, v in Counter(ids).items() if v > 1]


@dataclass(frozen=True)
class ExpressionMatrix:
    """M cells by I genes of non-negative expression values."""

    cell_ids: tuple
    gene_ids: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        object.__setattr__(self, "cell_ids", tuple(str(c) for c in self.cell_ids))
        object.__setattr__(self, "gene_ids", tuple(str(g) for g in self.gene_ids))
        if values.ndim != 2:
            raise ValidationError(f"expression values must be 2-D, got shape {values.shape}")
        m, i = values.shape
        if m < 1 or i < 1:
            raise ValidationError(f"expression matrix must have at least one cell and one gene, got {m}x{i}")
        if len(self.cell_ids) != m:
            raise ValidationError(f"{len(self.cell_ids)} cell ids for {m} rows")
        if len(self.gene_ids) != i:
            raise ValidationError(f"{len(self.gene_ids)} gene ids for {i} columns")
        for kind, ids in (("cell", self.cell_ids), ("gene", self.gene_ids)):
            dup = _duplicates(ids)
            if dup:
                raise ValidationError(f"duplicate {kind} ids: {', '.join(dup[:5])}")
        bad = ~np.isfinite(values)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise ValidationError(
                f"non-finite value at cell {self.cell_ids[r]!r}, gene {self.gene_ids[c]!r}"
            )
        neg = values < 0
        if neg.any():
            r, c = np.argwhere(neg)[0]
            raise ValidationError(
                f"negative value {values[r, c]!r} at cell {self.cell_ids[r]!r}, gene {self.gene_ids[c]!r}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    @property
    def n_genes(self) -> int:
        return self.values.shape[1]

    def subset_cells(self, index) -> "ExpressionMatrix":
        index = np.asarray(index, dtype=np.intp)
        return ExpressionMatrix([self.cell_ids[k] for k in index], self.gene_ids, self.values[index])

    def as_table(self) -> "Table":
        return Table(self.cell_ids, self.gene_ids, self.values)


@dataclass(frozen=True)
class LabelVector:
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))

    def __len__(self):
        return len(self.labels)

    @property
    def distinct_types(self) -> list:
        return sorted(set(self.labels))

    def codes(self) -> np.ndarray:
        """Integer codes in sorted-label order."""
        lookup = {lab: k for k, lab in enumerate(self.distinct_types)}
        return np.array([lookup[x] for x in self.labels], dtype=np.intp)


class Table(NamedTuple):
    row_ids: Sequence[str]
    columns: Sequence[str]
    values: np.ndarray


def _open_text(path):
    path = Path(path)
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


def _parse_row(fields, path, lineno, ncols):
    if len(fields) != ncols:
        raise ParseError(f"expected {ncols} fields, found {len(fields)} (ragged row)", path, lineno)
    try:
        return list(map(float, fields[1:]))
    except ValueError:
        for k, tok in enumerate(fields[1:], start=2):
            try:
                float(tok)
            except ValueError:
                raise ParseError(f"non-numeric value {tok!r}", path, lineno, k) from None
        raise


def _read_delimited(path, delimiter):
    """Parse a dense table: first row column ids, first column row ids."""
    with _open_text(path) as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file (missing header)", path, 1) from None
        if len(header) < 2 or any(h.strip() == "" for h in header[1:]):
            raise ParseError("malformed header: need a corner cell plus at least one column id", path, 1)
        ncols = len(header)
        row_ids, rows = [], []
        for lineno, fields in enumerate(reader, start=2):
            if not fields:
                continue
            row_ids.append(fields[0])
            rows.append(_parse_row(fields, path, lineno, ncols))
    if not rows:
        raise ParseError("no data rows", path)
    return row_ids, header[1:], np.array(rows, dtype=np.float64)


def _check_values(values, path, row_offset=2, col_offset=2):
    """Report the first invalid entry in file coordinates (1-based, header included)."""
    bad = ~np.isfinite(values)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ParseError("non-finite value", path, r + row_offset, c + col_offset)
    neg = values < 0
    if neg.any():
        r, c = np.argwhere(neg)[0]
        raise ParseError(f"negative value {values[r, c]!r}", path, r + row_offset, c + col_offset)


def _read_ids(path):
    if not Path(path).exists():
        raise ParseError("missing sibling id file", path)
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\r\n") for line in fh if line.strip()]


def _mtx_stem(path):
    name = Path(path).name
    for suffix in (".gz", ".mtx"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return Path(path).with_name(name)


def _read_matrix_market(path, orientation):
    from scipy.io import mmread
    from scipy.sparse import issparse

    with _open_text(path) as fh:
        first = fh.readline()
    tokens = first.lower().split()
    if len(tokens) < 5 or tokens[0] != "%%matrixmarket" or tokens[1] != "matrix" or tokens[2] != "coordinate":
        raise ParseError(
            "malformed header, expected '%%MatrixMarket matrix coordinate real general'", path, 1
        )
    if tokens[3] not in ("real", "integer") or tokens[4] != "general":
        raise ParseError(f"unsupported matrix market field/symmetry {tokens[3]!r}/{tokens[4]!r}", path, 1)
    try:
        mat = mmread(str(path))
    except (ValueError, IndexError) as exc:
        raise ParseError(f"cannot parse matrix market body: {exc}", path) from None
    if issparse(mat):
        coo = mat.tocoo()
        neg = coo.data < 0
        if neg.any():
            k = np.flatnonzero(neg)[0]
            raise ParseError(
                f"negative value {coo.data[k]!r}", path, column=f"entry ({coo.row[k] + 1}, {coo.col[k] + 1})"
            )
        dense = coo.toarray().astype(np.float64)
    else:
        dense = np.asarray(mat, dtype=np.float64)
    stem = _mtx_stem(path)
    gene_ids = _read_ids(stem.with_name(stem.name + ".genes.txt"))
    cell_ids = _read_ids(stem.with_name(stem.name + ".cells.txt"))
    if orientation == "genes-as-rows":
        dense = dense.T
    m, i = dense.shape
    if len(cell_ids) != m:
        raise ParseError(f"{len(cell_ids)} cell ids but matrix has {m} cells", stem.name + ".cells.txt")
    if len(gene_ids) != i:
        raise ParseError(f"{len(gene_ids)} gene ids but matrix has {i} genes", stem.name + ".genes.txt")
    return cell_ids, gene_ids, dense


def load_expression_matrix(path, format="dense-csv", orientation="genes-as-rows") -> ExpressionMatrix:
    """Load an expression matrix and normalise it to cells-as-rows.

    Parameters
    ----------
    path : path-like
        Dense CSV/TSV (optionally gzipped) or a Matrix Market coordinate file.
        Matrix Market input needs sibling ``<stem>.genes.txt`` and
        ``<stem>.cells.txt`` files with one id per line.
    format : {"dense-csv", "dense-tsv", "matrix-market"}
    orientation : {"genes-as-rows", "cells-as-rows"}
        Layout of the file on disk.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; choose from {FORMATS}")
    if orientation not in ORIENTATIONS:
        raise ValueError(f"unknown orientation {orientation!r}; choose from {ORIENTATIONS}")
    if not Path(path).exists():
        raise FileNotFoundError(path)

    if format == "matrix-market":
        cell_ids, gene_ids, values = _read_matrix_market(path, orientation)
    else:
        row_ids, col_ids, values = _read_delimited(path, "," if format == "dense-csv" else "\t")
        _check_values(values, path)
        if orientation == "genes-as-rows":
            gene_ids, cell_ids, values = row_ids, col_ids, values.T
        else:
            cell_ids, gene_ids = row_ids, col_ids
        for kind, ids in (("row", row_ids), ("column", col_ids)):
            dup = _duplicates(ids)
            if dup:
                raise ParseError(f"duplicate {kind} ids: {', '.join(dup[:5])}", path)
    return ExpressionMatrix(cell_ids, gene_ids, np.ascontiguousarray(values))


def load_labels(path, cell_ids, header=None) -> LabelVector:
    """Read a ``cell_id,label`` file and align it to ``cell_ids``.

    ``header=None`` skips the first line only when it reads ``cell_id,label``.
    """
    mapping = {}
    with _open_text(path) as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields:
                continue
            if lineno == 1:
                looks_like_header = [f.strip().lower() for f in fields] == ["cell_id", "label"]
                if header or (header is None and looks_like_header):
                    continue
            if len(fields) != 2:
                raise ParseError(f"expected 2 fields, found {len(fields)}", path, lineno)
            cid, lab = fields[0], fields[1]
            if cid in mapping:
                raise ParseError(f"duplicate cell id {cid!r}", path, lineno)
            mapping[cid] = lab
    known = set(cell_ids)
    unknown = [c for c in mapping if c not in known]
    if unknown:
        raise ValidationError(f"label file names unknown cell id(s): {', '.join(unknown[:5])}")
    missing = [c for c in cell_ids if c not in mapping]
    if missing:
        raise ValidationError(f"no label for cell id(s): {', '.join(missing[:5])}")
    return LabelVector([mapping[c] for c in cell_ids])


def filter_rare_cell_types(matrix: ExpressionMatrix, labels: LabelVector, min_count: int = 15):
    """Drop cells whose type occurs fewer than ``min_count`` times."""
    if min_count < 1:
        raise ValueError("min_count must be positive")
    if len(labels) != matrix.n_cells:
        raise ValidationError(f"{len(labels)} labels for {matrix.n_cells} cells")
    counts = Counter(labels.labels)
    keep = [k for k, lab in enumerate(labels.labels) if counts[lab] >= min_count]
    if not keep:
        raise ValidationError(f"zero cells remain after removing cell types with fewer than {min_count} cells")
    if len(keep) == matrix.n_cells:
        return matrix, labels
    return matrix.subset_cells(keep), LabelVector([labels.labels[k] for k in keep])


def log_transform(matrix: ExpressionMatrix) -> ExpressionMatrix:
    """Natural log1p of every entry."""
    if (matrix.values < 0).any():
        raise ValidationError("log transform requires non-negative values")
    return ExpressionMatrix(matrix.cell_ids, matrix.gene_ids, np.log1p(matrix.values))


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_matrix_csv(path, table: Table, index_name: str = "cell_id") -> None:
    """Write a real-valued table using shortest round-trip float repr."""
    row_ids, columns, values = table
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] == 0:
        raise ValidationError("cannot write a table with no rows")
    if values.shape != (len(row_ids), len(columns)):
        raise ValidationError(f"table shape {values.shape} does not match {len(row_ids)} ids x {len(columns)} columns")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([index_name, *columns])
    for rid, row in zip(row_ids, values.tolist()):
        writer.writerow([rid, *map(repr, row)])
    atomic_write_text(path, buf.getvalue())


def read_matrix_csv(path) -> Table:
    row_ids, columns, values = _read_delimited(path, ",")
    return Table(row_ids, columns, values)
