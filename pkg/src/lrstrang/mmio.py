"""Minimal Matrix Market reader/writer for dense real matrices.

Reads ``array`` and ``coordinate`` files (``real`` / ``integer`` fields,
``general`` / ``symmetric`` / ``skew-symmetric``) and writes ``array``
``real general`` with 17 significant digits, so values round-trip exactly.
Parse failures raise :class:`MatrixMarketError` carrying the line number.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import MatrixMarketError

_FIELDS = ("real", "integer", "double")
_SYMMETRIES = ("general", "symmetric", "skew-symmetric")


def write_mtx(path, M: np.ndarray, comment: str | None = None) -> None:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("only matrices can be written")
    rows, cols = M.shape
    lines = ["%%MatrixMarket matrix array real general"]
    if comment:
        lines.extend("%" + c for c in comment.splitlines())
    lines.append(f"{rows} {cols}")
    # column-major, as the format requires
    lines.extend(f"{v:.17g}" for v in M.ravel(order="F"))
    Path(path).write_text("\n".join(lines) + "\n")


def _number(tok: str, path, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise MatrixMarketError(f"cannot parse number {tok!r}", path, lineno) from None


def read_mtx(path) -> np.ndarray:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MatrixMarketError(str(exc), path) from exc
    lines = text.splitlines()
    if not lines:
        raise MatrixMarketError("empty file", path, 1)

    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket" or header[1].lower() != "matrix":
        raise MatrixMarketError("missing '%%MatrixMarket matrix' banner", path, 1)
    fmt, fld, sym = (h.lower() for h in header[2:])
    if fmt not in ("array", "coordinate"):
        raise MatrixMarketError(f"unsupported format {fmt!r}", path, 1)
    if fld not in _FIELDS:
        raise MatrixMarketError(f"unsupported field {fld!r}", path, 1)
    if sym not in _SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry {sym!r}", path, 1)

    # (line number, tokens) of data lines, comments and blanks skipped
    body = [
        (i + 1, ln.split())
        for i, ln in enumerate(lines[1:], start=1)
        if ln.strip() and not ln.lstrip().startswith("%")
    ]
    if not body:
        raise MatrixMarketError("missing size line", path, len(lines))
    size_line, size = body[0]
    entries = body[1:]

    if fmt == "array":
        if len(size) != 2:
            raise MatrixMarketError("array size line needs 'rows cols'", path, size_line)
        rows, cols = (int(_number(s, path, size_line)) for s in size)
        if sym == "general":
            expected = rows * cols
        else:
            if rows != cols:
                raise MatrixMarketError("symmetric matrix must be square", path, size_line)
            expected = rows * (rows + 1) // 2 if sym == "symmetric" else rows * (rows - 1) // 2
        if len(entries) != expected:
            ln = entries[-1][0] if entries else size_line
            raise MatrixMarketError(f"expected {expected} entries, found {len(entries)}", path, ln)
        vals = []
        for ln, tok in entries:
            if len(tok) != 1:
                raise MatrixMarketError("array entry must be a single value", path, ln)
            vals.append(_number(tok[0], path, ln))
        if sym == "general":
            return np.array(vals, dtype=float).reshape((rows, cols), order="F")
        M = np.zeros((rows, cols))
        it = iter(vals)
        for j in range(cols):
            start = j if sym == "symmetric" else j + 1
            for i in range(start, rows):
                v = next(it)
                M[i, j] = v
                M[j, i] = v if sym == "symmetric" else -v
        return M

    if len(size) != 3:
        raise MatrixMarketError("coordinate size line needs 'rows cols nnz'", path, size_line)
    rows, cols, nnz = (int(_number(s, path, size_line)) for s in size)
    if len(entries) != nnz:
        ln = entries[-1][0] if entries else size_line
        raise MatrixMarketError(f"expected {nnz} entries, found {len(entries)}", path, ln)
    M = np.zeros((rows, cols))
    for ln, tok in entries:
        if len(tok) != 3:
            raise MatrixMarketError("coordinate entry must be 'i j value'", path, ln)
        i, j = int(_number(tok[0], path, ln)), int(_number(tok[1], path, ln))
        if not (1 <= i <= rows and 1 <= j <= cols):
            raise MatrixMarketError(f"index ({i}, {j}) out of range", path, ln)
        v = _number(tok[2], path, ln)
        M[i - 1, j - 1] = v
        if sym != "general" and i != j:
            M[j - 1, i - 1] = v if sym == "symmetric" else -v
    return M
