"""Plain-text column tables with a ``#`` header block.

Layout::

    # csfq 0.1.0
    # command: mc
    # param seed = 7
    # ...
    tau coherence stderr
    1e-06 0.98 0.001

Floats are written in their shortest round-trip form so a table re-read with
:func:`read_table` reproduces the written values exactly.
"""

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from csfq import __version__
from csfq.errors import ParseError


@dataclass
class Table:
    columns: List[str]
    data: np.ndarray
    meta: Dict[str, str] = field(default_factory=dict)

    def column(self, name):
        return self.data[:, self.columns.index(name)]


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def manifest(command, params):
    """Header lines echoing the command and every parameter that affects the output."""
    lines = [f"csfq {__version__}", f"command: {command}"]
    lines += [f"param {k} = {params[k]}" for k in sorted(params)]
    return lines


def format_table(columns, rows, header=()):
    out = [f"# {h}" for h in header]
    out.append(" ".join(columns))
    for r in rows:
        if len(r) != len(columns):
            raise ValueError("row length does not match the column count")
        out.append(" ".join(_fmt(x) for x in r))
    return "\n".join(out) + "\n"


def write_table(path_or_fh, columns, rows, header=()):
    text = format_table(columns, rows, header)
    if hasattr(path_or_fh, "write"):
        path_or_fh.write(text)
    else:
        with open(path_or_fh, "w") as fh:
            fh.write(text)


def parse_table(text) -> Table:
    meta, columns, rows = {}, None, []
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if not s:
            continue
        if s.startswith("#"):
            body = s[1:].strip()
            if body.startswith("param ") and "=" in body:
                k, v = body[6:].split("=", 1)
                meta[k.strip()] = v.strip()
            elif ":" in body:
                k, v = body.split(":", 1)
                meta[k.strip()] = v.strip()
            continue
        if columns is None:
            columns = s.split()
            continue
        parts = s.split()
        if len(parts) != len(columns):
            raise ParseError(f"expected {len(columns)} columns, got {len(parts)}", line=i)
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ParseError(str(exc), line=i) from None
    if columns is None:
        raise ParseError("no column header found")
    data = np.array(rows, dtype=float).reshape(-1, len(columns))
    return Table(columns, data, meta)


def read_table(path) -> Table:
    with open(path) as fh:
        return parse_table(fh.read())
