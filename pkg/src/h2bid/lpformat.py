"""Plain-text LP files in the CPLEX LP dialect understood by common MILP solvers.

Rows are named ``<tag>.<row>`` so the provenance of every constraint
survives a round trip. Coefficients use ``repr`` floats, which read back
bit-for-bit.
"""
from __future__ import annotations

import io
import re
from pathlib import Path
from typing import TextIO

import numpy as np
import scipy.sparse as sp

from .model import MilpModel

_REL = {"<=": "<=", "==": "=", ">=": ">="}
_REL_BACK = {"<=": "<=", "=<": "<=", "<": "<=", "=": "==", ">=": ">=", "=>": ">=", ">": ">="}
_TERM = re.compile(r"([+-]?)\s*([0-9.eE+\-]+|inf)?\s*([A-Za-z_][\w.#\[\]]*)")


def _num(v: float) -> str:
    if v == np.inf:
        return "+inf"
    if v == -np.inf:
        return "-inf"
    return repr(float(v))


def column_names(model: MilpModel) -> list[str]:
    if model.index is not None:
        return model.index.names()
    return [f"x{j}" for j in range(model.num_vars)]


def _linear(coefs, cols, names) -> str:
    parts = []
    for a, j in zip(coefs, cols):
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {_num(abs(a))} {names[j]}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def write_lp(model: MilpModel, out: TextIO | str | Path) -> None:
    """Write ``model`` (maximization) as an LP file."""
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8") as fh:
            write_lp(model, fh)
        return
    names = column_names(model)
    out.write(f"\\ model {model.name}\n")
    out.write(f"\\ {model.num_vars} columns, {model.num_rows} rows, {int(model.integrality.sum())} binaries\n")
    out.write("Maximize\n")
    nz = np.flatnonzero(model.objective)
    out.write(f" obj: {_linear(model.objective[nz], nz, names) or '0 ' + names[0]}\n")
    out.write("Subject To\n")
    for r, row in enumerate(model.constraints()):
        lhs = _linear(row.coefs, row.cols, names) or f"0 {names[0]}"
        out.write(f" {row.tag}.{r}: {lhs} {_REL[row.sense]} {_num(row.rhs)}\n")
    out.write("Bounds\n")
    for j, name in enumerate(names):
        lo, hi = model.lo[j], model.hi[j]
        if lo == hi:
            out.write(f" {name} = {_num(lo)}\n")
        elif lo == -np.inf and hi == np.inf:
            out.write(f" {name} free\n")
        else:
            out.write(f" {_num(lo)} <= {name} <= {_num(hi)}\n")
    bins = model.binaries
    if len(bins):
        out.write("Binary\n")
        for j in bins:
            out.write(f" {names[j]}\n")
    out.write("End\n")


def dumps(model: MilpModel) -> str:
    buf = io.StringIO()
    write_lp(model, buf)
    return buf.getvalue()


class LpParseError(ValueError):
    pass


def _parse_terms(text: str, lineno: int) -> list[tuple[float, str]]:
    terms = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TERM.match(text, pos)
        if not m or m.end() == pos:
            raise LpParseError(f"line {lineno}: cannot parse {text[pos:]!r}")
        sign, coef, name = m.groups()
        value = float(coef) if coef else 1.0
        terms.append((-value if sign == "-" else value, name))
        pos = m.end()
        while pos < len(text) and text[pos] == " ":
            pos += 1
    return terms


def read_lp(source: TextIO | str | Path) -> tuple[MilpModel, list[str]]:
    """Parse an LP file written by :func:`write_lp`; returns the model and its column names."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        with open(source, encoding="utf-8") as fh:
            return read_lp(fh)
    lines = source.splitlines() if isinstance(source, str) else source.read().splitlines()
    section = None
    name = "model"
    sign = 1.0
    obj_terms: list[tuple[float, str]] = []
    rows: list[tuple[str, list[tuple[float, str]], str, float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    binary: list[str] = []
    order: dict[str, int] = {}

    def seen(var: str) -> None:
        order.setdefault(var, len(order))

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if line.startswith("\\"):
            if line.startswith("\\ model "):
                name = line[len("\\ model "):].strip()
            continue
        if not line:
            continue
        key = line.lower()
        if key in ("maximize", "maximise", "max"):
            section, sign = "obj", 1.0
            continue
        if key in ("minimize", "minimise", "min"):
            section, sign = "obj", -1.0
            continue
        if key in ("subject to", "such that", "st", "s.t."):
            section = "rows"
            continue
        if key == "bounds":
            section = "bounds"
            continue
        if key in ("binary", "binaries", "bin"):
            section = "binary"
            continue
        if key == "end":
            break
        if section == "obj":
            body = line.split(":", 1)[1] if ":" in line else line
            for c, v in _parse_terms(body, lineno):
                seen(v)
                obj_terms.append((sign * c, v))
        elif section == "rows":
            label, _, body = line.partition(":")
            m = re.match(r"(.*?)(<=|>=|=<|=>|=|<|>)\s*(\S+)\s*$", body)
            if not m:
                raise LpParseError(f"line {lineno}: row without relation")
            terms = _parse_terms(m.group(1), lineno)
            for _, v in terms:
                seen(v)
            tag = label.strip().rsplit(".", 1)[0]
            rows.append((tag, terms, _REL_BACK[m.group(2)], float(m.group(3))))
        elif section == "bounds":
            parts = line.split()
            if len(parts) == 2 and parts[1].lower() == "free":
                seen(parts[0])
                bounds[parts[0]] = (-np.inf, np.inf)
            elif len(parts) == 3 and parts[1] == "=":
                seen(parts[0])
                bounds[parts[0]] = (float(parts[2]), float(parts[2]))
            elif len(parts) == 5 and parts[1] == "<=" and parts[3] == "<=":
                seen(parts[2])
                bounds[parts[2]] = (float(parts[0]), float(parts[4]))
            else:
                raise LpParseError(f"line {lineno}: unsupported bound {line!r}")
        elif section == "binary":
            for v in line.split():
                seen(v)
                binary.append(v)
        else:
            raise LpParseError(f"line {lineno}: text outside any section")

    # the Bounds section lists every column in model order; anything else follows first use
    listed = list(bounds)
    names = listed + [v for v in sorted(order, key=order.get) if v not in bounds]
    order = {v: j for j, v in enumerate(names)}
    n = len(names)
    obj = np.zeros(n)
    for c, v in obj_terms:
        obj[order[v]] += c
    data, ri, ci = [], [], []
    for r, (_, terms, _, _) in enumerate(rows):
        for c, v in terms:
            data.append(c)
            ri.append(r)
            ci.append(order[v])
    A = sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n))
    lo, hi = np.zeros(n), np.full(n, np.inf)
    integ = np.zeros(n, dtype=bool)
    for v in binary:
        integ[order[v]] = True
        lo[order[v]], hi[order[v]] = 0.0, 1.0
    for v, (l, h) in bounds.items():
        lo[order[v]], hi[order[v]] = l, h
    model = MilpModel(obj, A, [r[2] for r in rows], [r[3] for r in rows], lo, hi, integ,
                      [r[0] for r in rows], name=name)
    return model, names
