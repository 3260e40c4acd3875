"""Deterministic MPS export.

Columns are emitted in lexicographic order of their structured keys, one
coefficient per line, with field widths computed once per file so the
layout stays aligned.  Numbers are written with ``repr`` so a re-parse
recovers every coefficient bit-exactly, and two exports of the same model
are byte-identical.
"""

from __future__ import annotations

_SENSE_TO_ROW = {"<=": "L", ">=": "G", "=": "E"}


def export_mps(model, path, name: str = "MILPNET") -> None:
    order = sorted(model.index.items(), key=lambda kv: kv[0])
    var_order = [idx for _, idx in order]
    if len(var_order) != len(model.variables):
        # Variables without structured keys still need a column.
        known = set(var_order)
        var_order += [i for i in range(len(model.variables)) if i not in known]

    row_names = [f"r{i:07d}" for i in range(len(model.constraints))]
    col_entries = {i: [] for i in range(len(model.variables))}
    for row, con in zip(row_names, model.constraints):
        for idx, coef in con.terms:
            col_entries[idx].append((row, coef))
    for idx, coef in sorted(model.objective.items()):
        col_entries[idx].append(("OBJ", coef))

    name_w = max([8] + [len(v.name) for v in model.variables])
    row_w = max(8, len("OBJ"), 8)

    lines = [f"NAME          {name}"]
    for note in model.cone_notes:
        lines.append(f"* CONE {note}")
    lines.append("ROWS")
    lines.append(" N  OBJ")
    for row, con in zip(row_names, model.constraints):
        lines.append(f" {_SENSE_TO_ROW[con.sense]}  {row}")

    lines.append("COLUMNS")
    in_integer_block = False
    marker_no = 0
    for idx in var_order:
        var = model.variables[idx]
        if var.integer != in_integer_block:
            marker = "INTORG" if var.integer else "INTEND"
            lines.append(
                f"    MARKER{marker_no:04d}  'MARKER'                 '{marker}'"
            )
            marker_no += 1
            in_integer_block = var.integer
        entries = col_entries[idx] or [("OBJ", 0.0)]
        for row, coef in entries:
            lines.append(
                f"    {var.name:<{name_w}}  {row:<{row_w}}  {repr(float(coef))}"
            )
    if in_integer_block:
        lines.append(
            f"    MARKER{marker_no:04d}  'MARKER'                 'INTEND'"
        )

    lines.append("RHS")
    if model.objective_offset:
        lines.append(
            f"    {'RHS':<{name_w}}  {'OBJ':<{row_w}}  {repr(float(-model.objective_offset))}"
        )
    for row, con in zip(row_names, model.constraints):
        lines.append(
            f"    {'RHS':<{name_w}}  {row:<{row_w}}  {repr(float(con.rhs))}"
        )

    lines.append("BOUNDS")
    for idx in var_order:
        var = model.variables[idx]
        if var.integer and var.lb == 0.0 and var.ub == 1.0:
            lines.append(f" BV BND       {var.name}")
        else:
            lines.append(f" LO BND       {var.name:<{name_w}}  {repr(float(var.lb))}")
            lines.append(f" UP BND       {var.name:<{name_w}}  {repr(float(var.ub))}")
    lines.append("ENDATA")

    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
