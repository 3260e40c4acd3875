"""Minimal MPS reader used as the round-trip oracle for the exporter."""

from dataclasses import dataclass, field


@dataclass
class MpsModel:
    name: str = ""
    rows: dict = field(default_factory=dict)  # row name -> sense letter
    row_order: list = field(default_factory=list)
    columns: dict = field(default_factory=dict)  # col -> {row: coef}
    col_order: list = field(default_factory=list)
    rhs: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)  # col -> [lb, ub]
    integer: dict = field(default_factory=dict)  # col -> bool

    def matrix_entries(self):
        """Sparse (row, col) -> coefficient map over constraint rows."""
        entries = {}
        for col, rows in self.columns.items():
            for row, coef in rows.items():
                if row != "OBJ" and coef != 0.0:
                    entries[(row, col)] = coef
        return entries

    def objective(self):
        return {
            col: rows["OBJ"]
            for col, rows in self.columns.items()
            if "OBJ" in rows and rows["OBJ"] != 0.0
        }


def read_mps(path) -> MpsModel:
    model = MpsModel()
    section = None
    in_integer = False
    with open(path, encoding="ascii") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line or line.startswith("*"):
                continue
            head = line.split()
            if not line.startswith(" ") and head[0] in (
                "NAME",
                "ROWS",
                "COLUMNS",
                "RHS",
                "RANGES",
                "BOUNDS",
                "ENDATA",
            ):
                section = head[0]
                if section == "NAME" and len(head) > 1:
                    model.name = head[1]
                continue
            fields = line.split()
            if section == "ROWS":
                sense, row = fields
                if sense == "N":
                    continue
                model.rows[row] = sense
                model.row_order.append(row)
            elif section == "COLUMNS":
                if len(fields) >= 3 and fields[1] == "'MARKER'":
                    in_integer = fields[2] == "'INTORG'"
                    continue
                col = fields[0]
                if col not in model.columns:
                    model.columns[col] = {}
                    model.col_order.append(col)
                    model.integer[col] = in_integer
                for pos in range(1, len(fields) - 1, 2):
                    model.columns[col][fields[pos]] = float(fields[pos + 1])
            elif section == "RHS":
                for pos in range(1, len(fields) - 1, 2):
                    model.rhs[fields[pos]] = float(fields[pos + 1])
            elif section == "BOUNDS":
                kind, _, col = fields[0], fields[1], fields[2]
                bounds = model.bounds.setdefault(col, [0.0, float("inf")])
                if kind == "BV":
                    model.bounds[col] = [0.0, 1.0]
                    model.integer[col] = True
                elif kind == "LO":
                    bounds[0] = float(fields[3])
                elif kind == "UP":
                    bounds[1] = float(fields[3])
                elif kind == "FX":
                    bounds[0] = bounds[1] = float(fields[3])
    return model
