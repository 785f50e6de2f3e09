"""LP / MPS export and LP import for MilpModel.

The LP writer emits CPLEX-style LP text with one comment line per
constraint family (count summary) and deterministic variable/row order.
Two-sided rows are written as equalities when lb == ub and split into
``name.lo`` / ``name.hi`` otherwise.  The reader accepts the subset of the
LP format produced by the writer (enough for a lossless round trip) plus
unnamed constraints and arbitrary whitespace.
"""

from __future__ import annotations

import re

from .model import INF, MilpModel


class LpFormatError(ValueError):
    pass


def _num(x: float) -> str:
    return format(x, ".17g")


# ---------------------------------------------------------------------------
# writers


def _expr(coeffs: dict[str, float]) -> str:
    parts: list[str] = []
    for var, coef in coeffs.items():
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_num(abs(coef))} {var}")
    if not parts:
        return "0 __zero__"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def write_lp(model: MilpModel, path: str):
    lines: list[str] = [f"\\ {model.name}", "\\ constraint families:"]
    for fam, cnt in sorted(model.family_row_counts().items()):
        lines.append(f"\\   {fam}: {cnt} rows")
    lines.append("Minimize")
    lines.append(" obj: " + _expr(model.objective))
    lines.append("Subject To")
    for row in model.rows:
        if row.lb == row.ub:
            lines.append(f" {row.name}: {_expr(row.coeffs)} = {_num(row.lb)}")
        else:
            if row.ub < INF:
                lines.append(f" {row.name}.hi: {_expr(row.coeffs)} <= {_num(row.ub)}")
            if row.lb > -INF:
                lines.append(f" {row.name}.lo: {_expr(row.coeffs)} >= {_num(row.lb)}")
    lines.append("Bounds")
    for v in model.variables.values():
        if v.integer and v.lb == 0.0 and v.ub == 1.0:
            continue  # declared in Binary section
        if v.lb == -INF and v.ub == INF:
            lines.append(f" {v.name} free")
        elif v.lb == v.ub:
            lines.append(f" {v.name} = {_num(v.lb)}")
        else:
            lo = "-inf" if v.lb == -INF else _num(v.lb)
            hi = "+inf" if v.ub == INF else _num(v.ub)
            lines.append(f" {lo} <= {v.name} <= {hi}")
    binaries = [v.name for v in model.variables.values()
                if v.integer and v.lb == 0.0 and v.ub == 1.0]
    generals = [v.name for v in model.variables.values()
                if v.integer and not (v.lb == 0.0 and v.ub == 1.0)]
    if binaries:
        lines.append("Binary")
        lines.extend(f" {n}" for n in binaries)
    if generals:
        lines.append("General")
        lines.extend(f" {n}" for n in generals)
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_mps(model: MilpModel, path: str):
    lines = [f"NAME {model.name}", "ROWS", " N obj"]
    for row in model.rows:
        if row.lb == row.ub:
            lines.append(f" E {row.name}")
        elif row.ub < INF and row.lb > -INF:
            lines.append(f" L {row.name}")  # with a RANGES entry below
        elif row.ub < INF:
            lines.append(f" L {row.name}")
        else:
            lines.append(f" G {row.name}")
    by_col: dict[str, list[tuple[str, float]]] = {v: [] for v in model.variables}
    for v, c in model.objective.items():
        by_col[v].append(("obj", c))
    for row in model.rows:
        for v, c in row.coeffs.items():
            by_col[v].append((row.name, c))
    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for v in model.variables.values():
        if v.integer != in_int:
            kind = "INTORG" if v.integer else "INTEND"
            lines.append(f" MARKER{marker} 'MARKER' '{kind}'")
            marker += 1
            in_int = v.integer
        for rname, c in by_col[v.name]:
            lines.append(f" {v.name} {rname} {_num(c)}")
        if not by_col[v.name]:
            lines.append(f" {v.name} obj 0")
    if in_int:
        lines.append(f" MARKER{marker} 'MARKER' 'INTEND'")
    lines.append("RHS")
    for row in model.rows:
        rhs = row.lb if row.ub == INF else row.ub
        if row.lb == row.ub:
            rhs = row.lb
        if rhs != 0.0:
            lines.append(f" rhs {row.name} {_num(rhs)}")
    ranges = [(r.name, r.ub - r.lb) for r in model.rows
              if r.lb > -INF and r.ub < INF and r.lb != r.ub]
    if ranges:
        lines.append("RANGES")
        lines.extend(f" rng {name} {_num(width)}" for name, width in ranges)
    lines.append("BOUNDS")
    for v in model.variables.values():
        if v.integer and v.lb == 0.0 and v.ub == 1.0:
            lines.append(f" BV bnd {v.name}")
            continue
        if v.lb == -INF and v.ub == INF:
            lines.append(f" FR bnd {v.name}")
            continue
        if v.lb == -INF:
            lines.append(f" MI bnd {v.name}")
        elif v.lb != 0.0 or v.integer:
            lines.append(f" LO bnd {v.name} {_num(v.lb)}")
        if v.ub < INF:
            lines.append(f" UP bnd {v.name} {_num(v.ub)}")
    lines.append("ENDATA")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def export_model(model: MilpModel, path: str, fmt: str = "lp"):
    if fmt == "lp":
        write_lp(model, path)
    elif fmt == "mps":
        write_mps(model, path)
    else:
        raise LpFormatError(f"unknown export format {fmt!r}")


# ---------------------------------------------------------------------------
# LP reader

_SECTIONS = {
    "minimize": "objective", "minimise": "objective", "min": "objective",
    "maximize": "maximize", "max": "maximize",
    "subject": "rows", "st": "rows", "s.t.": "rows", "such": "rows",
    "bounds": "bounds", "bound": "bounds",
    "binary": "binary", "binaries": "binary", "bin": "binary",
    "general": "general", "generals": "general", "gen": "general",
    "end": "end",
}

_TERM_RE = re.compile(r"([+-])?\s*(\d+\.?\d*(?:[eE][+-]?\d+)?)?\s*([A-Za-z_!#$%&(),;?@'`{}|~.][A-Za-z0-9_!#$%&(),;?@'`{}|~.]*)")


def _parse_expr(text: str) -> dict[str, float]:
    coeffs: dict[str, float] = {}
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TERM_RE.match(text, pos)
        if not m:
            raise LpFormatError(f"cannot parse expression near {text[pos:pos+30]!r}")
        sign, num, var = m.groups()
        coef = float(num) if num else 1.0
        if sign == "-":
            coef = -coef
        if var != "__zero__":
            coeffs[var] = coeffs.get(var, 0.0) + coef
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return coeffs


def read_lp(path: str) -> MilpModel:
    with open(path) as fh:
        raw = fh.read()
    lines = []
    for line in raw.splitlines():
        line = line.split("\\", 1)[0].rstrip()
        if line.strip():
            lines.append(line)
    model = MilpModel(name="imported")
    section = None
    pending_rows: list[tuple[str, dict[str, float], float, float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    binaries: list[str] = []
    generals: list[str] = []
    buf = ""
    objective: dict[str, float] = {}

    def flush_objective(text: str):
        if ":" in text:
            text = text.split(":", 1)[1]
        objective.update(_parse_expr(text))

    def flush_row(text: str):
        name = None
        if ":" in text:
            name, text = text.split(":", 1)
            name = name.strip()
        m = re.search(r"(<=|>=|=<|=>|=)", text)
        if not m:
            raise LpFormatError(f"constraint without relation: {text!r}")
        op = m.group(1)
        lhs, rhs = text[:m.start()], text[m.end():]
        try:
            rhs_val = float(rhs)
        except ValueError as exc:
            raise LpFormatError(f"non-constant right-hand side: {rhs!r}") from exc
        coeffs = _parse_expr(lhs)
        if op in ("<=", "=<"):
            lo, hi = -INF, rhs_val
        elif op in (">=", "=>"):
            lo, hi = rhs_val, INF
        else:
            lo = hi = rhs_val
        pending_rows.append((name or f"c{len(pending_rows)}", coeffs, lo, hi))

    def dispatch(text: str):
        if not text.strip():
            return
        if section == "objective":
            flush_objective(text)
        elif section == "maximize":
            raise LpFormatError("maximization problems are not supported")
        elif section == "rows":
            flush_row(text)
        elif section == "bounds":
            parse_bound(text)
        elif section == "binary":
            binaries.extend(text.split())
        elif section == "general":
            generals.extend(text.split())

    def parse_bound(text: str):
        toks = text.split()
        def val(tok: str) -> float:
            t = tok.lower().lstrip("+")
            if t in ("-inf", "-infinity"):
                return -INF
            if t in ("inf", "infinity"):
                return INF
            return float(tok)
        if len(toks) == 2 and toks[1].lower() == "free":
            bounds[toks[0]] = (-INF, INF)
        elif len(toks) == 3 and toks[1] == "=":
            bounds[toks[0]] = (val(toks[2]), val(toks[2]))
        elif len(toks) == 5 and toks[1] in ("<=", "=<") and toks[3] in ("<=", "=<"):
            bounds[toks[2]] = (val(toks[0]), val(toks[4]))
        elif len(toks) == 3 and toks[1] in ("<=", "=<"):
            lo = bounds.get(toks[0], (0.0, INF))[0]
            bounds[toks[0]] = (lo, val(toks[2]))
        elif len(toks) == 3 and toks[1] in (">=", "=>"):
            hi = bounds.get(toks[0], (0.0, INF))[1]
            bounds[toks[0]] = (val(toks[2]), hi)
        else:
            raise LpFormatError(f"cannot parse bound line {text!r}")

    # split into logical statements: a new statement starts at a line whose
    # first token is a section keyword or (in rows/objective) contains ':'
    for line in lines:
        word = line.strip().split()[0].rstrip(":").lower()
        if word in _SECTIONS and not (word == "end" and section is None):
            dispatch(buf)
            buf = ""
            section = _SECTIONS[word]
            rest = line.strip()[len(word):].lstrip(": \t")
            if word in ("subject", "such"):  # "subject to" / "such that"
                rest = re.sub(r"^\s*t[oh][a-z]*\s*", "", rest, flags=re.I)
            if rest:
                buf = rest
            continue
        if section in ("rows", "bounds", "binary", "general") and ":" in line:
            dispatch(buf)
            buf = line
        elif section in ("bounds", "binary", "general"):
            dispatch(buf)
            buf = line
        else:
            buf += " " + line
    dispatch(buf)

    names: list[str] = []
    seen: set[str] = set()
    for source in ([objective] + [r[1] for r in pending_rows]
                   + [bounds, dict.fromkeys(binaries), dict.fromkeys(generals)]):
        for n in source:
            if n not in seen:
                seen.add(n)
                names.append(n)
    binset, genset = set(binaries), set(generals)
    for n in names:
        if n in binset:
            lo, hi = bounds.get(n, (0.0, 1.0))
            model.add_var(n, lo, hi, True, "imported")
        elif n in genset:
            lo, hi = bounds.get(n, (0.0, INF))
            model.add_var(n, lo, hi, True, "imported")
        else:
            lo, hi = bounds.get(n, (0.0, INF))
            model.add_var(n, lo, hi, False, "imported")
    for v, c in objective.items():
        model.obj_add(v, c)
    for name, coeffs, lo, hi in pending_rows:
        row = model.add_row(coeffs, lo, hi, "imported")
        row.name = name
    return model


# ---------------------------------------------------------------------------
# solution files


def write_solution_file(path: str, status: str, objective: float | None,
                        values: dict[str, float]):
    lines = [f"status {status}"]
    if objective is not None:
        lines.append(f"objective {_num(objective)}")
    lines.extend(f"{name} {_num(val)}" for name, val in values.items())
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_solution_file(path: str) -> tuple[str, float | None, dict[str, float]]:
    status, objective = "unknown", None
    values: dict[str, float] = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition(" ")
            if key == "status":
                status = val.strip()
            elif key == "objective":
                objective = float(val)
            else:
                values[key] = float(val)
    return status, objective, values
