"""Generic MILP container used by the constraint builder.

A model is a list of named variables (with bounds and integrality) and
two-sided linear rows.  Rows that rely on big-M gating keep the gate
expression as metadata so the big-M margin of a solution can be audited
independently of the solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

INF = float("inf")


class ModelError(ValueError):
    pass


@dataclass
class Variable:
    name: str
    lb: float
    ub: float
    integer: bool
    family: str
    index: int


@dataclass
class Row:
    name: str
    coeffs: dict[str, float]
    lb: float
    ub: float
    family: str
    # optional big-M metadata: the row was stated as
    #   lb - M*gate <= base <= ub + M*gate      (gate >= 0 at feasibility)
    gate: dict[str, float] | None = None
    gate_const: float = 0.0


@dataclass
class Solution:
    status: str                    # optimal | infeasible | time_limit | unbounded | error
    objective_value: float | None
    values: dict[str, float]
    solve_time: float = 0.0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal" and self.values is not None


class MilpModel:
    """Linear model with named variables, two-sided rows and a minimization
    objective.  Variable and row order is the (deterministic) insertion
    order."""

    def __init__(self, name: str = "model", big_m: float = 1e4):
        self.name = name
        self.big_m = float(big_m)
        self.variables: dict[str, Variable] = {}
        self.rows: list[Row] = []
        self.objective: dict[str, float] = {}
        self.objective_const = 0.0
        self._row_counter: dict[str, int] = {}

    # -- variables ------------------------------------------------------------
    def add_var(self, name: str, lb: float, ub: float, integer: bool = False,
                family: str = "var") -> str:
        if name in self.variables:
            raise ModelError(f"duplicate variable {name}")
        self.variables[name] = Variable(name, lb, ub, integer, family, len(self.variables))
        return name

    def binary(self, name: str, family: str = "var") -> str:
        return self.add_var(name, 0.0, 1.0, True, family)

    def continuous(self, name: str, lb: float = -INF, ub: float = INF,
                   family: str = "var") -> str:
        return self.add_var(name, lb, ub, False, family)

    def fix(self, name: str, value: float):
        v = self.variables[name]
        v.lb = v.ub = float(value)

    def set_bounds(self, name: str, lb: float | None = None, ub: float | None = None):
        v = self.variables[name]
        if lb is not None:
            v.lb = float(lb)
        if ub is not None:
            v.ub = float(ub)

    # -- rows -------------------------------------------------------------------
    def _row_name(self, family: str) -> str:
        n = self._row_counter.get(family, 0)
        self._row_counter[family] = n + 1
        return f"{family}_{n}"

    def add_row(self, coeffs: dict[str, float], lb: float, ub: float, family: str,
                gate: dict[str, float] | None = None, gate_const: float = 0.0) -> Row:
        for var in coeffs:
            if var not in self.variables:
                raise ModelError(f"row references unknown variable {var}")
        coeffs = {v: c for v, c in coeffs.items() if c != 0.0}
        row = Row(self._row_name(family), coeffs, lb, ub, family, gate, gate_const)
        self.rows.append(row)
        return row

    def add_le(self, coeffs: dict[str, float], ub: float, family: str,
               gate: dict[str, float] | None = None, gate_const: float = 0.0) -> Row:
        """coeffs <= ub + M * gate (gate omitted: plain row)."""
        final = dict(coeffs)
        if gate or gate_const:
            for v, c in (gate or {}).items():
                final[v] = final.get(v, 0.0) - self.big_m * c
        return self.add_row(final, -INF, ub + self.big_m * gate_const, family,
                            gate, gate_const)

    def add_ge(self, coeffs: dict[str, float], lb: float, family: str,
               gate: dict[str, float] | None = None, gate_const: float = 0.0) -> Row:
        """coeffs >= lb - M * gate."""
        final = dict(coeffs)
        if gate or gate_const:
            for v, c in (gate or {}).items():
                final[v] = final.get(v, 0.0) + self.big_m * c
        return self.add_row(final, lb - self.big_m * gate_const, INF, family,
                            gate, gate_const)

    def add_eq(self, coeffs: dict[str, float], rhs: float, family: str) -> Row:
        return self.add_row(coeffs, rhs, rhs, family)

    # -- objective ---------------------------------------------------------------
    def obj_add(self, name: str, coef: float):
        if name not in self.variables:
            raise ModelError(f"objective references unknown variable {name}")
        self.objective[name] = self.objective.get(name, 0.0) + coef

    # -- matrix form ---------------------------------------------------------------
    def to_arrays(self):
        """(c, A, row_lb, row_ub, var_lb, var_ub, integrality, names)"""
        names = list(self.variables)
        idx = {n: i for i, n in enumerate(names)}
        n = len(names)
        c = np.zeros(n)
        for v, coef in self.objective.items():
            c[idx[v]] = coef
        data, ri, ci = [], [], []
        rlb = np.empty(len(self.rows))
        rub = np.empty(len(self.rows))
        for i, row in enumerate(self.rows):
            rlb[i], rub[i] = row.lb, row.ub
            for v, coef in row.coeffs.items():
                ri.append(i)
                ci.append(idx[v])
                data.append(coef)
        a = sp.csr_matrix((data, (ri, ci)), shape=(len(self.rows), n))
        vlb = np.array([self.variables[v].lb for v in names])
        vub = np.array([self.variables[v].ub for v in names])
        integ = np.array([1 if self.variables[v].integer else 0 for v in names])
        return c, a, rlb, rub, vlb, vub, integ, names

    # -- solution auditing -----------------------------------------------------------
    def eval_objective(self, values: dict[str, float]) -> float:
        return self.objective_const + sum(c * values[v] for v, c in self.objective.items())

    def check_solution(self, values: dict[str, float], tol: float = 1e-6) -> list[str]:
        """All bound/integrality/row violations above tol, as messages."""
        bad: list[str] = []
        for v in self.variables.values():
            if v.name not in values:
                bad.append(f"missing value for {v.name}")
                continue
            x = values[v.name]
            scale = max(1.0, abs(v.lb) if v.lb > -INF else 0.0,
                        abs(v.ub) if v.ub < INF else 0.0)
            if x < v.lb - tol * scale or x > v.ub + tol * scale:
                bad.append(f"{v.name}={x} outside [{v.lb}, {v.ub}]")
            if v.integer and abs(x - round(x)) > 1e-5:
                bad.append(f"{v.name}={x} not integral")
        for row in self.rows:
            act = sum(c * values.get(v, 0.0) for v, c in row.coeffs.items())
            scale = max(1.0, *(abs(c) * max(1.0, abs(values.get(v, 0.0)))
                               for v, c in row.coeffs.items())) if row.coeffs else 1.0
            if act < row.lb - tol * scale or act > row.ub + tol * scale:
                bad.append(f"row {row.name}: activity {act} outside [{row.lb}, {row.ub}]")
        return bad

    def check_big_m_margin(self, values: dict[str, float],
                           rel_margin: float = 1e-3) -> list[str]:
        """Audit gated rows: the big-M slack actually consumed must stay a
        relative margin away from the available M * gate budget."""
        bad: list[str] = []
        for row in self.rows:
            if row.gate is None and row.gate_const == 0.0:
                continue
            gate_val = row.gate_const + sum(
                values.get(v, 0.0) * c for v, c in (row.gate or {}).items())
            budget = self.big_m * max(gate_val, 0.0)
            base = {v: c for v, c in row.coeffs.items()}
            for v, c in (row.gate or {}).items():
                if row.ub < INF:
                    base[v] = base.get(v, 0.0) + self.big_m * c
                else:
                    base[v] = base.get(v, 0.0) - self.big_m * c
            act = sum(c * values.get(v, 0.0) for v, c in base.items())
            if row.ub < INF:
                used = act - (row.ub - self.big_m * row.gate_const)
            else:
                used = (row.lb + self.big_m * row.gate_const) - act
            if used > 1e-9 and used > budget * (1.0 - rel_margin) + 1e-9 \
                    and gate_val > 0.5:
                bad.append(f"row {row.name}: big-M slack {used:.6g} of budget {budget:.6g}")
        return bad

    # -- stats -----------------------------------------------------------------------
    def stats(self) -> dict[str, int]:
        return {
            "n_vars": len(self.variables),
            "n_int": sum(1 for v in self.variables.values() if v.integer),
            "n_rows": len(self.rows),
            "n_nonzeros": sum(len(r.coeffs) for r in self.rows),
        }

    def family_row_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rows:
            out[r.family] = out.get(r.family, 0) + 1
        return out

    def family_var_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for v in self.variables.values():
            out[v.family] = out.get(v.family, 0) + 1
        return out


def default_big_m(horizon: int, dt: float, v_max: float, total_link_length: float) -> float:
    """A big-M valid for every gated row in the intersection model."""
    return max(2.0 * horizon * dt * (1.0 + v_max), 2.0 * total_link_length)
