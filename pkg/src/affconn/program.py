"""Compilation of expression trees to flat evaluation tapes.

A Program is a register machine: the first registers hold variable
values, constants are preloaded, every instruction writes one register.
Identical subtrees share a register (the memo doubles as CSE), so the
tape for a vector of related right-hand sides stays small.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex

OP_ADD = 0
OP_SUB = 1
OP_MUL = 2
OP_DIV = 3
OP_NEG = 4
OP_SIN = 5
OP_COS = 6
OP_EXP = 7
OP_LOG = 8
OP_SQRT = 9
OP_POW = 10

_UNARY_OPS = {ex.Neg: OP_NEG, ex.Sin: OP_SIN, ex.Cos: OP_COS,
              ex.Exp: OP_EXP, ex.Log: OP_LOG, ex.Sqrt: OP_SQRT}
_BINARY_OPS = {ex.Add: OP_ADD, ex.Sub: OP_SUB, ex.Mul: OP_MUL, ex.Div: OP_DIV}


@dataclass
class Program:
    code: np.ndarray       # (n_instr, 4) int64 rows: op, dst, a, b
    reg_init: np.ndarray   # (n_reg,) float64 with constants preloaded
    var_slots: dict        # variable name -> register index
    out_slots: np.ndarray  # (n_out,) int64 registers holding the outputs
    var_order: list

    @property
    def n_reg(self) -> int:
        return self.reg_init.shape[0]


def compile_exprs(exprs, var_order) -> Program:
    """Compile a list of trees over an explicit variable ordering."""
    exprs = list(exprs)
    var_order = list(var_order)
    var_slots = {name: i for i, name in enumerate(var_order)}
    if len(var_slots) != len(var_order):
        raise ValueError("duplicate variable names in var_order")

    consts: dict = {}
    instrs: list = []
    memo: dict = {}
    reg_vals = [0.0] * len(var_order)

    def const_reg(v: float) -> int:
        if v in consts:
            return consts[v]
        reg = len(reg_vals)
        reg_vals.append(v)
        consts[v] = reg
        return reg

    def emit(e: ex.Expr) -> int:
        if e in memo:
            return memo[e]
        if isinstance(e, ex.Const):
            reg = const_reg(e.value)
        elif isinstance(e, ex.Var):
            try:
                reg = var_slots[e.name]
            except KeyError:
                raise ex.ExprError(
                    f"variable '{e.name}' not in compile ordering") from None
        elif type(e) in _UNARY_OPS:
            a = emit(e.a)
            reg = len(reg_vals)
            reg_vals.append(0.0)
            instrs.append((_UNARY_OPS[type(e)], reg, a, 0))
        elif type(e) in _BINARY_OPS:
            a = emit(e.a)
            b = emit(e.b)
            reg = len(reg_vals)
            reg_vals.append(0.0)
            instrs.append((_BINARY_OPS[type(e)], reg, a, b))
        elif isinstance(e, ex.Pow):
            a = emit(e.a)
            b = const_reg(e.exponent)
            reg = len(reg_vals)
            reg_vals.append(0.0)
            instrs.append((OP_POW, reg, a, b))
        else:
            raise TypeError(f"not an expression node: {e!r}")
        memo[e] = reg
        return reg

    out = [emit(e) for e in exprs]
    code = np.array(instrs, dtype=np.int64).reshape(len(instrs), 4)
    return Program(
        code=code,
        reg_init=np.array(reg_vals, dtype=np.float64),
        var_slots=var_slots,
        out_slots=np.array(out, dtype=np.int64),
        var_order=var_order,
    )
