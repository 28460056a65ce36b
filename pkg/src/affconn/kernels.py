"""Evaluation backends for compiled tapes.

Two interchangeable implementations of the hot loops: a numba-jitted
path and a pure numpy/Python path.  The environment variable
AFFCONN_BACKEND forces one ("numba" or "numpy"); by default numba is
used when importable.  Both paths follow IEEE semantics (division by
zero yields inf/nan rather than raising); integrators detect non-finite
state and report the failing step.

The integrator is classical fixed-step RK4.  Besides the state it
supports "driven" registers whose values at the stage offsets 0, 1/2, 1
of every step come from a precomputed table; pinned base curves enter
the fibre equations that way when no closed form is available.
"""

from __future__ import annotations

import os

import numpy as np

from .program import (OP_ADD, OP_COS, OP_DIV, OP_EXP, OP_LOG, OP_MUL, OP_NEG,
                      OP_POW, OP_SIN, OP_SQRT, OP_SUB, Program)


class IntegrationError(RuntimeError):
    def __init__(self, step: int, message: str):
        super().__init__(message)
        self.step = step


# --- shared core bodies (compiled by numba, executed directly by numpy) ----

def _tape_eval(code, regs):
    for i in range(code.shape[0]):
        op = code[i, 0]
        d = code[i, 1]
        a = code[i, 2]
        b = code[i, 3]
        if op == OP_ADD:
            regs[d] = regs[a] + regs[b]
        elif op == OP_SUB:
            regs[d] = regs[a] - regs[b]
        elif op == OP_MUL:
            regs[d] = regs[a] * regs[b]
        elif op == OP_DIV:
            regs[d] = regs[a] / regs[b]
        elif op == OP_NEG:
            regs[d] = -regs[a]
        elif op == OP_SIN:
            regs[d] = np.sin(regs[a])
        elif op == OP_COS:
            regs[d] = np.cos(regs[a])
        elif op == OP_EXP:
            regs[d] = np.exp(regs[a])
        elif op == OP_LOG:
            regs[d] = np.log(regs[a])
        elif op == OP_SQRT:
            regs[d] = np.sqrt(regs[a])
        else:
            regs[d] = regs[a] ** regs[b]


def _rhs_eval(code, regs, u_slot, u, state_slots, y, drv_slots, drv_row,
              out_slots, out):
    if u_slot >= 0:
        regs[u_slot] = u
    for i in range(state_slots.shape[0]):
        regs[state_slots[i]] = y[i]
    for i in range(drv_slots.shape[0]):
        regs[drv_slots[i]] = drv_row[i]
    _tape_eval(code, regs)
    for i in range(out_slots.shape[0]):
        out[i] = regs[out_slots[i]]


def _rk4_core(code, reg_init, u_slot, state_slots, out_slots, y0, u0, h,
              nsteps, drv_slots, drv_vals):
    d = y0.shape[0]
    traj = np.full((nsteps + 1, d), np.nan)
    traj[0] = y0
    regs = reg_init.copy()
    y = y0.copy()
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    yt = np.empty(d)
    for j in range(nsteps):
        u = u0 + j * h
        _rhs_eval(code, regs, u_slot, u, state_slots, y,
                  drv_slots, drv_vals[j, 0], out_slots, k1)
        for i in range(d):
            yt[i] = y[i] + 0.5 * h * k1[i]
        _rhs_eval(code, regs, u_slot, u + 0.5 * h, state_slots, yt,
                  drv_slots, drv_vals[j, 1], out_slots, k2)
        for i in range(d):
            yt[i] = y[i] + 0.5 * h * k2[i]
        _rhs_eval(code, regs, u_slot, u + 0.5 * h, state_slots, yt,
                  drv_slots, drv_vals[j, 1], out_slots, k3)
        for i in range(d):
            yt[i] = y[i] + h * k3[i]
        _rhs_eval(code, regs, u_slot, u + h, state_slots, yt,
                  drv_slots, drv_vals[j, 2], out_slots, k4)
        ok = True
        for i in range(d):
            y[i] = y[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not np.isfinite(y[i]):
                ok = False
        traj[j + 1] = y
        if not ok:
            return traj, j + 1
    return traj, -1


def _eval_many_loop(code, reg_init, var_slots, pts, out_slots):
    npts = pts.shape[0]
    nout = out_slots.shape[0]
    out = np.empty((npts, nout))
    regs = reg_init.copy()
    for p in range(npts):
        for i in range(var_slots.shape[0]):
            regs[var_slots[i]] = pts[p, i]
        _tape_eval(code, regs)
        for i in range(nout):
            out[p, i] = regs[out_slots[i]]
    return out


# --- numpy backend ---------------------------------------------------------

def _eval_many_numpy(code, reg_init, var_slots, pts, out_slots):
    # Vectorized over points: registers become rows of length npts.
    npts = pts.shape[0]
    regs = np.repeat(reg_init[:, None], npts, axis=1)
    for i in range(var_slots.shape[0]):
        regs[var_slots[i]] = pts[:, i]
    with np.errstate(all="ignore"):
        for i in range(code.shape[0]):
            op, d, a, b = code[i]
            if op == OP_ADD:
                regs[d] = regs[a] + regs[b]
            elif op == OP_SUB:
                regs[d] = regs[a] - regs[b]
            elif op == OP_MUL:
                regs[d] = regs[a] * regs[b]
            elif op == OP_DIV:
                regs[d] = regs[a] / regs[b]
            elif op == OP_NEG:
                regs[d] = -regs[a]
            elif op == OP_SIN:
                regs[d] = np.sin(regs[a])
            elif op == OP_COS:
                regs[d] = np.cos(regs[a])
            elif op == OP_EXP:
                regs[d] = np.exp(regs[a])
            elif op == OP_LOG:
                regs[d] = np.log(regs[a])
            elif op == OP_SQRT:
                regs[d] = np.sqrt(regs[a])
            else:
                regs[d] = regs[a] ** regs[b]
    out = np.empty((npts, out_slots.shape[0]))
    for i in range(out_slots.shape[0]):
        out[:, i] = regs[out_slots[i]]
    return out


def _rk4_numpy(*args):
    with np.errstate(all="ignore"):
        return _rk4_core(*args)


# --- numba backend ---------------------------------------------------------

_NUMBA_FUNCS = None


def _numba_funcs():
    global _NUMBA_FUNCS
    if _NUMBA_FUNCS is None:
        import numba

        jit = numba.njit(cache=True, error_model="numpy")
        tape = jit(_tape_eval)

        def rhs_eval(code, regs, u_slot, u, state_slots, y, drv_slots,
                     drv_row, out_slots, out):
            if u_slot >= 0:
                regs[u_slot] = u
            for i in range(state_slots.shape[0]):
                regs[state_slots[i]] = y[i]
            for i in range(drv_slots.shape[0]):
                regs[drv_slots[i]] = drv_row[i]
            tape(code, regs)
            for i in range(out_slots.shape[0]):
                out[i] = regs[out_slots[i]]

        rhs = numba.njit(error_model="numpy")(rhs_eval)

        def rk4_body(code, reg_init, u_slot, state_slots, out_slots, y0, u0,
                     h, nsteps, drv_slots, drv_vals):
            d = y0.shape[0]
            traj = np.full((nsteps + 1, d), np.nan)
            traj[0] = y0
            regs = reg_init.copy()
            y = y0.copy()
            k1 = np.empty(d)
            k2 = np.empty(d)
            k3 = np.empty(d)
            k4 = np.empty(d)
            yt = np.empty(d)
            for j in range(nsteps):
                u = u0 + j * h
                rhs(code, regs, u_slot, u, state_slots, y,
                    drv_slots, drv_vals[j, 0], out_slots, k1)
                for i in range(d):
                    yt[i] = y[i] + 0.5 * h * k1[i]
                rhs(code, regs, u_slot, u + 0.5 * h, state_slots, yt,
                    drv_slots, drv_vals[j, 1], out_slots, k2)
                for i in range(d):
                    yt[i] = y[i] + 0.5 * h * k2[i]
                rhs(code, regs, u_slot, u + 0.5 * h, state_slots, yt,
                    drv_slots, drv_vals[j, 1], out_slots, k3)
                for i in range(d):
                    yt[i] = y[i] + h * k3[i]
                rhs(code, regs, u_slot, u + h, state_slots, yt,
                    drv_slots, drv_vals[j, 2], out_slots, k4)
                ok = True
                for i in range(d):
                    y[i] = y[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i]
                                               + 2.0 * k3[i] + k4[i])
                    if not np.isfinite(y[i]):
                        ok = False
                traj[j + 1] = y
                if not ok:
                    return traj, j + 1
            return traj, -1

        def eval_many_body(code, reg_init, var_slots, pts, out_slots):
            npts = pts.shape[0]
            nout = out_slots.shape[0]
            out = np.empty((npts, nout))
            regs = reg_init.copy()
            for p in range(npts):
                for i in range(var_slots.shape[0]):
                    regs[var_slots[i]] = pts[p, i]
                tape(code, regs)
                for i in range(nout):
                    out[p, i] = regs[out_slots[i]]
            return out

        _NUMBA_FUNCS = {
            "rk4": numba.njit(error_model="numpy")(rk4_body),
            "eval_many": numba.njit(error_model="numpy")(eval_many_body),
        }
    return _NUMBA_FUNCS


# --- backend selection ------------------------------------------------------

def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def _default_backend() -> str:
    env = os.environ.get("AFFCONN_BACKEND", "").strip().lower()
    if env in ("numba", "numpy"):
        return env
    if env not in ("", "auto"):
        raise ValueError(
            f"AFFCONN_BACKEND must be 'numba' or 'numpy', got {env!r}")
    return "numba" if _numba_available() else "numpy"


_ACTIVE = None


def active_backend() -> str:
    global _ACTIVE
    if _ACTIVE is None:
        _ACTIVE = _default_backend()
    return _ACTIVE


def set_backend(name: str):
    """Force a backend ('numba' or 'numpy'); used by tests and benchmarks."""
    global _ACTIVE
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not _numba_available():
        raise ValueError("numba backend requested but numba is not importable")
    _ACTIVE = name


# --- public entry points ----------------------------------------------------

_EMPTY_SLOTS = np.empty(0, dtype=np.int64)


def eval_many(program: Program, pts: np.ndarray) -> np.ndarray:
    """Evaluate the program at many points; rows follow program.var_order."""
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != len(program.var_order):
        raise ValueError(
            f"points must be (m, {len(program.var_order)}) for variables "
            f"{program.var_order}")
    var_slots = np.arange(len(program.var_order), dtype=np.int64)
    if active_backend() == "numba":
        fn = _numba_funcs()["eval_many"]
        return fn(program.code, program.reg_init, var_slots, pts,
                  program.out_slots)
    return _eval_many_numpy(program.code, program.reg_init, var_slots, pts,
                            program.out_slots)


def rk4(program: Program, state_names, y0, u0: float, h: float, nsteps: int,
        driven=None):
    """Integrate the program outputs as the time derivative of the state.

    ``state_names`` map trajectory columns to program variables, in
    order; outputs must line up with them.  ``driven`` is an optional
    (names, values) pair where values has shape (nsteps, 3, m): the
    driven variables at the stage offsets 0, 1/2, 1 of each step.
    Returns the (nsteps+1, d) trajectory.  Raises IntegrationError at
    the first non-finite step.
    """
    y0 = np.ascontiguousarray(y0, dtype=np.float64)
    if y0.shape != (len(state_names),):
        raise ValueError("state dimension mismatch")
    if program.out_slots.shape[0] != len(state_names):
        raise ValueError("program output count does not match the state")
    state_slots = np.array([program.var_slots[n] for n in state_names],
                           dtype=np.int64)
    u_slot = program.var_slots.get("u", -1)
    if driven is None:
        drv_slots = _EMPTY_SLOTS
        drv_vals = np.zeros((nsteps, 3, 0))
    else:
        names, drv_vals = driven
        drv_slots = np.array([program.var_slots[n] for n in names],
                             dtype=np.int64)
        drv_vals = np.ascontiguousarray(drv_vals, dtype=np.float64)
        if drv_vals.shape != (nsteps, 3, len(names)):
            raise ValueError("driver table shape mismatch")
    if active_backend() == "numba":
        fn = _numba_funcs()["rk4"]
        traj, bad = fn(program.code, program.reg_init, u_slot, state_slots,
                       program.out_slots, y0, float(u0), float(h),
                       int(nsteps), drv_slots, drv_vals)
    else:
        traj, bad = _rk4_numpy(program.code, program.reg_init, u_slot,
                               state_slots, program.out_slots, y0, float(u0),
                               float(h), int(nsteps), drv_slots, drv_vals)
    if bad >= 0:
        raise IntegrationError(
            bad, f"integration produced a non-finite state at step {bad}")
    return traj
