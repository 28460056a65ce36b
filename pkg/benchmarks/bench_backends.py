"""Compare the bytecode interpreter backends on the two hot kernels.

Times eval_many on a transcendental-heavy expression batch and rk4 on a
coupled transport system, once per backend.  The numba path pays its
compile cost in the warmup run, so the table reflects steady state.

Usage: python benchmarks/bench_backends.py [--points N] [--steps N]
"""

import argparse
import time

import numpy as np

from affconn import expr as ex
from affconn import kernels
from affconn.program import compile_exprs

P = ex.parse


def eval_workload():
    exprs = [
        P("sin(x1)*y1 + cos(x1*y1)"),
        P("exp(-x1^2) * (1 + 0.5*y1)"),
        P("(x1 + 0.5*y1) / (1.8 + sin(y1))"),
        P("log(2 + x1^2) - y1^3"),
        P("x1 + 0.5*y1 - (0.2 - 0.4*y1)*x1"),
        P("sqrt(1 + x1^2 + y1^2)"),
    ]
    return compile_exprs(exprs, ["x1", "y1"])


def rk4_workload():
    # horizontal flow with variational equation: x, y1, y2 = eta
    rhs = [
        P("y1"),
        P("-(x1 + 0.5*y1) - 0.3*(0.2 - 0.4*y1)"),
        P("-0.5*y2 + 0.12*y2*sin(x1)"),
    ]
    return compile_exprs(rhs, ["x1", "y1", "y2"])


def best_of(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=200_000,
                    help="rows for the eval_many batch")
    ap.add_argument("--steps", type=int, default=200_000,
                    help="rk4 step count")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    pts = rng.uniform(-1.0, 1.0, size=(args.points, 2))
    ev_prog = eval_workload()
    rk_prog = rk4_workload()
    y0 = np.array([0.3, 0.1, 1.0])
    h = 1.0 / args.steps

    try:
        kernels.set_backend("numba")
        backends = ["numpy", "numba"]
    except ValueError as err:
        print(f"numba unavailable ({err}); timing numpy only")
        backends = ["numpy"]

    rows = []
    for backend in backends:
        kernels.set_backend(backend)
        # warmup covers the jit compile on the numba path
        kernels.eval_many(ev_prog, pts[:128])
        kernels.rk4(rk_prog, ["x1", "y1", "y2"], y0, 0.0, h, 256)
        t_eval = best_of(lambda: kernels.eval_many(ev_prog, pts),
                         args.repeats)
        t_rk4 = best_of(lambda: kernels.rk4(rk_prog, ["x1", "y1", "y2"],
                                            y0, 0.0, h, args.steps),
                        args.repeats)
        rows.append((backend, t_eval, t_rk4))

    print(f"eval_many: {args.points} points x {ev_prog.out_slots.shape[0]} "
          f"expressions; rk4: {args.steps} steps x 3 states "
          f"(best of {args.repeats})")
    print(f"{'backend':<8} {'eval_many':>12} {'rk4':>12}")
    for backend, t_eval, t_rk4 in rows:
        print(f"{backend:<8} {t_eval*1e3:>10.2f}ms {t_rk4*1e3:>10.2f}ms")
    if len(rows) == 2:
        print(f"{'speedup':<8} {rows[0][1]/rows[1][1]:>11.2f}x "
              f"{rows[0][2]/rows[1][2]:>11.2f}x")


if __name__ == "__main__":
    main()
