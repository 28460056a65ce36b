"""Shared builders: random evaluable expression trees and small bundles."""

import numpy as np
import pytest

from affconn import expr as ex
from affconn.bundle import AnchorSpec, ChartSpec
from affconn.connection import Connection


def rand_expr(rng, names, depth):
    """Random expression tree that is total on all of R^d.

    Arguments of log, sqrt, pow and divisors are routed through
    1.8 + sin(.) style guards so every generated tree evaluates and
    differentiates everywhere; that keeps finite-difference oracles
    meaningful without per-tree domain bookkeeping.
    """
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.5:
            return ex.Var(names[rng.integers(len(names))])
        return ex.Const(round(float(rng.uniform(-2, 2)), 3))

    def sub():
        return rand_expr(rng, names, depth - 1)

    def guarded():
        return ex.Add(ex.Const(1.8), ex.Sin(sub()))

    roll = rng.integers(10)
    if roll == 0:
        return ex.Add(sub(), sub())
    if roll == 1:
        return ex.Sub(sub(), sub())
    if roll == 2:
        return ex.Mul(sub(), sub())
    if roll == 3:
        return ex.Div(sub(), guarded())
    if roll == 4:
        return ex.Neg(sub())
    if roll == 5:
        return ex.Sin(sub())
    if roll == 6:
        return ex.Cos(sub())
    if roll == 7:
        return ex.Exp(ex.Sin(sub()))
    if roll == 8:
        return ex.Log(guarded())
    exp = int(rng.integers(-3, 4)) or 2
    return ex.Pow(guarded(), float(exp))


def central_diff(e, name, env, h=1e-5):
    hi = dict(env)
    lo = dict(env)
    hi[name] = env[name] + h
    lo[name] = env[name] - h
    return (ex.evaluate(e, hi) - ex.evaluate(e, lo)) / (2 * h)


def chart_11(anchored=False):
    return ChartSpec(n=1, k=1, l=2, anchored_in_E=anchored)


def anchor_11(rho0="1", rho1="x1", anchored=False):
    chart = chart_11(anchored)
    return AnchorSpec(chart, [[ex.parse(rho0), ex.parse(rho1)]])


def conn_11(g0, g1, rho0="1", rho1="x1"):
    anchor = anchor_11(rho0, rho1)
    return Connection(anchor, [[ex.parse(g0), ex.parse(g1)]])


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
