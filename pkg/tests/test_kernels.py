import math

import numpy as np
import pytest

from affconn import expr as ex
from affconn import kernels
from affconn.program import compile_exprs
from conftest import rand_expr

P = ex.parse


@pytest.fixture(params=["numpy", "numba"])
def backend(request):
    old = kernels.active_backend()
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(old)


class TestCompile:
    def test_shares_common_subexpressions(self):
        prog = compile_exprs([P("sin(x1)*sin(x1)"), P("sin(x1) + 1")], ["x1"])
        sin_rows = [row for row in prog.code if row[0] == 5]  # one sin op
        assert len(sin_rows) == 1

    def test_dedupes_constants(self):
        prog = compile_exprs([P("2*x1 + 2")], ["x1"])
        assert list(prog.reg_init).count(2.0) == 1

    def test_unknown_variable_rejected(self):
        with pytest.raises(ex.ExprError):
            compile_exprs([P("x1 + y1")], ["x1"])


class TestEvalMany:
    def test_matches_tree_evaluation(self, backend, rng):
        names = ["x1", "y1", "u"]
        exprs = [rand_expr(rng, names, 4) for _ in range(6)]
        prog = compile_exprs(exprs, names)
        pts = rng.uniform(-0.8, 0.8, size=(40, 3))
        got = kernels.eval_many(prog, pts)
        for j, row in enumerate(pts):
            env = dict(zip(names, row))
            want = [ex.evaluate(e, env) for e in exprs]
            assert got[j] == pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_backends_agree(self, rng):
        names = ["x1", "y1"]
        exprs = [rand_expr(rng, names, 5) for _ in range(4)]
        prog = compile_exprs(exprs, names)
        pts = rng.uniform(-0.8, 0.8, size=(25, 2))
        old = kernels.active_backend()
        try:
            kernels.set_backend("numpy")
            a = kernels.eval_many(prog, pts)
            kernels.set_backend("numba")
            b = kernels.eval_many(prog, pts)
        finally:
            kernels.set_backend(old)
        # transcendental ops may differ by an ulp between libm and numpy
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)

    def test_shape_check(self):
        prog = compile_exprs([P("x1")], ["x1"])
        with pytest.raises(ValueError):
            kernels.eval_many(prog, np.zeros((3, 2)))


class TestRK4:
    def test_exponential_decay(self, backend):
        prog = compile_exprs([P("-2*y1")], ["y1"])
        traj = kernels.rk4(prog, ["y1"], np.array([1.0]), 0.0, 0.001, 1000)
        assert traj[-1, 0] == pytest.approx(math.exp(-2.0), abs=1e-12)

    def test_fourth_order_convergence(self, backend):
        # u' appears through the driven variable; y' = y*sin(u)
        def defect(h):
            n = int(round(1.0 / h))
            prog = compile_exprs([P("y1*sin(u)")], ["y1", "u"])
            traj = kernels.rk4(prog, ["y1"], np.array([1.0]), 0.0, h, n)
            exact = math.exp(1.0 - math.cos(1.0))
            return abs(traj[-1, 0] - exact)

        r = defect(0.05) / defect(0.025)
        assert 12.0 <= r <= 20.0

    def test_blowup_raises_with_step(self, backend):
        prog = compile_exprs([P("y1^2")], ["y1"])
        with pytest.raises(kernels.IntegrationError) as err:
            kernels.rk4(prog, ["y1"], np.array([1.0]), 0.0, 0.01, 200)
        assert err.value.step > 0

    def test_driven_variables(self, backend):
        # y' = a(u) with a fed as a per-stage driver table: a(u) = 3u^2
        h, n = 0.01, 100
        us = h * np.arange(n)
        drv = np.empty((n, 3, 1))
        for j, u in enumerate(us):
            drv[j, 0, 0] = 3 * u ** 2
            drv[j, 1, 0] = 3 * (u + h / 2) ** 2
            drv[j, 2, 0] = 3 * (u + h) ** 2
        prog = compile_exprs([ex.Var("a1")], ["y1", "a1"])
        traj = kernels.rk4(prog, ["y1"], np.array([0.0]), 0.0, h, n,
                           driven=(["a1"], drv))
        assert traj[-1, 0] == pytest.approx(1.0, abs=1e-10)

    def test_u_available_as_variable(self, backend):
        prog = compile_exprs([P("2*u")], ["y1", "u"])
        traj = kernels.rk4(prog, ["y1"], np.array([0.0]), 0.0, 0.01, 100)
        assert traj[-1, 0] == pytest.approx(1.0, abs=1e-12)


class TestBackendSelection:
    def test_set_backend_validates(self):
        with pytest.raises(ValueError):
            kernels.set_backend("cuda")

    def test_active_backend_reports(self):
        old = kernels.active_backend()
        try:
            kernels.set_backend("numpy")
            assert kernels.active_backend() == "numpy"
        finally:
            kernels.set_backend(old)
