import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nleig import GraphTV, GridDomain, build_grid_graph
from nleig.core import DegenerateInputError, DomainError
from nleig.evaluation import theta
from nleig.flows import FlowConfig
from nleig.functionals import ProxConfig
from nleig.power import (OperatorT, bhpg_run, linear_power_run, linear_power_step,
                         median_filter_apply, naive_nonlinear_power_step, parse_signal_text,
                         rayleigh_dagger, relaxed_residual)
from oracles import dense_top_eig

G16 = GridDomain(16, 16)
J16 = GraphTV(build_grid_graph(G16), 1)


def test_linear_step_identity():
    u = np.array([3.0, 4.0])
    assert np.allclose(linear_power_step(np.eye(2), u), [0.6, 0.8])
    with pytest.raises(DegenerateInputError):
        linear_power_step(np.zeros((2, 2)), u)


def test_linear_power_diag():
    res = linear_power_run(np.diag([3.0, 1.0]), [1.0, 1.0], FlowConfig(epsilon=1e-12, max_outer_iterations=10000))
    assert res.lambda_star == pytest.approx(3.0, abs=1e-10)
    assert abs(abs(res.u_star[0]) - 1) <= 1e-10


@pytest.mark.parametrize("seed", range(3))
def test_linear_power_random_symmetric(seed):
    rng = np.random.default_rng(seed)
    Qm, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    A = Qm @ np.diag([5.0, 3.0, 2.0, 1.0, 0.5]) @ Qm.T
    lam, v = dense_top_eig(A)
    res = linear_power_run(A, rng.standard_normal(5), FlowConfig(epsilon=1e-13, max_outer_iterations=20000))
    assert res.lambda_star == pytest.approx(lam, abs=1e-8)
    assert min(np.linalg.norm(res.u_star - v), np.linalg.norm(res.u_star + v)) <= 1e-8


def test_naive_step_linear_matches():
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    u = np.array([1.0, -0.5])
    assert np.allclose(naive_nonlinear_power_step(OperatorT.from_matrix(A), u), linear_power_step(A, u))


def test_naive_step_preserves_eigenfunction(rect_eig, grid64):
    f, lam = rect_eig
    _, J = grid64
    T = OperatorT.prox_denoiser(J, 0.5 / lam)
    u1 = naive_nonlinear_power_step(T, f)
    assert theta(f, u1) < 1e-4


def test_naive_steps_decrease_J():
    T = OperatorT.prox_denoiser(J16, 0.3)
    u = np.random.default_rng(0).standard_normal(G16.n)
    Js = [J16(u)]
    for _ in range(15):
        u = naive_nonlinear_power_step(T, u)
        Js.append(J16(u))
    # iterates have unit norm and approach the normalized constant, where J
    # settles at the prox accuracy floor
    acc = 2 * ProxConfig().accuracy
    assert np.all(np.diff(Js) <= acc * np.array(Js[:-1]) + 1e-8)


def test_rayleigh_dagger_examples():
    rng = np.random.default_rng(0)
    u = rng.standard_normal(10)
    assert rayleigh_dagger(u, 2 * u) == pytest.approx(2.0)
    assert rayleigh_dagger(u, u + 7.0) == pytest.approx(1.0)
    c = u - u.mean()
    v = rng.standard_normal(10)
    v -= v.mean()
    v -= (v @ c) / (c @ c) * c
    assert rayleigh_dagger(u, v) == pytest.approx(0.0, abs=1e-12)
    assert relaxed_residual(u, 2 * u + 1) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DegenerateInputError):
        rayleigh_dagger(np.ones(4), np.ones(4))


def test_prox_operator_preserves_mean():
    T = OperatorT.prox_denoiser(J16, 0.7)
    u = np.random.default_rng(2).standard_normal(G16.n) + 3.0
    assert abs(T(u).mean() - u.mean()) <= 1e-6 * np.abs(u).sum() / G16.n


def test_operator_length_contract():
    T = OperatorT("custom", lambda u: u[:-1])
    with pytest.raises(DomainError):
        T(np.ones(4))
    with pytest.raises(DomainError):
        OperatorT.from_matrix(np.ones((2, 3)))


def test_mean_one_eigenvalue():
    # a positive constant is a fixed point of a mean-preserving prox: T(u) = 1 * u
    T = OperatorT.prox_denoiser(J16, 0.5)
    u = np.full(G16.n, 2.5)
    Tu = T(u)
    lam = (Tu @ u) / (u @ u)
    assert lam == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(Tu, u)


def test_median_filter():
    g = GridDomain(7, 7)
    assert np.allclose(median_filter_apply(np.full(g.n, 2.0), g), 2.0)
    imp = np.zeros(g.n)
    imp[24] = 9.0
    assert np.allclose(median_filter_apply(imp, g), 0.0)
    ramp = np.tile(np.arange(7.0), 7)
    out = median_filter_apply(ramp, g).reshape(7, 7)
    assert np.allclose(out[1:-1, 1:-1], ramp.reshape(7, 7)[1:-1, 1:-1])
    d1 = GridDomain(9)
    x = np.arange(9.0)
    assert np.allclose(median_filter_apply(x, d1), x)
    with pytest.raises(ValueError):
        median_filter_apply(x, d1, 4)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_bhpg_loop_invariants(seed):
    u0 = np.random.default_rng(seed).standard_normal(G16.n) + 0.5
    res = bhpg_run(OperatorT.prox_denoiser(J16, 1.0), u0, FlowConfig(max_outer_iterations=30))
    r0 = np.linalg.norm(u0 - u0.mean())
    assert max(abs(r.centered_norm - r0) for r in res.history) <= 1e-12 * r0
    Js = np.array([r.J for r in res.history])
    assert np.all(np.diff(Js) <= 2 * ProxConfig().accuracy * Js[:-1])
    # the prox preserves the mean, so the mean never moves
    assert max(abs(r.mean - u0.mean()) for r in res.history) <= 1e-9


def test_bhpg_shift_invariance():
    u0 = np.random.default_rng(4).standard_normal(G16.n)
    cfg = FlowConfig(max_outer_iterations=3000, epsilon=1e-8)
    a = bhpg_run(OperatorT.prox_denoiser(J16, 1.0), u0, cfg)
    b = bhpg_run(OperatorT.prox_denoiser(J16, 1.0), u0 + 5.0, cfg)
    assert np.max(np.abs(b.u_star - (a.u_star + 5.0))) <= 1e-5
    assert b.lambda_star == pytest.approx(a.lambda_star, rel=1e-5)


def test_bhpg_linear_matches_eigh():
    n = 8
    Qm, _ = np.linalg.qr(np.column_stack([np.ones(n), np.random.default_rng(0).standard_normal((n, n - 1))]))
    # ones carries eigenvalue 1; the top eigenvalue 5 belongs to a zero-mean vector
    A = Qm @ np.diag([1.0, 5.0, 3.0, 2.5, 2.0, 1.5, 1.2, 0.8]) @ Qm.T
    lam, v = dense_top_eig(A)
    res = bhpg_run(OperatorT.from_matrix(A), np.random.default_rng(1).standard_normal(n),
                   FlowConfig(epsilon=1e-12, max_outer_iterations=20000))
    c = res.u_star - res.u_star.mean()
    c /= np.linalg.norm(c)
    assert res.lambda_star == pytest.approx(lam, abs=1e-6)
    assert min(np.linalg.norm(c - v), np.linalg.norm(c + v)) <= 1e-6


def test_bhpg_rejects_constant():
    with pytest.raises(DegenerateInputError):
        bhpg_run(OperatorT.from_matrix(np.eye(3)), np.ones(3))


def test_custom_operator_subprocess(tmp_path):
    script = tmp_path / "halve.py"
    script.write_text(
        "import sys\n"
        "rows = sys.stdin.read().split()[1:]\n"
        "print('node_id,value')\n"
        "for r in rows:\n"
        "    k, v = r.split(',')\n"
        "    print(f'{k},{float(v) / 2!r}')\n")
    T = OperatorT.custom([sys.executable, str(script)], n=4)
    assert np.allclose(T(np.array([2.0, 4.0, -6.0, 0.5])), [1.0, 2.0, -3.0, 0.25])
    bad = OperatorT.custom([sys.executable, "-c", "import sys; sys.exit(3)"], n=2)
    with pytest.raises(RuntimeError):
        bad(np.ones(2))


def test_parse_signal_text():
    assert np.allclose(parse_signal_text("1.5\n2.5\n", 2), [1.5, 2.5])
    assert np.allclose(parse_signal_text("node_id,value\n1,3\n0,4\n", 2), [4, 3])
    with pytest.raises(DomainError):
        parse_signal_text("1\n", 2)
