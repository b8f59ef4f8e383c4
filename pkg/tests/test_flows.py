import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq
from scipy.stats import norm

import crlflow.diff as D
from crlflow.diff import ParameterSet
from crlflow.flows import (
    CouplingLayer,
    FlowStack,
    PermutationLayer,
    RqSpline,
    SplineConfig,
    TriangularFlow,
    build_flow_stack,
    coupling_apply,
    rq_forward,
    rq_inverse,
    stack_apply,
    triangular_apply,
)


def randomize(params, rng, scale=0.5):
    for _, t in params.trainable():
        t.value = t.value + rng.normal(0, scale, t.value.shape)


def fd_jacobian(f, x, eps=1e-6):
    n = x.shape[1]
    J = np.empty((x.shape[0], n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = eps
        J[:, :, k] = (f(x + e) - f(x - e)) / (2 * eps)
    return J


def test_identity_spline():
    x = np.linspace(-12, 12, 1001)
    y, ld = rq_forward(RqSpline.identity(), x)
    np.testing.assert_allclose(y, x, atol=1e-12)
    np.testing.assert_allclose(ld, 0.0, atol=1e-12)


def test_identity_tails():
    sp = RqSpline.random(np.random.default_rng(0), scale=2.0)
    x = np.array([-50.0, -10.5, 10.000001, 33.0])
    y, ld = rq_forward(sp, x)
    np.testing.assert_array_equal(y, x)
    np.testing.assert_array_equal(ld, 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_spline_inverse_matches_bisection(seed):
    sp = RqSpline.random(np.random.default_rng(seed), scale=1.5)
    x = np.linspace(-9.99, 9.99, 401)
    y, ld = rq_forward(sp, x)
    assert np.all(np.isfinite(ld)) and np.all(np.exp(ld) > 0)
    assert np.all(np.diff(y) > 0)
    xb, _ = rq_inverse(sp, y)
    np.testing.assert_allclose(xb, x, atol=1e-10)
    for yi, xi in zip(y[::40], x[::40]):
        root = brentq(lambda t: rq_forward(sp, np.array([t]))[0][0] - yi, -10, 10, xtol=1e-13)
        assert abs(root - xi) < 1e-9


def test_spline_log_derivative_matches_finite_difference():
    sp = RqSpline.random(np.random.default_rng(7), scale=1.0)
    x = np.linspace(-9.5, 9.5, 97)
    eps = 1e-6
    fd = (rq_forward(sp, x + eps)[0] - rq_forward(sp, x - eps)[0]) / (2 * eps)
    np.testing.assert_allclose(rq_forward(sp, x)[1], np.log(fd), atol=1e-6)


def _layer(dim=3, family="spline", seed=0, spline=SplineConfig()):
    rng = np.random.default_rng(seed)
    ps = ParameterSet()
    layer = CouplingLayer(dim, [0], ps, "c", rng, family=family, hidden=16, spline=spline)
    randomize(ps, rng)
    return layer


@pytest.mark.parametrize("family", ["spline", "affine"])
def test_coupling_pass_through_and_round_trip(family):
    layer = _layer(family=family)
    z = np.random.default_rng(1).normal(scale=2.0, size=(10_000, 3))
    out, ld = coupling_apply(layer, z)
    np.testing.assert_array_equal(out[:, 0], z[:, 0])
    back, ld_inv = coupling_apply(layer, out, "inverse")
    np.testing.assert_allclose(back, z, atol=1e-8)
    np.testing.assert_allclose(ld_inv, -ld, atol=1e-8)


@pytest.mark.parametrize("family", ["spline", "affine"])
def test_coupling_logdet_matches_fd(family):
    layer = _layer(family=family, seed=2)
    z = np.random.default_rng(3).normal(size=(20, 3))
    J = fd_jacobian(lambda a: coupling_apply(layer, a)[0], z)
    fd = np.linalg.slogdet(J)[1]
    ld = coupling_apply(layer, z)[1]
    np.testing.assert_allclose(ld, fd, rtol=1e-5, atol=1e-7)


def test_empty_stack_is_identity():
    z = np.random.default_rng(4).normal(size=(5, 2))
    out, ld = stack_apply(FlowStack([], dim=2), z)
    np.testing.assert_array_equal(out, z)
    np.testing.assert_array_equal(ld, 0.0)


def test_stack_round_trip_and_additivity():
    rng = np.random.default_rng(5)
    ps = ParameterSet()
    fs = build_flow_stack(2, 6, ps, rng, hidden=16)
    randomize(ps, rng, 0.3)
    z = rng.normal(scale=2.0, size=(10_000, 2))
    out, ld = stack_apply(fs, z)
    back, ld_inv = stack_apply(fs, out, "inverse")
    np.testing.assert_allclose(back, z, atol=1e-8)
    np.testing.assert_allclose(ld_inv, -ld, atol=1e-8)
    h, total, parts = fs.forward(D.constant(z[:50]), per_layer=True)
    acc = np.zeros(50)
    for p in parts:
        acc = acc + p.value
    np.testing.assert_array_equal(acc, total.value)


def test_inverse_pair_composes_to_identity():
    layer = _layer(dim=2, seed=6)

    class Inverted:
        dim = 2

        def forward(self, x):
            out, ld = layer.inverse(D.as_tensor(x).value)
            return D.constant(out), D.constant(ld)

    fs = FlowStack([layer, Inverted()], dim=2)
    z = np.random.default_rng(7).normal(size=(200, 2))
    out, ld = stack_apply(fs, z)
    np.testing.assert_allclose(out, z, atol=1e-8)
    np.testing.assert_allclose(ld, 0.0, atol=1e-8)


def test_stack_density_normalizes():
    rng = np.random.default_rng(8)
    ps = ParameterSet()
    fs = build_flow_stack(2, 4, ps, rng, hidden=16, spline=SplineConfig(bound=4.0))
    randomize(ps, rng, 0.1)  # larger perturbations make features finer than the grid
    g = np.linspace(-9, 9, 401)
    A, B = np.meshgrid(g, g, indexing="ij")
    x = np.stack([A.ravel(), B.ravel()], axis=1)
    z, ld = stack_apply(fs, x)
    dens = np.exp(norm.logpdf(z).sum(axis=1) + ld).reshape(A.shape)
    assert np.trapezoid(np.trapezoid(dens, g, axis=1), g) == pytest.approx(1.0, abs=1e-2)


def test_permutation_layer():
    p = PermutationLayer([2, 0, 1])
    z = np.arange(6.0).reshape(2, 3)
    out, _ = p.forward(D.constant(z))
    np.testing.assert_array_equal(p.inverse(out.value)[0], z)


def _triangular(dim, seed):
    rng = np.random.default_rng(seed)
    ps = ParameterSet()
    tf = TriangularFlow(dim, 3, ps, rng, hidden=16)
    randomize(ps, rng, 0.3)
    return tf


def test_triangular_one_dimensional_round_trip():
    tf = _triangular(1, 9)
    eps = np.random.default_rng(10).normal(size=(500, 1))
    z, _ = triangular_apply(tf, eps)
    back, _ = triangular_apply(tf, z, "inverse")
    np.testing.assert_allclose(back, eps, atol=1e-10)


def test_triangular_jacobian_is_lower_triangular():
    tf = _triangular(3, 11)
    eps = np.random.default_rng(12).normal(size=(10, 3))
    J = fd_jacobian(lambda e: triangular_apply(tf, e)[0], eps)
    upper = np.triu_indices(3, 1)
    assert np.max(np.abs(J[:, upper[0], upper[1]])) < 1e-8


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2))
def test_triangular_perturbation_is_causal(i):
    tf = _triangular(3, 13)
    eps = np.random.default_rng(14).normal(size=(20, 3))
    bumped = eps.copy()
    bumped[:, i] += 0.5
    z0, _ = triangular_apply(tf, eps)
    z1, _ = triangular_apply(tf, bumped)
    np.testing.assert_array_equal(z0[:, :i], z1[:, :i])
    assert np.any(z0[:, i:] != z1[:, i:])


def test_triangular_round_trip_and_logdet():
    tf = _triangular(3, 15)
    eps = np.random.default_rng(16).normal(size=(10_000, 3))
    z, ld = triangular_apply(tf, eps)
    back, ld_inv = triangular_apply(tf, z, "inverse")
    np.testing.assert_allclose(back, eps, atol=1e-8)
    np.testing.assert_allclose(ld_inv, -ld, atol=1e-8)
    J = fd_jacobian(lambda e: triangular_apply(tf, e)[0], eps[:10])
    np.testing.assert_allclose(ld[:10], np.linalg.slogdet(J)[1], rtol=1e-5, atol=1e-7)


def test_flow_parameters_reachable_by_gradients():
    rng = np.random.default_rng(17)
    ps = ParameterSet()
    fs = build_flow_stack(2, 2, ps, rng, hidden=8)
    randomize(ps, rng, 0.3)
    X = rng.normal(size=(16, 2))

    def nll(params):
        z, ld = fs.forward(D.constant(X))
        return D.neg(D.mean(D.add(D.tsum(D.mul(-0.5, D.square(z)), axis=1), ld)))

    assert D.grad_check(nll, ps, max_coords=6, rng=rng) <= 1e-4
