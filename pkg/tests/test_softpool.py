import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from poolbench.pooling import (
    PoolSpec,
    finite_difference_gradient,
    max_relative_error,
    pool_forward,
    softmax_weights,
    softpool3d_backward,
    softpool3d_forward,
    softpool_backward,
    softpool_forward,
)
from poolbench.tensor import GeometryError, PoolGeometry, output_shape

from reference import naive_exact_backward, naive_pool, naive_weighted_backward, softpool_region

PAPER = PoolSpec("softpool")
EXACT = PoolSpec("softpool", grad_mode="exact_jacobian")
TOL = {np.float32: 1e-6, np.float64: 1e-12}


def test_softmax_weights_examples():
    np.testing.assert_allclose(softmax_weights([1.0, 2.0]), [0.26894, 0.73106], atol=1e-5)
    for c in (-7.5, 0.0, 3.0, 1e6):
        np.testing.assert_array_equal(softmax_weights([c] * 4), [0.25] * 4)
    w = softmax_weights([0.0, 1000.0])
    assert np.all(np.isfinite(w))
    assert w[0] < 1e-300 and w[1] == 1.0


def test_softmax_weights_rejects_bad_input():
    with pytest.raises(ValueError):
        softmax_weights([])
    with pytest.raises(ValueError):
        softmax_weights([1.0, np.inf])


def test_forward_pair():
    x = np.array([[[1.0, 2.0]]])
    res = softpool_forward(x, PoolGeometry.make((1, 2)))
    assert res.output.shape == (1, 1, 1)
    assert abs(res.output[0, 0, 0] - 1.73106) < 1e-5
    np.testing.assert_allclose(res.saved_weights[0, 0, 0], [0.26894, 0.73106], atol=1e-5)


def test_forward_zero_and_equal_regions():
    out = softpool_forward(np.zeros((1, 4, 4), np.float32), PoolGeometry.square(2)).output
    np.testing.assert_array_equal(out, np.zeros((1, 2, 2)))
    for v in (-3.25, 0.1, 7.0, 1e30):
        for dt in (np.float32, np.float64):
            x = np.full((1, 1, 2), v, dtype=dt)
            assert softpool_forward(x, PoolGeometry.make((1, 2))).output[0, 0, 0] == dt(v)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("k,s,p", [(2, 2, 0), (3, 1, 0), (3, 2, 1), (2, 1, 1)])
def test_forward_matches_reference(dtype, k, s, p, gen):
    x = gen.standard_normal((3, 9, 8)).astype(dtype)
    geom = PoolGeometry.square(k, s, p)
    res = softpool_forward(x, geom)
    ref = naive_pool(x, geom, "softpool")
    np.testing.assert_allclose(res.output, ref, rtol=1e-5 if dtype == np.float32 else 1e-12, atol=1e-6)
    sums = res.saved_weights.astype(np.float64).sum(axis=-1)
    assert np.max(np.abs(sums - 1)) <= TOL[dtype]


def test_saved_weights_shape_and_padding_slots():
    x = np.arange(9, dtype=np.float64).reshape(1, 3, 3)
    res = softpool_forward(x, PoolGeometry.square(2, 2, padding=1))
    assert res.saved_weights.shape == (1, 2, 2, 4)
    # corner region holds just cell 0; its other three slots are padding
    np.testing.assert_array_equal(res.saved_weights[0, 0, 0], [0, 0, 0, 1])


def test_large_magnitudes_stay_finite():
    x = np.array([[[1e30, -1e30], [3e38, 3e38]]], dtype=np.float32)
    out = softpool_forward(x, PoolGeometry.make((1, 2))).output
    assert np.all(np.isfinite(out))
    assert out[0, 0, 0] == np.float32(1e30) and out[0, 1, 0] == np.float32(3e38)


def test_clamp_floor_guards_denominator():
    spec = PoolSpec("softpool", clamp_floor=4.0)
    w = softpool_forward(np.zeros((1, 1, 2)), PoolGeometry.make((1, 2)), spec).saved_weights
    np.testing.assert_array_equal(w[0, 0, 0], [0.25, 0.25])
    with pytest.raises(ValueError):
        PoolSpec("softpool", clamp_floor=0.0)


regions_st = arrays(np.float64, st.integers(2, 9), elements=st.floats(-50, 50, allow_nan=False))


@settings(max_examples=200, deadline=None)
@given(regions_st)
def test_bracketing(v):
    x = v.reshape(1, 1, -1)
    geom = PoolGeometry.make((1, v.size))
    sp = softpool_forward(x, geom).output.item()
    avg = pool_forward(x, geom, PoolSpec("average")).output.item()
    mx = v.max()
    tol = 1e-12 * max(1.0, abs(mx))
    assert avg - tol <= sp <= mx
    if np.ptp(v) > 1e-6:
        assert avg < sp < mx or np.isclose(sp, mx, rtol=0, atol=tol)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float32, (2, 6, 6), elements=st.floats(-10, 10, width=32)), st.floats(-100, 100, width=32))
def test_shift_equivariance(x, c):
    geom = PoolGeometry.square(2)
    a = softpool_forward(x, geom).output
    b = softpool_forward(x + np.float32(c), geom).output
    np.testing.assert_allclose(b, a + np.float32(c), atol=1e-5 * max(1.0, abs(c)))


def _distinct(gen, n):
    # distinct values on a 0.1 grid to bound min spacing
    return gen.choice(np.arange(0, 3, 0.1), size=n, replace=False)


@pytest.mark.parametrize("n", [2, 4, 9])
def test_temperature_limits(n, gen):
    for _ in range(50):
        v = _distinct(gen, n)
        x = v.reshape(1, 1, -1)
        geom = PoolGeometry.make((1, n))
        hot = softpool_forward(100 * x, geom).output.item() / 100
        cold = softpool_forward(1e-4 * x, geom).output.item() / 1e-4
        assert abs(hot - v.max()) < 1e-3
        assert abs(cold - v.mean()) < 1e-3


def test_backward_constant_region_both_modes():
    x = np.full((1, 1, 2), 3.0)
    up = np.ones((1, 1, 1))
    geom = PoolGeometry.make((1, 2))
    np.testing.assert_array_equal(softpool_backward(x, up, geom, PAPER), [[[0.5, 0.5]]])
    np.testing.assert_array_equal(softpool_backward(x, up, geom, EXACT), [[[0.5, 0.5]]])


def test_backward_pair_exact_matches_oracle():
    x = np.array([[[1.0, 2.0]]])
    geom = PoolGeometry.make((1, 2))
    g = softpool_backward(x, np.ones((1, 1, 1)), geom, EXACT)
    fd = finite_difference_gradient(x, geom, EXACT, 1e-5)
    assert max_relative_error(g, fd) < 1e-6


@pytest.mark.parametrize("k,s,p", [(2, 2, 0), (2, 1, 0), (3, 1, 0), (3, 2, 1), (3, 1, 2)])
def test_exact_backward_matches_naive(k, s, p, gen):
    x = gen.standard_normal((2, 7, 6))
    geom = PoolGeometry.square(k, s, p)
    up = gen.standard_normal(output_shape(x.shape, geom))
    np.testing.assert_allclose(softpool_backward(x, up, geom, EXACT), naive_exact_backward(x, up, geom),
                               rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("k,s,p", [(2, 2, 0), (3, 1, 0), (3, 2, 1), (2, 1, 1)])
def test_overlap_additivity_proportional_mode(dtype, k, s, p, gen):
    x = gen.standard_normal((2, 8, 7)).astype(dtype)
    geom = PoolGeometry.square(k, s, p)
    res = softpool_forward(x, geom)
    up = gen.standard_normal(res.output.shape).astype(dtype)
    got = softpool_backward(x, up, geom, PAPER, res)
    ref = naive_weighted_backward(x, res.saved_weights, up, geom)
    assert got.tobytes() == ref.tobytes()


def test_backward_without_result_recomputes():
    x = np.random.default_rng(1).standard_normal((1, 4, 4))
    geom = PoolGeometry.square(2, 1)
    up = np.ones(output_shape(x.shape, geom))
    a = softpool_backward(x, up, geom, PAPER)
    b = softpool_backward(x, up, geom, PAPER, softpool_forward(x, geom))
    np.testing.assert_array_equal(a, b)


def test_backward_shape_mismatch():
    with pytest.raises(GeometryError):
        softpool_backward(np.zeros((1, 4, 4)), np.zeros((1, 3, 2)), PoolGeometry.square(2))


@pytest.mark.parametrize("spec", [PAPER, EXACT])
@pytest.mark.parametrize("k,s,p", [(2, 2, 0), (3, 1, 1), (2, 3, 0)])
def test_gradient_liveness(spec, k, s, p, gen):
    x = gen.uniform(-3, 3, (2, 8, 8))
    geom = PoolGeometry.square(k, s, p)
    up = gen.uniform(0.5, 1.5, output_shape(x.shape, geom))
    g = softpool_backward(x, up, geom, spec)
    covered = np.zeros(x.size, bool)
    from poolbench.tensor import regions

    for r in regions(x.shape, geom):
        covered[r] = True
    covered = covered.reshape(x.shape)
    assert np.all(g[covered] != 0)
    assert np.all(g[~covered] == 0)


def test_max_backward_is_not_live(gen):
    from poolbench.pooling import max_backward

    x = gen.uniform(-3, 3, (1, 6, 6))
    g = max_backward(x, np.ones((1, 3, 3)), PoolGeometry.square(2))
    assert np.count_nonzero(g) == 9


def test_thread_chunks_are_bit_identical(gen):
    x = gen.standard_normal((7, 20, 20)).astype(np.float32)
    geom = PoolGeometry.square(3, 2, 1)
    a = softpool_forward(x, geom, threads=1)
    b = softpool_forward(x, geom, threads=3)
    assert a.output.tobytes() == b.output.tobytes()
    assert a.saved_weights.tobytes() == b.saved_weights.tobytes()


def test_3d_constant_cube():
    x = np.full((1, 2, 2, 2), 0.625)
    out = softpool3d_forward(x, PoolGeometry.make((2, 2, 2), ndim=3)).output
    assert out.shape == (1, 1, 1, 1) and out.item() == 0.625


def test_3d_ramp_cube():
    v = np.arange(1, 9, dtype=np.float64)
    out = softpool3d_forward(v.reshape(1, 2, 2, 2), PoolGeometry.make((2, 2, 2), ndim=3)).output
    assert abs(out.item() - softpool_region(v)) < 1e-12


def test_3d_single_frame_matches_2d(gen):
    x = gen.standard_normal((3, 1, 9, 9)).astype(np.float32)
    g3 = PoolGeometry.make((1, 3, 3), (1, 2, 2), (0, 1, 1), ndim=3)
    g2 = PoolGeometry.square(3, 2, 1)
    a = softpool3d_forward(x, g3).output[:, 0]
    b = softpool_forward(x[:, 0], g2).output
    assert a.tobytes() == b.tobytes()


def test_3d_backward_matches_naive(gen):
    x = gen.standard_normal((2, 4, 5, 5))
    geom = PoolGeometry.make((2, 2, 2), (1, 2, 1), ndim=3)
    up = gen.standard_normal(output_shape(x.shape, geom))
    np.testing.assert_allclose(softpool3d_backward(x, up, geom, EXACT), naive_exact_backward(x, up, geom),
                               rtol=1e-12, atol=1e-13)
    res = softpool3d_forward(x, geom)
    got = softpool3d_backward(x, up, geom, PAPER, res)
    assert got.tobytes() == naive_weighted_backward(x, res.saved_weights, up, geom).tobytes()


def test_3d_requires_rank4():
    with pytest.raises(GeometryError):
        softpool3d_forward(np.zeros((1, 4, 4)), PoolGeometry.square(2))


def test_outputs_finite_for_finite_input(gen):
    x = (gen.standard_normal((2, 10, 10)) * 1e4).astype(np.float32)
    for geom in (PoolGeometry.square(2), PoolGeometry.square(3, 1, 1)):
        res = softpool_forward(x, geom)
        assert np.all(np.isfinite(res.output)) and np.all(np.isfinite(res.saved_weights))


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_constant_regions_of_any_size_are_exact(dtype, gen):
    for n in (3, 5, 7, 9, 27):
        for c in gen.uniform(-100, 100, 20).astype(dtype):
            x = np.full((1, 1, n), c, dtype=dtype)
            geom = PoolGeometry.make((1, n))
            assert softpool_forward(x, geom).output.item() == c
            assert pool_forward(x, geom, PoolSpec("average")).output.item() == c


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_output_never_exceeds_region_max(dtype, gen):
    # one dominant value: weights concentrate and the sum sits right at the max
    x = gen.uniform(-1, 1, (4, 30, 30)).astype(dtype)
    x[:, ::3, ::3] += dtype(40)
    geom = PoolGeometry.square(3, 1, 1)
    out = softpool_forward(x, geom).output
    mx = pool_forward(x, geom, PoolSpec("maximum")).output
    assert np.all(out <= mx)
