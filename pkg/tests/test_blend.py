import numpy as np
import pytest

from fbsynth import blend
from fbsynth.core import AlphaPatch, GrayImage


from oracles import dense_poisson_solve as dense_solve
from oracles import random_poisson_problem as random_problem


def test_direct_composite_full_alpha_replaces_pixels():
    dst = GrayImage(np.full((8, 8), 0.25, dtype=np.float32))
    patch = AlphaPatch(intensity=np.full((3, 3), 0.9, dtype=np.float32),
                       alpha=np.ones((3, 3), dtype=np.float32), origin=(2, 2))
    out = blend.composite_direct(dst, patch)
    assert np.all(out.data[2:5, 2:5] == np.float32(0.9))
    changed = out.data != dst.data
    assert changed.sum() == 9


def test_direct_composite_out_of_canvas_raises():
    dst = GrayImage(np.zeros((8, 8), dtype=np.float32))
    patch = AlphaPatch(intensity=np.ones((4, 4), dtype=np.float32),
                       alpha=np.ones((4, 4), dtype=np.float32), origin=(6, 6))
    with pytest.raises(blend.BlendError):
        blend.composite_direct(dst, patch)


def test_solver_matches_dense_solve():
    rng = np.random.default_rng(0)
    for _ in range(20):
        boundary, omega, b = random_problem(rng)
        f, report = blend.solve_poisson(boundary, omega, b, tol=1e-9)
        oracle = dense_solve(boundary, omega, b)
        assert np.max(np.abs(f - oracle)) <= 1e-4
        # reported residual matches a recomputation exactly
        res, _ = blend.residual_norms(f, omega, b)
        assert abs(res - report.residual) <= 1e-12
        # pixels outside omega are bit-equal to the boundary values
        assert np.array_equal(f[~omega], boundary[~omega])


def test_solver_nonconvergence_raises():
    rng = np.random.default_rng(1)
    boundary, omega, b = random_problem(rng)
    with pytest.raises(blend.SolverError) as exc:
        blend.solve_poisson(boundary, omega, b, tol=1e-14, max_iter=2)
    assert exc.value.iterations == 2
    assert exc.value.residual > 0


def test_edge_touching_omega_rejected():
    omega = np.zeros((6, 6), dtype=bool)
    omega[0, 2] = True
    with pytest.raises(blend.BlendError):
        blend.solve_poisson(np.zeros((6, 6)), omega, np.zeros((6, 6)))


def test_identical_source_reproduces_destination():
    rng = np.random.default_rng(2)
    dst = GrayImage(rng.uniform(0.2, 0.8, (16, 16)).astype(np.float32))
    mask = np.zeros((6, 6), dtype=bool)
    mask[1:5, 1:5] = True
    src = np.array(dst.data[4:10, 4:10], dtype=np.float64)
    out, report = blend.blend_poisson_normal(dst, src, mask, (4, 4), tol=1e-8)
    assert np.max(np.abs(out.data - dst.data)) <= 1e-4
    # boundary ring and exterior unchanged bit-for-bit
    window = np.zeros(dst.shape, dtype=bool)
    window[5:9, 5:9] = mask[1:5, 1:5]
    assert np.array_equal(out.data[~window], dst.data[~window])


def test_seamless_flat_source_keeps_destination_texture():
    rng = np.random.default_rng(3)
    dst = GrayImage(rng.uniform(0.3, 0.7, (16, 16)).astype(np.float32))
    mask = np.ones((6, 6), dtype=bool)
    src = np.full((6, 6), 0.5, dtype=np.float64)
    out, _ = blend.blend_poisson_seamless(dst, src, mask, (5, 5), tol=1e-9)
    assert np.max(np.abs(out.data - dst.data)) <= 2e-2


def test_blend_dispatch_border_fallback():
    dst = GrayImage(np.full((12, 12), 0.4, dtype=np.float32))
    mask = np.ones((4, 4), dtype=bool)
    src = np.full((4, 4), 0.9)
    out, applied = blend.blend(dst, src, mask, (0, 0), "poisson_normal")
    assert applied == "direct"
    out, applied = blend.blend(dst, src, mask, (4, 4), "poisson_normal")
    assert applied == "poisson_normal"
    with pytest.raises(blend.BlendError):
        blend.blend(dst, src, mask, (4, 4), "nonsense")


def test_poisson_changes_only_masked_pixels():
    rng = np.random.default_rng(4)
    dst = GrayImage(rng.uniform(0.2, 0.8, (20, 20)).astype(np.float32))
    mask = rng.random((7, 7)) < 0.6
    mask[3, 3] = True
    src = rng.uniform(0.0, 1.0, (7, 7))
    out, _ = blend.blend(dst, src, mask, (6, 5), "poisson_seamless")
    changed = out.data != dst.data
    canvas_mask = np.zeros((20, 20), dtype=bool)
    canvas_mask[5:12, 6:13] = mask
    assert not np.any(changed & ~canvas_mask)
