"""Embedded oracle suite, runnable in any installation via `fbsynth selftest`.

Each check pits a fast production path against an independent brute-force
oracle: the SOR Poisson solver against a dense direct solve, RLE against
round-trip identity, raster primitives against pixel-counting.
"""
from __future__ import annotations

import math

import numpy as np

from . import blend, cocoio, raster
from .raster import BezierChain, StrokeStyle


def dense_poisson_solve(boundary: np.ndarray, omega: np.ndarray,
                        b: np.ndarray) -> np.ndarray:
    """Direct solve of the 5-point system (reference oracle)."""
    idx = {p: i for i, p in enumerate(zip(*np.nonzero(omega)))}
    n = len(idx)
    a_mat = np.zeros((n, n))
    rhs = np.zeros(n)
    for (y, x), i in idx.items():
        a_mat[i, i] = 4.0
        rhs[i] = b[y, x]
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            j = idx.get((ny, nx))
            if j is None:
                rhs[i] += boundary[ny, nx]
            else:
                a_mat[i, j] = -1.0
    sol = np.linalg.solve(a_mat, rhs)
    out = np.array(boundary, dtype=np.float64)
    for (y, x), i in idx.items():
        out[y, x] = sol[i]
    return out


def check_poisson(trials: int = 10, seed: int = 7) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        h, w = int(rng.integers(6, 14)), int(rng.integers(6, 14))
        boundary = rng.uniform(0, 1, (h, w))
        omega = np.zeros((h, w), dtype=bool)
        omega[1:-1, 1:-1] = rng.random((h - 2, w - 2)) < 0.8
        if not omega.any():
            continue
        b = rng.uniform(-1, 1, (h, w))
        ref = dense_poisson_solve(boundary, omega, b)
        f, _ = blend.solve_poisson(boundary, omega, b, tol=1e-10, max_iter=50_000)
        worst = max(worst, float(np.abs(f - ref).max()))
    ok = worst < 1e-4
    return ok, f"max |iterative - dense| = {worst:.2e}"


def check_rle(trials: int = 200, seed: int = 11) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        mask = rng.random((int(rng.integers(1, 40)),
                           int(rng.integers(1, 40)))) < rng.random()
        rle = cocoio.rle_encode(mask)
        if not np.array_equal(cocoio.rle_decode(rle), mask):
            return False, "round-trip mismatch"
    zero = cocoio.rle_encode(np.zeros((3, 3), dtype=bool))
    ones = cocoio.rle_encode(np.ones((2, 2), dtype=bool))
    if zero.counts != (9,) or ones.counts != (0, 4):
        return False, f"edge cases: {zero.counts}, {ones.counts}"
    return True, f"{trials} random masks round-trip"


def check_ellipse(trials: int = 20, seed: int = 3) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    style = StrokeStyle(1.0, 0.9, 1.0)
    worst = 0.0
    for _ in range(trials):
        a, b = rng.uniform(8, 40, 2)
        rot = rng.uniform(0, math.pi)
        patch = raster.fill_ellipse((100, 100), (a, b), rot, style, (200, 200))
        count = int(patch.footprint().sum())
        rel = abs(count - math.pi * a * b) / (math.pi * a * b)
        worst = max(worst, rel)
    return worst < 0.05, f"max relative area error = {worst:.3f}"


def check_bezier() -> tuple[bool, str]:
    seg = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=float)
    mid = raster.eval_cubic_bezier(seg, 0.5)
    if not np.allclose(mid, [0.5, 0.75]):
        return False, f"midpoint {mid}"
    if not (np.allclose(raster.eval_cubic_bezier(seg, 0.0), seg[0])
            and np.allclose(raster.eval_cubic_bezier(seg, 1.0), seg[3])):
        return False, "endpoint interpolation broken"
    chain = BezierChain((np.array([[10, 30], [30, 10], [60, 50], [90, 30]],
                                  dtype=float),))
    patch = raster.stroke_chain(chain, StrokeStyle(3.0, 0.8, 1.0), (100, 60))
    pts = raster.flatten_chain(chain)
    fp = np.zeros((60, 100), dtype=bool)
    x0, y0 = patch.origin
    fp[y0:y0 + patch.height, x0:x0 + patch.width] = patch.footprint()
    ys, xs = np.nonzero(fp)
    d = np.min(np.hypot(xs[:, None] - pts[None, :, 0],
                        ys[:, None] - pts[None, :, 1]), axis=1)
    if d.max() > 1.5 + 1.0:
        return False, f"footprint strays {d.max():.2f} px from curve"
    return True, "bernstein evaluation and stroke coverage"


def check_text() -> tuple[bool, str]:
    style = StrokeStyle(1.0, 0.2, 1.0)
    p1 = raster.render_text("Ag7", 0, 1, style)
    p2 = raster.render_text("Ag7", 0, 2, style)
    c1, c2 = int(p1.footprint().sum()), int(p2.footprint().sum())
    if c2 != 4 * c1:
        return False, f"scale-2 count {c2} != 4 x {c1}"
    return True, "nearest-neighbor scaling is exact"


SUITES = (
    ("poisson_dense_equivalence", check_poisson),
    ("rle_round_trip", check_rle),
    ("ellipse_area_oracle", check_ellipse),
    ("bezier_stroke_oracle", check_bezier),
    ("text_scaling", check_text),
)


def run_selftest(verbose: bool = True) -> bool:
    all_ok = True
    for name, fn in SUITES:
        try:
            ok, detail = fn()
        except Exception as e:  # a crashed suite is a failed suite
            ok, detail = False, f"exception: {e}"
        all_ok &= ok
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return all_ok
