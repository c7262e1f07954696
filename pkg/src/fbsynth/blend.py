"""Compositing: direct alpha blending and gradient-domain (Poisson) insertion.

The Poisson solver is red-black Gauss-Seidel with successive over-relaxation
on the standard 5-point Laplacian. Gradients are forward differences and the
divergence is their backward-difference adjoint, so reconstructing an image
from its own gradients is exact up to the solver tolerance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import AlphaPatch, GrayImage

log = logging.getLogger("fbsynth.blend")

SOR_FACTOR = 1.9
DEFAULT_TOL = 1e-5
DEFAULT_MAX_ITER = 10_000


class BlendError(ValueError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float


def composite_direct(dst: GrayImage, patch: AlphaPatch) -> GrayImage:
    """out = alpha * patch + (1 - alpha) * dst on the footprint."""
    x0, y0 = patch.origin
    h, w = patch.intensity.shape
    if x0 < 0 or y0 < 0 or x0 + w > dst.width or y0 + h > dst.height:
        raise BlendError("patch extends outside the canvas")
    out = np.array(dst.data, dtype=np.float32)
    window = out[y0:y0 + h, x0:x0 + w]
    out[y0:y0 + h, x0:x0 + w] = (patch.alpha * patch.intensity
                                 + (1.0 - patch.alpha) * window)
    return GrayImage(np.clip(out, 0.0, 1.0))


def _laplacian_apply(f: np.ndarray) -> np.ndarray:
    """5-point A f = 4 f - sum of 4-neighbors, on the interior."""
    return (4.0 * f[1:-1, 1:-1] - f[:-2, 1:-1] - f[2:, 1:-1]
            - f[1:-1, :-2] - f[1:-1, 2:])


def residual_norms(f: np.ndarray, omega: np.ndarray,
                   b: np.ndarray) -> tuple[float, float]:
    """(||b - A f||_2 over omega, ||b||_2 over omega)."""
    r = b[1:-1, 1:-1] - _laplacian_apply(f)
    sel = omega[1:-1, 1:-1]
    return float(np.linalg.norm(r[sel])), float(np.linalg.norm(b[1:-1, 1:-1][sel]))


def solve_poisson(boundary: np.ndarray, omega: np.ndarray, b: np.ndarray,
                  tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER) -> tuple[np.ndarray, SolveReport]:
    """Solve A f = b on omega with Dirichlet values from ``boundary``.

    ``boundary`` supplies the fixed values outside omega (and the initial
    guess inside). omega must not touch the array edge. b is the right-hand
    side of the 5-point system, i.e. minus the divergence of the guidance
    field. Convergence is relative: ||b - A f|| <= tol * ||b|| (absolute
    when b vanishes on omega).
    """
    omega = np.asarray(omega, dtype=bool)
    if not omega.any():
        raise BlendError("empty solve region")
    if omega[0, :].any() or omega[-1, :].any() or omega[:, 0].any() or omega[:, -1].any():
        raise BlendError("solve region touches the window edge")
    f = np.array(boundary, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    h, w = f.shape
    iy, ix = np.mgrid[0:h - 2, 0:w - 2]
    parity = (iy + ix) % 2
    masks = [omega[1:-1, 1:-1] & (parity == 0), omega[1:-1, 1:-1] & (parity == 1)]
    b_in = b[1:-1, 1:-1]
    _, b_norm = residual_norms(f, omega, b)
    threshold = tol * b_norm if b_norm > 0 else tol
    res = float("inf")
    iters = 0
    check_every = 5
    while iters < max_iter:
        for m in masks:
            inner = f[1:-1, 1:-1]
            s = (f[:-2, 1:-1] + f[2:, 1:-1] + f[1:-1, :-2] + f[1:-1, 2:])
            gs = (s + b_in) / 4.0
            inner[m] += SOR_FACTOR * (gs[m] - inner[m])
        iters += 1
        if iters % check_every == 0 or iters == max_iter:
            res, _ = residual_norms(f, omega, b)
            if res <= threshold:
                return f, SolveReport(iterations=iters, residual=res)
    raise SolverError(f"Poisson solver did not converge in {max_iter} iterations "
                      f"(residual {res:g})", residual=res, iterations=iters)


def _forward_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy[:-1, :] = img[1:, :] - img[:-1, :]
    return gx, gy


def _divergence(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    div = np.zeros_like(gx)
    div += gx
    div[:, 1:] -= gx[:, :-1]
    div += gy
    div[1:, :] -= gy[:-1, :]
    return div


def _solve_window(dst: GrayImage, patch_intensity: np.ndarray, mask: np.ndarray,
                  origin: tuple[int, int], mixed: bool, tol: float,
                  max_iter: int) -> tuple[GrayImage, SolveReport]:
    x0, y0 = origin
    h, w = mask.shape
    # Window with a 1-px Dirichlet ring around the patch rectangle.
    wx0, wy0 = x0 - 1, y0 - 1
    wx1, wy1 = x0 + w + 1, y0 + h + 1
    dst64 = dst.data.astype(np.float64)
    window = dst64[wy0:wy1, wx0:wx1].copy()
    src = np.zeros_like(window)
    src[1:-1, 1:-1] = patch_intensity
    # Ring values: replicate the patch edge so the source gradient field is
    # defined across the solve region boundary without a seam gradient.
    src[0, :] = src[1, :]
    src[-1, :] = src[-2, :]
    src[:, 0] = src[:, 1]
    src[:, -1] = src[:, -2]
    omega = np.zeros(window.shape, dtype=bool)
    omega[1:-1, 1:-1] = mask
    sgx, sgy = _forward_gradients(src)
    if mixed:
        dgx, dgy = _forward_gradients(window)
        gx = np.where(np.abs(sgx) >= np.abs(dgx), sgx, dgx)
        gy = np.where(np.abs(sgy) >= np.abs(dgy), sgy, dgy)
    else:
        gx, gy = sgx, sgy
    b = -_divergence(gx, gy)
    f, report = solve_poisson(window, omega, b, tol=tol, max_iter=max_iter)
    out = np.array(dst.data, dtype=np.float32)
    sub = out[wy0:wy1, wx0:wx1]
    sub[omega] = np.clip(f[omega], 0.0, 1.0).astype(np.float32)
    return GrayImage(out), report


def _poisson_placeable(dst: GrayImage, mask: np.ndarray,
                       origin: tuple[int, int]) -> bool:
    x0, y0 = origin
    h, w = mask.shape
    return x0 >= 1 and y0 >= 1 and x0 + w <= dst.width - 1 and y0 + h <= dst.height - 1


def blend_poisson_normal(dst: GrayImage, patch_intensity: np.ndarray,
                         mask: np.ndarray, origin: tuple[int, int],
                         tol: float = DEFAULT_TOL,
                         max_iter: int = DEFAULT_MAX_ITER) -> tuple[GrayImage, SolveReport]:
    """Gradient-domain insertion guided by the source gradients."""
    if not _poisson_placeable(dst, mask, origin):
        raise BlendError("patch not strictly interior")
    return _solve_window(dst, patch_intensity, mask, origin, mixed=False,
                         tol=tol, max_iter=max_iter)


def blend_poisson_seamless(dst: GrayImage, patch_intensity: np.ndarray,
                           mask: np.ndarray, origin: tuple[int, int],
                           tol: float = DEFAULT_TOL,
                           max_iter: int = DEFAULT_MAX_ITER) -> tuple[GrayImage, SolveReport]:
    """Mixed-gradient insertion: per pixel/axis the larger of source and
    destination gradients drives the solve."""
    if not _poisson_placeable(dst, mask, origin):
        raise BlendError("patch not strictly interior")
    return _solve_window(dst, patch_intensity, mask, origin, mixed=True,
                         tol=tol, max_iter=max_iter)


def blend(dst: GrayImage, patch_intensity: np.ndarray, mask: np.ndarray,
          origin: tuple[int, int], mode: str, tol: float = DEFAULT_TOL,
          max_iter: int = DEFAULT_MAX_ITER) -> tuple[GrayImage, str]:
    """Dispatch on blend mode, falling back to direct compositing when a
    Poisson footprint touches the image border. Returns the mode applied."""
    if mode not in ("direct", "poisson_normal", "poisson_seamless"):
        raise BlendError(f"unknown blend mode {mode!r}")
    if mode != "direct" and not _poisson_placeable(dst, mask, origin):
        log.info("footprint touches border, falling back to direct insertion")
        mode = "direct"
    if mode == "direct":
        patch = AlphaPatch(intensity=patch_intensity.astype(np.float32),
                           alpha=mask.astype(np.float32), origin=origin)
        return composite_direct(dst, patch), "direct"
    fn = blend_poisson_normal if mode == "poisson_normal" else blend_poisson_seamless
    out, _ = fn(dst, patch_intensity, mask, origin, tol=tol, max_iter=max_iter)
    return out, mode
