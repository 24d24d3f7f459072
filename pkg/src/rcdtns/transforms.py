"""CDT, Radon transform and R-CDT, with their inverses.

Conventions
-----------
A 1D density is a vector of point samples on a uniform grid. Sample ``i``
owns the cell ``[x_i - dx/2, x_i + dx/2]`` and the CDF is piecewise linear
between cell edges. Quantile levels for the reference are the reference CDF
evaluated at its own grid nodes, so the per-angle uniform reference with
``N`` nodes gives levels ``(j + 0.5) / N``.

Images use pixel spacing 1 with the origin at the image center. Pixel
``(row, col)`` sits at ``x = col - (W-1)/2``, ``y = row - (H-1)/2``.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.interpolate import PchipInterpolator

from ._validation import ValidationError, check_density_1d, check_image, check_image_stack

DEFAULT_N_THETA = 45


# --------------------------------------------------------------------------
# 1D CDT
# --------------------------------------------------------------------------

def _default_grid(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def _spacing(x: np.ndarray) -> float:
    d = np.diff(x)
    if np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-9, atol=0):
        raise ValidationError("grid must be uniform and increasing")
    return float(d[0])


def _edges(x: np.ndarray, dx: float) -> np.ndarray:
    return np.concatenate([[x[0] - dx / 2], x + dx / 2])


def _edge_cdf(values: np.ndarray, dx: float, axis: int = 0) -> np.ndarray:
    c = np.cumsum(values, axis=axis) * dx
    pad = [(0, 0)] * values.ndim
    pad[axis] = (1, 0)
    return np.pad(c, pad)


def reference_levels(r, dx: float | None = None) -> np.ndarray:
    """CDF of the reference density at its grid nodes (cell midpoints)."""
    r = np.asarray(r, dtype=float)
    if dx is None:
        dx = 1.0 / (r.size - 1)
    return np.cumsum(r) * dx - r * dx / 2


def _invert_cdf(cdf: np.ndarray, edges: np.ndarray, levels: np.ndarray) -> np.ndarray:
    # left-most preimage: first knot with cdf >= level
    idx = np.searchsorted(cdf, levels, side="left")
    idx = np.clip(idx, 1, cdf.size - 1)
    lo, hi = cdf[idx - 1], cdf[idx]
    step = hi - lo
    frac = np.divide(levels - lo, step, out=np.zeros_like(levels), where=step > 0)
    return edges[idx - 1] + np.clip(frac, 0.0, 1.0) * (edges[idx] - edges[idx - 1])


def cdt_forward(s, r, x=None, x_ref=None) -> np.ndarray:
    """Forward CDT of density ``s`` with respect to reference ``r``.

    Returns the transport map sampled on the reference grid, i.e. the values
    ``S^{-1}(R(x_ref))``. With a uniform reference this is the quantile
    function of ``s``.
    """
    s_arr = np.asarray(s, dtype=float)
    r_arr = np.asarray(r, dtype=float)
    x = _default_grid(s_arr.size) if x is None else np.asarray(x, dtype=float)
    x_ref = _default_grid(r_arr.size) if x_ref is None else np.asarray(x_ref, dtype=float)
    if x.shape != s_arr.shape or x_ref.shape != r_arr.shape:
        raise ValidationError("grid and values must have matching lengths")
    dx, dr = _spacing(x), _spacing(x_ref)
    s_arr = check_density_1d(s_arr, dx, "s")
    r_arr = check_density_1d(r_arr, dr, "r")
    cdf = _edge_cdf(s_arr, dx)
    cdf /= cdf[-1]
    return _invert_cdf(cdf, _edges(x, dx), reference_levels(r_arr, dr))


def _cdf_from_map(values, levels, edges, lo, hi):
    # end knots: extend the map past its ends by the leftover level mass, but
    # keep the domain edge unless the gap is large against the end steps
    # (i.e. the density has compact support inside the domain)
    if values.size > 1:
        cell = edges[1] - edges[0]
        d_lo, d_hi = values[1] - values[0], values[-1] - values[-2]
        lo_x = values[0] - d_lo * levels[0] / (levels[1] - levels[0])
        hi_x = values[-1] + d_hi * (1 - levels[-1]) / (levels[-1] - levels[-2])
        if lo_x - lo > cell + 4 * d_lo:
            lo = lo_x
        if hi - hi_x > cell + 4 * d_hi:
            hi = hi_x
    xs = np.concatenate([[lo], values, [hi]])
    ys = np.concatenate([[0.0], levels, [1.0]])
    # PCHIP needs strictly increasing abscissae; merge plateau knots
    keep = np.concatenate([[True], np.diff(xs) > 1e-12 * max(1.0, abs(hi - lo))])
    xs, ys = xs[keep], ys[keep]
    ys = np.maximum.accumulate(ys)
    return xs, ys


def _density_from_cdf_knots(xs, ys, x, dx, n_correct=2):
    """Recover cell densities from CDF samples taken off the cell edges.

    The discrete CDF is piecewise linear between cell edges, so its samples
    sit on chords of the underlying smooth CDF. Each pass estimates the
    density slope and removes the chord sag before re-interpolating.
    """
    edges = _edges(x, dx)
    interior = slice(1, -1)
    pts = xs[interior]
    cell = np.clip(np.searchsorted(edges, pts) - 1, 0, x.size - 1)
    left, right = edges[cell], edges[cell + 1]
    # the CDF is flat outside the knots
    at = np.clip(edges, xs[0], xs[-1])
    target = ys.copy()
    dens = np.diff(PchipInterpolator(xs, target)(at)) / dx
    for _ in range(n_correct):
        slope = np.gradient(dens, dx) if x.size > 2 else np.zeros_like(dens)
        sag = 0.5 * np.interp(pts, x, slope) * (pts - left) * (right - pts)
        target = ys.copy()
        target[interior] = ys[interior] - sag
        dens = np.diff(PchipInterpolator(xs, target)(at)) / dx
    return np.clip(dens, 0.0, None)


def cdt_inverse(t, r, x=None, x_ref=None) -> np.ndarray:
    """Inverse CDT: rebuild the density on grid ``x`` from map ``t``.

    ``x`` defaults to the reference grid. The output is renormalized to unit
    mass on ``x``.
    """
    t = np.asarray(t, dtype=float)
    r_arr = np.asarray(r, dtype=float)
    x_ref = _default_grid(r_arr.size) if x_ref is None else np.asarray(x_ref, dtype=float)
    x = x_ref if x is None else np.asarray(x, dtype=float)
    if t.shape != r_arr.shape:
        raise ValidationError("transport map and reference must have the same length")
    if np.any(np.diff(t) < 0):
        raise ValidationError("transport map is not monotone non-decreasing")
    dr, dx = _spacing(x_ref), _spacing(x)
    r_arr = check_density_1d(r_arr, dr, "r")
    edges = _edges(x, dx)
    xs, ys = _cdf_from_map(t, reference_levels(r_arr, dr), edges, edges[0], edges[-1])
    if xs[0] > t[0] or xs[-1] < t[-1]:
        raise ValidationError("transport map leaves the output grid")
    dens = _density_from_cdf_knots(xs, ys, x, dx)
    mass = dens.sum() * dx
    if mass <= 0:
        raise ValidationError("reconstruction has zero mass")
    return dens / mass


# --------------------------------------------------------------------------
# Radon transform
# --------------------------------------------------------------------------

def sinogram_grid(shape, n_theta: int = DEFAULT_N_THETA):
    """Return ``(t_grid, theta_grid)`` for an image of the given shape."""
    H, W = int(shape[0]), int(shape[1])
    diag = math.hypot(H, W)
    T = math.ceil(diag / 2)
    n_t = math.ceil(diag)
    if n_t % 2 == 0:
        n_t += 1
    t_grid = np.linspace(-T, T, n_t)
    theta_grid = np.arange(n_theta) * (np.pi / n_theta)
    return t_grid, theta_grid


def pixel_coordinates(shape):
    H, W = shape
    x = np.arange(W) - (W - 1) / 2
    y = np.arange(H) - (H - 1) / 2
    return x, y


@lru_cache(maxsize=8)
def radon_matrix(shape, n_theta: int = DEFAULT_N_THETA, oversample: int = 2) -> sparse.csr_matrix:
    """Sparse rotate-and-sum operator mapping ``img.ravel()`` to ``sino.ravel()``.

    Each line ``x . xi_theta = t`` is sampled every ``dt / oversample`` along
    its length with bilinear interpolation of the pixel grid.
    """
    H, W = int(shape[0]), int(shape[1])
    t_grid, theta = sinogram_grid((H, W), n_theta)
    n_t = t_grid.size
    dt = t_grid[1] - t_grid[0]
    du = dt / oversample
    T = t_grid[-1]
    u = np.arange(-T, T + du / 2, du)

    rows, cols, vals = [], [], []
    tt, uu = np.meshgrid(t_grid, u, indexing="ij")
    for i, th in enumerate(theta):
        c, s = math.cos(th), math.sin(th)
        px = tt * c - uu * s + (W - 1) / 2
        py = tt * s + uu * c + (H - 1) / 2
        x0 = np.floor(px).astype(int)
        y0 = np.floor(py).astype(int)
        fx = px - x0
        fy = py - y0
        row_id = np.broadcast_to((np.arange(n_t) * n_theta + i)[:, None], px.shape)
        for dy, dxo, w in ((0, 0, (1 - fx) * (1 - fy)), (0, 1, fx * (1 - fy)),
                           (1, 0, (1 - fx) * fy), (1, 1, fx * fy)):
            yy, xx = y0 + dy, x0 + dxo
            ok = (xx >= 0) & (xx < W) & (yy >= 0) & (yy < H) & (w > 0)
            rows.append(row_id[ok])
            cols.append((yy * W + xx)[ok])
            vals.append(w[ok] * du)
    M = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_t * n_theta, H * W),
    )
    return M.tocsr()


def _radon_stack(imgs: np.ndarray, n_theta: int) -> np.ndarray:
    n, H, W = imgs.shape
    t_grid, _ = sinogram_grid((H, W), n_theta)
    dt = t_grid[1] - t_grid[0]
    M = radon_matrix((H, W), n_theta)
    sino = (M @ imgs.reshape(n, -1).T).T.reshape(n, t_grid.size, n_theta)
    mass = sino.sum(axis=1, keepdims=True) * dt
    if np.any(mass <= 0):
        raise ValidationError("image has a projection with zero mass")
    return sino / mass


def radon_forward(img, n_theta: int = DEFAULT_N_THETA) -> np.ndarray:
    """Radon transform of a unit-mass image, shape ``(N_t, n_theta)``.

    Every column is renormalized to unit mass on the t grid.
    """
    if n_theta < 2:
        raise ValidationError("n_theta must be at least 2")
    img = check_image(img)
    return _radon_stack(img[None], n_theta)[0]


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def radon_inverse(sino, shape=None) -> np.ndarray:
    """Filtered backprojection with a pure ramp filter.

    ``shape`` defaults to the largest square image whose sinogram grid
    matches ``sino``. Negative pixels are clipped and the result renormalized.
    """
    sino = np.asarray(sino, dtype=float)
    if sino.ndim != 2 or sino.shape[0] < 3 or sino.shape[1] < 2:
        raise ValidationError("sinogram must be a 2D array (N_t, N_theta)")
    if not np.all(np.isfinite(sino)):
        raise ValidationError("sinogram contains non-finite values")
    n_t, n_theta = sino.shape
    if shape is None:
        side = int(np.floor((n_t - 1) / math.sqrt(2)))
        while sinogram_grid((side + 1, side + 1), n_theta)[0].size <= n_t:
            side += 1
        while side > 1 and sinogram_grid((side, side), n_theta)[0].size > n_t:
            side -= 1
        shape = (side, side)
    t_grid, theta = sinogram_grid(shape, n_theta)
    if t_grid.size != n_t:
        raise ValidationError(f"sinogram has {n_t} offsets, shape {shape} needs {t_grid.size}")
    dt = t_grid[1] - t_grid[0]

    n_pad = _next_pow2(2 * n_t)
    freq = np.abs(np.fft.fftfreq(n_pad, d=dt))
    filtered = np.fft.ifft(np.fft.fft(sino, n=n_pad, axis=0) * freq[:, None], axis=0).real[:n_t]

    x, y = pixel_coordinates(shape)
    X, Y = np.meshgrid(x, y)
    out = np.zeros(shape)
    for i, th in enumerate(theta):
        tp = X * math.cos(th) + Y * math.sin(th)
        out += np.interp(tp, t_grid, filtered[:, i], left=0.0, right=0.0)
    out *= np.pi / n_theta
    out = np.clip(out, 0.0, None)
    total = out.sum()
    if total <= 0:
        raise ValidationError("reconstruction is identically zero")
    return out / total


# --------------------------------------------------------------------------
# R-CDT
# --------------------------------------------------------------------------

def _quantile_levels(n_q: int) -> np.ndarray:
    return (np.arange(n_q) + 0.5) / n_q


def _sino_to_rcdt(sino: np.ndarray, t_grid: np.ndarray, n_q: int) -> np.ndarray:
    dt = t_grid[1] - t_grid[0]
    edges = _edges(t_grid, dt)
    levels = _quantile_levels(n_q)
    cdf = _edge_cdf(sino, dt, axis=0)
    out = np.empty((n_q, sino.shape[1]))
    for i in range(sino.shape[1]):
        col = cdf[:, i] / cdf[-1, i]
        out[:, i] = _invert_cdf(col, edges, levels)
    return np.clip(out, t_grid[0], t_grid[-1])


def rcdt_forward(img, n_theta: int = DEFAULT_N_THETA) -> np.ndarray:
    """R-CDT of a unit-mass image against the per-angle uniform reference.

    Returns an ``(N_q, n_theta)`` array whose columns are quantile functions
    of the Radon projections, with ``N_q = N_t``.
    """
    img = check_image(img)
    return rcdt_batch(img[None], n_theta)[0]


def rcdt_batch(imgs, n_theta: int = DEFAULT_N_THETA) -> np.ndarray:
    """R-CDT of a stack of unit-mass images, shape ``(n, N_q, n_theta)``."""
    if n_theta < 2:
        raise ValidationError("n_theta must be at least 2")
    imgs = check_image_stack(imgs)
    t_grid, _ = sinogram_grid(imgs.shape[1:], n_theta)
    sinos = _radon_stack(imgs, n_theta)
    return np.stack([_sino_to_rcdt(s, t_grid, t_grid.size) for s in sinos])


def rcdt_inverse(m, shape) -> np.ndarray:
    """Rebuild an image from its R-CDT (validation use only)."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValidationError("R-CDT map must be 2D (N_q, N_theta)")
    if np.any(np.diff(m, axis=0) < 0):
        raise ValidationError("R-CDT columns must be non-decreasing")
    n_q, n_theta = m.shape
    t_grid, _ = sinogram_grid(shape, n_theta)
    if n_q != t_grid.size:
        raise ValidationError(f"map has {n_q} rows, shape {tuple(shape)} needs {t_grid.size}")
    dt = t_grid[1] - t_grid[0]
    edges = _edges(t_grid, dt)
    levels = _quantile_levels(n_q)
    sino = np.empty((t_grid.size, n_theta))
    for i in range(n_theta):
        xs, ys = _cdf_from_map(m[:, i], levels, edges, edges[0], edges[-1])
        dens = _density_from_cdf_knots(xs, ys, t_grid, dt)
        sino[:, i] = dens / (dens.sum() * dt)
    return radon_inverse(sino, shape)


def sliced_wasserstein_sq(s1, s2, n_theta: int = DEFAULT_N_THETA) -> float:
    """Squared sliced-Wasserstein distance computed in R-CDT space.

    With the uniform reference the weight is constant, so this is the mean
    over angles and quantile levels of the squared map difference.
    """
    a = check_image(s1, "s1")
    b = check_image(s2, "s2")
    if a.shape != b.shape:
        raise ValidationError(f"image grids differ: {a.shape} vs {b.shape}")
    m = rcdt_batch(np.stack([a, b]), n_theta)
    return rcdt_distance_sq(m[0], m[1])


def rcdt_distance_sq(m1, m2) -> float:
    """Squared weighted L2 distance between two R-CDT maps."""
    m1, m2 = np.asarray(m1, dtype=float), np.asarray(m2, dtype=float)
    if m1.shape != m2.shape:
        raise ValidationError(f"map grids differ: {m1.shape} vs {m2.shape}")
    return float(np.mean((m1 - m2) ** 2))
