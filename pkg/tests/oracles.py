"""Independent reference implementations used only by the tests."""
import numpy as np

from rcdtns.transforms import pixel_coordinates


def empirical_quantiles(samples, levels):
    s = np.sort(np.asarray(samples))
    return np.quantile(s, levels)


def projected_quantiles(img, theta, levels, sub=4):
    """Weighted quantiles of the image projected on ``xi_theta``.

    Each pixel is split into ``sub x sub`` equal point masses so the result
    approximates a continuous density rather than pixel-center atoms.
    """
    x, y = pixel_coordinates(img.shape)
    off = (np.arange(sub) + 0.5) / sub - 0.5
    X, Y = np.meshgrid(x, y)
    px = (X[..., None, None] + off[None, None, :, None] + 0 * off[None, None, None, :]).ravel()
    py = (Y[..., None, None] + 0 * off[None, None, :, None] + off[None, None, None, :]).ravel()
    t = px * np.cos(theta) + py * np.sin(theta)
    w = np.repeat(np.asarray(img).ravel(), sub * sub)
    order = np.argsort(t, kind="stable")
    c = np.cumsum(w[order])
    c /= c[-1]
    return t[order][np.minimum(np.searchsorted(c, levels), t.size - 1)]


def brute_force_sw2(a, b, n_theta=45, n_levels=4000):
    """Angle-averaged 1D W2^2 from sorted projection samples."""
    levels = (np.arange(n_levels) + 0.5) / n_levels
    total = 0.0
    for th in np.arange(n_theta) * np.pi / n_theta:
        qa = projected_quantiles(a, th, levels)
        qb = projected_quantiles(b, th, levels)
        total += np.mean((qa - qb) ** 2)
    return total / n_theta


def normal_equations_residual(x, C):
    """``||x - C c||^2`` with ``c`` from the normal equations (full column rank ``C``)."""
    C = np.asarray(C, dtype=float)
    coef = np.linalg.solve(C.T @ C, C.T @ x)
    r = x - C @ coef
    return float(r @ r)


def lstsq_residual(x, elements):
    """Least-squares residual of ``x`` against the span of 2D arrays (rank-safe)."""
    C = np.stack([np.ravel(e) for e in elements], axis=1)
    coef = np.linalg.lstsq(C, np.ravel(x), rcond=None)[0]
    r = np.ravel(x) - C @ coef
    return float(r @ r)
