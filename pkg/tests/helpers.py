import numpy as np
from rcdtns.data import normalize_image
from rcdtns.transforms import pixel_coordinates


def gaussian_image(shape=(64, 64), center=(0.0, 0.0), sigma=(5.0, 5.0), theta=0.0):
    """Unit-mass anisotropic Gaussian; ``center`` is (x, y) in centered pixel coordinates."""
    x, y = pixel_coordinates(shape)
    X, Y = np.meshgrid(x, y)
    c, s = np.cos(theta), np.sin(theta)
    u = (X - center[0]) * c + (Y - center[1]) * s
    v = -(X - center[0]) * s + (Y - center[1]) * c
    return normalize_image(np.exp(-0.5 * ((u / sigma[0]) ** 2 + (v / sigma[1]) ** 2)))


def blob_pair_image(shape=(64, 64)):
    """Off-center asymmetric two-lobe image."""
    a = gaussian_image(shape, (6.0, -3.0), (5.0, 2.5), 0.4)
    b = gaussian_image(shape, (-7.0, 5.0), (2.0, 3.0), 0.0)
    return normalize_image(0.7 * a + 0.3 * b)


def random_smooth_image(rng, shape=(64, 64), n_blobs=3):
    out = np.zeros(shape)
    for _ in range(n_blobs):
        c = rng.uniform(-12, 12, 2)
        s = rng.uniform(2.5, 6.0, 2)
        out += rng.uniform(0.3, 1.0) * gaussian_image(shape, c, s, rng.uniform(0, np.pi))
    return normalize_image(out)
