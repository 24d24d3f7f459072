import math

import numpy as np
import pytest

from helpers import blob_pair_image, gaussian_image
from oracles import lstsq_residual
from rcdtns import ValidationError
from rcdtns.data import apply_affine, rotate_image
from rcdtns.invariance import (predict_gamma, predict_theta_prime, reflect_rcdt, rotate_rcdt,
                               rotation_stack, spanning_affine, spanning_translation, theta_grid)
from rcdtns.transforms import rcdt_forward

TH = theta_grid(45)


@pytest.fixture(scope="module")
def pair_map():
    return rcdt_forward(blob_pair_image())


def angle_gap(a, b):
    d = np.abs(np.asarray(a) - np.asarray(b)) % np.pi
    return np.minimum(d, np.pi - d)


# ---------------------------------------------------------------- spanning sets


def test_translation_elements():
    u = spanning_translation((91, 45))
    assert len(u) == 2 and u.provenance == ["translation", "translation"]
    c, s = u.elements
    assert np.all(c[:, 0] == 1.0) and np.all(s[:, 0] == 0.0)
    nearest = np.argmin(np.abs(TH - np.pi / 2))
    assert np.max(np.abs(c[:, nearest])) < 0.04
    assert np.all(np.ptp(c, axis=0) == 0) and np.all(np.ptp(s, axis=0) == 0)
    M = u.matrix()
    assert np.linalg.det(M.T @ M) > 0


def test_affine_elements(pair_map):
    u = spanning_affine([pair_map])
    assert len(u) == 3
    assert u.provenance == ["anisotropic", "anisotropic", "shear"]
    c2, s2, s2t = u.elements
    assert np.allclose(c2 + s2, pair_map, atol=1e-12)
    assert np.allclose(s2t, pair_map * np.sin(2 * TH)[None], atol=0)
    assert len(spanning_affine([pair_map, pair_map])) == 6


def test_affine_rejects_empty_and_mismatched(pair_map):
    with pytest.raises(ValidationError):
        spanning_affine([])
    with pytest.raises(ValidationError):
        spanning_affine([pair_map, pair_map[:-1]])


def test_anisotropic_residual_drops(pair_map):
    img = blob_pair_image()
    mg = rcdt_forward(apply_affine(img, np.diag([1.0, 1.1])))
    c2, s2, _ = spanning_affine([pair_map]).elements
    enriched = lstsq_residual(mg, [pair_map, c2, s2])
    plain = lstsq_residual(mg, [pair_map])
    assert enriched < 0.4 * plain


DEFORMATIONS = {
    "translation": (np.eye(2), (3.0, -2.0)),
    "aniso": (np.diag([1.0, 1.1]), (0.0, 0.0)),
    "aniso_x": (np.diag([1.12, 1.0]), (0.0, 0.0)),
    "shear_h": (np.array([[1.0, 0.065], [0.0, 1.0]]), (0.0, 0.0)),
    "shear_v": (np.array([[1.0, 0.0], [-0.065, 1.0]]), (0.0, 0.0)),
}


@pytest.mark.parametrize("kind", sorted(DEFORMATIONS))
def test_span_inclusion(kind, pair_map):
    A, x0 = DEFORMATIONS[kind]
    mg = rcdt_forward(apply_affine(blob_pair_image(), A, x0))
    span = [pair_map] + spanning_affine([pair_map]).elements + \
        spanning_translation(pair_map.shape).elements
    assert lstsq_residual(mg, span) < lstsq_residual(mg, [pair_map])


@pytest.mark.parametrize("kind,params,A", [
    ("aniso", (1.0, 1.1), np.diag([1.0, 1.1])),
    ("aniso", (1.12, 1.0), np.diag([1.12, 1.0])),
    ("shear_h", 0.065, np.array([[1.0, 0.065], [0.0, 1.0]])),
    ("shear_v", -0.065, np.array([[1.0, 0.0], [-0.065, 1.0]])),
])
def test_gamma_scaling_approximation(kind, params, A):
    for img in (gaussian_image(sigma=(6, 3), theta=0.4), blob_pair_image()):
        m = rcdt_forward(img)
        mg = rcdt_forward(apply_affine(img, A))
        gamma = predict_gamma(kind, params, TH)[0]
        assert np.max(np.abs(mg - gamma[None] * m)) < 0.1 * np.ptp(m)


# ---------------------------------------------------------------- rotation


def test_rotate_zero_is_identity(pair_map):
    assert np.array_equal(rotate_rcdt(pair_map, 0), pair_map)


@pytest.mark.parametrize("k", [3, 20, 44])
def test_rotate_matches_image_rotation(k):
    img = gaussian_image(center=(8, -5), sigma=(5, 2.5), theta=0.3)
    rotated = rcdt_forward(rotate_image(img, k * math.pi / 45))
    assert np.max(np.abs(rotate_rcdt(rcdt_forward(img), k) - rotated)) < 1.0


@pytest.mark.parametrize("k", [1, 7, 23, 44])
def test_rotate_composition_gives_half_turn(k, pair_map):
    # k then N-k steps add up to a rotation by pi, which reflects the map
    twice = rotate_rcdt(rotate_rcdt(pair_map, k), 45 - k)
    assert np.array_equal(twice, reflect_rcdt(pair_map))
    assert np.array_equal(reflect_rcdt(twice), pair_map)


def test_half_turn_matches_image(pair_map):
    turned = rcdt_forward(rotate_image(blob_pair_image(), math.pi))
    assert np.max(np.abs(reflect_rcdt(pair_map) - turned)) < 1.0


def test_rotate_preserves_monotonicity(pair_map):
    for k in range(45):
        assert np.all(np.diff(rotate_rcdt(pair_map, k), axis=0) >= 0)


@pytest.mark.parametrize("shift", [-1, 45, 2.5, True])
def test_rotate_rejects_bad_shift(shift, pair_map):
    with pytest.raises(ValidationError):
        rotate_rcdt(pair_map, shift)


def test_rotation_stack(pair_map):
    maps, angles = rotation_stack(pair_map)
    assert maps.shape == (90,) + pair_map.shape
    assert np.all(np.abs(angles) <= math.pi + 1e-12)
    assert len(np.unique(np.round(angles, 12))) == 90
    limited, small = rotation_stack(pair_map, stride=1, max_angle=math.radians(16))
    assert np.all(np.abs(small) <= math.radians(16) + 1e-12)
    assert len(limited) == 2 * int(math.radians(16) // (math.pi / 45)) + 1
    strided, _ = rotation_stack(pair_map, stride=3)
    assert len(strided) == 30


# ---------------------------------------------------------------- analytic factors


def test_theta_prime_identity_cases():
    assert np.array_equal(predict_theta_prime("aniso", (1.3, 1.3), TH), TH)
    assert np.array_equal(predict_theta_prime("shear_h", 0.0, TH), TH)


def test_theta_prime_range():
    for kind, p in (("aniso", (1.0, 1.12)), ("shear_h", 0.065), ("shear_v", -0.065)):
        out = predict_theta_prime(kind, p, TH)
        assert np.all((out >= 0) & (out < np.pi))


def test_theta_prime_aniso_bound():
    worst = angle_gap(predict_theta_prime("aniso", (1.0, 1.12), TH), TH).max()
    assert worst <= 0.068


def test_theta_prime_shear_bound():
    h = 0.065
    worst = angle_gap(predict_theta_prime("shear_h", h, TH), TH).max()
    assert worst <= h + h * h / 2 <= math.pi / 45


def test_theta_prime_matches_tangent_form():
    # arctan((b/a) tan theta) away from the pole, folded into [0, pi)
    th = TH[(TH > 0) & (np.abs(TH - np.pi / 2) > 0.1)]
    expected = np.mod(np.arctan(1.1 * np.tan(th)), np.pi)
    assert np.allclose(predict_theta_prime("aniso", (1.0, 1.1), th), expected, atol=1e-12)
    expected = np.mod(np.arctan(np.tan(th) + 0.05), np.pi)
    assert np.allclose(predict_theta_prime("shear_h", 0.05, th), expected, atol=1e-12)
    expected = np.mod(np.pi / 2 - np.arctan(1 / np.tan(th) + 0.05), np.pi)
    assert np.allclose(predict_theta_prime("shear_v", 0.05, th), expected, atol=1e-12)


def test_gamma_at_zero_angle():
    exact, approx = predict_gamma("aniso", (0.9, 1.1), 0.0)
    assert exact == 0.9 and approx == 0.9


def test_gamma_shear_approximation_bound():
    h = 0.05
    exact, approx = predict_gamma("shear_h", h, TH)
    assert np.all(np.abs(exact - approx) <= (h + h * h) ** 2 / 8)


def test_gamma_aniso_bound():
    a, alpha = 1.0, 0.1
    exact, _ = predict_gamma("aniso", (a, a * (1 + alpha)), TH)
    s2 = np.sin(TH) ** 2
    bound = a * (alpha + alpha ** 2 / 2) * s2 + a * (2 * alpha + alpha ** 2) ** 2 * s2 ** 2 / 8
    assert np.all(np.abs(exact - a) <= bound)


@pytest.mark.parametrize("kind,params", [("aniso", (0.0, 1.0)), ("aniso", (1.0, -1.0)),
                                         ("shear_h", np.inf), ("rotation", 0.1)])
def test_invalid_params(kind, params):
    with pytest.raises(ValidationError):
        predict_theta_prime(kind, params, TH)
