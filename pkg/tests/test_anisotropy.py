import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sppfem.anisotropy import (
    AnisotropyError,
    Custom,
    Isotropic,
    LrNorm,
    MFold,
    RegularizedL1,
    Riemannian,
    Scaled,
    angle,
    custom_from_expression,
    direction,
    frank_diagram,
    make_anisotropy,
)

G12 = np.diag([1.0, 2.0])

FAMILIES = [
    Isotropic(),
    Riemannian([G12]),
    Riemannian([G12, np.array([[2.0, 0.5], [0.5, 1.0]])]),
    RegularizedL1(0.1),
    LrNorm(4.0),
    LrNorm(6.0),
    LrNorm(3.0),
    MFold(2, 1 / 3),
    MFold(2, 0.6),
    MFold(4, 0.3),
    MFold(4, 0.05, 0.3),
    MFold(6, 0.02),
    custom_from_expression("1 + 0.1*cos(2*theta)**2"),
    Scaled(LrNorm(4.0), 3.0),
]
ids = [repr(a) for a in FAMILIES]
angles = st.floats(-math.pi, math.pi)


def test_gamma_examples():
    n = direction(np.array([0.3, 1.7]))
    assert np.allclose(Isotropic().gamma(n), 1.0)
    assert Riemannian([G12]).gamma(np.array([0.0, 1.0])) == pytest.approx(math.sqrt(2), abs=1e-15)
    s = 1 / math.sqrt(2)
    assert LrNorm(4.0).gamma(np.array([s, s])) == pytest.approx(0.840896415253714, abs=1e-12)


def test_xi_examples():
    n = np.array([0.0, 1.0])
    assert np.allclose(Isotropic().xi(n), n)
    assert np.allclose(Riemannian([G12]).xi(n), [0.0, math.sqrt(2)], atol=1e-15)
    assert np.allclose(MFold(4, 0.3).xi(n), [0.0, 1.3], atol=1e-15)


def test_lambda_examples():
    assert np.allclose(Isotropic().lam(direction(np.linspace(-3, 3, 7))), 1.0)
    assert LrNorm(4.0).lam(np.array([1.0, 0.0])) == pytest.approx(0.0, abs=1e-15)
    assert MFold(2, 1 / 3).lam(direction(0.0)) == pytest.approx(0.0, abs=1e-15)


def test_angle_convention():
    assert np.allclose(direction(0.0), [0.0, 1.0])
    assert np.allclose(direction(math.pi / 2), [-1.0, 0.0])
    th = np.linspace(-3.1, 3.1, 11)
    assert np.allclose(angle(direction(th)), th)


@pytest.mark.parametrize("a", FAMILIES, ids=ids)
def test_xi_matches_finite_difference_gradient(a):
    rng = np.random.default_rng(7)
    n = direction(rng.uniform(-np.pi, np.pi, 64))
    h = 1e-6
    fd = np.stack(
        [(a.gamma_ext(n + h * e) - a.gamma_ext(n - h * e)) / (2 * h) for e in np.eye(2)],
        axis=-1,
    )
    xi = a.xi(n)
    err = np.linalg.norm(xi - fd, axis=-1) / np.linalg.norm(xi, axis=-1)
    assert err.max() <= 1e-6


@pytest.mark.parametrize("a", FAMILIES, ids=ids)
def test_lambda_matches_finite_difference_curvature(a):
    rng = np.random.default_rng(11)
    n = direction(rng.uniform(-np.pi, np.pi, 64))
    t = np.stack([n[:, 1], -n[:, 0]], axis=-1)
    h = 1e-4
    fd = (a.gamma_ext(n + h * t) - 2 * a.gamma(n) + a.gamma_ext(n - h * t)) / h**2
    lam = a.lam(n)
    assert np.abs(lam - fd).max() <= 1e-5 * max(1.0, np.abs(lam).max())


@pytest.mark.parametrize("a", FAMILIES, ids=ids)
def test_hessian_structure(a):
    n = direction(np.linspace(-np.pi, np.pi, 33))
    H = a.hessian(n)
    assert np.allclose(np.einsum("...ij,...j->...i", H, n), 0, atol=1e-12)
    assert np.allclose(H, np.swapaxes(H, -1, -2))


@pytest.mark.parametrize("a", FAMILIES, ids=ids)
@given(th=angles)
def test_euler_identity_and_symmetry(a, th):
    n = direction(np.array([th]))
    assert np.sum(a.xi(n) * n, axis=-1)[0] == pytest.approx(a.gamma(n)[0], abs=1e-12)
    assert a.gamma(-n)[0] == pytest.approx(a.gamma(n)[0], abs=1e-14)
    assert a.gamma(n)[0] > 0


def test_regularized_l1_is_a_two_metric_riemannian():
    eps = 0.1
    r = RegularizedL1(eps)
    g = Riemannian([np.diag([1.0, eps**2]), np.diag([eps**2, 1.0])])
    n = direction(np.linspace(-np.pi, np.pi, 360, endpoint=False))
    assert np.abs(r.gamma(n) - g.gamma(n)).max() <= 1e-14


def test_classification():
    assert LrNorm(4.0).classify() == "weak"
    assert LrNorm(6.0).classify() == "weak"
    assert MFold(4, 0.3).classify() == "strong"
    assert MFold(2, 1 / 3).classify() == "weak"
    assert MFold(4, 1 / 15).classify() == "weak"
    assert Riemannian([G12]).classify() == "weak"
    with pytest.raises(ValueError):
        Isotropic().classify(samples=32)


def test_frank_diagram():
    pts, convex = frank_diagram(Isotropic(), 64)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-14) and convex
    assert frank_diagram(MFold(4, 0.3), 64)[1] is False
    assert frank_diagram(MFold(2, 0.6), 64)[1] is False
    assert frank_diagram(Riemannian([G12]), 64)[1] is True
    with pytest.raises(ValueError):
        frank_diagram(Isotropic(), 8)


def test_symmetry_violation_is_rejected():
    with pytest.raises(AnisotropyError, match="symmetry"):
        custom_from_expression("2 + sin(theta)")
    with pytest.raises(AnisotropyError, match="symmetry"):
        MFold(3, 0.1)


def test_parameter_validation():
    with pytest.raises(AnisotropyError):
        MFold(5, 0.1)
    with pytest.raises(AnisotropyError):
        RegularizedL1(1.5)
    with pytest.raises(AnisotropyError):
        Riemannian([np.array([[1.0, 2.0], [2.0, 1.0]])])
    with pytest.raises(AnisotropyError):
        LrNorm(1.0)
    with pytest.raises(AnisotropyError):
        make_anisotropy({"family": "m_fold", "m": 4, "beta": 0.1, "gamma": 2})


def test_small_r_warns(caplog):
    a = LrNorm(1.5)
    assert "smooth" in caplog.text.lower() or "warn" in caplog.text.lower()
    assert a.classify() in ("weak", "strong")


def test_custom_matches_builtin():
    c = Custom(lambda t: 1 + 0.3 * np.cos(4 * t), lambda t: -1.2 * np.sin(4 * t))
    m = MFold(4, 0.3)
    n = direction(np.linspace(-3, 3, 50))
    assert np.allclose(c.gamma(n), m.gamma(n), atol=1e-14)
    assert np.allclose(c.xi(n), m.xi(n), atol=1e-14)
    # second derivative from central differences
    assert np.allclose(c.lam(n), m.lam(n), atol=1e-5)


@pytest.mark.parametrize("a", FAMILIES[:-2], ids=ids[:-2])
def test_record_round_trip(a):
    b = make_anisotropy(a.to_record())
    n = direction(np.linspace(-3, 3, 20))
    assert np.array_equal(a.gamma(n), b.gamma(n))


def test_scaled_round_trip():
    a = Scaled(LrNorm(4.0), 3.0)
    b = make_anisotropy(a.to_record())
    n = direction(np.linspace(-3, 3, 20))
    assert np.array_equal(a.gamma(n), b.gamma(n))
