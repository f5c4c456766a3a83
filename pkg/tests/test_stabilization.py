import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sppfem.anisotropy import (
    Isotropic,
    LrNorm,
    MFold,
    RegularizedL1,
    Riemannian,
    Scaled,
    custom_from_expression,
    direction,
)
from sppfem.geometry import perp
from sppfem.stabilization import (
    CachedK0,
    StabilizerError,
    F_value,
    dissipation_audit,
    explicit_kind,
    f_tilde,
    k0_explicit,
    k0_numeric,
    limit_value,
    make_stabilizer,
    zk_matrix,
)

G12 = np.diag([1.0, 2.0])
FAMILIES = [
    Isotropic(),
    Riemannian([G12]),
    RegularizedL1(0.1),
    LrNorm(4.0),
    LrNorm(6.0),
    MFold(2, 1 / 3),
    MFold(2, 0.6),
    MFold(4, 0.3),
    MFold(6, 0.02),
    custom_from_expression("1 + 0.1*cos(2*theta)**2"),
]
ids = [repr(a) for a in FAMILIES]
EXACT = [Riemannian([G12]), LrNorm(4.0), LrNorm(6.0), MFold(2, 1 / 3), MFold(2, 0.6), MFold(2, 0.2, math.pi / 2)]
BOUND = [MFold(4, 0.3), MFold(4, 0.05), RegularizedL1(0.1), Riemannian([G12, np.array([[2.0, 0.5], [0.5, 1.0]])])]
TH360 = -np.pi + 2 * np.pi * np.arange(360) / 360


def brute_k0(aniso, theta, samples=40001):
    """Max of F over a dense grid of the half circle around n (vector form)."""
    off = np.linspace(-np.pi / 2, np.pi / 2, samples)
    n = direction(np.full(samples, theta))
    return F_value(aniso, n, direction(theta + off)).max()


def test_zk_examples():
    n = direction(np.linspace(-3, 3, 13))
    assert np.allclose(zk_matrix(Isotropic(), n, 2.0), np.eye(2), atol=1e-15)
    g = Riemannian([G12])
    n0 = np.array([1.0, 0.0])
    Z = zk_matrix(g, n0, k0_explicit(g, n0))
    assert np.allclose(Z, [[2.0, 0.0], [0.0, 1.0]], atol=1e-14)


@pytest.mark.parametrize("a", FAMILIES, ids=ids)
@given(th=st.floats(-math.pi, math.pi), k=st.floats(0.1, 20))
def test_zk_identities(a, th, k):
    n = direction(np.array(th))
    t = perp(n)
    Z = zk_matrix(a, n, k)
    assert np.allclose(Z, Z.T)
    assert np.allclose(Z @ t, perp(a.xi(n)), atol=1e-13)
    assert t @ Z @ t == pytest.approx(float(a.gamma(n)), abs=1e-13)


def test_F_examples():
    assert F_value(LrNorm(4.0), np.array([0.0, 1.0]), np.array([1.0, 0.0])) == pytest.approx(2.0, abs=1e-14)
    b = MFold(2, 1 / 3)
    assert F_value(b, direction(0.0), direction(np.pi / 2)) == pytest.approx(5 / 3, abs=1e-14)
    assert f_tilde(b, 0.0, np.pi / 2) == pytest.approx(5 / 3, abs=1e-14)
    n = direction(np.linspace(-3, 3, 9))
    assert np.allclose(limit_value(Isotropic(), n), 2.0)
    th = np.linspace(-3, 3, 50)
    assert np.allclose(f_tilde(Isotropic(), th, th + 0.7), 2.0, atol=1e-13)


def test_F_rejects_antipodal():
    n = direction(0.4)
    with pytest.raises(StabilizerError):
        F_value(Isotropic(), n, -n)


@pytest.mark.parametrize("a", FAMILIES, ids=ids)
def test_f_tilde_matches_F(a):
    rng = np.random.default_rng(3)
    th = rng.uniform(-np.pi, np.pi, 1000)
    off = rng.uniform(-np.pi / 2, np.pi / 2, 1000)
    ft = f_tilde(a, th, th + off)
    F = F_value(a, direction(th), direction(th + off))
    # away from the singular zone both formulas are plain quotients
    ok = np.abs(np.sin(off)) > 0.05
    assert np.abs(ft - F)[ok].max() <= 1e-12 * max(1.0, np.abs(F).max())
    assert np.abs(ft - F).max() <= 1e-7 * max(1.0, np.abs(F).max())


@pytest.mark.parametrize("a", FAMILIES, ids=ids)
@pytest.mark.parametrize("side", [1.0, -1.0])
def test_limit_consistency(a, side):
    n = direction(TH360)
    nh = direction(TH360 + side * 1e-5)
    assert np.abs(F_value(a, n, nh, delta=0.0) - limit_value(a, n)).max() <= 1e-3


def test_k0_examples():
    g = Riemannian([G12])
    assert k0_numeric(g, np.array([1.0, 0.0])) == pytest.approx(3.0, abs=1e-10)
    assert k0_numeric(LrNorm(4.0), np.array([0.0, 1.0])) == pytest.approx(2.0, abs=1e-10)
    assert k0_numeric(MFold(2, 1 / 3), direction(0.0)) == pytest.approx(5 / 3, abs=1e-10)
    assert k0_numeric(Isotropic(), theta=TH360) == pytest.approx(2.0, abs=1e-12)


def test_k0_explicit_examples():
    s = 1 / math.sqrt(2)
    gam = 0.25 ** (1 / 6)
    assert k0_explicit(LrNorm(6.0), np.array([s, s])) == pytest.approx(2 * gam**-5 * 0.75, rel=1e-14)
    assert k0_explicit(MFold(4, 0.3), direction(0.0)) == pytest.approx(7.4, abs=1e-13)
    assert k0_explicit(RegularizedL1(0.1), np.array([1.0, 0.0])) == pytest.approx(11.11, abs=1e-12)
    assert k0_explicit(MFold(6, 0.02), direction(0.0)) is None
    assert explicit_kind(MFold(2, 0.3, 0.7)) is None
    assert explicit_kind(MFold(4, 0.3)) == "bound"


@pytest.mark.parametrize("a", EXACT, ids=repr)
def test_explicit_equals_numeric(a):
    n = direction(TH360)
    ke = k0_explicit(a, n)
    assert np.abs(ke - k0_numeric(a, n)).max() <= 1e-8 * (1 + ke.max())


@pytest.mark.parametrize("a", BOUND, ids=repr)
def test_explicit_bounds_numeric(a):
    n = direction(TH360)
    assert np.all(k0_explicit(a, n) >= k0_numeric(a, n) - 1e-8)


@pytest.mark.parametrize("a", [LrNorm(4.0), MFold(2, 0.6), MFold(4, 0.3), MFold(6, 0.02)], ids=repr)
def test_k0_against_brute_force(a):
    for th in np.linspace(-3.0, 3.0, 7):
        brute = brute_k0(a, th)
        k = float(k0_numeric(a, theta=th))
        assert k >= brute - 1e-9
        assert k - brute <= 1e-6 * max(1.0, abs(brute))


@given(c=st.floats(0.2, 5.0))
def test_k0_homogeneity(c):
    base = MFold(4, 0.3)
    th = TH360[::9]
    assert np.allclose(k0_numeric(Scaled(base, c), theta=th), c * k0_numeric(base, theta=th), rtol=0, atol=1e-8 * c)


def test_k0_subadditivity():
    G1 = np.diag([1.0, 0.2])
    G2 = np.array([[2.0, 0.5], [0.5, 1.0]])
    both = Riemannian([G1, G2])
    th = TH360[::4]
    lhs = k0_numeric(both, theta=th)
    rhs = k0_numeric(Riemannian([G1]), theta=th) + k0_numeric(Riemannian([G2]), theta=th)
    assert np.all(lhs <= rhs + 1e-8)


@pytest.mark.parametrize("a", FAMILIES, ids=ids)
def test_zk_positive_definite_with_k0(a):
    n = direction(TH360)
    Z = zk_matrix(a, n, k0_numeric(a, n))
    assert np.linalg.eigvalsh(Z)[:, 0].min() > 0


def test_audit_examples():
    iso = dissipation_audit(Isotropic(), lambda n: np.full(n.shape[:-1], 2.0), grid=128)
    assert iso.passed and iso.min_gap >= -1e-14
    l4 = LrNorm(4.0)
    assert dissipation_audit(l4, lambda n: k0_explicit(l4, n), grid=128).passed
    half = dissipation_audit(l4, lambda n: 0.5 * k0_explicit(l4, n), grid=128)
    assert not half.passed
    g = Riemannian([G12])
    rep = dissipation_audit(g, lambda n: k0_explicit(g, n), grid=128)
    assert abs(rep.min_gap) <= 1e-12
    with pytest.raises(ValueError):
        dissipation_audit(g, lambda n: k0_explicit(g, n), grid=32)


@pytest.mark.parametrize("a", FAMILIES, ids=ids)
def test_cache_bounds_k0_off_grid(a):
    cache = CachedK0(a, resolution=512)
    th = np.random.default_rng(5).uniform(-np.pi, np.pi, 400)
    assert np.all(cache(direction(th)) >= k0_numeric(a, theta=th))
    assert dissipation_audit(a, cache, grid=96).passed


def test_cache_is_immutable():
    cache = CachedK0(Isotropic(), resolution=64)
    with pytest.raises(ValueError):
        cache.table[0] = 1.0
    assert np.allclose(cache.interpolate(np.linspace(-3, 3, 11)), 2.0)


def test_make_stabilizer():
    n = direction(TH360)
    assert np.allclose(make_stabilizer(Isotropic(), "constant", k=3.0)(n), 3.0)
    s = make_stabilizer(LrNorm(4.0), "scaled", margin=2.0, resolution=256)
    assert np.all(s(n) >= 2 * k0_numeric(LrNorm(4.0), n))
    with pytest.raises(StabilizerError):
        make_stabilizer(MFold(6, 0.02), "explicit")
    with pytest.raises(StabilizerError):
        make_stabilizer(Isotropic(), "constant")
    with pytest.raises(StabilizerError):
        make_stabilizer(Isotropic(), "constant", k=-1.0)
    with pytest.raises(StabilizerError):
        make_stabilizer(Isotropic(), "scaled", margin=0.5)
    with pytest.raises(StabilizerError):
        make_stabilizer(Isotropic(), "bogus")
