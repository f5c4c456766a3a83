"""Anisotropic surface energies gamma(n) and their Cahn-Hoffman vectors.

All evaluations are vectorised over unit directions of shape (..., 2).  The
angle convention is ``n = (-sin(theta), cos(theta))``; ``n_perp`` is the
clockwise rotation of ``n``, so ``dn/dtheta = -n_perp``.

For a 1-homogeneous extension the gradient at a unit vector splits as
``xi = ghat(theta) n - ghat'(theta) n_perp`` and the nonzero Hessian eigenvalue
is ``lambda = ghat + ghat''``; every family below satisfies both identities.
"""
from __future__ import annotations

import logging
import math

import numpy as np

from .geometry import _arr, perp

logger = logging.getLogger(__name__)

SYMMETRY_SAMPLES = 360
SYMMETRY_TOL = 1e-12
WEAK_TOL = 1e-12


class AnisotropyError(ValueError):
    """The surface energy violates a structural requirement."""


def direction(theta):
    theta = _arr(theta)
    return np.stack([-np.sin(theta), np.cos(theta)], axis=-1)


def angle(n):
    n = _arr(n)
    return np.arctan2(-n[..., 0], n[..., 1])


def _normalize(p):
    p = _arr(p)
    return p / np.linalg.norm(p, axis=-1, keepdims=True)


class Anisotropy:
    """Base class. Subclasses implement ``gamma`` and either ``xi`` or ``gamma_hat_prime``."""

    family = "abstract"

    def __init__(self):
        self._validate()

    # -- evaluations on unit directions --
    def gamma(self, n):
        return self.gamma_hat(angle(n))

    def xi(self, n):
        n = _arr(n)
        th = angle(n)
        g = self.gamma_hat(th)[..., None]
        dg = self.gamma_hat_prime(th)[..., None]
        return g * n - dg * perp(n)

    def lam(self, n):
        th = angle(n)
        return self.gamma_hat(th) + self.gamma_hat_second(th)

    def hessian(self, n):
        n = _arr(n)
        t = perp(n)
        return self.lam(n)[..., None, None] * (t[..., :, None] * t[..., None, :])

    # -- angle parametrisation --
    def gamma_hat(self, theta):
        return self.gamma(direction(theta))

    def gamma_hat_prime(self, theta):
        n = direction(theta)
        # d/dtheta gamma(n(theta)) = xi . dn/dtheta = -xi . n_perp
        return -np.sum(self.xi(n) * perp(n), axis=-1)

    def gamma_hat_second(self, theta, step=1e-5):
        theta = _arr(theta)
        return (self.gamma_hat_prime(theta + step) - self.gamma_hat_prime(theta - step)) / (2 * step)

    # -- homogeneous extension --
    def gamma_ext(self, p):
        p = _arr(p)
        r = np.linalg.norm(p, axis=-1)
        safe = np.where(r > 0, r, 1.0)[..., None]
        return np.where(r > 0, r * self.gamma(p / safe), 0.0)

    # -- structure --
    def classify(self, samples=4096):
        if samples < 64:
            raise ValueError("classification needs at least 64 samples")
        th = np.linspace(-np.pi, np.pi, samples, endpoint=False)
        return "weak" if np.all(self.lam(direction(th)) >= -WEAK_TOL) else "strong"

    def is_weak(self, samples=4096):
        return self.classify(samples) == "weak"

    def scaled(self, factor):
        return Scaled(self, factor)

    def to_record(self):
        raise NotImplementedError

    def _validate(self):
        th = np.linspace(-np.pi, np.pi, SYMMETRY_SAMPLES, endpoint=False)
        n = direction(th)
        g = np.asarray(self.gamma(n), dtype=float)
        if not np.all(np.isfinite(g)) or np.any(g <= 0.0):
            raise AnisotropyError(f"{self.family}: gamma(n) must be finite and positive on the unit circle")
        gm = np.asarray(self.gamma(-n), dtype=float)
        err = np.max(np.abs(g - gm) / np.maximum(1.0, np.abs(g)))
        if err > SYMMETRY_TOL:
            raise AnisotropyError(
                f"{self.family}: energy must satisfy the symmetry requirement gamma(-n) = gamma(n) "
                f"(max violation {err:.3e} over {SYMMETRY_SAMPLES} directions)"
            )

    def __repr__(self):
        rec = {k: v for k, v in self.to_record().items() if k != "family"}
        args = ", ".join(f"{k}={v!r}" for k, v in rec.items())
        return f"{type(self).__name__}({args})"


class Isotropic(Anisotropy):
    family = "isotropic"

    def gamma(self, n):
        return np.ones(np.shape(n)[:-1])

    def xi(self, n):
        return _arr(n).copy()

    def lam(self, n):
        return np.ones(np.shape(n)[:-1])

    def gamma_hat(self, theta):
        return np.ones(np.shape(theta))

    def gamma_hat_prime(self, theta):
        return np.zeros(np.shape(theta))

    def gamma_hat_second(self, theta, step=None):
        return np.zeros(np.shape(theta))

    def to_record(self):
        return {"family": self.family}


class Riemannian(Anisotropy):
    """``gamma(n) = sum_l sqrt(n^T G_l n)`` with symmetric positive definite ``G_l``."""

    family = "riemannian"

    def __init__(self, G):
        G = np.asarray(G, dtype=float)
        if G.ndim == 2:
            G = G[None]
        if G.ndim != 3 or G.shape[1:] != (2, 2) or G.shape[0] < 1:
            raise AnisotropyError("riemannian: G must be a 2x2 matrix or a list of them")
        for l, Gl in enumerate(G):
            if not np.allclose(Gl, Gl.T, rtol=0, atol=1e-14):
                raise AnisotropyError(f"riemannian: G[{l}] is not symmetric")
            if np.linalg.det(Gl) <= 0 or np.trace(Gl) <= 0:
                raise AnisotropyError(f"riemannian: G[{l}] is not positive definite")
        self.G = G
        super().__init__()

    def _gamma_l(self, n):
        n = _arr(n)
        q = np.einsum("...i,lij,...j->...l", n, self.G, n)
        return np.sqrt(q)

    def gamma(self, n):
        return self._gamma_l(n).sum(axis=-1)

    def gamma_ext(self, p):
        return self.gamma(p)

    def xi(self, n):
        n = _arr(n)
        gl = self._gamma_l(n)
        Gn = np.einsum("lij,...j->...li", self.G, n)
        return np.sum(Gn / gl[..., None], axis=-2)

    def lam(self, n):
        gl = self._gamma_l(n)
        return np.sum(np.linalg.det(self.G) / gl**3, axis=-1)

    def gamma_hat_second(self, theta, step=None):
        return self.lam(direction(theta)) - self.gamma_hat(theta)

    def to_record(self):
        return {"family": self.family, "G": self.G.tolist()}


class RegularizedL1(Riemannian):
    """``sqrt(n1^2 + eps^2 n2^2) + sqrt(eps^2 n1^2 + n2^2)``."""

    family = "regularized_l1"

    def __init__(self, eps):
        eps = float(eps)
        if not 0.0 < eps < 1.0:
            raise AnisotropyError("regularized_l1: eps must lie in (0, 1)")
        self.eps = eps
        super().__init__([np.diag([1.0, eps**2]), np.diag([eps**2, 1.0])])

    def to_record(self):
        return {"family": self.family, "eps": self.eps}


class LrNorm(Anisotropy):
    """``gamma(n) = (|n1|^r + |n2|^r)^(1/r)``."""

    family = "lr_norm"

    def __init__(self, r):
        r = float(r)
        if not r > 1.0:
            raise AnisotropyError("lr_norm: r must exceed 1")
        self.r = r
        if r < 2.0:
            logger.warning("lr_norm with r=%g < 2 is not C^2 at the axes; lambda uses finite differences", r)
        super().__init__()

    def gamma(self, n):
        a = np.abs(_arr(n))
        return (a[..., 0] ** self.r + a[..., 1] ** self.r) ** (1.0 / self.r)

    def gamma_ext(self, p):
        return self.gamma(p)

    def xi(self, n):
        n = _arr(n)
        g = self.gamma(n)
        return g[..., None] ** (1.0 - self.r) * np.abs(n) ** (self.r - 2.0) * n

    def lam(self, n):
        if self.r < 2.0:
            return super().lam(n)
        n = _arr(n)
        g = self.gamma(n)
        return (self.r - 1.0) * np.abs(n[..., 0] * n[..., 1]) ** (self.r - 2.0) / g ** (2.0 * self.r - 1.0)

    def gamma_hat_second(self, theta, step=1e-5):
        if self.r < 2.0:
            return super().gamma_hat_second(theta, step)
        return self.lam(direction(theta)) - self.gamma_hat(theta)

    def to_record(self):
        return {"family": self.family, "r": self.r}


class MFold(Anisotropy):
    """``gamma = 1 + beta cos(m (theta - theta0))``."""

    family = "m_fold"

    def __init__(self, m, beta, theta0=0.0):
        if int(m) != m or int(m) not in (2, 3, 4, 6):
            raise AnisotropyError("m_fold: m must be one of 2, 3, 4, 6")
        if beta < 0:
            raise AnisotropyError("m_fold: beta must be >= 0")
        if not 0.0 <= theta0 <= math.pi:
            raise AnisotropyError("m_fold: theta0 must lie in [0, pi]")
        self.m, self.beta, self.theta0 = int(m), float(beta), float(theta0)
        super().__init__()

    def gamma_hat(self, theta):
        return 1.0 + self.beta * np.cos(self.m * (_arr(theta) - self.theta0))

    def gamma_hat_prime(self, theta):
        return -self.m * self.beta * np.sin(self.m * (_arr(theta) - self.theta0))

    def gamma_hat_second(self, theta, step=None):
        return -(self.m**2) * self.beta * np.cos(self.m * (_arr(theta) - self.theta0))

    def lam(self, n):
        th = angle(n)
        return 1.0 - self.beta * (self.m**2 - 1) * np.cos(self.m * (th - self.theta0))

    def to_record(self):
        return {"family": self.family, "m": self.m, "beta": self.beta, "theta0": self.theta0}


class Custom(Anisotropy):
    """User-supplied ``ghat(theta)`` and ``ghat'(theta)`` (vectorised callables).

    Without ``d2gamma_hat`` the second derivative comes from central
    differences of ``ghat'`` with step 1e-5.
    """

    family = "custom"

    def __init__(self, gamma_hat, dgamma_hat, d2gamma_hat=None, *, source=None):
        self._g, self._dg, self._d2g = gamma_hat, dgamma_hat, d2gamma_hat
        self.source = source
        super().__init__()

    def gamma_hat(self, theta):
        theta = _arr(theta)
        return np.broadcast_to(_arr(self._g(theta)), theta.shape).copy()

    def gamma_hat_prime(self, theta):
        theta = _arr(theta)
        return np.broadcast_to(_arr(self._dg(theta)), theta.shape).copy()

    def gamma_hat_second(self, theta, step=1e-5):
        if self._d2g is None:
            return super().gamma_hat_second(theta, step)
        theta = _arr(theta)
        return np.broadcast_to(_arr(self._d2g(theta)), theta.shape).copy()

    def to_record(self):
        rec = {"family": self.family}
        if self.source:
            rec.update(self.source)
        return rec


class Scaled(Anisotropy):
    """``c * gamma`` for a base energy and constant ``c > 0``."""

    family = "scaled"

    def __init__(self, base, factor):
        if not factor > 0:
            raise AnisotropyError("scale factor must be positive")
        self.base, self.factor = base, float(factor)
        super().__init__()

    def gamma(self, n):
        return self.factor * self.base.gamma(n)

    def xi(self, n):
        return self.factor * self.base.xi(n)

    def lam(self, n):
        return self.factor * self.base.lam(n)

    def gamma_hat(self, theta):
        return self.factor * self.base.gamma_hat(theta)

    def gamma_hat_prime(self, theta):
        return self.factor * self.base.gamma_hat_prime(theta)

    def gamma_hat_second(self, theta, step=1e-5):
        return self.factor * self.base.gamma_hat_second(theta, step)

    def to_record(self):
        return {"family": self.family, "factor": self.factor, "base": self.base.to_record()}


def custom_from_expression(expr, d_expr=None):
    """Build a :class:`Custom` energy from a sympy expression in ``theta``."""
    import sympy

    theta = sympy.Symbol("theta", real=True)
    try:
        g = sympy.sympify(expr, locals={"theta": theta})
        dg = sympy.sympify(d_expr, locals={"theta": theta}) if d_expr is not None else sympy.diff(g, theta)
    except (sympy.SympifyError, TypeError) as exc:
        raise AnisotropyError(f"custom: cannot parse gamma expression {expr!r}: {exc}") from exc
    if g.free_symbols - {theta} or dg.free_symbols - {theta}:
        raise AnisotropyError("custom: expressions may only depend on theta")
    d2g = sympy.diff(dg, theta)
    fns = [sympy.lambdify(theta, e, modules="numpy") for e in (g, dg, d2g)]
    source = {"gamma": str(expr)}
    if d_expr is not None:
        source["dgamma"] = str(d_expr)
    return Custom(*fns, source=source)


_FAMILIES = {
    "isotropic": (Isotropic, set()),
    "riemannian": (Riemannian, {"G"}),
    "lr_norm": (LrNorm, {"r"}),
    "m_fold": (MFold, {"m", "beta", "theta0"}),
    "regularized_l1": (RegularizedL1, {"eps"}),
}


def make_anisotropy(record):
    """Build an energy from a tagged record such as ``{"family": "m_fold", "m": 4, "beta": 0.3}``."""
    record = dict(record)
    family = record.pop("family", None)
    if family == "custom":
        unknown = set(record) - {"gamma", "dgamma"}
        if unknown or "gamma" not in record:
            raise AnisotropyError("custom: expected keys 'gamma' and optional 'dgamma'")
        return custom_from_expression(record["gamma"], record.get("dgamma"))
    if family == "scaled":
        if set(record) != {"factor", "base"}:
            raise AnisotropyError("scaled: expected keys 'factor' and 'base'")
        return Scaled(make_anisotropy(record["base"]), record["factor"])
    if family not in _FAMILIES:
        raise AnisotropyError(f"unknown anisotropy family {family!r}")
    cls, allowed = _FAMILIES[family]
    unknown = set(record) - allowed
    if unknown:
        raise AnisotropyError(f"{family}: unexpected parameters {sorted(unknown)}")
    return cls(**record)


def frank_diagram(aniso, M=512):
    """Sample the 1/gamma polar plot; returns ``(points, convex)``.

    ``convex`` follows the weak/strong classification of ``aniso``.
    """
    if M < 16:
        raise ValueError("Frank diagram needs M >= 16 points")
    phi = 2.0 * np.pi * np.arange(M) / M
    p = np.column_stack([np.cos(phi), np.sin(phi)])
    pts = p / aniso.gamma(p)[:, None]
    return pts, aniso.is_weak()
