"""Stabilizing functions k(n), the surface energy matrix Z_k(n) and audits.

The minimal stabilizing function is

    k0(n) = max_{nhat . n >= 0} F(n, nhat),
    F(n, nhat) = [gamma(nhat)^2 - gamma(n)^2
                  + 2 gamma(n) (xi . nhat_perp)(n . nhat_perp)] / [gamma(n) (n . nhat_perp)^2],

with the removable singularity at ``nhat = n`` filled by
``lambda(n) + |xi|^2 / gamma(n)``.  Any ``k >= k0`` makes
``gamma(n) nhat_perp^T Z_k(n) nhat_perp >= gamma(nhat)^2`` hold for all pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .anisotropy import Isotropic, LrNorm, MFold, Riemannian, Scaled, angle, direction
from .geometry import perp

SINGULAR_DELTA = 1e-4
EXTENDED_ZONE = 0.05
PRESCAN_SAMPLES = 513
GOLDEN_TOL = 1e-12
CACHE_RESOLUTION = 4096
CACHE_MARGIN = 1e-6

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class StabilizerError(ValueError):
    pass


def zk_matrix(aniso, n, k):
    """``gamma I - n xi^T - xi n^T + k n n^T`` for directions of shape (..., 2)."""
    n = np.asarray(n, dtype=float)
    g = aniso.gamma(n)
    xi = aniso.xi(n)
    k = np.asarray(k, dtype=float)
    nn = n[..., :, None] * n[..., None, :]
    nx = n[..., :, None] * xi[..., None, :]
    eye = np.eye(2)
    return g[..., None, None] * eye - nx - np.swapaxes(nx, -1, -2) + k[..., None, None] * nn


def limit_value(aniso, n):
    """Value of F at ``nhat -> n``: ``lambda(n) + |xi|^2 / gamma(n)``."""
    n = np.asarray(n, dtype=float)
    xi = aniso.xi(n)
    return aniso.lam(n) + np.sum(xi * xi, axis=-1) / aniso.gamma(n)


def F_value(aniso, n, nhat, delta=SINGULAR_DELTA):
    """F(n, nhat), replaced by the limit value where ``|n . nhat_perp| < delta``.

    ``delta=0`` returns the raw quotient everywhere except at exact coincidence.
    """
    n = np.asarray(n, dtype=float)
    nhat = np.asarray(nhat, dtype=float)
    n, nhat = np.broadcast_arrays(n, nhat)
    s = np.sum(n * perp(nhat), axis=-1)
    c = np.sum(n * nhat, axis=-1)
    if np.any((s == 0.0) & (c < 0.0)):
        raise StabilizerError("F(n, nhat) has a pole at nhat = -n")
    g = aniso.gamma(n)
    gh = aniso.gamma(nhat)
    xs = np.sum(aniso.xi(n) * perp(nhat), axis=-1)
    near = (np.abs(s) < delta) | (s == 0.0)
    safe = np.where(near, 1.0, s)
    quotient = (gh**2 - g**2 + 2.0 * g * xs * safe) / (g * safe**2)
    if np.any(near):
        return np.where(near, limit_value(aniso, n), quotient)
    return quotient


def _f_tilde_quotient(aniso, theta, theta_hat):
    d = theta_hat - theta
    sd, cd = np.sin(d), np.cos(d)
    g = aniso.gamma_hat(theta)
    dg = aniso.gamma_hat_prime(theta)
    gh = aniso.gamma_hat(theta_hat)
    return ((gh - g) * (gh + g) - 2.0 * g * dg * cd * sd) / (g * sd**2) + 2.0 * g


def f_tilde(aniso, theta, theta_hat, delta=SINGULAR_DELTA):
    """F in the angle variables; ``|sin(theta_hat - theta)| < delta`` gives the limit value.

    The numerator cancels to O(sin^2) as ``theta_hat -> theta``; pairs with
    ``|sin| < EXTENDED_ZONE`` are re-evaluated in extended precision.
    """
    theta = np.asarray(theta, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta, theta_hat = np.broadcast_arrays(theta, theta_hat)
    sd = np.abs(np.sin(theta_hat - theta))
    near = sd < delta
    zone = ~near & (sd < EXTENDED_ZONE)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = _f_tilde_quotient(aniso, theta, theta_hat)
    if np.any(zone):
        ext = _f_tilde_quotient(aniso, theta[zone].astype(np.longdouble), theta_hat[zone].astype(np.longdouble))
        value[zone] = ext.astype(float)
    if np.any(near):
        th = theta[near]
        g = aniso.gamma_hat(th)
        dg = aniso.gamma_hat_prime(th)
        value[near] = g + aniso.gamma_hat_second(th) + (g**2 + dg**2) / g
    return value


def _golden_max(f, a, b, tol=GOLDEN_TOL, max_iter=200):
    """Vectorised golden-section maximisation of ``f`` on brackets ``[a, b]``."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if np.all(b - a <= tol):
            break
        left = fc >= fd  # maximiser lies in [a, d]
        a, b = np.where(left, a, c), np.where(left, d, b)
        # the surviving interior point is reused; one new evaluation per bracket
        keep, fkeep = np.where(left, c, d), np.where(left, fc, fd)
        new = np.where(left, b - _INV_PHI * (b - a), a + _INV_PHI * (b - a))
        fnew = f(new)
        c, fc = np.where(left, new, keep), np.where(left, fnew, fkeep)
        d, fd = np.where(left, keep, new), np.where(left, fkeep, fnew)
    x = np.where(fc >= fd, c, d)
    return x, np.maximum(fc, fd)


def k0_numeric(aniso, n=None, *, theta=None, samples=PRESCAN_SAMPLES, tol=GOLDEN_TOL):
    """Minimal stabilizing function by dense pre-scan plus golden-section refinement.

    Pass unit directions ``n`` (shape (..., 2)) or angles ``theta``.
    """
    if theta is None:
        if n is None:
            raise TypeError("give either n or theta")
        theta = angle(n)
    theta = np.asarray(theta, dtype=float)
    shape = theta.shape
    th = theta.reshape(-1)
    if samples < 3 or samples % 2 == 0:
        raise ValueError("pre-scan sample count must be odd and >= 3 so that theta_hat = theta is sampled")
    offsets = np.linspace(-np.pi / 2, np.pi / 2, samples)
    offsets[samples // 2] = 0.0
    grid = th[:, None] + offsets[None, :]
    vals = f_tilde(aniso, th[:, None], grid)
    if not np.all(np.isfinite(vals)):
        raise StabilizerError(f"{aniso.family}: non-finite F values; the energy violates the stability hypotheses")
    i = np.argmax(vals, axis=1)
    best = vals[np.arange(th.size), i]
    lo = offsets[np.clip(i - 1, 0, samples - 1)]
    hi = offsets[np.clip(i + 1, 0, samples - 1)]

    rows = np.arange(th.size)

    def objective(off):
        return f_tilde(aniso, th[rows], th[rows] + off)

    _, refined = _golden_max(objective, lo, hi, tol=tol)
    k0 = np.maximum(best, refined)
    return k0.reshape(shape)


def k0_explicit(aniso, n):
    """Closed-form ``k0`` (or a valid upper bound) when one is known, else ``None``."""
    kind = explicit_kind(aniso)
    if kind is None:
        return None
    n = np.asarray(n, dtype=float)
    if isinstance(aniso, Isotropic):
        return np.full(n.shape[:-1], 2.0)
    if isinstance(aniso, Riemannian):
        gl = aniso._gamma_l(n)
        return np.sum(np.trace(aniso.G, axis1=1, axis2=2) / gl, axis=-1)
    if isinstance(aniso, LrNorm):
        g = aniso.gamma(n)
        if aniso.r == 4.0:
            return 2.0 * g**-3
        n1s, n2s = n[..., 0] ** 2, n[..., 1] ** 2
        return 2.0 * g**-5 * (n1s**2 + n1s * n2s + n2s**2)
    if isinstance(aniso, MFold):
        g = aniso.gamma(n)
        b = aniso.beta
        if aniso.m == 2:
            return 4.0 - 2.0 * g + 4.0 * b**2 / g
        return 2.0 * g + (16.0 * b + 16.0 * b**2) / g
    if isinstance(aniso, Scaled):
        base = k0_explicit(aniso.base, n)
        return None if base is None else aniso.factor * base
    return None


def explicit_kind(aniso):
    """``"exact"``, ``"bound"`` or ``None`` for the closed form of :func:`k0_explicit`."""
    if isinstance(aniso, Isotropic):
        return "exact"
    if isinstance(aniso, Riemannian):
        return "exact" if aniso.G.shape[0] == 1 else "bound"
    if isinstance(aniso, LrNorm):
        return "exact" if aniso.r in (4.0, 6.0) else None
    if isinstance(aniso, MFold):
        if aniso.beta == 0.0:
            return "exact"
        if aniso.m == 2 and aniso.theta0 in (0.0, math.pi / 2, math.pi):
            return "exact"
        if aniso.m == 4 and aniso.theta0 in (0.0, math.pi / 2, math.pi):
            return "bound"
        return None
    if isinstance(aniso, Scaled):
        return explicit_kind(aniso.base)
    return None


# --- stabilizer providers ---------------------------------------------------------


class Stabilizer:
    """Callable ``k(n)`` on unit directions of shape (..., 2)."""

    mode = "abstract"

    def __call__(self, n):
        raise NotImplementedError


class ExplicitStabilizer(Stabilizer):
    mode = "explicit"

    def __init__(self, aniso):
        if explicit_kind(aniso) is None:
            raise StabilizerError(f"no closed-form stabilizer for {aniso!r}; use mode 'numeric'")
        self.aniso = aniso

    def __call__(self, n):
        return k0_explicit(self.aniso, n)


class ConstantStabilizer(Stabilizer):
    mode = "constant"

    def __init__(self, k):
        if not k > 0:
            raise StabilizerError("constant stabilizer must be positive")
        self.k = float(k)

    def __call__(self, n):
        return np.full(np.shape(n)[:-1], self.k)


class ScaledStabilizer(Stabilizer):
    mode = "scaled"

    def __init__(self, base, factor):
        self.base, self.factor = base, float(factor)

    def __call__(self, n):
        return self.factor * self.base(n)


class CachedK0(Stabilizer):
    """Table of numeric ``k0`` at uniform angles with an upward-safe interpolant.

    Between nodes ``i`` and ``i+1`` the value is the larger endpoint times
    ``1 + margin`` plus one eighth of the largest nearby second difference,
    which bounds the overshoot of a smooth function between samples.
    """

    mode = "numeric"

    def __init__(self, aniso, resolution=CACHE_RESOLUTION, margin=CACHE_MARGIN):
        self.aniso = aniso
        self.resolution = int(resolution)
        self.margin = float(margin)
        self.theta = -np.pi + 2.0 * np.pi * np.arange(self.resolution) / self.resolution
        k = k0_numeric(aniso, theta=self.theta)
        k.setflags(write=False)
        self.table = k
        d2 = np.abs(np.roll(k, -1) - 2.0 * k + np.roll(k, 1))
        pooled = np.maximum(k, np.roll(k, -1))
        slack = np.maximum(d2, np.roll(d2, -1)) / 8.0
        self._upper = (1.0 + self.margin) * pooled + slack

    def __call__(self, n):
        th = angle(n)
        pos = (th + np.pi) / (2.0 * np.pi) * self.resolution
        i = np.floor(pos).astype(int) % self.resolution
        return self._upper[i]

    def interpolate(self, theta):
        """Plain periodic linear interpolation of the table (no safety margin)."""
        pos = (np.asarray(theta, dtype=float) + np.pi) / (2.0 * np.pi) * self.resolution
        i = np.floor(pos).astype(int)
        w = pos - i
        i %= self.resolution
        return (1 - w) * self.table[i] + w * self.table[(i + 1) % self.resolution]


def make_stabilizer(aniso, mode="explicit", *, k=None, margin=1.0, resolution=CACHE_RESOLUTION):
    """Build a stabilizer.

    ``mode``: ``"explicit"`` (closed form), ``"numeric"`` (cached k0),
    ``"constant"`` (needs ``k``) or ``"scaled"`` (cached k0 times ``margin >= 1``).
    """
    if mode == "explicit":
        return ExplicitStabilizer(aniso)
    if mode == "numeric":
        return CachedK0(aniso, resolution=resolution)
    if mode == "constant":
        if k is None:
            raise StabilizerError("constant stabilizer needs a value k")
        return ConstantStabilizer(k)
    if mode == "scaled":
        if margin < 1.0:
            raise StabilizerError("scaled stabilizer margin must be >= 1")
        return ScaledStabilizer(CachedK0(aniso, resolution=resolution), margin)
    raise StabilizerError(f"unknown stabilizer mode {mode!r}")


# --- audit ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditReport:
    min_gap: float
    theta: float
    theta_hat: float
    tol: float

    @property
    def passed(self):
        return self.min_gap >= -self.tol


def dissipation_gap(aniso, k, n, nhat):
    """``gamma(n) nhat_perp^T Z_k(n) nhat_perp - gamma(nhat)^2`` (broadcasting)."""
    Z = zk_matrix(aniso, n, k)
    t = perp(np.asarray(nhat, dtype=float))
    quad = np.einsum("...i,...ij,...j->...", t, Z, t)
    return aniso.gamma(n) * quad - aniso.gamma(nhat) ** 2


def dissipation_audit(aniso, k_provider, grid=360, tol=None):
    """Check the dissipation inequality on a ``grid x grid`` set of direction pairs."""
    if grid < 64:
        raise ValueError("audit grid must be >= 64")
    th = -np.pi + 2.0 * np.pi * np.arange(grid) / grid
    n = direction(th)
    k = np.asarray(k_provider(n), dtype=float)
    gap = dissipation_gap(aniso, k[:, None], n[:, None, :], n[None, :, :])
    if tol is None:
        tol = 1e-10 * max(1.0, float(np.max(aniso.gamma(n))) ** 2)
    i, j = np.unravel_index(np.argmin(gap), gap.shape)
    return AuditReport(min_gap=float(gap[i, j]), theta=float(th[i]), theta_hat=float(th[j]), tol=tol)
