"""Closed polygonal curves: edge frames, lumped inner products, area, energy.

Vertices are stored clockwise so that the signed area
``A = 1/2 sum_j (x_j - x_{j-1}) (y_j + y_{j-1})`` is positive and the edge
normal ``n_j = -perp(h_j) / |h_j|`` points outward.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_simpson

logger = logging.getLogger(__name__)

DEGENERATE_EDGE_RTOL = 1e-12


class CurveError(ValueError):
    """Invalid curve input (too few vertices, degenerate edge, bad file)."""


def _arr(x):
    """float64 array, except that extended-precision input is kept as is."""
    x = np.asarray(x)
    return x if x.dtype == np.longdouble else x.astype(float, copy=False)


def perp(v):
    """Clockwise rotation by pi/2: ``(x, y) -> (y, -x)``. Works on (..., 2)."""
    v = _arr(v)
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


def signed_area(X):
    X = np.asarray(X, dtype=float)
    Xp = np.roll(X, 1, axis=0)
    return 0.5 * np.sum((X[:, 0] - Xp[:, 0]) * (X[:, 1] + Xp[:, 1]))


def check_curve(X, *, orient=True):
    """Validate an (N, 2) vertex array and return a clockwise float copy.

    Counterclockwise input is reversed (with a log notice) when ``orient`` is
    true; otherwise it is rejected.
    """
    X = np.array(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 2:
        raise CurveError(f"expected an (N, 2) vertex array, got shape {X.shape}")
    if X.shape[0] < 3:
        raise CurveError(f"a closed curve needs N >= 3 vertices, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise CurveError("vertex coordinates must be finite")
    lengths = np.linalg.norm(X - np.roll(X, 1, axis=0), axis=1)
    bad = np.flatnonzero(lengths < DEGENERATE_EDGE_RTOL * lengths.mean())
    if bad.size:
        raise CurveError(f"degenerate edge at index {int(bad[0])} (length {lengths[bad[0]]:.3e})")
    area = signed_area(X)
    if area <= 0.0:
        if not orient:
            raise CurveError(f"curve is not clockwise (signed area {area:.6g})")
        logger.info("counterclockwise curve reversed to clockwise orientation")
        X = X[::-1].copy()
    return X


@dataclass(frozen=True)
class EdgeFrames:
    """Per-edge geometry; row ``j`` describes ``h_j = X_j - X_{j-1}``."""

    h: np.ndarray
    length: np.ndarray
    n: np.ndarray
    tau: np.ndarray

    def __len__(self):
        return len(self.length)


def edge_vectors(X):
    X = np.asarray(X, dtype=float)
    return X - np.roll(X, 1, axis=0)


def edge_frames(X):
    h = edge_vectors(X)
    length = np.linalg.norm(h, axis=1)
    zero = np.flatnonzero(length == 0.0)
    if zero.size:
        raise CurveError(f"degenerate edge at index {int(zero[0])}")
    tau = h / length[:, None]
    return EdgeFrames(h=h, length=length, n=-perp(tau), tau=tau)


class PolygonalCurve:
    """Immutable closed polygon with clockwise vertex order."""

    def __init__(self, vertices, *, orient=True):
        X = check_curve(vertices, orient=orient)
        X.setflags(write=False)
        self._X = X

    @property
    def vertices(self):
        return self._X

    @property
    def N(self):
        return self._X.shape[0]

    def __len__(self):
        return self.N

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._X, dtype=dtype)

    def __repr__(self):
        return f"PolygonalCurve(N={self.N}, area={self.area:.6g})"

    @property
    def frames(self):
        return edge_frames(self._X)

    @property
    def edge_lengths(self):
        return np.linalg.norm(edge_vectors(self._X), axis=1)

    @property
    def length(self):
        return float(self.edge_lengths.sum())

    @property
    def area(self):
        return polygon_area(self._X)

    def translated(self, shift):
        return PolygonalCurve(self._X + np.asarray(shift, dtype=float))

    def scaled(self, factor):
        return PolygonalCurve(self._X * float(factor))

    def rotated(self, angle):
        c, s = np.cos(angle), np.sin(angle)
        R = np.array([[c, -s], [s, c]])
        return PolygonalCurve(self._X @ R.T)


def _as_vertices(curve):
    if isinstance(curve, PolygonalCurve):
        return curve.vertices
    return np.asarray(curve, dtype=float)


def polygon_area(curve):
    return float(signed_area(_as_vertices(curve)))


def lumped_inner(u, v, curve):
    """Mass-lumped (trapezoidal) inner product of nodal fields on ``curve``.

    ``u`` and ``v`` are shape (N,) scalar fields or (N, d) vector fields.
    """
    X = _as_vertices(curve)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[0] != X.shape[0] or v.shape != u.shape:
        raise ValueError(f"field sizes {u.shape}, {v.shape} do not match N={X.shape[0]}")
    uv = u * v if u.ndim == 1 else np.sum(u * v, axis=1)
    length = np.linalg.norm(edge_vectors(X), axis=1)
    return float(0.5 * np.sum(length * (uv + np.roll(uv, 1))))


def discrete_energy(curve, aniso):
    """Weighted length ``sum_j |h_j| gamma(n_j)``."""
    fr = edge_frames(_as_vertices(curve))
    return float(np.sum(fr.length * aniso.gamma(fr.n)))


def mesh_ratio(curve):
    length = np.linalg.norm(edge_vectors(_as_vertices(curve)), axis=1)
    return float(length.max() / length.min())


def diameter(curve):
    X = _as_vertices(curve)
    d = X[:, None, :] - X[None, :, :]
    return float(np.sqrt(np.max(np.sum(d * d, axis=-1))))


# --- manifold distance -------------------------------------------------------


def _shapely_polygon(X):
    from shapely.geometry import Polygon

    return Polygon(X)


def is_simple(curve):
    poly = _shapely_polygon(_as_vertices(curve))
    return bool(poly.is_valid and poly.exterior.is_simple)


def manifold_distance(c1, c2, *, method="exact", resolution=2048):
    """Area of the symmetric difference of the regions enclosed by two curves.

    ``method="exact"`` clips the polygons (both must be simple),
    ``"raster"`` uses the scanline estimator, and ``"auto"`` falls back to the
    estimator when either curve self-intersects.
    """
    X1, X2 = _as_vertices(c1), _as_vertices(c2)
    if method not in ("exact", "raster", "auto"):
        raise ValueError(f"unknown method {method!r}")
    if method != "raster":
        p1, p2 = _shapely_polygon(X1), _shapely_polygon(X2)
        simple = p1.is_valid and p2.is_valid
        if simple:
            return float(p1.symmetric_difference(p2).area)
        if method == "exact":
            raise CurveError("manifold distance needs simple (non-self-intersecting) polygons")
    return symmetric_difference_raster(X1, X2, resolution=resolution)


def _scanline_intervals(X, y):
    """Even-odd crossings of the closed polygon with the horizontal line ``y``."""
    Xp = np.roll(X, 1, axis=0)
    y0, y1 = Xp[:, 1], X[:, 1]
    hit = (y0 <= y) != (y1 <= y)
    if not np.any(hit):
        return np.empty(0)
    t = (y - y0[hit]) / (y1[hit] - y0[hit])
    xs = Xp[hit, 0] + t * (X[hit, 0] - Xp[hit, 0])
    return np.sort(xs)


def symmetric_difference_raster(X1, X2, resolution=2048):
    """Midpoint-rule scanline estimate of ``|O1 \\ O2| + |O2 \\ O1|``.

    Each of ``resolution`` rows is intersected exactly with both polygons
    (even-odd rule) and the length where exactly one region is present is
    accumulated. Handles self-overlapping polygons.
    """
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    ylo = min(X1[:, 1].min(), X2[:, 1].min())
    yhi = max(X1[:, 1].max(), X2[:, 1].max())
    if yhi <= ylo:
        return 0.0
    dy = (yhi - ylo) / resolution
    total = 0.0
    for y in ylo + dy * (np.arange(resolution) + 0.5):
        a = _scanline_intervals(X1, y)
        b = _scanline_intervals(X2, y)
        # parity of each region along the line; xor measure from merged breakpoints
        pts = np.concatenate([a, b])
        if pts.size == 0:
            continue
        flips = np.concatenate([np.ones(a.size, dtype=int), np.full(b.size, 2)])
        order = np.argsort(pts, kind="mergesort")
        pts, flips = pts[order], flips[order]
        state = np.bitwise_xor.accumulate(flips)
        xor_on = (state == 1) | (state == 2)
        total += np.sum(np.diff(pts)[xor_on[:-1]])
    return float(total * dy)


# --- initial shapes ------------------------------------------------------------


def ellipse(a, b, N):
    """Clockwise ellipse with semi-axes ``a`` (x) and ``b`` (y), nodes uniform in arclength."""
    if N < 3:
        raise CurveError("N >= 3 required")
    M = max(64 * N, 20000)
    t = np.linspace(0.0, 2.0 * np.pi, M + 1)
    # clockwise: x = a cos t, y = -b sin t
    dx, dy = -a * np.sin(t), -b * np.cos(t)
    s = cumulative_simpson(np.hypot(dx, dy), x=t, initial=0.0)
    targets = s[-1] * np.arange(N) / N
    tj = np.interp(targets, s, t)
    return np.column_stack([a * np.cos(tj), -b * np.sin(tj)])


def rectangle(width, height, N):
    """Clockwise axis-aligned rectangle centred at the origin.

    Nodes are uniform in arclength starting at the top-left corner; the node
    nearest to each remaining corner is then moved onto that corner.
    """
    if N < 4:
        raise CurveError("a rectangle needs N >= 4")
    w, hgt = float(width), float(height)
    corners = np.array([[-w / 2, hgt / 2], [w / 2, hgt / 2], [w / 2, -hgt / 2], [-w / 2, -hgt / 2]])
    perim = 2.0 * (w + hgt)
    corner_s = np.array([0.0, w, w + hgt, 2 * w + hgt])
    s = perim * np.arange(N) / N
    X = np.empty((N, 2))
    for k in range(4):
        a, b = corners[k], corners[(k + 1) % 4]
        seg_len = np.linalg.norm(b - a)
        on = (s >= corner_s[k]) & (s < corner_s[k] + seg_len)
        X[on] = a + (s[on, None] - corner_s[k]) / seg_len * (b - a)
    used = set()
    for k in range(4):
        d = np.abs(s - corner_s[k])
        d = np.minimum(d, perim - d)
        for j in np.argsort(d):
            if j not in used:
                used.add(int(j))
                X[j] = corners[k]
                break
    return X


# --- snapshot files --------------------------------------------------------------


def format_snapshot(X, t):
    X = _as_vertices(X)
    lines = [f"N {X.shape[0]} t {float(t):.17g}"]
    lines.extend(f"{x:.17g} {y:.17g}" for x, y in X)
    return "\n".join(lines) + "\n"


def write_snapshot(path, X, t):
    Path(path).write_text(format_snapshot(X, t))


def parse_snapshot(text):
    rows = text.strip().splitlines()
    if not rows:
        raise CurveError("empty snapshot")
    head = rows[0].split()
    if len(head) != 4 or head[0] != "N" or head[2] != "t":
        raise CurveError(f"bad snapshot header: {rows[0]!r}")
    n, t = int(head[1]), float(head[3])
    body = rows[1:]
    if len(body) != n:
        raise CurveError(f"header says N={n} but file has {len(body)} vertex lines")
    X = np.array([[float(v) for v in line.split()] for line in body])
    if X.shape != (n, 2):
        raise CurveError("each vertex line must hold exactly two numbers")
    return X, t


def read_snapshot(path):
    return parse_snapshot(Path(path).read_text())
