"""Time stepping for anisotropic surface diffusion of closed curves.

Unknowns are stored per node as ``(x_i, y_i, mu_i)``; residual rows follow
the same interleaving, with the two position-test rows of node ``i`` first
and its chemical-potential row last.  The chemical-potential rows are
multiplied by ``tau`` so that every row scales like ``|h| * |dX|``; with this
scaling the sum of those rows is exactly the area change of the step.

Edge ``j`` joins node ``j-1`` to node ``j`` (cyclically), so node ``i`` sits
between edges ``i`` and ``i+1``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .banded import SingularSystemError, solve_cyclic
from .geometry import DEGENERATE_EDGE_RTOL, CurveError, PolygonalCurve, discrete_energy, mesh_ratio, perp
from .records import DiagnosticsRecord
from .stabilization import explicit_kind, make_stabilizer, zk_matrix

log = logging.getLogger(__name__)

VARIANTS = ("sp_implicit", "semi_implicit")
MAX_HALVINGS = 8
ROUNDOFF_FACTOR = 16.0
STALL_RATIO = 0.5
FLOOR_CAP = 1e-9  # never accept a stalled residual above this
PLATEAU_RTOL = 1e-14
PLATEAU_STEPS = 50

# perp(v) = P v
_P = np.array([[0.0, 1.0], [-1.0, 0.0]])


class SchemeError(RuntimeError):
    pass


class NewtonError(SchemeError):
    def __init__(self, message, history=(), step=None):
        super().__init__(message)
        self.history = list(history)
        self.step = step


class EvolutionError(SchemeError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class CurveState:
    curve: PolygonalCurve
    mu: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        if not isinstance(self.curve, PolygonalCurve):
            object.__setattr__(self, "curve", PolygonalCurve(self.curve))
        mu = np.array(self.mu, dtype=float)
        if mu.shape != (self.curve.N,):
            raise ValueError(f"mu has shape {mu.shape}, expected ({self.curve.N},)")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def X(self):
        return self.curve.vertices

    def pack(self):
        return np.column_stack([self.X, self.mu]).ravel()

    @classmethod
    def unpack(cls, U, time, orient=False):
        U = np.asarray(U, dtype=float).reshape(-1, 3)
        return cls(PolygonalCurve(U[:, :2], orient=orient), U[:, 2], time)


@dataclass
class SchemeConfig:
    tau: float
    N: int | None = None
    newton_tol: float = 1e-12
    newton_max_iters: int = 50
    variant: str = "sp_implicit"
    stabilizer: object = "auto"

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.newton_tol > 0:
            raise ValueError(f"newton_tol must be positive, got {self.newton_tol}")
        if self.newton_max_iters < 1:
            raise ValueError("newton_max_iters must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


def resolve_stabilizer(aniso, choice="auto"):
    """Turn a stabilizer choice into a callable ``k(n)``.

    ``choice`` may be a callable, ``"auto"`` (closed form when one exists,
    else the cached numeric minimum), a mode string, or a dict with ``mode``
    plus the keyword arguments of :func:`make_stabilizer`.
    """
    if callable(choice):
        return choice
    if choice == "auto":
        return make_stabilizer(aniso, "explicit" if explicit_kind(aniso) else "numeric")
    if isinstance(choice, str):
        return make_stabilizer(aniso, choice)
    opts = dict(choice)
    mode = opts.pop("mode", "auto")
    if mode == "auto":
        return resolve_stabilizer(aniso, "auto")
    return make_stabilizer(aniso, mode, **opts)


def _vertices(c):
    return c.vertices if isinstance(c, PolygonalCurve) else np.asarray(c, dtype=float)


def half_step_normal(X_m, X_candidate):
    """Per-edge ``-(h^m + h^{m+1})^perp / (2 |h^m|)``; not unit length."""
    Xm, Xc = _vertices(X_m), _vertices(X_candidate)
    if Xm.shape != Xc.shape:
        raise ValueError(f"curves differ in shape: {Xm.shape} vs {Xc.shape}")
    hm = Xm - np.roll(Xm, 1, axis=0)
    hc = Xc - np.roll(Xc, 1, axis=0)
    L = np.linalg.norm(hm, axis=1)
    if np.any(L == 0.0):
        raise CurveError(f"degenerate edge {int(np.argmin(L))} in the current curve")
    return -0.5 * perp(hm + hc) / L[:, None]


@dataclass
class _Frozen:
    """Coefficients frozen on the current curve."""

    Xm: np.ndarray
    hm: np.ndarray
    L: np.ndarray
    Z: np.ndarray
    tau: float
    semi: bool

    @property
    def N(self):
        return self.Xm.shape[0]


def _freeze(state_m, aniso, k_provider, tau, semi=False):
    curve = state_m.curve
    fr = curve.frames
    if np.any(fr.length < DEGENERATE_EDGE_RTOL * fr.length.mean()):
        raise CurveError(f"degenerate edge {int(np.argmin(fr.length))} in the current curve")
    k = np.asarray(k_provider(fr.n), dtype=float)
    Z = zk_matrix(aniso, fr.n, k)
    return _Frozen(curve.vertices, fr.h, fr.length, Z, float(tau), semi)


def _pairing(fz, d):
    """Lumped normal ``nu_i`` at each node (already weighted by edge lengths)."""
    h = fz.hm if fz.semi else fz.hm + 0.5 * (d - np.roll(d, 1, axis=0))
    nt = -perp(h)
    return 0.5 * (nt + np.roll(nt, -1, axis=0))


# The unknown vector D holds the displacement d = X^{m+1} - X^m and mu per node.
# Working with d keeps new edge vectors as h^m + (d_j - d_{j-1}) and avoids the
# cancellation of differencing absolute positions on short edges.


def _residual(fz, D):
    D = D.reshape(-1, 3)
    d, mu = D[:, :2], D[:, 2]
    nu = _pairing(fz, d)
    dmu = (mu - np.roll(mu, 1)) / fz.L  # per edge
    r_mu = np.sum(d * nu, axis=1) + fz.tau * (dmu - np.roll(dmu, -1))
    hc = fz.hm + (d - np.roll(d, 1, axis=0))
    q = np.einsum("jab,jb->ja", fz.Z, hc) / fz.L[:, None]
    r_X = mu[:, None] * nu - q + np.roll(q, -1, axis=0)
    return np.column_stack([r_X, r_mu]).ravel()


def _jacobian_coo(fz, D):
    D = D.reshape(-1, 3)
    d, mu = D[:, :2], D[:, 2]
    N = fz.N
    idx = np.arange(N)
    prev, nxt = (idx - 1) % N, (idx + 1) % N
    nu = _pairing(fz, d)
    Zi = fz.Z / fz.L[:, None, None]  # Z_i / |h_i|, edge i
    Zn = np.roll(Zi, -1, axis=0)  # Z_{i+1} / |h_{i+1}|
    Lq = 0.25 * _P

    # blocks coupling node i to nodes i, i-1, i+1; rows (x, y, mu) by columns (x, y, mu)
    Bd = np.zeros((N, 3, 3))
    Bp = np.zeros((N, 3, 3))
    Bn = np.zeros((N, 3, 3))
    Bd[:, :2, :2] = -Zi - Zn
    Bd[:, :2, 2] = nu
    Bp[:, :2, :2] = Zi
    Bn[:, :2, :2] = Zn
    Bd[:, 2, :2] = nu
    Bd[:, 2, 2] = fz.tau * (1.0 / fz.L + 1.0 / np.roll(fz.L, -1))
    Bp[:, 2, 2] = -fz.tau / fz.L
    Bn[:, 2, 2] = -fz.tau / np.roll(fz.L, -1)
    if not fz.semi:
        Bp[:, :2, :2] += mu[:, None, None] * Lq
        Bn[:, :2, :2] -= mu[:, None, None] * Lq
        Bp[:, 2, :2] = d @ Lq
        Bn[:, 2, :2] = -(d @ Lq)

    rows, cols, vals = [], [], []
    a = np.arange(3)
    for col_node, B in ((idx, Bd), (prev, Bp), (nxt, Bn)):
        r = 3 * idx[:, None, None] + a[None, :, None]
        c = 3 * col_node[:, None, None] + a[None, None, :]
        rows.append(np.broadcast_to(r, B.shape).ravel())
        cols.append(np.broadcast_to(c, B.shape).ravel())
        vals.append(B.ravel())
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _displacement(state_m, candidate):
    D = candidate.pack().reshape(-1, 3)
    D[:, :2] -= state_m.X
    return D.ravel()


def assemble_residual(state_m, candidate, aniso, k_provider, tau, *, semi_implicit=False):
    """Residual of one step, length ``3N`` in interleaved order."""
    if candidate.curve.N != state_m.curve.N:
        raise ValueError(f"size mismatch: {state_m.curve.N} vs {candidate.curve.N} nodes")
    fz = _freeze(state_m, aniso, k_provider, tau, semi_implicit)
    return _residual(fz, _displacement(state_m, candidate))


def assemble_jacobian(state_m, candidate, aniso, k_provider, tau, *, semi_implicit=False):
    """Exact Jacobian of :func:`assemble_residual` as a sparse ``3N x 3N`` matrix."""
    if candidate.curve.N != state_m.curve.N:
        raise ValueError(f"size mismatch: {state_m.curve.N} vs {candidate.curve.N} nodes")
    fz = _freeze(state_m, aniso, k_provider, tau, semi_implicit)
    r, c, v = _jacobian_coo(fz, _displacement(state_m, candidate))
    n = 3 * fz.N
    return sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()


def initial_mu(curve, aniso, k_provider):
    """Least-squares chemical potential consistent with the position rows on ``curve``."""
    curve = curve if isinstance(curve, PolygonalCurve) else PolygonalCurve(curve)
    fz = _freeze(CurveState(curve, np.zeros(curve.N)), aniso, k_provider, 1.0, semi=True)
    nu = _pairing(fz, None)
    q = np.einsum("jab,jb->ja", fz.Z, fz.hm) / fz.L[:, None]
    rhs = q - np.roll(q, -1, axis=0)
    return np.sum(nu * rhs, axis=1) / np.sum(nu * nu, axis=1)


@dataclass
class StepResult:
    state: CurveState
    iterations: int
    residual: float
    history: list = field(default_factory=list)


def _newton(fz, U0, tol, max_iters):
    """Damped Newton on the displacement/potential vector from ``U0``.

    Converged once an accepted correction and the residual are both below
    ``tol`` in max-norm; so at least one linear solve is always made and the
    final residual is typically far below ``tol``.  On badly graded meshes
    the residual cannot drop much below ``eps * |J| |U|`` in double
    precision; stalling at that floor also counts as converged.
    """
    U = U0.copy()
    r = _residual(fz, U)
    res = float(np.max(np.abs(r)))
    history = [res]
    n = U.size
    for its in range(1, max_iters + 1):
        rr, cc, vv = _jacobian_coo(fz, U)
        J = sp.coo_matrix((vv, (rr, cc)), shape=(n, n))
        try:
            dU = solve_cyclic(J, -r)
        except SingularSystemError as exc:
            raise NewtonError(str(exc), history) from exc
        sens = np.bincount(rr, weights=np.abs(vv * U[cc]), minlength=n)
        floor = min(FLOOR_CAP, ROUNDOFF_FACTOR * np.finfo(float).eps * float(np.max(sens)))
        alpha = 1.0
        for _ in range(MAX_HALVINGS + 1):
            U_try = U + alpha * dU
            r_try = _residual(fz, U_try)
            res_try = float(np.max(np.abs(r_try)))
            if res_try <= res or res_try <= tol:
                break
            alpha *= 0.5
        else:
            if res <= floor:
                log.debug("Newton stalled at the round-off floor %.3e (residual %.3e)", floor, res)
                return U, its, res, history
            history.append(res_try)
            raise NewtonError(f"residual increased after {MAX_HALVINGS} step halvings (residual {res:.3e})", history)
        stalled = res_try > STALL_RATIO * res
        U, r, res = U_try, r_try, res_try
        history.append(res)
        if res <= tol and alpha * float(np.max(np.abs(dU))) <= tol:
            return U, its, res, history
        if stalled and res <= floor:
            log.debug("Newton stopped at the round-off floor %.3e (residual %.3e)", floor, res)
            return U, its, res, history
    raise NewtonError(f"Newton did not reach {tol:g} in {max_iters} iterations (residual {res:.3e})", history)


def _advance(state_m, D, tau):
    D = D.reshape(-1, 3)
    return CurveState(PolygonalCurve(state_m.X + D[:, :2], orient=False), D[:, 2], state_m.time + tau)


def newton_solve(state_m, config, aniso, k_provider=None):
    """One fully implicit step; returns a :class:`StepResult`."""
    k_provider = k_provider or resolve_stabilizer(aniso, config.stabilizer)
    fz = _freeze(state_m, aniso, k_provider, config.tau)
    D0 = np.column_stack([np.zeros((fz.N, 2)), state_m.mu]).ravel()
    D, its, res, history = _newton(fz, D0, config.newton_tol, config.newton_max_iters)
    return StepResult(_advance(state_m, D, config.tau), its, res, history)


def semi_implicit_step(state_m, config, aniso, k_provider=None):
    """One linear step with the normal frozen on the current curve."""
    k_provider = k_provider or resolve_stabilizer(aniso, config.stabilizer)
    fz = _freeze(state_m, aniso, k_provider, config.tau, semi=True)
    D0 = np.column_stack([np.zeros((fz.N, 2)), state_m.mu]).ravel()
    r = _residual(fz, D0)
    n = D0.size
    rr, cc, vv = _jacobian_coo(fz, D0)
    try:
        dD = solve_cyclic(sp.coo_matrix((vv, (rr, cc)), shape=(n, n)), -r)
    except SingularSystemError as exc:
        raise NewtonError(str(exc), [float(np.max(np.abs(r)))]) from exc
    D = D0 + dD
    res = float(np.max(np.abs(_residual(fz, D))))
    return StepResult(_advance(state_m, D, config.tau), 1, res, [res])


def step(state_m, config, aniso, k_provider=None):
    if config.variant == "semi_implicit":
        return semi_implicit_step(state_m, config, aniso, k_provider)
    return newton_solve(state_m, config, aniso, k_provider)


@dataclass
class Trajectory:
    records: list
    snapshots: list  # (step, time, vertices)
    final: CurveState
    stopped_early: bool = False

    @property
    def areas(self):
        return np.array([r.area for r in self.records])

    @property
    def energies(self):
        return np.array([r.energy for r in self.records])


def steps_for(tau, t_end):
    """Number of steps of size ``tau`` that land exactly on ``t_end``."""
    n = round(t_end / tau)
    if n < 0 or abs(n * tau - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ValueError(f"t_end={t_end} is not an integer multiple of tau={tau}")
    return int(n)


def evolve(
    initial,
    config,
    aniso,
    *,
    t_end=None,
    n_steps=None,
    snapshot_every=0,
    plateau_stop=False,
    on_record: Callable | None = None,
    mu0=None,
):
    """Advance ``initial`` and collect one :class:`DiagnosticsRecord` per step (step 0 included).

    ``snapshot_every=K`` stores vertices every ``K`` steps plus the last one;
    ``plateau_stop`` ends the run once the energy change stays below
    ``1e-14 W0`` for 50 consecutive steps.
    """
    if (t_end is None) == (n_steps is None):
        raise ValueError("give exactly one of t_end and n_steps")
    if n_steps is None:
        n_steps = steps_for(config.tau, t_end)
    curve = initial if isinstance(initial, PolygonalCurve) else PolygonalCurve(initial)
    if config.N is not None and config.N != curve.N:
        raise ValueError(f"config expects N={config.N}, initial curve has {curve.N} nodes")
    k_provider = resolve_stabilizer(aniso, config.stabilizer)
    mu = initial_mu(curve, aniso, k_provider) if mu0 is None else mu0
    state = CurveState(curve, mu, 0.0)

    A0 = curve.area
    W0 = discrete_energy(curve, aniso)
    L0 = curve.edge_lengths.mean()

    def record(m, st, its, res):
        c = st.curve
        A, W = c.area, discrete_energy(c, aniso)
        rec = DiagnosticsRecord(
            step=m,
            time=st.time,
            area=A,
            area_loss_rel=(A - A0) / A0,
            energy=W,
            energy_norm=W / W0,
            mesh_ratio=mesh_ratio(c),
            newton_iters=its,
            residual=res,
        )
        if on_record is not None:
            on_record(rec, st)
        return rec

    records = [record(0, state, 0, 0.0)]
    snapshots = [(0, 0.0, curve.vertices)] if snapshot_every else []
    quiet = 0
    stopped = False
    for m in range(1, n_steps + 1):
        try:
            out = step(state, config, aniso, k_provider)
        except NewtonError as exc:
            exc.step = m
            raise
        except CurveError as exc:
            raise EvolutionError(f"step {m}: {exc}", m) from exc
        new = CurveState(out.state.curve, out.state.mu, m * config.tau)
        lengths = new.curve.edge_lengths
        if np.min(lengths) < DEGENERATE_EDGE_RTOL * L0:
            raise EvolutionError(f"step {m}: edge {int(np.argmin(lengths))} collapsed", m)
        state = new
        rec = record(m, state, out.iterations, out.residual)
        if snapshot_every and (m % snapshot_every == 0 or m == n_steps):
            snapshots.append((m, state.time, state.curve.vertices))
        quiet = quiet + 1 if abs(rec.energy - records[-1].energy) <= PLATEAU_RTOL * W0 else 0
        records.append(rec)
        if plateau_stop and quiet >= PLATEAU_STEPS:
            log.info("energy plateau reached at step %d", m)
            if snapshot_every and snapshots[-1][0] != m:
                snapshots.append((m, state.time, state.curve.vertices))
            stopped = True
            break
    return Trajectory(records, snapshots, state, stopped)
