"""Grid-formation drift control and the coil-effort index it implies.

A planar swarm is kept on a square grid of nominal spacing d_sat by a
relative-drift controller.  Each satellite regulates two slowly varying
orbital indices against its grid neighbours: the along-track drift pair
and the cross-track phase pair.  Stacking the neighbour differences of
those indices over the edges of the grid graph gives a linear
closed-loop system whose state lives on edge space; its system matrix
is built from the edge Laplacian of the grid and the reference-orbit
frequencies, see :func:`system_matrix`.

This module provides the graph construction, the closed-loop
propagation (dense RK4 for small grids, a Krylov exponential
propagator for large ones), a configurable residual-gradient
disturbance model, and the reduction of a simulated run to a single
scalar: the worst per-edge coil effort needed to realise the commanded
accelerations, expressed in the same units as the power-optimal
allocation cost [A^2 m^4].  That scalar, sampled over a range of grid
sizes and fitted with a quartic, is the control-effort index consumed
by the system sizing optimizer.

Node accelerations commanded by the controller are converted to
per-edge force flows by solving a graph flow problem (minimum-norm
edge forces whose divergence reproduces the node commands).  Interior
edges of a large grid carry the accumulated momentum flux of the half
grid behind them, which is what makes the effort index grow with grid
size even though the feedback law itself is local.
"""

from __future__ import annotations

import json
import math
import operator
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import allocation, magnetics
from .orbit import OrbitConfig

__all__ = [
    "DegenerateGraphError",
    "GainRejectionError",
    "DivergenceError",
    "KrylovConvergenceError",
    "FitRankError",
    "GridGraph",
    "build_grid",
    "relabel_grid",
    "ControlGains",
    "system_matrix",
    "index_rate_factor",
    "j2_residual_scale",
    "j2_residual_disturbance",
    "SimResult",
    "simulate_drift_dynamics",
    "propagate_krylov",
    "unit_force_cost_table",
    "estimate_control_index",
    "ControlIndexModel",
    "fit_control_index",
    "build_index_model",
    "JD_SAMPLE_HALF_WIDTHS",
    "KRYLOV_NODE_THRESHOLD",
]

#: grid half-widths sampled when building a control-effort index model
JD_SAMPLE_HALF_WIDTHS = (3, 6, 10, 15, 22, 31, 46, 71)

#: above this many nodes simulate_drift_dynamics switches to the Krylov path
KRYLOV_NODE_THRESHOLD = 400

RK4_DEFAULT_DT = 10.0
KRYLOV_DEFAULT_DT = 60.0


class DegenerateGraphError(ValueError):
    """Raised when a requested grid graph has no edges."""


class GainRejectionError(ValueError):
    """Raised when controller gains violate the stability-sign conventions."""


class DivergenceError(RuntimeError):
    """Raised when a simulated trajectory blows past the divergence guard."""


class KrylovConvergenceError(RuntimeError):
    """Raised when the exponential propagator cannot reach the tolerance."""


class FitRankError(ValueError):
    """Raised when the index-fit design matrix is rank deficient."""


# ---------------------------------------------------------------------------
# grid graph


@dataclass(frozen=True, eq=False)
class GridGraph:
    """Square (2n+1) x (2n+1) grid graph with oriented incidence structure.

    Attributes
    ----------
    n : half-width of the grid (nodes span offsets -n..n per axis)
    edges : tuple of (tail, head) node index pairs
    E : sparse node-by-edge incidence matrix (+1 tail, -1 head)
    L_e : edge Laplacian E^T E
    axis : per-edge axis flag, 0 for in-row edges, 1 for in-column edges
    offsets : integer (x, y) grid offsets of each node from the centre
    """

    n: int
    edges: tuple
    E: sp.csr_matrix
    L_e: sp.csr_matrix
    axis: np.ndarray
    offsets: np.ndarray

    @property
    def n_side(self) -> int:
        return 2 * self.n + 1

    @property
    def n_all(self) -> int:
        return self.n_side ** 2

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def _assemble(n, edges, axis, offsets) -> GridGraph:
    n_nodes = len(offsets)
    rows = np.empty(2 * len(edges), dtype=np.int64)
    cols = np.empty_like(rows)
    vals = np.empty(2 * len(edges), dtype=float)
    for e, (a, b) in enumerate(edges):
        rows[2 * e:2 * e + 2] = (a, b)
        cols[2 * e:2 * e + 2] = e
        vals[2 * e:2 * e + 2] = (1.0, -1.0)
    E = sp.csr_matrix((vals, (rows, cols)), shape=(n_nodes, len(edges)))
    L_e = (E.T @ E).tocsr()
    return GridGraph(n=n, edges=tuple(edges), E=E, L_e=L_e,
                     axis=np.asarray(axis, dtype=np.int8),
                     offsets=np.asarray(offsets, dtype=np.int64))


def build_grid(n) -> GridGraph:
    """Build the square grid graph of half-width ``n`` (side 2n+1).

    Nodes are numbered row-major.  Every node is joined to its right and
    lower neighbour, so the graph has 2*side*(side-1) edges and is
    connected.  ``n`` must be an integer >= 1; a half-width of zero would
    leave a single isolated node with no edges to control.
    """
    try:
        n = operator.index(n)
    except TypeError:
        raise DegenerateGraphError("grid half-width must be an integer") from None
    if n < 1:
        raise DegenerateGraphError(
            f"grid half-width must be >= 1, got {n} (no edges to regulate)")
    side = 2 * n + 1
    edges = []
    axis = []
    offsets = np.empty((side * side, 2), dtype=np.int64)
    for r in range(side):
        for c in range(side):
            k = r * side + c
            offsets[k] = (c - n, r - n)
            if c + 1 < side:
                edges.append((k, k + 1))
                axis.append(0)
            if r + 1 < side:
                edges.append((k, k + side))
                axis.append(1)
    return _assemble(n, edges, axis, offsets)


def relabel_grid(g: GridGraph, perm) -> GridGraph:
    """Renumber the nodes of ``g`` so old node k becomes node perm[k].

    The physical grid is unchanged: offsets travel with their nodes and
    the edge set keeps its order and orientation, so the edge Laplacian
    is bit-identical.  Useful for checking that downstream quantities do
    not depend on node labelling.
    """
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(g.n_all)):
        raise ValueError("perm must be a permutation of the node indices")
    edges = tuple((int(perm[a]), int(perm[b])) for a, b in g.edges)
    offsets = np.empty_like(g.offsets)
    offsets[perm] = g.offsets
    return _assemble(g.n, edges, g.axis.copy(), offsets)


# ---------------------------------------------------------------------------
# closed-loop system


@dataclass(frozen=True)
class ControlGains:
    """Gains of the neighbour-difference drift controller.

    k_a scales the Laplacian consensus feedback on both index channels,
    gamma is the relative weighting of the cross-track channel, k_gamma
    the cross-coupling compensation, and k_0 the disturbance admittance.
    """

    k_a: float = 0.0560
    gamma: float = 1.0
    k_gamma: float = 1.0
    k_0: float = 1.0

    def __post_init__(self):
        if not (self.k_a > 0.0):
            raise GainRejectionError("k_a must be positive")
        if not (self.gamma > 0.0):
            raise GainRejectionError("gamma must be positive")
        if self.k_gamma < 0.0:
            raise GainRejectionError("k_gamma must be non-negative")
        if self.k_0 < 0.0:
            raise GainRejectionError("k_0 must be non-negative")


def system_matrix(g: GridGraph, gains: ControlGains,
                  cfg: OrbitConfig) -> sp.csr_matrix:
    """Closed-loop matrix on stacked edge differences [drift; centre].

    The drift channel relaxes under pure Laplacian feedback.  The centre
    channel is excited by the drift channel through the secular coupling
    rate of the reference orbit (cfg.eps2) and relaxes under its own
    Laplacian feedback; the k_gamma term cancels part of the coupling.
    Block lower-triangular, so the spectrum is the union of the two
    Laplacian pencils: non-positive, and strictly negative off the cycle
    space of the grid graph.
    """
    L = g.L_e
    eye = sp.identity(g.n_edges, format="csr")
    a11 = -(gains.k_a / 2.0) * L
    a21 = (cfg.eps2 / 2.0) * (eye - (gains.gamma * gains.k_gamma / 2.0) * L)
    a22 = -(gains.gamma * gains.k_a / 2.0) * L
    return sp.bmat([[a11, None], [a21, a22]], format="csr")


def index_rate_factor(cfg: OrbitConfig) -> float:
    """Seconds of index drift produced per (m/s^2 of along-track accel).

    Converts node accelerations into rates of the dimensionless orbital
    indices the controller regulates: 2 c_plus / (c_minus * omega_xy).
    """
    return 2.0 * cfg.c_plus / (cfg.c_minus * cfg.omega_xy)


def j2_residual_scale(cfg: OrbitConfig) -> float:
    """Residual differential acceleration per metre of separation [1/s^2].

    Combines the in-plane/out-of-plane frequency split with the
    oblateness fraction of the in-plane rate; multiplied by a baseline
    length it bounds the secular tidal acceleration a satellite at that
    offset sees after the nominal relative motion is subtracted.
    """
    return (abs(cfg.omega_z ** 2 - cfg.omega_xy ** 2)
            + 4.0 * cfg.omega_xy ** 2 * cfg.s_j2 / cfg.c_minus ** 2)


def j2_residual_disturbance(g: GridGraph, d_sat: float, cfg: OrbitConfig,
                            *, scale: float = 1.0):
    """Sinusoidal per-node disturbance field for a grid of spacing d_sat.

    Returns a callable t -> (n_all, 2) array of accelerations [m/s^2].
    Each node is driven proportionally to its grid offset with amplitude
    kappa * d_sat per grid step (kappa = :func:`j2_residual_scale`), at
    the in-plane orbit rate, with the two axes in phase quadrature.  The
    centre node is unforced and the field is odd under point reflection,
    matching the symmetry of a tidal residual.  ``scale`` multiplies the
    amplitude, for sensitivity studies.
    """
    if d_sat <= 0.0:
        raise ValueError("grid spacing must be positive")
    amp = j2_residual_scale(cfg) * d_sat * scale
    amps = amp * g.offsets.astype(float)
    omega = cfg.omega_xy

    def field(t: float) -> np.ndarray:
        out = np.empty_like(amps)
        out[:, 0] = amps[:, 0] * math.sin(omega * t)
        out[:, 1] = amps[:, 1] * math.cos(omega * t)
        return out

    return field


# ---------------------------------------------------------------------------
# Krylov exponential propagation


def _zoh_step(A, b, x, dt, tol, m_max, depth=0):
    """Advance x by dt under xdot = A x + b using an augmented Krylov basis.

    The constant forcing is folded into one extra state scaled to the
    response magnitude of the step, so a single matrix exponential of
    the small projected matrix advances the step and the error estimate
    stays relative to the state rather than to the augmentation.
    Halves the step on non-convergence; a clean invariant-subspace
    breakdown is exact and accepted immediately.
    """
    dim = x.shape[0]
    sigma = max(float(np.linalg.norm(x)), dt * float(np.linalg.norm(b)))
    if sigma == 0.0:
        return x.copy()
    b_scaled = b / sigma

    def apply_aug(v):
        out = np.empty(dim + 1)
        out[:dim] = A @ v[:dim] + v[dim] * b_scaled
        out[dim] = 0.0
        return out

    v = np.empty(dim + 1)
    v[:dim] = x
    v[dim] = sigma
    beta = float(np.linalg.norm(v))
    V = np.empty((m_max + 1, dim + 1))
    H = np.zeros((m_max + 1, m_max))
    V[0] = v / beta
    h_scale = 1.0
    for j in range(m_max):
        w = apply_aug(V[j])
        # modified Gram-Schmidt with one re-orthogonalisation pass
        for _ in range(2):
            for i in range(j + 1):
                c = float(V[i] @ w)
                H[i, j] += c
                w -= c * V[i]
        h = float(np.linalg.norm(w))
        H[j + 1, j] = h
        h_scale = max(h_scale, float(np.abs(H[:j + 2, :j + 1]).max()))
        m = j + 1
        if h <= 1e-14 * h_scale:
            F = sla.expm(dt * H[:m, :m])
            y = beta * (F[:, 0] @ V[:m])
            return y[:dim]
        V[j + 1] = w / h
        if j % 3 == 2 or j == m_max - 1:
            F = sla.expm(dt * H[:m, :m])
            err = beta * abs(F[m - 1, 0]) * h * dt
            if err <= tol * beta:
                y = beta * (F[:, 0] @ V[:m])
                return y[:dim]
    if depth >= 25:
        raise KrylovConvergenceError(
            f"Krylov propagation stalled: basis {m_max} and step splitting "
            f"depth {depth} could not reach tolerance {tol:g}")
    half = 0.5 * dt
    mid = _zoh_step(A, b, x, half, tol, m_max, depth + 1)
    return _zoh_step(A, b, mid, half, tol, m_max, depth + 1)


def propagate_krylov(A, d, T, x0=None, *, n_segments=None, tol=1e-10,
                     m_max=60):
    """Integrate xdot = A x + d(t) to time T with piecewise-constant d.

    ``d`` may be a constant vector, a (K, N) array of per-segment
    values (segments of equal length T/K), or a callable sampled at
    segment midpoints, in which case ``n_segments`` is required.  Each
    segment is advanced by the action of an augmented matrix
    exponential computed in a Krylov subspace of dimension at most
    ``m_max``; steps that fail the error estimate are recursively
    halved and :class:`KrylovConvergenceError` is raised if splitting
    cannot rescue the tolerance.
    """
    if not sp.issparse(A):
        A = np.asarray(A, dtype=float)
    dim = A.shape[0]
    if A.shape != (dim, dim):
        raise ValueError("A must be square")
    if T <= 0.0:
        raise ValueError("final time must be positive")
    x = np.zeros(dim) if x0 is None else np.asarray(x0, dtype=float).copy()
    if x.shape != (dim,):
        raise ValueError("x0 shape does not match A")

    if callable(d):
        if n_segments is None:
            raise ValueError("a callable forcing needs n_segments")
        K = int(n_segments)
        dt = T / K
        segs = np.asarray([d((k + 0.5) * dt) for k in range(K)], dtype=float)
    else:
        d = np.asarray(d, dtype=float)
        if d.ndim == 1:
            segs = d[None, :]
        elif d.ndim == 2:
            segs = d
        else:
            raise ValueError("forcing must be a vector or (K, N) array")
        K = segs.shape[0]
        dt = T / K
    if segs.shape[1] != dim:
        raise ValueError("forcing dimension does not match A")

    for k in range(K):
        x = _zoh_step(A, segs[k], x, dt, tol, m_max)
    return x


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class SimResult:
    """Outcome of a closed-loop drift simulation.

    times are the record instants [s]; drift_errors and center_errors
    hold the per-edge index differences at those instants (None when
    recording is disabled).  max_error is the worst absolute entry over
    the run, max_control the worst per-edge commanded acceleration
    magnitude [m/s^2], and max_wrench the matching force [N] at the
    simulated satellite mass.
    """

    times: np.ndarray
    drift_errors: np.ndarray | None
    center_errors: np.ndarray | None
    max_error: float
    max_control: float
    max_wrench: float


class _EdgeFlowExtractor:
    """Convert commanded node accelerations into minimum-norm edge forces.

    The controller is expressed as feedback on edge differences; mapping
    it back to nodes gives a balanced (zero-sum) acceleration command.
    The realisable per-edge forces are the flow w = E^T phi where the
    node potentials phi solve the grid Poisson problem L_n phi = u.  The
    factorisation pins node 0, which is immaterial to the flow.
    """

    def __init__(self, g: GridGraph, gains: ControlGains, cfg: OrbitConfig):
        self._E = g.E.tocsr()
        self._ET = self._E.T.tocsr()
        ln = (g.E @ g.E.T).tocsc()
        self._lu = splu(ln[1:, 1:].tocsc())
        self._ne = g.n_edges
        s = index_rate_factor(cfg)
        self._gain_drift = gains.k_a / (2.0 * s)
        self._gain_cross_drift = cfg.eps2 * gains.gamma * gains.k_gamma / (4.0 * s)
        self._gain_cross = gains.gamma * gains.k_a / (2.0 * s)

    def _flow(self, u: np.ndarray) -> np.ndarray:
        u = u - u.mean()
        phi = np.empty(u.shape[0])
        phi[0] = 0.0
        phi[1:] = self._lu.solve(u[1:])
        return self._ET @ phi

    def __call__(self, x: np.ndarray):
        e1 = x[:self._ne]
        e2 = x[self._ne:]
        fwd1 = self._E @ e1
        u_y = self._gain_drift * fwd1
        u_x = self._gain_cross_drift * fwd1 + self._gain_cross * (self._E @ e2)
        return self._flow(u_x), self._flow(u_y)


def _edge_cost(wx, wy, axis, table):
    """Worst per-edge dual cost of unit-mass flows against an angle table."""
    angles, costs = table
    mag = np.hypot(wx, wy)
    axial = np.where(axis == 0, wx, wy)
    frac = np.divide(np.abs(axial), mag, out=np.zeros_like(mag),
                     where=mag > 0.0)
    theta = np.arccos(np.clip(frac, 0.0, 1.0))
    return float((mag * np.interp(theta, angles, costs)).max())


def _run_loop(g, gains, cfg, disturbance, horizon, dt, method, x0,
              record, krylov_tol, cost_table):
    A = system_matrix(g, gains, cfg)
    ET = g.E.T.tocsr()
    s = index_rate_factor(cfg)
    k0s = gains.k_0 * s
    ne = g.n_edges
    flows = _EdgeFlowExtractor(g, gains, cfg)

    if disturbance is None:
        zero = np.zeros(2 * ne)

        def forcing(t):
            return zero
    else:
        def forcing(t):
            d = np.asarray(disturbance(t), dtype=float)
            if d.shape != (g.n_all, 2):
                raise ValueError("disturbance must return an (n_all, 2) array")
            return np.concatenate([-k0s * (ET @ d[:, 1]),
                                   -k0s * (ET @ d[:, 0])])

    n_steps = max(1, int(math.ceil(horizon / dt - 1e-9)))
    x = x0.copy()
    times = np.empty(n_steps + 1)
    times[0] = 0.0
    if record:
        tr1 = np.empty((n_steps + 1, ne))
        tr2 = np.empty((n_steps + 1, ne))
        tr1[0], tr2[0] = x[:ne], x[ne:]
    max_err = float(np.abs(x).max()) if x.size else 0.0
    wx, wy = flows(x)
    max_control = float(np.hypot(wx, wy).max())
    max_cost = _edge_cost(wx, wy, g.axis, cost_table) if cost_table else 0.0

    guard = max(float(np.abs(x).max()), 1e-30)

    t = 0.0
    for k in range(n_steps):
        h = min(dt, horizon - t)
        if method == "rk4":
            f0 = forcing(t)
            f_mid = forcing(t + 0.5 * h)
            f1 = forcing(t + h)
            k1 = A @ x + f0
            k2 = A @ (x + 0.5 * h * k1) + f_mid
            k3 = A @ (x + 0.5 * h * k2) + f_mid
            k4 = A @ (x + h * k3) + f1
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            b_scale = float(np.abs(f0).max())
        else:
            b = forcing(t + 0.5 * h)
            x = _zoh_step(A, b, x, h, krylov_tol, 60)
            b_scale = float(np.abs(b).max())
        t = min(t + h, horizon)
        times[k + 1] = t

        guard = max(guard, b_scale * horizon)
        xmax = float(np.abs(x).max())
        if not math.isfinite(xmax) or xmax > 1e6 * guard:
            raise DivergenceError(
                f"trajectory magnitude {xmax:.3e} exceeded 1e6 x reference "
                f"scale {guard:.3e} at t={t:.1f} s (unstable step size?)")

        if record:
            tr1[k + 1], tr2[k + 1] = x[:ne], x[ne:]
        max_err = max(max_err, xmax)
        wx, wy = flows(x)
        max_control = max(max_control, float(np.hypot(wx, wy).max()))
        if cost_table:
            max_cost = max(max_cost, _edge_cost(wx, wy, g.axis, cost_table))

    if not record:
        tr1 = tr2 = None
    return times, tr1, tr2, max_err, max_control, max_cost


def _resolve_stepper(g, dt, method):
    if method is None:
        method = "rk4" if g.n_all <= KRYLOV_NODE_THRESHOLD else "krylov"
    if method not in ("rk4", "krylov"):
        raise ValueError("method must be 'rk4' or 'krylov'")
    if dt is None:
        dt = RK4_DEFAULT_DT if method == "rk4" else KRYLOV_DEFAULT_DT
    if dt <= 0.0:
        raise ValueError("step size must be positive")
    return dt, method


def simulate_drift_dynamics(g: GridGraph, gains: ControlGains,
                            cfg: OrbitConfig, disturbance, horizon,
                            dt=None, *, mass: float = 1.0, method=None,
                            initial_drift=None, initial_center=None,
                            record: bool = True,
                            krylov_tol: float = 1e-10) -> SimResult:
    """Propagate the closed-loop edge-difference dynamics for ``horizon`` s.

    ``disturbance`` is None or a callable t -> (n_all, 2) per-node
    acceleration [m/s^2]; it enters the edge state through the incidence
    matrix scaled by the index-rate factor.  Small problems integrate
    with fixed-step RK4, large ones with the Krylov exponential
    propagator on a zero-order hold of the disturbance (selected
    automatically unless ``method`` is given).  ``mass`` [kg] only
    scales the reported max_wrench.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    if mass <= 0.0:
        raise ValueError("mass must be positive")
    dt, method = _resolve_stepper(g, dt, method)
    x0 = np.zeros(2 * g.n_edges)
    if initial_drift is not None:
        drift = np.asarray(initial_drift, dtype=float)
        if drift.shape != (g.n_edges,):
            raise ValueError("initial_drift must have one entry per edge")
        x0[:g.n_edges] = drift
    if initial_center is not None:
        center = np.asarray(initial_center, dtype=float)
        if center.shape != (g.n_edges,):
            raise ValueError("initial_center must have one entry per edge")
        x0[g.n_edges:] = center
    times, tr1, tr2, max_err, max_control, _ = _run_loop(
        g, gains, cfg, disturbance, horizon, dt, method, x0, record,
        krylov_tol, None)
    return SimResult(times=times, drift_errors=tr1, center_errors=tr2,
                     max_error=max_err, max_control=max_control,
                     max_wrench=mass * max_control)


# ---------------------------------------------------------------------------
# control-effort index


_COST_TABLE_CACHE: dict = {}


def unit_force_cost_table(d_sat: float, n_angles: int = 64):
    """Dual allocation cost of a unit force versus its angle to the edge.

    For two coils separated by ``d_sat`` [m] along the line of sight,
    tabulates the power-optimal allocation cost [A^2 m^4 per N] of a
    pure force at angles 0 (axial) through pi/2 (transverse), torques
    free.  The cost is degree-1 homogeneous in the force, so one table
    per spacing prices any commanded edge force.  Results are cached.
    """
    if d_sat <= 0.0:
        raise ValueError("spacing must be positive")
    if n_angles < 2:
        raise ValueError("need at least two angles")
    key = (float(d_sat), int(n_angles))
    hit = _COST_TABLE_CACHE.get(key)
    if hit is not None:
        return hit
    geom = magnetics.InteractionGeometry(r_jk=(d_sat, 0.0, 0.0))
    Q = magnetics.interaction_matrix(geom)
    angles = np.linspace(0.0, math.pi / 2.0, int(n_angles))
    costs = np.empty_like(angles)
    for i, th in enumerate(angles):
        target = np.array([math.cos(th), math.sin(th), 0.0, 0.0, 0.0, 0.0])
        costs[i] = allocation.solve_dual(Q, target).J_d
    table = (angles, costs)
    _COST_TABLE_CACHE[key] = table
    return table


def estimate_control_index(n, d_sat: float, gains: ControlGains,
                           cfg: OrbitConfig, horizon=None, *,
                           mass: float = 1.0, dt=None, method=None,
                           n_angles: int = 64, graph: GridGraph | None = None,
                           disturbance=None,
                           krylov_tol: float = 1e-10) -> float:
    """Worst-case per-edge coil effort [A^2 m^4] for a grid of half-width n.

    Simulates the closed-loop drift dynamics under the residual-gradient
    disturbance (or a caller-supplied one), converts the commanded node
    accelerations at every step into minimum-norm per-edge forces, and
    prices the worst force against the dual allocation cost at its angle
    to the edge axis.  The result is exactly linear in ``mass`` and in
    the disturbance amplitude.  ``graph`` overrides the grid built from
    ``n``; the default horizon is three disturbance periods.
    """
    g = graph if graph is not None else build_grid(n)
    if mass <= 0.0:
        raise ValueError("mass must be positive")
    if horizon is None:
        horizon = 3.0 * 2.0 * math.pi / cfg.omega_xy
    if disturbance is None:
        disturbance = j2_residual_disturbance(g, d_sat, cfg)
    dt, method = _resolve_stepper(g, dt, method)
    table = unit_force_cost_table(d_sat, n_angles)
    x0 = np.zeros(2 * g.n_edges)
    _, _, _, _, _, max_cost = _run_loop(
        g, gains, cfg, disturbance, horizon, dt, method, x0, False,
        krylov_tol, table)
    return mass * max_cost


@dataclass(frozen=True)
class ControlIndexModel:
    """Quartic fit of the control-effort index over grid half-width.

    coeffs are highest-degree-first polynomial coefficients of the index
    at the mass the samples were generated with (build_mass); evaluation
    rescales linearly to any other satellite mass and clamps at zero.
    residual is the RMS misfit of the samples in index units.
    """

    d_sat: float
    coeffs: tuple
    sample_points: tuple
    residual: float
    build_mass: float = 1.0

    def evaluate(self, n, mass=None):
        vals = np.maximum(np.polyval(np.asarray(self.coeffs), n), 0.0)
        if mass is not None:
            if mass <= 0.0:
                raise ValueError("mass must be positive")
            vals = vals * (mass / self.build_mass)
        if np.isscalar(n):
            return float(vals)
        return vals

    @property
    def n_range(self):
        ns = [p[0] for p in self.sample_points]
        return (min(ns), max(ns))

    def in_range(self, n) -> bool:
        lo, hi = self.n_range
        return bool(lo <= n <= hi)

    def to_json(self) -> str:
        return json.dumps(
            {"d_sat": self.d_sat,
             "coeffs": list(self.coeffs),
             "sample_points": [list(p) for p in self.sample_points],
             "residual": self.residual,
             "build_mass": self.build_mass},
            sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ControlIndexModel":
        data = json.loads(text)
        return cls(d_sat=float(data["d_sat"]),
                   coeffs=tuple(float(c) for c in data["coeffs"]),
                   sample_points=tuple(
                       (float(a), float(b)) for a, b in data["sample_points"]),
                   residual=float(data["residual"]),
                   build_mass=float(data["build_mass"]))


def fit_control_index(samples, d_sat: float, *,
                      build_mass: float = 1.0) -> ControlIndexModel:
    """Fit a quartic index model to (half-width, index) sample pairs.

    Requires at least five samples (a quartic has five coefficients) at
    non-negative index values; a rank-deficient design matrix (for
    instance repeated abscissae) raises :class:`FitRankError`.
    """
    pairs = sorted((float(n), float(jd)) for n, jd in samples)
    if len(pairs) < 5:
        raise ValueError("need at least five samples to fit a quartic")
    ns = np.array([p[0] for p in pairs])
    jds = np.array([p[1] for p in pairs])
    if np.any(jds < 0.0):
        raise ValueError("index samples must be non-negative")
    if np.any(ns <= 0.0):
        raise ValueError("half-width samples must be positive")
    coeffs, residuals, rank, _, _ = np.polyfit(ns, jds, 4, full=True)
    if rank < 5:
        raise FitRankError(
            f"quartic fit is rank deficient (rank {rank}); "
            "sample at least five distinct half-widths")
    ssr = float(residuals[0]) if residuals.size else 0.0
    return ControlIndexModel(d_sat=float(d_sat),
                             coeffs=tuple(float(c) for c in coeffs),
                             sample_points=tuple(pairs),
                             residual=math.sqrt(max(ssr, 0.0) / len(pairs)),
                             build_mass=float(build_mass))


def _sample_worker(args):
    (n, d_sat, gains, cfg, horizon, mass, n_angles, krylov_tol) = args
    jd = estimate_control_index(n, d_sat, gains, cfg, horizon, mass=mass,
                                n_angles=n_angles, krylov_tol=krylov_tol)
    return (float(n), jd)


def build_index_model(d_sat: float, cfg: OrbitConfig, gains=None,
                      sample_ns=JD_SAMPLE_HALF_WIDTHS, *, mass: float = 1.0,
                      horizon=None, jobs: int = 1, n_angles: int = 64,
                      krylov_tol: float = 1e-10) -> ControlIndexModel:
    """Sample the control-effort index over ``sample_ns`` and fit the model.

    With jobs > 1 the samples are computed in separate processes; the
    result is identical to the serial path because every sample is an
    independent deterministic computation.
    """
    if gains is None:
        gains = ControlGains()
    work = [(n, d_sat, gains, cfg, horizon, mass, n_angles, krylov_tol)
            for n in sample_ns]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=int(jobs)) as pool:
            samples = list(pool.map(_sample_worker, work))
    else:
        samples = [_sample_worker(w) for w in work]
    return fit_control_index(samples, d_sat, build_mass=mass)
