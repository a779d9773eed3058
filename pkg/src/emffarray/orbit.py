"""Relative orbital dynamics for a satellite cluster on a J2-perturbed circular reference orbit.

The linearized relative motion about the reference orbit admits a closed-form
solution parameterized by six orbital indices.  The in-plane motion is a 2x1
ellipse with a slow secular drift of the along-track center whenever the first
index is nonzero; the cross-track motion is an independent oscillator at a
slightly different frequency.

Units: the reference-orbit constants are held in km and km/s (matching the
gravitational parameter in km^3/s^2); relative states, indices and
trajectories are in meters and seconds.  All angular rates are rad/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

EARTH_RADIUS_KM = 6378.137
MU_EARTH_KM3_S2 = 3.986e5
K_J2_EARTH_KM5_S2 = 2.63e10


@dataclass(frozen=True)
class OrbitConfig:
    """Reference-orbit constants derived once and shared by the relative-motion ops."""

    r_ref: float            # reference orbital radius [km]
    incl: float             # inclination [rad]
    mu_g: float             # gravitational parameter [km^3/s^2]
    k_j2: float             # J2 strength [km^5/s^2]
    omega_o: float          # unperturbed mean motion [rad/s]
    s_j2: float             # dimensionless J2 number
    c_plus: float           # sqrt(1 + s_j2)
    c_minus: float          # sqrt(1 - s_j2)
    omega_xy: float         # in-plane relative frequency [rad/s]
    omega_zref: float       # cross-track reference frequency [rad/s]
    eps2: float             # secular along-track drift rate per meter of the first index [1/s]
    omega_z: float          # cross-track frequency actually used (defaults to omega_zref)

    def with_omega_z(self, omega_z: float) -> "OrbitConfig":
        return replace(self, omega_z=omega_z)


@dataclass(frozen=True)
class RelativeState:
    """Relative position [m] and velocity [m/s] in the local orbital frame.

    x points radially outward, y along-track, z across the orbital plane.
    """

    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        if self.position.shape != (3,) or self.velocity.shape != (3,):
            raise ValueError("relative state needs 3-vector position and velocity")


@dataclass(frozen=True)
class OrbitalIndices:
    """Invariants of the linearized relative motion.

    c1 sets the radial offset and the drift rate of the along-track center,
    c4 the along-track center itself.  (r_xy, theta_xy) are amplitude and
    phase of the in-plane ellipse, (r_z, theta_z) of the cross-track
    oscillation.  Phases live in (-pi, pi].
    """

    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c6: float
    r_xy: float
    theta_xy: float
    r_z: float
    theta_z: float


@dataclass(frozen=True)
class SwarmGeometry:
    """Orientation of the swarm plane relative to the orbital frame."""

    theta_p: float        # tilt of the swarm plane [rad]
    theta_z_xy: float     # cross-track phase offset angle [rad]
    r_xyd: float          # desired in-plane amplitude [m]


def _wrap_phase(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    w = math.atan2(math.sin(a), math.cos(a))
    if w <= -math.pi:
        w = math.pi
    return w


def derive_reference(r_ref: float, incl: float, mu_g: float = MU_EARTH_KM3_S2,
                     k_j2: float = K_J2_EARTH_KM5_S2) -> OrbitConfig:
    """Build an OrbitConfig from the reference radius [km] and inclination [rad].

    The J2 number folds the oblateness strength and inclination into a single
    dimensionless constant; the split frequencies and the secular drift rate
    follow from it.
    """
    if r_ref <= EARTH_RADIUS_KM:
        raise ValueError(f"reference radius {r_ref} km must exceed the Earth radius")
    if not 0.0 <= incl <= math.pi:
        raise ValueError("inclination must lie in [0, pi]")
    if mu_g <= 0.0:
        raise ValueError("gravitational parameter must be positive")
    s_j2 = k_j2 * (1.0 + 3.0 * math.cos(2.0 * incl)) / (4.0 * mu_g * r_ref**2)
    if abs(s_j2) >= 1.0:
        raise ValueError("J2 number out of the linearization range")
    omega_o = math.sqrt(mu_g / r_ref**3)
    c_plus = math.sqrt(1.0 + s_j2)
    c_minus = math.sqrt(1.0 - s_j2)
    omega_xy = c_minus * omega_o
    omega_zref = omega_o * (c_plus + k_j2 * math.cos(incl)**2 / (mu_g * r_ref**2))
    eps2 = (3.0 + 5.0 * s_j2) / (c_plus * c_minus) * omega_xy
    return OrbitConfig(r_ref=r_ref, incl=incl, mu_g=mu_g, k_j2=k_j2,
                       omega_o=omega_o, s_j2=s_j2, c_plus=c_plus, c_minus=c_minus,
                       omega_xy=omega_xy, omega_zref=omega_zref, eps2=eps2,
                       omega_z=omega_zref)


def gravity_gradient(pos_km: np.ndarray, incl: float, theta: float,
                     cfg: OrbitConfig) -> np.ndarray:
    """Two-body plus J2 acceleration [km/s^2] in the local frame at argument of latitude theta.

    pos_km is the absolute position expressed in the local orbital frame (km).
    """
    p = np.asarray(pos_km, dtype=float)
    nrm = float(np.linalg.norm(p))
    if nrm <= 0.0:
        raise ValueError("position norm must be positive")
    si = math.sin(incl)
    point_mass = np.array([cfg.mu_g / nrm**2, 0.0, 0.0])
    oblate = (cfg.k_j2 / nrm**4) * np.array([
        1.0 - 3.0 * si**2 * math.sin(theta)**2,
        si**2 * math.sin(2.0 * theta),
        math.sin(2.0 * incl) * math.sin(theta),
    ])
    return -point_mass - oblate


def orbital_indices(state: RelativeState, cfg: OrbitConfig) -> OrbitalIndices:
    """Invert a relative state (m, m/s) into the six orbital indices at t = 0."""
    x, y, z = state.position
    vx, vy, vz = state.velocity
    xb, yb = cfg.c_plus * x, cfg.c_minus * y
    vxb, vyb = cfg.c_plus * vx, cfg.c_minus * vy
    w = cfg.omega_xy
    c1 = cfg.c_plus / cfg.c_minus**2 * (2.0 * xb + vyb / w)
    c4 = (yb - 2.0 * vxb / w) / cfg.c_minus
    c2 = (yb - cfg.c_minus * c4) / 2.0
    c3 = xb - 2.0 * cfg.c_plus * c1
    c5 = vz / cfg.omega_z
    c6 = z
    return OrbitalIndices(
        c1=c1, c2=c2, c3=c3, c4=c4, c5=c5, c6=c6,
        r_xy=math.hypot(c2, c3), theta_xy=_wrap_phase(math.atan2(c3, c2)),
        r_z=math.hypot(c5, c6), theta_z=_wrap_phase(math.atan2(c6, c5)),
    )


def analytic_solution(idx: OrbitalIndices, cfg: OrbitConfig, t, drift_rate: float = 0.0) -> np.ndarray:
    """Closed-form relative position [m] at time(s) t [s].

    The along-track center drifts at -eps2*c1 per second; drift_rate optionally
    grows the cross-track amplitude linearly (zero for the closed designs used
    here).  Scalar t gives shape (3,), an array gives (..., 3).
    """
    t = np.asarray(t, dtype=float)
    ph_xy = cfg.omega_xy * t + idx.theta_xy
    ph_z = cfg.omega_z * t + idx.theta_z
    x = 2.0 * idx.c1 + idx.r_xy * np.sin(ph_xy) / cfg.c_plus
    y = idx.c4 - cfg.eps2 * idx.c1 * t + 2.0 * idx.r_xy * np.cos(ph_xy) / cfg.c_minus
    z = (idx.r_z + drift_rate * t) * np.sin(ph_z)
    return np.stack([x, y, z], axis=-1)


def analytic_state(idx: OrbitalIndices, cfg: OrbitConfig, t: float) -> RelativeState:
    """Position and velocity companion of analytic_solution at a scalar time."""
    ph_xy = cfg.omega_xy * t + idx.theta_xy
    ph_z = cfg.omega_z * t + idx.theta_z
    pos = analytic_solution(idx, cfg, t)
    vx = idx.r_xy * cfg.omega_xy * np.cos(ph_xy) / cfg.c_plus
    vy = -cfg.eps2 * idx.c1 - 2.0 * idx.r_xy * cfg.omega_xy * np.sin(ph_xy) / cfg.c_minus
    vz = idx.r_z * cfg.omega_z * np.cos(ph_z)
    return RelativeState(pos, np.array([vx, vy, vz]))


def desired_trajectory(geom: SwarmGeometry, theta_xy: float, cfg: OrbitConfig, t) -> np.ndarray:
    """Desired relative position [m] on the tilted swarm plane at time(s) t.

    The cross-track channel is driven at the in-plane frequency so the whole
    swarm stays on one plane; its amplitude and phase follow from the plane
    angles.
    """
    tp = math.tan(geom.theta_p)
    if tp == 0.0:
        raise ValueError("swarm plane angle theta_p produces a singular amplitude")
    theta_zd = theta_xy + math.atan(2.0 * math.tan(geom.theta_z_xy))
    denom = math.cos(theta_zd - theta_xy)
    if abs(denom) < 1e-12:
        raise ValueError("degenerate swarm phase geometry")
    amp_z = geom.r_xyd / tp * math.cos(geom.theta_z_xy) / denom
    t = np.asarray(t, dtype=float)
    ph = cfg.omega_xy * t + theta_xy
    x = geom.r_xyd * np.sin(ph) / cfg.c_plus
    y = 2.0 * geom.r_xyd * np.cos(ph) / cfg.c_minus
    z = amp_z * np.sin(cfg.omega_xy * t + theta_zd)
    return np.stack([x, y, z], axis=-1)


def dfz_disturbance(r_zd: float, theta_z: float, cfg: OrbitConfig, t) -> np.ndarray:
    """Cross-track acceleration [m/s^2] left over when the z channel is locked
    to the in-plane frequency instead of its natural one."""
    t = np.asarray(t, dtype=float)
    return r_zd * (cfg.omega_xy**2 * np.sin(cfg.omega_xy * t + theta_z)
                   - cfg.omega_z**2 * np.sin(cfg.omega_z * t + theta_z))
