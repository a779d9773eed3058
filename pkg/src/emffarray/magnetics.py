"""Far-field magnetic interaction between satellite-mounted coil triads.

Each satellite carries three orthogonal coils driven with sinusoidal currents,
so its magnetic moment is an arbitrary 3-vector oscillating at a shared
carrier frequency.  In the far field (separation at least a few coil radii)
the pair wrench is bilinear in the two moments and factors through a fixed
6x9 stencil expressed in the line-of-sight frame: force rows fall off as
1/r^4 and torque rows as 1/r^3.

Carrier-synchronized pairs produce a nonzero time-averaged wrench; pairs on
different carriers average to zero, which is what makes frequency- division
multiplexing of the actuation possible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MU0 = 4e-7 * math.pi          # vacuum permeability [H/m]
FAR_FIELD_FACTOR = 4.0        # default separation-to-coil-radius validity ratio

# force stencil, units 1/r^4, columns indexed by kron(mu_k, mu_j) in LOS coords
_PSI_F = np.array([
    [-6.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 3.0],
    [0.0, 3.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0],
])
# torque stencil, units 1/r^3
_PSI_T = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0],
    [0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, -2.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
])


@dataclass(frozen=True)
class CoilSpec:
    """One coil of the orthogonal triad."""

    n_turns: float
    a_coil: float        # coil radius [m]
    r_wire: float        # wire radius [m]
    p_c: float = 1.68e-8  # conductor resistivity [Ohm m]
    rho_c: float = 8960.0  # conductor density [kg/m^3]

    def __post_init__(self):
        if self.n_turns <= 0 or self.a_coil <= 0 or self.r_wire <= 0:
            raise ValueError("coil turns, radius and wire radius must be positive")

    @property
    def q_coil(self) -> float:
        """Turns times wire cross-section proxy N_t * r_wire^2 [m^2]."""
        return self.n_turns * self.r_wire**2


@dataclass(frozen=True)
class DipoleCommand:
    """Sinusoidal moment command mu(t) = s*sin(w t) + c*cos(w t) [A m^2]."""

    s: np.ndarray
    c: np.ndarray
    omega_f: float

    def __post_init__(self):
        object.__setattr__(self, "s", np.asarray(self.s, dtype=float))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        if self.s.shape != (3,) or self.c.shape != (3,):
            raise ValueError("dipole command needs 3-vector sine and cosine amplitudes")
        if self.omega_f <= 0:
            raise ValueError("carrier frequency must be positive")

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (np.outer(np.sin(self.omega_f * t), self.s)
                + np.outer(np.cos(self.omega_f * t), self.c)).squeeze()


@dataclass(frozen=True)
class InteractionGeometry:
    """Relative geometry of an interacting pair: r_jk points from k to j [m]."""

    r_jk: np.ndarray
    a_coil: float | None = None
    k_far: float = FAR_FIELD_FACTOR

    def __post_init__(self):
        object.__setattr__(self, "r_jk", np.asarray(self.r_jk, dtype=float))
        if self.r_jk.shape != (3,):
            raise ValueError("separation must be a 3-vector")
        if float(np.linalg.norm(self.r_jk)) == 0.0:
            raise ValueError("coincident satellites have no line-of-sight frame")

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.r_jk))

    @property
    def far_field(self) -> bool:
        """Whether the bilinear wrench model is inside its validity range."""
        if self.a_coil is None:
            return True
        return self.k_far * self.a_coil <= self.distance


@dataclass(frozen=True)
class AveragedWrench:
    force: np.ndarray
    torque: np.ndarray
    resonant: bool       # False when the pair is on different carriers

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])


def dipole_moment(coil: CoilSpec, current: float, normal: np.ndarray) -> np.ndarray:
    """Moment [A m^2] of a coil carrying `current` about the unit `normal`."""
    n = np.asarray(normal, dtype=float)
    nn = float(np.linalg.norm(n))
    if nn == 0.0:
        raise ValueError("coil normal must be nonzero")
    return math.pi * coil.n_turns * coil.a_coil**2 * current * (n / nn)


def coil_resistance(coil: CoilSpec) -> float:
    """DC resistance [Ohm] of the wound coil."""
    return 2.0 * coil.a_coil * coil.n_turns * coil.p_c / coil.r_wire**2


def _fallback_axis(v: np.ndarray) -> np.ndarray:
    """Coordinate axis least aligned with v, used to complete the LOS frame."""
    return np.eye(3)[int(np.argmin(np.abs(v)))]


def los_frame(v: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """Right-handed orthonormal frame with first axis along v.

    Columns are the frame axes expressed in the ambient frame.  w breaks the
    rotational degeneracy about v; when omitted (or collinear with v) a
    coordinate axis is substituted.
    """
    v = np.asarray(v, dtype=float)
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        raise ValueError("primary axis must be nonzero")
    ex = v / nv
    if w is None:
        w = _fallback_axis(ex)
    w = np.asarray(w, dtype=float)
    c = np.cross(v, w)
    nc = float(np.linalg.norm(c))
    if nc < 1e-12 * nv * max(float(np.linalg.norm(w)), 1e-300):
        raise ValueError("secondary axis is collinear with the primary")
    ey = c / nc
    ez = np.cross(ex, ey)
    return np.column_stack([ex, ey, ez])


def interaction_matrix(geom: InteractionGeometry, frame: np.ndarray | None = None) -> np.ndarray:
    """6x9 bilinear map from kron(mu_k, mu_j) to the (force; torque) on j.

    The wrench itself is (MU0/4pi) * Q @ kron(mu_k, mu_j) in the same frame
    the separation vector is given in.
    """
    d = geom.distance
    if frame is None:
        frame = los_frame(geom.r_jk)
    c = np.asarray(frame, dtype=float)
    psi = np.vstack([_PSI_F / d**4, _PSI_T / d**3])
    ct = c.T
    return np.kron(np.eye(2), c) @ psi @ np.kron(ct, ct)


def instantaneous_wrench(mu_j: np.ndarray, mu_k: np.ndarray,
                         geom: InteractionGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Far-field force [N] and torque [N m] on j due to k for fixed moments."""
    q = interaction_matrix(geom)
    w = MU0 / (4.0 * math.pi) * q @ np.kron(np.asarray(mu_k, float), np.asarray(mu_j, float))
    return w[:3], w[3:]


def averaged_wrench(cmd_j: DipoleCommand, cmd_k: DipoleCommand,
                    geom: InteractionGeometry) -> AveragedWrench:
    """Carrier-period average of the pair wrench on j.

    Pairs on distinct carriers integrate to zero over the long run and are
    reported with resonant=False.
    """
    if not math.isclose(cmd_j.omega_f, cmd_k.omega_f, rel_tol=1e-12, abs_tol=0.0):
        return AveragedWrench(np.zeros(3), np.zeros(3), resonant=False)
    q = interaction_matrix(geom)
    u = 0.5 * MU0 / (4.0 * math.pi) * q @ (np.kron(cmd_k.s, cmd_j.s) + np.kron(cmd_k.c, cmd_j.c))
    return AveragedWrench(u[:3], u[3:], resonant=True)
