"""Square planar phased-array performance for the satellite grid.

The formation doubles as a transmit array: one radiating element per
satellite on an n x n grid with uniform excitation.  The far-field pattern
then factors into two identical linear-array terms, and the quantities a
system trade actually needs reduce to a handful of closed forms:

* normalized pattern  A = A_x(u_x) * A_y(u_y),  A_x = sin(n u)/(n sin u)
* broadside directivity approximation  G_T = n^2,  EIRP = P_t n^4
* beam footprint from the first pattern null on the diagonal cut
* first-sidelobe envelope peak (a one-line transcendental root)
* transmit power sized so the sidelobe EIRP meets a receiver threshold

Phase variables follow a half-wavenumber convention (k = pi/lambda, element
phase increment 2u), so u values here are half those of the common
full-wavenumber form.  Sizing outputs are insensitive to that choice: gain,
EIRP, the envelope level and the footprint all depend on n*u products or on
angles, not on the absolute u scale.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq


class BeamEdgeError(ValueError):
    """First-null direction does not exist for the requested steering."""


class SidelobeBracketError(RuntimeError):
    """The sidelobe stationarity root was not bracketed as expected."""


@dataclass(frozen=True)
class ArrayGeometry:
    """Square transmit grid: element count per side, spacing and pointing.

    ``n_side`` must be odd (a center element keeps the grid symmetric about
    the reference satellite); the degenerate single-element case is allowed
    for completeness.  Spacing above half a wavelength is legal but invites
    grating lobes, so the constructor warns instead of failing.
    """

    n_side: int
    spacing: float            # element pitch [m]
    wavelength: float         # carrier wavelength [m]
    theta0: float = 0.0       # main-beam elevation [rad]
    phi0: float = 0.0         # main-beam azimuth [rad]
    altitude: float = 5e5     # orbit altitude above the service area [m]

    def __post_init__(self):
        n = self.n_side
        if int(n) != n or n < 1 or n % 2 == 0:
            raise ValueError("element count per side must be an odd integer >= 1")
        if self.spacing <= 0 or self.wavelength <= 0 or self.altitude <= 0:
            raise ValueError("spacing, wavelength and altitude must be positive")
        if self.spacing > 0.5 * self.wavelength:
            warnings.warn(
                "element spacing exceeds half a wavelength; grating lobes "
                "enter visible space", UserWarning, stacklevel=2)


@dataclass(frozen=True)
class SidelobeSolution:
    """Stationary point of the one-dimensional sidelobe envelope."""

    n_side: float
    u_psl: float              # envelope-peak abscissa, magnitude [rad]
    envelope: float           # normalized gain at the peak, <= 1

    @property
    def envelope_db(self) -> float:
        return 10.0 * math.log10(self.envelope)


@dataclass(frozen=True)
class LinkBudget:
    """Receiver-driven sidelobe EIRP ceiling for a space-to-handset link."""

    required_power: float     # power the receiver needs [W]
    receive_gain: float       # receiver antenna gain, linear
    attenuation: float        # extra path attenuation factor in (0, 1]
    path_loss: float          # free-space spreading loss, linear
    indicator: float          # allowed sidelobe EIRP [W]


def _linear_factor(u, n_side):
    """sin(n u)/(n sin u) with removable singularities filled in.

    Near any multiple of pi the quotient is evaluated by series instead,
    switching when |sin u| < 1e-8; the parity factor keeps the sign right
    for even counts as well.
    """
    u = np.asarray(u, dtype=float)
    if n_side == 1:
        return np.ones_like(u)
    s = np.sin(u)
    small = np.abs(s) < 1e-8
    den = np.where(small, 1.0, n_side * s)
    out = np.where(small, 0.0, np.sin(n_side * u)) / den
    if np.any(small):
        m = np.round(u / np.pi)
        e = u - m * np.pi
        ne = n_side * e
        sign = 1.0 - 2.0 * (np.abs(m) * (n_side - 1) % 2)
        series = (sign * (1.0 - ne * ne / 6.0 * (1.0 - ne * ne / 20.0))
                  / (1.0 - e * e / 6.0))
        out = np.where(small, series, out)
    return out


def array_factor(geom: ArrayGeometry, theta, phi):
    """Normalized field pattern in direction (theta, phi).

    Broadcasts over array-valued angles.  The value is signed (field, not
    power) and reaches 1 exactly on the main beam.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    k = math.pi / geom.wavelength
    sin_t = np.sin(theta)
    ref_x = math.sin(geom.theta0) * math.cos(geom.phi0)
    ref_y = math.sin(geom.theta0) * math.sin(geom.phi0)
    u_x = k * geom.spacing * (sin_t * np.cos(phi) - ref_x)
    u_y = k * geom.spacing * (sin_t * np.sin(phi) - ref_y)
    a = _linear_factor(u_x, geom.n_side) * _linear_factor(u_y, geom.n_side)
    return float(a) if a.ndim == 0 else a


def directivity_gain(n_side) -> float:
    """Average-directivity approximation for the uniform square grid, n^2."""
    if n_side < 1:
        raise ValueError("element count must be at least 1")
    return float(n_side) ** 2


def eirp(transmit_power: float, n_side) -> float:
    """Effective isotropic radiated power P_t * n^4 [W]."""
    if transmit_power < 0:
        raise ValueError("transmit power must be nonnegative")
    if n_side < 1:
        raise ValueError("element count must be at least 1")
    return transmit_power * float(n_side) ** 4


def first_null_footprint(geom: ArrayGeometry) -> tuple[float, float]:
    """Beam-edge elevation and ground footprint diameter [rad, m].

    The beam edge is the first pattern null along the diagonal azimuth cut;
    projecting the null-to-null cone onto the ground from the orbit altitude
    gives the diameter.  Steering too far (or an array too small) pushes the
    null past the horizon and raises :class:`BeamEdgeError`.
    """
    arg = (math.sqrt(2.0) * geom.wavelength / (geom.n_side * geom.spacing)
           + math.sin(geom.theta0))
    if abs(arg) > 1.0 + 1e-9:
        raise BeamEdgeError(
            "first-null direction undefined: |sin(theta)| would need to be "
            f"{abs(arg):.4f} > 1 (array too small for the requested steering)")
    theta_n1 = math.asin(max(-1.0, min(1.0, arg)))
    diameter = 2.0 * abs(theta_n1 - geom.theta0) * geom.altitude
    return theta_n1, diameter


def solve_peak_sidelobe(n_side) -> SidelobeSolution:
    """First-sidelobe envelope peak of the n-element uniform line factor.

    Solves n sin(u) cos(n u) - cos(u) sin(n u) = 0 on the branch
    pi/n < |u| < 2*pi/n.  Fractional counts are accepted so a continuous
    design relaxation can call this directly.  The root is found on the
    negative branch and reported by magnitude (the equation is odd in u).
    """
    if n_side < 3:
        raise ValueError("envelope peak needs at least 3 elements per side")
    n = float(n_side)

    def stationarity(u):
        return (n * math.sin(u) * math.cos(n * u)
                - math.cos(u) * math.sin(n * u))

    lo, hi = -2.0 * math.pi / n, -math.pi / n
    if stationarity(lo) * stationarity(hi) >= 0:
        raise SidelobeBracketError(
            f"no sign change on ({lo:.6f}, {hi:.6f}) for n = {n}")
    u = brentq(stationarity, lo, hi, xtol=1e-14, rtol=8.9e-16)
    if abs(stationarity(u)) > 1e-5:
        raise SidelobeBracketError("stationarity residual above tolerance")
    envelope = (math.sin(n * u) / (n * math.sin(u))) ** 2
    return SidelobeSolution(n_side=n, u_psl=abs(u), envelope=envelope)


def link_indicator_d2d(required_power: float, receive_gain: float = 1.0,
                       attenuation: float = 0.5, altitude: float = 5e5,
                       wavelength: float = 0.30) -> LinkBudget:
    """Sidelobe EIRP ceiling for a direct-to-handset downlink.

    Works in linear watts; use :func:`dbm_to_watts` / :func:`from_db` to
    convert receiver specs quoted in dBm / dBi.  The indicator is the EIRP
    whose free-space spread, after the attenuation factor and receive gain,
    delivers exactly the required power.
    """
    if required_power <= 0 or receive_gain <= 0:
        raise ValueError("required power and receive gain must be positive")
    if not 0.0 < attenuation <= 1.0:
        raise ValueError("attenuation factor must lie in (0, 1]")
    if altitude <= 0 or wavelength <= 0:
        raise ValueError("altitude and wavelength must be positive")
    path_loss = (4.0 * math.pi * altitude / wavelength) ** 2
    indicator = attenuation * required_power * path_loss / receive_gain
    return LinkBudget(required_power=required_power,
                      receive_gain=receive_gain,
                      attenuation=attenuation,
                      path_loss=path_loss,
                      indicator=indicator)


def transmit_power_from_sll(indicator: float, n_side,
                            sll: SidelobeSolution) -> float:
    """Per-array transmit power that puts the peak sidelobe EIRP at the
    indicator level: P_t = I_R / (n^4 * B_env)."""
    if indicator <= 0:
        raise ValueError("indicator power must be positive")
    if n_side < 1:
        raise ValueError("element count must be at least 1")
    return indicator / (float(n_side) ** 4 * sll.envelope)


def to_db(value: float) -> float:
    """Linear power ratio or watts to dB (dBW when the input is watts)."""
    if value <= 0:
        raise ValueError("dB conversion needs a positive value")
    return 10.0 * math.log10(value)


def from_db(decibels: float) -> float:
    return 10.0 ** (decibels / 10.0)


def watts_to_dbm(watts: float) -> float:
    return to_db(watts) + 30.0


def dbm_to_watts(dbm: float) -> float:
    return from_db(dbm - 30.0)
