"""Per-satellite mass and power budgets and constraint-margin evaluation.

The satellite is a cube of half-size ``a_sat`` carrying a three-axis coil of
radius ``a_coil``, four body-mounted solar panels, a battery sized to a
fixed fraction of the harvested energy, a constant-mass bus, and structure
proportional to total mass.  That closure makes the satellite mass an
explicit function of the design vector, so a whole formation can be budgeted
in microseconds and a constrained optimizer can call these routines freely.

Everything here is a pure function of (design, constants).  Constraint
checks report signed margins and never raise: a margin of zero means the
inequality is active, negative means violated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Mapping

__all__ = [
    "SizingConstants", "SatelliteDesign", "MassBreakdown", "PowerBreakdown",
    "ConstraintReport", "constants_from_mapping", "solar_power",
    "component_masses", "mass_upper_bound", "mass_lower_bound",
    "empirical_mass_law", "fit_empirical_mass_law", "mass_bound_branch_gap",
    "power_budget", "check_constraints", "EMPIRICAL_MASS_RECORDS",
    "EMP_ALPHA", "EMP_BETA",
]

# historical small-satellite (volume [cm^3], mass [g]) records used to bound
# how light a satellite of a given size can plausibly be; the final row is a
# 1U-cube anchor that ties the empirical branch to the cubic branch at a
# 0.1 m side
EMPIRICAL_MASS_RECORDS = (
    (2.0 * 2.0 * 0.075, 10.0),
    (9.0 * 9.5 * 1.0, 70.0),
    (9.0 * 9.0 * 1.0, 100.0),
    (4.0 * 4.0 * 4.25, 95.5),
    (3.3 * 3.3 * 0.5, 9.9),
    (1000.0, 1000.0),
)

# frozen least-squares power law m[g] = alpha * V[cm^3]^beta over the records
# above; fit_empirical_mass_law() reproduces these from the data
EMP_ALPHA = 9.175276558913158
EMP_BETA = 0.5677443920972921


@dataclass(frozen=True)
class SizingConstants:
    """Material, subsystem and tolerance constants of the sizing model."""

    p_c: float = 1.68e-8        # wire resistivity [Ohm m]
    rho_c: float = 8960.0       # wire mass density [kg/m^3]
    rho_bat: float = 0.005      # battery mass per storage capacity [kg/Wh]
    rho_sap: float = 0.6        # solar panel areal density [kg/m^2]
    nu_sap: float = 4.0         # number of body-mounted panels
    P_W_m2: float = 1367.0 * 0.3  # panel output per unit area [W/m^2]
    k_sap: float = 1.0          # effective panel area coefficient
    eta_str: float = 0.25       # structure fraction of total mass
    r_mar: float = 0.005        # coil-to-wall clearance [m]
    P_bus: float = 0.200        # constant bus power draw [W]
    m_bus: float = 0.200        # constant bus mass [kg]
    k_bat: float = 0.1          # stored fraction of harvested energy
    h_charge: float = 12.0      # sunlit charging duration [h]
    gamma_mass: float = 1e-2    # per-satellite mass tolerance, relative
    gamma_sys: float = 1e-2     # system mass tolerance, relative
    gamma_psl: float = 1e-5     # sidelobe stationarity tolerance
    gamma_u: float = 0.1        # warm-start shrink of the sidelobe bracket
    eta_tra: float = 0.3        # transmitter efficiency
    k_F: float = 4.0            # coil-spacing validity ratio
    k_mbar: float = 1e3         # cubic mass-bound coefficient on side [kg/m^3]
    # box bounds of the search region
    a_sat_min: float = 0.015    # [m]
    a_coil_min: float = 0.005   # [m]
    r_wire_min: float = 0.03937e-3  # [m]
    r_wire_max: float = 0.00105     # [m]
    n_min: float = 3.0          # minimum grid half-width
    side_cap: float = 0.1       # hard satellite side-length cap [m]

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"constant {f.name} must be positive")
        if not 0.0 < self.eta_str < 1.0:
            raise ValueError("structure mass fraction must lie in (0, 1)")
        if self.r_wire_min > self.r_wire_max:
            raise ValueError("wire radius bounds are inverted")

    @property
    def q_coil_min(self) -> float:
        """Lower coil-parameter bound: a single turn of the thinnest wire."""
        return self.r_wire_min**2


def constants_from_mapping(data: Mapping[str, float],
                           base: SizingConstants | None = None
                           ) -> SizingConstants:
    """Build constants from a config mapping; unknown keys are rejected."""
    known = {f.name for f in fields(SizingConstants)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown sizing constants: {sorted(unknown)}")
    merged = {f.name: getattr(base, f.name) for f in fields(SizingConstants)} \
        if base is not None else {}
    merged.update(data)
    return SizingConstants(**merged)


@dataclass(frozen=True)
class SatelliteDesign:
    """The design vector: sizes, coil parameter, grid half-width, sidelobe
    abscissa.  ``n`` may be fractional during continuous relaxation."""

    a_sat: float    # satellite half-size [m]
    a_coil: float   # coil radius [m]
    q_coil: float   # turns times wire cross-section proxy [m^2]
    n: float        # grid half-width; elements per side = 2n + 1
    u_psl: float    # sidelobe envelope abscissa (negative branch) [rad]

    def __post_init__(self):
        if self.a_sat <= 0 or self.a_coil <= 0:
            raise ValueError("satellite and coil sizes must be positive")
        if self.q_coil < 0:
            raise ValueError("coil parameter must be nonnegative")
        if self.n < 0:
            raise ValueError("grid half-width must be nonnegative")

    @property
    def n_side(self) -> float:
        return 2.0 * self.n + 1.0

    @property
    def n_all(self) -> float:
        return self.n_side**2


@dataclass(frozen=True)
class MassBreakdown:
    """Component masses [kg]; m_sat is the closed-form closure total."""

    m_3coil: float
    m_sap: float
    m_bat: float
    m_str: float
    m_bus: float
    m_sat: float


@dataclass(frozen=True)
class PowerBreakdown:
    """Steady-state power terms [W] and the generation available."""

    P_sap: float
    P_cont: float
    P_mis: float
    P_bus: float
    P_mar: float
    P_tot: float

    @property
    def margin(self) -> float:
        return self.P_sap - self.P_tot


@dataclass(frozen=True)
class ConstraintReport:
    """Signed margins for every design inequality; >= 0 means satisfied."""

    margins: tuple[tuple[str, float], ...]

    def as_dict(self) -> dict[str, float]:
        return dict(self.margins)

    def __getitem__(self, name: str) -> float:
        for key, value in self.margins:
            if key == name:
                return value
        raise KeyError(name)

    def worst(self) -> tuple[str, float]:
        return min(self.margins, key=lambda kv: kv[1])

    def feasible(self, tol: float = 0.0) -> bool:
        return all(value >= -tol for _, value in self.margins)


def solar_power(a_sat: float, consts: SizingConstants = SizingConstants()
                ) -> float:
    """Generated power of the body-mounted panels, k_sap*P_area*(side)^2 [W]."""
    if a_sat < 0:
        raise ValueError("satellite half-size must be nonnegative")
    return consts.k_sap * consts.P_W_m2 * (2.0 * a_sat) ** 2


def component_masses(design: SatelliteDesign,
                     consts: SizingConstants = SizingConstants()
                     ) -> MassBreakdown:
    """Component masses with the structural fraction solved in closed form.

    The structure is a fixed fraction of the total, so the total solves
    m_sat = (coil + panels + battery + bus) / (1 - eta_str).
    """
    m_3coil = 3.0 * (2.0 * math.pi**2 * design.a_coil) * design.q_coil \
        * consts.rho_c
    m_sap = consts.nu_sap * consts.rho_sap * (2.0 * design.a_sat) ** 2
    m_bat = consts.rho_bat * consts.k_bat * consts.h_charge \
        * solar_power(design.a_sat, consts)
    m_sat = (m_3coil + m_sap + m_bat + consts.m_bus) / (1.0 - consts.eta_str)
    m_str = consts.eta_str * m_sat
    return MassBreakdown(m_3coil=m_3coil, m_sap=m_sap, m_bat=m_bat,
                         m_str=m_str, m_bus=consts.m_bus, m_sat=m_sat)


def empirical_mass_law(a_sat: float, alpha: float = EMP_ALPHA,
                       beta: float = EMP_BETA) -> float:
    """Historical-trend mass for a cube of half-size a_sat [kg]."""
    volume_cm3 = (2.0 * a_sat * 100.0) ** 3
    return alpha * volume_cm3**beta / 1000.0


def fit_empirical_mass_law(records=EMPIRICAL_MASS_RECORDS):
    """Re-fit the shipped power law from the records; returns (alpha, beta)."""
    import numpy as np

    log_v = np.log([r[0] for r in records])
    log_m = np.log([r[1] for r in records])
    beta, log_alpha = np.polyfit(log_v, log_m, 1)
    return float(math.exp(log_alpha)), float(beta)


def mass_upper_bound(a_sat: float,
                     consts: SizingConstants = SizingConstants()) -> float:
    """Heaviest plausible satellite of the given size [kg].

    Cubic in the side length from a 0.1 m side upward (1 kg for a 10 cm
    cube with the default coefficient); the historical power law below.
    The branch seam at a 0.1 m side is discontinuous by design; see
    :func:`mass_bound_branch_gap`.
    """
    if a_sat <= 0:
        raise ValueError("satellite half-size must be positive")
    side = 2.0 * a_sat
    if side >= 0.1:
        return consts.k_mbar * side**3
    return empirical_mass_law(a_sat)


def mass_lower_bound(a_sat: float,
                     consts: SizingConstants = SizingConstants()) -> float:
    """Lightest closure-consistent satellite: the coil mass set to zero."""
    zero_coil = SatelliteDesign(a_sat=a_sat, a_coil=consts.a_coil_min,
                                q_coil=0.0, n=consts.n_min, u_psl=-0.1)
    return component_masses(zero_coil, consts).m_sat


def mass_bound_branch_gap(consts: SizingConstants = SizingConstants()):
    """Both mass-bound branches at the 0.1 m seam and their gap [kg]."""
    cubic = consts.k_mbar * 0.1**3
    empirical = empirical_mass_law(0.05)
    return cubic, empirical, cubic - empirical


def power_budget(design: SatelliteDesign, j_d_star: float, mu_mar: float,
                 transmit_power: float,
                 consts: SizingConstants = SizingConstants()
                 ) -> PowerBreakdown:
    """Steady-state power budget at the worst-loaded (central) satellite.

    Control power covers bidirectional worst-axis compensation sized by the
    formation-keeping index ``j_d_star`` [A^2 m^4]; margin power reserves the
    same coil capability for an extra moment ``mu_mar`` [A m^2]; mission
    power is the transmitter draw at its conversion efficiency.
    """
    if design.q_coil <= 0 or design.a_coil <= 0:
        raise ValueError("power budget needs positive coil size and parameter")
    if j_d_star < 0 or mu_mar < 0 or transmit_power < 0:
        raise ValueError("power demands must be nonnegative")
    denom = math.pi**2 * design.q_coil * design.a_coil**3
    p_cont = 8.0 * consts.p_c * j_d_star / denom
    p_mar = 2.0 * consts.p_c * mu_mar**2 / denom
    p_mis = transmit_power / consts.eta_tra
    p_tot = p_cont + p_mis + consts.P_bus + p_mar
    return PowerBreakdown(P_sap=solar_power(design.a_sat, consts),
                          P_cont=p_cont, P_mis=p_mis, P_bus=consts.P_bus,
                          P_mar=p_mar, P_tot=p_tot)


def check_constraints(design: SatelliteDesign, masses: MassBreakdown,
                      powers: PowerBreakdown, *, d_sat: float,
                      m_sys: float, m_sys_target: float,
                      consts: SizingConstants = SizingConstants()
                      ) -> ConstraintReport:
    """Signed margins of every sizing inequality; reports, never raises.

    Size margins are in meters, mass-bound margins in kilograms, the two
    consistency margins relative (so a value of -gamma means the quantity
    missed by twice the allowed tolerance), and the power margin in watts.
    """
    alloc = m_sys / design.n_all
    margins = (
        ("coil_fit", (design.a_sat - consts.r_mar) - design.a_coil),
        ("coil_spacing", d_sat - consts.k_F * design.a_coil),
        ("sat_spacing", d_sat - 2.0 * design.a_sat),
        ("side_cap", consts.side_cap - 2.0 * design.a_sat),
        ("mass_consistency",
         consts.gamma_mass - abs(alloc - masses.m_sat) / alloc),
        ("mass_upper", mass_upper_bound(design.a_sat, consts) - masses.m_sat),
        ("mass_lower", masses.m_sat - (masses.m_sap + masses.m_bat
                                       + masses.m_str + masses.m_bus)),
        ("system_mass",
         consts.gamma_sys - abs(m_sys_target - m_sys) / m_sys_target),
        ("power", powers.margin),
    )
    return ConstraintReport(margins=margins)
