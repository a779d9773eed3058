"""Aperture-maximizing design search for the coil-actuated antenna grid.

Couples the per-satellite sizing closure with the array performance model
and a fitted control-effort index, then maximizes the element count of the
square grid subject to the full geometry, mass and power constraint set.
The program is nonconvex, so the search runs a sequential-quadratic local
solver on a continuous relaxation from many randomized warm starts and
snaps the grid half-width to the best feasible integer, polishing the
remaining variables at fixed aperture.

Two transmit-power modes are supported.  In ``"sidelobe"`` mode the
transmitter is sized so the first sidelobe of the array factor meets the
downlink requirement, which makes the power a smooth function of the
element count and removes the sidelobe abscissa from the active search.
In ``"prescribed"`` mode the transmit power is a fixed case parameter.

A geometric-programming restatement of the same problem is possible when
the empirical mass bound is replaced by a monomial fit, but the direct
nonlinear formulation is what is implemented here.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sopt

from . import antenna
from . import sizing as sz
from .formation import ControlIndexModel

__all__ = [
    "Q_COIL_CAP",
    "CaseConfig",
    "OptimResult",
    "WarmStart",
    "WarmStartError",
    "evaluate_design",
    "global_search",
    "local_solve",
    "warm_start_sample",
]

# generous static ceiling on the coil parameter [m^2]; the coil mass budget
# binds two orders of magnitude below this for any admissible satellite
Q_COIL_CAP = 2.0e-4

# length margins are reported in units of 1 cm so all scaled margins are
# comparable order-one quantities
LENGTH_SCALE = 0.01

WS_MAX_TRIES = 64
SNAP_TOL = 1e-9      # solver-side feasibility tolerance on scaled margins
CHECK_TOL = 1e-6     # acceptance tolerance on re-checked scaled margins

_MODES = ("sidelobe", "prescribed")
_SCALE = np.array([0.01, 0.01, 1e-6, 10.0, 1.0])


class WarmStartError(RuntimeError):
    """No admissible warm start exists for the requested case."""


@dataclass(frozen=True)
class CaseConfig:
    """One design case: geometry, mass target, power mode and models.

    ``index_model`` may be None, in which case formation-keeping power is
    excluded from the budget.  ``transmit_power`` is required in
    ``"prescribed"`` mode and ignored in ``"sidelobe"`` mode, where the
    downlink ``link`` budget sizes the transmitter instead.
    """

    d_sat: float
    m_sys_target: float
    mode: str = "sidelobe"
    mu_mar: float = 0.25
    transmit_power: float | None = None
    index_model: ControlIndexModel | None = None
    wavelength: float = 0.30
    altitude: float = 5.0e5
    link: antenna.LinkBudget | None = None
    n_gs: int = 64
    seed: int = 0
    consts: sz.SizingConstants = field(default_factory=sz.SizingConstants)

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.d_sat <= 0.0 or self.m_sys_target <= 0.0:
            raise ValueError("spacing and system mass target must be positive")
        if self.wavelength <= 0.0 or self.altitude <= 0.0:
            raise ValueError("wavelength and altitude must be positive")
        if self.mu_mar < 0.0:
            raise ValueError("margin moment must be nonnegative")
        if self.n_gs < 1:
            raise ValueError("need at least one global-search start")
        if self.mode == "prescribed":
            if self.transmit_power is None or self.transmit_power <= 0.0:
                raise ValueError("prescribed mode needs a positive "
                                 "transmit power")
        if self.link is None:
            object.__setattr__(self, "link", antenna.link_indicator_d2d(
                antenna.dbm_to_watts(-87.2), 1.0, 0.5,
                self.altitude, self.wavelength))
        if self.d_sat > self.wavelength / 2.0:
            warnings.warn("element spacing exceeds half the wavelength; "
                          "grating lobes enter the visible region")


@dataclass(frozen=True)
class WarmStart:
    """Randomized initial point: a full design plus a system-mass draw."""

    design: sz.SatelliteDesign
    m_sys: float


@dataclass(frozen=True)
class OptimResult:
    """Outcome of a design search with every derived report attached.

    ``margins`` holds the raw signed constraint margins in native units;
    ``margins_scaled`` the same margins normalized to order-one quantities
    (the feasibility call is made on these).  ``worst_violation`` is the
    most negative scaled margin when infeasible, None otherwise.
    """

    design: sz.SatelliteDesign | None
    m_sys: float
    feasible: bool
    margins: sz.ConstraintReport | None
    margins_scaled: tuple[tuple[str, float], ...]
    masses: sz.MassBreakdown | None
    powers: sz.PowerBreakdown | None
    j_d_star: float
    extrapolated: bool
    transmit_power: float
    eirp: float
    gain: float
    sll_db: float
    footprint: float | None
    worst_violation: float | None
    reason: str | None

    @property
    def objective(self) -> float:
        """Element count achieved; zero when no design was produced."""
        return float(self.design.n_all) if self.design is not None else 0.0

    @property
    def margins_scaled_min(self) -> float:
        if not self.margins_scaled:
            return math.nan
        return min(value for _, value in self.margins_scaled)


def _zero_coil_masses(a_sat: float, consts: sz.SizingConstants
                      ) -> sz.MassBreakdown:
    probe = sz.SatelliteDesign(a_sat=a_sat, a_coil=consts.a_coil_min,
                               q_coil=0.0, n=consts.n_min, u_psl=-0.1)
    return sz.component_masses(probe, consts)


def _coil_mass_budget(a_sat: float, consts: sz.SizingConstants) -> float:
    """Coil mass admissible at the empirical bound, all else at minimum."""
    zero = _zero_coil_masses(a_sat, consts)
    ceiling = (1.0 - consts.eta_str) * sz.mass_upper_bound(a_sat, consts)
    return ceiling - (zero.m_sap + zero.m_bat + consts.m_bus)


def _search_box(case: CaseConfig) -> list[tuple[float, float]]:
    c = case.consts
    a_sat_hi = min(case.d_sat / 2.0, c.side_cap / 2.0)
    a_coil_hi = max(c.a_coil_min, case.d_sat / 2.0 - c.r_mar)
    m_sat_min = sz.mass_lower_bound(c.a_sat_min, c)
    m_hi = case.m_sys_target * (1.0 + c.gamma_sys)
    n_hi = max(c.n_min, (math.sqrt(m_hi / m_sat_min) - 1.0) / 2.0)
    return [(c.a_sat_min, max(c.a_sat_min, a_sat_hi)),
            (c.a_coil_min, a_coil_hi),
            (c.q_coil_min, Q_COIL_CAP),
            (c.n_min, n_hi),
            (1.0 - c.gamma_sys, 1.0 + c.gamma_sys)]


def warm_start_sample(case: CaseConfig, rng) -> WarmStart:
    """Draw one admissible starting point inside the search region.

    Each of the six coordinates is a uniform draw over its currently
    admissible interval, with the coil radius capped by the spacing
    validity ratio, the grid half-width capped by the satellite count the
    mass draw can host, the coil parameter capped by the coil mass budget
    of the drawn satellite size, and the sidelobe abscissa placed inside
    the shrunk bracket between the first and second array-factor nulls.
    Draws whose intervals come up empty are retried a bounded number of
    times before reporting a sampling failure.
    """
    c = case.consts
    d = case.d_sat
    a_sat_lo = c.a_sat_min
    a_sat_hi = min(d / 2.0, c.side_cap / 2.0)
    if a_sat_hi < a_sat_lo:
        raise WarmStartError("satellite size interval is empty; spacing "
                             "cannot host the minimum body")
    a_coil_hi = d / 2.0 - c.r_mar
    if a_coil_hi < c.a_coil_min:
        raise WarmStartError("coil radius interval is empty")
    m_sat_min = sz.mass_lower_bound(c.a_sat_min, c)
    n_all_min = (2.0 * c.n_min + 1.0)**2
    m_lo = max(case.m_sys_target * (1.0 - c.gamma_sys), n_all_min * m_sat_min)
    m_hi = case.m_sys_target * (1.0 + c.gamma_sys)
    if m_lo > m_hi:
        raise WarmStartError(
            "system mass target cannot host the minimum grid: need at "
            f"least {n_all_min * m_sat_min:.1f} kg")
    for _ in range(WS_MAX_TRIES):
        xi = rng.uniform(0.0, 1.0, 6)
        a_sat0 = min(d / 2.0, a_sat_lo + xi[0] * (a_sat_hi - a_sat_lo))
        a_coil0 = min(d / c.k_F,
                      c.a_coil_min + xi[1] * (a_coil_hi - c.a_coil_min))
        m_sys0 = m_lo + xi[2] * (m_hi - m_lo)
        n_hi0 = (math.sqrt(m_sys0 / m_sat_min) - 1.0) / 2.0
        if n_hi0 < c.n_min:
            continue
        n0 = c.n_min + xi[3] * (n_hi0 - c.n_min)
        n_l0 = 2.0 * n0 + 1.0
        u_psl0 = ((1.0 - 2.0 * c.gamma_u) * math.pi / n_l0) * xi[4] \
            - (2.0 - c.gamma_u) * math.pi / n_l0
        q_hi0 = min(_coil_mass_budget(a_sat0, c)
                    / (6.0 * math.pi**2 * c.rho_c * a_coil0), Q_COIL_CAP)
        # tiny satellites leave no coil mass budget; degenerate to the box
        # floor there rather than rejecting the draw
        q_hi0 = max(q_hi0, c.q_coil_min)
        q0 = c.q_coil_min + xi[5] * (q_hi0 - c.q_coil_min)
        design = sz.SatelliteDesign(a_sat=a_sat0, a_coil=a_coil0, q_coil=q0,
                                    n=n0, u_psl=u_psl0)
        return WarmStart(design=design, m_sys=m_sys0)
    raise WarmStartError(f"no admissible warm start in {WS_MAX_TRIES} draws")


def _transmit_power(case: CaseConfig, n_side: float) -> float:
    if case.mode == "prescribed":
        return float(case.transmit_power)
    sll = antenna.solve_peak_sidelobe(n_side)
    return antenna.transmit_power_from_sll(case.link.indicator, n_side, sll)


def _margins_vector(a_sat: float, a_coil: float, q: float, n: float,
                    m_ratio: float, case: CaseConfig) -> np.ndarray:
    """Scaled inequality margins at a (possibly fractional) design point.

    Mirrors the sizing constraint report, with the two-sided tolerance
    constraints split into smooth one-sided pairs and the system-mass
    band enforced through the bounds on ``m_ratio`` rather than here.
    """
    c = case.consts
    d = case.d_sat
    design = sz.SatelliteDesign(a_sat=a_sat, a_coil=a_coil,
                                q_coil=max(q, 0.0), n=n, u_psl=-0.1)
    masses = sz.component_masses(design, c)
    j_star = 0.0
    if case.index_model is not None:
        j_star = case.index_model.evaluate(n, mass=masses.m_sat)
    powers = sz.power_budget(design, j_star, case.mu_mar,
                             _transmit_power(case, design.n_side), c)
    alloc = m_ratio * case.m_sys_target / design.n_all
    out = np.array([
        ((a_sat - c.r_mar) - a_coil) / LENGTH_SCALE,
        (d - c.k_F * a_coil) / d,
        (d - 2.0 * a_sat) / d,
        (c.side_cap - 2.0 * a_sat) / c.side_cap,
        (masses.m_sat - alloc * (1.0 - c.gamma_mass)) / alloc,
        (alloc * (1.0 + c.gamma_mass) - masses.m_sat) / alloc,
        (sz.mass_upper_bound(a_sat, c) - masses.m_sat) / alloc,
        powers.P_sap - powers.P_tot,
    ])
    return np.nan_to_num(out, nan=-1e9, posinf=1e9, neginf=-1e9)


def _solve_continuous(start: WarmStart, case: CaseConfig,
                      box: list[tuple[float, float]]) -> np.ndarray:
    lo = np.array([b[0] for b in box]) / _SCALE
    hi = np.array([b[1] for b in box]) / _SCALE
    d0 = start.design
    x0 = np.array([d0.a_sat, d0.a_coil, d0.q_coil, d0.n,
                   start.m_sys / case.m_sys_target]) / _SCALE
    x0 = np.clip(x0, lo, hi)

    def margins(s):
        a_sat, a_coil, q, n, m_ratio = s * _SCALE
        return _margins_vector(a_sat, a_coil, q, n, m_ratio, case)

    res = sopt.minimize(
        lambda s: -s[3], x0, jac=lambda s: np.array([0., 0., 0., -1., 0.]),
        method="SLSQP", bounds=list(zip(lo, hi)),
        constraints=[{"type": "ineq", "fun": margins}],
        options={"maxiter": 250, "ftol": 1e-10})
    x = res.x if np.all(np.isfinite(res.x)) else x0
    return np.clip(x, lo, hi) * _SCALE


def _polish_fixed_aperture(phys4: np.ndarray, n_int: int, case: CaseConfig,
                           box: list[tuple[float, float]]
                           ) -> tuple[np.ndarray, float]:
    """Maximize the worst scaled margin at a fixed integer half-width."""
    scale4 = np.array([0.01, 0.01, 1e-6, 1.0])
    lo4 = np.array([box[0][0], box[1][0], box[2][0], box[4][0]]) / scale4
    hi4 = np.array([box[0][1], box[1][1], box[2][1], box[4][1]]) / scale4
    s0 = np.clip(np.asarray(phys4) / scale4, lo4, hi4)
    p0 = s0 * scale4
    t0 = float(np.min(_margins_vector(p0[0], p0[1], p0[2], float(n_int),
                                      p0[3], case)))
    t0 = min(max(t0, -1e6 + 1.0), 50.0)

    def margins(s):
        a_sat, a_coil, q, m_ratio = s[:4] * scale4
        vec = _margins_vector(a_sat, a_coil, q, float(n_int), m_ratio, case)
        return vec - s[4]

    res = sopt.minimize(
        lambda s: -s[4], np.append(s0, t0),
        jac=lambda s: np.array([0., 0., 0., 0., -1.]),
        method="SLSQP",
        bounds=list(zip(np.append(lo4, -1e6), np.append(hi4, 50.0))),
        constraints=[{"type": "ineq", "fun": margins}],
        options={"maxiter": 300, "ftol": 1e-12})
    s = res.x if np.all(np.isfinite(res.x)) else np.append(s0, t0)
    s4 = np.clip(s[:4], lo4, hi4)
    phys = s4 * scale4
    t = float(np.min(_margins_vector(phys[0], phys[1], phys[2],
                                     float(n_int), phys[3], case)))
    return phys, t


def _scaled_report(report: sz.ConstraintReport, alloc: float, d_sat: float,
                   c: sz.SizingConstants) -> tuple[tuple[str, float], ...]:
    scales = {
        "coil_fit": LENGTH_SCALE,
        "coil_spacing": d_sat,
        "sat_spacing": d_sat,
        "side_cap": c.side_cap,
        "mass_consistency": c.gamma_mass,
        "mass_upper": alloc,
        "mass_lower": alloc,
        "system_mass": c.gamma_sys,
        "power": 1.0,
    }
    return tuple((name, value / scales[name])
                 for name, value in report.margins)


def evaluate_design(design: sz.SatelliteDesign, case: CaseConfig,
                    m_sys: float | None = None) -> OptimResult:
    """Assemble the full report for one design under a case configuration.

    The constraint margins are computed through the independent sizing
    report, so a design returned by the search can be re-audited here
    without sharing any solver state.  When ``m_sys`` is omitted it
    defaults to the closure mass times the element count.
    """
    c = case.consts
    masses = sz.component_masses(design, c)
    if m_sys is None:
        m_sys = masses.m_sat * design.n_all
    j_star = 0.0
    extrapolated = False
    if case.index_model is not None:
        j_star = case.index_model.evaluate(design.n, mass=masses.m_sat)
        extrapolated = not case.index_model.in_range(design.n)
    p_t = _transmit_power(case, design.n_side)
    powers = sz.power_budget(design, j_star, case.mu_mar, p_t, c)
    report = sz.check_constraints(design, masses, powers, d_sat=case.d_sat,
                                  m_sys=m_sys,
                                  m_sys_target=case.m_sys_target, consts=c)
    alloc = m_sys / design.n_all
    scaled = _scaled_report(report, alloc, case.d_sat, c)
    worst_name, worst_scaled = min(scaled, key=lambda kv: kv[1])
    feasible = worst_scaled >= -CHECK_TOL

    n_side = design.n_side
    eirp = antenna.eirp(p_t, n_side)
    gain = antenna.directivity_gain(n_side)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sll_db = antenna.solve_peak_sidelobe(n_side).envelope_db
        footprint = None
        n_int = round(n_side)
        if abs(n_side - n_int) < 1e-9 and n_int % 2 == 1 and n_int >= 3:
            geom = antenna.ArrayGeometry(n_side=int(n_int), spacing=case.d_sat,
                                         wavelength=case.wavelength,
                                         altitude=case.altitude)
            try:
                footprint = antenna.first_null_footprint(geom)[1]
            except antenna.BeamEdgeError:
                footprint = None
    return OptimResult(
        design=design, m_sys=float(m_sys), feasible=feasible,
        margins=report, margins_scaled=scaled, masses=masses, powers=powers,
        j_d_star=j_star, extrapolated=extrapolated, transmit_power=p_t,
        eirp=eirp, gain=gain, sll_db=sll_db, footprint=footprint,
        worst_violation=None if feasible else worst_scaled,
        reason=None if feasible else f"constraint violated: {worst_name}")


def _finalize(phys4: np.ndarray, n_int: int, case: CaseConfig) -> OptimResult:
    a_sat, a_coil, q, m_ratio = phys4
    n_side = 2.0 * n_int + 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u_psl = -antenna.solve_peak_sidelobe(n_side).u_psl
    design = sz.SatelliteDesign(a_sat=a_sat, a_coil=a_coil,
                                q_coil=max(q, 0.0), n=float(n_int),
                                u_psl=u_psl)
    return evaluate_design(design, case, m_sys=m_ratio * case.m_sys_target)


def _snap_candidates(x: np.ndarray, case: CaseConfig,
                     box: list[tuple[float, float]]
                     ) -> list[tuple[int, np.ndarray, float]]:
    phys4 = np.array([x[0], x[1], x[2], x[4]])
    n_floor = max(int(math.floor(x[3] + SNAP_TOL)), int(case.consts.n_min))
    out = []
    for n_int in sorted({n_floor, n_floor + 1}, reverse=True):
        polished, t = _polish_fixed_aperture(phys4, n_int, case, box)
        out.append((n_int, polished, t))
    return out


def local_solve(start: WarmStart, case: CaseConfig) -> OptimResult:
    """Continuous relaxation from one warm start, then an integer snap.

    The relaxed solve maximizes the grid half-width; the floor and ceiling
    integers are then polished at fixed aperture by maximizing the worst
    scaled margin, and the larger feasible one wins.  When neither integer
    is feasible the least-infeasible polished point is reported.

    The mass upper bound switches to its large-body branch exactly at the
    side-length cap, so when the cap limits the satellite size the face
    of the box with the body pinned at the cap is searched as a second
    lane; gradient steps from the interior cannot reach that branch.
    """
    box = _search_box(case)
    lanes = [box]
    a_pin = case.consts.side_cap / 2.0
    if box[0][1] == a_pin and a_pin > box[0][0]:
        pinned = list(box)
        pinned[0] = (a_pin, a_pin)
        lanes.append(pinned)
    candidates: list[tuple[int, np.ndarray, float]] = []
    for lane in lanes:
        x = _solve_continuous(start, case, lane)
        candidates.extend(_snap_candidates(x, case, lane))
    candidates.sort(key=lambda cand: (cand[0], cand[2]), reverse=True)
    best_bad: tuple[float, np.ndarray, int] | None = None
    for n_int, polished, t in candidates:
        if t >= -SNAP_TOL:
            result = _finalize(polished, n_int, case)
            if result.feasible:
                return result
        if best_bad is None or t > best_bad[0]:
            best_bad = (t, polished, n_int)
    return _finalize(best_bad[1], best_bad[2], case)


def _no_start_result(case: CaseConfig, detail: str) -> OptimResult:
    return OptimResult(
        design=None, m_sys=math.nan, feasible=False, margins=None,
        margins_scaled=(), masses=None, powers=None, j_d_star=math.nan,
        extrapolated=False, transmit_power=math.nan, eirp=math.nan,
        gain=math.nan, sll_db=math.nan, footprint=None,
        worst_violation=None, reason=f"warm-start sampling failed: {detail}")


def global_search(case: CaseConfig) -> OptimResult:
    """Multi-start search over the case's design space.

    Runs ``case.n_gs`` local solves from randomized warm starts drawn with
    the case seed and keeps the best outcome: feasible results are ranked
    by element count then by worst scaled margin, and when every start
    comes back infeasible the least-violated one is returned so the caller
    can see how far the case misses.
    """
    rng = np.random.default_rng(case.seed)
    best: OptimResult | None = None
    best_key: tuple[float, float] | None = None
    least_bad: OptimResult | None = None
    failure = "no starts attempted"
    for _ in range(case.n_gs):
        try:
            start = warm_start_sample(case, rng)
        except WarmStartError as exc:
            failure = str(exc)
            continue
        cand = local_solve(start, case)
        if cand.feasible:
            key = (cand.objective, cand.margins_scaled_min)
            if best_key is None or key > best_key:
                best, best_key = cand, key
        elif (least_bad is None
              or (cand.worst_violation or -math.inf)
              > (least_bad.worst_violation or -math.inf)):
            least_bad = cand
    if best is not None:
        return best
    if least_bad is not None:
        return least_bad
    return _no_start_result(case, failure)
