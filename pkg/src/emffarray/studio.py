"""Case-study harness: manifests, sweep execution and report files.

A study manifest names a case, its sweep axes and run settings.  The
harness builds one optimizer case per (sweep value, system mass) cell,
solves the cells independently (optionally on a worker pool), and emits
a breakdown table, a constraint-margin table and the control-effort
index samples as CSV files with a JSON mirror.  Infeasible cells render
as "--" in every derived column and carry a machine-readable reason
code naming the constraint family that failed.

Fitted control-effort models are cached on disk keyed by the spacing,
the control gains and the disturbance model parameters, so repeated
studies skip the formation simulations.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import antenna
from . import formation as fm
from . import optimizer as opt
from . import orbit
from . import sizing as sz

__all__ = [
    "StudyManifest",
    "StudyResultTable",
    "build_control_index",
    "check_table",
    "emit_reports",
    "load_manifest",
    "manifest_from_mapping",
    "parse_table",
    "run_study",
]

log = logging.getLogger(__name__)

REFERENCE_RADIUS_KM = 6878.137
REFERENCE_INCLINATION = math.pi / 4.0

_MANIFEST_KEYS = {
    "case", "mode", "mu_mar", "transmit_power", "m_sys", "d_sat",
    "wavelength", "n_gs", "seed", "jobs", "out_dir", "constants",
    "index_model", "index_scale",
}

_CASE_DEFAULTS = {
    "1": dict(mode="sidelobe", d_sat=0.15,
              sweep=(0.0, 0.25, 0.5, 0.75, 1.0)),
    "2": dict(mode="prescribed", d_sat=0.15,
              sweep=(0.1, 0.2, 0.3, 0.4, 0.5)),
    "3": dict(mode="prescribed", d_sat=0.60,
              sweep=(0.1, 0.2, 0.3, 0.4, 0.5)),
}
_DEFAULT_M_SYS = (500.0, 3000.0, 6000.0)
_FIXED_MU_MAR = 0.25   # margin moment used by the prescribed-power cases

KEY_COLUMNS = (
    "mode [-]", "mu_mar [A m^2]", "P_t_in [W]", "m_sys_target [kg]",
    "d_sat [m]",
)
VALUE_COLUMNS = (
    "feasible [-]", "N_side [-]", "N_all [-]", "side [mm]",
    "coil_diameter [mm]", "q_coil [mm^2]", "m_sat [g]", "m_3coil [g]",
    "m_sap [g]", "m_bat [g]", "m_str [g]", "m_bus [g]", "P_sap [W]",
    "P_cont [W]", "P_mis [W]", "P_bus [W]", "P_mar [W]", "P_tot [W]",
    "P_t [W]", "EIRP [dBW]", "gain [dBi]", "SLL [dB]", "footprint [km]",
    "m_sys [kg]", "J_dstar [A^2 m^4]", "reason [-]",
)
MARGIN_COLUMNS = (
    "coil_fit [m]", "coil_spacing [m]", "sat_spacing [m]", "side_cap [m]",
    "mass_consistency [-]", "mass_upper [kg]", "mass_lower [kg]",
    "system_mass [-]", "power [W]",
)

_GEOMETRY_MARGINS = {"coil_fit", "coil_spacing", "sat_spacing", "side_cap"}
_MASS_MARGINS = {"mass_consistency", "mass_upper", "mass_lower",
                 "system_mass"}


@dataclass(frozen=True)
class StudyManifest:
    """One study: a case, its sweep axes and run settings."""

    case: str
    mode: str
    d_sat: float
    sweep: tuple[float, ...]
    m_sys: tuple[float, ...]
    wavelength: float = 0.30
    mu_mar: float = _FIXED_MU_MAR
    n_gs: int = 64
    seed: int = 0
    jobs: int = 1
    out_dir: str | None = None
    consts: sz.SizingConstants = field(default_factory=sz.SizingConstants)
    index_model_path: str | None = None
    index_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in ("sidelobe", "prescribed"):
            raise ValueError(f"unknown study mode {self.mode!r}")
        if not self.sweep or not self.m_sys:
            raise ValueError("sweep axes must be non-empty")
        if self.d_sat <= 0.0 or self.wavelength <= 0.0:
            raise ValueError("spacing and wavelength must be positive")
        if self.n_gs < 1 or self.jobs < 1:
            raise ValueError("n_gs and jobs must be at least 1")
        if self.mode == "prescribed" and any(p <= 0.0 for p in self.sweep):
            raise ValueError("prescribed transmit powers must be positive")
        if any(m <= 0.0 for m in self.m_sys):
            raise ValueError("system mass targets must be positive")


@dataclass(frozen=True)
class StudyResultTable:
    """Cell results in manifest order plus their constraint margins."""

    columns: tuple[str, ...]
    rows: tuple[tuple[object, ...], ...]
    margin_columns: tuple[str, ...]
    margin_rows: tuple[tuple[object, ...], ...]
    case: str | None = None
    mode: str | None = None
    d_sat: float | None = None
    seed: int | None = None
    n_gs: int | None = None
    index_model: fm.ControlIndexModel | None = None

    @property
    def feasible_count(self) -> int:
        flag = self.columns.index("feasible [-]")
        return sum(1 for row in self.rows if row[flag] == "yes")

    @property
    def all_infeasible(self) -> bool:
        return bool(self.rows) and self.feasible_count == 0


def manifest_from_mapping(data, base_dir: str | Path = ".") -> StudyManifest:
    """Validate a manifest mapping and fill per-case defaults.

    Case 1 sweeps the margin moment with the transmitter sized by the
    sidelobe requirement; cases 2 and 3 sweep a prescribed transmit power
    at a fixed margin moment.  Keys that belong to the other family are
    rejected so a manifest cannot silently mix the two.
    """
    unknown = set(data) - _MANIFEST_KEYS
    if unknown:
        raise ValueError(f"unknown manifest keys: {sorted(unknown)}")
    if "case" not in data:
        raise ValueError("manifest needs a 'case' entry (1, 2, 3 or custom)")
    case = str(data["case"])
    base_dir = Path(base_dir)

    if case in _CASE_DEFAULTS:
        defaults = _CASE_DEFAULTS[case]
        mode = defaults["mode"]
        if "mode" in data and data["mode"] != mode:
            raise ValueError(f"case {case} fixes the mode to {mode!r}")
        if mode == "sidelobe":
            if "transmit_power" in data:
                raise ValueError("case 1 sweeps the margin moment; a "
                                 "transmit-power axis does not apply")
            sweep = data.get("mu_mar", defaults["sweep"])
        else:
            if "mu_mar" in data:
                raise ValueError(f"case {case} fixes the margin moment; "
                                 "sweep the transmit power instead")
            sweep = data.get("transmit_power", defaults["sweep"])
        d_sat = float(data.get("d_sat", defaults["d_sat"]))
    elif case == "custom":
        if "mode" not in data:
            raise ValueError("custom case needs an explicit 'mode'")
        mode = data["mode"]
        axis = "mu_mar" if mode == "sidelobe" else "transmit_power"
        other = "transmit_power" if mode == "sidelobe" else "mu_mar"
        if axis not in data:
            raise ValueError(f"custom {mode} case needs a {axis!r} sweep")
        if other in data:
            raise ValueError(f"{other!r} does not apply to {mode} mode")
        if "d_sat" not in data:
            raise ValueError("custom case needs an explicit 'd_sat'")
        sweep = data[axis]
        d_sat = float(data["d_sat"])
    else:
        raise ValueError(f"unknown case {case!r}; use 1, 2, 3 or custom")

    consts = sz.SizingConstants()
    override = data.get("constants")
    if isinstance(override, str):
        path = Path(override)
        if not path.is_absolute():
            path = base_dir / path
        override = json.loads(path.read_text())
    if override is not None:
        consts = sz.constants_from_mapping(override, base=consts)

    model_path = data.get("index_model")
    if model_path is not None:
        path = Path(model_path)
        if not path.is_absolute():
            path = base_dir / path
        model_path = str(path)

    return StudyManifest(
        case=case, mode=mode, d_sat=d_sat,
        sweep=tuple(float(v) for v in sweep),
        m_sys=tuple(float(v) for v in data.get("m_sys", _DEFAULT_M_SYS)),
        wavelength=float(data.get("wavelength", 0.30)),
        n_gs=int(data.get("n_gs", 64)), seed=int(data.get("seed", 0)),
        jobs=int(data.get("jobs", 1)), out_dir=data.get("out_dir"),
        consts=consts, index_model_path=model_path,
        index_scale=float(data.get("index_scale", 1.0)))


def load_manifest(path: str | Path) -> StudyManifest:
    path = Path(path)
    return manifest_from_mapping(json.loads(path.read_text()), path.parent)


def _scaled_index_model(model: fm.ControlIndexModel,
                        scale: float) -> fm.ControlIndexModel:
    """Rescale a fitted model; valid because the control-effort index is
    degree-one homogeneous in the disturbance amplitude."""
    return fm.ControlIndexModel(
        d_sat=model.d_sat,
        coeffs=tuple(c * scale for c in model.coeffs),
        sample_points=tuple((n, j * scale) for n, j in model.sample_points),
        residual=model.residual * scale,
        build_mass=model.build_mass)


def build_control_index(d_sat: float, gains=None, out_dir: str | Path = ".",
                        *, sample_ns=None, mass: float = 1.0,
                        horizon: float | None = None, jobs: int = 1,
                        n_angles: int = 64, scale: float = 1.0,
                        use_cache: bool = True) -> fm.ControlIndexModel:
    """Build (or load from cache) the fitted control-effort index model.

    The cache key covers the spacing, the gains, the reference-orbit
    disturbance parameters and the sampling settings, so any change that
    would alter the fit forces a rebuild.  Unstable gains are rejected:
    gain validation raises before any simulation, and a diverging
    simulation is converted to the same rejection report.
    """
    if isinstance(gains, dict):
        gains = fm.ControlGains(**gains)
    elif gains is None:
        gains = fm.ControlGains()
    cfg = orbit.derive_reference(REFERENCE_RADIUS_KM, REFERENCE_INCLINATION)
    sample_ns = tuple(sample_ns) if sample_ns is not None \
        else fm.JD_SAMPLE_HALF_WIDTHS
    key_fields = {
        "d_sat": d_sat,
        "gains": [gains.k_a, gains.gamma, gains.k_gamma, gains.k_0],
        "disturbance": [fm.j2_residual_scale(cfg), cfg.omega_xy, scale],
        "rate": fm.index_rate_factor(cfg),
        "mass": mass, "horizon": horizon, "n_angles": n_angles,
        "samples": list(sample_ns),
    }
    key = hashlib.sha256(
        json.dumps(key_fields, sort_keys=True).encode()).hexdigest()[:16]
    out_dir = Path(out_dir)
    cache_file = out_dir / f"jdstar_cache_{key}.json"
    if use_cache and cache_file.exists():
        log.info("control-index cache hit for d_sat=%g m (%s)",
                 d_sat, cache_file.name)
        return fm.ControlIndexModel.from_json(cache_file.read_text())
    log.info("building control-effort index model for d_sat=%g m "
             "(runs formation simulations; cached to %s)",
             d_sat, cache_file.name)
    try:
        model = fm.build_index_model(d_sat, cfg, gains,
                                     sample_ns=sample_ns, mass=mass,
                                     horizon=horizon, jobs=jobs,
                                     n_angles=n_angles)
    except fm.DivergenceError as exc:
        raise fm.GainRejectionError(
            f"gains rejected: simulation diverged ({exc})") from exc
    if scale != 1.0:
        model = _scaled_index_model(model, scale)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache_file.write_text(model.to_json())
    return model


def _resolve_index_model(manifest: StudyManifest) -> fm.ControlIndexModel:
    if manifest.index_model_path is not None:
        model = fm.ControlIndexModel.from_json(
            Path(manifest.index_model_path).read_text())
        if manifest.index_scale != 1.0:
            model = _scaled_index_model(model, manifest.index_scale)
        return model
    log.info("no control-index model supplied; building one for "
             "d_sat=%g m", manifest.d_sat)
    return build_control_index(manifest.d_sat,
                               out_dir=manifest.out_dir or ".",
                               jobs=manifest.jobs,
                               scale=manifest.index_scale)


def _cell_case(manifest: StudyManifest, sweep_value: float,
               m_target: float,
               model: fm.ControlIndexModel) -> opt.CaseConfig:
    common = dict(d_sat=manifest.d_sat, m_sys_target=m_target,
                  index_model=model, wavelength=manifest.wavelength,
                  n_gs=manifest.n_gs, seed=manifest.seed,
                  consts=manifest.consts)
    if manifest.mode == "sidelobe":
        return opt.CaseConfig(mode="sidelobe", mu_mar=sweep_value, **common)
    return opt.CaseConfig(mode="prescribed", mu_mar=manifest.mu_mar,
                          transmit_power=sweep_value, **common)


def _reason_code(result: opt.OptimResult) -> str:
    if result.feasible:
        return ""
    if result.design is None:
        return "sampling:warm_start"
    name, _ = min(result.margins_scaled, key=lambda kv: kv[1])
    if name in _GEOMETRY_MARGINS:
        return f"geometry:{name}"
    if name in _MASS_MARGINS:
        return f"mass:{name}"
    return f"power:{name}"


def _native(cell):
    """Convert numpy scalars to builtin floats so cells repr cleanly."""
    if isinstance(cell, float):
        return float(cell)
    return cell


def _table_row(manifest: StudyManifest, sweep_value: float, m_target: float,
               result: opt.OptimResult) -> tuple[object, ...]:
    key = (manifest.mode,
           sweep_value if manifest.mode == "sidelobe" else manifest.mu_mar,
           "--" if manifest.mode == "sidelobe" else sweep_value,
           m_target, manifest.d_sat)
    if not result.feasible:
        return key + ("no",) + ("--",) * (len(VALUE_COLUMNS) - 2) \
            + (_reason_code(result),)
    d = result.design
    masses = result.masses
    powers = result.powers
    return tuple(_native(cell) for cell in key + (
        "yes", float(d.n_side), float(d.n_all),
        2.0e3 * d.a_sat, 2.0e3 * d.a_coil, 1.0e6 * d.q_coil,
        1.0e3 * masses.m_sat, 1.0e3 * masses.m_3coil, 1.0e3 * masses.m_sap,
        1.0e3 * masses.m_bat, 1.0e3 * masses.m_str, 1.0e3 * masses.m_bus,
        powers.P_sap, powers.P_cont, powers.P_mis, powers.P_bus,
        powers.P_mar, powers.P_tot,
        result.transmit_power,
        round(antenna.to_db(result.eirp), 1),
        round(antenna.to_db(result.gain), 1),
        round(result.sll_db, 1),
        result.footprint / 1.0e3 if result.footprint is not None else "--",
        result.m_sys, result.j_d_star, ""))


def _margin_row(key: tuple[object, ...],
                result: opt.OptimResult) -> tuple[object, ...]:
    if result.margins is None:
        return key + ("--",) * len(MARGIN_COLUMNS)
    return tuple(_native(cell) for cell in
                 key + tuple(value for _, value in result.margins.margins))


def _solve_cell(case: opt.CaseConfig) -> opt.OptimResult:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return opt.global_search(case)


def run_study(manifest: StudyManifest) -> StudyResultTable:
    """Solve every (sweep value, system mass) cell of a study.

    Cells are independent and deterministic under the manifest seed, so
    the worker pool (``jobs`` > 1) changes wall time only.  Reports are
    emitted when the manifest names an output directory.
    """
    model = _resolve_index_model(manifest)
    cells = [(s, m) for s in manifest.sweep for m in manifest.m_sys]
    cases = [_cell_case(manifest, s, m, model) for s, m in cells]
    if manifest.jobs > 1:
        with ProcessPoolExecutor(max_workers=manifest.jobs) as pool:
            results = list(pool.map(_solve_cell, cases))
    else:
        results = [_solve_cell(case) for case in cases]
    rows = []
    margin_rows = []
    for (sweep_value, m_target), result in zip(cells, results):
        row = _table_row(manifest, sweep_value, m_target, result)
        rows.append(row)
        margin_rows.append(_margin_row(row[:len(KEY_COLUMNS)], result))
    table = StudyResultTable(
        columns=KEY_COLUMNS + VALUE_COLUMNS, rows=tuple(rows),
        margin_columns=KEY_COLUMNS + MARGIN_COLUMNS,
        margin_rows=tuple(margin_rows), case=manifest.case,
        mode=manifest.mode, d_sat=manifest.d_sat, seed=manifest.seed,
        n_gs=manifest.n_gs, index_model=model)
    log.info("study complete: %d cells, %d feasible",
             len(table.rows), table.feasible_count)
    if manifest.out_dir is not None:
        emit_reports(table, manifest.out_dir)
    return table


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(cell) for cell in row])


def _write_jdstar(model: fm.ControlIndexModel, path: Path) -> None:
    columns = ("n [-]", "N_side [-]", "J_dstar [A^2 m^4]",
               "fit [A^2 m^4]", "residual [A^2 m^4]")
    rows = []
    for n, j in model.sample_points:
        fit = model.evaluate(n)
        rows.append((float(n), 2.0 * n + 1.0, float(j), float(fit),
                     float(j - fit)))
    _write_csv(path, columns, rows)


def emit_reports(table: StudyResultTable, out_dir: str | Path) -> list[Path]:
    """Write table.csv, table.json, margins.csv and the index samples.

    Column order is fixed, every header carries units, and all float
    cells use shortest round-trip formatting so parsing the CSV restores
    the in-memory table exactly (EIRP, gain and SLL are stored already
    rounded to the one-decimal presentation of the dB columns).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    table_csv = out / "table.csv"
    _write_csv(table_csv, table.columns, table.rows)
    written.append(table_csv)

    table_json = out / "table.json"
    payload = {
        "meta": {"case": table.case, "mode": table.mode,
                 "d_sat": table.d_sat, "seed": table.seed,
                 "n_gs": table.n_gs},
        "columns": list(table.columns),
        "rows": [list(row) for row in table.rows],
        "margin_columns": list(table.margin_columns),
        "margin_rows": [list(row) for row in table.margin_rows],
    }
    table_json.write_text(json.dumps(payload, indent=2) + "\n")
    written.append(table_json)

    margins_csv = out / "margins.csv"
    _write_csv(margins_csv, table.margin_columns, table.margin_rows)
    written.append(margins_csv)

    if table.index_model is not None:
        jdstar_csv = out / f"jdstar_{table.index_model.d_sat:g}.csv"
        _write_jdstar(table.index_model, jdstar_csv)
        written.append(jdstar_csv)
    return written


def _parse_cell(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def parse_table(path: str | Path) -> StudyResultTable:
    """Read a table.csv back into memory (inverse of emit_reports)."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        columns = tuple(next(reader))
        rows = tuple(tuple(_parse_cell(cell) for cell in row)
                     for row in reader)
    return StudyResultTable(columns=columns, rows=rows,
                            margin_columns=(), margin_rows=())


def check_table(table: StudyResultTable,
                consts: sz.SizingConstants | None = None
                ) -> list[tuple[int, str, float]]:
    """Re-validate every feasible row through the sizing constraint report.

    Returns (row index, margin name, scaled margin) for each violation
    below the acceptance tolerance; an empty list means the table passes.
    """
    consts = consts if consts is not None else sz.SizingConstants()
    idx = {name: i for i, name in enumerate(table.columns)}
    required = ("feasible [-]", "N_side [-]", "side [mm]",
                "coil_diameter [mm]", "q_coil [mm^2]", "P_t [W]",
                "mu_mar [A m^2]", "J_dstar [A^2 m^4]", "m_sys [kg]",
                "m_sys_target [kg]", "d_sat [m]")
    missing = [name for name in required if name not in idx]
    if missing:
        raise ValueError(f"table lacks required columns: {missing}")
    failures = []
    for row_no, row in enumerate(table.rows):
        if row[idx["feasible [-]"]] != "yes":
            continue
        n_side = float(row[idx["N_side [-]"]])
        design = sz.SatelliteDesign(
            a_sat=float(row[idx["side [mm]"]]) / 2.0e3,
            a_coil=float(row[idx["coil_diameter [mm]"]]) / 2.0e3,
            q_coil=float(row[idx["q_coil [mm^2]"]]) * 1.0e-6,
            n=(n_side - 1.0) / 2.0, u_psl=-0.1)
        masses = sz.component_masses(design, consts)
        powers = sz.power_budget(design, float(row[idx["J_dstar [A^2 m^4]"]]),
                                 float(row[idx["mu_mar [A m^2]"]]),
                                 float(row[idx["P_t [W]"]]), consts)
        m_sys = float(row[idx["m_sys [kg]"]])
        d_sat = float(row[idx["d_sat [m]"]])
        report = sz.check_constraints(
            design, masses, powers, d_sat=d_sat, m_sys=m_sys,
            m_sys_target=float(row[idx["m_sys_target [kg]"]]), consts=consts)
        scaled = opt._scaled_report(report, m_sys / design.n_all,
                                    d_sat, consts)
        for name, value in scaled:
            if value < -opt.CHECK_TOL:
                failures.append((row_no, name, value))
    return failures
