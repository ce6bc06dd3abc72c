"""Synthetic scenarios standing in for weather years, and the regressions
used to construct temperature-dependent load data.

The load model is two-staged. A weekly profile (168 hourly coefficients plus
an optional linear trend) is fitted on load normalised by its daily mean; a
second regression explains daily mean load through weekday intercepts and
heating/cooling degree days with a 15.5 degC threshold. Synthetic hourly load
is the product of the weekly profile and the daily-level bracket. Holidays
are treated as Sundays in both stages.

Scenario generation perturbs a base scenario (capacity-factor amplitude and
phase, temperature offsets, inflow scaling) deterministically from a seed.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

DEGREE_DAY_THRESHOLD_C = 15.5
HOURS_PER_WEEK = 168
HOURS_PER_YEAR = 8760


class ScenarioError(Exception):
    pass


class DegenerateFitError(ScenarioError):
    """The regression cannot be identified from the given data."""


class UnderdeterminedFitError(ScenarioError):
    """Fewer observations than identifiable parameters."""


@dataclass(frozen=True)
class Calendar:
    """Per-day weekday labels (0=Monday .. 6=Sunday) and holiday flags."""

    weekdays: np.ndarray
    holidays: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weekdays", np.asarray(self.weekdays, dtype=np.int64))
        object.__setattr__(self, "holidays", np.asarray(self.holidays, dtype=bool))
        if self.weekdays.shape != self.holidays.shape:
            raise ScenarioError("calendar weekday/holiday arrays differ in length")
        if self.weekdays.size and (self.weekdays.min() < 0 or self.weekdays.max() > 6):
            raise ScenarioError("weekday labels must lie in 0..6")

    @property
    def n_days(self) -> int:
        return len(self.weekdays)

    def effective_weekdays(self) -> np.ndarray:
        """Weekday labels with holidays mapped to Sundays."""
        return np.where(self.holidays, 6, self.weekdays)

    @staticmethod
    def plain(n_days: int, start_weekday: int = 0) -> "Calendar":
        wd = (start_weekday + np.arange(n_days)) % 7
        return Calendar(wd, np.zeros(n_days, dtype=bool))


@dataclass(frozen=True)
class Scenario:
    """One synthetic weather year at a uniform step length."""

    id: str
    step_hours: float
    capacity_factors: Mapping[str, np.ndarray]
    loads: Mapping[str, np.ndarray]
    inflows: Mapping[str, np.ndarray]
    temperatures: Mapping[str, np.ndarray]  # daily means, degC

    @property
    def n_steps(self) -> int:
        for table in (self.loads, self.capacity_factors, self.inflows):
            for s in table.values():
                return len(s)
        return 0

    def validate(self) -> None:
        n = self.n_steps
        if self.step_hours <= 0:
            raise ScenarioError("step length must be positive")
        for name, s in self.capacity_factors.items():
            if len(s) != n:
                raise ScenarioError(f"capacity-factor series {name} has inconsistent length")
            if np.min(s) < -1e-12 or np.max(s) > 1 + 1e-12:
                raise ScenarioError(f"capacity factors of {name} outside [0, 1]")
        for name, s in self.loads.items():
            if len(s) != n:
                raise ScenarioError(f"load series {name} has inconsistent length")
            if np.min(s) < 0:
                raise ScenarioError(f"negative load in series {name}")
        for name, s in self.inflows.items():
            if len(s) != n:
                raise ScenarioError(f"inflow series {name} has inconsistent length")
            if np.min(s) < 0:
                raise ScenarioError(f"negative inflow in series {name}")


@dataclass(frozen=True)
class LoadRegressionParams:
    """Parameters of the two-stage load model for one region."""

    weekly_profile: np.ndarray  # 168 coefficients, mean 1
    trend: float  # per hour, applied modulo one year
    weekday_level: np.ndarray  # 7 intercepts, MW
    heating_coeff: float  # MW per heating degree day
    cooling_coeff: float  # MW per cooling degree day

    def __post_init__(self):
        object.__setattr__(self, "weekly_profile", np.asarray(self.weekly_profile, dtype=float))
        object.__setattr__(self, "weekday_level", np.asarray(self.weekday_level, dtype=float))
        if self.weekly_profile.shape != (HOURS_PER_WEEK,):
            raise ScenarioError("weekly profile must have 168 coefficients")
        if abs(float(self.weekly_profile.mean()) - 1.0) > 1e-9:
            raise ScenarioError("weekly profile must average to 1")
        if self.weekday_level.shape != (7,):
            raise ScenarioError("need 7 weekday intercepts")
        if self.heating_coeff < 0 or self.cooling_coeff < 0:
            raise ScenarioError("degree-day coefficients must be nonnegative")

    def to_json_dict(self) -> dict:
        return {
            "weekly_profile": self.weekly_profile.tolist(),
            "trend": self.trend,
            "weekday_level": self.weekday_level.tolist(),
            "heating_coeff": self.heating_coeff,
            "cooling_coeff": self.cooling_coeff,
        }

    @staticmethod
    def from_json_dict(doc: dict) -> "LoadRegressionParams":
        return LoadRegressionParams(
            np.asarray(doc["weekly_profile"]),
            float(doc["trend"]),
            np.asarray(doc["weekday_level"]),
            float(doc["heating_coeff"]),
            float(doc["cooling_coeff"]),
        )


def degree_days(daily_temp: float) -> tuple[float, float]:
    """(HDD, CDD) of one daily mean temperature against the 15.5 degC threshold."""
    hdd = max(DEGREE_DAY_THRESHOLD_C - daily_temp, 0.0)
    cdd = max(daily_temp - DEGREE_DAY_THRESHOLD_C, 0.0)
    return hdd, cdd


def _degree_day_arrays(daily_temp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(daily_temp, dtype=float)
    return np.maximum(DEGREE_DAY_THRESHOLD_C - t, 0.0), np.maximum(t - DEGREE_DAY_THRESHOLD_C, 0.0)


def _hour_of_week(n_hours: int, calendar: Calendar) -> np.ndarray:
    """Hour-of-week index with holidays mapped onto the same hour of a Sunday."""
    days = np.arange(n_hours) // 24
    if calendar.n_days < (n_hours + 23) // 24:
        raise ScenarioError("calendar does not cover the horizon")
    eff = calendar.effective_weekdays()[days]
    return eff * 24 + np.arange(n_hours) % 24


def _t_significant(coef: float, se: float, dof: int, level: float) -> bool:
    if se == 0.0:
        return abs(coef) > 1e-12
    if dof <= 0:
        return True  # saturated fit; keep the coefficient
    p = 2.0 * stats.t.sf(abs(coef) / se, dof)
    return p < level


def fit_weekly_profile(
    hourly_load: np.ndarray, calendar: Calendar, significance: float = 0.05
) -> tuple[np.ndarray, float]:
    """Weekly profile and hourly trend from load normalised by daily means.

    The trend is dropped when statistically insignificant; the returned
    profile is rescaled to average exactly 1 (the daily-level regression owns
    the MW scale).
    """
    y_raw = np.asarray(hourly_load, dtype=float)
    n = len(y_raw)
    if n < 2 * HOURS_PER_WEEK:
        raise ScenarioError("need at least two full weeks of hourly data")
    if n % 24 != 0:
        raise ScenarioError("hourly load must cover whole days")
    daily_mean = y_raw.reshape(-1, 24).mean(axis=1)
    if np.any(daily_mean <= 0):
        raise DegenerateFitError("daily mean load is zero; cannot normalise")
    y = y_raw / np.repeat(daily_mean, 24)

    how = _hour_of_week(n, calendar)
    t_hours = np.arange(n, dtype=float)

    # dummies for each hour of week, plus the trend column
    x = np.zeros((n, HOURS_PER_WEEK + 1))
    x[np.arange(n), how] = 1.0
    x[:, -1] = t_hours
    present = np.flatnonzero(x.any(axis=0))
    if len(present) < HOURS_PER_WEEK + 1:
        raise DegenerateFitError("not every hour of the week is observed")
    coef, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    if rank < x.shape[1]:
        raise DegenerateFitError("weekly-profile design matrix is rank deficient")

    resid = y - x @ coef
    dof = n - x.shape[1]
    sigma2 = float(resid @ resid) / dof if dof > 0 else 0.0
    xtx_inv = np.linalg.inv(x.T @ x)
    se_trend = float(np.sqrt(max(sigma2 * xtx_inv[-1, -1], 0.0)))
    trend = float(coef[-1])
    if not _t_significant(trend, se_trend, dof, significance):
        trend = 0.0
        coef, _, _, _ = np.linalg.lstsq(x[:, :-1], y, rcond=None)
        profile = coef[:HOURS_PER_WEEK].copy()
    else:
        profile = coef[:HOURS_PER_WEEK].copy()

    m = float(profile.mean())
    if m <= 0:
        raise DegenerateFitError("fitted weekly profile has nonpositive mean")
    return profile / m, trend / m


def fit_daily_regression(
    daily_load: np.ndarray,
    daily_temp: np.ndarray,
    calendar: Calendar,
    significance: float = 0.05,
) -> tuple[np.ndarray, float, float]:
    """Weekday intercepts plus heating/cooling degree-day coefficients.

    The cooling coefficient is dropped when insignificant; both degree-day
    coefficients are refitted to zero when negative, since a negative
    temperature response is not part of the model class.
    """
    y = np.asarray(daily_load, dtype=float)
    temp = np.asarray(daily_temp, dtype=float)
    n = len(y)
    if n < 8:
        raise UnderdeterminedFitError(f"need at least 8 days, got {n}")
    if len(temp) != n or calendar.n_days < n:
        raise ScenarioError("temperature/calendar do not cover the daily load")
    hdd, cdd = _degree_day_arrays(temp)
    wd = calendar.effective_weekdays()[:n]

    def _fit(use_hdd: bool, use_cdd: bool):
        cols = [np.asarray(wd == j, dtype=float) for j in range(7)]
        extras = []
        if use_hdd:
            extras.append(hdd)
        if use_cdd:
            extras.append(cdd)
        x = np.column_stack(cols + extras) if extras else np.column_stack(cols)
        active = np.flatnonzero(x.any(axis=0))
        coef_active, _, rank, _ = np.linalg.lstsq(x[:, active], y, rcond=None)
        if rank < len(active):
            raise UnderdeterminedFitError("daily regression is rank deficient")
        coef = np.zeros(x.shape[1])
        coef[active] = coef_active
        resid = y - x @ coef
        dof = n - len(active)
        sigma2 = float(resid @ resid) / dof if dof > 0 else 0.0
        xtx_inv = np.linalg.pinv(x[:, active].T @ x[:, active])
        se = np.zeros(x.shape[1])
        se[active] = np.sqrt(np.maximum(sigma2 * np.diag(xtx_inv), 0.0))
        return coef, se, dof

    use_hdd = bool(np.any(hdd > 0))
    use_cdd = bool(np.any(cdd > 0))
    coef, se, dof = _fit(use_hdd, use_cdd)
    if use_cdd:
        c_idx = 7 + int(use_hdd)
        if not _t_significant(coef[c_idx], se[c_idx], dof, significance) or coef[c_idx] < 0:
            use_cdd = False
            coef, se, dof = _fit(use_hdd, use_cdd)
    if use_hdd and coef[7] < 0:
        use_hdd = False
        coef, se, dof = _fit(use_hdd, use_cdd)

    beta_w = coef[:7]
    beta_h = float(coef[7]) if use_hdd else 0.0
    beta_c = float(coef[7 + int(use_hdd)]) if use_cdd else 0.0
    return beta_w, beta_h, beta_c


def fit_load_params(
    hourly_load: np.ndarray, daily_temp: np.ndarray, calendar: Calendar, significance: float = 0.05
) -> LoadRegressionParams:
    """Run both regression stages and assemble the full parameter set."""
    profile, trend = fit_weekly_profile(hourly_load, calendar, significance)
    daily_mean = np.asarray(hourly_load, dtype=float).reshape(-1, 24).mean(axis=1)
    beta_w, beta_h, beta_c = fit_daily_regression(daily_mean, daily_temp, calendar, significance)
    return LoadRegressionParams(profile, trend, beta_w, beta_h, beta_c)


def synthesize_load(
    params: LoadRegressionParams,
    daily_temp: np.ndarray,
    calendar: Calendar,
    scale: float = 1.0,
) -> np.ndarray:
    """Hourly load: profile[t mod 168] * (trend*(t mod 8760) + weekday level
    + cooling*CDD + heating*HDD), times `scale`.

    Negative values (possible for extreme parameters) are clamped to zero and
    counted in a warning.
    """
    temp = np.asarray(daily_temp, dtype=float)
    n_days = len(temp)
    if calendar.n_days < n_days:
        raise ScenarioError("calendar does not cover the horizon")
    if not np.all(np.isfinite(temp)):
        raise ScenarioError("temperature series contains NaN/Inf")
    n = n_days * 24
    t = np.arange(n)
    hdd, cdd = _degree_day_arrays(temp)
    days = t // 24
    bracket = (
        params.trend * (t % HOURS_PER_YEAR)
        + params.weekday_level[calendar.effective_weekdays()[days]]
        + params.cooling_coeff * cdd[days]
        + params.heating_coeff * hdd[days]
    )
    load = params.weekly_profile[_hour_of_week(n, calendar)] * bracket * scale
    negative = int(np.sum(load < 0))
    if negative:
        logger.warning("clamped %d negative synthesized load values to zero", negative)
        load = np.maximum(load, 0.0)
    return load


def normalize_hydro(gen_by_year: float, cap_by_year: float, cap_ref: float) -> float:
    """Scale reported generation to a reference capacity level: gen * cap_ref / cap_year."""
    if cap_by_year <= 0:
        raise ValueError("reported capacity must be positive")
    return gen_by_year * cap_ref / cap_by_year


@dataclass(frozen=True)
class PerturbationConfig:
    """Bands within which generated scenarios may deviate from the base.

    Capacity factors are scaled by a factor drawn from [1-a, 1+a] and rolled
    circularly by up to `cf_phase_steps`; temperatures receive a uniform
    offset; inflows are rescaled. When `load_params` is given, loads are
    re-synthesized per bus from the perturbed temperature of `load_region`.
    """

    cf_amplitude: float = 0.1
    cf_phase_steps: int = 4
    temp_offset_c: float = 1.5
    inflow_scale: float = 0.15
    load_amplitude: float = 0.0
    load_params: Mapping[str, LoadRegressionParams] | None = None
    load_region: str | None = None
    load_scale: Mapping[str, float] | None = None
    calendar: Calendar | None = None

    @staticmethod
    def zero() -> "PerturbationConfig":
        return PerturbationConfig(0.0, 0, 0.0, 0.0, 0.0)


def generate_scenarios(
    base: Scenario, n: int, seed: int, perturbation: PerturbationConfig
) -> list[Scenario]:
    """Deterministically derive `n` scenario variants of the base scenario."""
    if n < 1:
        raise ValueError("need at least one scenario")
    p = perturbation
    if p.cf_amplitude < 0 or p.cf_amplitude >= 1:
        raise ValueError("capacity-factor amplitude band must lie in [0, 1)")
    for name, s in base.capacity_factors.items():
        if (1.0 + p.cf_amplitude) * float(np.max(s)) > 1.0 + 1e-9:
            raise ValueError(
                f"capacity-factor band pushes series '{name}' beyond 1; shrink the band"
            )
    base.validate()

    rng = np.random.default_rng(seed)
    out: list[Scenario] = []
    for i in range(n):
        cf = {}
        for name in base.capacity_factors:
            s = np.asarray(base.capacity_factors[name], dtype=float)
            factor = 1.0 + rng.uniform(-p.cf_amplitude, p.cf_amplitude)
            shift = int(rng.integers(-p.cf_phase_steps, p.cf_phase_steps + 1)) if p.cf_phase_steps else 0
            cf[name] = np.clip(np.roll(s, shift) * factor, 0.0, 1.0)
        temps = {}
        for name, s in base.temperatures.items():
            temps[name] = np.asarray(s, dtype=float) + rng.uniform(-p.temp_offset_c, p.temp_offset_c)
        inflows = {}
        for name, s in base.inflows.items():
            inflows[name] = np.asarray(s, dtype=float) * (
                1.0 + rng.uniform(-p.inflow_scale, p.inflow_scale)
            )
        loads = {}
        for name, s in base.loads.items():
            if p.load_params is not None:
                params = p.load_params[name]
                region = p.load_region or name
                cal = p.calendar or Calendar.plain(len(temps[region]))
                scale = (p.load_scale or {}).get(name, 1.0)
                hourly = synthesize_load(params, temps[region], cal, scale)
                loads[name] = _resample_hours(hourly, base.step_hours, base.n_steps)
            else:
                factor = 1.0 + rng.uniform(-p.load_amplitude, p.load_amplitude)
                loads[name] = np.asarray(s, dtype=float) * factor
        sc = Scenario(f"{base.id}-{i:02d}", base.step_hours, cf, loads, inflows, temps)
        sc.validate()
        out.append(sc)
    return out


def _resample_hours(hourly: np.ndarray, step_hours: float, n_steps: int) -> np.ndarray:
    """Average an hourly series into model steps."""
    per = int(round(step_hours))
    if abs(step_hours - per) > 1e-9 or per < 1:
        raise ScenarioError("step length must be a whole number of hours for resampling")
    needed = n_steps * per
    if len(hourly) < needed:
        raise ScenarioError("hourly series shorter than the model horizon")
    return hourly[:needed].reshape(n_steps, per).mean(axis=1)


def write_scenario(sc: Scenario, directory) -> None:
    """Serialise one scenario: series.csv + temperature.csv + meta.json."""
    import pathlib

    d = pathlib.Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = (
        [("cf", k) for k in sc.capacity_factors]
        + [("load", k) for k in sc.loads]
        + [("inflow", k) for k in sc.inflows]
    )
    with open(d / "series.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp"] + [f"{kind}:{k}" for kind, k in names])
        tables = {"cf": sc.capacity_factors, "load": sc.loads, "inflow": sc.inflows}
        for t in range(sc.n_steps):
            row = [f"{t * sc.step_hours:g}"]
            row += [f"{tables[kind][k][t]:.17g}" for kind, k in names]
            w.writerow(row)
    with open(d / "temperature.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        regions = list(sc.temperatures)
        w.writerow(["timestamp"] + regions)
        n_days = max((len(s) for s in sc.temperatures.values()), default=0)
        for day in range(n_days):
            w.writerow([f"{day * 24:g}"] + [f"{sc.temperatures[r][day]:.17g}" for r in regions])
    with open(d / "meta.json", "w") as fh:
        json.dump({"id": sc.id, "step_hours": sc.step_hours}, fh, sort_keys=True)


def read_scenario(directory) -> Scenario:
    import pathlib

    d = pathlib.Path(directory)
    with open(d / "meta.json") as fh:
        meta = json.load(fh)
    cf: dict[str, list[float]] = {}
    loads: dict[str, list[float]] = {}
    inflows: dict[str, list[float]] = {}
    with open(d / "series.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        targets: list[tuple[dict, str] | None] = [None]
        for col in header[1:]:
            kind, key = col.split(":", 1)
            table = {"cf": cf, "load": loads, "inflow": inflows}[kind]
            table[key] = []
            targets.append((table, key))
        for row in reader:
            for j, cell in enumerate(row[1:], start=1):
                table, key = targets[j]  # type: ignore[misc]
                table[key].append(float(cell))
    temps: dict[str, list[float]] = {}
    with open(d / "temperature.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for r in header[1:]:
            temps[r] = []
        for row in reader:
            for r, cell in zip(header[1:], row[1:]):
                temps[r].append(float(cell))
    return Scenario(
        meta["id"],
        float(meta["step_hours"]),
        {k: np.asarray(v) for k, v in cf.items()},
        {k: np.asarray(v) for k, v in loads.items()},
        {k: np.asarray(v) for k, v in inflows.items()},
        {k: np.asarray(v) for k, v in temps.items()},
    )
