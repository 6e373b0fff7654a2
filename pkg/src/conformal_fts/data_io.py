"""Data ingestion, synthetic fixtures, and report serialization.

Reads HMD-style 1x1 period rate files (Year/Age/Female/Male/Total) and generic
wide CSVs (year column plus one column per age).  Raw rates are converted to
natural-log scale with missing/nonpositive cells imputed by linear
interpolation across age within the year.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .backtest import BacktestReport
from .exceptions import ImputationError, InvalidInputError, ParseError, SchemaError
from .series import AgeGrid, FunctionalSeries

SEXES = ("female", "male", "total")
MISSING = "."


@dataclass(frozen=True)
class HmdRow:
    year: int
    age: int
    open_ended: bool
    female: float | None
    male: float | None
    total: float | None


@dataclass(frozen=True)
class RawMortalityTable:
    """Parsed HMD-style rate rows, validated for uniqueness and ladder shape."""

    rows: tuple[HmdRow, ...]

    def __post_init__(self):
        seen = set()
        by_year: dict[int, list[int]] = {}
        for r in self.rows:
            key = (r.year, r.age)
            if key in seen:
                raise ParseError(f"duplicate (year, age) pair {key}")
            seen.add(key)
            by_year.setdefault(r.year, []).append(r.age)
        for year, ages in by_year.items():
            ages.sort()
            if ages != list(range(ages[0], ages[-1] + 1)):
                raise SchemaError(f"ages for year {year} are not a contiguous ladder")

    @property
    def years(self) -> list[int]:
        return sorted({r.year for r in self.rows})

    def rate(self, row: HmdRow, sex: str) -> float | None:
        return getattr(row, sex)


def _parse_age(token: str) -> tuple[int, bool]:
    if token.endswith("+"):
        return int(token[:-1]), True
    return int(token), False


def _parse_rate(token: str) -> float | None:
    if token == MISSING or token == "":
        return None
    value = float(token)
    if value < 0:
        raise ValueError(f"negative rate {token}")
    return value


def load_hmd(path: str | os.PathLike) -> RawMortalityTable:
    """Parse a whitespace- or comma-delimited Year/Age/Female/Male/Total file.

    '.' marks a missing rate; '110+' style open age groups are accepted.
    Preamble lines before the header (HMD files carry one) are skipped.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    header_idx = None
    for i, line in enumerate(lines):
        tokens = [t.strip().lower() for t in line.replace(",", " ").split()]
        if tokens[:3] == ["year", "age", "female"]:
            if tokens[3:5] != ["male", "total"]:
                raise SchemaError("expected columns Year Age Female Male Total")
            header_idx = i
            break
    if header_idx is None:
        raise SchemaError("no Year/Age/Female/Male/Total header found")
    for lineno, line in enumerate(lines[header_idx + 1 :], start=header_idx + 2):
        if not line.strip():
            continue
        tokens = line.replace(",", " ").split()
        if len(tokens) != 5:
            raise ParseError(f"line {lineno}: expected 5 fields, got {len(tokens)}")
        try:
            year = int(tokens[0])
            age, open_ended = _parse_age(tokens[1])
            female, male, total = (_parse_rate(t) for t in tokens[2:5])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        rows.append(HmdRow(year, age, open_ended, female, male, total))
    if not rows:
        raise SchemaError("file contains no data rows")
    return RawMortalityTable(tuple(rows))


def _impute_log_rates(raw: np.ndarray, ages: np.ndarray, year: int) -> np.ndarray:
    """Log-transform one year of raw rates; missing/nonpositive cells are
    linearly interpolated in log scale across age (endpoints: nearest valid)."""
    valid = np.isfinite(raw) & (raw > 0)
    if valid.sum() < 2:
        raise ImputationError(f"year {year} has fewer than 2 valid rates")
    log_rates = np.full(raw.shape, np.nan)
    log_rates[valid] = np.log(raw[valid])
    if not valid.all():
        log_rates[~valid] = np.interp(ages[~valid], ages[valid], log_rates[valid])
    return log_rates


def to_functional_series(table: RawMortalityTable, sex: str = "total", top_age: int = 100) -> FunctionalSeries:
    """Pivot to a year-by-age log-rate matrix with a closed top age group.

    Ages above ``top_age`` are collapsed into the top group by unweighted mean
    of the usable (positive, non-missing) rates.
    """
    if sex not in SEXES:
        raise InvalidInputError(f"sex must be one of {SEXES}")
    years = table.years
    base_ages = sorted({r.age for r in table.rows if r.age < top_age})
    if not base_ages:
        raise SchemaError(f"no ages below top_age={top_age}")
    ages = np.array(base_ages + [top_age], dtype=float)
    cell: dict[tuple[int, int], float | None] = {}
    top_pool: dict[int, list[float]] = {y: [] for y in years}
    for r in table.rows:
        rate = table.rate(r, sex)
        if r.age >= top_age:
            if rate is not None and rate > 0:
                top_pool[r.year].append(rate)
        else:
            cell[(r.year, r.age)] = rate

    values = np.empty((len(years), ages.size))
    for i, year in enumerate(years):
        raw = np.full(ages.size, np.nan)
        for j, age in enumerate(base_ages):
            v = cell.get((year, age))
            if v is not None:
                raw[j] = v
        if top_pool[year]:
            raw[-1] = float(np.mean(top_pool[year]))
        values[i] = _impute_log_rates(raw, ages, year)
    return FunctionalSeries(AgeGrid(ages), np.array(years), values)


def load_wide_csv(path: str | os.PathLike, log_input: bool = False, top_age: int | None = None) -> FunctionalSeries:
    """Read a wide CSV: ``year`` column plus one column per age.

    Values are raw rates by default (log-transformed with imputation); with
    ``log_input`` they are taken as already being log rates.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise SchemaError("empty file")
    header = [t.strip() for t in lines[0].split(",")]
    if header[0].lower() != "year" or len(header) < 3:
        raise SchemaError("expected header 'year,<age>,<age>,...'")
    try:
        ages = np.array([float(t.rstrip("+")) for t in header[1:]])
    except ValueError as exc:
        raise SchemaError(f"non-numeric age column: {exc}") from exc
    years, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        tokens = line.split(",")
        if len(tokens) != len(header):
            raise ParseError(f"line {lineno}: expected {len(header)} fields, got {len(tokens)}")
        try:
            years.append(int(tokens[0]))
            rows.append([float("nan") if t.strip() in (MISSING, "") else float(t) for t in tokens[1:]])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
    values = np.array(rows, dtype=float)
    if log_input:
        if not np.all(np.isfinite(values)):
            raise ParseError("log-scale input must have finite entries everywhere")
    else:
        values = np.array([
            _impute_log_rates(values[i], ages, years[i]) for i in range(len(years))
        ])
    return FunctionalSeries(AgeGrid(ages), np.array(years), values)


def write_wide_csv(series: FunctionalSeries, path: str | os.PathLike) -> None:
    """Write a series as a wide CSV of log-scale values (load with log_input)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("year," + ",".join(_fmt_age(a) for a in series.grid.ages) + "\n")
        for i, year in enumerate(series.years):
            fh.write(str(int(year)) + "," + ",".join("%.10g" % v for v in series.values[i]) + "\n")


def _fmt_age(a: float) -> str:
    return str(int(a)) if float(a).is_integer() else "%.10g" % a


@dataclass(frozen=True)
class SynthSpec:
    """Synthetic functional series: fixed smooth mean, orthonormal sinusoid
    basis, AR(1) component scores, and i.i.d. Gaussian observation noise."""

    n_years: int = 100
    n_ages: int = 50
    k_true: int = 3
    ar_coefs: tuple[float, ...] | None = None
    innovation_sds: tuple[float, ...] | None = None
    noise_sd: float = 0.002
    seed: int = 0
    first_year: int = 1

    def __post_init__(self):
        if self.n_years < 3 or self.n_ages < 2 or self.k_true < 1:
            raise InvalidInputError("need n_years >= 3, n_ages >= 2, k_true >= 1")
        if self.noise_sd < 0:
            raise InvalidInputError("noise_sd must be >= 0")
        for rho in self.resolved_ar():
            if abs(rho) >= 1:
                raise InvalidInputError("AR coefficients must have |rho| < 1")
        if any(s < 0 for s in self.resolved_sds()):
            raise InvalidInputError("innovation sds must be >= 0")

    def resolved_ar(self) -> tuple[float, ...]:
        if self.ar_coefs is not None:
            return self.ar_coefs
        return tuple(0.5 for _ in range(self.k_true))

    def resolved_sds(self) -> tuple[float, ...]:
        if self.innovation_sds is not None:
            return self.innovation_sds
        # one dominant level component, then a fast geometric decay; realistic
        # log-mortality spectra are close to rank one
        return tuple([1.0] + [0.05 * 0.2 ** k for k in range(self.k_true - 1)])


def _synth_basis(grid: AgeGrid, k_true: int) -> tuple[np.ndarray, np.ndarray]:
    x = (grid.ages - grid.ages[0]) / (grid.ages[-1] - grid.ages[0])
    mu = -5.0 + 4.0 * x**2 + 0.5 * np.sin(3.0 * x)
    w = grid.quad_weights()
    # first basis function is level-like (no sign change), as in log mortality
    phi = np.array([np.cos(k * np.pi * x) for k in range(k_true)])
    # Gram-Schmidt under the weighted inner product
    for k in range(k_true):
        for j in range(k):
            phi[k] -= (w * phi[j] * phi[k]).sum() * phi[j]
        phi[k] /= np.sqrt((w * phi[k] ** 2).sum())
    return mu, phi


def synth_generate(spec: SynthSpec) -> FunctionalSeries:
    """Seeded, fully reproducible synthetic log-rate surface."""
    grid = AgeGrid.unit(spec.n_ages)
    mu, phi = _synth_basis(grid, spec.k_true)
    rng = np.random.default_rng(spec.seed)
    ar = spec.resolved_ar()
    sds = spec.resolved_sds()
    burn = 100
    scores = np.zeros((spec.n_years, spec.k_true))
    for k in range(spec.k_true):
        b = 0.0
        z = rng.standard_normal(burn + spec.n_years)
        for t in range(burn + spec.n_years):
            b = ar[k] * b + sds[k] * z[t]
            if t >= burn:
                scores[t - burn, k] = b
    noise = spec.noise_sd * rng.standard_normal((spec.n_years, spec.n_ages))
    values = mu + scores @ phi + noise
    years = np.arange(spec.first_year, spec.first_year + spec.n_years)
    return FunctionalSeries(grid, years, values)


def _fmt(x) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return "%.6g" % x


def write_report(report: BacktestReport, out_dir: str | os.PathLike) -> list[str]:
    """Serialize a backtest report: per-horizon metrics, six-number summaries,
    long-format intervals, mean predicted quantiles, and the config echo.
    All floats carry 6 significant digits."""
    os.makedirs(out_dir, exist_ok=True)
    sex = report.config.get("sex", "total")
    written = []

    path = os.path.join(out_dir, "metrics_by_horizon.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("method,sex,alpha,stat,h,ecp,cpd,mean_width,mean_interval_score\n")
        for r in report.rows:
            fh.write(",".join([
                r.method, sex, _fmt(r.alpha), r.stat_kind, str(r.horizon),
                _fmt(r.ecp), _fmt(r.cpd), _fmt(r.mean_width), _fmt(r.mean_interval_score),
            ]) + "\n")
    written.append(path)

    path = os.path.join(out_dir, "summary.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("metric,alpha,stat,min,q1,median,mean,q3,max\n")
        stat = report.config.get("stat", "")
        for metric, alpha, s in (report.summaries() if report.rows else []):
            fh.write(",".join([
                metric, _fmt(alpha), stat,
                _fmt(s.minimum), _fmt(s.q1), _fmt(s.median), _fmt(s.mean), _fmt(s.q3), _fmt(s.maximum),
            ]) + "\n")
    written.append(path)

    path = os.path.join(out_dir, "intervals.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("origin,target,h,age,point,lb,ub\n")
        for iset in report.interval_sets:
            for rec in iset.records:
                for j in range(rec.point.size):
                    fh.write(",".join([
                        str(rec.origin), str(rec.target), str(rec.horizon), str(j),
                        _fmt(rec.point[j]), _fmt(rec.lower[j]), _fmt(rec.upper[j]),
                    ]) + "\n")
    written.append(path)

    path = os.path.join(out_dir, "quantiles_by_age.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("age,h,mean_qhat\n")
        for _alpha, age, h, q in report.quantiles_by_age:
            fh.write(f"{_fmt_age(age)},{h},{_fmt(q)}\n")
    written.append(path)

    path = os.path.join(out_dir, "config.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.config, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)
    return written
