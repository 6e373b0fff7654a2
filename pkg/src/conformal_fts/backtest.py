"""Expanding/rolling backtests over train/validation/test splits, plus the
interval accuracy metrics: empirical coverage, coverage probability
difference, and the interval score."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InsufficientDataError, InvalidInputError
from .ets import FAMILY_ALL, CurveForecast, forecast_curves
from .fpca import DEFAULT_EVR_TAU, fpca
from .sequential import run_sequential
from .series import FunctionalSeries
from .split_conformal import SplitCalibration, calibrate_split, compute_residuals


@dataclass(frozen=True)
class SplitSpec:
    """Three disjoint, consecutive year ranges: train < validation < test."""

    train: tuple[int, int]
    validation: tuple[int, int]
    test: tuple[int, int]

    def __post_init__(self):
        t, v, s = self.train, self.validation, self.test
        for name, (a, b) in (("train", t), ("validation", v), ("test", s)):
            if a > b:
                raise InvalidInputError(f"{name} range {a}:{b} is empty or reversed")
        if v[0] != t[1] + 1 or s[0] != v[1] + 1:
            raise InvalidInputError("ranges must be contiguous and ordered train < validation < test")

    @classmethod
    def from_proportions(cls, first_year: int, last_year: int) -> "SplitSpec":
        """60/20/20 split with floor rounding: train = floor(0.6 n), test =
        floor(0.2 n), validation takes the remainder (101 years -> 60/21/20)."""
        n = last_year - first_year + 1
        n_train = int(0.6 * n)
        n_test = int(0.2 * n)
        n_val = n - n_train - n_test
        if n_train < 4 or n_val < 1 or n_test < 1:
            raise InsufficientDataError(f"sample of {n} years is too short to split")
        t_end = first_year + n_train - 1
        v_end = t_end + n_val
        return cls((first_year, t_end), (t_end + 1, v_end), (v_end + 1, last_year))


@dataclass(frozen=True)
class WindowScheme:
    """Expanding window (train start pinned at the sample start) or rolling
    window of fixed length (defaults to the initial training length)."""

    kind: str = "expanding"
    length: int | None = None

    def __post_init__(self):
        if self.kind not in ("expanding", "rolling"):
            raise InvalidInputError("scheme kind must be 'expanding' or 'rolling'")
        if self.kind == "rolling" and self.length is not None and self.length < 4:
            raise InvalidInputError("rolling window length must be >= 4")


@dataclass(frozen=True)
class Origin:
    train_start: int
    train_end: int
    origin_year: int
    target_year: int


def _train_range(scheme: WindowScheme, sample_start: int, initial_len: int, origin: int) -> tuple[int, int]:
    if scheme.kind == "expanding":
        return sample_start, origin
    length = scheme.length if scheme.length is not None else initial_len
    return max(sample_start, origin - length + 1), origin


def make_origins(scheme: WindowScheme, split: SplitSpec, phase: str, h: int) -> list[Origin]:
    """Origins whose h-step targets fall inside the phase.

    Origins run from the year just before the phase to (phase end - h), so a
    21-year validation phase yields 22-h origins and a 20-year test phase
    21-h; an infeasible horizon yields an empty list.
    """
    if h < 1:
        raise InvalidInputError("horizon must be >= 1")
    if phase == "validation":
        p_start, p_end = split.validation
    elif phase == "test":
        p_start, p_end = split.test
    else:
        raise InvalidInputError("phase must be 'validation' or 'test'")
    sample_start = split.train[0]
    initial_len = split.train[1] - split.train[0] + 1
    out = []
    for origin in range(p_start - 1, p_end - h + 1):
        ts, te = _train_range(scheme, sample_start, initial_len, origin)
        out.append(Origin(ts, te, origin, origin + h))
    return out


def interval_score(lb, ub, actual, alpha: float):
    """Width plus (2/alpha)-scaled exceedance penalties; lower is better."""
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must be in (0,1)")
    if np.any(lb > ub):
        raise InvalidInputError("interval has lb > ub")
    score = (ub - lb) \
        + (2.0 / alpha) * (lb - actual) * (actual < lb) \
        + (2.0 / alpha) * (actual - ub) * (actual > ub)
    return score if score.ndim else float(score)


@dataclass(frozen=True)
class IntervalRecord:
    origin: int
    target: int
    horizon: int
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


@dataclass
class IntervalForecastSet:
    """All interval forecasts produced by one method at one level alpha."""

    method: str
    alpha: float
    records: list[IntervalRecord] = field(default_factory=list)

    def at_horizon(self, h: int) -> list[IntervalRecord]:
        return [r for r in self.records if r.horizon == h]

    @property
    def horizons(self) -> list[int]:
        return sorted({r.horizon for r in self.records})


def _pooled(intervals: IntervalForecastSet, actuals: FunctionalSeries, h: int):
    recs = intervals.at_horizon(h)
    if not recs:
        raise InsufficientDataError(f"no {h}-step intervals")
    lb = np.array([r.lower for r in recs])
    ub = np.array([r.upper for r in recs])
    act = np.array([actuals.curve(r.target) for r in recs])
    return lb, ub, act


def ecp_h(intervals: IntervalForecastSet, actuals: FunctionalSeries, h: int) -> float:
    """Fraction of pooled (target year, age) cells covered, bounds inclusive."""
    lb, ub, act = _pooled(intervals, actuals, h)
    return float(((lb <= act) & (act <= ub)).mean())


def cpd_h(intervals: IntervalForecastSet, actuals: FunctionalSeries, h: int, alpha: float) -> float:
    """Absolute gap between pooled empirical miscoverage and the nominal alpha."""
    lb, ub, act = _pooled(intervals, actuals, h)
    # phrased as 1 - ECP (not mean of the outside mask) so the identity
    # CPD == |(1 - ECP) - alpha| holds to the last bit
    miss = 1.0 - float(((lb <= act) & (act <= ub)).mean())
    return abs(miss - alpha)


def mean_interval_score_h(intervals: IntervalForecastSet, actuals: FunctionalSeries, h: int, alpha: float) -> float:
    lb, ub, act = _pooled(intervals, actuals, h)
    return float(np.mean(interval_score(lb, ub, act, alpha)))


def mean_width_h(intervals: IntervalForecastSet, actuals: FunctionalSeries, h: int) -> float:
    lb, ub, _ = _pooled(intervals, actuals, h)
    return float(np.mean(ub - lb))


@dataclass(frozen=True)
class SixNumberSummary:
    minimum: float
    q1: float
    median: float
    mean: float
    q3: float
    maximum: float


def summarize_over_horizons(values) -> SixNumberSummary:
    """Min, type-7 quartiles, median, mean, max of per-horizon metric values."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InvalidInputError("cannot summarize an empty sequence")
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    return SixNumberSummary(float(v.min()), float(q1), float(med), float(v.mean()), float(q3), float(v.max()))


@dataclass(frozen=True)
class HorizonMetrics:
    method: str
    alpha: float
    stat_kind: str
    horizon: int
    n_cells: int
    ecp: float
    cpd: float
    mean_width: float
    mean_interval_score: float


@dataclass
class BacktestReport:
    """Per-horizon metrics, interval sets, calibrations and quantile tables."""

    rows: list[HorizonMetrics] = field(default_factory=list)
    interval_sets: list[IntervalForecastSet] = field(default_factory=list)
    calibrations: dict[float, SplitCalibration] = field(default_factory=dict)
    quantiles_by_age: list[tuple[float, float, int, float]] = field(default_factory=list)
    # rows of (alpha, age, h, mean_qhat)
    failures: list[str] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def summaries(self) -> list[tuple[str, float, SixNumberSummary]]:
        out = []
        for alpha in sorted({r.alpha for r in self.rows}):
            sub = [r for r in self.rows if r.alpha == alpha]
            for metric in ("ecp", "cpd", "mean_width", "mean_interval_score"):
                vals = [getattr(r, metric) for r in sub]
                out.append((metric, alpha, summarize_over_horizons(vals)))
        return out


@dataclass
class BacktestConfig:
    method: str = "split"  # "split" | "sequential"
    stat_kind: str = "sd"
    alphas: tuple[float, ...] = (0.2,)
    scheme: WindowScheme = field(default_factory=WindowScheme)
    k: int | str = "evr"
    tau: float = DEFAULT_EVR_TAU
    k_max: int | None = None
    split: SplitSpec | None = None
    tuning: str = "single"
    isotonic: bool = False
    family: tuple[str, ...] = FAMILY_ALL
    max_horizon: int | None = None
    seq_p_max: int | None = None
    seq_min_train: int | None = None
    seq_refresh: bool = True
    sex: str = "total"

    def __post_init__(self):
        if self.method not in ("split", "sequential"):
            raise InvalidInputError("method must be 'split' or 'sequential'")
        for a in self.alphas:
            if not 0.0 < a < 1.0:
                raise InvalidInputError("alpha must be in (0,1)")

    def echo(self) -> dict:
        d = {
            "method": self.method, "stat": self.stat_kind, "alpha": list(self.alphas),
            "scheme": self.scheme.kind, "window_length": self.scheme.length,
            "k": self.k, "tau": self.tau, "k_max": self.k_max,
            "tuning": self.tuning, "isotonic": self.isotonic,
            "family": list(self.family), "max_horizon": self.max_horizon,
            "seq_p_max": self.seq_p_max, "seq_min_train": self.seq_min_train,
            "seq_refresh": self.seq_refresh, "sex": self.sex,
        }
        if self.split is not None:
            d["split"] = {"train": list(self.split.train),
                          "validation": list(self.split.validation),
                          "test": list(self.split.test)}
        return d


def _fit_and_forecast(data: FunctionalSeries, cfg: BacktestConfig,
                      train_start: int, origin: int, H: int) -> CurveForecast:
    window = data.window(train_start, origin)
    model = fpca(window, k=cfg.k, tau=cfg.tau, k_max=cfg.k_max)
    return forecast_curves(model, H, family=cfg.family)


def _origin_forecasts(data: FunctionalSeries, cfg: BacktestConfig, split: SplitSpec,
                      first_origin: int, last_origin: int, horizon_end: int,
                      max_h: int) -> dict[int, CurveForecast]:
    """One model fit per origin year, forecasting as far as needed."""
    sample_start = split.train[0]
    initial_len = split.train[1] - split.train[0] + 1
    out = {}
    for origin in range(first_origin, last_origin + 1):
        ts, _ = _train_range(cfg.scheme, sample_start, initial_len, origin)
        H = min(max_h, horizon_end - origin)
        if H < 1:
            continue
        out[origin] = _fit_and_forecast(data, cfg, ts, origin, H)
    return out


def _metrics_rows(report: BacktestReport, iset: IntervalForecastSet,
                  data: FunctionalSeries, stat_kind: str) -> None:
    for h in iset.horizons:
        lb, ub, act = _pooled(iset, data, h)
        report.rows.append(HorizonMetrics(
            method=iset.method, alpha=iset.alpha, stat_kind=stat_kind, horizon=h,
            n_cells=act.size,
            ecp=float(((lb <= act) & (act <= ub)).mean()),
            cpd=abs(float(((act < lb) | (act > ub)).mean()) - iset.alpha),
            mean_width=float(np.mean(ub - lb)),
            mean_interval_score=float(np.mean(interval_score(lb, ub, act, iset.alpha))),
        ))


def _run_split(data: FunctionalSeries, cfg: BacktestConfig, split: SplitSpec,
               max_h: int, report: BacktestReport) -> None:
    v_start, v_end = split.validation
    t_start, t_end = split.test
    val_fc = _origin_forecasts(data, cfg, split, v_start - 1, v_end - 1, v_end, max_h)
    test_fc = _origin_forecasts(data, cfg, split, t_start - 1, t_end - 1, t_end, max_h)

    residual_sets = {}
    for h in range(1, max_h + 1):
        fcs = [fc for fc in val_fc.values() if fc.max_horizon >= h]
        if fcs:
            residual_sets[h] = compute_residuals(data, fcs, h)

    for alpha in cfg.alphas:
        cal = calibrate_split(residual_sets, cfg.stat_kind, alpha,
                              tuning=cfg.tuning, isotonic=cfg.isotonic)
        for h, msg in cal.failures.items():
            report.failures.append(f"alpha={alpha} h={h}: {msg}")
        report.calibrations[alpha] = cal
        iset = IntervalForecastSet(method="split", alpha=alpha)
        for origin, fc in sorted(test_fc.items()):
            for h in range(1, fc.max_horizon + 1):
                if h not in cal.xi_lo:
                    continue
                point = fc.curve_at(h)
                lb, ub = cal.interval(point, h)
                iset.records.append(IntervalRecord(origin, origin + h, h, point, lb, ub))
        report.interval_sets.append(iset)
        _metrics_rows(report, iset, data, cfg.stat_kind)


def _run_sequential(data: FunctionalSeries, cfg: BacktestConfig, split: SplitSpec,
                    max_h: int, report: BacktestReport) -> None:
    t_start, t_end = split.test
    n = data.n_years
    min_train = cfg.seq_min_train if cfg.seq_min_train is not None else max(10, n // 5)
    first_origin = data.first_year + min_train - 1
    if first_origin >= t_start - 1:
        raise InsufficientDataError("no pre-test years left for residual history")

    last_origin = t_end - 1 if cfg.seq_refresh else t_start - 1
    fcs = _origin_forecasts(data, cfg, split, first_origin, last_origin, t_end,
                            max_h if cfg.seq_refresh else t_end - (t_start - 1))

    test_years = list(range(t_start, t_end + 1))
    for alpha in cfg.alphas:
        iset = IntervalForecastSet(method="sequential", alpha=alpha)
        qsum = {}
        for h in range(1, max_h + 1):
            hist_rows = []
            for target in range(first_origin + h, t_start):
                fc = fcs.get(target - h)
                if fc is not None and fc.max_horizon >= h:
                    hist_rows.append(np.abs(data.curve(target) - fc.curve_at(h)))
            if len(hist_rows) < 3:
                report.failures.append(f"alpha={alpha} h={h}: history shorter than 3 years")
                continue
            if cfg.seq_refresh:
                pf = np.array([fcs[t - h].curve_at(h) for t in test_years])
            else:
                frozen = fcs[t_start - 1]
                pf = np.array([frozen.curve_at(t - (t_start - 1)) for t in test_years])
            act = np.array([data.curve(t) for t in test_years])
            res = run_sequential(pf, act, alpha, np.array(hist_rows),
                                 p_max=cfg.seq_p_max, years=np.array(test_years))
            for i, t in enumerate(test_years):
                iset.records.append(IntervalRecord(t - h, t, h, res.point[i], res.lower[i], res.upper[i]))
            qsum[h] = res.qhat.mean(axis=0)
        report.interval_sets.append(iset)
        _metrics_rows(report, iset, data, cfg.stat_kind)
        ages = data.grid.ages
        for h in sorted(qsum):
            for j, age in enumerate(ages):
                report.quantiles_by_age.append((alpha, float(age), h, float(qsum[h][j])))


def run_backtest(data: FunctionalSeries, cfg: BacktestConfig) -> BacktestReport:
    """Full pipeline: per-origin model fits, conformal intervals on the test
    phase, and pooled per-horizon metrics.  Deterministic given data + config."""
    split = cfg.split or SplitSpec.from_proportions(data.first_year, data.last_year)
    if split.train[0] < data.first_year or split.test[1] > data.last_year:
        raise InvalidInputError("split ranges fall outside the data sample")
    test_len = split.test[1] - split.test[0] + 1
    max_h = min(cfg.max_horizon or test_len, test_len)

    report = BacktestReport(config=cfg.echo())
    report.config["split"] = {"train": list(split.train),
                              "validation": list(split.validation),
                              "test": list(split.test)}
    if cfg.method == "split":
        _run_split(data, cfg, split, max_h, report)
    else:
        _run_sequential(data, cfg, split, max_h, report)
    return report


def averaged_predicted_quantiles(qhat_by_h: dict[int, np.ndarray], ages: np.ndarray) -> list[tuple[float, int, float]]:
    """Long-format (age, h, mean predicted quantile) rows, averaged over test years."""
    rows = []
    for h in sorted(qhat_by_h):
        q = np.asarray(qhat_by_h[h], dtype=float)
        mean_q = q.mean(axis=0) if q.ndim == 2 else q
        for j, age in enumerate(ages):
            rows.append((float(age), h, float(mean_q[j])))
    return rows
