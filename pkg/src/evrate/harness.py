"""Monte Carlo campaigns: draw cases, simulate, estimate, fuse, score.

Every case gets its own generator seeded from (seed, case_id), so results
do not depend on evaluation order or on the number of worker processes.
All rates crossing this module's outputs are in deg/s.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .catalog import StarCatalog, fov_indices, generate_desk_catalog, parse_catalog
from .estimator import EstimationError, EstimatorConfig, RateEstimate, estimate_rates
from .event_sim import EventSimError, RenderConfig, simulate_case
from .fusion import DEFAULT_B_TO_A, DualMounting, FusionError, fuse, rates_to_inertial
from .geometry import CameraModel, GeometryError, boresight_attitude

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


class EmptyResultsError(ValueError):
    pass


CASE_COLUMNS = (
    "case_id", "alpha_b_deg", "delta_b_deg", "roll_deg",
    "p_true", "q_true", "r_true",
    "p_est_a", "q_est_a", "r_est_a",
    "p_est_b", "q_est_b", "r_est_b",
    "p_fused", "q_fused", "r_fused",
    "wx_err", "wy_err", "wz_err",
    "n_events_a", "n_events_b", "n_tiles_a", "n_tiles_b", "status",
)

OK_STATUSES = ("ok", "static")
NAN3 = (math.nan, math.nan, math.nan)


@dataclass(frozen=True)
class SimulationConfig:
    catalog: str | None = None  # CSV path; None uses the synthetic desk catalog
    desk_stars: int = 5000
    desk_seed: int = 0
    limit_magnitude: float = 6.0
    focal_length: float = 1464.0  # px
    width: int = 640
    height: int = 480
    event_threshold: float = 0.2
    psf_sigma: float = 0.8  # px
    noise_rate: float = 0.0  # events / pixel / s
    dual_camera: bool = True
    mounting: tuple[float, ...] = tuple(DEFAULT_B_TO_A.ravel())  # R_B_to_A, row-major
    fusion_weighting: str = "equal"
    window: float = 0.1  # s
    internal_rate: float = 2000.0  # Hz
    rate_range_deg: float = 30.0  # max |p|, |q|, |r|
    alpha_range_deg: tuple[float, float] = (0.0, 360.0)
    delta_range_deg: tuple[float, float] = (-90.0, 90.0)
    zero_rates: bool = False
    case_count: int = 100
    seed: int = 0
    workers: int = 1
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)

    def __post_init__(self):
        for name in ("mounting", "alpha_range_deg", "delta_range_deg"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if isinstance(self.estimator, dict):
            object.__setattr__(self, "estimator", _estimator_from_dict(self.estimator))
        a0, a1 = self.alpha_range_deg
        d0, d1 = self.delta_range_deg
        if not (0.0 <= a0 <= a1 <= 360.0):
            raise ConfigError("alpha_range_deg must satisfy 0 <= lo <= hi <= 360")
        if not (-90.0 <= d0 <= d1 <= 90.0):
            raise ConfigError("delta_range_deg must satisfy -90 <= lo <= hi <= 90")
        if len(self.mounting) != 9:
            raise ConfigError("mounting needs 9 entries (row-major 3x3)")
        if not (self.rate_range_deg >= 0.0):
            raise ConfigError("rate_range_deg must be non-negative")
        if self.case_count < 1:
            raise ConfigError("case_count must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.window <= 0 or self.internal_rate <= 0:
            raise ConfigError("window and internal_rate must be positive")
        if self.fusion_weighting not in ("equal", "inverse-variance"):
            raise ConfigError(f"unknown fusion_weighting {self.fusion_weighting!r}")
        try:
            self.camera()
            self.dual_mounting()
            self.render()
        except (GeometryError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def camera(self) -> CameraModel:
        return CameraModel(self.focal_length, self.width, self.height, self.limit_magnitude,
                           self.event_threshold)

    def dual_mounting(self) -> DualMounting:
        return DualMounting(np.array(self.mounting).reshape(3, 3))

    def render(self) -> RenderConfig:
        return RenderConfig(psf_sigma=self.psf_sigma, noise_rate=self.noise_rate)

    def estimator_config(self) -> EstimatorConfig:
        # The flow search range follows the simulated rate range.
        return dataclasses.replace(self.estimator, max_rate=math.radians(max(self.rate_range_deg, 1.0)))

    def load_catalog(self) -> StarCatalog:
        if self.catalog is None:
            return generate_desk_catalog(self.desk_stars, seed=self.desk_seed)
        return parse_catalog(self.catalog)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["mounting"] = list(self.mounting)
        d["alpha_range_deg"] = list(self.alpha_range_deg)
        d["delta_range_deg"] = list(self.delta_range_deg)
        est = d["estimator"]
        if est["tile_size"] is not None:
            est["tile_size"] = list(np.atleast_1d(est["tile_size"]).tolist())
        est.pop("max_rate")  # derived from rate_range_deg
        return d


def _estimator_from_dict(raw: dict) -> EstimatorConfig:
    names = {f.name for f in dataclasses.fields(EstimatorConfig)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown estimator key(s): {', '.join(sorted(unknown))}")
    raw = dict(raw)
    if isinstance(raw.get("tile_size"), list):
        raw["tile_size"] = tuple(raw["tile_size"])
    return EstimatorConfig(**raw)


def config_from_dict(raw: dict) -> SimulationConfig:
    names = {f.name for f in dataclasses.fields(SimulationConfig)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    try:
        return SimulationConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None, overrides: dict | None = None) -> SimulationConfig:
    """Config from a TOML key/value file, with ``overrides`` winning.

    Estimator settings live under an ``[estimator]`` table; overrides may
    use ``estimator.<name>`` keys.
    """
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    est = dict(raw.pop("estimator", {}) or {})
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key.startswith("estimator."):
            est[key.split(".", 1)[1]] = value
        else:
            raw[key] = value
    if est:
        raw["estimator"] = _estimator_from_dict(est)
    return config_from_dict(raw)


# -- cases ------------------------------------------------------------------


@dataclass(frozen=True)
class CaseDraw:
    case_id: int
    alpha_b: float  # rad
    delta_b: float
    roll: float
    rates: np.ndarray  # rad/s, camera-A frame

    def attitude(self) -> np.ndarray:
        return boresight_attitude(self.alpha_b, self.delta_b, self.roll)


def draw_case(config: SimulationConfig, case_id: int, rng: np.random.Generator | None = None) -> CaseDraw:
    """Boresight uniform over the configured patch of sky, roll uniform,
    rate components uniform in +-rate_range_deg."""
    rng = rng if rng is not None else case_rng(config.seed, case_id)
    a0, a1 = np.radians(config.alpha_range_deg)
    s0, s1 = np.sin(np.radians(config.delta_range_deg))
    alpha = float(rng.uniform(a0, a1))
    delta = float(np.arcsin(rng.uniform(s0, s1)))
    roll = float(rng.uniform(0.0, 2.0 * math.pi))
    lim = math.radians(config.rate_range_deg)
    rates = rng.uniform(-lim, lim, 3)
    if config.zero_rates:
        rates = np.zeros(3)
    return CaseDraw(case_id, alpha, delta, roll, rates)


def case_rng(seed: int, case_id: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(case_id)])


@dataclass
class CaseResult:
    case_id: int
    alpha_b_deg: float
    delta_b_deg: float
    roll_deg: float
    truth: tuple[float, float, float]  # camera A, deg/s
    truth_inertial: tuple[float, float, float]
    est_a: tuple[float, float, float] = NAN3  # camera A frame
    est_b: tuple[float, float, float] = NAN3  # camera B frame
    fused: tuple[float, float, float] = NAN3  # camera A frame
    inertial: tuple[float, float, float] = NAN3
    n_events_a: int = 0
    n_events_b: int = 0
    n_tiles_a: int = 0
    n_tiles_b: int = 0
    status: str = "ok"
    dual: bool = False
    condition_a: float = math.nan
    condition_b: float = math.nan
    timings: dict = field(default_factory=dict)  # s; kept out of cases.csv

    @property
    def ok(self) -> bool:
        return self.status in OK_STATUSES

    @property
    def err_single(self) -> np.ndarray:
        return np.subtract(self.est_a, self.truth)

    @property
    def err_fused(self) -> np.ndarray:
        return np.subtract(self.fused, self.truth)

    @property
    def err_inertial(self) -> np.ndarray:
        return np.subtract(self.inertial, self.truth_inertial)

    def row(self) -> list:
        vals = [self.case_id, self.alpha_b_deg, self.delta_b_deg, self.roll_deg,
                *self.truth, *self.est_a, *self.est_b, *self.fused, *self.err_inertial,
                self.n_events_a, self.n_events_b, self.n_tiles_a, self.n_tiles_b, self.status]
        return [repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in vals]


def _deg3(vec) -> tuple[float, float, float]:
    return tuple(math.degrees(float(v)) for v in vec)


def _static_estimate() -> RateEstimate:
    from .kinematics import AngularRates

    return RateEstimate(AngularRates(0.0, 0.0, 0.0), np.zeros((3, 3)), 0.0, 0)


def _estimate_camera(stream, camera, attitude, catalog, est_cfg):
    """(estimate, status). An empty noise-free stream with stars in view
    means no star moved far enough to fire: a zero-rate estimate."""
    if len(stream) == 0:
        if fov_indices(catalog, attitude, camera)[0].size > 0:
            return _static_estimate(), "static"
        return None, "empty-stream"
    try:
        return estimate_rates(stream, camera, est_cfg), "ok"
    except EstimationError as exc:
        return None, exc.status


def run_case(config: SimulationConfig, case_id: int, catalog: StarCatalog) -> CaseResult:
    rng = case_rng(config.seed, case_id)
    draw = draw_case(config, case_id, rng)
    camera = config.camera()
    render = config.render()
    est_cfg = config.estimator_config()
    R_a = draw.attitude()
    truth_inertial = rates_to_inertial(draw.rates, R_a)
    res = CaseResult(case_id, math.degrees(draw.alpha_b), math.degrees(draw.delta_b), math.degrees(draw.roll),
                     _deg3(draw.rates), _deg3(truth_inertial))

    t0 = time.perf_counter()
    try:
        stream_a = simulate_case(catalog, camera, R_a, draw.rates, config.window, config.internal_rate,
                                 render, rng)
    except EventSimError as exc:
        res.status = f"simulation-error: {exc}"
        return res
    res.n_events_a = len(stream_a)
    est_a, status_a = _estimate_camera(stream_a, camera, R_a, catalog, est_cfg)
    res.timings["camera_a"] = time.perf_counter() - t0
    if est_a is not None:
        res.est_a = _deg3(est_a.rates)
        res.n_tiles_a = int(est_a.sample_count)
        res.condition_a = est_a.condition_number

    if not config.dual_camera:
        res.status = status_a
        if est_a is not None:
            res.inertial = _deg3(rates_to_inertial(est_a.rates, R_a))
        return res

    res.dual = True
    mounting = config.dual_mounting()
    R_b = mounting.attitude_b(R_a)
    rates_b = mounting.a_to_b(draw.rates)
    t0 = time.perf_counter()
    try:
        stream_b = simulate_case(catalog, camera, R_b, rates_b, config.window, config.internal_rate,
                                 render, rng)
    except EventSimError as exc:
        res.status = f"simulation-error: {exc}"
        return res
    res.n_events_b = len(stream_b)
    est_b, status_b = _estimate_camera(stream_b, camera, R_b, catalog, est_cfg)
    res.timings["camera_b"] = time.perf_counter() - t0
    if est_b is not None:
        res.est_b = _deg3(est_b.rates)
        res.n_tiles_b = int(est_b.sample_count)
        res.condition_b = est_b.condition_number

    bad = [f"{s}(camera {c})" for s, c in ((status_a, "A"), (status_b, "B")) if s not in OK_STATUSES]
    if bad:
        res.status = "; ".join(bad)
        return res
    try:
        fused = fuse(est_a, est_b, mounting, config.fusion_weighting)
    except FusionError as exc:
        res.status = f"fusion-error: {exc}"
        return res
    res.fused = _deg3(fused.rates)
    res.inertial = _deg3(rates_to_inertial(fused.rates, R_a))
    res.status = "static" if status_a == status_b == "static" else "ok"
    return res


# -- metrics ----------------------------------------------------------------


@dataclass(frozen=True)
class RmsSummary:
    n_cases: int
    n_failed: int
    single: dict  # p, q, r, total
    fused: dict
    inertial: dict  # x, y, z, total
    eps_rms_paper: float
    eps_rms_std: float

    def to_json(self, config_echo: dict | None = None) -> dict:
        def clean(v):
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            return None if v is None or not math.isfinite(v) else float(v)

        return {
            "n_cases": self.n_cases,
            "n_failed": self.n_failed,
            "rms_single": clean(self.single),
            "rms_fused": clean(self.fused),
            "rms_inertial": clean(self.inertial),
            "eps_rms_paper": clean(self.eps_rms_paper),
            "eps_rms_std": clean(self.eps_rms_std),
            "config_echo": config_echo,
        }


def axis_rms(errors) -> np.ndarray:
    """Conventional per-axis RMS over cases; rows are cases."""
    E = np.asarray(errors, dtype=float).reshape(-1, 3)
    return np.sqrt(np.mean(E * E, axis=0))


def eps_rms(errors) -> tuple[float, float]:
    """(paper form, conventional form) of the total RMS error.

    The paper form keeps 1/N outside the square root,
    (1/N) sqrt(sum_i |eps_i|^2); the conventional one is
    sqrt((1/N) sum_i |eps_i|^2). They agree for a single case.
    """
    E = np.asarray(errors, dtype=float).reshape(-1, 3)
    if E.shape[0] == 0:
        raise EmptyResultsError("no cases to summarise")
    ss = float(np.sum(E * E))
    n = E.shape[0]
    return math.sqrt(ss) / n, math.sqrt(ss / n)


def _block(errors, names) -> dict:
    E = np.asarray(errors, dtype=float).reshape(-1, 3)
    if E.shape[0] == 0 or not np.all(np.isfinite(E)):
        return {n: math.nan for n in (*names, "total")}
    rms = axis_rms(E)
    out = {n: float(v) for n, v in zip(names, rms)}
    out["total"] = float(math.sqrt(float(np.sum(rms * rms))))
    return out


def summarize_errors(single, fused, inertial, n_cases: int, dual: bool) -> RmsSummary:
    single = np.asarray(single, dtype=float).reshape(-1, 3)
    if single.shape[0] == 0:
        raise EmptyResultsError("no successful cases")
    fused = np.asarray(fused, dtype=float).reshape(-1, 3)
    primary = fused if dual else single
    paper, std = eps_rms(primary)
    return RmsSummary(
        n_cases, n_cases - single.shape[0],
        _block(single, "pqr"), _block(fused, "pqr") if dual else _block(np.empty((0, 3)), "pqr"),
        _block(inertial, "xyz"), paper, std,
    )


def compute_rms(results) -> RmsSummary:
    """Per-axis and total RMS errors over the successful cases.

    The total ``eps_rms_*`` figures use the fused errors for dual-camera
    campaigns and the camera-A errors otherwise.
    """
    results = list(results)
    if not results:
        raise EmptyResultsError("no results")
    good = [r for r in results if r.ok]
    dual = any(r.dual for r in results)
    return summarize_errors([r.err_single for r in good], [r.err_fused for r in good],
                            [r.err_inertial for r in good], len(results), dual)


# -- campaign ----------------------------------------------------------------

_worker_catalog: StarCatalog | None = None


def _init_worker(config: SimulationConfig):
    global _worker_catalog
    _worker_catalog = config.load_catalog()


def _run_in_worker(args):
    config, case_id = args
    return run_case(config, case_id, _worker_catalog)


def run_campaign(config: SimulationConfig, catalog: StarCatalog | None = None,
                 progress=None) -> tuple[list[CaseResult], RmsSummary | None]:
    """Run every case; results come back ordered by case id. The summary is
    None when every case failed."""
    ids = range(config.case_count)
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers, initializer=_init_worker, initargs=(config,)) as pool:
            results = list(pool.map(_run_in_worker, [(config, i) for i in ids]))
    else:
        catalog = catalog if catalog is not None else config.load_catalog()
        results = []
        for i in ids:
            results.append(run_case(config, i, catalog))
            if progress is not None:
                progress(results[-1])
    results.sort(key=lambda r: r.case_id)
    try:
        summary = compute_rms(results)
    except EmptyResultsError:
        summary = None
    return results, summary


# -- files ------------------------------------------------------------------


def write_cases(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CASE_COLUMNS)
        for r in sorted(results, key=lambda r: r.case_id):
            w.writerow(r.row())


def _write_figure(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def emit_results(results, summary: RmsSummary | None, out_dir, config: SimulationConfig | None = None) -> dict:
    """Write cases.csv, summary.json and per-case error tables for plotting.
    Returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = sorted(results, key=lambda r: r.case_id)
    paths = {"cases": out / "cases.csv", "summary": out / "summary.json",
             "single": out / "errors_single.csv", "fused": out / "errors_fused.csv",
             "inertial": out / "errors_inertial.csv"}
    write_cases(results, paths["cases"])
    good = [r for r in results if r.ok]
    _write_figure(paths["single"], ("case_id", "eps_p", "eps_q", "eps_r"),
                  [(r.case_id, *r.err_single) for r in good])
    _write_figure(paths["fused"], ("case_id", "eps_p", "eps_q", "eps_r"),
                  [(r.case_id, *r.err_fused) for r in good if np.all(np.isfinite(r.fused))])
    _write_figure(paths["inertial"], ("case_id", "eps_wx", "eps_wy", "eps_wz"),
                  [(r.case_id, *r.err_inertial) for r in good])
    if summary is None:
        doc = {"n_cases": len(results), "n_failed": len(results), "rms_single": None, "rms_fused": None,
               "rms_inertial": None, "eps_rms_paper": None, "eps_rms_std": None}
        doc["config_echo"] = config.to_dict() if config else None
    else:
        doc = summary.to_json(config.to_dict() if config else None)
    paths["summary"].write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    return paths


def read_cases(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CASE_COLUMNS:
            raise ValueError(f"{path}: unexpected cases.csv columns")
        rows = []
        for raw in reader:
            row = {}
            for key, val in raw.items():
                if key == "status":
                    row[key] = val
                elif key in ("case_id", "n_events_a", "n_events_b", "n_tiles_a", "n_tiles_b"):
                    row[key] = int(val)
                else:
                    row[key] = float(val)
            rows.append(row)
    return rows


def summary_from_cases(path) -> RmsSummary:
    """Recompute the RMS summary from a cases.csv file."""
    rows = read_cases(path)
    if not rows:
        raise EmptyResultsError(f"{path}: no cases")
    good = [r for r in rows if r["status"] in OK_STATUSES]

    def err(r, names, ref):
        return [r[n] - r[m] for n, m in zip(names, ref)]

    truth = ("p_true", "q_true", "r_true")
    single = [err(r, ("p_est_a", "q_est_a", "r_est_a"), truth) for r in good]
    fused = [err(r, ("p_fused", "q_fused", "r_fused"), truth) for r in good]
    inertial = [[r["wx_err"], r["wy_err"], r["wz_err"]] for r in good]
    dual = any(r["n_events_b"] > 0 or math.isfinite(r["p_est_b"]) for r in rows)
    return summarize_errors(single, fused, inertial, len(rows), dual)
