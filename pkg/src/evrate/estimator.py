"""Motion-field recovery by contrast maximisation and least-squares rates.

Flow is estimated per sensor tile: events are warped back to the earliest
timestamp under a candidate image velocity, their polarities summed into an
image and the sum of squared pixel values used as sharpness. A coarse grid
search is followed by a finer local grid and Newton iterations on a
Gaussian-splat version of the same score. Each focused tile yields one
(x, y, u, v) sample; outliers are screened on their flow residuals and the
remaining samples solved for (p, q, r).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np
from scipy import ndimage

from . import _kernels
from .event_sim import EventStream
from .geometry import CameraModel
from .kinematics import DEFAULT_MAX_RATE, AngularRates, MotionFieldSample, motion_matrices


class EstimationError(RuntimeError):
    status = "estimation-error"


class EmptyStreamError(EstimationError):
    status = "empty-stream"


class TooFewTilesError(EstimationError):
    status = "too-few-tiles"


class RankDeficientError(EstimationError):
    status = "rank-deficient"

    def __init__(self, msg: str, condition_number: float):
        super().__init__(msg)
        self.condition_number = condition_number


@dataclass(frozen=True)
class EstimatorConfig:
    tile_size: tuple[int, int] | None = None  # None: 4x4 grid over the sensor
    min_events_per_tile: int = 20
    max_rate: float = DEFAULT_MAX_RATE  # rad/s, sizes the default search range
    search_range: float | None = None  # px/s half-width
    grid_step: float | None = None  # px/s
    max_grid_events: int = 2000  # events used by the grid searches
    max_refine_events: int = 4000  # events used by the Newton refinement
    refine_factor: int = 8  # local grid spacing is grid_step / refine_factor
    newton_step: float = 0.5
    newton_tol: float = 1e-3
    newton_max_iter: int = 50
    refine_kernel: str = "gaussian"  # "gaussian", "bilinear" or "nearest"
    kernel_sigma: float = 1.0  # px, Gaussian splat width
    score: str = "sum_sq"  # or "variance"
    focus_fraction: float = 0.25
    max_layers: int = 1  # >1 peels focused stars and searches the tile again
    peel_radius: int = 3  # px
    min_time_span: float = 0.5  # focused events must span this fraction of the window
    pad_canvas: bool = True
    min_sharpness: float = 3.0
    location: str = "focus"  # "focus": contrast-weighted focused events; "centroid": all tile events
    weighted: bool = False
    outlier_k: float | None = 3.0  # reject samples beyond k robust sigmas; None disables
    outlier_floor: float = 1.0  # px/s, residuals below this are never rejected
    measurement_sigma: float | None = None  # px/s; None: from LS residuals

    def resolved_range(self, camera: CameraModel) -> float:
        if self.search_range is not None:
            return float(self.search_range)
        return 1.2 * camera.focal_length * math.tan(self.max_rate)

    def resolved_step(self, camera: CameraModel) -> float:
        if self.grid_step is not None:
            return float(self.grid_step)
        return self.resolved_range(camera) / 25.0

    def resolved_tile(self, camera: CameraModel) -> tuple[int, int]:
        if self.tile_size is None:
            return camera.width // 4, camera.height // 4
        if np.ndim(self.tile_size) == 0:
            return int(self.tile_size), int(self.tile_size)
        tw, th = self.tile_size
        return int(tw), int(th)


# -- reference (numpy) path -------------------------------------------------


@dataclass
class WarpedImage:
    pixels: np.ndarray  # (H, W) summed polarity
    reference_time: float
    velocity: tuple[float, float]


@dataclass(frozen=True)
class ContrastResult:
    velocity: tuple[float, float]
    score: float
    iterations: int
    converged: bool
    coarse_velocity: tuple[float, float] = (0.0, 0.0)
    trace: tuple[float, ...] = ()  # objective J at each accepted iterate


def _event_arrays(events):
    """(x, y, t, k) float arrays from an EventStream or a 4-tuple."""
    if isinstance(events, EventStream):
        return (events.x.astype(float), events.y.astype(float), events.t, events.k.astype(float))
    x, y, t, k = (np.asarray(a, dtype=float) for a in events)
    return x, y, t, k


def warp_events(stream, velocity, t0: float | None = None):
    """Move events back along ``velocity`` (px/s) to time ``t0``.

    Returns (xw, yw, k). ``t0`` defaults to the earliest event time.
    """
    x, y, t, k = _event_arrays(stream)
    if t0 is None:
        t0 = float(t.min()) if t.size else 0.0
    u, v = velocity
    return x - u * (t - t0), y - v * (t - t0), k


def accumulate_image(warped, camera: CameraModel, reference_time: float = 0.0,
                     velocity=(0.0, 0.0), bilinear: bool = False) -> WarpedImage:
    """Sum polarities of warped events into a sensor-sized image.

    Nearest-pixel voting by default; events landing off the sensor are
    dropped.
    """
    xw, yw, k = (np.asarray(a, dtype=float) for a in warped)
    W, H = camera.width, camera.height
    img = np.zeros(W * H)
    if bilinear:
        x0, y0 = np.floor(xw), np.floor(yw)
        fx, fy = xw - x0, yw - y0
        for ox, oy, w in ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)),
                          (0, 1, (1 - fx) * fy), (1, 1, fx * fy)):
            px, py = (x0 + ox).astype(np.int64), (y0 + oy).astype(np.int64)
            ok = (px >= 0) & (px < W) & (py >= 0) & (py < H)
            np.add.at(img, py[ok] * W + px[ok], (k * w)[ok])
    else:
        px = np.floor(xw + 0.5).astype(np.int64)
        py = np.floor(yw + 0.5).astype(np.int64)
        ok = (px >= 0) & (px < W) & (py >= 0) & (py < H)
        img = np.bincount(py[ok] * W + px[ok], weights=k[ok], minlength=W * H).astype(float)
    return WarpedImage(img.reshape(H, W), reference_time, (float(velocity[0]), float(velocity[1])))


def contrast_score(image: WarpedImage | np.ndarray, mode: str = "sum_sq") -> float:
    I = image.pixels if isinstance(image, WarpedImage) else np.asarray(image, dtype=float)
    if mode == "sum_sq":
        return float(np.sum(I * I))
    if mode == "variance":
        return float(np.var(I))
    raise ValueError(f"unknown score mode {mode!r}")


# -- fast path --------------------------------------------------------------


class _Scorer:
    """Compiled scoring of one event set against many velocities."""

    def __init__(self, x, y, t, k, camera: CameraModel, mode: str = "sum_sq", pad: int = 0):
        # The canvas covers the events' bounding box plus ``pad`` px, so that
        # stars entering or leaving the field still focus somewhere on it.
        # Without padding it is the sensor itself.
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self.t0 = float(t.min())
        self.pad = int(pad)
        if self.pad > 0:
            self.ox = int(math.floor(x.min())) - self.pad
            self.oy = int(math.floor(y.min())) - self.pad
            self.W = int(math.ceil(x.max())) - self.ox + self.pad + 1
            self.H = int(math.ceil(y.max())) - self.oy + self.pad + 1
        else:
            self.ox = self.oy = 0
            self.W, self.H = camera.width, camera.height
        self.x = np.ascontiguousarray(x - self.ox)
        self.y = np.ascontiguousarray(y - self.oy)
        self.dt = np.ascontiguousarray(t - self.t0, dtype=float)
        self.k = np.ascontiguousarray(k, dtype=float)
        self.npix = float(self.W * self.H)
        self.mode = mode
        self.scratch = np.zeros(self.W * self.H)
        self.touched = np.zeros(4 * max(self.x.size, 1), dtype=np.int64)
        self.evaluations = 0

    def _buffer(self, per_event: int) -> np.ndarray:
        # index list of pixels touched by one evaluation, for cheap re-zeroing
        need = per_event * max(self.x.size, 1)
        if self.touched.size < need:
            self.touched = np.zeros(need, dtype=np.int64)
        return self.touched

    def take(self, idx) -> "_Scorer":
        """Scorer over a subset of the events, sharing this one's canvas."""
        sub = object.__new__(_Scorer)
        sub.__dict__.update(self.__dict__)
        sub.x, sub.y, sub.dt, sub.k = (np.ascontiguousarray(a[idx]) for a in (self.x, self.y, self.dt, self.k))
        return sub

    def _finish(self, S, T):
        if self.mode == "sum_sq":
            return S
        if self.mode == "variance":
            return S / self.npix - (T / self.npix) ** 2
        raise ValueError(f"unknown score mode {self.mode!r}")

    def grid(self, us, vs, subset=None):
        x, y, dt, k = self.x, self.y, self.dt, self.k
        if subset is not None:
            x, y, dt, k = x[subset], y[subset], dt[subset], k[subset]
        S, T = _kernels.grid_scores(x, y, dt, k, np.ascontiguousarray(us, dtype=float),
                                    np.ascontiguousarray(vs, dtype=float),
                                    self.W, self.H, self.scratch, self._buffer(1))
        self.evaluations += len(us)
        return self._finish(S, T)

    def smooth(self, u, v):
        S, T = _kernels.bilinear_score(self.x, self.y, self.dt, self.k, float(u), float(v),
                                       self.W, self.H, self.scratch, self._buffer(4))
        self.evaluations += 1
        return self._finish(S, T)

    def gaussian(self, u, v, sigma, radius):
        S, T = _kernels.gaussian_score(self.x, self.y, self.dt, self.k, float(u), float(v),
                                       self.W, self.H, float(sigma), float(radius),
                                       self.scratch, self._buffer((2 * math.ceil(radius) + 1) ** 2))
        self.evaluations += 1
        return self._finish(S, T)

    def nearest(self, u, v):
        return float(self.grid(np.array([u]), np.array([v]))[0])


def _padding(search_range: float, duration: float) -> int:
    return int(math.ceil(1.5 * search_range * duration)) + 4


def _lattice(center, half_width, step):
    n = int(math.floor(half_width / step + 1e-9))
    axis = step * np.arange(-n, n + 1)
    U, V = np.meshgrid(center[0] + axis, center[1] + axis, indexing="ij")
    return U.ravel(), V.ravel()


def _newton(objective, start, h, tol, max_iter, max_step):
    """Minimise ``objective`` from ``start`` with finite-difference Newton
    steps. An indefinite Hessian is shifted to positive definite and steps
    are capped at ``max_step`` and halved until the objective does not
    increase. Returns (point, J, iterations, converged, trace)."""
    p = np.asarray(start, dtype=float)
    J = objective(*p)
    trace = [J]
    for it in range(1, max_iter + 1):
        u, v = p
        Jpu, Jmu = objective(u + h, v), objective(u - h, v)
        Jpv, Jmv = objective(u, v + h), objective(u, v - h)
        Jpp, Jpm = objective(u + h, v + h), objective(u + h, v - h)
        Jmp, Jmm = objective(u - h, v + h), objective(u - h, v - h)
        g = np.array([(Jpu - Jmu) / (2 * h), (Jpv - Jmv) / (2 * h)])
        Huu = (Jpu - 2 * J + Jmu) / h**2
        Hvv = (Jpv - 2 * J + Jmv) / h**2
        Huv = (Jpp - Jpm - Jmp + Jmm) / (4 * h**2)
        Hm = np.array([[Huu, Huv], [Huv, Hvv]])
        if not (np.all(np.isfinite(Hm)) and np.all(np.isfinite(g))):
            return p, J, it, False, tuple(trace)
        eig = np.linalg.eigvalsh(Hm)
        scale = float(np.max(np.abs(eig)))
        if scale == 0.0:
            return p, J, it, False, tuple(trace)  # flat objective
        if eig[0] <= 1e-6 * scale:
            Hm = Hm + (1e-3 * scale - eig[0]) * np.eye(2)
        step = -np.linalg.solve(Hm, g)
        norm = float(np.linalg.norm(step))
        if norm > max_step:
            step *= max_step / norm
        accepted = False
        for _ in range(40):
            cand = p + step
            Jc = objective(*cand)
            if Jc <= J:
                accepted = True
                break
            step = step / 2
            if np.linalg.norm(step) < tol:
                break
        if not accepted:
            return p, J, it, True, tuple(trace)
        p, J = cand, Jc
        trace.append(J)
        if np.linalg.norm(step) < tol:
            return p, J, it, True, tuple(trace)
    return p, J, max_iter, False, tuple(trace)


def _global_flow(scorer: _Scorer, search_range: float, grid_step: float, cfg: EstimatorConfig) -> ContrastResult:
    n = scorer.x.size
    subset = None
    if n > cfg.max_grid_events:
        subset = np.linspace(0, n - 1, cfg.max_grid_events).round().astype(np.int64)
    us, vs = _lattice((0.0, 0.0), search_range, grid_step)
    scores = scorer.grid(us, vs, subset)
    best = int(np.argmax(scores))  # first maximum: lowest (u, v) lexicographically
    vc = (float(us[best]), float(vs[best]))

    fine_scorer = scorer
    if n > cfg.max_refine_events:
        fine_scorer = scorer.take(np.linspace(0, n - 1, cfg.max_refine_events).round().astype(np.int64))
    if cfg.refine_kernel == "gaussian":
        radius = 3.0 * cfg.kernel_sigma

        def obj(u, v):
            return -fine_scorer.gaussian(u, v, cfg.kernel_sigma, radius)
    elif cfg.refine_kernel == "bilinear":
        def obj(u, v):
            return -fine_scorer.smooth(u, v)
    elif cfg.refine_kernel == "nearest":
        def obj(u, v):
            return -fine_scorer.nearest(u, v)
    else:
        raise ValueError(f"unknown refine kernel {cfg.refine_kernel!r}")

    start = vc
    if cfg.refine_factor > 1:
        fine = grid_step / cfg.refine_factor
        fu, fv = _lattice(vc, grid_step, fine)
        vals = scorer.grid(fu, fv, subset)
        i = int(np.argmax(vals))
        start = (float(fu[i]), float(fv[i]))
    p, J, iters, conv, trace = _newton(obj, start, cfg.newton_step, cfg.newton_tol, cfg.newton_max_iter,
                                       max(grid_step / max(cfg.refine_factor, 1), 4 * cfg.newton_step))
    return ContrastResult((float(p[0]), float(p[1])), float(-J), iters, conv, vc, trace)


def estimate_global_flow(stream, camera: CameraModel | None = None, search_range: float | None = None,
                         grid_step: float | None = None, config: EstimatorConfig | None = None) -> ContrastResult:
    """Single image velocity that best focuses all events of ``stream``."""
    cfg = config or EstimatorConfig()
    if camera is None:
        camera = stream.camera
    x, y, t, k = _event_arrays(stream)
    if x.size == 0:
        raise EmptyStreamError("no events to estimate flow from")
    rng_ = search_range if search_range is not None else cfg.resolved_range(camera)
    step = grid_step if grid_step is not None else (
        cfg.grid_step if cfg.grid_step is not None else rng_ / 25.0)
    pad = _padding(rng_, float(t.max() - t.min())) if cfg.pad_canvas else 0
    scorer = _Scorer(x, y, t, k, camera, cfg.score, pad)
    return _global_flow(scorer, rng_, step, cfg)


@dataclass
class TileReport:
    tile: tuple[int, int]
    n_events: int
    status: str
    layer: int = 0
    velocity: tuple[float, float] | None = None
    location: tuple[float, float] | None = None  # focal-plane x, y
    score: float | None = None
    sharpness: float | None = None
    converged: bool | None = None
    iterations: int | None = None
    time_span: float | None = None  # s, 5-95 % spread of focused event times


def _focus(scorer: _Scorer, velocity, fraction: float, peel_radius: int = 0):
    """Focus mask, peel mask and contrast weights at ``velocity``.

    Returns (focused, peeled, weight, sharpness). ``peeled`` widens the
    focused set to every event landing within ``peel_radius`` px of a
    focused pixel, so that a star's faint wings leave with its core.
    """
    W, H = scorer.W, scorer.H
    px = np.floor(scorer.x - velocity[0] * scorer.dt + 0.5).astype(np.int64)
    py = np.floor(scorer.y - velocity[1] * scorer.dt + 0.5).astype(np.int64)
    ok = (px >= 0) & (px < W) & (py >= 0) & (py < H)
    flat = np.where(ok, py * W + px, 0)
    img = np.bincount(flat[ok], weights=scorer.k[ok], minlength=W * H)
    val = np.where(ok, img[flat], 0.0)
    peak = np.max(np.abs(val)) if val.size else 0.0
    focused = ok & (np.abs(val) >= fraction * peak) & (peak > 0)
    peeled = focused
    if peel_radius > 0 and focused.any():
        hot = np.zeros(W * H, dtype=bool)
        hot[flat[focused]] = True
        hot = ndimage.binary_dilation(hot.reshape(H, W), iterations=peel_radius).ravel()
        peeled = focused | (ok & hot[flat])
    weight = np.clip(scorer.k * val, 0.0, None)
    sharp = float(np.sum(img * img) / max(int(ok.sum()), 1))
    return focused, peeled, weight, sharp


def local_flow(stream: EventStream, camera: CameraModel | None = None,
               config: EstimatorConfig | None = None) -> tuple[list[MotionFieldSample], list[TileReport]]:
    """Tile-wise flow samples plus a report for every tile visited."""
    cfg = config or EstimatorConfig()
    camera = camera or stream.camera
    tw, th = cfg.resolved_tile(camera)
    if tw < 16 or th < 16:
        raise ValueError("tile size must be at least 16 px")
    if len(stream) == 0:
        raise EmptyStreamError("no events to estimate flow from")
    x, y, t, k = _event_arrays(stream)
    search_range = cfg.resolved_range(camera)
    step = cfg.resolved_step(camera)
    duration = stream.duration
    pad = _padding(search_range, duration) if cfg.pad_canvas else 0
    samples: list[MotionFieldSample] = []
    reports: list[TileReport] = []
    tx = (x // tw).astype(np.int64)
    ty = (y // th).astype(np.int64)
    for j in range(int(math.ceil(camera.height / th))):
        for i in range(int(math.ceil(camera.width / tw))):
            sel = np.flatnonzero((tx == i) & (ty == j))
            for layer in range(cfg.max_layers):
                if sel.size < cfg.min_events_per_tile:
                    if layer == 0:
                        reports.append(TileReport((i, j), int(sel.size), "too-few-events"))
                    break
                scorer = _Scorer(x[sel], y[sel], t[sel], k[sel], camera, cfg.score, pad)
                res = _global_flow(scorer, search_range, step, cfg)
                last = layer == cfg.max_layers - 1
                focused, peeled, weight, sharp = _focus(scorer, res.velocity, cfg.focus_fraction,
                                                        0 if last else cfg.peel_radius)
                rep = TileReport((i, j), int(sel.size), "ok", layer, res.velocity, None,
                                 res.score, sharp, res.converged, res.iterations)
                reports.append(rep)
                wsum = float(weight[focused].sum())
                if sharp < cfg.min_sharpness or int(focused.sum()) < cfg.min_events_per_tile or wsum <= 0:
                    rep.status = "unfocused"
                    break
                if cfg.location == "focus":
                    col = float(np.sum(weight[focused] * scorer.x[focused]) / wsum) + scorer.ox
                    row = float(np.sum(weight[focused] * scorer.y[focused]) / wsum) + scorer.oy
                elif cfg.location == "centroid":
                    col, row = float(x[sel].mean()), float(y[sel].mean())
                else:
                    raise ValueError(f"unknown location mode {cfg.location!r}")
                fx, fy = camera.from_pixel(col, row)
                rep.location = (float(fx), float(fy))
                lo, hi = np.quantile(scorer.dt[focused], [0.05, 0.95])
                rep.time_span = float(hi - lo)
                sel = sel[~peeled]
                if rep.time_span < cfg.min_time_span * duration:
                    rep.status = "short-track"
                    continue
                samples.append(MotionFieldSample(float(fx), float(fy), res.velocity[0], res.velocity[1],
                                                 float(focused.sum())))
    return samples, reports


def estimate_local_flow(stream: EventStream, camera: CameraModel | None = None, tiling=None,
                        min_events_per_tile: int | None = None,
                        config: EstimatorConfig | None = None) -> list[MotionFieldSample]:
    """Motion-field samples from per-tile contrast maximisation.

    ``tiling`` is a tile size in pixels (int or (w, h)).
    """
    cfg = config or EstimatorConfig()
    overrides = {}
    if tiling is not None:
        overrides["tile_size"] = tiling
    if min_events_per_tile is not None:
        overrides["min_events_per_tile"] = min_events_per_tile
    if overrides:
        cfg = EstimatorConfig(**{**asdict(cfg), **overrides})
    samples, _ = local_flow(stream, camera, cfg)
    if len(samples) < 2:
        raise TooFewTilesError(f"only {len(samples)} tile(s) produced flow; rates unobservable")
    return samples


@dataclass(frozen=True)
class RateEstimate:
    rates: AngularRates
    covariance: np.ndarray  # 3x3, (rad/s)^2
    residual_rms: float  # px/s
    sample_count: int
    condition_number: float = float("nan")
    measurement_sigma: float = float("nan")
    tiles: tuple = field(default=(), compare=False)

    def to_record(self) -> dict:
        """JSON-ready summary in degrees per second."""
        d = math.degrees(1.0)
        return {
            "rates_deg_s": {n: math.degrees(v) for n, v in zip("pqr", self.rates)},
            "covariance_deg2_s2": (np.asarray(self.covariance) * d * d).tolist(),
            "residual_px_s": self.residual_rms,
            "sample_count": self.sample_count,
            "condition_number": self.condition_number,
            "measurement_sigma_px_s": self.measurement_sigma,
            "tiles": [asdict(tr) for tr in self.tiles],
        }


def solve_rates(samples: Sequence[MotionFieldSample], camera: CameraModel | float,
                measurement_sigma: float | None = None, weighted: bool = False) -> RateEstimate:
    """Least-squares (p, q, r) from motion-field samples.

    The covariance is the sandwich A R_yy A^T with A the LS solution map and
    R_yy = sigma^2 I. Without ``measurement_sigma`` sigma is estimated from
    the residuals.
    """
    f = camera.focal_length if isinstance(camera, CameraModel) else float(camera)
    arr = np.array([tuple(s) for s in samples], dtype=float).reshape(-1, 5)
    n = arr.shape[0]
    if n == 0:
        raise RankDeficientError("no samples", float("inf"))
    H = motion_matrices(arr[:, 0], arr[:, 1], f).reshape(2 * n, 3)
    yv = arr[:, 2:4].reshape(2 * n)
    sv = np.linalg.svd(H, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv.size == 3 and sv[-1] > 0 else float("inf")
    if sv.size < 3 or not cond < 1e10:
        raise RankDeficientError(f"motion-field system is rank deficient (cond={cond:.3g})", cond)
    if weighted:
        w = np.repeat(np.clip(arr[:, 4], 0.0, None), 2)
    else:
        w = np.ones(2 * n)
    Hw = H * w[:, None]
    A = np.linalg.solve(H.T @ Hw, Hw.T)  # 3 x 2n
    x = A @ yv
    resid = yv - H @ x
    rss = float(resid @ resid)
    if measurement_sigma is None:
        dof = 2 * n - 3
        sigma = math.sqrt(rss / dof) if dof > 0 else 0.0
    else:
        sigma = float(measurement_sigma)
    cov = sigma**2 * (A @ A.T)
    cov = 0.5 * (cov + cov.T)
    return RateEstimate(AngularRates(*map(float, x)), cov, math.sqrt(rss / (2 * n)), n, cond, sigma)


def reject_outliers(samples: Sequence[MotionFieldSample], camera: CameraModel | float,
                    k: float = 3.0, floor: float = 1.0, weighted: bool = False,
                    min_samples: int = 3) -> np.ndarray:
    """Indices of the samples kept after iteratively dropping those whose
    flow residual exceeds ``k`` robust sigmas (1.4826 * median residual,
    never below ``floor`` px/s)."""
    f = camera.focal_length if isinstance(camera, CameraModel) else float(camera)
    arr = np.array([tuple(s) for s in samples], dtype=float).reshape(-1, 5)
    idx = np.arange(arr.shape[0])
    while idx.size > min_samples:
        est = solve_rates([samples[i] for i in idx], f, weighted=weighted)
        sub = arr[idx]
        pred = motion_matrices(sub[:, 0], sub[:, 1], f) @ np.asarray(est.rates)
        res = np.hypot(sub[:, 2] - pred[:, 0], sub[:, 3] - pred[:, 1])
        keep = res <= max(k * 1.4826 * float(np.median(res)), floor)
        if keep.all() or keep.sum() < min_samples:
            break
        idx = idx[keep]
    return idx


def estimate_rates(stream: EventStream, camera: CameraModel | None = None,
                   config: EstimatorConfig | None = None) -> RateEstimate:
    """Full single-camera pipeline: local flow, outlier screening, least squares."""
    cfg = config or EstimatorConfig()
    camera = camera or stream.camera
    samples, reports = local_flow(stream, camera, cfg)
    if len(samples) < 2:
        raise TooFewTilesError(f"only {len(samples)} tile(s) produced flow; rates unobservable")
    if cfg.outlier_k is not None:
        kept = reject_outliers(samples, camera, cfg.outlier_k, cfg.outlier_floor, cfg.weighted)
        ok_reports = [r for r in reports if r.status == "ok"]  # one per sample, same order
        for i in sorted(set(range(len(samples))) - set(kept.tolist())):
            ok_reports[i].status = "outlier"
        samples = [samples[i] for i in kept]
    est = solve_rates(samples, camera, cfg.measurement_sigma, cfg.weighted)
    return RateEstimate(est.rates, est.covariance, est.residual_rms, est.sample_count,
                        est.condition_number, est.measurement_sigma, tuple(reports))
