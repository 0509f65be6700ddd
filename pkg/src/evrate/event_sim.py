"""Synthetic star-field frames and the log-intensity event model.

Frames are rendered at a high internal rate and differenced per pixel; an
event is emitted for every whole multiple of the contrast threshold that
the log intensity has moved since the pixel last fired. Event timestamps
are the frame times.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import erf

from .catalog import StarCatalog, fov_indices
from .geometry import CameraModel, check_rotation
from .kinematics import motion_field, propagate_attitude

MAX_WINDOW = 0.1
BINARY_MAGIC = b"EVS1"
BINARY_DTYPE = np.dtype([("t_us", "<u8"), ("x", "<u2"), ("y", "<u2"), ("k", "i1")])


class EventSimError(ValueError):
    pass


class NonMonotoneFramesError(EventSimError):
    pass


class WindowTooLongError(EventSimError):
    pass


class RateTooLowError(EventSimError):
    pass


class Event(NamedTuple):
    t: int  # microseconds from window start
    x: int
    y: int
    k: int


@dataclass
class EventStream:
    """Time-sorted events of one acquisition window.

    ``x``/``y`` are pixel column/row indices, ``t_us`` microseconds since
    ``window[0]`` (seconds), ``k`` the polarity.
    """

    t_us: np.ndarray
    x: np.ndarray
    y: np.ndarray
    k: np.ndarray
    window: tuple[float, float]
    camera: CameraModel
    max_window: float = MAX_WINDOW

    def __post_init__(self):
        self.t_us = np.asarray(self.t_us, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.uint16)
        self.y = np.asarray(self.y, dtype=np.uint16)
        self.k = np.asarray(self.k, dtype=np.int8)
        n = self.t_us.size
        if not (self.x.size == self.y.size == self.k.size == n):
            raise EventSimError("event columns differ in length")
        t0, t1 = (float(v) for v in self.window)
        self.window = (t0, t1)
        if t1 < t0 or t1 - t0 > self.max_window + 1e-9:
            raise WindowTooLongError(f"window {t1 - t0:.6g} s exceeds {self.max_window} s")
        if n:
            if np.any(np.diff(self.t_us) < 0):
                raise EventSimError("event timestamps must be non-decreasing")
            if self.t_us[0] < 0 or self.t_us[-1] > round((t1 - t0) * 1e6):
                raise EventSimError("event outside acquisition window")
            if self.x.max() >= self.camera.width or self.y.max() >= self.camera.height:
                raise EventSimError("event outside the sensor")
            if not np.all(np.abs(self.k) == 1):
                raise EventSimError("polarity must be +1 or -1")

    def __len__(self) -> int:
        return int(self.t_us.size)

    def __iter__(self):
        for row in zip(self.t_us.tolist(), self.x.tolist(), self.y.tolist(), self.k.tolist()):
            yield Event(*row)

    @property
    def t(self) -> np.ndarray:
        """Timestamps in seconds from window start."""
        return self.t_us * 1e-6

    @property
    def duration(self) -> float:
        return self.window[1] - self.window[0]

    def select(self, mask) -> "EventStream":
        return EventStream(
            self.t_us[mask], self.x[mask], self.y[mask], self.k[mask],
            self.window, self.camera, self.max_window,
        )

    # -- serialisation -------------------------------------------------

    def to_csv(self, path) -> None:
        data = np.column_stack([self.t_us, self.x, self.y, self.k]).astype(np.int64)
        np.savetxt(path, data, fmt="%d", delimiter=",", header="t_us,x,y,k", comments="")

    @classmethod
    def from_csv(cls, path, camera: CameraModel, window: tuple[float, float] | None = None, **kw) -> "EventStream":
        path = Path(path)
        with path.open() as fh:
            if fh.readline().strip().replace(" ", "") != "t_us,x,y,k":
                raise EventSimError(f"{path}: expected header t_us,x,y,k")
        data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
        if data.size == 0:
            data = np.zeros((0, 4), dtype=np.int64)
        return cls._from_columns(data[:, 0], data[:, 1], data[:, 2], data[:, 3], camera, window, **kw)

    def to_binary(self, path) -> None:
        rec = np.empty(len(self), dtype=BINARY_DTYPE)
        rec["t_us"], rec["x"], rec["y"], rec["k"] = self.t_us, self.x, self.y, self.k
        with open(path, "wb") as fh:
            fh.write(BINARY_MAGIC + struct.pack("<I", len(self)))
            fh.write(rec.tobytes())

    @classmethod
    def from_binary(cls, path, camera: CameraModel, window: tuple[float, float] | None = None, **kw) -> "EventStream":
        raw = Path(path).read_bytes()
        if raw[:4] != BINARY_MAGIC or len(raw) < 8:
            raise EventSimError(f"{path}: not an EVS1 event file")
        (count,) = struct.unpack("<I", raw[4:8])
        if len(raw) - 8 != count * BINARY_DTYPE.itemsize:
            raise EventSimError(f"{path}: truncated event file")
        rec = np.frombuffer(raw, dtype=BINARY_DTYPE, count=count, offset=8)
        return cls._from_columns(rec["t_us"], rec["x"], rec["y"], rec["k"], camera, window, **kw)

    @classmethod
    def _from_columns(cls, t_us, x, y, k, camera, window, **kw) -> "EventStream":
        t_us = np.asarray(t_us, dtype=np.int64)
        if window is None:
            window = (0.0, float(t_us.max()) * 1e-6 if t_us.size else 0.0)
        return cls(t_us, x, y, k, window, camera, **kw)


def read_stream(path, camera: CameraModel, **kw) -> EventStream:
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(4)
    if head == BINARY_MAGIC:
        return EventStream.from_binary(path, camera, **kw)
    return EventStream.from_csv(path, camera, **kw)


def write_stream(stream: EventStream, path) -> None:
    if str(path).endswith(".csv"):
        stream.to_csv(path)
    else:
        stream.to_binary(path)


@dataclass(frozen=True)
class RenderConfig:
    """Star rendering and sensor noise.

    Flux is in units of the per-pixel background; a star of magnitude m
    deposits ``background * 10**(-0.4 * (m - mag_ref))`` spread by a
    pixel-integrated Gaussian PSF truncated at ``psf_truncation`` sigmas.
    ``mag_ref=None`` puts it 2.5 mag below the camera limit, so a limit
    star peaks roughly five thresholds above the floor.
    """

    psf_sigma: float = 0.8
    psf_truncation: float = 3.0
    background: float = 1.0
    mag_ref: float | None = None
    noise_rate: float = 0.0  # noise events per pixel per second

    def __post_init__(self):
        if not self.background > 0:
            raise EventSimError("background floor must be positive (log guard)")
        if not self.psf_sigma > 0:
            raise EventSimError("PSF sigma must be positive")

    def reference_magnitude(self, camera: CameraModel) -> float:
        return camera.limit_magnitude + 2.5 if self.mag_ref is None else self.mag_ref

    def flux(self, magnitude, camera: CameraModel) -> np.ndarray:
        m = np.asarray(magnitude, dtype=float)
        return self.background * 10.0 ** (-0.4 * (m - self.reference_magnitude(camera)))

    @property
    def margin(self) -> float:
        """How far off-sensor (px) a star can still light a sensor pixel."""
        return self.psf_sigma * self.psf_truncation + 1.0


@dataclass
class IntensityFrame:
    pixels: np.ndarray  # (H, W) linear intensity
    timestamp: float

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if not np.all(np.isfinite(self.pixels)) or np.any(self.pixels < 0):
            raise EventSimError("intensities must be finite and non-negative")


@dataclass
class EventGeneratorState:
    """Per-pixel log intensity at the last trigger time, plus the time the
    state was seeded (the start of the event window)."""

    last_log_intensity: np.ndarray
    threshold: float
    timestamp: float = 0.0

    @classmethod
    def from_frame(cls, frame: IntensityFrame, threshold: float) -> "EventGeneratorState":
        return cls(np.log(frame.pixels), threshold, frame.timestamp)


def _psf_deposits(cols, rows, fluxes, camera: CameraModel, render: RenderConfig):
    """Flat pixel indices and intensities deposited by stars at continuous
    pixel positions ``cols``/``rows``. Ordered star by star."""
    cols = np.asarray(cols, dtype=float)
    rows = np.asarray(rows, dtype=float)
    fluxes = np.asarray(fluxes, dtype=float)
    ok = np.isfinite(cols) & np.isfinite(rows)
    cols, rows, fluxes = cols[ok], rows[ok], fluxes[ok]
    if cols.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    sig = render.psf_sigma
    radius = sig * render.psf_truncation
    half = int(math.ceil(radius)) + 1
    off = np.arange(-half, half + 1)
    s2 = sig * math.sqrt(2.0)

    def weights(c):
        pix = np.rint(c)[:, None] + off[None, :]
        d = pix - c[:, None]
        w = 0.5 * (erf((d + 0.5) / s2) - erf((d - 0.5) / s2))
        w[np.abs(d) > radius] = 0.0
        return pix.astype(np.int64), w

    px, wx = weights(cols)
    py, wy = weights(rows)
    vals = fluxes[:, None, None] * wy[:, :, None] * wx[:, None, :]
    PX = np.broadcast_to(px[:, None, :], vals.shape)
    PY = np.broadcast_to(py[:, :, None], vals.shape)
    keep = (vals > 0) & (PX >= 0) & (PX < camera.width) & (PY >= 0) & (PY < camera.height)
    return (PY[keep] * camera.width + PX[keep]), vals[keep]


def render_points(cols, rows, fluxes, camera: CameraModel, render: RenderConfig | None = None,
                  timestamp: float = 0.0) -> IntensityFrame:
    """Render point sources at continuous pixel-index positions."""
    render = render or RenderConfig()
    img = np.full(camera.width * camera.height, render.background)
    idx, vals = _psf_deposits(cols, rows, fluxes, camera, render)
    np.add.at(img, idx, vals)
    return IntensityFrame(img.reshape(camera.height, camera.width), timestamp)


def render_frame(catalog: StarCatalog, attitude_at_t, camera: CameraModel,
                 render: RenderConfig | None = None, timestamp: float = 0.0) -> IntensityFrame:
    render = render or RenderConfig()
    R = check_rotation(attitude_at_t, 1e-9)
    idx, v_cam = fov_indices(catalog, R, camera, margin=render.margin)
    f = camera.focal_length
    cols, rows = camera.to_pixel(f * v_cam[:, 0] / v_cam[:, 2], f * v_cam[:, 1] / v_cam[:, 2])
    return render_points(cols, rows, render.flux(catalog.magnitude[idx], camera), camera, render, timestamp)


def _threshold_step(log_now, last, e_t):
    """One frame of the threshold model on matching 1-D arrays.

    Returns (pixel positions, counts, polarities) for pixels that fire and
    advances ``last`` in place by whole thresholds.
    """
    d = log_now - last
    n = np.floor(np.abs(d) / e_t).astype(np.int64)
    fire = np.flatnonzero(n > 0)
    if fire.size == 0:
        return fire, fire, fire
    pol = np.where(d[fire] > 0, 1, -1).astype(np.int64)
    last[fire] += n[fire] * e_t * pol
    return fire, n[fire], pol


def _frame_step(times) -> float:
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        return 0.0
    dt = np.diff(times)
    if np.any(dt <= 0):
        raise NonMonotoneFramesError("frame timestamps must be strictly increasing")
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, abs(dt[0])) + 1e-12:
        raise NonMonotoneFramesError("frames must share a uniform time step")
    return float(dt[0])


def _assemble(chunks, window, camera, rng=None, noise_rate=0.0, max_window=MAX_WINDOW) -> EventStream:
    if chunks:
        t_us = np.concatenate([c[0] for c in chunks])
        flat = np.concatenate([c[1] for c in chunks])
        k = np.concatenate([c[2] for c in chunks])
    else:
        t_us = flat = k = np.zeros(0, dtype=np.int64)
    if noise_rate > 0:
        if rng is None:
            raise EventSimError("noise requires an rng")
        duration = window[1] - window[0]
        n = rng.poisson(noise_rate * camera.width * camera.height * duration)
        nt = rng.integers(0, int(round(duration * 1e6)) + 1, n)
        nf = rng.integers(0, camera.width * camera.height, n)
        nk = rng.choice(np.array([-1, 1]), n)
        t_us = np.concatenate([t_us, nt])
        flat = np.concatenate([flat, nf])
        k = np.concatenate([k, nk])
        order = np.argsort(t_us, kind="stable")
        t_us, flat, k = t_us[order], flat[order], k[order]
    return EventStream(t_us, flat % camera.width, flat // camera.width, k, window, camera, max_window)


def generate_events(frames: Sequence[IntensityFrame], state: EventGeneratorState | None = None,
                    camera: CameraModel | None = None, max_window: float = MAX_WINDOW) -> EventStream:
    """Run the threshold model over full frames.

    Without ``state`` the first frame seeds it and only later frames can
    fire. ``state`` is updated in place.
    """
    frames = list(frames)
    if not frames:
        raise EventSimError("no frames")
    if state is None:
        threshold = camera.event_threshold if camera is not None else None
        if threshold is None:
            raise EventSimError("need a camera or an initial state")
        state = EventGeneratorState.from_frame(frames[0], threshold)
        frames = frames[1:]
    times = [state.timestamp] + [fr.timestamp for fr in frames]
    _frame_step(times)
    H, W = state.last_log_intensity.shape
    if camera is None:
        camera = CameraModel(width=W, height=H, event_threshold=state.threshold)
    if (camera.height, camera.width) != (H, W):
        raise EventSimError("state shape does not match camera")
    last = state.last_log_intensity.reshape(-1)
    chunks = []
    for fr in frames:
        if fr.pixels.shape != (H, W):
            raise EventSimError("frame shape does not match camera")
        pos, n, pol = _threshold_step(np.log(fr.pixels).reshape(-1), last, state.threshold)
        if pos.size:
            t = int(round((fr.timestamp - state.timestamp) * 1e6))
            reps = np.repeat(np.arange(pos.size), n)
            chunks.append((np.full(reps.size, t, dtype=np.int64), pos[reps], pol[reps]))
    state.last_log_intensity = last.reshape(H, W)
    state.timestamp = times[-1]
    window = (times[0], times[-1])
    return _assemble(chunks, window, camera, max_window=max_window)


def _simulate_tracks(cols, rows, fluxes, times, camera: CameraModel, render: RenderConfig,
                     rng=None, max_window: float = MAX_WINDOW) -> EventStream:
    """Event stream for point sources following given pixel tracks.

    ``cols``/``rows`` are (n_frames, n_stars), NaN where a star is not
    imaged. Only pixels a star ever touches are tracked; everywhere else
    the intensity sits at the background and never fires.
    """
    times = np.asarray(times, dtype=float)
    _frame_step(times)
    margin = render.margin
    W, H = camera.width, camera.height
    inside = (
        np.isfinite(cols) & np.isfinite(rows)
        & (cols >= -margin) & (cols < W - 1 + margin)
        & (rows >= -margin) & (rows < H - 1 + margin)
    )
    both = inside[1:] & inside[:-1]
    if np.any(both):
        step = np.hypot(np.diff(cols, axis=0), np.diff(rows, axis=0))[both]
        if step.max() >= 1.0:
            raise RateTooLowError(
                f"stars move {step.max():.3f} px per internal frame; raise internal_rate"
            )
    deposits = []
    for j in range(times.size):
        sel = inside[j]
        deposits.append(_psf_deposits(cols[j, sel], rows[j, sel], fluxes[sel], camera, render))
    all_idx = np.concatenate([d[0] for d in deposits]) if deposits else np.zeros(0, np.int64)
    pixels = np.unique(all_idx)
    e_t = camera.event_threshold
    last = None
    chunks = []
    for j, (idx, vals) in enumerate(deposits):
        img = np.full(pixels.size, render.background)
        np.add.at(img, np.searchsorted(pixels, idx), vals)
        log_now = np.log(img)
        if j == 0:
            last = log_now
            continue
        pos, n, pol = _threshold_step(log_now, last, e_t)
        if pos.size:
            t = int(round((times[j] - times[0]) * 1e6))
            reps = np.repeat(np.arange(pos.size), n)
            chunks.append((np.full(reps.size, t, dtype=np.int64), pixels[pos][reps], pol[reps]))
    window = (float(times[0]), float(times[-1]))
    return _assemble(chunks, window, camera, rng, render.noise_rate, max_window)


def frame_times(window: float, internal_rate: float, max_window: float = MAX_WINDOW) -> np.ndarray:
    if window > max_window + 1e-12:
        raise WindowTooLongError(f"window {window} s exceeds {max_window} s")
    n = int(round(window * internal_rate))
    if n < 1:
        raise RateTooLowError("internal rate gives no frame inside the window")
    return np.arange(n + 1) / float(internal_rate)


def star_tracks(catalog: StarCatalog, camera: CameraModel, attitude0, rates, times,
                render: RenderConfig):
    """Pixel tracks of every catalogue star that can reach the sensor.

    Returns (catalogue indices, cols, rows) with cols/rows of shape
    (n_frames, n_candidates).
    """
    R0 = check_rotation(attitude0, 1e-9)
    w = np.asarray(rates, dtype=float)
    span = float(np.linalg.norm(w)) * float(times[-1] - times[0])
    reach = camera.half_diagonal_fov + span + render.margin / camera.focal_length + 1e-3
    bright = catalog.magnitude <= camera.limit_magnitude
    if len(catalog) == 0:
        return np.zeros(0, int), np.zeros((times.size, 0)), np.zeros((times.size, 0))
    z0 = catalog.vectors @ R0[2]
    cand = np.flatnonzero(bright & (z0 >= math.cos(min(reach, math.pi))))
    vecs = catalog.vectors[cand]
    f = camera.focal_length
    cols = np.full((times.size, cand.size), np.nan)
    rows = np.full((times.size, cand.size), np.nan)
    for j, t in enumerate(times):
        v = vecs @ propagate_attitude(R0, w, t).T
        front = v[:, 2] > 1e-6
        x = f * v[front, 0] / v[front, 2]
        y = f * v[front, 1] / v[front, 2]
        cols[j, front], rows[j, front] = camera.to_pixel(x, y)
    return cand, cols, rows


def simulate_case(catalog: StarCatalog, camera: CameraModel, attitude0, rates, window: float = 0.1,
                  internal_rate: float = 2000.0, render: RenderConfig | None = None,
                  rng: np.random.Generator | None = None, max_window: float = MAX_WINDOW) -> EventStream:
    """Events seen by ``camera`` spinning at constant ``rates`` from
    ``attitude0`` (inertial to camera) over ``window`` seconds."""
    render = render or RenderConfig()
    times = frame_times(window, internal_rate, max_window)
    cand, cols, rows = star_tracks(catalog, camera, attitude0, rates, times, render)
    fluxes = render.flux(catalog.magnitude[cand], camera)
    return _simulate_tracks(cols, rows, fluxes, times, camera, render, rng, max_window)


def simulate_translating_stars(positions, magnitudes, velocity, camera: CameraModel, window: float = 0.1,
                               internal_rate: float = 2000.0, render: RenderConfig | None = None,
                               rng: np.random.Generator | None = None) -> EventStream:
    """Stars at pixel-index ``positions`` (n, 2) drifting at a common image
    velocity (px/s). Useful for exercising the flow estimator in isolation."""
    render = render or RenderConfig()
    times = frame_times(window, internal_rate)
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    u, v = velocity
    cols = pos[None, :, 0] + u * times[:, None]
    rows = pos[None, :, 1] + v * times[:, None]
    fluxes = render.flux(np.broadcast_to(np.asarray(magnitudes, dtype=float), (pos.shape[0],)), camera)
    return _simulate_tracks(cols, rows, fluxes, times, camera, render, rng)


def star_track_velocity(camera: CameraModel, col: float, row: float, rates) -> tuple[float, float]:
    """Motion field at a pixel-index position."""
    x, y = camera.from_pixel(col, row)
    return motion_field(float(x), float(y), camera.focal_length, rates)
