import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evrate.catalog import StarCatalog, StarRecord
from evrate.estimator import (
    EmptyStreamError,
    EstimatorConfig,
    RankDeficientError,
    TooFewTilesError,
    accumulate_image,
    contrast_score,
    estimate_global_flow,
    estimate_local_flow,
    estimate_rates,
    local_flow,
    reject_outliers,
    solve_rates,
    warp_events,
)
from evrate.event_sim import EventStream, simulate_case, simulate_translating_stars
from evrate.geometry import CameraModel, boresight_attitude
from evrate.kinematics import MotionFieldSample, motion_field, motion_matrices

F = 1464.0
rate = st.floats(-0.5, 0.5)


def _grid_samples(w, f=F, n=4, noise=None):
    xs = np.linspace(-240, 240, n)
    ys = np.linspace(-180, 180, n)
    out = []
    for x in xs:
        for y in ys:
            u, v = motion_field(float(x), float(y), f, w)
            if noise is not None:
                u, v = u + noise.normal(), v + noise.normal()
            out.append(MotionFieldSample(float(x), float(y), float(u), float(v)))
    return out


# -- warp, image, score -------------------------------------------------------


def test_warp_moves_back_along_velocity():
    ev = ([10.0, 20.0], [5.0, 5.0], [0.0, 0.1], [1.0, 1.0])
    xw, yw, k = warp_events(ev, (100.0, -50.0))
    np.testing.assert_allclose(xw, [10.0, 10.0])
    np.testing.assert_allclose(yw, [5.0, 10.0])


def test_accumulate_and_score():
    cam = CameraModel(focal_length=400.0, width=32, height=32)
    img = accumulate_image(([1.0, 1.2, 5.0, 40.0], [1.0, 0.9, 5.0, 1.0], [1.0, 1.0, -1.0, 1.0]), cam)
    assert img.pixels[1, 1] == 2.0 and img.pixels[5, 5] == -1.0
    assert img.pixels.sum() == 1.0  # off-sensor event dropped
    assert contrast_score(img) == 5.0
    assert contrast_score(img, "variance") == pytest.approx(np.var(img.pixels))
    with pytest.raises(ValueError):
        contrast_score(img, "entropy")


def test_focused_image_beats_unfocused(camera):
    s = simulate_translating_stars([(200.0, 200.0), (400.0, 300.0)], [3.0, 4.0], (120.0, -60.0), camera)
    sharp = contrast_score(accumulate_image(warp_events(s, (120.0, -60.0)), camera))
    blurred = contrast_score(accumulate_image(warp_events(s, (0.0, 0.0)), camera))
    assert sharp > 3 * blurred


# -- global flow --------------------------------------------------------------


@pytest.mark.parametrize("velocity", [(150.0, -80.0), (-300.0, 20.0), (0.0, 250.0)])
def test_global_flow_recovers_translation(camera, velocity):
    stars = [(150.0, 120.0), (420.0, 330.0), (300.0, 200.0), (500.0, 100.0)]
    s = simulate_translating_stars(stars, [3.0, 3.5, 4.0, 4.5], velocity, camera)
    res = estimate_global_flow(s)
    assert np.hypot(res.velocity[0] - velocity[0], res.velocity[1] - velocity[1]) < max(0.5, 0.01 * np.hypot(*velocity))
    assert res.converged


def test_newton_trace_never_increases(camera):
    s = simulate_translating_stars([(300.0, 240.0)], [3.0], (77.0, 41.0), camera)
    res = estimate_global_flow(s)
    assert all(b <= a + 1e-9 for a, b in zip(res.trace, res.trace[1:]))


def test_global_flow_empty(camera):
    with pytest.raises(EmptyStreamError):
        estimate_global_flow(EventStream([], [], [], [], (0.0, 0.1), camera))


# -- local flow ---------------------------------------------------------------


def test_sparse_tile_is_skipped(camera):
    ev = EventStream([0, 10, 20], [5, 6, 7], [5, 5, 5], [1, 1, 1], (0.0, 0.1), camera)
    samples, reports = local_flow(ev)
    assert samples == []
    assert reports[0].status == "too-few-events" and reports[0].n_events == 3
    assert all(r.status == "too-few-events" for r in reports)


def test_pure_roll_tiles_have_opposite_v(camera):
    # stars 200 px either side of the centre along the sensor x axis
    ang = math.atan(200 / camera.focal_length)
    cat = StarCatalog((StarRecord("l", ang, 0.0, 2.5), StarRecord("r", 2 * math.pi - ang, 0.0, 2.5)))
    R0 = boresight_attitude(0.0, 0.0, 0.0)
    s = simulate_case(cat, camera, R0, (0.0, 0.0, math.radians(20)))
    samples = estimate_local_flow(s)
    assert len(samples) == 2
    left, right = sorted(samples, key=lambda m: m.x)
    assert left.x < 0 < right.x
    assert left.v * right.v < 0
    for m in samples:
        u, v = motion_field(m.x, m.y, camera.focal_length, (0.0, 0.0, math.radians(20)))
        assert abs(m.v - v) < 0.05 * abs(v)


def test_one_star_per_tile_passes_through(camera):
    stars = {(80.0, 60.0): (120.0, -40.0), (400.0, 70.0): (-60.0, 90.0), (250.0, 300.0): (200.0, 10.0),
             (560.0, 420.0): (-150.0, -150.0)}
    parts = [simulate_translating_stars([p], [3.0], v, camera) for p, v in stars.items()]
    cols = [np.concatenate([getattr(s, c) for s in parts]) for c in ("t_us", "x", "y", "k")]
    order = np.argsort(cols[0], kind="stable")
    merged = EventStream(*(c[order] for c in cols), (0.0, 0.1), camera)
    samples = estimate_local_flow(merged)
    assert len(samples) == len(stars)
    for (col, row), v in stars.items():
        x0, y0 = camera.from_pixel(col, row)
        # nearest sample lies on the star's track and carries its velocity
        m = min(samples, key=lambda m: math.hypot(m.x - x0, m.y - y0))
        assert math.hypot(m.x - x0, m.y - y0) < math.hypot(*v) * 0.1 + 2.0
        assert math.hypot(m.u - v[0], m.v - v[1]) < max(1.0, 0.02 * math.hypot(*v))


def test_wide_refinement_kernel(camera):
    s = simulate_translating_stars([(300.0, 240.0), (100.0, 100.0)], [3.0, 4.0], (90.0, -30.0), camera)
    res = estimate_global_flow(s, config=EstimatorConfig(kernel_sigma=4.0))
    assert math.hypot(res.velocity[0] - 90.0, res.velocity[1] + 30.0) < 3.0


def test_tiling_override(camera):
    s = simulate_translating_stars([(100.0, 100.0)], [3.0], (50.0, 0.0), camera)
    with pytest.raises(TooFewTilesError):
        estimate_local_flow(s, tiling=(160, 120))
    with pytest.raises(ValueError):
        estimate_local_flow(s, tiling=8)


# -- least squares ------------------------------------------------------------


@given(rate, rate, rate)
def test_solve_rates_exact(p, q, r):
    est = solve_rates(_grid_samples((p, q, r)), F)
    np.testing.assert_allclose(tuple(est.rates), (p, q, r), atol=1e-10)
    assert est.residual_rms < 1e-6


def test_solve_rates_single_sample_rank_deficient():
    with pytest.raises(RankDeficientError):
        solve_rates([MotionFieldSample(10.0, 10.0, 1.0, 1.0)], F)
    with pytest.raises(RankDeficientError):
        solve_rates([], F)


def test_two_samples_are_enough():
    w = (0.1, -0.2, 0.05)
    est = solve_rates(_grid_samples(w)[:2], F)
    np.testing.assert_allclose(tuple(est.rates), w, atol=1e-10)


def test_covariance_matches_monte_carlo():
    w = (0.05, 0.1, -0.2)
    rng = np.random.default_rng(0)
    draws = np.array([tuple(solve_rates(_grid_samples(w, noise=rng), F).rates) for _ in range(4000)])
    pred = solve_rates(_grid_samples(w), F, measurement_sigma=1.0).covariance
    d = np.sqrt(np.diag(pred))
    # sampling error of a covariance entry is about sqrt(C_ii C_jj / N)
    tol = 4 * np.outer(d, d) / math.sqrt(len(draws))
    assert np.all(np.abs(np.cov(draws.T) - pred) < tol)
    # the residual sigma of a noisy draw is close to the true 1 px/s
    est = solve_rates(_grid_samples(w, n=10, noise=rng), F)
    assert 0.8 < est.measurement_sigma < 1.2


def test_covariance_is_sandwich():
    samples = _grid_samples((0.0, 0.0, 0.0))
    arr = np.array([s[:2] for s in samples])
    H = motion_matrices(arr[:, 0], arr[:, 1], F).reshape(-1, 3)
    est = solve_rates(samples, F, measurement_sigma=2.0)
    ref = 4.0 * np.linalg.inv(H.T @ H)
    np.testing.assert_allclose(est.covariance, ref, rtol=0, atol=1e-10 * ref.max())


def test_roll_is_least_observable():
    cov = solve_rates(_grid_samples((0.0, 0.0, 0.0)), F, measurement_sigma=1.0).covariance
    assert cov[2, 2] > 10 * cov[0, 0] and cov[2, 2] > 10 * cov[1, 1]


def test_reject_outliers_drops_gross_sample():
    w = (0.1, 0.05, -0.1)
    samples = _grid_samples(w, noise=np.random.default_rng(2))
    samples[5] = samples[5]._replace(u=samples[5].u + 40.0)
    kept = reject_outliers(samples, F)
    assert 5 not in kept.tolist()
    assert len(kept) >= 14
    est = solve_rates([samples[i] for i in kept], F)
    np.testing.assert_allclose(tuple(est.rates), w, atol=3e-3)


def test_reject_outliers_keeps_clean_set():
    samples = _grid_samples((0.1, 0.05, -0.1))
    assert reject_outliers(samples, F).tolist() == list(range(16))


# -- full pipeline ------------------------------------------------------------


def test_estimate_rates_end_to_end(desk_catalog, camera):
    w = np.radians([6.0, -4.0, 10.0])
    s = simulate_case(desk_catalog, camera, boresight_attitude(1.1, 0.3, 0.4), w)
    est = estimate_rates(s)
    err = np.degrees(np.asarray(est.rates) - w)
    assert abs(err[0]) < 0.1 and abs(err[1]) < 0.1 and abs(err[2]) < 1.0
    rec = est.to_record()
    assert set(rec["rates_deg_s"]) == {"p", "q", "r"}
    assert rec["sample_count"] == est.sample_count >= 2
    assert len(rec["tiles"]) >= 16


def test_variance_score_mode(desk_catalog, camera):
    w = np.radians([5.0, 5.0, 0.0])
    s = simulate_case(desk_catalog, camera, boresight_attitude(1.1, 0.3, 0.4), w)
    est = estimate_rates(s, config=EstimatorConfig(score="variance"))
    assert np.all(np.abs(np.degrees(np.asarray(est.rates) - w)[:2]) < 0.2)


def test_empty_stream(camera):
    with pytest.raises(EmptyStreamError):
        estimate_rates(EventStream([], [], [], [], (0.0, 0.1), camera))
