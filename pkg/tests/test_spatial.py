"""Split-step spatial engine: conservation laws, sampling guard, imaging."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from wignermc.bell import PAIR_PORTS, optimal_angles, wick_oracle
from wignermc.config import demo_spatial_settings
from wignermc.errors import ConfigError, EstimationError, SamplingCheckError
from wignermc.modes import AnalyzerSettings, gain_to_squeeze
from wignermc.phasespace import stream_generator
from wignermc.spatial import (CrystalParams, FieldGrid, PixelPairSelection,
                              box_smooth, check_sampling,
                              combine_spatial_sums, diffraction_step,
                              extract_pixel_pair, far_field, flip_map,
                              frequency_pitch, frequency_to_pixel, gain_step,
                              grid_normals_per_trajectory, init_vacuum_grid,
                              pair_dephasing_radius_sq, partner_pixel,
                              pixel_to_frequency, propagate, ring_geometry,
                              scan_intersection_pixels,
                              spatial_trajectory_block, validate_pixel_pair)
from wignermc.stats import MomentAccumulator

DEMO = demo_spatial_settings()
DEMO_PARAMS = DEMO.crystal_params(0.05)


def _vacuum(nx=32, ny=32, seed=0, dx=1.0):
    return init_vacuum_grid(nx, ny, stream_generator(seed, 0), dx=dx)


def _total_intensity(grid):
    return float((abs(grid.a_h) ** 2 + abs(grid.a_v) ** 2).sum())


# ----------------------------------------------------------------------
# grids, indexing, transforms
# ----------------------------------------------------------------------

def test_grid_validation():
    with pytest.raises(ConfigError):
        FieldGrid(nx=12, ny=16, dx=1.0, a_h=np.zeros((12, 16), complex),
                  a_v=np.zeros((12, 16), complex))
    with pytest.raises(ConfigError):
        FieldGrid(nx=16, ny=16, dx=-1.0, a_h=np.zeros((16, 16), complex),
                  a_v=np.zeros((16, 16), complex))
    with pytest.raises(ConfigError):
        FieldGrid(nx=16, ny=16, dx=1.0, a_h=np.zeros((8, 16), complex),
                  a_v=np.zeros((8, 16), complex))


def test_vacuum_grid_moments_and_determinism():
    grid = _vacuum(seed=11)
    again = _vacuum(seed=11)
    assert_array_equal(grid.a_h, again.a_h)
    assert_array_equal(grid.a_v, again.a_v)
    n = grid.a_h.size
    for a in (grid.a_h, grid.a_v):
        assert_allclose((abs(a) ** 2).mean(), 0.5, atol=5 * 0.5 / math.sqrt(n))
    assert grid_normals_per_trajectory(32, 32) == 4 * 32 * 32 + 16


def test_pixel_frequency_round_trip():
    nx, dx = 128, 1.0
    dq = frequency_pitch(nx, dx)
    assert_allclose(dq, 2 * math.pi / 128)
    for ix in (1, 17, 64, 72, 127):
        q = pixel_to_frequency(nx, dx, ix)
        assert frequency_to_pixel(nx, dx, q) == ix
    assert pixel_to_frequency(nx, dx, nx // 2) == 0.0


def test_partner_pixel_and_flip_map_agree():
    nx, ny = 16, 8
    arr = np.arange(nx * ny, dtype=float).reshape(nx, ny)
    flipped = flip_map(arr)
    for pix in ((1, 1), (3, 5), (15, 7), (8, 4)):
        partner = partner_pixel(nx, ny, pix)
        assert arr[partner] == flipped[pix]
        assert partner_pixel(nx, ny, partner) == pix
    assert_array_equal(flip_map(flipped), arr)


def test_far_field_is_unitary():
    grid = _vacuum(seed=3)
    ff = far_field(grid)
    assert_allclose(_total_intensity(ff), _total_intensity(grid), rtol=1e-12)
    assert_allclose(ff.dx, 2 * math.pi / 32)


def test_far_field_of_centered_impulse_is_flat():
    nx = ny = 16
    a = np.zeros((nx, ny), complex)
    a[nx // 2, ny // 2] = 1.0
    grid = FieldGrid(nx=nx, ny=ny, dx=1.0, a_h=a, a_v=np.zeros_like(a))
    ff = far_field(grid)
    assert_allclose(ff.a_h, 1.0 / math.sqrt(nx * ny), rtol=1e-12)


# ----------------------------------------------------------------------
# propagation steps
# ----------------------------------------------------------------------

def test_diffraction_step_conserves_intensity():
    params = CrystalParams(length=1.0, nsteps=4, diffraction_coeff=0.3,
                           mismatch_coeff=1.7, ring_radius=0.4,
                           ring_offset=0.2)
    grid = _vacuum(seed=5)
    before = _total_intensity(grid)
    stepped = diffraction_step(grid, params, 0.25)
    assert_allclose(_total_intensity(stepped), before, rtol=1e-12)
    # per-polarization intensity is conserved too (pure spectral phase)
    assert_allclose((abs(stepped.a_h) ** 2).sum(), (abs(grid.a_h) ** 2).sum(),
                    rtol=1e-12)


def test_gain_step_is_additive_in_length():
    params = CrystalParams(length=1.0, gain_per_length=0.3, nsteps=2)
    grid = _vacuum(seed=6)
    once = gain_step(grid, params, 0.5)
    twice = gain_step(gain_step(grid, params, 0.25), params, 0.25)
    assert_allclose(once.a_h, twice.a_h, rtol=1e-13)
    assert_allclose(once.a_v, twice.a_v, rtol=1e-13)


def test_step_size_must_be_positive():
    params = CrystalParams(length=1.0, nsteps=2)
    grid = _vacuum(seed=6)
    for bad in (0.0, -0.1):
        with pytest.raises(ConfigError):
            gain_step(grid, params, bad)
        with pytest.raises(ConfigError):
            diffraction_step(grid, params, bad)


def test_gain_step_amplifies_conjugate_pairs():
    # uniform pump: H and V amplitudes mix as a two-mode squeezer per
    # pixel, so the map is exactly cosh/sinh with argument g dz
    params = CrystalParams(length=1.0, gain_per_length=0.4, nsteps=2)
    grid = _vacuum(nx=8, ny=8, seed=7)
    out = gain_step(grid, params, 0.5)
    c, s = math.cosh(0.2), math.sinh(0.2)
    assert_allclose(out.a_h, c * grid.a_h + s * np.conj(grid.a_v), rtol=1e-14)
    assert_allclose(out.a_v, c * grid.a_v + s * np.conj(grid.a_h), rtol=1e-14)


def test_propagate_parseval_and_pump_off_vacuum():
    # with the pump off the propagator is a pure spectral phase: total
    # intensity is conserved to near machine precision and each far-field
    # pixel keeps its vacuum statistics
    params = CrystalParams(length=1.0, nsteps=16, gain_per_length=0.0,
                           diffraction_coeff=0.2, mismatch_coeff=3.0,
                           ring_radius=0.5, ring_offset=0.3)
    grid = _vacuum(nx=64, ny=64, seed=8)
    out = propagate(grid, params)
    assert_allclose(_total_intensity(out), _total_intensity(grid),
                    rtol=1e-12)
    # vacuum mean intensity per far-field pixel stays 1/2
    ff = far_field(out)
    mean_i = 0.5 * (abs(ff.a_h) ** 2 + abs(ff.a_v) ** 2).mean()
    assert_allclose(mean_i, 0.5, atol=5 * 0.5 / 64)


def test_propagation_is_linear_in_the_field():
    params = DEMO_PARAMS
    g1 = _vacuum(nx=128, ny=128, seed=21)
    g2 = _vacuum(nx=128, ny=128, seed=22)
    both = FieldGrid(nx=128, ny=128, dx=1.0, a_h=g1.a_h + g2.a_h,
                     a_v=g1.a_v + g2.a_v)
    out1, out2, out_both = (propagate(g, params) for g in (g1, g2, both))
    assert_allclose(out_both.a_h, out1.a_h + out2.a_h, atol=1e-10)
    assert_allclose(out_both.a_v, out1.a_v + out2.a_v, atol=1e-10)


def test_split_step_converges_with_step_doubling():
    # the demonstration step count is converged: doubling nsteps moves
    # the propagated field by well under one percent in relative L2 norm
    grid = _vacuum(nx=128, ny=128, seed=30)
    coarse = propagate(grid, DEMO_PARAMS)
    fine = propagate(grid, CrystalParams(
        length=DEMO_PARAMS.length, nsteps=2 * DEMO_PARAMS.nsteps,
        gain_per_length=DEMO_PARAMS.gain_per_length,
        pump_waist=DEMO_PARAMS.pump_waist,
        diffraction_coeff=DEMO_PARAMS.diffraction_coeff,
        mismatch_coeff=DEMO_PARAMS.mismatch_coeff,
        ring_radius=DEMO_PARAMS.ring_radius,
        ring_offset=DEMO_PARAMS.ring_offset))
    num = np.sqrt((abs(coarse.a_h - fine.a_h) ** 2
                   + abs(coarse.a_v - fine.a_v) ** 2).sum())
    den = np.sqrt((abs(fine.a_h) ** 2 + abs(fine.a_v) ** 2).sum())
    assert num / den < 0.01


# ----------------------------------------------------------------------
# sampling guard
# ----------------------------------------------------------------------

def test_demo_configuration_passes_sampling():
    report = check_sampling(DEMO_PARAMS, DEMO.nx, DEMO.ny, DEMO.dx)
    assert report.passed
    assert report.margin > 0.1
    assert report.q_active_max < report.q_limit


def test_same_window_coarser_grid_fails_sampling():
    # 16x16 pixels over the same physical window (dx = 8): half-Nyquist
    # drops below the amplified band and the check must fail
    report = check_sampling(DEMO_PARAMS, 16, 16, 8.0)
    assert not report.passed
    assert "too coarse" in report.message
    grid = init_vacuum_grid(16, 16, stream_generator(1, 0), dx=8.0)
    with pytest.raises(SamplingCheckError) as err:
        propagate(grid, DEMO_PARAMS)
    assert err.value.report is not None
    assert not err.value.report.passed


def test_unconfined_phase_matching_fails_sampling():
    # equal mismatch and diffraction coefficients give a q-independent
    # dephasing: gain extends to arbitrarily large frequencies and no
    # grid can contain it
    params = CrystalParams(length=1.0, nsteps=8, gain_per_length=0.1,
                           diffraction_coeff=0.5, mismatch_coeff=0.5,
                           ring_radius=0.0)
    report = check_sampling(params, 4096, 4096, 0.01)
    assert not report.passed
    assert math.isinf(report.q_active_max)
    assert math.isnan(pair_dephasing_radius_sq(params))


def test_zero_gain_passes_sampling_trivially():
    params = CrystalParams(length=1.0, nsteps=8, gain_per_length=0.0,
                           diffraction_coeff=0.5, mismatch_coeff=0.5)
    assert check_sampling(params, 8, 8, 100.0).passed


def test_sampling_threshold_monotonicity():
    # a looser threshold shrinks the active band
    loose = check_sampling(DEMO_PARAMS, 128, 128, 1.0, threshold=1e-1)
    tight = check_sampling(DEMO_PARAMS, 128, 128, 1.0, threshold=1e-5)
    assert loose.q_active_max < tight.q_active_max


# ----------------------------------------------------------------------
# ring geometry
# ----------------------------------------------------------------------

def test_demo_ring_geometry_intersections_on_pixels():
    geo = ring_geometry(DEMO_PARAMS)
    assert geo.valid
    dq = frequency_pitch(128, 1.0)
    assert_allclose(geo.h_center, (0.0, -2.5 * dq), atol=1e-12)
    assert_allclose(geo.v_center, (0.0, +2.5 * dq), atol=1e-12)
    (qx, qy), (qx2, _) = geo.intersections
    assert_allclose(qx, 8 * dq, rtol=1e-12)
    assert qy == 0.0 and qx2 == -qx
    assert frequency_to_pixel(128, 1.0, qx) == 72
    assert frequency_to_pixel(128, 1.0, -qx) == 56


def test_ring_geometry_without_rings():
    no_rings = CrystalParams(length=1.0, nsteps=2, diffraction_coeff=0.1,
                             mismatch_coeff=2.0, ring_radius=0.0)
    geo = ring_geometry(no_rings)
    assert not geo.valid
    assert geo.intersections == ()
    # offset too large for the radius: rings exist but never cross
    apart = CrystalParams(length=1.0, nsteps=2, diffraction_coeff=0.1,
                          mismatch_coeff=2.0, ring_radius=0.7,
                          ring_offset=1.2)
    geo2 = ring_geometry(apart)
    assert geo2.valid
    assert geo2.radius < apart.ring_offset / 2
    assert geo2.intersections == ()


# ----------------------------------------------------------------------
# pixel selection and scan
# ----------------------------------------------------------------------

def test_validate_pixel_pair_errors():
    good = PixelPairSelection((72, 64), (56, 64))
    assert validate_pixel_pair(128, 128, good) is good
    with pytest.raises(ConfigError, match="point-symmetric"):
        validate_pixel_pair(128, 128, PixelPairSelection((72, 64), (57, 64)))
    with pytest.raises(ConfigError, match="interior"):
        validate_pixel_pair(128, 128, PixelPairSelection((0, 64), (0, 64)))
    with pytest.raises(ConfigError, match="mirror image"):
        validate_pixel_pair(128, 128, PixelPairSelection((64, 64), (64, 64)))


def test_extract_pixel_pair_reads_mirror_modes():
    rng = np.random.default_rng(14)
    a_h = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    a_v = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    ff = FieldGrid(nx=16, ny=16, dx=1.0, a_h=a_h, a_v=a_v)
    sel = PixelPairSelection((11, 8), (5, 8))
    state = extract_pixel_pair(ff, sel)
    assert state.a1h == a_h[11, 8] and state.a1v == a_v[11, 8]
    assert state.a2h == a_h[5, 8] and state.a2v == a_v[5, 8]


def test_box_smooth_properties():
    rng = np.random.default_rng(15)
    arr = rng.standard_normal((12, 12))
    sm = box_smooth(arr, 1)
    assert_allclose(sm.mean(), arr.mean(), rtol=1e-12)
    assert_array_equal(box_smooth(arr, 0), arr)
    const = box_smooth(np.full((6, 6), 3.0), 2)
    assert_allclose(const, 3.0, rtol=1e-12)
    with pytest.raises(ConfigError):
        box_smooth(arr, -1)


def _synthetic_ring_maps(nx=64, peak=(40, 32)):
    """Two offset disks whose overlap contains ``peak`` and its mirror."""
    ix, iy = np.meshgrid(np.arange(nx), np.arange(nx), indexing="ij")
    c = nx // 2
    mean_h = np.exp(-(((ix - c) ** 2 + (iy - c + 3) ** 2) - 8.0 ** 2) ** 2
                    / 800.0) * 0.02
    mean_v = np.exp(-(((ix - c) ** 2 + (iy - c - 3) ** 2) - 8.0 ** 2) ** 2
                    / 800.0) * 0.02
    cov = np.full((nx, nx), 1e-6)
    for p in (peak, partner_pixel(nx, nx, peak)):
        cov += 4e-4 * np.exp(-((ix - p[0]) ** 2 + (iy - p[1]) ** 2) / 4.0)
    return mean_h, mean_v, cov


def test_scan_finds_intersection_pixels():
    mean_h, mean_v, cov = _synthetic_ring_maps()
    found = scan_intersection_pixels(mean_h, mean_v, cov, smooth_radius=1)
    assert found.first in ((40, 32), (24, 32))
    assert found.second == partner_pixel(64, 64, found.first)


def test_scan_ignores_edge_and_center_pixels():
    mean_h, mean_v, cov = _synthetic_ring_maps()
    # a rogue covariance spike on the wrap column and at the center must
    # not win even though its value is larger
    cov[0, 32] = 1.0
    cov[32, 32] = 1.0
    mean_h[0, :] = mean_v[0, :] = mean_h.max()
    mean_h[32, 32] = mean_v[32, 32] = mean_h.max()
    found = scan_intersection_pixels(mean_h, mean_v, cov, smooth_radius=0)
    assert found.first[0] != 0 and found.first != (32, 32)
    assert found.first in ((40, 32), (24, 32))


def test_scan_raises_without_gain_or_overlap():
    flat = np.zeros((16, 16))
    with pytest.raises(EstimationError, match="pump"):
        scan_intersection_pixels(flat, flat, flat)
    mean_h = np.zeros((16, 16)); mean_h[4, 4] = 1.0
    mean_v = np.zeros((16, 16)); mean_v[11, 11] = 1.0
    with pytest.raises(EstimationError, match="no mirror-symmetric"):
        scan_intersection_pixels(mean_h, mean_v, np.zeros((16, 16)),
                                 smooth_radius=0)


# ----------------------------------------------------------------------
# trajectory blocks and the cross-engine audit
# ----------------------------------------------------------------------

PLANE_WAVE = CrystalParams(length=1.0, nsteps=8,
                           gain_per_length=gain_to_squeeze(0.05))


def test_spatial_block_deterministic_and_splittable():
    sums = spatial_trajectory_block(PLANE_WAVE, 16, 16, 1.0, 500, 0, 12,
                                    enforce_sampling=False)
    again = spatial_trajectory_block(PLANE_WAVE, 16, 16, 1.0, 500, 0, 12,
                                     enforce_sampling=False)
    assert_array_equal(sums.intensity_h, again.intensity_h)
    assert_array_equal(sums.pair_product, again.pair_product)
    head = spatial_trajectory_block(PLANE_WAVE, 16, 16, 1.0, 500, 0, 5,
                                    enforce_sampling=False)
    tail = spatial_trajectory_block(PLANE_WAVE, 16, 16, 1.0, 500, 5, 7,
                                    enforce_sampling=False)
    joined = combine_spatial_sums([head, tail])
    assert joined.count == 12
    assert_allclose(joined.intensity_h, sums.intensity_h, rtol=1e-12)
    assert_allclose(joined.intensity_v, sums.intensity_v, rtol=1e-12)


def test_spatial_block_needs_angles_with_selection():
    sel = PixelPairSelection((9, 4), partner_pixel(16, 16, (9, 4)))
    with pytest.raises(ConfigError, match="angles"):
        spatial_trajectory_block(PLANE_WAVE, 16, 16, 1.0, 500, 0, 4,
                                 selection=sel, enforce_sampling=False)


def test_combine_spatial_sums_guards():
    with pytest.raises(EstimationError):
        combine_spatial_sums([])
    a = spatial_trajectory_block(PLANE_WAVE, 16, 16, 1.0, 500, 0, 3,
                                 enforce_sampling=False)
    sel = PixelPairSelection((9, 4), partner_pixel(16, 16, (9, 4)))
    b = spatial_trajectory_block(PLANE_WAVE, 16, 16, 1.0, 500, 3, 3,
                                 angles=optimal_angles(), selection=sel,
                                 enforce_sampling=False)
    with pytest.raises(ValueError, match="port rows"):
        a.add(b)


def test_cross_engine_moments_match_oracle():
    # plane-wave pump, no diffraction, no phase mismatch: every far-field
    # pixel pair (q, -q) realizes the same four-mode squeezed state the
    # discrete engine samples, so its port statistics must match the
    # exact moment oracle within Monte Carlo error
    gain, n = 0.05, 10_000
    angles = optimal_angles()
    sel = PixelPairSelection((9, 4), partner_pixel(16, 16, (9, 4)))
    sums = spatial_trajectory_block(PLANE_WAVE, 16, 16, 1.0, 2601, 0, n,
                                    angles=angles, eta=1.0, selection=sel,
                                    enforce_sampling=False)
    acc = MomentAccumulator()
    acc.update(sums.ports, batch_index=0)
    totals = acc.totals()
    oracle = wick_oracle(gain, 1.0, angles)

    worst = 0.0
    for k, label in enumerate(("p1_plus", "p1_minus", "p1p_plus", "p1p_minus",
                               "p2_plus", "p2_minus", "p2p_plus", "p2p_minus")):
        pull = ((totals.mean(label) - oracle.port_means[k])
                / totals.mean_stderr(label))
        worst = max(worst, abs(pull))
    for label in PAIR_PORTS:
        for kind, expected in (("num", oracle.numerators[label]),
                               ("den", oracle.denominators[label]),
                               ("coin", oracle.coincidences[label])):
            col = f"{kind}_{label}"
            pull = (totals.mean(col) - expected) / totals.mean_stderr(col)
            worst = max(worst, abs(pull))
    assert worst < 5.0, f"worst cross-engine pull {worst:.2f} sigma"

    # the image-side moments see the same physics: per-pixel mean photon
    # number G and partner covariance 2 (G + G^2), averaged over pixels
    mean_map = sums.mean_h()
    self_paired = np.zeros((16, 16), bool)
    for pix in ((0, 0), (0, 8), (8, 0), (8, 8)):
        self_paired[pix] = True
    cov_map = sums.covariance_map()[~self_paired]
    assert_allclose(mean_map.mean(), gain, atol=5 * 0.55 / math.sqrt(n * 256))
    cov_expected = 2 * (gain + gain**2)
    assert_allclose(cov_map.mean(), cov_expected,
                    atol=5 * 0.6 / math.sqrt(n * 252))


def test_eta_scaling_of_spatial_ports():
    # detector loss acts after propagation: port means scale by eta
    sel = PixelPairSelection((9, 4), partner_pixel(16, 16, (9, 4)))
    kwargs = dict(angles=optimal_angles(), selection=sel,
                  enforce_sampling=False)
    full = spatial_trajectory_block(PLANE_WAVE, 16, 16, 1.0, 321, 0, 4000,
                                    eta=1.0, **kwargs)
    half = spatial_trajectory_block(PLANE_WAVE, 16, 16, 1.0, 321, 0, 4000,
                                    eta=0.5, **kwargs)
    assert_allclose(half.ports.mean(axis=0), 0.5 * full.ports.mean(axis=0),
                    atol=5 * 0.55 / math.sqrt(4000))
    # the image maps never see the detectors
    assert_array_equal(half.intensity_h, full.intensity_h)
