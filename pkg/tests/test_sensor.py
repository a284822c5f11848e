import math

import numpy as np
import pytest

from tbsim.optics import ModeOverlap, UMIConfig
from tbsim.scatter import SurfaceConfig
from tbsim.sensor import (
    AcquisitionPlan,
    IlluminationMap,
    PhaseSegment,
    SensorConfig,
    _apply_dead_time,
    illumination_from_mask,
    intensity_image,
    pixel_channel,
    ramp_program,
    simulate_acquisition,
    simulate_dual_port_acquisition,
    uniform_illumination,
)
from tbsim.tagstream import check_stream_invariants, sync_histogram

CONVERTER = UMIConfig()
ANALYZER = UMIConfig()
SURFACE_UNITY = SurfaceConfig(specular_strength=1.0, diffuse_albedo=0.0)  # eff = 1 at phi=0


def quiet_sensor(**kw):
    defaults = dict(dark_rate_cps=0.0, efficiency=1.0, defective_pixels=())
    defaults.update(kw)
    return SensorConfig(**defaults)


def flat_plan(duration_s, pulse_rate_hz=5e6, **kw):
    return AcquisitionPlan(duration_s=duration_s, pulse_rate_hz=pulse_rate_hz, **kw)


class TestDeadTimeFilter:
    def test_second_of_close_pair_dropped(self):
        # two true photons 100 ns apart with 150 ns dead time
        times = np.array([0, 100_000], dtype=np.int64)
        assert list(_apply_dead_time(times, 150_000)) == [0]

    def test_chain_keeps_alternating_survivors(self):
        times = np.array([0, 100_000, 200_000, 300_000], dtype=np.int64)
        assert list(_apply_dead_time(times, 150_000)) == [0, 200_000]

    def test_exact_gap_survives(self):
        times = np.array([0, 150_000], dtype=np.int64)
        assert list(_apply_dead_time(times, 150_000)) == [0, 150_000]

    def test_matches_reference_greedy_on_dense_stream(self):
        rng = np.random.default_rng(31)
        times = np.sort(rng.integers(0, 1_000_000, 3000)).astype(np.int64)
        dead = 700
        kept = _apply_dead_time(times, dead)
        # plain python reference
        ref, last = [], -10**18
        for t in times:
            if t - last >= dead:
                ref.append(t)
                last = t
        assert list(kept) == ref


class TestPlanValidation:
    def test_rejects_nonpositive_duration(self):
        with pytest.raises(ValueError):
            AcquisitionPlan(duration_s=0.0)

    def test_rejects_noncontiguous_program(self):
        segs = (PhaseSegment(0.0, 0.4, 0.0, 0.0), PhaseSegment(0.5, 1.0, 0.0, 0.0))
        with pytest.raises(ValueError, match="contiguous"):
            AcquisitionPlan(duration_s=1.0, phase_program=segs)

    def test_rejects_short_program(self):
        segs = (PhaseSegment(0.0, 0.4, 0.0, 0.0),)
        with pytest.raises(ValueError, match="cover"):
            AcquisitionPlan(duration_s=1.0, phase_program=segs)

    def test_ramp_program_is_contiguous(self):
        segs = ramp_program(32, 0.01)
        plan = AcquisitionPlan(duration_s=0.32, phase_program=segs)
        assert plan.n_pulses == int(0.32 * 5e6)

    def test_illumination_rejects_negative(self):
        with pytest.raises(ValueError):
            IlluminationMap(-np.ones((8, 8)))


class TestDarkSensor:
    def test_dark_sensor_emits_only_triggers(self):
        stream = simulate_acquisition(
            flat_plan(0.001),
            uniform_illumination(1e6),
            CONVERTER,
            ANALYZER,
            ModeOverlap(0.95),
            SURFACE_UNITY,
            quiet_sensor(efficiency=0.0),
            seed=1,
        )
        assert np.all(stream.channels == 0)
        assert len(stream) == 5000

    def test_dark_counts_poisson_per_pixel(self):
        sensor = SensorConfig(dark_rate_cps=35.0, efficiency=0.0)
        stream = simulate_acquisition(
            flat_plan(1.0, pulse_rate_hz=1e5),
            uniform_illumination(0.0),
            CONVERTER,
            ANALYZER,
            ModeOverlap(0.95),
            SURFACE_UNITY,
            sensor,
            seed=2,
        )
        counts = np.bincount(stream.channels, minlength=65)
        defective = {pixel_channel(r, c) for r, c in sensor.defective_pixels}
        trigger = pixel_channel(*sensor.trigger_pixel)
        for ch in range(1, 65):
            if ch == trigger:
                assert counts[ch] == 0
            elif ch in defective:
                assert counts[ch] > 35 * 100  # far above the nominal rate
            else:
                assert abs(counts[ch] - 35) <= 5 * math.sqrt(35)

    def test_determinism_bit_identical(self):
        kwargs = dict(
            plan=flat_plan(0.002),
            illum=uniform_illumination(5e5),
            converter=CONVERTER,
            analyzer=ANALYZER,
            overlap=ModeOverlap(0.9),
            surface=SURFACE_UNITY,
            sensor=SensorConfig(),
            seed=42,
        )
        a = simulate_acquisition(**kwargs)
        b = simulate_acquisition(**kwargs)
        assert np.array_equal(a.channels, b.channels)
        assert np.array_equal(a.timestamps, b.timestamps)


class TestStreamInvariants:
    def test_ordering_and_dead_time_hold(self):
        sensor = SensorConfig()
        stream = simulate_acquisition(
            flat_plan(0.01, background_rate_cps=2e5),
            uniform_illumination(2e6),
            CONVERTER,
            ANALYZER,
            ModeOverlap(0.95),
            SURFACE_UNITY,
            sensor,
            seed=3,
        )
        check_stream_invariants(stream, sensor.dead_time_ps)
        assert np.all(np.diff(stream.timestamps) >= 0)

    def test_rate_sanity_without_interference(self):
        # with v_mode = 0 the monitored port takes half the detected photons
        illum_rate = 2e5
        qe = 0.4
        surface = SurfaceConfig(specular_strength=0.5, diffuse_albedo=0.0)
        sensor = quiet_sensor(efficiency=qe, dark_rate_cps=20.0)
        pulse_rate = 1e5
        duration = 10.0
        stream = simulate_acquisition(
            flat_plan(duration, pulse_rate_hz=pulse_rate),
            uniform_illumination(illum_rate),
            CONVERTER,
            ANALYZER,
            ModeOverlap(0.0),
            surface,
            sensor,
            seed=4,
        )
        p_photon = illum_rate / pulse_rate * 0.5 * qe  # collection 0.5, then qe
        expected = (pulse_rate * p_photon * 0.5 + 20.0) * duration
        counts = np.bincount(stream.channels, minlength=65)
        pixel = pixel_channel(4, 4)
        assert abs(counts[pixel] - expected) <= 5 * math.sqrt(expected)

    def test_dead_time_invariant_under_heavy_background(self):
        sensor = SensorConfig()
        stream = simulate_acquisition(
            flat_plan(0.005, background_rate_cps=3e6),
            uniform_illumination(0.0),
            CONVERTER,
            ANALYZER,
            ModeOverlap(0.95),
            SURFACE_UNITY,
            sensor,
            seed=5,
        )
        check_stream_invariants(stream, sensor.dead_time_ps)


class TestPeakStructure:
    def test_three_peaks_at_configured_offsets(self):
        plan = flat_plan(0.004)
        stream = simulate_acquisition(
            plan,
            uniform_illumination(1e6),
            CONVERTER,
            ANALYZER,
            ModeOverlap(0.95),
            SURFACE_UNITY,
            quiet_sensor(jitter_sigma_ps=5.0),
            seed=6,
        )
        hist = sync_histogram(stream, pixel_channel(4, 4), 25, (1000, 3700))
        centers = hist.bin_centers()
        expected = plan.transit_offset_ps + np.array([0.0, 570.0, 1140.0])
        for target in expected:
            sel = np.abs(centers - target) < 285
            assert hist.counts[sel].sum() > 0
            centroid = np.average(centers[sel], weights=hist.counts[sel])
            assert abs(centroid - target) < 50

    def test_mismatched_delays_give_four_peaks(self):
        plan = flat_plan(0.01, pulse_width_sigma_ps=10.0)
        stream = simulate_acquisition(
            plan,
            uniform_illumination(1e6),
            UMIConfig(path_delay_ps=570),
            UMIConfig(path_delay_ps=800),
            ModeOverlap(0.95),
            SURFACE_UNITY,
            quiet_sensor(jitter_sigma_ps=5.0),
            seed=7,
        )
        hist = sync_histogram(stream, pixel_channel(4, 4), 10, (1000, 3200))
        centers = hist.bin_centers()
        for off in (0.0, 570.0, 800.0, 1370.0):
            target = plan.transit_offset_ps + off
            near = np.abs(centers - target) < 60
            assert hist.counts[near].sum() > 0

    def test_trigger_pixel_emits_nothing(self):
        stream = simulate_acquisition(
            flat_plan(0.002),
            uniform_illumination(2e6),
            CONVERTER,
            ANALYZER,
            ModeOverlap(0.95),
            SURFACE_UNITY,
            quiet_sensor(),
            seed=8,
        )
        assert np.sum(stream.channels == pixel_channel(1, 1)) == 0


class TestDualPort:
    def test_ports_share_photons_anticorrelated(self):
        # constructive phase: monitored port gets nearly all mid photons
        plus, minus = simulate_dual_port_acquisition(
            flat_plan(0.004),
            uniform_illumination(1e6),
            CONVERTER,
            ANALYZER,
            ModeOverlap(1.0),
            SURFACE_UNITY,
            quiet_sensor(),
            seed=9,
        )
        ch = pixel_channel(4, 4)
        n_plus = int(np.sum(plus.channels == ch))
        n_minus = int(np.sum(minus.channels == ch))
        # port+ carries mid (1/2) + outer (1/4); port- only outer (1/4)
        assert n_plus > 2.5 * n_minus

    def test_monitored_stream_identical_to_single_port_run(self):
        common = dict(
            plan=flat_plan(0.002),
            illum=uniform_illumination(8e5),
            converter=CONVERTER,
            analyzer=ANALYZER,
            overlap=ModeOverlap(0.9),
            surface=SURFACE_UNITY,
            sensor=SensorConfig(),
            seed=10,
        )
        single = simulate_acquisition(**common)
        plus, _ = simulate_dual_port_acquisition(**common)
        assert np.array_equal(single.channels, plus.channels)
        assert np.array_equal(single.timestamps, plus.timestamps)


class TestIntensityImage:
    def test_empty_stream_all_zero(self):
        from tbsim.tagstream import TagStream

        stream = TagStream(np.empty(0, np.uint16), np.empty(0, np.int64))
        img = intensity_image(stream, SensorConfig())
        assert img.shape == (8, 8)
        assert img.sum() == 0

    def test_uniform_illumination_uniform_counts(self):
        sensor = quiet_sensor()
        stream = simulate_acquisition(
            flat_plan(0.02),
            uniform_illumination(5e5),
            CONVERTER,
            ANALYZER,
            ModeOverlap(0.0),
            SURFACE_UNITY,
            sensor,
            seed=11,
        )
        img = intensity_image(stream, sensor)
        trig_r, trig_c = sensor.trigger_pixel
        vals = np.delete(img.ravel(), (trig_r - 1) * 8 + (trig_c - 1))
        mean = vals.mean()
        assert np.all(np.abs(vals - mean) <= 5 * np.sqrt(mean))

    def test_defective_pixels_glow_in_the_dark(self):
        sensor = SensorConfig(efficiency=0.0)
        stream = simulate_acquisition(
            flat_plan(0.5, pulse_rate_hz=1e5),
            uniform_illumination(0.0),
            CONVERTER,
            ANALYZER,
            ModeOverlap(0.95),
            SURFACE_UNITY,
            sensor,
            seed=12,
        )
        img = intensity_image(stream, sensor)
        for row, col in sensor.defective_pixels:
            assert img[row - 1, col - 1] > 100 * 35 * 0.5

    def test_interval_selection(self):
        from tbsim.tagstream import TagStream

        stream = TagStream(
            np.array([2, 2, 2], np.uint16), np.array([100, 200, 300], np.int64)
        )
        img = intensity_image(stream, SensorConfig(), interval_ps=(150, 301))
        assert img.ravel()[1] == 2

    def test_mask_illumination_respects_mask(self):
        mask = np.zeros((8, 8))
        mask[3, 3] = 1.0
        illum = illumination_from_mask(mask, 1e6)
        sensor = quiet_sensor()
        stream = simulate_acquisition(
            flat_plan(0.005),
            illum,
            CONVERTER,
            ANALYZER,
            ModeOverlap(0.95),
            SURFACE_UNITY,
            sensor,
            seed=13,
        )
        img = intensity_image(stream, sensor)
        assert img[3, 3] > 0
        img[3, 3] = 0
        assert img.sum() == 0
