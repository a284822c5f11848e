"""8x8 single-photon-detector-array acquisition simulator.

Generates time-tag streams for a pulsed source driven through the
converter / scattering surface / analyzer chain: per-pulse photon
sampling over the detection peaks, Poisson dark and ambient background
counts, Gaussian source width and detector jitter, per-channel dead
time, and a clean trigger channel firing on every pulse.

Channels: 0 is the trigger, pixels are 1..rows*cols row-major.  The
trigger pixel itself is sacrificed (it emits nothing; its physical
signal is the trigger).  Work is partitioned per pixel and per phase
segment with independently seeded generator streams, so the output is
bit-identical for a given seed regardless of evaluation order.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .optics import ModeOverlap, UMIConfig, arrival_offsets, peak_probabilities, prepare_timebin
from .scatter import SurfaceConfig, collection_efficiency
from .tagstream import TagStream

PS_PER_S = 1e12


@dataclass(frozen=True)
class SensorConfig:
    """Detector-array properties.

    ``jitter_sigma_ps`` of 51 ps corresponds to a 120 ps FWHM system
    timing spread.  Defective pixels run at ``defective_dark_factor``
    times the nominal dark rate.  The trigger pixel is excluded from all
    imaging statistics.
    """

    rows: int = 8
    cols: int = 8
    pitch_um: float = 75.0
    active_diameter_um: float = 30.0
    dark_rate_cps: float = 35.0
    dead_time_ns: float = 150.0
    jitter_sigma_ps: float = 51.0
    efficiency: float = 0.5
    trigger_pixel: tuple[int, int] = (1, 1)
    defective_pixels: tuple[tuple[int, int], ...] = ((1, 2), (2, 2), (5, 8))
    defective_dark_factor: float = 1000.0
    trigger_jitter_sigma_ps: float = 0.0

    def __post_init__(self):
        if self.dead_time_ns <= 0.0:
            raise ValueError("dead_time_ns must be > 0")
        if self.jitter_sigma_ps < 0.0 or self.trigger_jitter_sigma_ps < 0.0:
            raise ValueError("jitter sigmas must be >= 0")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must be in [0, 1], got {self.efficiency}")
        object.__setattr__(
            self, "defective_pixels", tuple(tuple(p) for p in self.defective_pixels)
        )

    @property
    def dead_time_ps(self) -> float:
        return self.dead_time_ns * 1000.0

    def pixel_dark_rate(self, row: int, col: int) -> float:
        if (row, col) in self.defective_pixels:
            return self.dark_rate_cps * self.defective_dark_factor
        return self.dark_rate_cps


def pixel_channel(row: int, col: int, cols: int = 8) -> int:
    """Row-major 1-based channel number of pixel (row, col), rows/cols 1-based."""
    return (row - 1) * cols + col


@dataclass(frozen=True)
class IlluminationMap:
    """Mean photon rate (photons/s) reaching each pixel at unit collection.

    Collection efficiency and detector efficiency are applied at
    sampling time, not folded in here.
    """

    rates: np.ndarray

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float)
        if np.any(rates < 0):
            raise ValueError("illumination rates must be >= 0")
        object.__setattr__(self, "rates", rates)


def illumination_from_mask(mask: np.ndarray, rate_per_bright_pixel_cps: float) -> IlluminationMap:
    """Object mask (truthy = illuminated) scaled to a per-pixel photon rate."""
    return IlluminationMap(np.asarray(mask, dtype=float) * rate_per_bright_pixel_cps)


def uniform_illumination(rate_cps: float, rows: int = 8, cols: int = 8) -> IlluminationMap:
    return IlluminationMap(np.full((rows, cols), rate_cps, dtype=float))


@dataclass(frozen=True)
class PhaseSegment:
    """Constant-phase interval of the acquisition: [t_start, t_stop) seconds."""

    t_start_s: float
    t_stop_s: float
    theta_a_rad: float
    theta_b_rad: float


@dataclass(frozen=True)
class AcquisitionPlan:
    """One acquisition: pulse train, source width, phase program, ambient light.

    ``background_rate_cps`` may be a scalar or a per-pixel (rows, cols)
    array for non-uniform ambient light.  Segments must be contiguous,
    non-overlapping, and cover [0, duration].  ``transit_offset_ps`` is
    the optical transit between the trigger edge and the earliest
    detection peak; a comfortably positive value keeps the first peak's
    jitter tail from wrapping into the previous pulse period.
    """

    duration_s: float
    pulse_rate_hz: float = 5e6
    pulse_width_sigma_ps: float = 127.4
    phase_program: tuple[PhaseSegment, ...] = ()
    background_rate_cps: Union[float, np.ndarray] = 0.0
    transit_offset_ps: float = 1500.0

    def __post_init__(self):
        if self.duration_s <= 0.0:
            raise ValueError("duration_s must be > 0")
        if self.pulse_rate_hz <= 0.0:
            raise ValueError("pulse_rate_hz must be > 0")
        if self.pulse_width_sigma_ps < 0.0:
            raise ValueError("pulse_width_sigma_ps must be >= 0")
        if self.transit_offset_ps < 0.0:
            raise ValueError("transit_offset_ps must be >= 0")
        segs = tuple(self.phase_program) or (
            PhaseSegment(0.0, self.duration_s, 0.0, 0.0),
        )
        tol = 1e-12
        if abs(segs[0].t_start_s) > tol:
            raise ValueError("phase_program must start at t = 0")
        for prev, cur in zip(segs, segs[1:]):
            if abs(cur.t_start_s - prev.t_stop_s) > tol:
                raise ValueError("phase_program segments must be contiguous")
        for seg in segs:
            if seg.t_stop_s <= seg.t_start_s:
                raise ValueError("phase segments must have positive length")
        if abs(segs[-1].t_stop_s - self.duration_s) > tol:
            raise ValueError("phase_program must cover the full duration")
        object.__setattr__(self, "phase_program", segs)

    @property
    def n_pulses(self) -> int:
        return int(round(self.duration_s * self.pulse_rate_hz))

    @property
    def pulse_period_ps(self) -> float:
        return PS_PER_S / self.pulse_rate_hz


def ramp_program(
    n_points: int,
    exposure_per_point_s: float,
    vary: str = "analyzer",
    theta_start_rad: float = 0.0,
    theta_span_rad: float = 2.0 * math.pi,
    theta_fixed_rad: float = 0.0,
) -> tuple[PhaseSegment, ...]:
    """Stepwise phase ramp covering one period, endpoint excluded.

    ``vary`` selects which interferometer's phase is stepped; the other
    stays at ``theta_fixed_rad``.
    """
    if vary not in ("analyzer", "converter"):
        raise ValueError("vary must be 'analyzer' or 'converter'")
    segs = []
    for k in range(n_points):
        theta = theta_start_rad + theta_span_rad * k / n_points
        t0 = k * exposure_per_point_s
        t1 = (k + 1) * exposure_per_point_s
        if vary == "analyzer":
            segs.append(PhaseSegment(t0, t1, theta_fixed_rad, theta))
        else:
            segs.append(PhaseSegment(t0, t1, theta, theta_fixed_rad))
    return tuple(segs)


def _apply_dead_time(times: np.ndarray, dead_ps: float) -> np.ndarray:
    """Greedy dead-time gate: drop tags within dead_ps of the last kept tag.

    Vectorized exact greedy: a tag whose gap to its immediate
    predecessor is >= dead_ps is always kept (the last *kept* tag can
    only be older), so any violator directly following a non-violator
    is definitely dropped; the remaining chain members are re-evaluated
    against the surviving predecessors in the next round.  Rounds scale
    with the longest violation chain, which stays short at physical
    rates.
    """
    while times.size > 1:
        bad = np.empty(times.size, dtype=bool)
        bad[0] = False
        np.less(np.diff(times), dead_ps, out=bad[1:])
        if not bad.any():
            break
        drop = bad.copy()
        drop[1:] &= ~bad[:-1]
        times = times[~drop]
    return times


def _finalize_channel(times_ps: np.ndarray, dead_ps: float) -> np.ndarray:
    """Round to integer picoseconds, clamp at 0, sort, enforce dead time."""
    t = np.rint(times_ps).astype(np.int64)
    np.clip(t, 0, None, out=t)
    t.sort(kind="stable")
    return _apply_dead_time(t, dead_ps)


def _segment_pulse_ranges(plan: AcquisitionPlan) -> list[tuple[int, int]]:
    """[k0, k1) pulse-index range of each phase segment."""
    period_s = 1.0 / plan.pulse_rate_hz
    ranges = []
    for seg in plan.phase_program:
        k0 = int(math.ceil(seg.t_start_s / period_s - 1e-9))
        k1 = int(math.ceil(seg.t_stop_s / period_s - 1e-9))
        ranges.append((k0, min(k1, plan.n_pulses)))
    return ranges


def _segment_categories(
    converter: UMIConfig,
    analyzer: UMIConfig,
    overlap: ModeOverlap,
    seg: PhaseSegment,
    merge_tolerance_ps: float,
) -> list[tuple[float, int, float]]:
    """Per-pulse photon outcomes as (arrival offset ps, port, probability).

    Ports are +1 (monitored) and -1 (complementary).  Outcomes cover
    both ports so that a dual-port acquisition shares one photon draw;
    probabilities sum to 1 (unit total over a detected photon's fates).
    """
    theta_a = converter.phase_rad + seg.theta_a_rad
    theta_b = analyzer.phase_rad + seg.theta_b_rad
    offs = arrival_offsets(converter, analyzer, merge_tolerance_ps)
    state = prepare_timebin(theta_a, converter)
    if offs.interference:
        probs = peak_probabilities(
            state, dataclasses.replace(analyzer, phase_rad=theta_b), overlap
        )
        t_ss, t_mid, t_ll = offs.offsets_ps
        return [
            (t_ss, +1, 0.5 * probs.p_ss),
            (t_mid, +1, probs.p_mid_monitored),
            (t_ll, +1, 0.5 * probs.p_ll),
            (t_ss, -1, 0.5 * probs.p_ss),
            (t_mid, -1, probs.p_mid_other),
            (t_ll, -1, 0.5 * probs.p_ll),
        ]
    # mismatched delays: four distinct peaks, no interference anywhere
    rho_c = converter.splitter_ratio
    rho_a = analyzer.splitter_ratio
    peak_prob = {
        0.0: rho_c * rho_a,
        analyzer.path_delay_ps: rho_c * (1.0 - rho_a),
        converter.path_delay_ps: (1.0 - rho_c) * rho_a,
        converter.path_delay_ps + analyzer.path_delay_ps: (1.0 - rho_c) * (1.0 - rho_a),
    }
    cats = []
    for port in (+1, -1):
        for t_off in offs.offsets_ps:
            cats.append((t_off, port, 0.5 * peak_prob[t_off]))
    return cats


def _poisson_times(rng: np.random.Generator, rate_cps: float, duration_s: float) -> np.ndarray:
    """Homogeneous Poisson arrival times in picoseconds over [0, duration)."""
    n = rng.poisson(rate_cps * duration_s)
    if n == 0:
        return np.empty(0, dtype=float)
    return np.sort(rng.random(n)) * duration_s * PS_PER_S


def _simulate_ports(
    plan: AcquisitionPlan,
    illum: IlluminationMap,
    converter: UMIConfig,
    analyzer: UMIConfig,
    overlap: ModeOverlap,
    surface: SurfaceConfig,
    sensor: SensorConfig,
    seed: int,
    ports: tuple[int, ...],
    merge_tolerance_ps: float,
) -> dict[int, TagStream]:
    rates = illum.rates
    if rates.shape != (sensor.rows, sensor.cols):
        raise ValueError(
            f"illumination shape {rates.shape} does not match sensor "
            f"{(sensor.rows, sensor.cols)}"
        )
    bg = np.asarray(plan.background_rate_cps, dtype=float)
    if bg.ndim == 0:
        bg = np.full((sensor.rows, sensor.cols), float(bg))
    elif bg.shape != (sensor.rows, sensor.cols):
        raise ValueError("background_rate_cps must be scalar or (rows, cols)")

    coll = collection_efficiency(surface)
    period_ps = plan.pulse_period_ps
    n_pulses = plan.n_pulses
    dead_ps = sensor.dead_time_ps
    seg_ranges = _segment_pulse_ranges(plan)
    seg_cats = [
        _segment_categories(converter, analyzer, overlap, seg, merge_tolerance_ps)
        for seg in plan.phase_program
    ]

    per_port_channels: dict[int, list[np.ndarray]] = {p: [] for p in ports}
    per_port_times: dict[int, list[np.ndarray]] = {p: [] for p in ports}

    # trigger: a dedicated clean channel firing on every pulse
    trig = np.arange(n_pulses, dtype=np.float64) * period_ps
    if sensor.trigger_jitter_sigma_ps > 0.0:
        trig = trig + np.random.default_rng([seed, 4]).normal(
            0.0, sensor.trigger_jitter_sigma_ps, n_pulses
        )
    trig_final = _finalize_channel(trig, dead_ps)
    for port in ports:
        per_port_channels[port].append(np.zeros(trig_final.size, dtype=np.uint16))
        per_port_times[port].append(trig_final)

    for row in range(1, sensor.rows + 1):
        for col in range(1, sensor.cols + 1):
            if (row, col) == tuple(sensor.trigger_pixel):
                continue
            ch = pixel_channel(row, col, sensor.cols)
            base_p = rates[row - 1, col - 1] / plan.pulse_rate_hz * coll * sensor.efficiency
            base_p = min(base_p, 1.0)  # at most one signal photon per pulse per pixel

            port_sig: dict[int, list[np.ndarray]] = {p: [] for p in ports}
            if base_p > 0.0:
                for seg_idx, ((k0, k1), cats) in enumerate(zip(seg_ranges, seg_cats)):
                    n = k1 - k0
                    if n <= 0:
                        continue
                    rng = np.random.default_rng([seed, 1, ch, seg_idx])
                    thresholds = base_p * np.cumsum([c[2] for c in cats])
                    cat_of_pulse = np.searchsorted(thresholds, rng.random(n), side="right")
                    for cat_idx, (t_off, port, _) in enumerate(cats):
                        hit = np.flatnonzero(cat_of_pulse == cat_idx)
                        if hit.size == 0 or port not in port_sig:
                            continue
                        t = (k0 + hit) * period_ps + plan.transit_offset_ps + t_off
                        if plan.pulse_width_sigma_ps > 0.0:
                            t = t + rng.normal(0.0, plan.pulse_width_sigma_ps, hit.size)
                        if sensor.jitter_sigma_ps > 0.0:
                            t = t + rng.normal(0.0, sensor.jitter_sigma_ps, hit.size)
                        port_sig[port].append(t)

            dark_rate = sensor.pixel_dark_rate(row, col)
            bg_rate = bg[row - 1, col - 1]
            for port in ports:
                parts = port_sig[port]
                if dark_rate > 0.0:
                    parts.append(
                        _poisson_times(
                            np.random.default_rng([seed, 2, ch, port & 0xFF]),
                            dark_rate,
                            plan.duration_s,
                        )
                    )
                if bg_rate > 0.0:
                    parts.append(
                        _poisson_times(
                            np.random.default_rng([seed, 3, ch, port & 0xFF]),
                            bg_rate,
                            plan.duration_s,
                        )
                    )
                if not parts:
                    continue
                final = _finalize_channel(np.concatenate(parts), dead_ps)
                if final.size:
                    per_port_channels[port].append(np.full(final.size, ch, dtype=np.uint16))
                    per_port_times[port].append(final)

    out: dict[int, TagStream] = {}
    for port in ports:
        ch_all = np.concatenate(per_port_channels[port])
        ts_all = np.concatenate(per_port_times[port])
        order = np.lexsort((ch_all, ts_all))
        out[port] = TagStream(ch_all[order], ts_all[order])
    return out


def simulate_acquisition(
    plan: AcquisitionPlan,
    illum: IlluminationMap,
    converter: UMIConfig,
    analyzer: UMIConfig,
    overlap: ModeOverlap,
    surface: SurfaceConfig,
    sensor: SensorConfig,
    seed: int,
    monitored_port: int = +1,
    merge_tolerance_ps: float = 50.0,
) -> TagStream:
    """Simulate one acquisition and return the monitored-port tag stream.

    Per pulse: a trigger tag on channel 0; photon tags on illuminated
    pixels sampled over the detection peaks (interference law times
    collection and detector efficiency), placed at pulse time + peak
    offset + source-width and jitter draws; dark and ambient background
    tags as Poisson processes; per-channel dead-time gating.  The result
    is time-ordered and bit-identical for a given seed.
    """
    ports = _simulate_ports(
        plan, illum, converter, analyzer, overlap, surface, sensor, seed,
        (monitored_port,), merge_tolerance_ps,
    )
    return ports[monitored_port]


def simulate_dual_port_acquisition(
    plan: AcquisitionPlan,
    illum: IlluminationMap,
    converter: UMIConfig,
    analyzer: UMIConfig,
    overlap: ModeOverlap,
    surface: SurfaceConfig,
    sensor: SensorConfig,
    seed: int,
    merge_tolerance_ps: float = 50.0,
) -> tuple[TagStream, TagStream]:
    """Both analyzer outputs of one acquisition as (monitored, complementary).

    The two streams share the photon draws (each photon exits exactly
    one port), so port counts are properly anti-correlated; dark and
    background processes are independent per port.
    """
    ports = _simulate_ports(
        plan, illum, converter, analyzer, overlap, surface, sensor, seed,
        (+1, -1), merge_tolerance_ps,
    )
    return ports[+1], ports[-1]


def intensity_image(
    stream: TagStream,
    sensor: SensorConfig,
    interval_ps: tuple[int, int] | None = None,
) -> np.ndarray:
    """Per-pixel tag counts in an absolute-time interval, trigger excluded."""
    ch = stream.channels
    ts = stream.timestamps
    if interval_ps is not None:
        t0, t1 = interval_ps
        sel = (ts >= t0) & (ts < t1)
        ch = ch[sel]
    n_px = sensor.rows * sensor.cols
    counts = np.bincount(ch, minlength=n_px + 1)[1 : n_px + 1]
    return counts.reshape(sensor.rows, sensor.cols).astype(np.int64)
