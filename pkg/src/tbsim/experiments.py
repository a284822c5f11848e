"""Reproducible experiment drivers.

Each driver maps one measurement of the physical system onto a pure
function of (config, seed): the per-pixel fringe scan, the surface
rotation scan, correlation-contrast imaging, the BB84 key exchange, and
the two-output differential scan.  Drivers return plain result objects;
file emission lives in the command-line layer.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import analysis, qkd
from .analysis import (
    AngleScanRow,
    DifferentialMeasurement,
    FitError,
    PhaseScan,
    PixelPattern,
    ReferencePattern,
    VisibilityFit,
)
from .config import ExperimentConfig
from .optics import arrival_offsets
from .sensor import (
    AcquisitionPlan,
    IlluminationMap,
    PhaseSegment,
    illumination_from_mask,
    intensity_image,
    pixel_channel,
    ramp_program,
    simulate_acquisition,
    simulate_dual_port_acquisition,
    uniform_illumination,
)
from .tagstream import Histogram, TagStream, sync_histogram

HISTOGRAM_PIXEL = (4, 4)
HISTOGRAM_BIN_PS = 25


def illuminated_pixels(cfg: ExperimentConfig) -> list[tuple[int, int]]:
    """Pixels inside the configured illumination block, minus the trigger."""
    r0, r1 = cfg.acquisition.illuminated_rows
    c0, c1 = cfg.acquisition.illuminated_cols
    out = []
    for row in range(r0, r1 + 1):
        for col in range(c0, c1 + 1):
            if (row, col) != tuple(cfg.sensor.trigger_pixel):
                out.append((row, col))
    return out


def block_illumination(cfg: ExperimentConfig) -> IlluminationMap:
    rates = np.zeros((cfg.sensor.rows, cfg.sensor.cols))
    for row, col in illuminated_pixels(cfg):
        rates[row - 1, col - 1] = cfg.acquisition.photon_rate_per_pixel_cps
    return IlluminationMap(rates)


def mid_window(cfg: ExperimentConfig) -> tuple[float, float]:
    """(center, half width) of the middle-peak post-selection window in ps."""
    offs = arrival_offsets(cfg.converter, cfg.analyzer, cfg.merge_tolerance_ps)
    center = cfg.acquisition.transit_offset_ps + offs.offsets_ps[1 if offs.interference else 0]
    return center, cfg.analysis.window_half_width_ps


def _plan(
    cfg: ExperimentConfig,
    segments: tuple[PhaseSegment, ...],
    background_rate_cps=0.0,
) -> AcquisitionPlan:
    duration = segments[-1].t_stop_s
    return AcquisitionPlan(
        duration_s=duration,
        pulse_rate_hz=cfg.acquisition.pulse_rate_hz,
        pulse_width_sigma_ps=cfg.acquisition.pulse_width_sigma_ps,
        phase_program=segments,
        background_rate_cps=background_rate_cps,
        transit_offset_ps=cfg.acquisition.transit_offset_ps,
    )


def _acquire(
    cfg: ExperimentConfig,
    illum: IlluminationMap,
    segments: tuple[PhaseSegment, ...],
    seed: int,
    background_rate_cps=0.0,
    surface=None,
) -> TagStream:
    return simulate_acquisition(
        _plan(cfg, segments, background_rate_cps),
        illum,
        cfg.converter,
        cfg.analyzer,
        cfg.overlap,
        surface if surface is not None else cfg.surface,
        cfg.sensor,
        seed,
        merge_tolerance_ps=cfg.merge_tolerance_ps,
    )


@dataclass
class PhaseScanRun:
    """Driver output of one full-period fringe scan."""

    stream: TagStream
    segments: tuple[PhaseSegment, ...]
    window_center_ps: float
    window_half_width_ps: float
    scans: dict[tuple[int, int], PhaseScan]
    fits: dict[tuple[int, int], VisibilityFit]
    fit_errors: dict[tuple[int, int], str]
    v_map: np.ndarray
    histogram: Histogram
    illuminated: list[tuple[int, int]]
    seed: int


def run_phase_scan(cfg: ExperimentConfig, seed: int, vary: str = "analyzer") -> PhaseScanRun:
    """Step one interferometer phase through a full period and fit each pixel.

    Produces the monitored-port stream, the per-pixel post-selected
    phase scans and fringe fits, an 8x8 visibility map (NaN where not
    illuminated or not fittable), and a three-peak arrival histogram of
    the central reference pixel.
    """
    segments = ramp_program(
        cfg.acquisition.phase_points, cfg.acquisition.exposure_per_point_s, vary=vary
    )
    stream = _acquire(
        cfg, block_illumination(cfg), segments, seed,
        background_rate_cps=cfg.acquisition.background_rate_cps,
    )
    center, half = mid_window(cfg)
    scans: dict[tuple[int, int], PhaseScan] = {}
    fits: dict[tuple[int, int], VisibilityFit] = {}
    fit_errors: dict[tuple[int, int], str] = {}
    v_map = np.full((cfg.sensor.rows, cfg.sensor.cols), np.nan)
    for row, col in illuminated_pixels(cfg):
        ch = pixel_channel(row, col, cfg.sensor.cols)
        scan = analysis.phase_scan_from_stream(stream, ch, segments, center, half, vary)
        scans[(row, col)] = scan
        try:
            fit = analysis.fit_visibility(scan)
            fits[(row, col)] = fit
            v_map[row - 1, col - 1] = fit.v
        except FitError as exc:
            fit_errors[(row, col)] = str(exc)
    hist_ch = pixel_channel(*HISTOGRAM_PIXEL, cfg.sensor.cols)
    transit = cfg.acquisition.transit_offset_ps
    t0 = transit - 500.0
    t1 = transit + cfg.converter.path_delay_ps + cfg.analyzer.path_delay_ps + 500.0
    histogram = sync_histogram(stream, hist_ch, HISTOGRAM_BIN_PS, (int(t0), int(t1)))
    return PhaseScanRun(
        stream=stream,
        segments=segments,
        window_center_ps=center,
        window_half_width_ps=half,
        scans=scans,
        fits=fits,
        fit_errors=fit_errors,
        v_map=v_map,
        histogram=histogram,
        illuminated=illuminated_pixels(cfg),
        seed=seed,
    )


@dataclass
class AngleScanRun:
    """Driver output of a surface rotation scan on the reference pixel."""

    rows: list[AngleScanRow]
    pixel: tuple[int, int]
    seed: int
    streams: list[TagStream] | None = None

    @property
    def any_insufficient(self) -> bool:
        return any(r.insufficient for r in self.rows)


def run_angle_scan(
    cfg: ExperimentConfig, phis_deg: list[float], seed: int, keep_streams: bool = False
) -> AngleScanRun:
    """One fringe scan per surface rotation angle, fitted on pixel (4,4).

    The collection efficiency changes with the angle while the phase is
    untouched, so visibility stays flat until the photon supply drops
    below the configured detectability floor.
    """
    pixel = HISTOGRAM_PIXEL
    ch = pixel_channel(*pixel, cfg.sensor.cols)
    rates = np.zeros((cfg.sensor.rows, cfg.sensor.cols))
    rates[pixel[0] - 1, pixel[1] - 1] = cfg.acquisition.photon_rate_per_pixel_cps
    illum = IlluminationMap(rates)
    segments = ramp_program(cfg.acquisition.phase_points, cfg.acquisition.exposure_per_point_s)
    center, half = mid_window(cfg)
    per_angle = []
    for idx, phi in enumerate(phis_deg):
        surface = dataclasses.replace(cfg.surface, rotation_phi_deg=phi)
        stream = _acquire(cfg, illum, segments, seed + idx, surface=surface)
        per_angle.append((phi, stream, segments))
    rows = analysis.angle_scan_summary(
        per_angle, ch, center, half, min_counts=cfg.analysis.angle_scan_min_counts
    )
    return AngleScanRun(
        rows=rows,
        pixel=pixel,
        seed=seed,
        streams=[s for _, s, _ in per_angle] if keep_streams else None,
    )


@dataclass
class ImagingRun:
    """Driver output of one correlation-contrast imaging scenario."""

    intensity: np.ndarray
    patterns: list[PixelPattern]
    reference: ReferencePattern
    scores: dict[tuple[int, int], float]
    threshold: float
    reconstructed: np.ndarray
    excluded: list[tuple[int, int]]
    object_mask: np.ndarray
    lamp_map: np.ndarray | None
    stream: TagStream
    segments: tuple[PhaseSegment, ...]
    seed: int


def _signature_segments(cfg: ExperimentConfig) -> tuple[PhaseSegment, ...]:
    return ramp_program(
        cfg.imaging.signature_points, cfg.imaging.exposure_per_point_s, vary="converter"
    )


def imaging_window(cfg: ExperimentConfig) -> tuple[float, float]:
    """(center, half width) of the wide correlation gate in ps."""
    center, _ = mid_window(cfg)
    return center, cfg.imaging.window_half_width_ps


def reference_pattern(cfg: ExperimentConfig, seed: int) -> ReferencePattern:
    """High-SNR calibration of the count response to the phase signature.

    Uniform bright illumination, no ambient light; the template is the
    average normalized response of all usable pixels.
    """
    surface = dataclasses.replace(cfg.surface, rotation_phi_deg=cfg.imaging.rotation_phi_deg)
    segments = _signature_segments(cfg)
    illum = uniform_illumination(
        cfg.imaging.signal_rate_high_cps, cfg.sensor.rows, cfg.sensor.cols
    )
    stream = _acquire(cfg, illum, segments, seed, surface=surface)
    center, half = imaging_window(cfg)
    excluded = _excluded_pixels(cfg)
    acc = []
    for row in range(1, cfg.sensor.rows + 1):
        for col in range(1, cfg.sensor.cols + 1):
            if (row, col) in excluded:
                continue
            ch = pixel_channel(row, col, cfg.sensor.cols)
            counts = analysis.windowed_segment_counts(stream, ch, segments, center, half)
            acc.append(analysis.normalize_pattern(counts))
    return ReferencePattern(np.mean(acc, axis=0))


def _excluded_pixels(cfg: ExperimentConfig) -> set[tuple[int, int]]:
    return {tuple(cfg.sensor.trigger_pixel), *map(tuple, cfg.sensor.defective_pixels)}


def lamp_background_map(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    """Non-uniform ambient rate map of the lamp scenario (seeded, fixed per run)."""
    rng = np.random.default_rng([seed, 7])
    g = rng.uniform(
        cfg.imaging.lamp_gradient_min,
        cfg.imaging.lamp_gradient_max,
        (cfg.sensor.rows, cfg.sensor.cols),
    )
    return cfg.imaging.lamp_base_cps * g


def run_imaging(
    cfg: ExperimentConfig,
    object_mask: np.ndarray,
    snr_profile: str,
    seed: int,
) -> ImagingRun:
    """Image an object mask and reconstruct it by pattern correlation.

    ``snr_profile``: "high" (bright, clean), "low" (dim, clean) or
    "lamp" (dim signal plus strong non-uniform ambient light).  The
    reference pattern comes from a dedicated calibration acquisition;
    the correlation threshold is the configured fraction of the
    reference self-score.
    """
    if snr_profile not in ("high", "low", "lamp"):
        raise ValueError(f"unknown snr_profile {snr_profile!r}")
    object_mask = np.asarray(object_mask, dtype=float)
    if object_mask.shape != (cfg.sensor.rows, cfg.sensor.cols):
        raise ValueError(f"object mask must be {(cfg.sensor.rows, cfg.sensor.cols)}")
    surface = dataclasses.replace(cfg.surface, rotation_phi_deg=cfg.imaging.rotation_phi_deg)
    segments = _signature_segments(cfg)
    signal_rate = (
        cfg.imaging.signal_rate_high_cps
        if snr_profile == "high"
        else cfg.imaging.signal_rate_low_cps
    )
    lamp_map = lamp_background_map(cfg, seed) if snr_profile == "lamp" else None
    stream = _acquire(
        cfg,
        illumination_from_mask(object_mask, signal_rate),
        segments,
        seed,
        background_rate_cps=lamp_map if lamp_map is not None else 0.0,
        surface=surface,
    )
    center, half = imaging_window(cfg)
    excluded = sorted(_excluded_pixels(cfg))
    patterns = []
    for row in range(1, cfg.sensor.rows + 1):
        for col in range(1, cfg.sensor.cols + 1):
            ch = pixel_channel(row, col, cfg.sensor.cols)
            counts = analysis.windowed_segment_counts(stream, ch, segments, center, half)
            patterns.append(PixelPattern((row, col), analysis.normalize_pattern(counts)))
    reference = reference_pattern(cfg, seed + 1)
    self_score = analysis.reference_self_score(reference, cfg.analysis.literal_half_shift)
    threshold = cfg.analysis.correlation_threshold_fraction * self_score
    scores = analysis.correlation_scores(patterns, reference, cfg.analysis.literal_half_shift)
    reconstructed = analysis.reconstruct_image(
        patterns,
        reference,
        threshold,
        excluded=excluded,
        shape=(cfg.sensor.rows, cfg.sensor.cols),
        literal_half_shift=cfg.analysis.literal_half_shift,
    )
    return ImagingRun(
        intensity=intensity_image(stream, cfg.sensor),
        patterns=patterns,
        reference=reference,
        scores=scores,
        threshold=threshold,
        reconstructed=reconstructed,
        excluded=excluded,
        object_mask=object_mask.astype(int),
        lamp_map=lamp_map,
        stream=stream,
        segments=segments,
        seed=seed,
    )


def run_qkd(cfg: ExperimentConfig, n_pulses: int, seed: int):
    """BB84 session at the configured rotation; returns (session, sift, report)."""
    surface = dataclasses.replace(cfg.surface, rotation_phi_deg=cfg.qkd.rotation_phi_deg)
    session = qkd.run_session(
        n_pulses,
        cfg.converter,
        cfg.analyzer,
        cfg.overlap,
        surface,
        cfg.sensor,
        cfg.qkd_params(),
        seed,
    )
    result = qkd.sift(session)
    report = qkd.session_report(session, result, cfg.qkd.qber_abort_threshold)
    return session, result, report


@dataclass
class DifferentialRun:
    """Two-output fringe scan with ambient light on both ports."""

    measurements: list[DifferentialMeasurement]
    fit_single: VisibilityFit
    fit_differential: VisibilityFit
    background_per_sample: float
    seed: int


def run_differential_scan(
    cfg: ExperimentConfig,
    seed: int,
    background_rate_cps: float | np.ndarray | None = None,
) -> DifferentialRun:
    """Fringe scan read at both analyzer outputs under equal ambient light.

    The single-port visibility comes from a plain fit of the monitored
    port; the differential visibility fits (plus - minus) and normalizes
    by the total signal after subtracting the ambient level estimated
    from an off-peak window of the same streams.
    """
    pixel = HISTOGRAM_PIXEL
    ch = pixel_channel(*pixel, cfg.sensor.cols)
    rates = np.zeros((cfg.sensor.rows, cfg.sensor.cols))
    rates[pixel[0] - 1, pixel[1] - 1] = cfg.acquisition.photon_rate_per_pixel_cps
    bg = (
        background_rate_cps
        if background_rate_cps is not None
        else cfg.acquisition.background_rate_cps
    )
    segments = ramp_program(cfg.acquisition.phase_points, cfg.acquisition.exposure_per_point_s)
    plus, minus = simulate_dual_port_acquisition(
        _plan(cfg, segments, background_rate_cps=bg),
        IlluminationMap(rates),
        cfg.converter,
        cfg.analyzer,
        cfg.overlap,
        cfg.surface,
        cfg.sensor,
        seed,
        merge_tolerance_ps=cfg.merge_tolerance_ps,
    )
    center, half = mid_window(cfg)
    counts_plus = analysis.windowed_segment_counts(plus, ch, segments, center, half)
    counts_minus = analysis.windowed_segment_counts(minus, ch, segments, center, half)
    thetas = [seg.theta_b_rad for seg in segments]
    measurements = [
        DifferentialMeasurement(t, float(p), float(m))
        for t, p, m in zip(thetas, counts_plus, counts_minus)
    ]
    # ambient level per sample from a signal-free window of the same width
    off_center = (
        cfg.acquisition.transit_offset_ps
        + cfg.converter.path_delay_ps
        + cfg.analyzer.path_delay_ps
        + 3000.0
    )
    off_plus = analysis.windowed_segment_counts(plus, ch, segments, off_center, half)
    off_minus = analysis.windowed_segment_counts(minus, ch, segments, off_center, half)
    background_per_sample = float(np.mean(off_plus + off_minus))

    exposures = np.array([seg.t_stop_s - seg.t_start_s for seg in segments])
    scan_plus = PhaseScan(x=np.array(thetas), counts=counts_plus, exposures=exposures)
    fit_single = analysis.fit_visibility(scan_plus)
    fit_diff = analysis.fit_differential_visibility(measurements, background_per_sample)
    return DifferentialRun(
        measurements=measurements,
        fit_single=fit_single,
        fit_differential=fit_diff,
        background_per_sample=background_per_sample,
        seed=seed,
    )
