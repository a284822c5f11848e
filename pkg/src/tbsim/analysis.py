"""Count analysis: fringe fitting, angle-scan summaries, pattern
correlation imaging, and the two-port differential measurement.

The visibility fit is a closed-form linear least squares on the
regressors (cos theta, sin theta, 1) after exposure normalization, so
it is deterministic and needs no iterative solver.  Pattern correlation
mean-subtracts both sequences, which makes the score exactly invariant
under any constant additive background; a compatibility mode replaces
the mean subtraction with a fixed 0.5 downshift.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .sensor import PhaseSegment
from .tagstream import TRIGGER_CHANNEL, TagStream

TWO_PI = 2.0 * math.pi


class FitError(RuntimeError):
    """Degenerate or non-converging fringe fit."""


@dataclass(frozen=True)
class PhaseScan:
    """Counts versus applied phase (or actuator voltage).

    ``x`` is in radians when ``x_unit == "rad"`` and in volts when
    ``x_unit == "V"``; voltage scans need a volts-to-radians coefficient
    at fit time.  Exposures are per-sample dwell times in seconds.
    """

    x: np.ndarray
    counts: np.ndarray
    exposures: np.ndarray
    x_unit: str = "rad"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        exposures = np.asarray(self.exposures, dtype=float)
        if not (x.size == counts.size == exposures.size):
            raise ValueError("x, counts and exposures must have equal length")
        if np.any(counts < 0):
            raise ValueError("counts must be >= 0")
        if np.any(exposures <= 0):
            raise ValueError("exposures must be > 0")
        if self.x_unit not in ("rad", "V"):
            raise ValueError("x_unit must be 'rad' or 'V'")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "exposures", exposures)

    def __len__(self) -> int:
        return int(self.x.size)


@dataclass(frozen=True)
class VisibilityFit:
    """Fitted fringe count(theta) = offset + amplitude*cos(theta - phase0).

    ``v`` is amplitude/offset clamped to [0, 1]; ``clamped`` flags fits
    where noise pushed the raw ratio outside that range.  Amplitude and
    offset are in counts per second (exposure-normalized).
    """

    v: float
    phase0_rad: float
    amplitude: float
    offset: float
    residual_rms: float
    clamped: bool = False


def fit_visibility(scan: PhaseScan, volts_to_radians: float | None = None) -> VisibilityFit:
    """Closed-form least-squares fringe fit of a phase scan.

    Requires at least 8 samples spanning at least a full period (up to
    one grid step).  Counts are divided by per-sample exposure first, so
    ramps with uneven dwell times are valid.
    """
    if len(scan) < 8:
        raise FitError(f"need >= 8 samples, got {len(scan)}")
    if scan.x_unit == "V":
        if volts_to_radians is None:
            raise FitError("voltage scan needs a volts_to_radians coefficient")
        theta = scan.x * volts_to_radians
    else:
        theta = scan.x
    span = float(theta.max() - theta.min())
    if span < TWO_PI * (1.0 - 2.0 / len(scan)):
        raise FitError(f"scan spans {span:.3f} rad, less than one period")

    rate = scan.counts / scan.exposures
    design = np.column_stack([np.cos(theta), np.sin(theta), np.ones_like(theta)])
    try:
        coef, _, rank, _ = np.linalg.lstsq(design, rate, rcond=None)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - lstsq rarely throws
        raise FitError(f"fringe fit failed: {exc}") from exc
    residual = rate - design @ coef
    rms = float(np.sqrt(np.mean(residual**2)))
    if rank < 3:
        raise FitError(f"degenerate phase sampling (rank {rank}); residual rms {rms:.3g}")
    a, b, c = (float(v) for v in coef)
    amplitude = math.hypot(a, b)
    phase0 = math.atan2(b, a) % TWO_PI
    if c <= 0.0:
        # no positive mean rate to normalize against
        return VisibilityFit(0.0, phase0, amplitude, c, rms, clamped=True)
    raw_v = amplitude / c
    clamped = raw_v > 1.0
    return VisibilityFit(min(raw_v, 1.0), phase0, amplitude, c, rms, clamped=clamped)


def visibility_from_extrema(i_max: float, i_min: float) -> float:
    """(I_max - I_min) / (I_max + I_min) for one fringe cycle."""
    if i_max < i_min:
        raise ValueError("i_max must be >= i_min")
    if i_min < 0:
        raise ValueError("counts must be >= 0")
    if i_max == 0:
        raise ValueError("i_max must be > 0")
    return (i_max - i_min) / (i_max + i_min)


def _channel_deltas_with_times(
    stream: TagStream, channel: int, trigger_channel: int = TRIGGER_CHANNEL
) -> tuple[np.ndarray, np.ndarray]:
    """(absolute times, trigger-relative deltas) of one channel's tags."""
    ts = stream.timestamps
    trig = ts[stream.channels == trigger_channel]
    tgt = ts[stream.channels == channel]
    if trig.size == 0 or tgt.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    idx = np.searchsorted(trig, tgt, side="right") - 1
    ok = idx >= 0
    tgt = tgt[ok]
    return tgt, tgt - trig[idx[ok]]


def windowed_segment_counts(
    stream: TagStream,
    channel: int,
    segments: Sequence[PhaseSegment],
    window_center_ps: float,
    window_half_width_ps: float,
    trigger_channel: int = TRIGGER_CHANNEL,
) -> np.ndarray:
    """Post-selected tag counts of one channel, split by phase segment."""
    times, deltas = _channel_deltas_with_times(stream, channel, trigger_channel)
    lo = window_center_ps - window_half_width_ps
    hi = window_center_ps + window_half_width_ps
    inside = (deltas >= lo) & (deltas <= hi)
    times = times[inside]
    edges = np.array([seg.t_start_s for seg in segments] + [segments[-1].t_stop_s]) * 1e12
    seg_idx = np.searchsorted(edges, times, side="right") - 1
    valid = (seg_idx >= 0) & (seg_idx < len(segments))
    return np.bincount(seg_idx[valid], minlength=len(segments)).astype(np.int64)


def phase_scan_from_stream(
    stream: TagStream,
    channel: int,
    segments: Sequence[PhaseSegment],
    window_center_ps: float,
    window_half_width_ps: float,
    vary: str = "analyzer",
    trigger_channel: int = TRIGGER_CHANNEL,
) -> PhaseScan:
    """Build a PhaseScan from a tag stream and its phase program."""
    counts = windowed_segment_counts(
        stream, channel, segments, window_center_ps, window_half_width_ps, trigger_channel
    )
    if vary == "analyzer":
        x = np.array([seg.theta_b_rad for seg in segments])
    else:
        x = np.array([seg.theta_a_rad for seg in segments])
    exposures = np.array([seg.t_stop_s - seg.t_start_s for seg in segments])
    return PhaseScan(x=x, counts=counts, exposures=exposures)


@dataclass(frozen=True)
class AngleScanRow:
    """One rotation angle of an angle scan: intensity, fit, and data flags."""

    rotation_phi_deg: float
    mean_intensity_cps: float
    total_counts: int
    fit: VisibilityFit | None
    insufficient: bool
    fit_error: str | None = None


def angle_scan_summary(
    per_angle: Sequence[tuple[float, TagStream, Sequence[PhaseSegment]]],
    channel: int,
    window_center_ps: float,
    window_half_width_ps: float,
    min_counts: int = 100,
    vary: str = "analyzer",
) -> list[AngleScanRow]:
    """Post-select and fringe-fit each rotation angle of a surface scan.

    Angles whose post-selected total falls below ``min_counts`` are
    flagged insufficient instead of fitted; individual fit failures are
    recorded per angle without aborting the scan.
    """
    rows = []
    for phi, stream, segments in per_angle:
        scan = phase_scan_from_stream(
            stream, channel, segments, window_center_ps, window_half_width_ps, vary
        )
        total = int(scan.counts.sum())
        exposure = float(scan.exposures.sum())
        intensity = total / exposure if exposure > 0 else 0.0
        if total < min_counts:
            rows.append(AngleScanRow(phi, intensity, total, None, True))
            continue
        try:
            fit = fit_visibility(scan)
            rows.append(AngleScanRow(phi, intensity, total, fit, False))
        except FitError as exc:
            rows.append(AngleScanRow(phi, intensity, total, None, False, str(exc)))
    return rows


@dataclass(frozen=True)
class PixelPattern:
    """Per-pixel count response to the phase signature, peak-normalized.

    ``values`` are counts over one signature period divided by the
    per-pixel maximum, so they lie in [0, 1]; an all-zero response stays
    all-zero.
    """

    pixel: tuple[int, int]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


@dataclass(frozen=True)
class ReferencePattern:
    """Template response from a high-SNR calibration acquisition."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


def normalize_pattern(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    peak = counts.max() if counts.size else 0.0
    return counts / peak if peak > 0 else counts.copy()


def correlate_pattern(
    observed: Union[PixelPattern, np.ndarray],
    reference: Union[ReferencePattern, np.ndarray],
    literal_half_shift: bool = False,
) -> float:
    """Inner product of the re-centered observed and reference patterns.

    Default mode subtracts each sequence's mean, making the score exactly
    invariant under constant additive offsets; ``literal_half_shift``
    instead shifts both down by 0.5.  The score scale grows with pattern
    length, so thresholds are calibrated per run rather than universal.
    """
    obs = observed.values if isinstance(observed, PixelPattern) else np.asarray(observed, float)
    ref = (
        reference.values
        if isinstance(reference, ReferencePattern)
        else np.asarray(reference, float)
    )
    if obs.size != ref.size:
        raise ValueError(f"pattern length mismatch: {obs.size} != {ref.size}")
    if obs.size < 16:
        raise ValueError(f"patterns need >= 16 samples, got {obs.size}")
    if literal_half_shift:
        return float(np.dot(obs - 0.5, ref - 0.5))
    return float(np.dot(obs - obs.mean(), ref - ref.mean()))


def reference_self_score(reference: ReferencePattern, literal_half_shift: bool = False) -> float:
    return correlate_pattern(reference.values, reference, literal_half_shift)


def reconstruct_image(
    patterns: Sequence[PixelPattern],
    reference: ReferencePattern,
    threshold: float,
    excluded: Sequence[tuple[int, int]] = (),
    shape: tuple[int, int] = (8, 8),
    literal_half_shift: bool = False,
) -> np.ndarray:
    """Binary mask of pixels whose pattern correlation exceeds the threshold.

    Excluded pixels (trigger, known-defective) are forced to 0.
    """
    excluded_set = {tuple(p) for p in excluded}
    mask = np.zeros(shape, dtype=np.int64)
    for pat in patterns:
        row, col = pat.pixel
        if (row, col) in excluded_set:
            continue
        score = correlate_pattern(pat, reference, literal_half_shift)
        if score > threshold:
            mask[row - 1, col - 1] = 1
    return mask


def correlation_scores(
    patterns: Sequence[PixelPattern],
    reference: ReferencePattern,
    literal_half_shift: bool = False,
) -> dict[tuple[int, int], float]:
    return {
        tuple(pat.pixel): correlate_pattern(pat, reference, literal_half_shift)
        for pat in patterns
    }


@dataclass(frozen=True)
class DifferentialMeasurement:
    """Counts at the two analyzer outputs for one applied phase."""

    theta_rad: float
    p_plus: float
    p_minus: float

    def __post_init__(self):
        if self.p_plus < 0 or self.p_minus < 0:
            raise ValueError("counts must be >= 0")


def differential_signal(
    measurements: Sequence[DifferentialMeasurement],
) -> list[tuple[float, float]]:
    """Background-cancelled interference signal (theta, p_plus - p_minus).

    Ambient light that splits evenly between the two outputs cancels in
    expectation, leaving a signal proportional to v_mode * cos(theta).
    """
    return [(m.theta_rad, m.p_plus - m.p_minus) for m in measurements]


def check_matched_theta_grids(
    a: Sequence[DifferentialMeasurement], b: Sequence[DifferentialMeasurement]
) -> None:
    """Both ports must be acquired under an identical phase program."""
    if len(a) != len(b) or any(
        abs(x.theta_rad - y.theta_rad) > 1e-12 for x, y in zip(a, b)
    ):
        raise ValueError("theta grids of the two ports do not match")


def fit_differential_visibility(
    measurements: Sequence[DifferentialMeasurement],
    background_per_sample: float = 0.0,
) -> VisibilityFit:
    """Visibility from the two-output difference signal.

    Fits p_plus - p_minus to a cosine and normalizes its amplitude by the
    background-corrected mean total (p_plus + p_minus - background), the
    modulation-bearing signal.  ``background_per_sample`` is the expected
    ambient count per sample summed over both ports, e.g. estimated from
    an off-peak time window of the same streams.
    """
    if len(measurements) < 8:
        raise FitError(f"need >= 8 samples, got {len(measurements)}")
    theta = np.array([m.theta_rad for m in measurements])
    diff = np.array([m.p_plus - m.p_minus for m in measurements])
    total = np.array([m.p_plus + m.p_minus for m in measurements])
    span = float(theta.max() - theta.min())
    if span < TWO_PI * (1.0 - 2.0 / len(measurements)):
        raise FitError(f"scan spans {span:.3f} rad, less than one period")
    design = np.column_stack([np.cos(theta), np.sin(theta), np.ones_like(theta)])
    coef, _, rank, _ = np.linalg.lstsq(design, diff, rcond=None)
    if rank < 3:
        raise FitError("degenerate phase sampling in differential fit")
    a, b, c = (float(v) for v in coef)
    amplitude = math.hypot(a, b)
    phase0 = math.atan2(b, a) % TWO_PI
    residual = diff - design @ coef
    rms = float(np.sqrt(np.mean(residual**2)))
    signal_total = float(total.mean() - background_per_sample)
    if signal_total <= 0.0:
        return VisibilityFit(0.0, phase0, amplitude, signal_total, rms, clamped=True)
    raw_v = amplitude / signal_total
    clamped = raw_v > 1.0
    return VisibilityFit(min(raw_v, 1.0), phase0, amplitude, signal_total, rms, clamped=clamped)


# ---------------------------------------------------------------------------
# CSV / graymap I/O


def save_scan_csv(path: Union[str, Path], scan: PhaseScan) -> None:
    """One sample per line: phase_rad (or volts), count, exposure_s."""
    header = "phase_rad" if scan.x_unit == "rad" else "volts"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([header, "count", "exposure_s"])
        for x, c, e in zip(scan.x, scan.counts, scan.exposures):
            w.writerow([f"{x:.9g}", int(c), f"{e:.9g}"])


def load_scan_csv(path: Union[str, Path]) -> PhaseScan:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ValueError(f"{path}: empty scan file")
    header = rows[0]
    unit = "rad" if header and header[0] == "phase_rad" else "V"
    data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float)
    if data.size == 0:
        raise ValueError(f"{path}: scan file has no samples")
    return PhaseScan(x=data[:, 0], counts=data[:, 1], exposures=data[:, 2], x_unit=unit)


def save_pattern_csv(path: Union[str, Path], patterns: Sequence[PixelPattern]) -> None:
    """One row per pixel: row, col, then the normalized sample values."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        n = len(patterns[0].values) if patterns else 0
        w.writerow(["row", "col"] + [f"s{k}" for k in range(n)])
        for pat in patterns:
            w.writerow([pat.pixel[0], pat.pixel[1]] + [f"{v:.9g}" for v in pat.values])


def load_pattern_csv(path: Union[str, Path]) -> list[PixelPattern]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    out = []
    for row in rows[1:]:
        out.append(
            PixelPattern(
                pixel=(int(row[0]), int(row[1])),
                values=np.array([float(v) for v in row[2:]]),
            )
        )
    return out


def save_mask_csv(path: Union[str, Path], mask: np.ndarray) -> None:
    np.savetxt(path, np.asarray(mask, dtype=int), fmt="%d", delimiter=",")


def load_mask_csv(path: Union[str, Path]) -> np.ndarray:
    return np.loadtxt(path, dtype=int, delimiter=",").reshape(8, -1)


def save_mask_pgm(path: Union[str, Path], mask: np.ndarray) -> None:
    """Plain-text portable graymap (P2) for quick viewing."""
    mask = np.asarray(mask, dtype=int)
    rows, cols = mask.shape
    with open(path, "w") as f:
        f.write(f"P2\n{cols} {rows}\n1\n")
        for r in range(rows):
            f.write(" ".join(str(int(v)) for v in mask[r]) + "\n")
