"""Single structured configuration document for all experiment drivers.

The on-disk form is JSON with one object per subsystem; every leaf is
``{"value": ..., "note": "..."}`` where the note states whether the
default is a property of the modeled system ("system:") or an
implementer calibration ("model:").  Bare values are accepted on load.
Unknown sections or keys are rejected, and all physical ranges are
validated while the module dataclasses are built, so a loaded config is
usable as-is.  load -> dump -> load is the identity on the loaded
object.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Union

from .optics import ModeOverlap, UMIConfig
from .qkd import QkdParams
from .scatter import SurfaceConfig
from .sensor import SensorConfig


class ConfigError(ValueError):
    """Malformed, unknown, or out-of-range configuration input."""


@dataclass(frozen=True)
class AcquisitionParams:
    """Source and default phase-scan settings shared by the drivers."""

    pulse_rate_hz: float = 5e6
    pulse_width_sigma_ps: float = 127.4
    transit_offset_ps: float = 1500.0
    phase_points: int = 32
    exposure_per_point_s: float = 0.04
    photon_rate_per_pixel_cps: float = 1.7e6
    illuminated_rows: tuple[int, int] = (3, 6)
    illuminated_cols: tuple[int, int] = (3, 6)
    background_rate_cps: float = 0.0

    def __post_init__(self):
        if self.pulse_rate_hz <= 0:
            raise ConfigError("pulse_rate_hz must be > 0")
        if self.transit_offset_ps < 0:
            raise ConfigError("transit_offset_ps must be >= 0")
        if self.phase_points < 8:
            raise ConfigError("phase_points must be >= 8 for fringe fitting")
        if self.exposure_per_point_s <= 0:
            raise ConfigError("exposure_per_point_s must be > 0")
        if self.photon_rate_per_pixel_cps < 0 or self.background_rate_cps < 0:
            raise ConfigError("rates must be >= 0")
        object.__setattr__(self, "illuminated_rows", tuple(self.illuminated_rows))
        object.__setattr__(self, "illuminated_cols", tuple(self.illuminated_cols))


@dataclass(frozen=True)
class AnalysisParams:
    """Post-selection window and thresholds used by the analysis stage."""

    window_half_width_ps: float = 150.0
    angle_scan_min_counts: int = 5000
    correlation_threshold_fraction: float = 0.3
    literal_half_shift: bool = False

    def __post_init__(self):
        if self.window_half_width_ps <= 0:
            raise ConfigError("window_half_width_ps must be > 0")
        if not 0 < self.correlation_threshold_fraction < 1:
            raise ConfigError("correlation_threshold_fraction must be in (0, 1)")


@dataclass(frozen=True)
class ImagingParams:
    """Scenario settings for the contrast-enhancement imaging driver.

    The imaging gate is much wider than the fringe-analysis window:
    pattern correlation is immune to the flat background (and to the
    phase-flat outer peaks) the wide gate admits, and the extra counts
    stabilize the normalized patterns of dark pixels.
    """

    rotation_phi_deg: float = 40.0
    signature_points: int = 32
    exposure_per_point_s: float = 0.01
    window_half_width_ps: float = 2000.0
    signal_rate_high_cps: float = 2.0e6
    signal_rate_low_cps: float = 1.5e6
    lamp_base_cps: float = 3.6e5
    lamp_gradient_min: float = 0.7
    lamp_gradient_max: float = 2.0

    def __post_init__(self):
        if self.signature_points < 16:
            raise ConfigError("signature_points must be >= 16 for pattern correlation")
        if self.window_half_width_ps <= 0:
            raise ConfigError("window_half_width_ps must be > 0")
        if min(self.signal_rate_high_cps, self.signal_rate_low_cps, self.lamp_base_cps) < 0:
            raise ConfigError("rates must be >= 0")
        if self.lamp_gradient_min <= 0 or self.lamp_gradient_max < self.lamp_gradient_min:
            raise ConfigError("lamp gradient bounds must satisfy 0 < min <= max")


@dataclass(frozen=True)
class QkdDriverParams:
    """QKD session defaults for the key-exchange driver."""

    rotation_phi_deg: float = 20.0
    signal_mean_per_pulse: float = 0.7
    window_half_width_ps: float = 100.0
    port_dark_rate_cps: float = 2240.0
    port_background_rate_cps: float = 0.0
    min_sifted: int = 100
    qber_abort_threshold: float = 0.11

    def __post_init__(self):
        if self.window_half_width_ps <= 0:
            raise ConfigError("window_half_width_ps must be > 0")
        if self.signal_mean_per_pulse < 0:
            raise ConfigError("signal_mean_per_pulse must be >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    """Every subsystem's parameters in one validated object."""

    converter: UMIConfig = UMIConfig()
    analyzer: UMIConfig = UMIConfig()
    overlap: ModeOverlap = ModeOverlap()
    merge_tolerance_ps: float = 50.0
    volts_to_radians: float = 2.0 * math.pi / 10.0
    surface: SurfaceConfig = SurfaceConfig()
    sensor: SensorConfig = SensorConfig()
    acquisition: AcquisitionParams = AcquisitionParams()
    analysis: AnalysisParams = AnalysisParams()
    imaging: ImagingParams = ImagingParams()
    qkd: QkdDriverParams = QkdDriverParams()

    def qkd_params(self) -> QkdParams:
        """QKD session parameters composed with the shared source settings."""
        return QkdParams(
            signal_mean_per_pulse=self.qkd.signal_mean_per_pulse,
            window_half_width_ps=self.qkd.window_half_width_ps,
            port_dark_rate_cps=self.qkd.port_dark_rate_cps,
            port_background_rate_cps=self.qkd.port_background_rate_cps,
            pulse_width_sigma_ps=self.acquisition.pulse_width_sigma_ps,
            pulse_rate_hz=self.acquisition.pulse_rate_hz,
            min_sifted=self.qkd.min_sifted,
        )


# section -> key -> (note, getter path); drives both dump and strict load
_NOTES: dict[str, dict[str, str]] = {
    "optics": {
        "converter_delay_ps": "system: nominal time-bin separation of the pulse pairs",
        "analyzer_delay_ps": "system: matched to the converter delay for interference",
        "converter_phase_rad": "system: static converter piezo set point",
        "analyzer_phase_rad": "system: static analyzer piezo set point",
        "splitter_ratio": "system: nominal 50/50 splitters",
        "long_arm_mm": "model: chosen so the glass compensation leaves ~zero spatial residual",
        "short_arm_mm": "model: reference arm length for the spatial-balance check",
        "glass_length_mm": "system: compensation cube length",
        "glass_index": "system: compensation cube index; 1.4825 is also quoted for this cube, the lower value is adopted",
        "v_mode": "system: channel+alignment interference quality (configured, not derived)",
        "merge_tolerance_ps": "model: delay mismatch below which the overlap peaks merge",
        "volts_to_radians": "model: linear actuator coefficient, one period per 10 V",
    },
    "scatter": {
        "base_incidence_deg": "system: incidence angle at zero rotation",
        "rotation_phi_deg": "system: surface rotation; positive increases incidence",
        "specular_strength": "model: calibrated so an angle scan spans >10x in intensity",
        "specular_width_deg": "model: width of the specular lobe",
        "diffuse_albedo": "model: calibrated diffuse floor",
        "aperture_factor": "model: collection-aperture scale of the diffuse term",
    },
    "sensor": {
        "rows": "system: detector array geometry",
        "cols": "system: detector array geometry",
        "pitch_um": "system: pixel pitch",
        "active_diameter_um": "system: active area diameter",
        "dark_rate_cps": "system: mean per-pixel dark rate",
        "dead_time_ns": "system: per-pixel dead time",
        "jitter_sigma_ps": "system: 120 ps FWHM timing spread as a Gaussian sigma",
        "efficiency": "model: free detection-efficiency parameter",
        "trigger_pixel": "system: pixel sacrificed as the trigger input",
        "defective_pixels": "system: pixels with strongly elevated dark rate",
        "defective_dark_factor": "model: dark-rate multiplier of defective pixels",
        "trigger_jitter_sigma_ps": "model: trigger channel jitter (clean by default)",
    },
    "acquisition": {
        "pulse_rate_hz": "system: source repetition rate",
        "pulse_width_sigma_ps": "system: 300 ps FWHM source pulse as a Gaussian sigma",
        "transit_offset_ps": "model: trigger-to-first-peak transit; keeps jitter tails inside one period",
        "phase_points": "model: samples per phase-scan period",
        "exposure_per_point_s": "model: dwell time per phase sample",
        "photon_rate_per_pixel_cps": "model: illumination of a bright pixel at unit collection",
        "illuminated_rows": "model: centrally illuminated row range (1-based, inclusive)",
        "illuminated_cols": "model: centrally illuminated column range (1-based, inclusive)",
        "background_rate_cps": "model: ambient rate per pixel during plain scans",
    },
    "analysis": {
        "window_half_width_ps": "model: middle-peak post-selection half width; narrow enough that outer-peak leakage cannot dilute the fitted fringe",
        "angle_scan_min_counts": "model: calibrated detectability floor of the angle-scan driver",
        "correlation_threshold_fraction": "model: image threshold as a fraction of the reference self-score",
        "literal_half_shift": "model: compatibility mode shifting patterns by 0.5 instead of their mean",
    },
    "imaging": {
        "rotation_phi_deg": "system: surface rotation used for diffuse-only imaging",
        "signature_points": "model: samples per phase-signature period",
        "exposure_per_point_s": "model: dwell time per signature sample",
        "window_half_width_ps": "model: wide correlation gate; flat light it admits cancels in the mean-subtracted score",
        "signal_rate_high_cps": "model: bright-pixel rate of the high-SNR calibration",
        "signal_rate_low_cps": "model: bright-pixel rate of the low-light scenario",
        "lamp_base_cps": "model: mean ambient rate of the lamp scenario",
        "lamp_gradient_min": "model: lamp nonuniformity lower factor",
        "lamp_gradient_max": "model: lamp nonuniformity upper factor",
    },
    "qkd": {
        "rotation_phi_deg": "system: surface rotation ensuring scattered-only photons",
        "signal_mean_per_pulse": "model: mean photon number per pulse at unit collection",
        "window_half_width_ps": "model: narrow key window keeping outer-peak leakage below statistical error",
        "port_dark_rate_cps": "model: aggregate dark rate of all pixels behind one output",
        "port_background_rate_cps": "model: ambient rate per output port",
        "min_sifted": "model: floor below which a session is flagged insufficient",
        "qber_abort_threshold": "model: QBER above which the session is flagged insecure",
    },
}


def _section_values(cfg: ExperimentConfig) -> dict[str, dict[str, Any]]:
    return {
        "optics": {
            "converter_delay_ps": cfg.converter.path_delay_ps,
            "analyzer_delay_ps": cfg.analyzer.path_delay_ps,
            "converter_phase_rad": cfg.converter.phase_rad,
            "analyzer_phase_rad": cfg.analyzer.phase_rad,
            "splitter_ratio": cfg.converter.splitter_ratio,
            "long_arm_mm": cfg.converter.long_arm_mm,
            "short_arm_mm": cfg.converter.short_arm_mm,
            "glass_length_mm": cfg.converter.glass_length_mm,
            "glass_index": cfg.converter.glass_index,
            "v_mode": cfg.overlap.v_mode,
            "merge_tolerance_ps": cfg.merge_tolerance_ps,
            "volts_to_radians": cfg.volts_to_radians,
        },
        "scatter": {
            "base_incidence_deg": cfg.surface.base_incidence_deg,
            "rotation_phi_deg": cfg.surface.rotation_phi_deg,
            "specular_strength": cfg.surface.specular_strength,
            "specular_width_deg": cfg.surface.specular_width_deg,
            "diffuse_albedo": cfg.surface.diffuse_albedo,
            "aperture_factor": cfg.surface.aperture_factor,
        },
        "sensor": {
            "rows": cfg.sensor.rows,
            "cols": cfg.sensor.cols,
            "pitch_um": cfg.sensor.pitch_um,
            "active_diameter_um": cfg.sensor.active_diameter_um,
            "dark_rate_cps": cfg.sensor.dark_rate_cps,
            "dead_time_ns": cfg.sensor.dead_time_ns,
            "jitter_sigma_ps": cfg.sensor.jitter_sigma_ps,
            "efficiency": cfg.sensor.efficiency,
            "trigger_pixel": list(cfg.sensor.trigger_pixel),
            "defective_pixels": [list(p) for p in cfg.sensor.defective_pixels],
            "defective_dark_factor": cfg.sensor.defective_dark_factor,
            "trigger_jitter_sigma_ps": cfg.sensor.trigger_jitter_sigma_ps,
        },
        "acquisition": {
            "pulse_rate_hz": cfg.acquisition.pulse_rate_hz,
            "pulse_width_sigma_ps": cfg.acquisition.pulse_width_sigma_ps,
            "transit_offset_ps": cfg.acquisition.transit_offset_ps,
            "phase_points": cfg.acquisition.phase_points,
            "exposure_per_point_s": cfg.acquisition.exposure_per_point_s,
            "photon_rate_per_pixel_cps": cfg.acquisition.photon_rate_per_pixel_cps,
            "illuminated_rows": list(cfg.acquisition.illuminated_rows),
            "illuminated_cols": list(cfg.acquisition.illuminated_cols),
            "background_rate_cps": cfg.acquisition.background_rate_cps,
        },
        "analysis": {
            "window_half_width_ps": cfg.analysis.window_half_width_ps,
            "angle_scan_min_counts": cfg.analysis.angle_scan_min_counts,
            "correlation_threshold_fraction": cfg.analysis.correlation_threshold_fraction,
            "literal_half_shift": cfg.analysis.literal_half_shift,
        },
        "imaging": {
            "rotation_phi_deg": cfg.imaging.rotation_phi_deg,
            "signature_points": cfg.imaging.signature_points,
            "exposure_per_point_s": cfg.imaging.exposure_per_point_s,
            "window_half_width_ps": cfg.imaging.window_half_width_ps,
            "signal_rate_high_cps": cfg.imaging.signal_rate_high_cps,
            "signal_rate_low_cps": cfg.imaging.signal_rate_low_cps,
            "lamp_base_cps": cfg.imaging.lamp_base_cps,
            "lamp_gradient_min": cfg.imaging.lamp_gradient_min,
            "lamp_gradient_max": cfg.imaging.lamp_gradient_max,
        },
        "qkd": {
            "rotation_phi_deg": cfg.qkd.rotation_phi_deg,
            "signal_mean_per_pulse": cfg.qkd.signal_mean_per_pulse,
            "window_half_width_ps": cfg.qkd.window_half_width_ps,
            "port_dark_rate_cps": cfg.qkd.port_dark_rate_cps,
            "port_background_rate_cps": cfg.qkd.port_background_rate_cps,
            "min_sifted": cfg.qkd.min_sifted,
            "qber_abort_threshold": cfg.qkd.qber_abort_threshold,
        },
    }


def dump_config(cfg: ExperimentConfig) -> dict:
    """Config as a JSON-ready document with per-key provenance notes."""
    doc: dict[str, Any] = {}
    for section, values in _section_values(cfg).items():
        doc[section] = {
            key: {"value": value, "note": _NOTES[section].get(key, "")}
            for key, value in values.items()
        }
    return doc


def _unwrap(section: str, key: str, leaf: Any) -> Any:
    if isinstance(leaf, dict):
        unknown = set(leaf) - {"value", "note"}
        if unknown:
            raise ConfigError(f"{section}.{key}: unknown fields {sorted(unknown)}")
        if "value" not in leaf:
            raise ConfigError(f"{section}.{key}: missing 'value'")
        return leaf["value"]
    return leaf


def build_config(doc: dict) -> ExperimentConfig:
    """Validate a config document and build the typed configuration."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - set(_NOTES)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    values: dict[str, dict[str, Any]] = {}
    for section, known_keys in _NOTES.items():
        raw = doc.get(section, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"section '{section}' must be an object")
        unknown_keys = set(raw) - set(known_keys)
        if unknown_keys:
            raise ConfigError(f"unknown keys in '{section}': {sorted(unknown_keys)}")
        values[section] = {k: _unwrap(section, k, v) for k, v in raw.items()}

    defaults = _section_values(ExperimentConfig())
    merged = {
        section: {**defaults[section], **values.get(section, {})} for section in _NOTES
    }
    o, sc, se = merged["optics"], merged["scatter"], merged["sensor"]
    acq, an, im, qk = (
        merged["acquisition"],
        merged["analysis"],
        merged["imaging"],
        merged["qkd"],
    )
    try:
        converter = UMIConfig(
            path_delay_ps=o["converter_delay_ps"],
            phase_rad=o["converter_phase_rad"],
            splitter_ratio=o["splitter_ratio"],
            long_arm_mm=o["long_arm_mm"],
            short_arm_mm=o["short_arm_mm"],
            glass_length_mm=o["glass_length_mm"],
            glass_index=o["glass_index"],
        )
        analyzer = UMIConfig(
            path_delay_ps=o["analyzer_delay_ps"],
            phase_rad=o["analyzer_phase_rad"],
            splitter_ratio=o["splitter_ratio"],
            long_arm_mm=o["long_arm_mm"],
            short_arm_mm=o["short_arm_mm"],
            glass_length_mm=o["glass_length_mm"],
            glass_index=o["glass_index"],
        )
        return ExperimentConfig(
            converter=converter,
            analyzer=analyzer,
            overlap=ModeOverlap(v_mode=o["v_mode"]),
            merge_tolerance_ps=o["merge_tolerance_ps"],
            volts_to_radians=o["volts_to_radians"],
            surface=SurfaceConfig(
                base_incidence_deg=sc["base_incidence_deg"],
                rotation_phi_deg=sc["rotation_phi_deg"],
                specular_strength=sc["specular_strength"],
                specular_width_deg=sc["specular_width_deg"],
                diffuse_albedo=sc["diffuse_albedo"],
                aperture_factor=sc["aperture_factor"],
            ),
            sensor=SensorConfig(
                rows=se["rows"],
                cols=se["cols"],
                pitch_um=se["pitch_um"],
                active_diameter_um=se["active_diameter_um"],
                dark_rate_cps=se["dark_rate_cps"],
                dead_time_ns=se["dead_time_ns"],
                jitter_sigma_ps=se["jitter_sigma_ps"],
                efficiency=se["efficiency"],
                trigger_pixel=tuple(se["trigger_pixel"]),
                defective_pixels=tuple(tuple(p) for p in se["defective_pixels"]),
                defective_dark_factor=se["defective_dark_factor"],
                trigger_jitter_sigma_ps=se["trigger_jitter_sigma_ps"],
            ),
            acquisition=AcquisitionParams(**acq),
            analysis=AnalysisParams(**an),
            imaging=ImagingParams(**im),
            qkd=QkdDriverParams(**qk),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Union[str, Path, None]) -> ExperimentConfig:
    """Load and validate a config file; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return build_config(doc)


def save_config(path: Union[str, Path], cfg: ExperimentConfig) -> None:
    with open(path, "w") as f:
        json.dump(dump_config(cfg), f, indent=2, sort_keys=True)
        f.write("\n")


def config_sha256(cfg: ExperimentConfig) -> str:
    """Digest of the canonical config dump, for run manifests."""
    canon = json.dumps(dump_config(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
