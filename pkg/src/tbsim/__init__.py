"""tbsim: time-bin single-photon imaging simulator and analysis pipeline.

A Monte-Carlo model of a pulsed source sent through two unbalanced
Michelson interferometers over a rotating scattering surface onto an
8x8 time-tagged single-photon-detector array, plus the analysis chain:
trigger-synchronized histogramming, middle-peak post-selection, fringe
visibility fitting, pattern-correlation imaging, a two-output
differential measurement, and phase-encoded BB84 key distribution.
"""

from .analysis import (
    AngleScanRow,
    DifferentialMeasurement,
    FitError,
    PhaseScan,
    PixelPattern,
    ReferencePattern,
    VisibilityFit,
    angle_scan_summary,
    correlate_pattern,
    differential_signal,
    fit_differential_visibility,
    fit_visibility,
    phase_scan_from_stream,
    reconstruct_image,
    visibility_from_extrema,
)
from .config import (
    AcquisitionParams,
    AnalysisParams,
    ConfigError,
    ExperimentConfig,
    ImagingParams,
    QkdDriverParams,
    build_config,
    config_sha256,
    dump_config,
    load_config,
    save_config,
)
from .optics import (
    ArrivalOffsets,
    ModeOverlap,
    PeakProbabilities,
    TimeBinState,
    UMIConfig,
    arrival_offsets,
    peak_probabilities,
    prepare_timebin,
    virtual_mirror_displacement_mm,
    virtual_mirror_residual,
)
from .qkd import QkdParams, QkdSession, SiftResult, qber_vs_angle, run_session, sift
from .scatter import SurfaceConfig, collection_efficiency, incidence_angle_deg
from .sensor import (
    AcquisitionPlan,
    IlluminationMap,
    PhaseSegment,
    SensorConfig,
    illumination_from_mask,
    intensity_image,
    pixel_channel,
    ramp_program,
    simulate_acquisition,
    simulate_dual_port_acquisition,
    uniform_illumination,
)
from .tagstream import (
    Histogram,
    StreamOrderError,
    TagFormatError,
    TagRecord,
    TagStream,
    check_stream_invariants,
    decode,
    decode_array,
    encode,
    encode_array,
    iter_tag_blocks,
    post_select,
    read_tags,
    stream_stats,
    sync_histogram,
    trigger_deltas,
    write_tags,
)

__version__ = "0.1.0"
