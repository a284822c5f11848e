"""Two-interferometer time-bin chain.

Models the converter (time-bin state preparation), the analyzer
(four-path recombination with partial mode overlap), the arrival-time
structure of the three detection peaks, and the glass-cube check that
balances each interferometer in the spatial domain.

All phase arithmetic is done on plain floats; every function here is
pure, so the module is safe to call from any number of workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class TimeBinState:
    """Early/late single-photon superposition leaving the converter.

    ``amplitude_split`` is the probability weight of the early bin;
    ``phase_theta_a`` is the relative phase of the late bin, stored
    reduced to [0, 2*pi).
    """

    phase_theta_a: float
    amplitude_split: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.amplitude_split <= 1.0:
            raise ValueError(f"amplitude_split must be in [0, 1], got {self.amplitude_split}")
        object.__setattr__(self, "phase_theta_a", self.phase_theta_a % TWO_PI)


@dataclass(frozen=True)
class UMIConfig:
    """One unbalanced Michelson interferometer.

    ``path_delay_ps`` is the long-minus-short arrival-time difference.
    ``phase_rad`` is the piezo-set phase of this interferometer.  The arm
    lengths and the glass block enter only the spatial-balance check
    (:func:`virtual_mirror_residual`); the temporal delay is configured
    directly because it is the measured quantity.
    """

    path_delay_ps: float = 570.0
    phase_rad: float = 0.0
    splitter_ratio: float = 0.5
    long_arm_mm: float = 86.7605
    short_arm_mm: float = 50.0
    glass_length_mm: float = 118.0
    glass_index: float = 1.4525

    def __post_init__(self):
        if self.path_delay_ps <= 0.0:
            raise ValueError(f"path_delay_ps must be > 0, got {self.path_delay_ps}")
        if not 0.0 < self.splitter_ratio < 1.0:
            raise ValueError(f"splitter_ratio must be in (0, 1), got {self.splitter_ratio}")
        if self.long_arm_mm < 0.0 or self.short_arm_mm < 0.0 or self.glass_length_mm < 0.0:
            raise ValueError("arm and glass lengths must be non-negative")


@dataclass(frozen=True)
class ModeOverlap:
    """Intrinsic interference quality of channel plus alignment.

    ``v_mode`` multiplies the coherent cross term of the middle peak; it
    is a configured property of the channel, not derived from wave
    optics.
    """

    v_mode: float = 0.95

    def __post_init__(self):
        if not 0.0 <= self.v_mode <= 1.0:
            raise ValueError(f"v_mode must be in [0, 1], got {self.v_mode}")


@dataclass(frozen=True)
class PeakProbabilities:
    """Four-outcome accounting of one photon through both interferometers.

    ``p_ss`` and ``p_ll`` are path probabilities summed over the two
    analyzer output ports (they carry no interference, so they split
    50/50 between ports).  ``p_mid_monitored`` / ``p_mid_other`` are the
    port-resolved overlap-peak probabilities.  The four values sum to 1
    for lossless splitters.
    """

    p_ss: float
    p_mid_monitored: float
    p_mid_other: float
    p_ll: float

    def total(self) -> float:
        return self.p_ss + self.p_mid_monitored + self.p_mid_other + self.p_ll

    def port_weights(self, port: int = +1) -> tuple[float, float, float]:
        """Per-peak detection probabilities seen by a camera on one port.

        The non-interfering peaks deliver half of their path probability
        to each port; the middle peak is already port-resolved.
        """
        mid = self.p_mid_monitored if port >= 0 else self.p_mid_other
        return (0.5 * self.p_ss, mid, 0.5 * self.p_ll)


@dataclass(frozen=True)
class ArrivalOffsets:
    """Peak arrival times relative to the shortest (SS) path."""

    offsets_ps: tuple[float, ...]
    interference: bool


def prepare_timebin(theta_a: float, converter: UMIConfig) -> TimeBinState:
    """Prepare an early/late superposition with relative phase ``theta_a``.

    The early-bin weight equals the converter splitter ratio; the phase
    is reduced modulo 2*pi.
    """
    return TimeBinState(phase_theta_a=theta_a, amplitude_split=converter.splitter_ratio)


def peak_probabilities(
    state: TimeBinState, analyzer: UMIConfig, overlap: ModeOverlap
) -> PeakProbabilities:
    """Four-path detection probabilities after the analyzer.

    For 50/50 splitters this reduces to p_ss = p_ll = 1/4 and middle-peak
    port probabilities (1 +/- v_mode * cos(theta_a - theta_b)) / 4.  The
    general form keeps unit total for arbitrary splitter ratios.
    """
    rho_c = state.amplitude_split
    rho_a = analyzer.splitter_ratio
    p_ss = rho_c * rho_a
    p_ll = (1.0 - rho_c) * (1.0 - rho_a)
    p_sl = rho_c * (1.0 - rho_a)
    p_ls = (1.0 - rho_c) * rho_a
    cross = (
        2.0
        * overlap.v_mode
        * math.sqrt(p_sl * p_ls)
        * math.cos(state.phase_theta_a - analyzer.phase_rad)
    )
    return PeakProbabilities(
        p_ss=p_ss,
        p_mid_monitored=0.5 * (p_sl + p_ls + cross),
        p_mid_other=0.5 * (p_sl + p_ls - cross),
        p_ll=p_ll,
    )


def arrival_offsets(
    converter: UMIConfig, analyzer: UMIConfig, merge_tolerance_ps: float = 50.0
) -> ArrivalOffsets:
    """Arrival-time offsets of the detection peaks, relative to SS.

    When the two path delays match within ``merge_tolerance_ps`` the SL
    and LS paths are indistinguishable and merge into a middle peak at
    the mean delay.  Otherwise four distinct peaks are returned and the
    no-interference condition is flagged.
    """
    d_c = converter.path_delay_ps
    d_a = analyzer.path_delay_ps
    if abs(d_c - d_a) <= merge_tolerance_ps:
        return ArrivalOffsets((0.0, 0.5 * (d_c + d_a), d_c + d_a), True)
    return ArrivalOffsets(tuple(sorted({0.0, d_a, d_c, d_c + d_a})), False)


def virtual_mirror_displacement_mm(glass_length_mm: float, glass_index: float) -> float:
    """Longitudinal image shift of a mirror behind a glass block.

    A block of length L and index n pulls the mirror image toward the
    splitter by L * (1 - 1/n).
    """
    if glass_index <= 1.0:
        raise ValueError(f"glass_index must be > 1, got {glass_index}")
    return glass_length_mm * (1.0 - 1.0 / glass_index)


def virtual_mirror_residual(umi: UMIConfig) -> float:
    """Spatial-domain arm imbalance left after the glass compensation.

    Zero residual means the virtual long-arm mirror coincides with the
    short-arm mirror, i.e. the interferometer is balanced in the spatial
    domain although unbalanced in time.
    """
    shift = virtual_mirror_displacement_mm(umi.glass_length_mm, umi.glass_index)
    return abs(umi.short_arm_mm - (umi.long_arm_mm - shift))
