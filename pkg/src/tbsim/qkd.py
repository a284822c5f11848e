"""Phase-encoded BB84 over the simulated scattering channel.

Alice encodes random bits in the converter phase (basis 1: {0, pi},
basis 2: {pi/2, 3*pi/2}); Bob selects his basis with the analyzer phase
(0 or pi/2) and reads the middle-peak detections at both analyzer
outputs.  Clicks landing outside the middle-peak window (SS/LL arrivals)
and empty pulses are inconclusive; double clicks are resolved by a
random bit and tallied.  Sifting keeps matched-basis conclusive pulses.

The receiver is modeled at port granularity: the detector array behind
each output is lumped into one effective counter with the aggregate
dark rate, which preserves the per-pulse outcome statistics the
protocol consumes.  A visibility-limited channel yields
QBER = (1 - v_mode) / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .optics import ModeOverlap, UMIConfig, arrival_offsets
from .scatter import SurfaceConfig, collection_efficiency
from .sensor import SensorConfig

PS_PER_S = 1e12

NO_CLICK = 0
PORT_PLUS = 1
PORT_MINUS = 2
MULTI = 3


@dataclass(frozen=True)
class QkdParams:
    """Receiver and post-selection settings for a key exchange session.

    ``signal_mean_per_pulse`` is the mean photon number per pulse
    reaching the analyzer at unit collection efficiency; detector and
    collection efficiency are applied on top.  The middle-peak window is
    kept narrow so arrival-time leakage from the outer peaks stays far
    below the statistical error of the session.
    """

    signal_mean_per_pulse: float = 0.7
    window_half_width_ps: float = 100.0
    port_dark_rate_cps: float = 64 * 35.0
    port_background_rate_cps: float = 0.0
    pulse_width_sigma_ps: float = 127.4
    pulse_rate_hz: float = 5e6
    min_sifted: int = 100

    def __post_init__(self):
        if self.signal_mean_per_pulse < 0:
            raise ValueError("signal_mean_per_pulse must be >= 0")
        if self.window_half_width_ps <= 0:
            raise ValueError("window_half_width_ps must be > 0")


@dataclass(frozen=True)
class QkdSession:
    """Raw per-pulse record of one BB84 exchange."""

    n_pulses: int
    alice_bits: np.ndarray
    alice_bases: np.ndarray
    bob_bases: np.ndarray
    detections: np.ndarray  # NO_CLICK / PORT_PLUS / PORT_MINUS / MULTI
    bob_bits: np.ndarray  # -1 where inconclusive
    seed: int
    n_double_clicks: int
    n_signal_window_clicks: int


@dataclass(frozen=True)
class SiftResult:
    """Sifted key material and its error statistics."""

    sifted_bits_alice: np.ndarray
    sifted_bits_bob: np.ndarray
    sifted_count: int
    qber: float | None
    raw_click_rate: float
    n_conclusive: int
    n_multi: int


def alice_phase_rad(bit: int, basis: int) -> float:
    """BB84 converter phase: basis 1 uses {0, pi}, basis 2 {pi/2, 3pi/2}."""
    return bit * math.pi + basis * (math.pi / 2.0)


def bob_phase_rad(basis: int) -> float:
    """Analyzer phase selecting Bob's measurement basis: 0 or pi/2."""
    return basis * (math.pi / 2.0)


def run_session(
    n_pulses: int,
    converter: UMIConfig,
    analyzer: UMIConfig,
    overlap: ModeOverlap,
    surface: SurfaceConfig,
    sensor: SensorConfig,
    params: QkdParams,
    seed: int,
) -> QkdSession:
    """Simulate one BB84 session pulse by pulse through the full chain.

    Each pulse draws Alice's bit/basis and Bob's basis, propagates the
    photon over the scattering surface and the four-path analyzer, and
    classifies the arrival against the middle-peak window including
    timing spread, outer-peak leakage, dark and ambient counts.
    """
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    rng = np.random.default_rng([seed, 5])

    alice_bits = rng.integers(0, 2, n_pulses, dtype=np.int8)
    alice_bases = rng.integers(0, 2, n_pulses, dtype=np.int8)
    bob_bases = rng.integers(0, 2, n_pulses, dtype=np.int8)

    coll = collection_efficiency(surface)
    p_click = min(params.signal_mean_per_pulse * coll * sensor.efficiency, 1.0)

    rho_c = converter.splitter_ratio
    rho_a = analyzer.splitter_ratio
    q_ss = rho_c * rho_a
    q_ll = (1.0 - rho_c) * (1.0 - rho_a)
    q_sl = rho_c * (1.0 - rho_a)
    q_ls = (1.0 - rho_c) * rho_a
    mid_total = q_sl + q_ls
    mid_cross = 2.0 * overlap.v_mode * math.sqrt(q_sl * q_ls)

    offs = arrival_offsets(converter, analyzer)
    if not offs.interference:
        raise ValueError("interferometer delays are not matched; no key exchange possible")
    t_ss, t_mid, t_ll = offs.offsets_ps
    sigma = math.hypot(params.pulse_width_sigma_ps, sensor.jitter_sigma_ps)
    w = params.window_half_width_ps

    # photon fate per pulse; mid-port boundary is the only phase-dependent edge
    u = rng.random(n_pulses)
    e_ss_p = p_click * 0.5 * q_ss
    e_ll_p = e_ss_p + p_click * 0.5 * q_ll
    e_ss_m = e_ll_p + p_click * 0.5 * q_ss
    e_ll_m = e_ss_m + p_click * 0.5 * q_ll
    e_mid = e_ll_m + p_click * mid_total

    ss_any = u < e_ll_p
    ll_sel = (u >= e_ss_p) & ss_any
    ss_plus = u < e_ss_p
    ll_plus = ll_sel
    outer_minus = (u >= e_ll_p) & (u < e_ll_m)
    ss_minus = outer_minus & (u < e_ss_m)
    ll_minus = outer_minus & (u >= e_ss_m)
    mid_sel = (u >= e_ll_m) & (u < e_mid)

    click_plus = np.zeros(n_pulses, dtype=bool)
    click_minus = np.zeros(n_pulses, dtype=bool)
    n_signal_window = 0

    def _outer_leak(mask: np.ndarray, t_peak: float, out: np.ndarray) -> int:
        """Outer-peak photons whose timing draw falls inside the mid window."""
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            return 0
        t_rel = t_peak + (rng.normal(0.0, sigma, idx.size) if sigma > 0 else 0.0)
        inside = np.abs(t_rel - t_mid) <= w
        out[idx[inside]] = True
        return int(inside.sum())

    n_signal_window += _outer_leak(ss_plus, t_ss, click_plus)
    n_signal_window += _outer_leak(ll_plus, t_ll, click_plus)
    n_signal_window += _outer_leak(ss_minus, t_ss, click_minus)
    n_signal_window += _outer_leak(ll_minus, t_ll, click_minus)

    mid_idx = np.flatnonzero(mid_sel)
    if mid_idx.size:
        delta = (
            alice_bits[mid_idx] * math.pi
            + alice_bases[mid_idx] * (math.pi / 2.0)
            + converter.phase_rad
            - bob_bases[mid_idx] * (math.pi / 2.0)
            - analyzer.phase_rad
        )
        w_plus = p_click * 0.5 * (mid_total + mid_cross * np.cos(delta))
        to_plus = u[mid_idx] < (e_ll_m + w_plus)
        if sigma > 0:
            in_window = np.abs(rng.normal(0.0, sigma, mid_idx.size)) <= w
        else:
            in_window = np.ones(mid_idx.size, dtype=bool)
        click_plus[mid_idx[to_plus & in_window]] = True
        click_minus[mid_idx[~to_plus & in_window]] = True
        n_signal_window += int(in_window.sum())

    # ambient + dark counts landing inside the mid window, per port
    p_noise = (params.port_dark_rate_cps + params.port_background_rate_cps) * (
        2.0 * w / PS_PER_S
    )
    for port_clicks in (click_plus, click_minus):
        n_noise = rng.poisson(p_noise * n_pulses)
        if n_noise:
            port_clicks[rng.integers(0, n_pulses, n_noise)] = True

    detections = np.zeros(n_pulses, dtype=np.int8)
    detections[click_plus] = PORT_PLUS
    detections[click_minus] = PORT_MINUS
    multi = click_plus & click_minus
    detections[multi] = MULTI
    n_multi = int(multi.sum())

    bob_bits = np.full(n_pulses, -1, dtype=np.int8)
    bob_bits[detections == PORT_PLUS] = 0
    bob_bits[detections == PORT_MINUS] = 1
    if n_multi:
        bob_bits[multi] = rng.integers(0, 2, n_multi, dtype=np.int8)

    return QkdSession(
        n_pulses=n_pulses,
        alice_bits=alice_bits,
        alice_bases=alice_bases,
        bob_bases=bob_bases,
        detections=detections,
        bob_bits=bob_bits,
        seed=seed,
        n_double_clicks=n_multi,
        n_signal_window_clicks=n_signal_window,
    )


def sift(session: QkdSession) -> SiftResult:
    """Keep matched-basis conclusive pulses; QBER is their error fraction."""
    conclusive = session.detections != NO_CLICK
    matched = session.alice_bases == session.bob_bases
    keep = conclusive & matched
    alice = session.alice_bits[keep]
    bob = session.bob_bits[keep]
    count = int(keep.sum())
    qber = float(np.mean(alice != bob)) if count else None
    return SiftResult(
        sifted_bits_alice=alice,
        sifted_bits_bob=bob,
        sifted_count=count,
        qber=qber,
        raw_click_rate=float(conclusive.mean()),
        n_conclusive=int(conclusive.sum()),
        n_multi=session.n_double_clicks,
    )


@dataclass(frozen=True)
class QberRow:
    """One surface rotation angle of a QBER scan."""

    rotation_phi_deg: float
    sifted_count: int
    qber: float | None
    raw_click_rate: float
    insufficient: bool


def qber_vs_angle(
    angles_deg: list[float],
    n_pulses: int,
    converter: UMIConfig,
    analyzer: UMIConfig,
    overlap: ModeOverlap,
    surface: SurfaceConfig,
    sensor: SensorConfig,
    params: QkdParams,
    seed: int,
) -> list[QberRow]:
    """Run one session per surface rotation angle; flag starved angles."""
    import dataclasses

    rows = []
    for idx, phi in enumerate(angles_deg):
        cfg = dataclasses.replace(surface, rotation_phi_deg=phi)
        session = run_session(
            n_pulses, converter, analyzer, overlap, cfg, sensor, params, seed + idx
        )
        result = sift(session)
        rows.append(
            QberRow(
                rotation_phi_deg=phi,
                sifted_count=result.sifted_count,
                qber=result.qber,
                raw_click_rate=result.raw_click_rate,
                insufficient=result.sifted_count < params.min_sifted,
            )
        )
    return rows


def session_report(session: QkdSession, result: SiftResult, qber_abort: float = 0.11) -> dict:
    """JSON-ready session summary: counts, QBER, sifted rate, basis tallies."""
    per_basis = {}
    for basis, name in ((0, "basis1"), (1, "basis2")):
        keep = (
            (session.alice_bases == basis)
            & (session.bob_bases == basis)
            & (session.detections != NO_CLICK)
        )
        n = int(keep.sum())
        errs = int((session.alice_bits[keep] != session.bob_bits[keep]).sum())
        per_basis[name] = {
            "sifted": n,
            "errors": errs,
            "qber": errs / n if n else None,
        }
    return {
        "n_pulses": session.n_pulses,
        "seed": session.seed,
        "conclusive_clicks": result.n_conclusive,
        "double_clicks": result.n_multi,
        "raw_click_rate": result.raw_click_rate,
        "sifted_count": result.sifted_count,
        "sifted_rate_per_pulse": result.sifted_count / session.n_pulses,
        "qber": result.qber,
        "insecure": result.qber is not None and result.qber > qber_abort,
        "per_basis": per_basis,
    }
