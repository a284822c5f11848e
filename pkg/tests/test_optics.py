import math

import numpy as np
import pytest

from tbsim.optics import (
    ModeOverlap,
    TimeBinState,
    UMIConfig,
    arrival_offsets,
    peak_probabilities,
    prepare_timebin,
    virtual_mirror_displacement_mm,
    virtual_mirror_residual,
)

TWO_PI = 2.0 * math.pi


def enumerate_peak_probabilities(theta_a, theta_b, v, rho_c=0.5, rho_a=0.5):
    """Independent oracle: complex path amplitudes through two splitters.

    The converter splits the photon into early/late amplitudes, the
    analyzer into short/long; the overlapping SL and LS paths recombine
    at the final 50/50 combiner into the two output ports.  Partial mode
    overlap v mixes the coherent recombination with an incoherent 50/50
    port split.
    """
    a_early = math.sqrt(rho_c)
    a_late = math.sqrt(1.0 - rho_c) * np.exp(1j * theta_a)
    b_short = math.sqrt(rho_a)
    b_long = math.sqrt(1.0 - rho_a) * np.exp(1j * theta_b)

    amp_sl = a_early * b_long
    amp_ls = a_late * b_short
    coh_plus = abs(amp_sl + amp_ls) ** 2 / 2.0
    coh_minus = abs(amp_sl - amp_ls) ** 2 / 2.0
    incoh = (abs(amp_sl) ** 2 + abs(amp_ls) ** 2) / 2.0
    return (
        abs(a_early * b_short) ** 2,
        v * coh_plus + (1.0 - v) * incoh,
        v * coh_minus + (1.0 - v) * incoh,
        abs(a_late * b_long) ** 2,
    )


def _probs(theta_a, theta_b, v, rho_c=0.5, rho_a=0.5):
    state = TimeBinState(phase_theta_a=theta_a, amplitude_split=rho_c)
    analyzer = UMIConfig(phase_rad=theta_b, splitter_ratio=rho_a)
    return peak_probabilities(state, analyzer, ModeOverlap(v_mode=v))


class TestPrepareTimebin:
    def test_identity_case(self):
        state = prepare_timebin(0.0, UMIConfig())
        assert state.phase_theta_a == 0.0
        assert state.amplitude_split == 0.5

    def test_four_key_states(self):
        for theta in (0.0, math.pi / 2, math.pi, 3 * math.pi / 2):
            state = prepare_timebin(theta, UMIConfig())
            assert state.phase_theta_a == pytest.approx(theta)

    def test_modular_reduction(self):
        assert prepare_timebin(TWO_PI, UMIConfig()).phase_theta_a == 0.0
        assert prepare_timebin(-math.pi / 2, UMIConfig()).phase_theta_a == pytest.approx(
            3 * math.pi / 2
        )

    def test_split_follows_converter_ratio(self):
        assert prepare_timebin(0.0, UMIConfig(splitter_ratio=0.3)).amplitude_split == 0.3


class TestPeakProbabilities:
    def test_full_constructive_interference(self):
        # oracle: enumerate the four path amplitudes and square
        oracle = enumerate_peak_probabilities(0.0, 0.0, 1.0)
        assert oracle == pytest.approx((0.25, 0.5, 0.0, 0.25), abs=1e-15)
        p = _probs(0.0, 0.0, 1.0)
        assert (p.p_ss, p.p_mid_monitored, p.p_mid_other, p.p_ll) == pytest.approx(
            oracle, abs=1e-12
        )

    def test_no_interference_uniform(self):
        for ta, tb in ((0.0, 0.0), (1.0, 2.5), (math.pi, 0.3)):
            p = _probs(ta, tb, 0.0)
            assert (p.p_ss, p.p_mid_monitored, p.p_mid_other, p.p_ll) == pytest.approx(
                (0.25, 0.25, 0.25, 0.25), abs=1e-12
            )

    def test_quadrature_phase(self):
        oracle = enumerate_peak_probabilities(math.pi / 2, 0.0, 0.95)
        assert oracle[1] == pytest.approx(0.25, abs=1e-12)
        p = _probs(math.pi / 2, 0.0, 0.95)
        assert p.p_mid_monitored == pytest.approx(0.25, abs=1e-12)

    def test_matches_amplitude_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(500):
            ta, tb = rng.uniform(0, TWO_PI, 2)
            v = rng.uniform(0, 1)
            rho_c, rho_a = rng.uniform(0.05, 0.95, 2)
            p = _probs(ta, tb, v, rho_c, rho_a)
            oracle = enumerate_peak_probabilities(ta, tb, v, rho_c, rho_a)
            assert (p.p_ss, p.p_mid_monitored, p.p_mid_other, p.p_ll) == pytest.approx(
                oracle, abs=1e-12
            )

    def test_probability_conservation_grid(self):
        # full 100 x 100 x 10 grid over (theta_a, theta_b, v_mode)
        thetas_a = np.linspace(0, TWO_PI, 100, endpoint=False)
        thetas_b = np.linspace(0, TWO_PI, 100, endpoint=False)
        for v in np.linspace(0, 1, 10):
            overlap = ModeOverlap(v_mode=float(v))
            analyzers = [UMIConfig(phase_rad=float(tb)) for tb in thetas_b]
            for ta in thetas_a:
                state = TimeBinState(float(ta))
                for analyzer in analyzers:
                    p = peak_probabilities(state, analyzer, overlap)
                    assert abs(p.total() - 1.0) <= 1e-12
                    assert min(p.p_ss, p.p_mid_monitored, p.p_mid_other, p.p_ll) >= -1e-15
                    assert max(p.p_ss, p.p_mid_monitored, p.p_mid_other, p.p_ll) <= 1.0 + 1e-15

    def test_phase_symmetry_only_difference_matters(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            ta, tb, delta = rng.uniform(0, TWO_PI, 3)
            v = rng.uniform(0, 1)
            assert _probs(ta, tb, v).p_mid_monitored == pytest.approx(
                _probs(ta + delta, tb + delta, v).p_mid_monitored, abs=1e-12
            )

    def test_complementarity_for_balanced_splitters(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            ta, tb = rng.uniform(0, TWO_PI, 2)
            p = _probs(ta, tb, rng.uniform(0, 1))
            assert p.p_mid_monitored + p.p_mid_other == pytest.approx(0.5, abs=1e-12)

    def test_visibility_extraction_closure(self):
        thetas = np.linspace(0, TWO_PI, 4096, endpoint=False)
        for v in (0.0, 0.3, 0.8, 0.95, 1.0):
            mids = [_probs(float(t), 0.0, v).p_mid_monitored for t in thetas]
            hi, lo = max(mids), min(mids)
            extracted = (hi - lo) / (hi + lo)
            assert abs(extracted - v) < 1e-9

    def test_port_weights_sum_to_one_over_both_ports(self):
        p = _probs(0.7, 0.1, 0.9)
        w_plus = p.port_weights(+1)
        w_minus = p.port_weights(-1)
        assert sum(w_plus) + sum(w_minus) == pytest.approx(1.0, abs=1e-12)
        # outer peaks split evenly; the middle peak carries the phase
        assert w_plus[0] == w_minus[0] == pytest.approx(p.p_ss / 2)
        assert w_plus[2] == w_minus[2] == pytest.approx(p.p_ll / 2)


class TestArrivalOffsets:
    def test_matched_delays_three_peaks(self):
        offs = arrival_offsets(UMIConfig(path_delay_ps=570), UMIConfig(path_delay_ps=570))
        assert offs.interference
        assert offs.offsets_ps == (0.0, 570.0, 1140.0)

    def test_mismatched_delays_four_peaks_flagged(self):
        offs = arrival_offsets(UMIConfig(path_delay_ps=570), UMIConfig(path_delay_ps=700))
        assert not offs.interference
        assert offs.offsets_ps == (0.0, 570.0, 700.0, 1270.0)

    def test_mismatch_within_tolerance_merges(self):
        offs = arrival_offsets(
            UMIConfig(path_delay_ps=570), UMIConfig(path_delay_ps=600), merge_tolerance_ps=50
        )
        assert offs.interference
        assert offs.offsets_ps == (0.0, 585.0, 1170.0)

    def test_degenerate_zero_delay_rejected(self):
        with pytest.raises(ValueError):
            UMIConfig(path_delay_ps=0.0)


class TestVirtualMirror:
    def test_displacement_against_hand_computation(self):
        # L * (1 - 1/n) with L = 118, n = 1.4525: 118 - 118/1.4525
        expected = 118.0 - 118.0 / 1.4525
        assert expected == pytest.approx(36.7608, abs=5e-4)
        assert virtual_mirror_displacement_mm(118.0, 1.4525) == pytest.approx(expected)

    def test_index_near_one_leaves_bare_imbalance(self):
        umi = UMIConfig(long_arm_mm=80.0, short_arm_mm=50.0, glass_index=1.0 + 1e-9)
        assert virtual_mirror_residual(umi) == pytest.approx(30.0, abs=1e-6)

    def test_balance_condition(self):
        shift = virtual_mirror_displacement_mm(118.0, 1.4525)
        umi = UMIConfig(long_arm_mm=50.0 + shift, short_arm_mm=50.0)
        assert virtual_mirror_residual(umi) == pytest.approx(0.0, abs=1e-12)

    def test_default_geometry_nearly_balanced(self):
        assert virtual_mirror_residual(UMIConfig()) < 1e-3

    def test_rejects_nonrefracting_index(self):
        with pytest.raises(ValueError):
            virtual_mirror_displacement_mm(118.0, 1.0)
        with pytest.raises(ValueError):
            virtual_mirror_displacement_mm(118.0, 0.9)


class TestInvariantValidation:
    def test_splitter_ratio_bounds(self):
        with pytest.raises(ValueError):
            UMIConfig(splitter_ratio=0.0)
        with pytest.raises(ValueError):
            UMIConfig(splitter_ratio=1.0)

    def test_amplitude_split_bounds(self):
        with pytest.raises(ValueError):
            TimeBinState(0.0, amplitude_split=1.5)

    def test_mode_overlap_bounds(self):
        with pytest.raises(ValueError):
            ModeOverlap(v_mode=1.2)
        with pytest.raises(ValueError):
            ModeOverlap(v_mode=-0.1)
