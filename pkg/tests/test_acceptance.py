"""Acceptance gate: every commitment of this artifact, each at a pinned tolerance.

Each check prints one PASS/FAIL line (visible with -s or in failure output).
The Monte-Carlo criteria run at reduced scale with paired seeds; the two heavy
sweeps are session fixtures shared by their sub-checks.
"""

import math
import os
import time

import numpy as np
import pytest

from onebit_eq.channel import frequency_response, toeplitz_apply
from onebit_eq.equalizers import (
    EmPolicy,
    em_e_step,
    em_equalize,
    make_state,
    overlap_discard_schedule,
)
from onebit_eq.harness import (
    EqualizerSpec,
    ExperimentConfig,
    SystemConfig,
    complexity_report,
    run_ber_sweep,
    run_fixed_iteration_study,
)
from onebit_eq.selftest import (
    block_dft_dense,
    dense_circulant_oracle,
    em_e_step_quadrature,
)
from onebit_eq.signal_model import Constellation16QAM, quantize_1bit

WORKERS = min(os.cpu_count() or 1, 8)

pytestmark = pytest.mark.acceptance


def report(criterion, passed, detail):
    print(f"[{'PASS' if passed else 'FAIL'}] acceptance {criterion}: {detail}")
    return passed


# --------------------------------------------------------------------------
# Criterion 1: closed-form conditional mean vs adaptive quadrature
# --------------------------------------------------------------------------


def test_criterion_1_e_step_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.time()
    worst = 0.0
    for _ in range(1000):
        noise_var = float(rng.uniform(0.25, 4.0))
        span = rng.uniform(0.0, 30.0) * np.sqrt(noise_var)
        z = span * (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2)
        r = np.sign(rng.standard_normal()) + 1j * np.sign(rng.standard_normal())
        closed = em_e_step(np.array([r]), np.array([z]), noise_var)[0]
        worst = max(worst, abs(closed - em_e_step_quadrature(r, z, noise_var)))
    elapsed = time.time() - t0
    ok = worst <= 1e-8 and elapsed < 10.0
    assert report(
        "1 (E-step oracle)", ok,
        f"max |closed - quadrature| = {worst:.3e} over 1000 triples, {elapsed:.1f}s"
    )


# --------------------------------------------------------------------------
# Criterion 2: algebraic identities at small scale, 100 draws each
# --------------------------------------------------------------------------


def _draw_dims(rng):
    m = int(rng.integers(1, 5))
    k = int(rng.integers(1, 5))
    order = int(rng.integers(0, 4))
    n_bins = int(rng.integers(order + 1, 17))
    return m, k, order, n_bins


def _draw_taps(rng, m, k, order):
    from onebit_eq.channel import ChannelTaps

    scale = 1.0 / np.sqrt(2 * (order + 1))
    return ChannelTaps(
        taps=scale
        * (
            rng.standard_normal((order + 1, m, k))
            + 1j * rng.standard_normal((order + 1, m, k))
        )
    )


def test_criterion_2_algebraic_identities():
    rng = np.random.default_rng(77)
    t0 = time.time()
    worst_diag = worst_decomp = worst_mstep = 0.0
    for _ in range(100):
        m, k, order, n_bins = _draw_dims(rng)
        taps = _draw_taps(rng, m, k, order)

        # (a) circulant factorization through the block DFT
        dense = dense_circulant_oracle(taps, n_bins)
        bins = frequency_response(taps, n_bins).bins
        blockdiag = np.zeros((m * n_bins, k * n_bins), dtype=complex)
        for i in range(n_bins):
            blockdiag[i * m : (i + 1) * m, i * k : (i + 1) * k] = bins[i]
        via_dft = (
            block_dft_dense(m, n_bins, "inverse")
            @ blockdiag
            @ block_dft_dense(k, n_bins, "forward")
        )
        worst_diag = max(worst_diag, float(np.max(np.abs(dense - via_dft))))

        # (b) exact decomposition into circulant action plus interference
        from onebit_eq.channel import circulant_apply, interference_term

        x = rng.standard_normal((k, n_bins + order)) + 1j * rng.standard_normal(
            (k, n_bins + order)
        )
        lhs = toeplitz_apply(taps, x.reshape(-1, order="F"))
        rhs = circulant_apply(taps, x[:, :n_bins].reshape(-1, order="F"), n_bins)
        rhs = rhs + interference_term(taps, x[:, n_bins:], x[:, :n_bins])
        worst_decomp = max(worst_decomp, float(np.max(np.abs(lhs - rhs))))

        # (c) FFT-domain linear re-estimation equals the dense solve
        noise_var = float(rng.uniform(0.2, 2.0))
        symbol_energy = float(rng.uniform(0.5, 5.0))
        y = rng.standard_normal(m * n_bins) + 1j * rng.standard_normal(m * n_bins)
        ref = np.linalg.solve(
            dense.conj().T @ dense
            + (noise_var / symbol_energy) * np.eye(k * n_bins),
            dense.conj().T @ y,
        )
        state = make_state(
            "mismatched", taps, n_bins, noise_var, symbol_energy
        )
        worst_mstep = max(worst_mstep, float(np.max(np.abs(ref - state.m_step(y)))))

    elapsed = time.time() - t0
    ok = (
        worst_diag <= 1e-10
        and worst_decomp <= 1e-12
        and worst_mstep <= 1e-8
        and elapsed < 30.0
    )
    assert report(
        "2 (algebraic identities)", ok,
        f"diagonalization {worst_diag:.2e} (<=1e-10), decomposition "
        f"{worst_decomp:.2e} (<=1e-12), m-step {worst_mstep:.2e} (<=1e-8), "
        f"{elapsed:.1f}s",
    )


# --------------------------------------------------------------------------
# Criterion 3: complexity formulas and instrumented counters
# --------------------------------------------------------------------------


def test_criterion_3_complexity_counters():
    rng = np.random.default_rng(31)
    ok = True
    details = []
    for _ in range(5):
        m = int(rng.integers(2, 6))
        k = int(rng.integers(1, 4))
        order = int(rng.integers(0, 3))
        n_bins = int(rng.integers(order + 2, 12))
        iters = int(rng.integers(1, 7))
        taps = _draw_taps(rng, m, k, order)
        state = make_state("exact", taps, n_bins, 1.0, 2.0)
        r = quantize_1bit(
            rng.standard_normal((m, n_bins)) + 1j * rng.standard_normal((m, n_bins))
        )
        result = em_equalize(
            state, r,
            EmPolicy(max_iterations=iters, rel_tolerance=0.0, initializer="zeros"),
        )
        p = k * (n_bins + order)
        per_block = m * n_bins * (p + 1) + p * m * n_bins
        ok &= result.multiply_count == iters * per_block
        details.append(f"{result.multiply_count}=={iters}*{per_block}")

    # analytic table vs an independent inline evaluation at full scale
    k, m, order, nb, lp, tc, iters = 2, 32, 127, 1024, 254, 50_000, 8
    rep = complexity_report(k, m, order, nb, lp, tc, iters)
    log2n = int(math.log2(nb))
    blocks_freq = math.ceil(tc / (nb - lp))
    t_freq = (
        blocks_freq * iters * (((m + k) * log2n + k * m) * nb) * 2
        + (k * m * log2n + 2 * k * k * m + k ** 3) * nb
    )
    p = k * nb
    blocks_time = math.ceil(tc / nb)
    t_time = blocks_time * iters * (m * nb * (p + 1) + p * m * nb) + p ** 3 + p ** 2 * m * nb
    ok &= rep.t_total_freq == t_freq and rep.t_total_time == t_time
    assert report(
        "3 (complexity counters)", ok,
        f"per-block integer equality x5; T_tot_f={rep.t_total_freq} "
        f"(independent {t_freq}); T_tot={rep.t_total_time}",
    )


# --------------------------------------------------------------------------
# Criterion 4: reduced-scale BER reproduction (paired seeds)
# --------------------------------------------------------------------------

REF_L = 127
REF_SYSTEM = SystemConfig(
    n_users=2, n_antennas=32, channel_order=REF_L, coherence_time=10_000
)
REF_GRID = (0.0, 3.0, 6.0, 9.0, 12.0, 15.0)
REF_REALIZATIONS = 20
REF_SEED = 20_240_601


@pytest.fixture(scope="session")
def ref_sweep():
    cfg = ExperimentConfig(
        system=REF_SYSTEM,
        equalizers=(
            EqualizerSpec(kind="WF_MQ", block_length=1024, overlap=2 * REF_L),
            EqualizerSpec(kind="EM_M", block_length=1024, overlap=2 * REF_L),
        ),
        eb_n0_grid_db=REF_GRID,
        n_realizations=REF_REALIZATIONS,
        seed=REF_SEED,
    )
    points = run_ber_sweep(cfg, workers=WORKERS)
    return {(p.equalizer, p.eb_n0_db): p for p in points}


@pytest.fixture(scope="session")
def ref_bad_init_point():
    cfg = ExperimentConfig(
        system=REF_SYSTEM,
        equalizers=(
            EqualizerSpec(
                kind="EM_M",
                block_length=1024,
                overlap=2 * REF_L,
                policy=EmPolicy(initializer="wf_unquantized"),
                label="EM_M_blind_init",
            ),
        ),
        eb_n0_grid_db=(12.0,),
        n_realizations=REF_REALIZATIONS,
        seed=REF_SEED,
    )
    (point,) = run_ber_sweep(cfg, workers=WORKERS)
    return point


def test_criterion_4a_wf_high_snr_floor(ref_sweep):
    ber = ref_sweep[("WF_MQ", 15.0)].ber
    ok = 0.005 <= ber <= 0.015
    assert report("4a (WF floor @15dB)", ok, f"BER = {ber:.5f}, band [0.005, 0.015]")


def test_criterion_4b_em_operating_points(ref_sweep):
    ber0 = ref_sweep[("EM_M", 0.0)].ber
    ber12 = ref_sweep[("EM_M", 12.0)].ber
    ok = 0.018 <= ber0 <= 0.038 and ber12 <= 2e-3
    assert report(
        "4b (EM_M @0dB, @12dB)", ok,
        f"BER(0dB) = {ber0:.5f} in [0.018, 0.038]; BER(12dB) = {ber12:.2e} <= 2e-3",
    )


def test_criterion_4c_em_dominates_wf(ref_sweep):
    pairs = [
        (ref_sweep[("EM_M", db)].ber, ref_sweep[("WF_MQ", db)].ber)
        for db in REF_GRID
        if db >= 0.0
    ]
    ok = all(em <= wf for em, wf in pairs)
    assert report(
        "4c (EM <= WF ordering)", ok,
        "; ".join(f"{em:.4f}<={wf:.4f}" for em, wf in pairs),
    )


def test_criterion_4d_initializer_effect(ref_sweep, ref_bad_init_point):
    good = ref_sweep[("EM_M", 12.0)].ber
    bad = ref_bad_init_point.ber
    ratio = bad / good if good > 0 else np.inf
    ok = ratio >= 10.0
    assert report(
        "4d (initializer effect @12dB)", ok,
        f"blind-init BER {bad:.4f} / quantization-aware-init BER {good:.2e} "
        f"= {ratio:.0f}x (>= 10x)",
    )


# --------------------------------------------------------------------------
# Criterion 5: fixed iteration budgets at 9 dB
# --------------------------------------------------------------------------


def test_criterion_5_fixed_iteration_ordering():
    cfg = ExperimentConfig(
        system=REF_SYSTEM,
        equalizers=(
            EqualizerSpec(kind="EM_M", block_length=1024, overlap=2 * REF_L),
        ),
        eb_n0_grid_db=(9.0,),
        n_realizations=REF_REALIZATIONS,
        seed=REF_SEED,
    )
    points = run_fixed_iteration_study(cfg, (1, 2, 4, 8), workers=WORKERS)
    ber = {p.equalizer: p.ber for p in points}
    seq = [ber["EM_M_i8"], ber["EM_M_i4"], ber["EM_M_i2"], ber["EM_M_i1"]]
    ok = seq[0] < seq[1] < seq[2] < seq[3]
    assert report(
        "5 (fixed-iteration ordering @9dB)", ok,
        f"I=8: {seq[0]:.5f} < I=4: {seq[1]:.5f} < I=2: {seq[2]:.5f} "
        f"< I=1: {seq[3]:.5f}",
    )


# --------------------------------------------------------------------------
# Criterion 6: block-length/overlap guidance at reduced channel memory
# --------------------------------------------------------------------------


def test_criterion_6_guidance_setting_near_best():
    """The (N_b ~ 4L, L' ~ 2L) setting lands within 1.5x of the best tested.

    Known-red: the ratio measures 1.84-1.91x across seeds (CI width ~0.1),
    and the same comparison at the original operating scale sits near 2x,
    so the 1.5x band is tighter than the behavior it gates.
    """
    order = 31
    system = SystemConfig(
        n_users=2, n_antennas=32, channel_order=order, coherence_time=10_000
    )
    specs = tuple(
        EqualizerSpec(
            kind="EM_M",
            block_length=nb,
            overlap=factor * order,
            label=f"EM_M_nb{nb}_o{factor}L",
        )
        for nb in (128, 256)
        for factor in (1, 2, 3)
    )
    cfg = ExperimentConfig(
        system=system,
        equalizers=specs,
        eb_n0_grid_db=(9.0,),
        n_realizations=16,
        seed=REF_SEED,
    )
    points = run_ber_sweep(cfg, workers=WORKERS)
    ber = {p.equalizer: p.ber for p in points}
    guided = ber["EM_M_nb128_o2L"]
    best = min(ber.values())
    ratio = guided / best
    ok = ratio <= 1.5
    assert report(
        "6 (N_b~4L, L'~2L guidance @9dB)", ok,
        f"guided setting BER {guided:.5f} vs best {best:.5f}: ratio {ratio:.2f} "
        f"(gate 1.5); " + "; ".join(f"{k}={v:.5f}" for k, v in sorted(ber.items())),
    )


# --------------------------------------------------------------------------
# Criterion 7: randomized property suites
# --------------------------------------------------------------------------


def test_criterion_7a_quantizer_alphabet_property():
    rng = np.random.default_rng(7001)
    ok = True
    for _ in range(1000):
        y = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
        y.real[rng.random((3, 5)) < 0.15] = 0.0
        y.imag[rng.random((3, 5)) < 0.15] = 0.0
        q = quantize_1bit(y)
        ok &= bool(np.all(np.abs(q.real) == 1.0) and np.all(np.abs(q.imag) == 1.0))
    assert report("7a (quantizer alphabet, 1000 cases)", ok, "alphabet {+-1+-1j}")


def test_criterion_7b_gray_property():
    # exhaustive adjacency check plus 1000 random label round trips
    const = Constellation16QAM.from_energy(10.0)
    by_coord = {
        (int(p.real), int(p.imag)): const.bit_labels[i]
        for i, p in enumerate(const.points)
    }
    ok = True
    for re in (-3, -1, 1, 3):
        for im in (-3, -1, 1, 3):
            for dre, dim in ((2, 0), (0, 2)):
                if (re + dre, im + dim) in by_coord:
                    ok &= int(
                        np.sum(by_coord[(re, im)] != by_coord[(re + dre, im + dim)])
                    ) == 1
    rng = np.random.default_rng(7002)
    from onebit_eq.signal_model import demodulate_hard, modulate

    for _ in range(1000):
        bits = rng.integers(0, 2, size=(1, 4))
        frame = modulate(bits, 10.0)
        ok &= bool(np.array_equal(demodulate_hard(frame.symbols, 10.0), bits))
    assert report("7b (Gray labeling)", ok, "adjacency exhaustive + 1000 round trips")


def test_criterion_7c_schedule_coverage_property():
    rng = np.random.default_rng(7003)
    ok = True
    for _ in range(1000):
        n_bins = int(rng.integers(2, 64))
        overlap = int(rng.integers(0, n_bins))
        total = int(rng.integers(n_bins, 6 * n_bins))
        hits = np.zeros(total, dtype=int)
        for blk in overlap_discard_schedule(total, n_bins, overlap):
            hits[blk.start + blk.keep_from : blk.start + blk.keep_to] += 1
        ok &= bool(np.all(hits == 1))
    assert report("7c (schedule coverage, 1000 cases)", ok,
                  "every index kept exactly once")


def test_criterion_7d_determinism_across_worker_counts():
    # bit-identical integer counters for serial vs parallel execution;
    # each config compares every counter of every result cell
    ok = True
    compared = 0
    for seed in (1, 2, 3):
        cfg = ExperimentConfig(
            system=SystemConfig(n_users=1, n_antennas=4, channel_order=2,
                                coherence_time=128),
            equalizers=(
                EqualizerSpec(kind="WF_MQ", block_length=16, overlap=4),
                EqualizerSpec(kind="EM_M", block_length=16, overlap=4,
                              policy=EmPolicy(max_iterations=15)),
            ),
            eb_n0_grid_db=(0.0, 6.0),
            n_realizations=3,
            seed=seed,
        )
        serial = run_ber_sweep(cfg, workers=1)
        parallel = run_ber_sweep(cfg, workers=2)
        for a, b in zip(serial, parallel):
            ok &= (
                a.equalizer == b.equalizer
                and a.eb_n0_db == b.eb_n0_db
                and a.bit_errors == b.bit_errors
                and a.bits_tested == b.bits_tested
                and a.em_iterations == b.em_iterations
                and a.multiply_count == b.multiply_count
            )
            compared += 5
    assert report(
        "7d (worker-count determinism)", ok,
        f"{compared} integer counters bit-identical across worker counts",
    )
