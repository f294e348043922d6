"""Monte-Carlo BER experiments and analytic complexity accounting.

A realization draws one channel, one bit stream and one noise matrix; every
equalizer and every operating point sees identical data, so BER comparisons
are paired.  Realizations are independent work items keyed by their index,
which keeps results bit-identical for any worker count.
"""

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Optional, Tuple

import numpy as np

from .channel import apply_channel, generate_eva_taps
from .equalizers import (
    BlockSchedule,
    EmPolicy,
    em_equalize,
    make_state,
    overlap_discard_schedule,
)
from .signal_model import (
    BITS_PER_SYMBOL,
    demodulate_hard,
    draw_awgn,
    modulate,
    quantize_1bit,
    rng_stream,
)

logger = logging.getLogger("onebit_eq")

EQUALIZER_KINDS = ("WF_E", "WF_EQ", "WF_MQ", "EM_E", "EM_M")

# sub-stream identifiers for the per-realization RNG streams
_STREAM_CHANNEL, _STREAM_BITS, _STREAM_NOISE = 0, 1, 2


@dataclass(frozen=True)
class SystemConfig:
    """Scenario geometry and noise level shared by all equalizers."""

    n_users: int
    n_antennas: int
    channel_order: int
    coherence_time: int
    noise_var: float = 1.0
    sample_period_ns: Optional[float] = None


@dataclass(frozen=True)
class EqualizerSpec:
    """One detector entry of the experiment.

    kind selects the algorithm/model pair: WF_E and WF_EQ are the
    quantization-blind and quantization-aware Wiener filters on the exact
    block-Toeplitz model, WF_MQ the quantization-aware filter on the
    block-circulant model, EM_E / EM_M the iterative detector on the two
    models.
    """

    kind: str
    block_length: int
    overlap: int = 0
    policy: EmPolicy = field(default_factory=EmPolicy)
    label: str = ""

    def __post_init__(self):
        if self.kind not in EQUALIZER_KINDS:
            raise ValueError(f"kind must be one of {EQUALIZER_KINDS}")

    @property
    def model(self):
        return "mismatched" if self.kind in ("WF_MQ", "EM_M") else "exact"

    @property
    def resolved_label(self):
        return self.label or self.kind


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig
    equalizers: Tuple[EqualizerSpec, ...]
    eb_n0_grid_db: Tuple[float, ...]
    n_realizations: int
    seed: int
    unquantized_bypass: bool = False  # sanity path: feed y instead of Q(y)

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if len(self.eb_n0_grid_db) == 0:
            raise ValueError("eb_n0_grid_db must be nonempty")
        if len(self.equalizers) == 0:
            raise ValueError("equalizers must be nonempty")


@dataclass
class BerPoint:
    """Accumulated counts for one (equalizer, operating point) cell."""

    equalizer: str
    eb_n0_db: float
    bit_errors: int = 0
    bits_tested: int = 0
    em_iterations: int = 0
    blocks: int = 0
    multiply_count: int = 0

    @property
    def ber(self):
        return self.bit_errors / self.bits_tested if self.bits_tested else float("nan")

    @property
    def mean_em_iterations(self):
        return self.em_iterations / self.blocks if self.blocks else 0.0

    def merge(self, other):
        self.bit_errors += other.bit_errors
        self.bits_tested += other.bits_tested
        self.em_iterations += other.em_iterations
        self.blocks += other.blocks
        self.multiply_count += other.multiply_count


def eb_n0_to_sigma_x(eb_n0_db, n_users, n_antennas, noise_var,
                     bits_per_symbol=BITS_PER_SYMBOL):
    """Average symbol energy realizing a bit-energy-to-noise-density target.

    With unit per-link channel normalization the per-channel-use receive
    gain is the same for every antenna, so the antenna count cancels and
    Eb/N0 = symbol_energy * K / (B * noise_var).
    """
    if n_users < 1 or n_antennas < 1 or noise_var <= 0 or bits_per_symbol < 1:
        raise ValueError("inputs must be positive")
    return 10.0 ** (eb_n0_db / 10.0) * bits_per_symbol * noise_var / n_users


@dataclass(frozen=True)
class ComplexityReport:
    """Analytic complex-multiplication counts over one coherence interval."""

    n_unknowns: int          # P
    t_static: int            # normal-matrix build + inversion (time domain)
    t_per_block_iteration: int
    t_total_time: int
    t_total_freq: int
    blocks_time: int         # B
    blocks_freq: int         # B'


def complexity_report(n_users, n_antennas, channel_order, block_length,
                      overlap, coherence_time, iteration_counts,
                      model="mismatched"):
    """Evaluate the static/dynamic multiply-count formulas.

    iteration_counts is either a single per-block iteration count applied to
    every block, or an explicit per-block sequence (summed as given for both
    totals).  Block counts use ceiling division; the formulas presume
    divisibility.
    """
    k, m, nb = n_users, n_antennas, block_length
    if nb <= channel_order:
        raise ValueError("need block_length > channel_order")
    if not 0 <= overlap < nb:
        raise ValueError("need 0 <= overlap < block_length")
    p = k * (nb + channel_order) if model == "exact" else k * nb
    blocks_time = -(-coherence_time // nb)
    blocks_freq = -(-coherence_time // (nb - overlap))

    if isinstance(iteration_counts, (int, np.integer)):
        iters_time = [int(iteration_counts)] * blocks_time
        iters_freq = [int(iteration_counts)] * blocks_freq
    else:
        iters_time = [int(i) for i in iteration_counts]
        iters_freq = iters_time

    t_static = p ** 3 + p ** 2 * m * nb
    t_block = m * nb * (p + 1) + p * m * nb
    t_total_time = sum(iters_time) * t_block + t_static

    log2n = int(round(math.log2(nb)))
    t_block_freq = 2 * ((m + k) * log2n + k * m) * nb
    t_static_freq = (k * m * log2n + 2 * k * k * m + k ** 3) * nb
    t_total_freq = sum(iters_freq) * t_block_freq + t_static_freq

    return ComplexityReport(
        n_unknowns=p,
        t_static=t_static,
        t_per_block_iteration=t_block,
        t_total_time=t_total_time,
        t_total_freq=t_total_freq,
        blocks_time=blocks_time,
        blocks_freq=blocks_freq,
    )


def _equalize_frame(spec, state, observations, n_symbols, tail_pad,
                    source_bits, symbol_energy):
    """Run one equalizer over a frame with overlap-discard block processing.

    observations is the M x (T + tail_pad) quantized (or bypass) stream in
    natural time order: the T-symbol frame followed by the channel ring-out
    sampled while the transmitter is silent.  Blocks are sliced and flipped
    into the reversed-column layout the detectors expect, and estimates are
    flipped back before the kept range is hard-demodulated.

    The frame's newest symbols would otherwise sit at the wrap-corrupted
    trailing edge of the final block, so that block's kept range is split:
    the regular window keeps its protected interior, and one extra window
    placed tail_pad samples into the ring-out covers the remaining newest
    symbols at interior-grade discard depth on both sides.  The kept index
    set is exactly the one of the schedule either way.
    """
    n_bins = spec.block_length
    schedule = overlap_discard_schedule(n_symbols, n_bins, spec.overlap)
    plan = list(schedule)
    last = plan[-1]
    tail_keep = min(spec.overlap // 2, n_bins - tail_pad)
    if tail_pad > 0 and 0 < tail_keep < last.keep_to - last.keep_from:
        plan[-1] = BlockSchedule(last.start, last.keep_from, n_bins - tail_keep)
        plan.append(
            BlockSchedule(
                last.start + tail_pad,
                n_bins - tail_pad - tail_keep,
                n_bins - tail_pad,
            )
        )
    point = BerPoint(equalizer=spec.resolved_label, eb_n0_db=0.0)
    for blk in plan:
        r_block = observations[:, blk.start : blk.start + n_bins][:, ::-1]
        if spec.kind in ("WF_E", "WF_MQ", "WF_EQ"):
            vec = r_block.reshape(-1, order="F")
            if spec.kind == "WF_E":
                est = state.wf_unquantized(vec)
            else:
                est = state.wf_quantized(vec)
            symbols = est.reshape((state.n_users, -1), order="F")
        else:
            result = em_equalize(state, r_block, spec.policy)
            symbols = result.symbols
            point.em_iterations += result.iterations_used
            point.multiply_count += result.multiply_count
        # exact-model estimates carry L extra pre-block symbols; keep the
        # in-block part and restore natural time order
        forward = symbols[:, :n_bins][:, ::-1]
        kept = forward[:, blk.keep_from : blk.keep_to]
        bits_hat = demodulate_hard(kept, symbol_energy)
        t0 = blk.start + blk.keep_from
        t1 = blk.start + blk.keep_to
        ref = source_bits[:, BITS_PER_SYMBOL * t0 : BITS_PER_SYMBOL * t1]
        point.bit_errors += int(np.count_nonzero(bits_hat != ref))
        point.bits_tested += ref.size
        point.blocks += 1
    return point


def _one_realization(cfg, index):
    """Simulate one channel realization across the whole operating grid."""
    sys = cfg.system
    taps = generate_eva_taps(
        sys.n_antennas,
        sys.n_users,
        sys.channel_order,
        rng_stream(cfg.seed, _STREAM_CHANNEL, index),
        sample_period_ns=sys.sample_period_ns,
    )
    bits = rng_stream(cfg.seed, _STREAM_BITS, index).integers(
        0, 2, size=(sys.n_users, BITS_PER_SYMBOL * sys.coherence_time)
    )
    noise = draw_awgn(
        sys.n_antennas,
        sys.coherence_time,
        sys.noise_var,
        rng_stream(cfg.seed, _STREAM_NOISE, index),
    )

    # ring-out: the receiver samples L extra instants after the frame while
    # the transmitter is silent, giving the final block interior-grade
    # discard depth for the frame's newest symbols
    tail_pad = sys.channel_order
    tail_noise = draw_awgn(
        sys.n_antennas,
        tail_pad if tail_pad else 1,
        sys.noise_var,
        rng_stream(cfg.seed, _STREAM_NOISE, index, 1),
    )[:, :tail_pad]

    out = {}
    for eb_n0_db in cfg.eb_n0_grid_db:
        symbol_energy = eb_n0_to_sigma_x(
            eb_n0_db, sys.n_users, sys.n_antennas, sys.noise_var
        )
        frame = modulate(bits, symbol_energy)
        padded = np.concatenate(
            [frame.symbols, np.zeros((sys.n_users, tail_pad))], axis=1
        )
        received = apply_channel(
            taps, padded, np.concatenate([noise, tail_noise], axis=1)
        )
        observations = received if cfg.unquantized_bypass else quantize_1bit(received)

        states = {}
        for spec in cfg.equalizers:
            key = (spec.model, spec.block_length)
            if key not in states:
                states[key] = make_state(
                    spec.model, taps, spec.block_length, sys.noise_var, symbol_energy
                )
            point = _equalize_frame(
                spec,
                states[key],
                observations,
                sys.coherence_time,
                tail_pad,
                frame.source_bits,
                symbol_energy,
            )
            point.eb_n0_db = eb_n0_db
            out[(spec.resolved_label, eb_n0_db)] = point
    logger.info("realization %d done", index)
    return out


def run_ber_sweep(cfg, workers=1):
    """Run the configured Monte-Carlo BER experiment.

    Returns BerPoint rows sorted by (equalizer, Eb/N0).  Identical config
    and seed give identical counts for any `workers` value.
    """
    _check_feasible(cfg)
    labels = [s.resolved_label for s in cfg.equalizers]
    if len(set(labels)) != len(labels):
        raise ValueError("equalizer labels must be unique")

    merged = {}
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = pool.map(
                partial(_one_realization, cfg), range(cfg.n_realizations)
            )
            for part in partials:
                _merge(merged, part)
    else:
        for index in range(cfg.n_realizations):
            _merge(merged, _one_realization(cfg, index))

    order = {label: i for i, label in enumerate(labels)}
    return sorted(
        merged.values(), key=lambda pt: (order[pt.equalizer], pt.eb_n0_db)
    )


def run_fixed_iteration_study(cfg, i_max_list=(1, 2, 4, 8), workers=1):
    """BER sweep with the stopping rule disabled at fixed iteration budgets.

    Every EM entry of the config fans out into one entry per listed budget
    (labels get an _iN suffix); linear entries are kept as-is.  All variants
    share the realization data, so comparisons are paired.
    """
    expanded = []
    for spec in cfg.equalizers:
        if spec.kind in ("EM_E", "EM_M"):
            for i_max in i_max_list:
                policy = replace(
                    spec.policy, max_iterations=int(i_max), rel_tolerance=0.0
                )
                expanded.append(
                    replace(
                        spec,
                        policy=policy,
                        label=f"{spec.resolved_label}_i{i_max}",
                    )
                )
        else:
            expanded.append(spec)
    study = replace(cfg, equalizers=tuple(expanded))
    return run_ber_sweep(study, workers=workers)


def _merge(into, part):
    for key, point in part.items():
        if key in into:
            into[key].merge(point)
        else:
            into[key] = point


def _check_feasible(cfg):
    for spec in cfg.equalizers:
        if cfg.system.coherence_time < spec.block_length:
            raise ValueError(
                f"coherence_time {cfg.system.coherence_time} shorter than "
                f"block_length {spec.block_length} for {spec.resolved_label}"
            )
        if spec.block_length <= cfg.system.channel_order:
            raise ValueError(
                f"block_length must exceed channel order for {spec.resolved_label}"
            )
        if not 0 <= spec.overlap < spec.block_length:
            raise ValueError(f"invalid overlap for {spec.resolved_label}")


CSV_COLUMNS = ("equalizer", "eb_n0_db", "bit_errors", "bits", "ber",
               "mean_iters", "multiplies")


def results_to_csv(points):
    lines = [",".join(CSV_COLUMNS)]
    for pt in points:
        lines.append(
            f"{pt.equalizer},{pt.eb_n0_db:g},{pt.bit_errors},{pt.bits_tested},"
            f"{pt.ber:.8e},{pt.mean_em_iterations:.4f},{pt.multiply_count}"
        )
    return "\n".join(lines) + "\n"


def config_hash(resolved):
    """Content hash of a resolved configuration document."""
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
