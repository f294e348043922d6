"""Library and CLI simulator for uplink detection in 1-bit quantized,
cyclic-prefix-free, frequency-selective massive MIMO."""

__version__ = "0.1.0"

from .channel import (
    ChannelTaps,
    FrequencyResponse,
    apply_channel,
    circulant_apply,
    frequency_response,
    generate_eva_taps,
    interference_term,
    toeplitz_apply,
)
from .equalizers import (
    EmPolicy,
    EqualizerEstimate,
    em_e_step,
    em_equalize,
    em_m_step_freq,
    em_m_step_time,
    make_state,
    overlap_discard_schedule,
    wf_quantized,
    wf_unquantized,
)
from .harness import (
    BerPoint,
    ComplexityReport,
    EqualizerSpec,
    ExperimentConfig,
    SystemConfig,
    complexity_report,
    eb_n0_to_sigma_x,
    run_ber_sweep,
    run_fixed_iteration_study,
)
from .numerics import block_dft, mills_ratio, std_normal_cdf, std_normal_pdf
from .signal_model import (
    Constellation16QAM,
    QuantizedBlock,
    SymbolFrame,
    demodulate_hard,
    draw_awgn,
    modulate,
    quantize_1bit,
    rng_stream,
)
