"""Reduced-rank adaptive MIMO equalization.

A numpy library implementing a joint iterative reduced-rank decision
feedback / linear MIMO equalizer: alternating least-squares design of a
dimensionality-reducing transform and a reduced-rank combiner, the
matching recursive (RLS) adaptation with automatic model-order
selection, a full-rank RLS baseline, multipath Rayleigh-fading channel
simulation, an eigen-decomposition Wiener-filter oracle, closed-form
complexity accounting, and a Monte Carlo BER experiment harness.
"""

from .adaptation import (
    AdaptationError,
    BatchLsWorkspace,
    FullRankRlsState,
    RankPolicy,
    RlsState,
    StepDiagnostics,
    adapt_step,
    alternate,
    batch_design_s,
    batch_design_w,
    evaluate_ses,
    full_rank_rls_step,
    make_equalizer_state,
    make_full_rank_state,
    rls_update_s,
    rls_update_w,
    select_rank,
)
from .analysis import (
    ComplexityReport,
    ConvergenceReport,
    WienerOracle,
    convergence_metric,
    count_operations,
    measured_step_counts,
    measured_vs_analytic,
    wiener_reduced_rank,
)
from .channel import (
    QPSK,
    VEHICULAR_A_DB,
    ChannelRealization,
    FadingConfig,
    MimoDims,
    SymbolFrame,
    assemble_channel_matrix,
    bits_to_symbols,
    full_convolution_matrix,
    generate_fading,
    ofdm_subcarrier_channels,
    random_frame,
    received_samples,
    stack_received,
    stack_received_block,
    stack_transmit_history,
    symbol_bit_errors,
    vehicular_a_profile,
)
from .equalizer import (
    DetectResult,
    EqualizerState,
    FeedbackBuffer,
    Mode,
    build_stacked_input,
    decide,
    detect_block,
    equalizer_output,
    project,
)
from .harness import (
    BerRecord,
    ConfigError,
    ExperimentConfig,
    FULL_RANK_RLS,
    PROPOSED_RLS,
    RunTrace,
    ber_vs_symbols,
    config_hash,
    fading_sweep,
    ofdm_antenna_sweep,
    rank_sweep,
    run_single,
    run_single_ofdm,
    snr_sweep,
    write_csv,
)

__version__ = "0.1.0"
