"""Adaptive frequency-domain pulse shaping for DFT-s-OFDM uplinks.

A tiny pruned-and-quantized dense network maps each block's extended spectrum
and the fed-back SNR to polynomial filter coefficients; the resulting real tap
profile shapes the subcarriers to trade PAPR against detection error, with the
trade-off weight selected per SNR bin.  The package bundles the full
transmit/receive chain, channel models, training and evaluation harnesses,
classic baselines (RRC, CLF, SLM), and the runtime adaptation loop.
"""

from .adaptation import (
    AdaptState,
    LambdaTable,
    adaptation_cycle,
    lookup_lambda,
    preset_trace,
    run_scenario,
)
from .baselines import (
    ClfConfig,
    SlmConfig,
    clf_transmit,
    conventional_config,
    rrc_fir,
    slm_transmit,
)
from .chain import (
    ChainConfig,
    EqualizationError,
    ModScheme,
    Stage,
    SymbolBlock,
    apply_filter,
    dft_precode,
    map_bits,
    receiver_chain,
    spectrum_extend,
    to_time_domain,
    transmit,
)
from .channel import ChannelCfg, ChannelModel, apply_channel, estimate_snr
from .evaluation import EvalConfig, evaluate
from .filters import rrc_taps, taps_from_coeffs, unit_taps
from .metrics import (
    RunMetrics,
    empirical_ccdf,
    measured_ser,
    mse_e,
    oobe_db,
    papr_at_ccdf,
    papr_db,
    surrogate_p,
    tail_p,
    total_loss,
)
from .network import (
    NetParams,
    QuantizedNet,
    build_input,
    forward,
    forward_q,
    init_params,
    prune_step,
    prune_to,
    quantize,
)
from .training import (
    Checkpoint,
    TrainConfig,
    TrainingDivergedError,
    generate_block,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
