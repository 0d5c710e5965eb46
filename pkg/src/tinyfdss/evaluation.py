"""Frozen-checkpoint Monte-Carlo evaluation across channels, SNRs, and schemes.

Schemes
-------
``tinyml``    learned taps on the spectrum-extended chain (quantized twin by
              default), transmit power normalized per block
``rrc_fdss``  static root-raised-cosine frequency-domain profile on the same
              extended chain (informative extra column)
``dftsofdm``  conventional DFT-s-OFDM: every subcarrier carries data, no
              extension, flat spectrum
``rrc``       conventional chain through the classic truncated time-domain
              RRC transmit filter (expressed as complex per-bin gains)
``clf``       clipping-and-filtering on the conventional chain
``slm``       selective mapping on the conventional chain (genie side info)

Pairing: data bits depend only on (seed, modulation, block index) and the
channel draw only on (seed, channel, modulation, snr, block index), so every
scheme sees identical fades and noise and every channel sees identical blocks
at matched SNR.  PAPR is measured on the oversampled transmit waveform; the
communication path runs at critical sampling where the configured SNR is
exact per occupied bin.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import network
from .baselines import (
    ClfConfig,
    SlmConfig,
    clf_reduce,
    conventional_config,
    fir_bin_gains,
    rrc_fir,
    slm_phase_vectors,
    slm_select,
)
from .chain import (
    SCHEME_NAMES,
    ChainConfig,
    ModScheme,
    detect_symbols,
    equalize,
    extend,
    map_symbols,
    occupied_bins,
    precode,
    time_signal,
)
from .channel import MODEL_NAMES, draw_fade
from .filters import rrc_taps, taps_from_coeffs, unit_taps
from .adaptation import LambdaTable
from .metrics import (
    RunMetrics,
    empirical_ccdf,
    measured_ser,
    mse_e,
    oobe_db,
    papr_at_ccdf,
    papr_db,
    tail_p,
    total_loss,
)
from .training import Checkpoint

ALLSCHEME_NAMES = ("tinyml", "rrc", "dftsofdm", "clf", "slm", "rrc_fdss")
BASELINESCHEME_NAMES = ("rrc", "dftsofdm", "clf", "slm")
RRC_FIR_TAPS = 32


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation grid and Monte-Carlo sizes."""

    snr_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    channels: tuple[str, ...] = ("awgn",)
    mods: tuple[str, ...] = ("qpsk",)
    n_blocks: int = 500
    ccdf_blocks: int = 20_000
    ccdf_snr_db: float = 15.0
    ccdf_grid_db: tuple[float, float, float] = (0.0, 12.0, 0.1)
    papr_trace_blocks: int = 1000
    oobe_blocks: int = 64
    rrc_rolloff: float = 0.25
    rician_k_db: float = 3.0
    rician_k_linear: bool = False
    use_quantized: bool = True
    schemes: tuple[str, ...] = ("tinyml", "rrc", "dftsofdm", "clf", "slm")
    clf: ClfConfig = field(default_factory=ClfConfig)
    slm: SlmConfig = field(default_factory=SlmConfig)
    seed: int = 0

    def __post_init__(self):
        for name in self.schemes:
            if name not in ALLSCHEME_NAMES:
                raise ValueError(f"unknown scheme {name!r}")
        for name in self.channels:
            if name not in MODEL_NAMES:
                raise ValueError(f"unknown channel {name!r}")
        for name in self.mods:
            if name not in SCHEME_NAMES:
                raise ValueError(f"unknown modulation {name!r}")
        if self.n_blocks < 1 or self.ccdf_blocks < 1:
            raise ValueError("block counts must be positive")


@dataclass
class CellResult:
    scheme: str
    channel: str
    mod: str
    snr_db: float
    metrics: RunMetrics
    mean_papr_db: float


@dataclass
class EvalResult:
    schemes: tuple[str, ...]
    ccdf_grid_db: np.ndarray
    ccdf: dict  # scheme -> np.ndarray
    papr_samples: dict  # scheme -> np.ndarray (ccdf cell)
    oobe: dict  # scheme -> float
    cells: list[CellResult]
    summary: dict


class _SchemeEngine:
    """Per-scheme transmit/receive at matched block and channel seeds."""

    def __init__(self, cfg: ChainConfig, eval_cfg: EvalConfig,
                 checkpoint: Checkpoint | None):
        self.cfg = cfg
        self.conv = conventional_config(cfg)
        self.eval_cfg = eval_cfg
        self.net = None
        if checkpoint is not None:
            self.net = (
                checkpoint.qnet
                if eval_cfg.use_quantized and checkpoint.qnet is not None
                else checkpoint.params
            )
        self.rrc_fdss_taps = rrc_taps(cfg.n_sk, eval_cfg.rrc_rolloff)
        self.unit = unit_taps(cfg.n_sk)
        # the FIR runs at the oversampled rate; its occupied-bin gains apply
        # to any synthesis grid for the same physical subcarriers
        self.fir_gains = fir_bin_gains(
            rrc_fir(RRC_FIR_TAPS, eval_cfg.rrc_rolloff, sps=cfg.oversample), cfg
        )
        self.slm_phases = slm_phase_vectors(eval_cfg.slm, self.conv.n_data)

    def chain_for(self, scheme: str) -> ChainConfig:
        return self.cfg if scheme in ("tinyml", "rrc_fdss") else self.conv

    def data_symbols(self, mod: str, indices: np.ndarray) -> dict:
        """Blocks for both chain layouts, deterministic per (seed, mod, index)."""
        mod_i = list(SCHEME_NAMES).index(mod)
        scheme = SCHEME_NAMES[mod]
        bps = scheme.bits_per_symbol
        sym_ext = np.empty((len(indices), self.cfg.n_data), dtype=np.complex128)
        sym_conv = np.empty((len(indices), self.conv.n_data), dtype=np.complex128)
        for row, idx in enumerate(indices):
            rng = np.random.default_rng((self.eval_cfg.seed, 30, mod_i, int(idx)))
            bits = rng.integers(0, 2, self.conv.n_data * bps)
            full = map_symbols(bits, scheme)
            sym_conv[row] = full
            sym_ext[row] = full[: self.cfg.n_data]
        return {
            "sym_ext": sym_ext,
            "s_ext": extend(precode(sym_ext), self.cfg.n_se),
            "sym_conv": sym_conv,
            "s_conv": precode(sym_conv),
        }

    def transmit(self, scheme: str, data: dict, snr_db: float) -> dict:
        """Occupied bins, effective receiver taps, and reference symbols."""
        if scheme in ("tinyml", "rrc_fdss"):
            s_ext = data["s_ext"]
            if scheme == "tinyml":
                if self.net is None:
                    raise ValueError("tinyml scheme requires a checkpoint")
                feats = network.build_input(
                    s_ext, np.full(s_ext.shape[0], snr_db), expected_len=self.cfg.n_sk
                )
                coeffs = network.predict_coeffs(self.net, feats)
                taps = taps_from_coeffs(coeffs, self.cfg.n_sk)
            else:
                taps = np.broadcast_to(self.rrc_fdss_taps, s_ext.shape).copy()
            shaped = s_ext * taps
            # fixed transmit power: normalize to the unshaped occupied power
            g = np.sqrt(
                np.mean(np.abs(s_ext) ** 2, axis=-1)
                / np.maximum(np.mean(np.abs(shaped) ** 2, axis=-1), 1e-300)
            )
            eff = g[:, None] * taps
            return {"bins": g[:, None] * shaped, "taps": eff,
                    "symbols": data["sym_ext"], "derot": None}
        if scheme == "dftsofdm":
            bins = data["s_conv"]
            taps = np.broadcast_to(self.unit[: self.conv.n_sk], bins.shape)
            return {"bins": bins, "taps": taps,
                    "symbols": data["sym_conv"], "derot": None}
        if scheme == "rrc":
            s = data["s_conv"]
            shaped = s * self.fir_gains
            g = np.sqrt(
                np.mean(np.abs(s) ** 2, axis=-1)
                / np.maximum(np.mean(np.abs(shaped) ** 2, axis=-1), 1e-300)
            )
            eff = g[:, None] * np.broadcast_to(self.fir_gains, shaped.shape)
            return {"bins": g[:, None] * shaped, "taps": eff,
                    "symbols": data["sym_conv"], "derot": None}
        if scheme == "clf":
            x = clf_reduce(data["s_conv"], self.eval_cfg.clf, self.conv)
            bins = occupied_bins(x, self.conv)
            taps = np.broadcast_to(self.unit[: self.conv.n_sk], bins.shape)
            return {"bins": bins, "taps": taps,
                    "symbols": data["sym_conv"], "derot": None}
        if scheme == "slm":
            x, idx = slm_select(data["s_conv"], self.slm_phases, self.conv)
            bins = occupied_bins(x, self.conv)
            taps = np.broadcast_to(self.unit[: self.conv.n_sk], bins.shape)
            return {"bins": bins, "taps": taps,
                    "symbols": data["sym_conv"], "derot": self.slm_phases[idx]}
        raise ValueError(f"unknown scheme {scheme!r}")


def _cell_rng(seed: int, chan_i: int, mod_i: int, snr_i: int, idx: int):
    return np.random.default_rng((seed, 31, chan_i, mod_i, snr_i, idx))


def _run_cell(
    engine: _SchemeEngine,
    scheme: str,
    channel_name: str,
    mod: str,
    snr_db: float,
    snr_i: int,
    n_blocks: int,
) -> CellResult:
    """Monte-Carlo one (scheme, channel, modulation, SNR) cell."""
    eval_cfg = engine.eval_cfg
    cfg = engine.chain_for(scheme)
    model = MODEL_NAMES[channel_name]
    chan_i = list(MODEL_NAMES).index(channel_name)
    mod_i = list(SCHEME_NAMES).index(mod)
    k_db = eval_cfg.rician_k_db
    k_lin = float(k_db) if eval_cfg.rician_k_linear else 10.0 ** (k_db / 10.0)
    indices = np.arange(n_blocks)
    data = engine.data_symbols(mod, indices)
    tx = engine.transmit(scheme, data, snr_db)
    bins = tx["bins"]
    x1 = time_signal(bins, cfg, oversample=1)
    x4 = time_signal(bins, cfg)
    paprs = papr_db(x4)
    # channel: same per-block generator for every scheme -> identical h and w
    inv_snr = 10.0 ** (-snr_db / 10.0)
    rx = np.empty_like(x1)
    for row, idx in enumerate(indices):
        rng = _cell_rng(eval_cfg.seed, chan_i, mod_i, snr_i, int(idx))
        h = draw_fade(model, rng, k_lin)
        p_occ = np.mean(np.abs(x1[row]) ** 2) * cfg.n_fft / cfg.n_sk
        sigma = np.sqrt(p_occ * inv_snr / 2.0)
        w = sigma * (
            rng.standard_normal(x1.shape[-1]) + 1j * rng.standard_normal(x1.shape[-1])
        )
        rx[row] = (h * x1[row] + w) / h
    equalized = equalize(
        occupied_bins(rx, cfg), tx["taps"], cfg.n_se, phase_derotate=tx["derot"]
    )
    detected = detect_symbols(equalized, SCHEME_NAMES[mod])
    ser, errors, total = measured_ser(tx["symbols"], detected)
    tail = tail_p(paprs)
    mse = mse_e(tx["symbols"], equalized)
    run = RunMetrics(
        papr_db_samples=paprs,
        tail_p=tail,
        mse_e=mse,
        ser=ser,
        ser_errors=errors,
        ser_total=total,
        loss=total_loss(
            mse, tail, LambdaTable().lookup(snr_db if np.isfinite(snr_db) else 1e6)
        ),
    )
    run.validate()
    return CellResult(
        scheme=scheme, channel=channel_name, mod=mod, snr_db=snr_db,
        metrics=run, mean_papr_db=float(paprs.mean()),
    )


def _ccdf_pass(engine: _SchemeEngine, scheme: str) -> tuple[np.ndarray, float]:
    """Noise-free PAPR statistics for the CCDF figure (chunked for memory)."""
    eval_cfg = engine.eval_cfg
    cfg = engine.chain_for(scheme)
    mod = eval_cfg.mods[0]
    samples = np.empty(eval_cfg.ccdf_blocks)
    oobe = None
    chunk = 2048
    for lo in range(0, eval_cfg.ccdf_blocks, chunk):
        indices = np.arange(lo, min(lo + chunk, eval_cfg.ccdf_blocks))
        data = engine.data_symbols(mod, indices)
        tx = engine.transmit(scheme, data, eval_cfg.ccdf_snr_db)
        x4 = time_signal(tx["bins"], cfg)
        samples[indices] = papr_db(x4)
        if oobe is None:
            oobe = oobe_db(x4[: eval_cfg.oobe_blocks], cfg)
    return samples, float(oobe)


def evaluate(
    checkpoint: Checkpoint | None,
    eval_cfg: EvalConfig,
    chain_cfg: ChainConfig | None = None,
    threads: int = 1,
) -> EvalResult:
    """Full evaluation: CCDF pass per scheme plus the (channel, mod, SNR) grid.

    ``threads`` parallelizes over independent grid cells; results are
    collected in a fixed order, so the thread count never changes any output.
    """
    cfg = chain_cfg if chain_cfg is not None else ChainConfig()
    engine = _SchemeEngine(cfg, eval_cfg, checkpoint)
    schemes = eval_cfg.schemes

    lo, hi, step = eval_cfg.ccdf_grid_db
    grid = np.arange(lo, hi + step / 2, step)
    ccdf = {}
    papr_samples = {}
    oobe = {}
    for scheme in schemes:
        samples, scheme_oobe = _ccdf_pass(engine, scheme)
        papr_samples[scheme] = samples
        ccdf[scheme] = empirical_ccdf(samples, grid)
        oobe[scheme] = scheme_oobe

    tasks = []
    for scheme in schemes:
        for channel_name in eval_cfg.channels:
            for mod in eval_cfg.mods:
                for snr_i, snr in enumerate(eval_cfg.snr_db):
                    tasks.append((scheme, channel_name, mod, snr, snr_i))

    def run(task):
        scheme, channel_name, mod, snr, snr_i = task
        return _run_cell(engine, scheme, channel_name, mod, snr, snr_i,
                         eval_cfg.n_blocks)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(run, tasks))
    else:
        cells = [run(t) for t in tasks]

    summary = {}
    rrc_anchor = None
    if "rrc" in schemes:
        rrc_anchor = papr_at_ccdf(papr_samples["rrc"], 1e-3)
    for scheme in schemes:
        at_1e3 = papr_at_ccdf(papr_samples[scheme], 1e-3)
        entry = {"papr_at_ccdf_1e3_db": at_1e3, "mean_papr_db": float(papr_samples[scheme].mean()),
                 "oobe_db": oobe[scheme]}
        if rrc_anchor is not None:
            entry["delta_vs_rrc_db"] = at_1e3 - rrc_anchor
        summary[scheme] = entry

    return EvalResult(
        schemes=schemes, ccdf_grid_db=grid, ccdf=ccdf,
        papr_samples=papr_samples, oobe=oobe, cells=cells, summary=summary,
    )
