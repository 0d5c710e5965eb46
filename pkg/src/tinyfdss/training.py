"""Offline training: dataset generation, differentiable chain loss, AdamW loop.

Every block is fully determined by (master_seed, block_index): bits, scheme,
SNR, channel draw, and per-bin noise all come from one per-block generator, so
runs are bit-reproducible regardless of batching or thread count.

The loss per block is mse + lambda(snr) * softplus(papr - x0), with the
lambda looked up per block's drawn SNR.  The chain is differentiated in closed
form down to the polynomial coefficients: the PAPR path routes the gradient
through each block's peak sample (max subgradient); the symbol-error path
treats the drawn noise as constant and differentiates through shaping,
power normalization, matched filtering, extension folding, gain
normalization, and inverse precoding.

Transmit power is normalized per block (shaped occupied power equals the
unshaped occupied power) so that scaling the taps can neither buy SNR nor
change PAPR; the receiver equalizes with the known effective taps.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import network
from .adaptation import LambdaTable
from .chain import (
    SCHEME_NAMES,
    ChainConfig,
    ModScheme,
    extend,
    fold_extension,
    map_symbols,
    occupied_slice,
    precode,
    time_signal,
)
from .channel import MODEL_NAMES, ChannelModel, draw_fade
from .filters import coeff_basis, taps_from_coeffs
from .metrics import TAIL_X0_DB

class TrainingDivergedError(RuntimeError):
    """Raised when the loss turns non-finite; carries diagnostic context."""


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for the offline training run (desk-scale defaults)."""

    n_blocks: int = 10_000
    batch_size: int = 32
    epochs: int = 5
    lr: float = 1e-3
    weight_decay: float = 1e-4
    prune_mode: str = "target"  # "target" | "schedule" | "none"
    prune_fraction: float = 0.2
    target_sparsity: float = 0.8
    snr_range_db: tuple[float, float] = (0.0, 20.0)
    channel_mix: tuple[tuple[str, float], ...] = (("awgn", 0.5), ("rayleigh", 0.5))
    mod_mix: tuple[tuple[str, float], ...] = (("qpsk", 0.5), ("qam16", 0.5))
    rician_k_db: float = 3.0
    hidden_width: int = network.HIDDEN_DEFAULT
    out_init_scale: float = 0.3
    surrogate_sharpness: float = 4.0
    papr_x0_db: float = TAIL_X0_DB
    seed: int = 0
    chain: ChainConfig = field(default_factory=ChainConfig)

    def __post_init__(self):
        if self.n_blocks <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("n_blocks, batch_size, and epochs must be positive")
        if self.snr_range_db[0] > self.snr_range_db[1]:
            raise ValueError(f"snr range out of order: {self.snr_range_db}")
        if self.prune_mode not in ("target", "schedule", "none"):
            raise ValueError(f"unknown prune_mode {self.prune_mode!r}")
        for mix, table in (("channel_mix", MODEL_NAMES), ("mod_mix", SCHEME_NAMES)):
            pairs = getattr(self, mix)
            for name, _ in pairs:
                if name not in table:
                    raise ValueError(f"unknown {mix} entry {name!r}")
            total = sum(w for _, w in pairs)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"{mix} weights sum to {total}, expected 1")


def config_hash(config: TrainConfig) -> int:
    """Stable 64-bit hash of the canonical JSON form of the config."""
    blob = json.dumps(asdict(config), sort_keys=True).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


HISTORY_COLUMNS = ("epoch", "mean_loss", "median_loss", "mse_term", "tail_term",
                   "sparsity")


@dataclass
class Checkpoint:
    """Trained parameters plus everything needed to reproduce or resume."""

    params: network.NetParams
    qnet: network.QuantizedNet | None
    opt: network.AdamState | None
    epoch: int
    config_hash: int
    history: np.ndarray  # one row per epoch, HISTORY_COLUMNS order
    wall_seconds: np.ndarray | None = None  # per-epoch, reported but not serialized


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    network.save_net(
        path,
        ckpt.params,
        qnet=ckpt.qnet,
        opt=ckpt.opt,
        epoch=ckpt.epoch,
        config_hash=ckpt.config_hash,
        history=ckpt.history,
    )


def load_checkpoint(path) -> Checkpoint:
    raw = network.load_net(path)
    return Checkpoint(
        params=raw["params"],
        qnet=raw["qnet"],
        opt=raw["opt"],
        epoch=raw["epoch"] if raw["epoch"] is not None else 0,
        config_hash=raw["config_hash"] or 0,
        history=raw["history"]
        if raw["history"] is not None
        else np.zeros((0, len(HISTORY_COLUMNS))),
    )


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------

def block_rng(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for one (seed, stream...) coordinate."""
    return np.random.default_rng((seed,) + path)


def _draw_from_mix(rng: np.random.Generator, mix: tuple[tuple[str, float], ...]) -> str:
    names = [n for n, _ in mix]
    weights = np.array([w for _, w in mix])
    return names[int(rng.choice(len(names), p=weights / weights.sum()))]


@dataclass
class BlockDraw:
    bits: np.ndarray
    scheme: ModScheme
    snr_db: float
    model: ChannelModel


def generate_block(rng: np.random.Generator, config: TrainConfig) -> BlockDraw:
    """Draw one training block; the draw order is fixed for reproducibility."""
    scheme = SCHEME_NAMES[_draw_from_mix(rng, config.mod_mix)]
    lo, hi = config.snr_range_db
    snr_db = float(rng.uniform(lo, hi))
    model = MODEL_NAMES[_draw_from_mix(rng, config.channel_mix)]
    bits = rng.integers(0, 2, config.chain.n_data * scheme.bits_per_symbol)
    return BlockDraw(bits=bits, scheme=scheme, snr_db=snr_db, model=model)


@dataclass
class BatchPrep:
    """Fixed per-batch quantities the loss is differentiated against."""

    symbols: np.ndarray  # (B, n_data) complex
    s_ext: np.ndarray  # (B, n_sk) complex
    features: np.ndarray  # (B, input_dim)
    eta: np.ndarray  # (B, n_sk) complex fixed noise (already fade-compensated)
    lam: np.ndarray  # (B,)
    snr_db: np.ndarray  # (B,)
    indices: np.ndarray  # (B,) block indices, for diagnostics


def prepare_batch(
    config: TrainConfig, indices: np.ndarray, table: LambdaTable
) -> BatchPrep:
    """Rebuild blocks for the given dataset indices (deterministic per index)."""
    cfg = config.chain
    b = len(indices)
    symbols = np.empty((b, cfg.n_data), dtype=np.complex128)
    eta = np.empty((b, cfg.n_sk), dtype=np.complex128)
    snr = np.empty(b)
    lam = np.empty(b)
    for row, idx in enumerate(indices):
        rng = block_rng(config.seed, 0, int(idx))
        draw = generate_block(rng, config)
        symbols[row] = map_symbols(draw.bits, draw.scheme)
        # channel draw: fade then per-occupied-bin noise at fixed transmit power
        h = draw_fade(draw.model, rng, 10.0 ** (config.rician_k_db / 10.0))
        noise = (
            rng.standard_normal(cfg.n_sk) + 1j * rng.standard_normal(cfg.n_sk)
        ) / np.sqrt(2.0)
        snr[row] = draw.snr_db
        lam[row] = table.lookup(draw.snr_db)
        # sigma^2 per occupied bin with unit reference power; scaled below
        eta[row] = noise * 10.0 ** (-draw.snr_db / 20.0) / h
    s_ext = extend(precode(symbols), cfg.n_se)
    # reference transmit power: unshaped occupied power per block
    p_ref = np.mean(np.abs(s_ext) ** 2, axis=-1)
    eta *= np.sqrt(p_ref)[:, None]
    features = network.build_input(s_ext, snr, expected_len=cfg.n_sk)
    return BatchPrep(
        symbols=symbols, s_ext=s_ext, features=features, eta=eta,
        lam=lam, snr_db=snr, indices=np.asarray(indices),
    )


# ---------------------------------------------------------------------------
# Differentiable chain loss
# ---------------------------------------------------------------------------

@dataclass
class LossTerms:
    loss: float
    mse_term: float
    tail_term: float
    papr_db: np.ndarray  # (B,)
    mse: np.ndarray  # (B,)


def chain_loss(
    coeffs: np.ndarray,
    prep: BatchPrep,
    cfg: ChainConfig,
    x0_db: float = TAIL_X0_DB,
    sharpness: float = 4.0,
    eps: float = 1e-12,
    want_grad: bool = True,
) -> tuple[LossTerms, np.ndarray | None]:
    """Mean block loss and its gradient w.r.t. the (B, n_coeffs) coefficients.

    Forward: coeffs -> taps -> shaped bins; PAPR on the oversampled grid
    (batch mean of the softplus tail surrogate, lambda-weighted per block);
    symbol MSE through power normalization, fixed noise, matched filter,
    folding, and inverse precoding.  Backward is exact reverse mode with the
    noise held constant and the max subgradient at each block's peak sample.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    batch = coeffs.shape[0]
    n_sk = cfg.n_sk
    if not np.all(np.isfinite(coeffs)):
        bad = prep.indices[~np.all(np.isfinite(coeffs), axis=-1)]
        raise TrainingDivergedError(
            f"non-finite coefficients at block indices {bad.tolist()[:8]}"
        )
    taps = taps_from_coeffs(coeffs, n_sk)

    s_ext = prep.s_ext
    shaped = s_ext * taps

    # --- PAPR path (scale-invariant, so normalization is irrelevant here)
    x = time_signal(shaped, cfg)
    n_os = x.shape[-1]
    power = np.abs(x) ** 2
    peak_idx = np.argmax(power, axis=-1)
    rows = np.arange(batch)
    peak = power[rows, peak_idx]
    mean_pow = power.mean(axis=-1)
    papr = 10.0 * np.log10(peak / mean_pow)
    z = sharpness * (papr - x0_db)
    softplus = np.maximum(papr - x0_db, 0.0) + np.log1p(np.exp(-np.abs(z))) / sharpness

    # --- symbol-error path at fixed transmit power
    p_shaped = np.mean(np.abs(shaped) ** 2, axis=-1)
    p_ref = np.mean(np.abs(s_ext) ** 2, axis=-1)
    g = np.sqrt(p_ref / np.maximum(p_shaped, 1e-300))
    taps_eff = g[:, None] * taps
    rx_bins = g[:, None] * shaped + prep.eta
    matched = rx_bins * taps_eff
    numer = fold_extension(matched, cfg.n_se)
    gain = fold_extension(taps_eff**2, cfg.n_se)
    recovered = numer / (gain + eps)
    s_hat = np.fft.ifft(recovered, axis=-1) * np.sqrt(cfg.n_data)
    err = s_hat - prep.symbols
    mse = np.mean(np.abs(err) ** 2, axis=-1)

    per_block = mse + prep.lam * softplus
    loss = float(np.mean(per_block))
    terms = LossTerms(
        loss=loss,
        mse_term=float(np.mean(mse)),
        tail_term=float(np.mean(prep.lam * softplus)),
        papr_db=papr,
        mse=mse,
    )
    if not np.isfinite(loss):
        bad = prep.indices[~np.isfinite(per_block)]
        raise TrainingDivergedError(
            f"non-finite loss at block indices {bad.tolist()[:8]}"
        )
    if not want_grad:
        return terms, None

    # --- backward: PAPR tail term
    w_papr = prep.lam / (1.0 + np.exp(-z)) / batch  # dLoss/dpapr_b
    c_log = 10.0 / np.log(10.0)
    x_bar = x * (-2.0 * w_papr / (n_os * mean_pow) * c_log)[:, None]
    x_bar[rows, peak_idx] += x[rows, peak_idx] * (2.0 * w_papr * c_log / peak)
    grid_bar = np.fft.fft(x_bar, axis=-1) / np.sqrt(cfg.n_fft)
    shaped_bar = np.fft.fftshift(grid_bar, axes=-1)[..., occupied_slice(cfg)]
    d_taps = np.real(shaped_bar * np.conj(s_ext))

    # --- backward: mse term, first w.r.t. the effective taps u = g * taps
    shat_bar = err * (2.0 / (batch * cfg.n_data))
    rec_bar = np.fft.fft(shat_bar, axis=-1) / np.sqrt(cfg.n_data)
    t_bar = rec_bar / (gain + eps)
    g_bar = -np.real(rec_bar * np.conj(numer)) / (gain + eps) ** 2
    # unfold: every extended position inherits its data bin's cotangent
    t_bar_ext = extend(t_bar, cfg.n_se)
    g_bar_ext = extend(g_bar, cfg.n_se)
    dt_du = 2.0 * taps_eff * s_ext + prep.eta
    d_u = np.real(np.conj(t_bar_ext) * dt_du) + 2.0 * taps_eff * g_bar_ext
    # through the power normalization u = g(taps) * taps
    s_ext_pow = np.abs(s_ext) ** 2
    du_dot_f = np.sum(d_u * taps, axis=-1)
    d_taps += g[:, None] * d_u
    d_taps -= (
        (du_dot_f * g / (n_sk * np.maximum(p_shaped, 1e-300)))[:, None]
        * taps
        * s_ext_pow
    )

    basis = coeff_basis(n_sk, coeffs.shape[-1])
    return terms, d_taps @ basis


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def _sparsity(params: network.NetParams) -> float:
    total = network.total_weight_count(params)
    return 1.0 - network.live_weight_count(params) / total


def train(
    config: TrainConfig,
    lambda_table: LambdaTable | None = None,
    progress: bool = False,
) -> Checkpoint:
    """Run the offline loop: batched chain loss, AdamW, epoch-end pruning.

    Returns a checkpoint whose parameters are float32-representable so that a
    save -> load -> forward round trip is bit-exact.  The quantized twin is
    produced once from the final pruned weights.
    """
    table = lambda_table if lambda_table is not None else LambdaTable()
    params = network.init_params(
        hidden_width=config.hidden_width,
        rng=block_rng(config.seed, 1),
        input_dim=config.chain.n_sk + 1,
        out_scale=config.out_init_scale,
    )
    opt = network.AdamState(lr=config.lr, weight_decay=config.weight_decay)
    history = np.zeros((config.epochs, len(HISTORY_COLUMNS)))
    wall = np.zeros(config.epochs)

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = block_rng(config.seed, 2, epoch).permutation(config.n_blocks)
        losses, mses, tails = [], [], []
        for lo in range(0, config.n_blocks, config.batch_size):
            idxs = order[lo : lo + config.batch_size]
            prep = prepare_batch(config, idxs, table)
            coeffs, cache = network.forward_cached(params, prep.features)
            try:
                terms, d_coeffs = chain_loss(
                    coeffs, prep, config.chain,
                    x0_db=config.papr_x0_db,
                    sharpness=config.surrogate_sharpness,
                )
            except TrainingDivergedError as exc:
                norms = {
                    "w2": float(np.linalg.norm(params.w2)),
                    "b2": float(np.linalg.norm(params.b2)),
                }
                if params.hidden_width > 0:
                    norms["w1"] = float(np.linalg.norm(params.w1))
                raise TrainingDivergedError(f"{exc}; parameter norms {norms}") from exc
            grads = network.backward(params, cache, d_coeffs)
            network.adamw_step(params, grads, opt)
            losses.append(terms.loss)
            mses.append(terms.mse_term)
            tails.append(terms.tail_term)
        if config.prune_mode == "schedule":
            network.prune_step(params, config.prune_fraction)
        elif config.prune_mode == "target":
            ramp = config.target_sparsity * (epoch + 1) / config.epochs
            network.prune_to(params, ramp)
        wall[epoch] = time.perf_counter() - t0
        history[epoch] = (
            epoch,
            float(np.mean(losses)),
            float(np.median(losses)),
            float(np.mean(mses)),
            float(np.mean(tails)),
            _sparsity(params),
        )
        if progress:
            print(
                f"epoch {epoch}: loss {history[epoch, 1]:.5f} "
                f"(median {history[epoch, 2]:.5f}, mse {history[epoch, 3]:.5f}, "
                f"tail {history[epoch, 4]:.5f}) "
                f"sparsity {history[epoch, 5]:.2f} [{wall[epoch]:.1f}s]"
            )

    # make the stored parameters float32-representable for bit-exact round trips
    for name in ("w1", "b1", "w2", "b2", "mask1", "mask2"):
        tensor = getattr(params, name)
        if tensor is not None:
            setattr(params, name, tensor.astype(np.float32).astype(np.float64))
    network.apply_masks(params)
    qnet = network.quantize(params)
    return Checkpoint(
        params=params,
        qnet=qnet,
        opt=opt,
        epoch=config.epochs,
        config_hash=config_hash(config),
        history=history,
        wall_seconds=wall,
    )
