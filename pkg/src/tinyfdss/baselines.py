"""PAPR-reduction comparison schemes: CLF, SLM, and the static RRC transmit filter.

Clipping-and-filtering amplitude-limits the time signal and removes the
out-of-allocation spectral regrowth, iterated a configurable number of times.
Selective mapping transmits the minimum-PAPR candidate among phase-rotated
copies of the frequency-domain symbols (candidate 0 is always the identity,
so SLM never does worse than the unmodified block); the chosen index is the
side information a real system would signal.

The static RRC baseline is the classic truncated time-domain pulse-shaping
filter (32 taps by default); its circular convolution is expressed as per-bin
complex gains on the occupied subcarriers so the receiver can invert it.
All of these operate on whatever ChainConfig they are given -- pass a
conventional configuration (``conventional_config``) to benchmark them on
plain DFT-s-OFDM as in the published comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import (
    ChainConfig,
    Stage,
    SymbolBlock,
    extend,
    occupied_bins,
    occupied_slice,
    time_signal,
)
from .metrics import papr_db

SLM_ALPHABET = np.array([1.0 + 0.0j, -1.0 + 0.0j, 0.0 + 1.0j, 0.0 - 1.0j])


@dataclass(frozen=True)
class ClfConfig:
    """Clip level relative to RMS (dB) and number of clip+filter rounds."""

    clip_ratio_db: float = 4.0
    iterations: int = 2

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


@dataclass(frozen=True)
class SlmConfig:
    """Candidate count and seed; U >= 2 for any reduction, U = 1 is the identity."""

    num_candidates: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.num_candidates < 1:
            raise ValueError(f"need at least one candidate, got {self.num_candidates}")


def conventional_config(cfg: ChainConfig) -> ChainConfig:
    """Plain DFT-s-OFDM occupying the same band: all n_sk subcarriers carry data."""
    return ChainConfig(
        n_data=cfg.n_sk,
        n_se=0,
        n_fft=cfg.n_fft,
        oversample=cfg.oversample,
        bandwidth_hz=cfg.bandwidth_hz,
        scs_hz=cfg.scs_hz,
    )


# ---------------------------------------------------------------------------
# Clipping and filtering
# ---------------------------------------------------------------------------

def clip_amplitude(x: np.ndarray, level: np.ndarray | float) -> np.ndarray:
    """Hard amplitude clip: |y_n| <= level with phases preserved."""
    mag = np.abs(x)
    scale = np.where(mag > level, np.asarray(level) / np.maximum(mag, 1e-300), 1.0)
    return x * scale


def clf_reduce(
    bins: np.ndarray, clf: ClfConfig, cfg: ChainConfig, oversample: int | None = None
) -> np.ndarray:
    """CLF rounds on occupied-bin blocks (batch-capable); returns time signals.

    The clip level is fixed from the input signal's RMS; filtering zeroes
    every bin outside the allocation, which restores the spectrum but regrows
    the peaks -- the classic CLF behavior.
    """
    x = time_signal(bins, cfg, oversample)
    level = np.sqrt(np.mean(np.abs(x) ** 2, axis=-1, keepdims=True)) * 10.0 ** (
        clf.clip_ratio_db / 20.0
    )
    for _ in range(clf.iterations):
        x = clip_amplitude(x, level)
        x = time_signal(occupied_bins(x, cfg), cfg, oversample)
    return x


def clf_transmit(
    block: SymbolBlock, clf: ClfConfig, cfg: ChainConfig, oversample: int | None = None
) -> SymbolBlock:
    """Clip-and-filter one extended block (flat taps implied)."""
    if block.stage is not Stage.EXTENDED:
        raise ValueError(f"expected EXTENDED block, got {block.stage.name}")
    if len(block) != cfg.n_sk:
        raise ValueError(f"block length {len(block)} != n_sk {cfg.n_sk}")
    return SymbolBlock(Stage.TIME_DOMAIN, clf_reduce(block.values, clf, cfg, oversample))


# ---------------------------------------------------------------------------
# Selective mapping
# ---------------------------------------------------------------------------

def slm_phase_vectors(slm: SlmConfig, n_data: int) -> np.ndarray:
    """(U, n_data) candidate phase vectors; row 0 is the identity."""
    phases = np.ones((slm.num_candidates, n_data), dtype=np.complex128)
    rng = np.random.default_rng((slm.seed, 5))
    for u in range(1, slm.num_candidates):
        phases[u] = SLM_ALPHABET[rng.integers(0, len(SLM_ALPHABET), n_data)]
    return phases


def slm_select(
    spectrum: np.ndarray,
    phases: np.ndarray,
    cfg: ChainConfig,
    oversample: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Pick the minimum-PAPR candidate per block.

    ``spectrum`` is (..., n_data) frequency-domain symbols; returns the chosen
    time signals and candidate indices (first minimum on ties).
    """
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    single = spectrum.ndim == 1
    spec2 = spectrum.reshape(-1, spectrum.shape[-1])
    candidates = spec2[:, None, :] * phases[None, :, :]  # (B, U, n_data)
    x = time_signal(extend(candidates, cfg.n_se), cfg, oversample)
    paprs = papr_db(x)  # (B, U)
    idx = np.argmin(paprs, axis=-1)
    chosen = x[np.arange(spec2.shape[0]), idx]
    if single:
        return chosen[0], idx[0]
    return chosen, idx


def slm_transmit(
    block: SymbolBlock, slm: SlmConfig, cfg: ChainConfig, oversample: int | None = None
) -> tuple[SymbolBlock, int]:
    """SLM for one frequency-domain block; returns (time signal, chosen index)."""
    if block.stage is not Stage.FREQ_DOMAIN:
        raise ValueError(f"expected FREQ_DOMAIN block, got {block.stage.name}")
    if len(block) != cfg.n_data:
        raise ValueError(f"block length {len(block)} != n_data {cfg.n_data}")
    phases = slm_phase_vectors(slm, cfg.n_data)
    chosen, idx = slm_select(block.values, phases, cfg, oversample)
    return SymbolBlock(Stage.TIME_DOMAIN, chosen), int(idx)


# ---------------------------------------------------------------------------
# Static RRC transmit filter (truncated time-domain FIR)
# ---------------------------------------------------------------------------

def rrc_fir(n_taps: int = 32, rolloff: float = 0.25, sps: int = 4) -> np.ndarray:
    """Unit-energy root-raised-cosine impulse response truncated to n_taps."""
    if n_taps < 1:
        raise ValueError(f"n_taps must be positive, got {n_taps}")
    if not 0.0 < rolloff <= 1.0:
        raise ValueError(f"rolloff must be in (0, 1], got {rolloff}")
    t = (np.arange(n_taps) - (n_taps - 1) / 2.0) / sps
    h = np.empty(n_taps)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            h[i] = 1.0 + rolloff * (4.0 / np.pi - 1.0)
        elif abs(abs(4.0 * rolloff * ti) - 1.0) < 1e-9:
            h[i] = (rolloff / np.sqrt(2.0)) * (
                (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * rolloff))
                + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * rolloff))
            )
        else:
            num = np.sin(np.pi * ti * (1.0 - rolloff)) + 4.0 * rolloff * ti * np.cos(
                np.pi * ti * (1.0 + rolloff)
            )
            den = np.pi * ti * (1.0 - (4.0 * rolloff * ti) ** 2)
            h[i] = num / den
    return h / np.sqrt(np.sum(h**2))


def fir_bin_gains(
    fir: np.ndarray, cfg: ChainConfig, oversample: int | None = None
) -> np.ndarray:
    """Complex occupied-bin gains of circularly convolving the FIR on the grid.

    Circular convolution on the transmit grid is exactly a per-bin complex
    multiplication, so the filtered baseline can reuse the shaping/equalizing
    machinery with these gains as (complex) taps.
    """
    n = cfg.n_fft * (cfg.oversample if oversample is None else oversample)
    response = np.fft.fft(fir, n)
    return np.fft.fftshift(response)[occupied_slice(cfg, n // cfg.n_fft)]
