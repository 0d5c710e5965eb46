"""End-to-end DFT-s-OFDM transmit/receive chain with frequency-domain shaping.

Transmit: bits -> Gray-mapped symbols -> DFT precoding (1/sqrt(n_data)) ->
cyclic spectrum extension -> per-bin real shaping taps -> centered subcarrier
mapping on an (oversampled) IDFT grid.  Receive: FFT -> occupied-bin
extraction -> matched filter (taps are real, so F* = F) -> coherent folding of
the extension copies onto their source bins with per-bin gain normalization ->
inverse precoding -> minimum-distance detection.

Subcarrier mapping convention: the n_sk occupied bins are the centered bins of
the DC-centered grid (grid index n//2 is DC), converted to FFT order with
``ifftshift`` before the IDFT.  The IDFT is scaled so that the oversampled
signal interpolates the critically sampled one (``oversample=1`` is the
unitary transform); transmitter and receiver share this mapping bit-exactly.

The array-level functions act on the last axis and accept leading batch
dimensions; the SymbolBlock operations validate stage and length for single
blocks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DETECT_CHUNK = 8192  # symbols per minimum-distance chunk, bounds the distance matrix


class EqualizationError(RuntimeError):
    """Raised when some data bin has zero effective gain (undecodable)."""


class ModScheme(enum.Enum):
    """Gray-coded square constellations with unit average energy."""

    QPSK = 2
    QAM16 = 4
    QAM64 = 6

    @property
    def bits_per_symbol(self) -> int:
        return self.value

    @property
    def order(self) -> int:
        return 2 ** self.value


SCHEME_NAMES = {"qpsk": ModScheme.QPSK, "qam16": ModScheme.QAM16,
                "qam64": ModScheme.QAM64}


class Stage(enum.Enum):
    DATA_SYMBOLS = "data_symbols"
    FREQ_DOMAIN = "freq_domain"
    EXTENDED = "extended"
    SHAPED = "shaped"
    TIME_DOMAIN = "time_domain"
    RECEIVED = "received"
    RECOVERED_FREQ = "recovered_freq"
    MATCHED = "matched"


@dataclass(frozen=True)
class SymbolBlock:
    """One block's complex values tagged with its pipeline stage."""

    stage: Stage
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.ndim != 1:
            raise ValueError(f"block values must be 1-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("block contains non-finite values")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ChainConfig:
    """Subcarrier allocation and grid sizes (defaults follow the 240/210/15 setup)."""

    n_data: int = 210
    n_se: int = 15
    n_fft: int = 256
    oversample: int = 4
    bandwidth_hz: float = 20e6
    scs_hz: float = 30e3

    def __post_init__(self):
        if self.n_data <= 0:
            raise ValueError(f"n_data must be positive, got {self.n_data}")
        if self.n_se < 0 or self.n_se >= self.n_data:
            raise ValueError(f"n_se must satisfy 0 <= n_se < n_data, got {self.n_se}")
        if self.n_fft < self.n_sk:
            raise ValueError(f"n_fft={self.n_fft} smaller than n_sk={self.n_sk}")
        if self.oversample < 1:
            raise ValueError(f"oversample must be >= 1, got {self.oversample}")

    @property
    def n_sk(self) -> int:
        return self.n_data + 2 * self.n_se


# ---------------------------------------------------------------------------
# Constellations
# ---------------------------------------------------------------------------

def _gray_pam(bits: np.ndarray) -> np.ndarray:
    """Map one axis' Gray-labelled bits (sign bit first) to odd PAM levels."""
    s = 1 - 2 * bits.astype(np.int64)
    level = np.ones(bits.shape[:-1], dtype=np.int64)
    scale = 2
    for j in range(s.shape[-1] - 1, 0, -1):
        level = scale - s[..., j] * level
        scale *= 2
    return s[..., 0] * level


@lru_cache(maxsize=None)
def constellation(scheme: ModScheme) -> tuple[np.ndarray, np.ndarray]:
    """Return (points, labels): all 2**bps constellation points and their bit labels."""
    bps = scheme.bits_per_symbol
    m = 2**bps
    idx = np.arange(m)
    labels = ((idx[:, None] >> np.arange(bps - 1, -1, -1)) & 1).astype(np.uint8)
    points = _map_label_bits(labels, scheme)
    points.setflags(write=False)
    labels.setflags(write=False)
    return points, labels


def _map_label_bits(bits2d: np.ndarray, scheme: ModScheme) -> np.ndarray:
    # even bit positions drive the I axis, odd positions the Q axis
    i_amp = _gray_pam(bits2d[..., 0::2])
    q_amp = _gray_pam(bits2d[..., 1::2])
    m_axis = 2 ** (scheme.bits_per_symbol // 2)
    norm = np.sqrt(2.0 * (m_axis**2 - 1) / 3.0)
    return (i_amp + 1j * q_amp) / norm


def map_symbols(bits: np.ndarray, scheme: ModScheme) -> np.ndarray:
    """Gray-map a flat bit vector to unit-average-energy symbols."""
    bits = np.asarray(bits)
    bps = scheme.bits_per_symbol
    if bits.ndim != 1 or bits.size % bps != 0:
        raise ValueError(
            f"bit count {bits.size} not divisible by {bps} ({scheme.name})"
        )
    if bits.size == 0:
        return np.zeros(0, dtype=np.complex128)
    return _map_label_bits(bits.reshape(-1, bps), scheme)


def detect_symbols(received: np.ndarray, scheme: ModScheme) -> np.ndarray:
    """Minimum-Euclidean-distance decision onto the constellation grid."""
    points, _ = constellation(scheme)
    received = np.asarray(received, dtype=np.complex128)
    flat = received.reshape(-1)
    out = np.empty_like(flat)
    for lo in range(0, flat.size, DETECT_CHUNK):
        chunk = flat[lo : lo + DETECT_CHUNK]
        d2 = np.abs(chunk[:, None] - points[None, :]) ** 2
        out[lo : lo + DETECT_CHUNK] = points[np.argmin(d2, axis=1)]
    return out.reshape(received.shape)


# ---------------------------------------------------------------------------
# Array-level chain stages (batch-capable along leading axes)
# ---------------------------------------------------------------------------

def precode(x: np.ndarray) -> np.ndarray:
    """DFT precoding S = DFT(s)/sqrt(n_data); preserves block energy."""
    x = np.asarray(x, dtype=np.complex128)
    return np.fft.fft(x, axis=-1) / np.sqrt(x.shape[-1])

def deprecode(spectrum: np.ndarray) -> np.ndarray:
    """Inverse of :func:`precode` (IDFT scaled by sqrt(n_data))."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    return np.fft.ifft(spectrum, axis=-1) * np.sqrt(spectrum.shape[-1])


def extend(spectrum: np.ndarray, n_se: int) -> np.ndarray:
    """Cyclic spectrum extension: prepend the last n_se bins, append the first n_se."""
    spectrum = np.asarray(spectrum)
    if n_se < 0 or n_se >= spectrum.shape[-1]:
        raise ValueError(f"n_se={n_se} must be < n_data={spectrum.shape[-1]}")
    if n_se == 0:
        return spectrum.copy()
    return np.concatenate(
        [spectrum[..., -n_se:], spectrum, spectrum[..., :n_se]], axis=-1
    )


def fold_extension(values: np.ndarray, n_se: int) -> np.ndarray:
    """Coherently add the 2*n_se extension bins back onto their source bins."""
    values = np.asarray(values)
    n_data = values.shape[-1] - 2 * n_se
    if n_data <= 0:
        raise ValueError("extension larger than block")
    folded = values[..., n_se : n_se + n_data].copy()
    if n_se:
        folded[..., -n_se:] += values[..., :n_se]
        folded[..., :n_se] += values[..., n_se + n_data :]
    return folded


def occupied_slice(cfg: ChainConfig, oversample: int | None = None) -> slice:
    """Positions of the n_sk occupied bins inside the DC-centered grid."""
    n = cfg.n_fft * (cfg.oversample if oversample is None else oversample)
    start = n // 2 - cfg.n_sk // 2
    return slice(start, start + cfg.n_sk)


def time_signal(
    shaped: np.ndarray, cfg: ChainConfig, oversample: int | None = None
) -> np.ndarray:
    """IDFT of the centered occupied bins onto an n_fft*oversample grid.

    Scaling is 1/sqrt(n_fft) relative to the unnormalized IDFT sum, so the
    oversampled waveform interpolates the critical-rate one sample-for-sample
    and the mean time-domain power equals sum(|bins|^2)/n_fft for any
    oversample factor.
    """
    shaped = np.asarray(shaped, dtype=np.complex128)
    if shaped.shape[-1] != cfg.n_sk:
        raise ValueError(f"expected {cfg.n_sk} shaped bins, got {shaped.shape[-1]}")
    ovs = cfg.oversample if oversample is None else oversample
    n = cfg.n_fft * ovs
    centered = np.zeros(shaped.shape[:-1] + (n,), dtype=np.complex128)
    centered[..., occupied_slice(cfg, ovs)] = shaped
    grid = np.fft.ifftshift(centered, axes=-1)
    return np.fft.ifft(grid, axis=-1) * (n / np.sqrt(cfg.n_fft))


def occupied_bins(signal: np.ndarray, cfg: ChainConfig) -> np.ndarray:
    """Recover the n_sk occupied bins from a time-domain grid (inverse mapping)."""
    signal = np.asarray(signal, dtype=np.complex128)
    n = signal.shape[-1]
    if n % cfg.n_fft != 0:
        raise ValueError(f"signal length {n} not a multiple of n_fft={cfg.n_fft}")
    grid = np.fft.fft(signal, axis=-1) * (np.sqrt(cfg.n_fft) / n)
    centered = np.fft.fftshift(grid, axes=-1)
    return centered[..., occupied_slice(cfg, n // cfg.n_fft)]


def equalize(
    rx_bins: np.ndarray,
    taps: np.ndarray,
    n_se: int,
    eps: float = 1e-12,
    phase_derotate: np.ndarray | None = None,
) -> np.ndarray:
    """Matched filter, extension folding and gain normalization, inverse precoding.

    The learned taps are real, so the matched filter F* reduces to plain
    multiplication; complex gains (e.g. a transmit FIR's bin response) are
    handled with the conjugate.  Each data bin is normalized by the summed
    squared gain of its contributing copies (eps-guarded); a bin whose total
    gain is exactly zero is undecodable.
    """
    taps = np.asarray(taps)
    matched = rx_bins * np.conj(taps)
    numer = fold_extension(matched, n_se)
    gain = fold_extension(
        np.broadcast_to(np.abs(taps) ** 2, matched.shape).copy(), n_se
    )
    if np.any(gain == 0.0):
        raise EqualizationError("zero effective gain on at least one data bin")
    recovered = numer / (gain + eps)
    if phase_derotate is not None:
        recovered = recovered * np.conj(phase_derotate)
    return deprecode(recovered)


# ---------------------------------------------------------------------------
# SymbolBlock operations
# ---------------------------------------------------------------------------

def _expect(block: SymbolBlock, stage: Stage, length: int | None = None) -> np.ndarray:
    if block.stage is not stage:
        raise ValueError(f"expected {stage.name} block, got {block.stage.name}")
    if length is not None and len(block) != length:
        raise ValueError(f"expected length {length}, got {len(block)}")
    return block.values


def map_bits(bits: np.ndarray, scheme: ModScheme) -> SymbolBlock:
    return SymbolBlock(Stage.DATA_SYMBOLS, map_symbols(bits, scheme))


def dft_precode(block: SymbolBlock, cfg: ChainConfig) -> SymbolBlock:
    x = _expect(block, Stage.DATA_SYMBOLS, cfg.n_data)
    return SymbolBlock(Stage.FREQ_DOMAIN, precode(x))


def spectrum_extend(block: SymbolBlock, cfg: ChainConfig) -> SymbolBlock:
    x = _expect(block, Stage.FREQ_DOMAIN, cfg.n_data)
    return SymbolBlock(Stage.EXTENDED, extend(x, cfg.n_se))


def apply_filter(block: SymbolBlock, taps: np.ndarray) -> SymbolBlock:
    x = _expect(block, Stage.EXTENDED)
    taps = np.asarray(taps, dtype=np.float64)
    if taps.shape != (len(block),):
        raise ValueError(f"taps shape {taps.shape} does not match block length {len(block)}")
    return SymbolBlock(Stage.SHAPED, x * taps)


def to_time_domain(
    block: SymbolBlock, cfg: ChainConfig, oversample: int | None = None
) -> SymbolBlock:
    x = _expect(block, Stage.SHAPED, cfg.n_sk)
    return SymbolBlock(Stage.TIME_DOMAIN, time_signal(x, cfg, oversample))


def transmit(
    bits: np.ndarray,
    scheme: ModScheme,
    taps: np.ndarray,
    cfg: ChainConfig,
    oversample: int | None = None,
) -> SymbolBlock:
    """Convenience pipeline: bits all the way to the shaped time-domain block."""
    data = map_bits(bits, scheme)
    extended = spectrum_extend(dft_precode(data, cfg), cfg)
    return to_time_domain(apply_filter(extended, taps), cfg, oversample)


def receiver_chain(
    rx: SymbolBlock,
    taps: np.ndarray,
    cfg: ChainConfig,
    scheme: ModScheme,
    fade: complex = 1.0 + 0.0j,
    phase_derotate: np.ndarray | None = None,
    eps: float = 1e-12,
) -> tuple[SymbolBlock, np.ndarray]:
    """Full receiver: FFT, matched filter, extension folding, detection.

    ``fade`` is the known flat fading coefficient (genie-aided compensation);
    ``phase_derotate`` removes known per-bin phase rotations (SLM side
    information) before inverse precoding.  Returns the detected symbol block
    and the raw equalized symbols.
    """
    values = _expect(rx, Stage.RECEIVED)
    if len(rx) % cfg.n_fft != 0:
        raise ValueError(f"received length {len(rx)} not a multiple of n_fft")
    taps = np.asarray(taps)
    if taps.shape != (cfg.n_sk,):
        raise ValueError(f"taps shape {taps.shape}, expected ({cfg.n_sk},)")
    bins = occupied_bins(values / fade, cfg)
    equalized = equalize(bins, taps, cfg.n_se, eps=eps, phase_derotate=phase_derotate)
    detected = detect_symbols(equalized, scheme)
    return SymbolBlock(Stage.DATA_SYMBOLS, detected), equalized
