"""PAPR, CCDF, tail functionals, error metrics, and spectral leakage.

The tail functional integrates the empirical CCDF of per-block PAPR above a
threshold; by the hinge identity this equals E[max(0, min(PAPR, upper) - x0)]
up to the integration grid, which the tests use as an independent cross-check.
Training uses a differentiable softplus surrogate of the same quantity;
reported metrics always use the true empirical tail.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import ChainConfig, SymbolBlock

TAIL_X0_DB = 6.0
TAIL_UPPER_DB = 20.0
TAIL_GRID_DB = 0.1


def _values(signal) -> np.ndarray:
    if isinstance(signal, SymbolBlock):
        return signal.values
    return np.asarray(signal)


def papr_db(signal) -> float | np.ndarray:
    """Peak-to-average power ratio 10*log10(max|s|^2 / mean|s|^2) in dB.

    Accepts a SymbolBlock or an ndarray; with leading batch dimensions one
    PAPR per block is returned.
    """
    x = _values(signal)
    p = np.abs(x) ** 2
    peak = p.max(axis=-1)
    mean = p.mean(axis=-1)
    if np.any(mean == 0.0):
        raise ValueError("PAPR undefined for an all-zero signal")
    out = 10.0 * np.log10(peak / mean)
    return float(out) if np.ndim(out) == 0 else out


def empirical_ccdf(samples: np.ndarray, grid_db: np.ndarray) -> np.ndarray:
    """Pr(PAPR > x) per threshold: fraction of samples strictly greater."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if samples.size == 0:
        raise ValueError("need at least one PAPR sample")
    grid_db = np.asarray(grid_db, dtype=np.float64)
    sorted_s = np.sort(samples)
    exceed = samples.size - np.searchsorted(sorted_s, grid_db, side="right")
    return exceed / samples.size


def papr_at_ccdf(samples: np.ndarray, prob: float) -> float:
    """PAPR threshold exceeded with probability ~prob (the (1-prob) quantile)."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if samples.size == 0:
        raise ValueError("need at least one PAPR sample")
    if not 0.0 < prob < 1.0:
        raise ValueError(f"prob must be in (0, 1), got {prob}")
    return float(np.quantile(samples, 1.0 - prob))


def tail_p(
    samples: np.ndarray,
    x0_db: float = TAIL_X0_DB,
    upper_db: float = TAIL_UPPER_DB,
    grid_step_db: float = TAIL_GRID_DB,
) -> float:
    """Trapezoidal integral of the empirical CCDF from x0_db to upper_db."""
    if upper_db <= x0_db:
        raise ValueError(f"upper_db={upper_db} must exceed x0_db={x0_db}")
    n_steps = int(np.ceil((upper_db - x0_db) / grid_step_db))
    grid = x0_db + grid_step_db * np.arange(n_steps + 1)
    grid[-1] = upper_db
    ccdf = empirical_ccdf(samples, grid)
    return float(np.trapezoid(ccdf, grid))


def surrogate_p(
    papr_db_batch: np.ndarray,
    x0_db: float = TAIL_X0_DB,
    sharpness: float = 4.0,
) -> tuple[float, np.ndarray]:
    """Differentiable tail surrogate: mean softplus over the batch.

    Returns (value, gradient w.r.t. each block's PAPR).  softplus_b(z) =
    log(1 + exp(b*z))/b approaches max(0, z) as the sharpness b grows, so the
    batch mean approximates E[max(0, PAPR - x0)], the hinge form of the
    CCDF-tail integral.
    """
    if sharpness <= 0.0:
        raise ValueError(f"sharpness must be positive, got {sharpness}")
    z = np.asarray(papr_db_batch, dtype=np.float64) - x0_db
    soft = np.maximum(z, 0.0) + np.log1p(np.exp(-sharpness * np.abs(z))) / sharpness
    grad = 1.0 / (1.0 + np.exp(-sharpness * z)) / z.size
    return float(np.mean(soft)), grad


def mse_e(tx_symbols: np.ndarray, rx_equalized: np.ndarray) -> float:
    """Mean squared error between transmitted and equalized symbols."""
    tx = _values(tx_symbols)
    rx = _values(rx_equalized)
    if tx.shape != rx.shape:
        raise ValueError(f"length mismatch: {tx.shape} vs {rx.shape}")
    return float(np.mean(np.abs(tx - rx) ** 2))


def measured_ser(tx_symbols: np.ndarray, detected: np.ndarray) -> tuple[float, int, int]:
    """Symbol error ratio from hard decisions: (ser, errors, total)."""
    tx = _values(tx_symbols)
    det = _values(detected)
    if tx.shape != det.shape:
        raise ValueError(f"length mismatch: {tx.shape} vs {det.shape}")
    errors = int(np.count_nonzero(tx != det))
    total = int(tx.size)
    return errors / total, errors, total


def total_loss(mse: float, tail: float, lam: float) -> float:
    """Composite objective: symbol-error proxy plus lambda-weighted PAPR tail."""
    if lam < 0.0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    return mse + lam * tail


def oobe_db(blocks: np.ndarray, cfg: ChainConfig, pad_factor: int = 4) -> float:
    """Out-of-band emission from a Hann-windowed averaged periodogram, in dB.

    Each block is one Welch segment: windowed, zero-padded by ``pad_factor``
    so leakage between subcarrier bins is resolved, and averaged.  OOBE is
    mean out-of-band PSD over mean in-band PSD.  A block-boundary--free tone
    still leaks through the window's sidelobes, which sets the measurement
    floor (well below -40 dB for the Hann window at this grid size).
    """
    blocks = np.atleast_2d(np.asarray(blocks, dtype=np.complex128))
    if blocks.shape[0] < 10:
        raise ValueError(f"need at least 10 blocks for a stable PSD, got {blocks.shape[0]}")
    n = blocks.shape[-1]
    if n % cfg.n_fft != 0:
        raise ValueError(f"block length {n} not a multiple of n_fft={cfg.n_fft}")
    window = np.hanning(n)
    spec = np.fft.fft(blocks * window, n=n * pad_factor, axis=-1)
    psd = np.mean(np.abs(spec) ** 2, axis=0)
    psd = np.fft.fftshift(psd)
    # occupied band at padded resolution: n_sk original bins, pad_factor each
    center = n * pad_factor // 2
    half = cfg.n_sk * pad_factor // 2
    in_band = np.zeros(n * pad_factor, dtype=bool)
    in_band[center - half : center - half + cfg.n_sk * pad_factor] = True
    mean_in = float(np.mean(psd[in_band]))
    mean_out = float(np.mean(psd[~in_band]))
    if mean_in == 0.0:
        raise ValueError("no in-band power")
    return 10.0 * np.log10(mean_out / mean_in) if mean_out > 0.0 else -np.inf


@dataclass
class RunMetrics:
    """Aggregated per-run results for one evaluation cell."""

    papr_db_samples: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ccdf_grid_db: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ccdf: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tail_p: float = 0.0
    mse_e: float = 0.0
    ser: float = 0.0
    ser_errors: int = 0
    ser_total: int = 0
    loss: float = 0.0
    oobe_db: float = float("-inf")

    def validate(self) -> None:
        if self.ccdf.size:
            if np.any(np.diff(self.ccdf) > 1e-12):
                raise ValueError("CCDF must be non-increasing in the threshold")
            if self.ccdf.min() < 0.0 or self.ccdf.max() > 1.0:
                raise ValueError("CCDF values must lie in [0, 1]")
        if not 0.0 <= self.ser <= 1.0:
            raise ValueError("SER outside [0, 1]")
        if self.tail_p < 0.0:
            raise ValueError("tail functional must be non-negative")
