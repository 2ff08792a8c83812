"""Multipath MIMO channel simulation.

Provides the signal-level ground truth used by the equalizer and the
Monte Carlo harness: QPSK symbol frames, time-varying Rayleigh fading
with the isotropic-scattering (Bessel) autocorrelation, sample-level
convolution through the multipath channel, receive-window stacking, and
the per-subcarrier flat-fading view used by the OFDM experiments.

Conventions
-----------
* ``taps[i, j, k, l]`` is the complex gain from transmit antenna ``j``
  to receive antenna ``k`` on path ``l`` at symbol instant ``i``.
* Receive-window stacks are newest-first per antenna:
  ``[y_1[i], ..., y_1[i-l+1], y_2[i], ...]``.
* The square block-Toeplitz channel matrix follows the convolution
  layout whose block columns hold ``[h_0, ..., h_{l_p-1}, 0, ...]``
  shifted down one row per column.  That operator maps oldest-first
  transmit windows to oldest-first receive windows; flip each length-l
  block to translate to the newest-first stacking above.

All generation is purely functional over explicit RNG seeds, so calls
are reproducible and safe to issue concurrently on disjoint outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "QPSK",
    "VEHICULAR_A_DB",
    "MimoDims",
    "FadingConfig",
    "ChannelRealization",
    "SymbolFrame",
    "vehicular_a_profile",
    "random_frame",
    "bits_to_symbols",
    "symbol_bit_errors",
    "generate_fading",
    "assemble_channel_matrix",
    "full_convolution_matrix",
    "received_samples",
    "stack_received",
    "stack_received_block",
    "stack_transmit_history",
    "ofdm_subcarrier_channels",
]

# Unit-variance QPSK with Gray labelling (bit0 -> real sign, bit1 -> imag
# sign).  Index 0 is the designated winner of exact slicer ties.
QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j], dtype=np.complex128) / np.sqrt(2.0)

# Symbol-spaced relative path powers (dB) of the Vehicular A profile.
VEHICULAR_A_DB = (0.0, -1.0, -9.0, -10.0, -15.0)

# Arrival angles per scatterer ring in the sum-of-sinusoids fading model.
_N_ANGLES = 32


def vehicular_a_profile(n_taps: int = 5) -> np.ndarray:
    """Vehicular A power-delay profile truncated to ``n_taps`` paths.

    Returns linear-scale average path powers normalized to unit total
    power, so generated channels have unit average gain per antenna pair.
    """
    if not 1 <= n_taps <= len(VEHICULAR_A_DB):
        raise ValueError(f"n_taps must be in [1, {len(VEHICULAR_A_DB)}], got {n_taps}")
    p = 10.0 ** (np.asarray(VEHICULAR_A_DB[:n_taps]) / 10.0)
    return p / p.sum()


@dataclass(frozen=True)
class MimoDims:
    """Dimension bundle for one MIMO equalization setup.

    Parameters
    ----------
    n_t, n_r : int
        Transmit / receive antenna counts.
    l_p : int
        Channel paths per antenna pair.
    l : int
        Receive observation window in symbols; must cover the delay
        spread (``l >= l_p``).
    b : int
        Feedback depth in decision instants.  ``b = 0`` gives the pure
        linear (no feedback) stacking.
    """

    n_t: int
    n_r: int
    l_p: int
    l: int
    b: int = 0

    def __post_init__(self):
        for name in ("n_t", "n_r", "l_p", "l"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.b < 0:
            raise ValueError(f"b must be >= 0, got {self.b}")
        if self.l < self.l_p:
            raise ValueError(
                f"observation window l={self.l} shorter than delay spread l_p={self.l_p}"
            )

    @property
    def m(self) -> int:
        """Stacked input length ``l*n_r + b*(n_t-1)``."""
        return self.l * self.n_r + self.b * (self.n_t - 1)

    @property
    def n_feedback(self) -> int:
        return self.b * (self.n_t - 1)


@dataclass(frozen=True)
class FadingConfig:
    """Fading process description.

    ``fd_t`` is the normalized Doppler rate in cycles per symbol
    (``0`` freezes the channel for the whole frame).  ``profile`` holds
    linear-scale average path powers, one entry per channel path.
    """

    fd_t: float
    profile: tuple
    rng_seed: int = 0

    def __post_init__(self):
        if self.fd_t < 0:
            raise ValueError(f"fd_t must be >= 0, got {self.fd_t}")
        p = np.asarray(self.profile, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("profile must be a non-empty 1-D power sequence")
        if np.any(p < 0) or not np.isfinite(p.sum()) or p.sum() <= 0:
            raise ValueError("profile powers must be non-negative with positive sum")


@dataclass
class ChannelRealization:
    """Per-instant path gains for every antenna pair.

    ``taps`` has shape ``(n_symbols, n_t, n_r, l_p)``.
    """

    taps: np.ndarray
    dims: MimoDims

    @property
    def n_symbols(self) -> int:
        return self.taps.shape[0]


@dataclass
class SymbolFrame:
    """Transmitted symbol block, one row per stream.

    ``symbols`` has shape ``(n_t, n_symbols)`` and every entry is an
    exact constellation point.
    """

    symbols: np.ndarray
    constellation: str = "qpsk"

    @property
    def n_symbols(self) -> int:
        return self.symbols.shape[1]


def bits_to_symbols(bits: np.ndarray) -> np.ndarray:
    """Gray-map bit pairs to QPSK symbols.

    ``bits`` has shape ``(..., 2*n)``; pairs ``(b0, b1)`` select the real
    and imaginary signs respectively.
    """
    b = np.asarray(bits)
    if b.shape[-1] % 2:
        raise ValueError("bit count must be even for QPSK")
    b0 = b[..., 0::2]
    b1 = b[..., 1::2]
    return ((1 - 2 * b0) + 1j * (1 - 2 * b1)) / np.sqrt(2.0)


def symbol_bit_errors(decided: np.ndarray, sent: np.ndarray) -> np.ndarray:
    """Per-entry Gray-demapped bit errors (0, 1 or 2) between QPSK symbols."""
    re_err = (np.real(decided) < 0) != (np.real(sent) < 0)
    im_err = (np.imag(decided) < 0) != (np.imag(sent) < 0)
    return re_err.astype(np.int64) + im_err.astype(np.int64)


def random_frame(dims: MimoDims, n_symbols: int, rng: np.random.Generator) -> SymbolFrame:
    """Draw an i.i.d. unit-variance QPSK frame for all streams."""
    bits = rng.integers(0, 2, size=(dims.n_t, 2 * n_symbols))
    return SymbolFrame(symbols=bits_to_symbols(bits))


def generate_fading(
    config: FadingConfig, dims: MimoDims, n_symbols: int
) -> ChannelRealization:
    """Generate time-varying Rayleigh path gains for every antenna pair.

    Each path gain is a sum of ``32`` equal-power complex sinusoids with
    equally spaced arrival angles (randomly rotated per path so Doppler
    frequencies never coincide) and i.i.d. random phases.  The resulting
    process has average power equal to the profile entry and
    autocorrelation approaching ``J0(2*pi*fd_t*lag)``; ``fd_t = 0``
    degenerates to a constant draw per path.

    Parameters
    ----------
    config : FadingConfig
        Doppler rate, path powers (length must equal ``dims.l_p``) and seed.
    dims : MimoDims
        Antenna/path geometry.
    n_symbols : int
        Frame length; must be >= 1.
    """
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    profile = np.asarray(config.profile, dtype=float)
    if profile.size != dims.l_p:
        raise ValueError(
            f"profile has {profile.size} entries but dims.l_p = {dims.l_p}"
        )
    rng = np.random.default_rng(config.rng_seed)
    n_proc = dims.n_t * dims.n_r * dims.l_p

    # Random rotation per process keeps the 32 Doppler frequencies distinct,
    # otherwise mirrored angles alias onto identical frequencies.
    offsets = rng.uniform(size=(n_proc, 1))
    angles = 2 * np.pi * (np.arange(_N_ANGLES) + offsets) / _N_ANGLES
    omega = 2 * np.pi * config.fd_t * np.cos(angles)
    phases = rng.uniform(0.0, 2 * np.pi, size=(n_proc, _N_ANGLES))
    amp = np.exp(1j * phases) / np.sqrt(_N_ANGLES)

    gains = np.zeros((n_proc, n_symbols), dtype=np.complex128)
    if config.fd_t == 0.0:
        gains[:] = amp.sum(axis=1, keepdims=True)
    else:
        t = np.arange(n_symbols)
        # One sinusoid at a time keeps peak memory at (n_proc, n_symbols).
        for s in range(_N_ANGLES):
            gains += amp[:, s, None] * np.exp(1j * omega[:, s, None] * t)

    taps = gains.reshape(dims.n_t, dims.n_r, dims.l_p, n_symbols)
    taps = taps * np.sqrt(profile)[None, None, :, None]
    return ChannelRealization(taps=np.ascontiguousarray(np.moveaxis(taps, -1, 0)), dims=dims)


def assemble_channel_matrix(realization: ChannelRealization, i: int) -> np.ndarray:
    """Square block-Toeplitz channel matrix at instant ``i``.

    Block ``(k, j)`` is the ``l x l`` Toeplitz matrix whose first column
    is ``[h_{j,k,0}[i], ..., h_{j,k,l_p-1}[i], 0, ...]`` with every later
    column the previous one shifted down a row.  See the module notes on
    orientation: rows/columns are oldest-first within each block and the
    model truncates interference older than the window.
    """
    dims = realization.dims
    if not 0 <= i < realization.n_symbols:
        raise IndexError(f"instant {i} outside frame of {realization.n_symbols}")
    h = realization.taps[i]  # (n_t, n_r, l_p)
    l, l_p = dims.l, dims.l_p
    block = np.zeros((dims.n_t, dims.n_r, l, l), dtype=np.complex128)
    for lag in range(l_p):
        rows = np.arange(lag, l)
        block[:, :, rows, rows - lag] = h[:, :, lag, None]
    # Row blocks run over receive antennas, column blocks over streams.
    out = block.transpose(1, 2, 0, 3).reshape(dims.n_r * l, dims.n_t * l)
    return out


def full_convolution_matrix(realization: ChannelRealization, i: int) -> np.ndarray:
    """Exact convolution operator for static channels, newest-first layout.

    Maps the stacked transmit history ``[x_j[i], ..., x_j[i-l-l_p+2]]``
    (per stream, newest first) to the newest-first receive stack of
    :func:`stack_received`.  Uses the taps at instant ``i`` for every
    row, so it is exact only when the channel is static over the window.
    """
    dims = realization.dims
    h = realization.taps[i]
    l, l_p = dims.l, dims.l_p
    depth = l + l_p - 1
    out = np.zeros((dims.n_r * l, dims.n_t * depth), dtype=np.complex128)
    for d in range(l):  # row block entry y_k[i-d]
        for lag in range(l_p):
            c = d + lag  # transmit delay of the contributing symbol
            for k in range(dims.n_r):
                for j in range(dims.n_t):
                    out[k * l + d, j * depth + c] = h[j, k, lag]
    return out


def received_samples(
    realization: ChannelRealization,
    frame: SymbolFrame,
    noise_var: float,
    rng: np.random.Generator | int | None = None,
) -> np.ndarray:
    """Receive-antenna samples by direct time-varying convolution.

    Computes ``y_k[i] = sum_j sum_l h_{j,k,l}[i] x_j[i-l] + n_k[i]`` with
    symbols at negative indices taken as zero and circular complex
    Gaussian noise of variance ``noise_var`` per sample, independent
    across antennas and time.

    Returns an ``(n_r, n_symbols)`` array.
    """
    if noise_var < 0:
        raise ValueError(f"noise_var must be >= 0, got {noise_var}")
    dims = realization.dims
    x = frame.symbols
    n = x.shape[1]
    if realization.n_symbols < n:
        raise ValueError("channel realization shorter than symbol frame")
    if frame.n_symbols < 1:
        raise ValueError("frame must hold at least one symbol")
    y = np.zeros((dims.n_r, n), dtype=np.complex128)
    for lag in range(dims.l_p):
        # taps at the *receive* instant weight the lag-delayed symbols
        y[:, lag:] += np.einsum(
            "tjk,jt->kt", realization.taps[lag:n, :, :, lag], x[:, : n - lag]
        )
    if noise_var > 0:
        rng = np.random.default_rng(rng)
        scale = np.sqrt(noise_var / 2.0)
        y += scale * (
            rng.standard_normal((dims.n_r, n)) + 1j * rng.standard_normal((dims.n_r, n))
        )
    return y


def stack_received(received: np.ndarray, i: int, dims: MimoDims) -> np.ndarray:
    """Newest-first receive window at instant ``i``.

    Returns ``[y_1[i], ..., y_1[i-l+1], ..., y_nr[i], ..., y_nr[i-l+1]]``
    with zeros for pre-frame indices.
    """
    out = np.zeros((dims.n_r, dims.l), dtype=np.complex128)
    lo = max(0, i - dims.l + 1)
    width = i - lo + 1
    out[:, :width] = received[:, i::-1][:, :width]
    return out.reshape(-1)


def stack_received_block(received: np.ndarray, dims: MimoDims) -> np.ndarray:
    """All receive windows at once; row ``i`` equals ``stack_received(..., i)``."""
    n = received.shape[1]
    out = np.zeros((n, dims.n_r, dims.l), dtype=np.complex128)
    for d in range(dims.l):
        out[d:, :, d] = received[:, : n - d].T
    return out.reshape(n, dims.n_r * dims.l)


def stack_transmit_history(
    symbols: np.ndarray, i: int, depth: int
) -> np.ndarray:
    """Newest-first transmit history stack ``[x_j[i], ..., x_j[i-depth+1]]``.

    Stream-major layout matching :func:`full_convolution_matrix`.
    Pre-frame symbols are zero.
    """
    n_t, n = symbols.shape
    out = np.zeros((n_t, depth), dtype=np.complex128)
    lo = max(0, i - depth + 1)
    width = i - lo + 1
    out[:, :width] = symbols[:, i::-1][:, :width]
    return out.reshape(-1)


def ofdm_subcarrier_channels(
    realization: ChannelRealization, i: int, n_subcarriers: int
) -> np.ndarray:
    """Per-tone frequency response matrices at instant ``i``.

    Tone ``n`` carries the flat model ``r_n = H_n x_n + noise`` with
    ``H_n[k, j] = sum_l h_{j,k,l}[i] exp(-2j*pi*n*l/N)``.  Returns an
    ``(n_subcarriers, n_r, n_t)`` array.
    """
    dims = realization.dims
    if n_subcarriers < dims.l_p:
        raise ValueError(
            f"need n_subcarriers >= l_p, got {n_subcarriers} < {dims.l_p}"
        )
    spec = np.fft.fft(realization.taps[i], n=n_subcarriers, axis=-1)  # (n_t, n_r, N)
    return np.ascontiguousarray(spec.transpose(2, 1, 0))
