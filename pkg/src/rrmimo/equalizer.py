"""Reduced-rank MIMO equalization structure.

Implements the two-stage per-stream equalizer: stacking of the receive
window with fed-back decisions, dimensionality reduction through a tall
transformation matrix, reduced-rank combining, nearest-point decisions,
and the two-pass parallel decision-feedback detector (first pass without
feedback, second pass re-filtering with the first-pass decisions).

All array operations broadcast over leading batch axes, so a single
``EqualizerState`` may hold one stream (arrays shaped ``(m, d)`` /
``(d,)``) or a bank of streams / subcarriers (leading axes prepended).
The per-stream states in a bank never exchange data outside
:func:`detect_block`'s two detection passes.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .channel import QPSK, MimoDims

__all__ = [
    "Mode",
    "EqualizerState",
    "FeedbackBuffer",
    "DetectResult",
    "build_stacked_input",
    "project",
    "equalizer_output",
    "decide",
    "detect_block",
]


class Mode(enum.Enum):
    """Equalizer structure: decision feedback, or linear (feedback zeroed)."""

    DFE = "dfe"
    LINEAR = "linear"


@dataclass
class EqualizerState:
    """Adaptive state of one stream's reduced-rank equalizer.

    Attributes
    ----------
    transform : ndarray, shape (..., m, width)
        Dimensionality-reducing transformation matrix.  For automatic
        model-order selection ``width`` is the maximum allowed order and
        only the leading ``rank`` columns act on the output.
    weights : ndarray, shape (..., width)
        Reduced-rank combining weights.
    rank : int or ndarray
        Operating model order; ``rank == width`` when selection is off.
    aux : object
        Opaque recursive state owned by the adaptation module.
    """

    transform: np.ndarray
    weights: np.ndarray
    rank: int | np.ndarray
    dims: MimoDims | None = None
    stream_id: int | None = None
    aux: object = None

    @property
    def width(self) -> int:
        return self.transform.shape[-1]

    @property
    def m(self) -> int:
        return self.transform.shape[-2]

    def composite_filter(self) -> np.ndarray:
        """Full-length filter ``transform[:, :rank] @ weights[:rank]``.

        The factorization is non-unique; this product is the invariant
        object that comparisons and convergence metrics should use.
        """
        prods = self.transform * self.weights[..., None, :]
        if np.ndim(self.rank) == 0:
            return prods[..., : int(self.rank)].sum(axis=-1)
        csum = np.cumsum(prods, axis=-1)
        idx = (np.asarray(self.rank) - 1)[..., None, None]
        idx = np.broadcast_to(idx, csum.shape[:-1] + (1,))
        return np.take_along_axis(csum, idx, axis=-1)[..., 0]

    def output(self, r: np.ndarray) -> np.ndarray:
        return equalizer_output(self, r)


class DetectResult(NamedTuple):
    """Outcome of one detection instant across all streams."""

    final: np.ndarray       # decisions after feedback cancellation
    first_pass: np.ndarray  # feedback-free initial decisions
    inputs: np.ndarray      # stacked inputs used for the final pass, (n_t, m)
    outputs: np.ndarray     # filter outputs of the final pass, (n_t,)


@dataclass
class FeedbackBuffer:
    """Ring of the last ``b`` decision vectors, newest first.

    ``feedback_for(j)`` flattens the ring into the feedback segment of
    stream ``j``'s stacked input: decision instants newest block first,
    streams in ascending index with stream ``j`` removed.
    """

    dims: MimoDims
    ring: np.ndarray = field(init=False)

    def __post_init__(self):
        self.ring = np.zeros((self.dims.b, self.dims.n_t), dtype=np.complex128)
        # Column picks for "all streams except j", one row per stream.
        n_t = self.dims.n_t
        self._excl = np.array(
            [[c for c in range(n_t) if c != j] for j in range(n_t)], dtype=np.intp
        )

    def reset(self) -> None:
        self.ring[:] = 0.0

    def push(self, decisions: np.ndarray) -> None:
        """Insert the newest decision vector, dropping the oldest."""
        if self.dims.b == 0:
            return
        self.ring[1:] = self.ring[:-1]
        self.ring[0] = decisions

    def replace_newest(self, decisions: np.ndarray) -> None:
        if self.dims.b:
            self.ring[0] = decisions

    def feedback_for(self, stream: int) -> np.ndarray:
        """Feedback segment for one stream, length ``b*(n_t-1)``."""
        if self.dims.b == 0:
            return np.zeros(0, dtype=np.complex128)
        return self.ring[:, self._excl[stream]].reshape(-1)

    def feedback_all(self) -> np.ndarray:
        """Feedback segments for every stream, shape ``(n_t, b*(n_t-1))``."""
        if self.dims.b == 0:
            return np.zeros((self.dims.n_t, 0), dtype=np.complex128)
        picked = self.ring[:, self._excl]          # (b, n_t, n_t-1)
        return picked.transpose(1, 0, 2).reshape(self.dims.n_t, -1)


def build_stacked_input(
    y_stack: np.ndarray, fb: FeedbackBuffer, stream: int, mode: Mode
) -> np.ndarray:
    """Stacked input ``[receive window; feedback segment]`` for one stream.

    Linear mode zeroes the feedback segment; decision-feedback mode
    appends the buffer contents for ``stream`` (which exclude that
    stream's own decisions at every instant).
    """
    dims = fb.dims
    y_stack = np.asarray(y_stack)
    if y_stack.shape[-1] != dims.l * dims.n_r:
        raise ValueError(
            f"receive stack has length {y_stack.shape[-1]}, expected {dims.l * dims.n_r}"
        )
    if mode is Mode.LINEAR:
        tail = np.zeros(dims.n_feedback, dtype=np.complex128)
    else:
        tail = fb.feedback_for(stream)
    return np.concatenate([y_stack, tail])


def project(state: EqualizerState, r: np.ndarray) -> np.ndarray:
    """Reduced vector ``transform^H r`` (full stored width)."""
    if np.all(state.transform == 0):
        warnings.warn("transformation matrix is identically zero", RuntimeWarning)
    return np.einsum("...md,...m->...d", state.transform.conj(), r)


def equalizer_output(state: EqualizerState, r: np.ndarray) -> np.ndarray:
    """Scalar filter output ``weights^H transform^H r`` at the operating rank."""
    prods = state.weights.conj() * np.einsum(
        "...md,...m->...d", state.transform.conj(), r
    )
    rank = state.rank
    if np.ndim(rank) == 0:
        return prods[..., : int(rank)].sum(axis=-1)
    csum = np.cumsum(prods, axis=-1)
    idx = (np.asarray(rank) - 1)[..., None]
    return np.take_along_axis(csum, idx, axis=-1)[..., 0]


def decide(z: np.ndarray, constellation: np.ndarray = QPSK) -> np.ndarray:
    """Nearest constellation point in Euclidean distance.

    Exact ties resolve to the lowest-index point, so decisions are
    deterministic (``argmin`` keeps the first minimum).
    """
    z = np.asarray(z)
    d2 = np.abs(z[..., None] - constellation) ** 2
    return constellation[np.argmin(d2, axis=-1)]


def _bank_output(states, r: np.ndarray) -> np.ndarray:
    # Full-rank baseline states also provide .output(r); see adaptation.
    return states.output(r)


def detect_block(
    states,
    y_stack: np.ndarray,
    fb: FeedbackBuffer,
    mode: Mode = Mode.DFE,
    feedback_symbols: np.ndarray | None = None,
    constellation: np.ndarray = QPSK,
) -> DetectResult:
    """Two-pass parallel detection of all streams at one instant.

    Pass 1 filters ``[y; 0]`` per stream and slices the initial
    decisions.  Pass 2 (decision-feedback mode only) rebuilds each
    stream's input with those decisions plus the buffered history,
    re-filters, and re-slices.  ``feedback_symbols``, when given,
    replaces the first-pass decisions as the current feedback block and
    as the entry the ring keeps for later instants (training with known
    symbols); otherwise the ring keeps the final decisions.

    ``states`` must be a bank with leading stream axis ``n_t``.  The
    buffer is advanced by one instant as a side effect.
    """
    dims = fb.dims
    n_t = dims.n_t
    y_rows = np.broadcast_to(y_stack, (n_t,) + y_stack.shape)
    r1 = np.concatenate(
        [y_rows, np.zeros((n_t, dims.n_feedback), dtype=np.complex128)], axis=-1
    )
    z1 = _bank_output(states, r1)
    x1 = decide(z1, constellation)

    if mode is Mode.LINEAR or dims.b == 0:
        return DetectResult(final=x1, first_pass=x1, inputs=r1, outputs=z1)

    fb.push(feedback_symbols if feedback_symbols is not None else x1)
    r2 = np.concatenate([y_rows, fb.feedback_all()], axis=-1)
    z2 = _bank_output(states, r2)
    x2 = decide(z2, constellation)
    fb.replace_newest(feedback_symbols if feedback_symbols is not None else x2)
    return DetectResult(final=x2, first_pass=x1, inputs=r2, outputs=z2)
