"""Estimators for the reduced-rank equalizer.

Three routes to the same exponentially weighted least-squares design:

* a batch path (:class:`BatchLsWorkspace` plus the closed-form design
  functions) that keeps the uninverted statistics and solves directly;
* the recursive path (:func:`adapt_step` and friends) that propagates
  the inverses with rank-one matrix-inversion-lemma updates, one cycle
  per symbol: transform update, re-projection, weight update, optional
  model-order selection;
* a conventional full-rank RLS baseline on the unprojected input.

The recursive updates broadcast over leading batch axes so a bank of
independent streams (or subcarriers) advances in one call.  Every
inverse is re-symmetrized after each lemma update to bound drift; the
lemma is exact in exact arithmetic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .channel import MimoDims
from .equalizer import EqualizerState

__all__ = [
    "AdaptationError",
    "RankPolicy",
    "RlsState",
    "FullRankRlsState",
    "BatchLsWorkspace",
    "make_equalizer_state",
    "make_full_rank_state",
    "batch_design_s",
    "batch_design_w",
    "evaluate_ses",
    "alternate",
    "rls_update_s",
    "rls_update_w",
    "adapt_step",
    "full_rank_rls_step",
    "select_rank",
    "StepDiagnostics",
]

_STRICT_COND_LIMIT = 1e12


class AdaptationError(RuntimeError):
    """Raised when an estimator update or design becomes unusable."""


@dataclass(frozen=True)
class RankPolicy:
    """Model-order policy: a fixed rank, or automatic selection in a band."""

    kind: str
    d: int | None = None
    d_min: int | None = None
    d_max: int | None = None

    @classmethod
    def fixed(cls, d: int) -> "RankPolicy":
        if d < 1:
            raise ValueError("rank must be >= 1")
        return cls(kind="fixed", d=d)

    @classmethod
    def auto(cls, d_min: int, d_max: int) -> "RankPolicy":
        if not 1 <= d_min <= d_max:
            raise ValueError(f"need 1 <= d_min <= d_max, got ({d_min}, {d_max})")
        return cls(kind="auto", d_min=d_min, d_max=d_max)

    @property
    def is_auto(self) -> bool:
        return self.kind == "auto"

    @property
    def width(self) -> int:
        """Stored filter width: the fixed rank, or the selection maximum."""
        return self.d_max if self.is_auto else self.d

    def describe(self) -> str:
        if self.is_auto:
            return f"auto({self.d_min},{self.d_max})"
        return f"fixed({self.d})"


@dataclass
class RlsState:
    """Recursive auxiliaries of one reduced-rank equalizer.

    ``inv_cov`` tracks the inverse of the exponentially weighted input
    covariance, ``inv_weight_cov`` the inverse of the weight-history
    accumulator, and ``inv_reduced_cov`` the inverse of the reduced
    (projected) covariance.  ``rank_costs`` holds the recursive
    model-order cost per candidate rank when selection is active.
    """

    inv_cov: np.ndarray
    inv_weight_cov: np.ndarray
    inv_reduced_cov: np.ndarray
    lam: float
    delta: float
    policy: RankPolicy
    rank_costs: np.ndarray | None = None
    ses_acc: np.ndarray | float = 0.0
    n_eff: float = 0.0

    @property
    def ses_rate(self) -> np.ndarray | float:
        """Exponentially weighted mean squared a-priori error."""
        if self.n_eff == 0:
            return np.zeros_like(np.real(self.ses_acc))
        return np.real(self.ses_acc) / self.n_eff


@dataclass
class FullRankRlsState:
    """Conventional RLS state: full-length weights and inverse covariance."""

    inv_cov: np.ndarray
    weights: np.ndarray
    lam: float
    delta: float
    ses_acc: np.ndarray | float = 0.0
    n_eff: float = 0.0

    @property
    def m(self) -> int:
        return self.weights.shape[-1]

    @property
    def rank(self) -> int:
        return self.m

    def composite_filter(self) -> np.ndarray:
        return self.weights

    def output(self, r: np.ndarray) -> np.ndarray:
        return np.einsum("...m,...m->...", self.weights.conj(), r)

    @property
    def ses_rate(self):
        if self.n_eff == 0:
            return np.zeros_like(np.real(self.ses_acc))
        return np.real(self.ses_acc) / self.n_eff


class StepDiagnostics(NamedTuple):
    error: np.ndarray      # a-priori error at the stored filter width
    rank: int | np.ndarray


def _eye(n: int, batch_shape: tuple, scale: float) -> np.ndarray:
    out = np.zeros(batch_shape + (n, n), dtype=np.complex128)
    out[...] = scale * np.eye(n)
    return out


def make_equalizer_state(
    dims: MimoDims,
    policy: RankPolicy,
    lam: float = 0.998,
    delta: float = 0.01,
    batch_shape: tuple = (),
    stream_id: int | None = None,
    random_init: bool = False,
    rng: np.random.Generator | None = None,
) -> EqualizerState:
    """Initialize a reduced-rank equalizer state (optionally a bank).

    The standard start is weights ``[1, 0, ..., 0]`` and a transform
    equal to the identity embedded over the zero matrix.  With
    ``random_init`` the transform is drawn complex Gaussian instead
    (never the null matrix), used by initialization-sensitivity studies.
    """
    if not 0 < lam <= 1:
        raise ValueError(f"forgetting factor must satisfy 0 < lam <= 1, got {lam}")
    if delta <= 0:
        raise ValueError("regularization seed delta must be > 0")
    m = dims.m
    width = policy.width
    if not 1 <= width <= m:
        raise ValueError(f"filter width {width} outside [1, {m}]")
    if policy.is_auto and policy.d_min > m:
        raise ValueError("d_min exceeds the stacked input length")

    transform = np.zeros(batch_shape + (m, width), dtype=np.complex128)
    if random_init:
        if rng is None:
            rng = np.random.default_rng()
        transform[:] = (
            rng.standard_normal(transform.shape)
            + 1j * rng.standard_normal(transform.shape)
        ) / np.sqrt(2.0 * m)
    else:
        transform[..., :width, :] = np.eye(width)
    weights = np.zeros(batch_shape + (width,), dtype=np.complex128)
    weights[..., 0] = 1.0

    n_cand = (policy.d_max - policy.d_min + 1) if policy.is_auto else 0
    aux = RlsState(
        inv_cov=_eye(m, batch_shape, 1.0 / delta),
        inv_weight_cov=_eye(width, batch_shape, 1.0 / delta),
        inv_reduced_cov=_eye(width, batch_shape, 1.0 / delta),
        lam=lam,
        delta=delta,
        policy=policy,
        rank_costs=np.zeros(batch_shape + (n_cand,)) if policy.is_auto else None,
    )
    rank = policy.d_max if policy.is_auto else policy.d
    return EqualizerState(
        transform=transform,
        weights=weights,
        rank=rank,
        dims=dims,
        stream_id=stream_id,
        aux=aux,
    )


def make_full_rank_state(
    m: int,
    lam: float = 0.998,
    delta: float = 0.01,
    batch_shape: tuple = (),
) -> FullRankRlsState:
    """Initialize the conventional RLS baseline with zero weights."""
    if not 0 < lam <= 1:
        raise ValueError(f"forgetting factor must satisfy 0 < lam <= 1, got {lam}")
    if delta <= 0:
        raise ValueError("regularization seed delta must be > 0")
    return FullRankRlsState(
        inv_cov=_eye(m, batch_shape, 1.0 / delta),
        weights=np.zeros(batch_shape + (m,), dtype=np.complex128),
        lam=lam,
        delta=delta,
    )


# ---------------------------------------------------------------------------
# rank-one inverse propagation
# ---------------------------------------------------------------------------


def _gain(inv: np.ndarray, vec: np.ndarray, lam: float):
    """Gain ``inv@vec / (lam + vec^H inv vec)`` plus the raw product."""
    g = np.einsum("...ij,...j->...i", inv, vec)
    denom = lam + np.real(np.einsum("...i,...i->...", vec.conj(), g))
    return g / denom[..., None], g


def _lemma_update(inv: np.ndarray, gain: np.ndarray, g: np.ndarray, lam: float):
    """Inversion-lemma downdate with Hermitian re-symmetrization."""
    upd = (inv - np.einsum("...i,...j->...ij", gain, g.conj())) / lam
    return 0.5 * (upd + np.swapaxes(upd.conj(), -1, -2))


def rls_update_s(
    aux: RlsState, state: EqualizerState, r: np.ndarray, x_ref: np.ndarray
) -> np.ndarray:
    """One recursive update of the transformation matrix.

    Computes the input-side Kalman gain, propagates the inverse input
    covariance, absorbs the previous weights into the weight-history
    inverse (producing the weight-side gain), and applies the rank-one
    transform correction driven by the reference symbol.
    """
    lam = aux.lam
    x_ref = np.asarray(x_ref)
    k, g_cov = _gain(aux.inv_cov, r, lam)
    aux.inv_cov = _lemma_update(aux.inv_cov, k, g_cov, lam)

    w = state.weights
    t, g_w = _gain(aux.inv_weight_cov, w, lam)
    aux.inv_weight_cov = _lemma_update(aux.inv_weight_cov, t, g_w, lam)

    row = x_ref.conj()[..., None] * t.conj() - np.einsum(
        "...m,...md->...d", r.conj(), state.transform
    )
    state.transform = state.transform + np.einsum("...m,...d->...md", k, row)
    return state.transform


def rls_update_w(
    aux: RlsState, state: EqualizerState, r_bar: np.ndarray, x_ref: np.ndarray
) -> np.ndarray:
    """One recursive update of the reduced-rank weights.

    ``r_bar`` must be the projection through the freshly updated
    transform (one cycle per instant).  Returns the a-priori error.
    """
    lam = aux.lam
    x_ref = np.asarray(x_ref)
    k_bar, g_phi = _gain(aux.inv_reduced_cov, r_bar, lam)
    xi = x_ref - np.einsum("...d,...d->...", state.weights.conj(), r_bar)
    state.weights = state.weights + k_bar * xi.conj()[..., None]
    aux.inv_reduced_cov = _lemma_update(aux.inv_reduced_cov, k_bar, g_phi, lam)
    if not np.all(np.isfinite(xi)):
        raise AdaptationError("non-finite a-priori error: adaptation diverged")
    return xi


def select_rank(rank_costs: np.ndarray, d_min: int):
    """Cost-minimizing model order; ties resolve to the smallest rank."""
    idx = np.argmin(rank_costs, axis=-1)
    out = d_min + idx
    return int(out) if np.ndim(out) == 0 else out


def adapt_step(state: EqualizerState, r: np.ndarray, x_ref) -> StepDiagnostics:
    """One full adaptation cycle for one instant.

    Updates the transform, re-projects the input, updates the weights,
    and (under an automatic rank policy) refreshes the per-candidate
    cost recursion and re-selects the operating rank.  Newly selected
    ranks take effect from the next instant's output.
    """
    aux: RlsState = state.aux
    if aux is None:
        raise AdaptationError("state carries no recursive auxiliaries")
    x_ref = np.asarray(x_ref)
    rls_update_s(aux, state, r, x_ref)
    r_bar = np.einsum("...md,...m->...d", state.transform.conj(), r)
    xi = rls_update_w(aux, state, r_bar, x_ref)
    aux.ses_acc = aux.lam * aux.ses_acc + np.abs(xi) ** 2
    aux.n_eff = aux.lam * aux.n_eff + 1.0

    if aux.policy.is_auto:
        d_lo, d_hi = aux.policy.d_min, aux.policy.d_max
        prods = state.weights.conj() * r_bar
        z_cum = np.cumsum(prods, axis=-1)
        cand = z_cum[..., d_lo - 1 : d_hi]
        err2 = np.abs(x_ref[..., None] - cand) ** 2
        aux.rank_costs = aux.lam * aux.rank_costs + err2
        state.rank = select_rank(aux.rank_costs, d_lo)
    return StepDiagnostics(error=xi, rank=state.rank)


def full_rank_rls_step(
    state: FullRankRlsState, r: np.ndarray, x_ref
) -> np.ndarray:
    """Conventional exponentially weighted RLS step on the raw input."""
    lam = state.lam
    x_ref = np.asarray(x_ref)
    k, g = _gain(state.inv_cov, r, lam)
    xi = x_ref - np.einsum("...m,...m->...", state.weights.conj(), r)
    state.weights = state.weights + k * xi.conj()[..., None]
    state.inv_cov = _lemma_update(state.inv_cov, k, g, lam)
    state.ses_acc = lam * state.ses_acc + np.abs(xi) ** 2
    state.n_eff = lam * state.n_eff + 1.0
    if not np.all(np.isfinite(xi)):
        raise AdaptationError("non-finite a-priori error: adaptation diverged")
    return xi


# ---------------------------------------------------------------------------
# batch path
# ---------------------------------------------------------------------------


class BatchLsWorkspace:
    """Uninverted exponentially weighted statistics of one stream.

    Mirrors the recursive path: samples are pushed together with the
    weights current at push time, so the transform-design numerator and
    the weight-history accumulator blend the weight trajectory exactly
    as the recursion does.  Seeds ``delta*I`` on both covariance
    accumulators decay with the forgetting factor, matching the
    recursive initialization.
    """

    def __init__(self, m: int, width: int, lam: float = 1.0, delta: float = 0.01):
        if not 0 < lam <= 1:
            raise ValueError(f"forgetting factor must satisfy 0 < lam <= 1, got {lam}")
        self.m = m
        self.width = width
        self.lam = lam
        self.delta = delta
        self.cov = delta * np.eye(m, dtype=np.complex128)
        self.cross = np.zeros(m, dtype=np.complex128)
        self.transform_cross = np.zeros((m, width), dtype=np.complex128)
        self.weight_cov = delta * np.eye(width, dtype=np.complex128)
        self.ref_energy = 0.0
        self.count = 0

    def push(self, r: np.ndarray, x: complex, weights: np.ndarray) -> None:
        """Absorb one sample, decaying all accumulators by the forgetting factor."""
        r = np.asarray(r, dtype=np.complex128)
        weights = np.asarray(weights, dtype=np.complex128)
        lam = self.lam
        self.cov = lam * self.cov + np.outer(r, r.conj())
        self.cross = lam * self.cross + np.conj(x) * r
        self.transform_cross = lam * self.transform_cross + np.conj(x) * np.outer(
            r, weights.conj()
        )
        self.weight_cov = lam * self.weight_cov + np.outer(weights, weights.conj())
        self.ref_energy = lam * self.ref_energy + abs(x) ** 2
        self.count += 1

    def reduced_cross(self, transform: np.ndarray) -> np.ndarray:
        """Projected cross-correlation ``transform^H cross``."""
        return transform.conj().T @ self.cross


def batch_design_s(
    ws: BatchLsWorkspace,
    weights_prev: np.ndarray | None = None,
    use_pseudo_inverse: bool = False,
) -> np.ndarray:
    """Closed-form transform design from the workspace statistics.

    The default inverts the regularized weight-history accumulator.
    ``use_pseudo_inverse`` instead builds the rank-one numerator and
    denominator from ``weights_prev`` alone and applies the
    Moore-Penrose pseudo-inverse; this variant is the exact minimum-norm
    minimizer of the weighted cost for fixed weights.
    """
    if use_pseudo_inverse:
        if weights_prev is None:
            raise ValueError("pseudo-inverse design needs the previous weights")
        w = np.asarray(weights_prev, dtype=np.complex128)
        numer = np.outer(ws.cross, w.conj())
        denom = np.linalg.pinv(np.outer(w, w.conj()))
    else:
        numer = ws.transform_cross
        denom = np.linalg.inv(ws.weight_cov)
    try:
        transform = np.linalg.solve(ws.cov, numer) @ denom
    except np.linalg.LinAlgError as exc:  # unreachable with delta > 0
        raise AdaptationError(f"sample covariance singular: {exc}") from exc
    if not transform.any():
        warnings.warn("designed transform is identically zero", RuntimeWarning)
    return transform


def batch_design_w(
    ws: BatchLsWorkspace, transform: np.ndarray, min_norm: bool = False
) -> np.ndarray:
    """Closed-form reduced-rank weights for a given transform.

    Solves the projected normal equations.  The strict path rejects a
    rank-deficient (badly conditioned) reduced covariance;
    ``min_norm`` switches to the pseudo-inverse solution, which is the
    exact cost minimizer even when the transform loses rank.
    """
    reduced_cov = transform.conj().T @ ws.cov @ transform
    rhs = ws.reduced_cross(transform)
    if min_norm:
        return np.linalg.pinv(reduced_cov) @ rhs
    if np.linalg.cond(reduced_cov) > _STRICT_COND_LIMIT:
        raise AdaptationError(
            "reduced covariance is singular (rank-deficient transform)"
        )
    return np.linalg.solve(reduced_cov, rhs)


def evaluate_ses(
    ws: BatchLsWorkspace, transform: np.ndarray, weights: np.ndarray
) -> float:
    """Weighted sum of squared errors at the given estimates.

    Evaluates ``ref_energy - 2 Re(u^H cross) + u^H cov u`` with the
    composite filter ``u = transform @ weights``; equals the weighted
    cost on the pushed data up to the decayed ``delta`` seed term.
    """
    u = transform @ weights
    quad = np.real(np.vdot(u, ws.cov @ u))
    lin = 2.0 * np.real(np.vdot(u, ws.cross))
    return float(np.real(ws.ref_energy) - lin + quad)


def alternate(
    ws: BatchLsWorkspace,
    transform0: np.ndarray,
    weights0: np.ndarray,
    n_sweeps: int,
):
    """Alternate exact minimizing half-steps on a fixed workspace.

    Each sweep fixes the weights and takes the minimum-norm cost
    minimizer over transforms (the pseudo-inverse design), then fixes
    the transform and takes the least-squares weights.  Because both
    half-steps are exact minimizers, the returned cost trace is
    non-increasing; it reaches the unconstrained weighted-LS optimum
    after the first sweep and stays there.

    Returns ``(transform, weights, trace)`` with ``trace[0]`` the cost
    of the inputs and one entry per sweep after it.
    """
    weights = np.asarray(weights0, dtype=np.complex128)
    transform = np.asarray(transform0, dtype=np.complex128)
    if not weights.any():
        raise AdaptationError("initial weights must not be the zero vector")
    trace = [evaluate_ses(ws, transform, weights)]
    for _ in range(n_sweeps):
        transform = batch_design_s(ws, weights_prev=weights, use_pseudo_inverse=True)
        if not transform.any():
            raise AdaptationError(
                "transform collapsed to zero (zero cross-correlation data)"
            )
        weights = batch_design_w(ws, transform, min_norm=True)
        trace.append(evaluate_ses(ws, transform, weights))
    return transform, weights, np.asarray(trace)
