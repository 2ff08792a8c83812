"""Ground-truth oracles and meters.

The eigen-decomposition reduced-rank Wiener filter serves as the
convergence oracle for the adaptive estimators; the operation counters
evaluate the closed-form arithmetic-cost polynomials and mirror the
arithmetic of the implemented update path for measured-versus-analytic
comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "WienerOracle",
    "ConvergenceReport",
    "ComplexityReport",
    "wiener_reduced_rank",
    "convergence_metric",
    "count_operations",
    "measured_step_counts",
    "measured_vs_analytic",
    "TABLE_ALGORITHMS",
    "SELECTION_ALGORITHMS",
]


@dataclass
class WienerOracle:
    """Optimal reduced-rank filter for known second-order statistics.

    ``subspace`` spans the retained dominant eigen-directions of the
    covariance (orthonormal columns, eigenvalues descending), ``w_opt``
    is the optimal filter constrained to that span, and ``mmse`` its
    achieved mean squared error.
    """

    cov: np.ndarray
    cross: np.ndarray
    rank: int
    w_opt: np.ndarray
    subspace: np.ndarray
    eigenvalues: np.ndarray
    mmse: float
    sigma2_x: float = 1.0

    def inv_sqrt(self) -> np.ndarray:
        """Inverse matrix square root of the covariance (full EVD)."""
        vecs = self._vecs
        return (vecs / np.sqrt(self.eigenvalues)) @ vecs.conj().T

    _vecs: np.ndarray = field(default=None, repr=False)


def wiener_reduced_rank(
    cov: np.ndarray, cross: np.ndarray, rank: int, sigma2_x: float = 1.0
) -> WienerOracle:
    """Reduced-rank Wiener filter via eigen-decomposition.

    Keeps the ``rank`` dominant eigen-directions of the Hermitian
    positive-definite covariance and combines them with the
    cross-correlation: ``w = V diag(1/lambda) V^H cross`` over the
    retained pairs.  ``rank == m`` reproduces the full Wiener solution.
    """
    cov = np.asarray(cov)
    cross = np.asarray(cross)
    m = cov.shape[0]
    if not 1 <= rank <= m:
        raise ValueError(f"rank must lie in [1, {m}], got {rank}")
    if not np.allclose(cov, cov.conj().T, atol=1e-10 * max(1.0, np.abs(cov).max())):
        raise ValueError("covariance must be Hermitian")
    evals, evecs = np.linalg.eigh(cov)
    if evals[0] <= 0:
        raise ValueError("covariance must be positive definite")
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    lead = evecs[:, :rank]
    w_opt = lead @ ((lead.conj().T @ cross) / evals[:rank])
    mmse = float(sigma2_x - np.real(np.vdot(cross, w_opt)))
    return WienerOracle(
        cov=cov,
        cross=cross,
        rank=rank,
        w_opt=w_opt,
        subspace=lead,
        eigenvalues=evals,
        mmse=mmse,
        sigma2_x=sigma2_x,
        _vecs=evecs,
    )


@dataclass
class ConvergenceReport:
    filter_error: float
    subspace_angle: float
    mse_gap: float


def convergence_metric(
    state, oracle: WienerOracle, ses_rate: float | None = None
) -> ConvergenceReport:
    """Distance of an adapted state from the oracle.

    ``filter_error`` compares composite filters (the factorization into
    transform and weights is not unique), ``subspace_angle`` is the
    largest principal angle between the transform's column space and the
    oracle subspace, and ``mse_gap`` is the supplied error rate minus
    the oracle MMSE (``nan`` when no rate is given).
    """
    w = np.asarray(state.composite_filter())
    ref = oracle.w_opt
    filter_error = float(np.linalg.norm(w - ref) / np.linalg.norm(ref))
    transform = getattr(state, "transform", None)
    if transform is None:
        basis = w[:, None]
    else:
        rank = int(np.max(state.rank)) if np.ndim(state.rank) else int(state.rank)
        basis = transform[..., :rank]
    q, _ = np.linalg.qr(basis)
    angles = scipy.linalg.subspace_angles(q, oracle.subspace)
    mse_gap = float(ses_rate - oracle.mmse) if ses_rate is not None else float("nan")
    return ConvergenceReport(
        filter_error=filter_error,
        subspace_angle=float(np.max(angles)),
        mse_gap=mse_gap,
    )


# ---------------------------------------------------------------------------
# arithmetic cost accounting
# ---------------------------------------------------------------------------

TABLE_ALGORITHMS = ("full_rank", "proposed", "mswf", "avf")
SELECTION_ALGORITHMS = ("proposed_selection", "projection_selection", "cv_selection")


@dataclass(frozen=True)
class ComplexityReport:
    algorithm: str
    additions: int
    multiplications: int
    params: dict


def count_operations(
    algorithm: str,
    m: int,
    d: int | None = None,
    d_min: int | None = None,
    d_max: int | None = None,
) -> ComplexityReport:
    """Closed-form per-symbol operation counts.

    Filter-update rows need ``m`` (and ``d`` for the reduced-rank
    entries); model-order-selection rows need ``d_min``/``d_max``.  All
    results are exact integers.
    """
    if m < 1:
        raise ValueError("m must be positive")

    def need_d():
        if d is None or d < 1:
            raise ValueError(f"algorithm {algorithm!r} needs a positive rank d")

    def need_band():
        if d_min is None or d_max is None or not 1 <= d_min <= d_max:
            raise ValueError(f"algorithm {algorithm!r} needs 1 <= d_min <= d_max")

    if algorithm == "full_rank":
        adds = 2 * m * m + m + 1
        mults = 3 * m * m + 5 * m
    elif algorithm == "proposed":
        need_d()
        adds = 2 * m * m - m + 4 * d * d + m * d + d + 3
        mults = 3 * m * m + 3 * m + 6 * d * d + m * d + 8 * d
    elif algorithm == "mswf":
        need_d()
        adds = d * m * m + 6 * d * d - 8 * d + 2 + m * m
        mults = d * m * m + 2 * d * m + 3 * d + m * m + 2
    elif algorithm == "avf":
        need_d()
        adds = d * m * m + 2 * m - 1 + 5 * d * (m - 1) + 1 + 3 * (d * m - 1) ** 2
        mults = 4 * d * m * m + 4 * d * m + 4 * m + 4 * d + 2
    elif algorithm == "proposed_selection":
        need_band()
        adds = 2 * (d_max - d_min) + 1
        mults = 0
    elif algorithm == "projection_selection":
        need_band()
        adds = 2 * (2 * m - 1) * (d_max - d_min) + 1
        mults = (m * m + m + 1) * (d_max - d_min + 1)
    elif algorithm == "cv_selection":
        need_band()
        adds = (2 * m - 1) * (2 * (d_max - d_min) + 1)
        mults = (d_max - d_min + 1) * m + 1
    else:
        raise ValueError(f"unknown algorithm tag {algorithm!r}")
    return ComplexityReport(
        algorithm=algorithm,
        additions=int(adds),
        multiplications=int(mults),
        params={"m": m, "d": d, "d_min": d_min, "d_max": d_max},
    )


class _OpCounter:
    """Tallies complex multiplications and additions of dense kernels.

    Divisions count as multiplications; a complex multiply counts once.
    """

    def __init__(self):
        self.mults = 0
        self.adds = 0

    def matvec(self, rows, cols):
        self.mults += rows * cols
        self.adds += rows * (cols - 1)

    def inner(self, n):
        self.mults += n
        self.adds += n - 1

    def outer(self, rows, cols):
        self.mults += rows * cols

    def axpy(self, n):  # y += alpha * x
        self.mults += n
        self.adds += n

    def scale(self, n):
        self.mults += n

    def add(self, n):
        self.adds += n


def measured_step_counts(algorithm: str, m: int, d: int | None = None):
    """Arithmetic actually spent by one implemented update step.

    Walks the same kernel sequence as the recursive implementations
    (gains, lemma downdates with re-symmetrization, filter corrections)
    and returns ``(multiplications, additions)``.  Constant factors
    differ from the tabulated polynomials because the implementation
    symmetrizes every propagated inverse and evaluates gains as
    ``g / (lam + v^H g)``.
    """
    c = _OpCounter()

    def gain_and_lemma(n):
        c.matvec(n, n)      # g = inv @ v
        c.inner(n)          # v^H g
        c.add(1)            # lam + .
        c.scale(n)          # k = g / denom
        c.outer(n, n)       # k g^H
        c.add(n * n)        # inv - .
        c.scale(n * n)      # / lam
        c.add(n * n)        # symmetrize: inv + inv^H
        c.scale(n * n)      # * 0.5

    if algorithm == "full_rank":
        gain_and_lemma(m)
        c.inner(m)          # w^H r
        c.add(1)            # xi
        c.axpy(m)           # w += k xi*
    elif algorithm == "proposed":
        if d is None or d < 1:
            raise ValueError("proposed step needs a positive rank d")
        gain_and_lemma(m)   # input-side gain and inverse covariance
        gain_and_lemma(d)   # weight-history gain and inverse
        c.matvec(d, m)      # r^H transform
        c.scale(d)          # x* t^H
        c.add(d)            # row difference
        c.outer(m, d)       # k row
        c.add(m * d)        # transform update
        c.matvec(d, m)      # re-projection
        gain_and_lemma(d)   # reduced-side gain and inverse
        c.inner(d)          # w^H r_bar
        c.add(1)            # xi
        c.axpy(d)           # w += k xi*
    else:
        raise ValueError(f"no instrumented path for algorithm {algorithm!r}")
    return c.mults, c.adds


def measured_vs_analytic(m_values, d: int):
    """Measured-versus-tabulated cost sweep over the input length.

    Returns one row per ``m`` and algorithm with the instrumented counts
    of the implemented step beside the closed-form table values.
    """
    rows = []
    for m in m_values:
        for algorithm in ("full_rank", "proposed"):
            dd = d if algorithm == "proposed" else None
            mults, adds = measured_step_counts(algorithm, m, dd)
            table = count_operations(algorithm, m, dd)
            rows.append(
                {
                    "algorithm": algorithm,
                    "m": m,
                    "d": dd,
                    "measured_mults": mults,
                    "measured_adds": adds,
                    "table_mults": table.multiplications,
                    "table_adds": table.additions,
                    "mult_ratio": mults / table.multiplications,
                }
            )
    return rows
