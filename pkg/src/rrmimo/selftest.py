"""Built-in invariant suite for the ``selftest`` subcommand.

Each check is a quick structural or algebraic sanity property; the full
statistical acceptance suite lives in the pytest tree.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .adaptation import (
    BatchLsWorkspace,
    RankPolicy,
    adapt_step,
    alternate,
    full_rank_rls_step,
    make_equalizer_state,
    make_full_rank_state,
)
from .analysis import count_operations, wiener_reduced_rank
from .channel import (
    FadingConfig,
    MimoDims,
    QPSK,
    SymbolFrame,
    assemble_channel_matrix,
    generate_fading,
    received_samples,
)
from .equalizer import decide, equalizer_output
from .harness import ExperimentConfig, run_single, write_csv, _aggregate


def _rand_complex(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def check_toeplitz_structure():
    dims = MimoDims(n_t=2, n_r=3, l_p=3, l=5, b=0)
    fading = FadingConfig(fd_t=0.0, profile=(0.5, 0.3, 0.2), rng_seed=7)
    real = generate_fading(fading, dims, 4)
    h_mat = assemble_channel_matrix(real, 2)
    l = dims.l
    for kb in range(dims.n_r):
        for jb in range(dims.n_t):
            block = h_mat[kb * l : (kb + 1) * l, jb * l : (jb + 1) * l]
            for c in range(1, l):
                shifted = np.zeros(l, dtype=complex)
                shifted[1:] = block[:-1, c - 1]
                assert np.allclose(block[:, c], shifted), "column shift broken"


def check_identity_channel():
    dims = MimoDims(n_t=1, n_r=1, l_p=1, l=1, b=0)
    fading = FadingConfig(fd_t=0.0, profile=(1.0,), rng_seed=3)
    real = generate_fading(fading, dims, 64)
    real.taps[:] = 1.0
    rng = np.random.default_rng(5)
    frame = SymbolFrame(QPSK[rng.integers(0, 4, size=(1, 64))])
    y = received_samples(real, frame, 0.0)
    assert np.allclose(y, frame.symbols), "identity channel distorted symbols"


def check_composite_equivalence():
    rng = np.random.default_rng(11)
    dims = MimoDims(n_t=2, n_r=4, l_p=2, l=3, b=2)
    state = make_equalizer_state(dims, RankPolicy.fixed(4))
    state.transform = _rand_complex(rng, state.transform.shape)
    state.weights = _rand_complex(rng, state.weights.shape)
    r = _rand_complex(rng, (dims.m,))
    direct = np.vdot(state.transform @ state.weights, r)
    assert abs(equalizer_output(state, r) - direct) < 1e-12, "composite filter mismatch"


def check_slicer():
    rng = np.random.default_rng(13)
    z = _rand_complex(rng, (256,))
    hard = decide(z)
    signs = (np.sign(np.real(z)) + 1j * np.sign(np.imag(z))) / np.sqrt(2)
    live = (np.real(z) != 0) & (np.imag(z) != 0)
    assert np.allclose(hard[live], signs[live]), "slicer disagrees with sign rule"
    assert decide(np.array(0.0 + 0.0j)) == QPSK[0], "tie break moved"


def check_lemma_consistency():
    rng = np.random.default_rng(17)
    dims = MimoDims(n_t=1, n_r=2, l_p=1, l=4, b=0)
    state = make_equalizer_state(dims, RankPolicy.fixed(3), lam=0.998)
    for _ in range(100):
        r = _rand_complex(rng, (dims.m,))
        x = QPSK[rng.integers(0, 4)]
        prev = state.aux.inv_cov.copy()
        adapt_step(state, r, x)
        lhs = state.aux.inv_cov @ (0.998 * np.linalg.inv(prev) + np.outer(r, r.conj()))
        assert np.allclose(lhs, np.eye(dims.m), atol=1e-8), "inversion lemma drifted"


def check_kalman_identity():
    rng = np.random.default_rng(19)
    state = make_full_rank_state(6, lam=0.998)
    for _ in range(50):
        r = _rand_complex(rng, (6,))
        prev = state.inv_cov.copy()
        full_rank_rls_step(state, r, QPSK[rng.integers(0, 4)])
        gain = (prev @ r) / (0.998 + np.real(r.conj() @ prev @ r))
        assert np.allclose(state.inv_cov @ r, gain, atol=1e-8), "gain identity broken"


def check_full_rank_vs_batch():
    rng = np.random.default_rng(23)
    m, delta = 8, 0.01
    state = make_full_rank_state(m, lam=1.0, delta=delta)
    cov = delta * np.eye(m, dtype=complex)
    cross = np.zeros(m, dtype=complex)
    for _ in range(200):
        r = _rand_complex(rng, (m,))
        x = QPSK[rng.integers(0, 4)]
        full_rank_rls_step(state, r, x)
        cov += np.outer(r, r.conj())
        cross += np.conj(x) * r
    assert np.allclose(state.weights, np.linalg.solve(cov, cross), atol=1e-6)


def check_alternate_monotone():
    rng = np.random.default_rng(29)
    m, width = 8, 3
    ws = BatchLsWorkspace(m, width, lam=1.0, delta=0.01)
    w = np.zeros(width, dtype=complex)
    w[0] = 1.0
    for _ in range(60):
        r = _rand_complex(rng, (m,))
        ws.push(r, QPSK[rng.integers(0, 4)], w)
    s0 = np.zeros((m, width), dtype=complex)
    s0[:width] = np.eye(width)
    _, _, trace = alternate(ws, s0, w, 6)
    diffs = np.diff(trace)
    assert np.all(diffs <= 1e-10 * np.abs(trace[:-1])), "cost trace increased"


def check_complexity_values():
    assert count_operations("full_rank", 10).multiplications == 350
    assert count_operations("proposed", 10, d=2).multiplications == 390
    assert count_operations("proposed_selection", 1, d_min=3, d_max=8).additions == 11


def check_wiener_full_rank():
    rng = np.random.default_rng(31)
    m = 6
    a = _rand_complex(rng, (m, m))
    cov = a @ a.conj().T + 0.1 * np.eye(m)
    cross = _rand_complex(rng, (m,))
    oracle = wiener_reduced_rank(cov, cross, m)
    assert np.allclose(oracle.w_opt, np.linalg.solve(cov, cross), atol=1e-10)


def check_csv_determinism():
    cfg = ExperimentConfig(
        dims=MimoDims(n_t=2, n_r=2, l_p=2, l=2, b=1),
        n_symbols=60,
        n_training=30,
        n_runs=2,
        snr_db=15.0,
        experiment="selftest",
    )
    outputs = []
    for _ in range(2):
        traces = [run_single(cfg, i) for i in range(cfg.n_runs)]
        rec = _aggregate(cfg, traces, "snr_db", cfg.snr_db)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "out.csv")
            write_csv(path, [rec])
            with open(path, "rb") as fh:
                outputs.append(fh.read())
    assert outputs[0] == outputs[1], "CSV output is not reproducible"


CHECKS = [
    ("toeplitz structure", check_toeplitz_structure),
    ("identity channel", check_identity_channel),
    ("composite filter equivalence", check_composite_equivalence),
    ("nearest-point slicer", check_slicer),
    ("inversion-lemma consistency", check_lemma_consistency),
    ("kalman gain identity", check_kalman_identity),
    ("full-rank RLS vs batch LS", check_full_rank_vs_batch),
    ("alternation cost monotone", check_alternate_monotone),
    ("operation-count exactness", check_complexity_values),
    ("wiener oracle full rank", check_wiener_full_rank),
    ("CSV determinism", check_csv_determinism),
]


def run(verbose: bool = True) -> int:
    """Run all checks; returns 0 when every one passes."""
    failures = 0
    for name, fn in CHECKS:
        try:
            fn()
        except Exception as exc:  # noqa: BLE001 - report every failure
            failures += 1
            if verbose:
                print(f"FAIL {name}: {exc}")
        else:
            if verbose:
                print(f"PASS {name}")
    if verbose and failures:
        print(f"{failures} of {len(CHECKS)} checks failed")
    return 1 if failures else 0
