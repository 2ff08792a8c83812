"""Experiment orchestration.

Declarative experiment configs, the Monte Carlo BER engine for the
time-domain MIMO equalizer and its per-subcarrier OFDM variant, the
sweep families (rank, symbols, SNR, fading rate, antenna count), and
deterministic CSV persistence.

Seeding: every run derives independent generators as
``SeedSequence([master_seed, run_index, purpose])`` with purpose ids for
symbols, channel and noise, so sweeps that reuse a run index see the
identical channel, symbol and (pre-scaling) noise realizations, and no
generator state is shared across runs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .adaptation import (
    AdaptationError,
    RankPolicy,
    adapt_step,
    full_rank_rls_step,
    make_equalizer_state,
    make_full_rank_state,
)
from .channel import (
    FadingConfig,
    MimoDims,
    bits_to_symbols,
    generate_fading,
    ofdm_subcarrier_channels,
    random_frame,
    received_samples,
    stack_received_block,
    symbol_bit_errors,
    vehicular_a_profile,
)
from .equalizer import FeedbackBuffer, Mode, decide, detect_block

__all__ = [
    "ExperimentConfig",
    "BerRecord",
    "RunTrace",
    "ConfigError",
    "PROPOSED_RLS",
    "FULL_RANK_RLS",
    "CSV_COLUMNS",
    "run_single",
    "run_single_ofdm",
    "rank_sweep",
    "ber_vs_symbols",
    "snr_sweep",
    "fading_sweep",
    "ofdm_antenna_sweep",
    "write_csv",
    "config_hash",
]

PROPOSED_RLS = "proposed_rls"
FULL_RANK_RLS = "full_rank_rls"

_SEED_SYMBOLS = 0
_SEED_CHANNEL = 1
_SEED_NOISE = 2

DEFAULT_OFDM_SUBCARRIERS = 64
DEFAULT_OFDM_CYCLIC_PREFIX = 8  # symbols; covers the delay spread, rate overhead only


class ConfigError(ValueError):
    """Invalid or missing experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation description.

    Defaults mirror the reference setup: 8-symbol window, 5-path
    Vehicular A profile, 4x8 antennas, feedback depth 4, forgetting
    factor 0.998, 250 training symbols, automatic rank in [3, 8].
    """

    dims: MimoDims = field(default_factory=lambda: MimoDims(n_t=4, n_r=8, l_p=5, l=8, b=4))
    snr_db: float = 12.0
    fd_t: float = 1e-4
    profile: tuple | None = None
    lam: float = 0.998
    delta: float = 0.01
    rank_policy: RankPolicy = field(default_factory=lambda: RankPolicy.auto(3, 8))
    mode: Mode = Mode.DFE
    algorithm: str = PROPOSED_RLS
    n_training: int = 250
    n_symbols: int = 750
    n_runs: int = 100
    master_seed: int = 20260809
    experiment: str = "experiment"

    def __post_init__(self):
        if self.algorithm not in (PROPOSED_RLS, FULL_RANK_RLS):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if not 0 < self.lam <= 1:
            raise ConfigError(f"forgetting factor out of (0, 1]: {self.lam}")
        if self.n_symbols < 1 or self.n_runs < 1 or self.n_training < 0:
            raise ConfigError("n_symbols/n_runs must be >= 1 and n_training >= 0")
        if self.n_training > self.n_symbols:
            raise ConfigError("n_training exceeds n_symbols")
        if self.snr_db is None:
            raise ConfigError("snr_db is required")

    @property
    def noise_var(self) -> float:
        """Per-antenna noise variance from SNR = 10 log10(n_t * sig_x^2 / var)."""
        return self.dims.n_t / 10.0 ** (self.snr_db / 10.0)

    def path_profile(self) -> np.ndarray:
        if self.profile is not None:
            return np.asarray(self.profile, dtype=float)
        return vehicular_a_profile(self.dims.l_p)

    def to_dict(self) -> dict:
        d = self.dims
        policy = self.rank_policy
        out = {
            "experiment": self.experiment,
            "n_t": d.n_t,
            "n_r": d.n_r,
            "l_p": d.l_p,
            "l": d.l,
            "b": d.b,
            "snr_db": self.snr_db,
            "fd_t": self.fd_t,
            "profile": None if self.profile is None else list(self.profile),
            "forgetting": self.lam,
            "delta": self.delta,
            "rank": policy.describe(),
            "mode": self.mode.value,
            "algorithm": self.algorithm,
            "n_training": self.n_training,
            "n_symbols": self.n_symbols,
            "n_runs": self.n_runs,
            "master_seed": self.master_seed,
        }
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        base = cls()
        try:
            dims = MimoDims(
                n_t=int(raw.pop("n_t", base.dims.n_t)),
                n_r=int(raw.pop("n_r", base.dims.n_r)),
                l_p=int(raw.pop("l_p", base.dims.l_p)),
                l=int(raw.pop("l", base.dims.l)),
                b=int(raw.pop("b", base.dims.b)),
            )
            rank = raw.pop("rank", None)
            policy = _parse_rank_policy(rank) if rank is not None else base.rank_policy
            mode = Mode(str(raw.pop("mode", base.mode.value)).lower())
            profile = raw.pop("profile", None)
            cfg = cls(
                dims=dims,
                snr_db=float(raw.pop("snr_db", base.snr_db)),
                fd_t=float(raw.pop("fd_t", base.fd_t)),
                profile=None if profile is None else tuple(float(p) for p in profile),
                lam=float(raw.pop("forgetting", raw.pop("lam", base.lam))),
                delta=float(raw.pop("delta", base.delta)),
                rank_policy=policy,
                mode=mode,
                algorithm=str(raw.pop("algorithm", base.algorithm)).lower(),
                n_training=int(raw.pop("n_training", base.n_training)),
                n_symbols=int(raw.pop("n_symbols", base.n_symbols)),
                n_runs=int(raw.pop("n_runs", base.n_runs)),
                master_seed=int(raw.pop("master_seed", base.master_seed)),
                experiment=str(raw.pop("experiment", base.experiment)),
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad experiment config: {exc}") from exc
        if raw:
            raise ConfigError(f"unknown config keys: {sorted(raw)}")
        return cfg


def _parse_rank_policy(spec) -> RankPolicy:
    """Parse 'fixed(4)', 'auto(3,8)', 'fixed:4', 'auto:3:8' or dict forms."""
    if isinstance(spec, RankPolicy):
        return spec
    if isinstance(spec, dict):
        kind = spec.get("kind", "fixed")
        if kind == "fixed":
            return RankPolicy.fixed(int(spec["d"]))
        if kind == "auto":
            return RankPolicy.auto(int(spec["d_min"]), int(spec["d_max"]))
        raise ConfigError(f"unknown rank policy kind {kind!r}")
    text = str(spec).strip().lower().replace("(", ":").replace(")", "").replace(",", ":")
    parts = [p for p in text.split(":") if p]
    try:
        if parts[0] == "fixed" and len(parts) == 2:
            return RankPolicy.fixed(int(parts[1]))
        if parts[0] == "auto" and len(parts) == 3:
            return RankPolicy.auto(int(parts[1]), int(parts[2]))
    except ValueError as exc:
        raise ConfigError(f"bad rank policy {spec!r}") from exc
    raise ConfigError(f"bad rank policy {spec!r}")


def config_hash(config: ExperimentConfig) -> str:
    """Short stable digest of the full configuration."""
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _rng(master_seed: int, run_index: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, run_index, purpose]))


@dataclass
class RunTrace:
    """Per-run outcome: error counts plus step-level diagnostics."""

    run_index: int
    errors: int
    bits: int
    ber: float
    errors_per_symbol: np.ndarray
    ses_trace: np.ndarray
    rank_trace: np.ndarray


@dataclass
class BerRecord:
    """One Monte Carlo measurement row."""

    experiment: str
    sweep_var: str
    sweep_value: float
    algorithm: str
    mode: str
    d_policy: str
    runs: int
    bits: int
    errors: int
    ber: float
    mean_ses: float
    mean_rank: float
    seed: int
    config_hash: str = ""
    training_phase: bool = False
    lambda_used: float | None = None


CSV_COLUMNS = (
    "experiment",
    "sweep_var",
    "sweep_value",
    "algorithm",
    "mode",
    "d_policy",
    "runs",
    "bits",
    "errors",
    "ber",
    "mean_ses",
    "mean_rank",
    "seed",
)


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, records) -> None:
    """Write records with the fixed column set, LF endings, repr floats."""
    lines = [",".join(CSV_COLUMNS)]
    for rec in records:
        row = [
            rec.experiment,
            rec.sweep_var,
            _csv_cell(float(rec.sweep_value)),
            rec.algorithm,
            rec.mode,
            rec.d_policy,
            str(rec.runs),
            str(rec.bits),
            str(rec.errors),
            _csv_cell(float(rec.ber)),
            _csv_cell(float(rec.mean_ses)),
            _csv_cell(float(rec.mean_rank)),
            str(rec.seed),
        ]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _make_bank(config: ExperimentConfig, dims: MimoDims, batch_shape: tuple):
    if config.algorithm == FULL_RANK_RLS:
        return make_full_rank_state(
            dims.m, lam=config.lam, delta=config.delta, batch_shape=batch_shape
        )
    policy = _clamp_policy(config.rank_policy, dims.m)
    return make_equalizer_state(
        dims, policy, lam=config.lam, delta=config.delta, batch_shape=batch_shape
    )


def _clamp_policy(policy: RankPolicy, m: int) -> RankPolicy:
    """Cap rank bounds at the stacked length (small OFDM systems)."""
    if policy.is_auto:
        d_max = min(policy.d_max, m)
        d_min = min(policy.d_min, d_max)
        return RankPolicy.auto(d_min, d_max)
    return RankPolicy.fixed(min(policy.d, m))


def run_single(config: ExperimentConfig, run_index: int) -> RunTrace:
    """One Monte Carlo run of the time-domain MIMO equalizer.

    Generates channel, symbols and noise from run-derived seeds, adapts
    with known references for ``n_training`` symbols (feedback fed with
    known symbols as well), then switches to decision-directed mode.
    Bit errors are counted after training only, two bits per QPSK symbol
    over all streams.  Deterministic in ``(master_seed, run_index)``.
    """
    dims = config.dims
    n = config.n_symbols
    frame = random_frame(dims, n, _rng(config.master_seed, run_index, _SEED_SYMBOLS))
    fading = FadingConfig(
        fd_t=config.fd_t,
        profile=tuple(config.path_profile()),
        rng_seed=int(
            np.random.SeedSequence(
                [config.master_seed, run_index, _SEED_CHANNEL]
            ).generate_state(1)[0]
        ),
    )
    realization = generate_fading(fading, dims, n)
    received = received_samples(
        realization,
        frame,
        config.noise_var,
        rng=_rng(config.master_seed, run_index, _SEED_NOISE),
    )
    stacked = stack_received_block(received, dims)

    bank = _make_bank(config, dims, batch_shape=(dims.n_t,))
    fb = FeedbackBuffer(dims)
    proposed = config.algorithm == PROPOSED_RLS

    decisions = np.empty((n, dims.n_t), dtype=np.complex128)
    ses_trace = np.empty(n)
    rank_trace = np.empty(n)
    try:
        for i in range(n):
            training = i < config.n_training
            known = frame.symbols[:, i] if training else None
            det = detect_block(
                bank, stacked[i], fb, config.mode, feedback_symbols=known
            )
            x_ref = frame.symbols[:, i] if training else det.final
            if proposed:
                diag = adapt_step(bank, det.inputs, x_ref)
                rank_trace[i] = float(np.mean(diag.rank))
            else:
                full_rank_rls_step(bank, det.inputs, x_ref)
                rank_trace[i] = dims.m
            ses_trace[i] = float(np.mean(np.abs(x_ref - det.outputs) ** 2))
            decisions[i] = det.final
    except AdaptationError as exc:
        raise AdaptationError(
            f"run {run_index} (config {config_hash(config)}, "
            f"algorithm {config.algorithm}): {exc}"
        ) from exc

    per_symbol = symbol_bit_errors(decisions.T, frame.symbols).sum(axis=0)
    data = per_symbol[config.n_training :]
    bits = 2 * dims.n_t * (n - config.n_training)
    errors = int(data.sum())
    return RunTrace(
        run_index=run_index,
        errors=errors,
        bits=bits,
        ber=errors / bits if bits else float("nan"),
        errors_per_symbol=per_symbol,
        ses_trace=ses_trace,
        rank_trace=rank_trace,
    )


def run_single_ofdm(
    config: ExperimentConfig,
    run_index: int,
    n_subcarriers: int = DEFAULT_OFDM_SUBCARRIERS,
    cyclic_prefix: int = DEFAULT_OFDM_CYCLIC_PREFIX,
) -> RunTrace:
    """One Monte Carlo run of per-subcarrier linear MIMO equalization.

    The multipath channel is redrawn every OFDM block (``n_symbols``
    counts blocks, ``fd_t`` is cycles per block, fading independent per
    antenna pair) and converted to flat per-tone response matrices; each
    tone and stream runs its own adaptive equalizer on the model
    ``r_n = H_n x_n + noise``.  The cyclic prefix must cover the delay
    spread for that model to hold; it carries no other effect here.
    """
    dims = config.dims
    if cyclic_prefix < dims.l_p - 1:
        raise ConfigError(
            f"cyclic prefix {cyclic_prefix} shorter than delay spread {dims.l_p - 1}"
        )
    n_blocks = config.n_symbols
    n_tones = n_subcarriers
    rng_sym = _rng(config.master_seed, run_index, _SEED_SYMBOLS)
    bits = rng_sym.integers(0, 2, size=(n_tones, dims.n_t, 2 * n_blocks))
    symbols = bits_to_symbols(bits)  # (n_tones, n_t, n_blocks)

    fading = FadingConfig(
        fd_t=config.fd_t,
        profile=tuple(config.path_profile()),
        rng_seed=int(
            np.random.SeedSequence(
                [config.master_seed, run_index, _SEED_CHANNEL]
            ).generate_state(1)[0]
        ),
    )
    realization = generate_fading(fading, dims, n_blocks)
    response = np.empty((n_blocks, n_tones, dims.n_r, dims.n_t), dtype=np.complex128)
    for i in range(n_blocks):
        response[i] = ofdm_subcarrier_channels(realization, i, n_tones)

    rng_noise = _rng(config.master_seed, run_index, _SEED_NOISE)
    scale = np.sqrt(config.noise_var / 2.0)
    noise = scale * (
        rng_noise.standard_normal((n_blocks, n_tones, dims.n_r))
        + 1j * rng_noise.standard_normal((n_blocks, n_tones, dims.n_r))
    )
    tone_rx = np.einsum("bnrt,ntb->bnr", response, symbols) + noise

    eq_dims = MimoDims(n_t=dims.n_t, n_r=dims.n_r, l_p=1, l=1, b=0)
    bank = _make_bank(config, eq_dims, batch_shape=(n_tones, dims.n_t))
    proposed = config.algorithm == PROPOSED_RLS

    decisions = np.empty((n_tones, dims.n_t, n_blocks), dtype=np.complex128)
    ses_trace = np.empty(n_blocks)
    rank_trace = np.empty(n_blocks)
    try:
        for i in range(n_blocks):
            r_in = np.broadcast_to(
                tone_rx[i][:, None, :], (n_tones, dims.n_t, dims.n_r)
            )
            z = bank.output(r_in)
            dec = decide(z)
            training = i < config.n_training
            x_ref = symbols[:, :, i] if training else dec
            if proposed:
                diag = adapt_step(bank, r_in, x_ref)
                rank_trace[i] = float(np.mean(diag.rank))
            else:
                full_rank_rls_step(bank, r_in, x_ref)
                rank_trace[i] = eq_dims.m
            ses_trace[i] = float(np.mean(np.abs(x_ref - z) ** 2))
            decisions[:, :, i] = dec
    except AdaptationError as exc:
        raise AdaptationError(
            f"ofdm run {run_index} (config {config_hash(config)}): {exc}"
        ) from exc

    per_block = symbol_bit_errors(decisions, symbols).sum(axis=(0, 1))
    data = per_block[config.n_training :]
    bits_counted = 2 * n_tones * dims.n_t * (n_blocks - config.n_training)
    errors = int(data.sum())
    return RunTrace(
        run_index=run_index,
        errors=errors,
        bits=bits_counted,
        ber=errors / bits_counted if bits_counted else float("nan"),
        errors_per_symbol=per_block,
        ses_trace=ses_trace,
        rank_trace=rank_trace,
    )


def _collect(config: ExperimentConfig, runner=run_single):
    return [runner(config, idx) for idx in range(config.n_runs)]


def _window_mean(values: np.ndarray) -> float:
    return float(values.mean()) if values.size else float("nan")


def _aggregate(
    config: ExperimentConfig,
    traces,
    sweep_var: str,
    sweep_value: float,
    training_phase: bool = False,
    lambda_used: float | None = None,
) -> BerRecord:
    errors = int(sum(t.errors for t in traces))
    bits = int(sum(t.bits for t in traces))
    start = config.n_training
    mean_ses = float(np.mean([_window_mean(t.ses_trace[start:]) for t in traces]))
    mean_rank = float(np.mean([_window_mean(t.rank_trace[start:]) for t in traces]))
    policy = (
        str(config.dims.m)
        if config.algorithm == FULL_RANK_RLS
        else config.rank_policy.describe()
    )
    return BerRecord(
        experiment=config.experiment,
        sweep_var=sweep_var,
        sweep_value=float(sweep_value),
        algorithm=config.algorithm,
        mode=config.mode.value,
        d_policy=policy,
        runs=len(traces),
        bits=bits,
        errors=errors,
        ber=errors / bits if bits else float("nan"),
        mean_ses=mean_ses,
        mean_rank=mean_rank,
        seed=config.master_seed,
        config_hash=config_hash(config),
        training_phase=training_phase,
        lambda_used=lambda_used,
    )


def rank_sweep(config: ExperimentConfig, d_values) -> list:
    """BER versus fixed rank; the same run seeds pair every rank point."""
    records = []
    for d in d_values:
        cfg = replace(
            config,
            rank_policy=RankPolicy.fixed(int(d)),
            algorithm=PROPOSED_RLS,
            experiment=config.experiment or "rank_sweep",
        )
        traces = _collect(cfg)
        records.append(_aggregate(cfg, traces, "rank", d))
    return records


def ber_vs_symbols(config: ExperimentConfig, checkpoints, policies=None) -> list:
    """Windowed BER at symbol-count checkpoints, optionally per policy.

    Window ``k`` covers symbols ``(checkpoints[k-1], checkpoints[k]]``;
    records whose checkpoint lies inside the training phase are flagged.
    ``policies`` (rank policies, paired seeds) overlays convergence
    curves of several model-order strategies.
    """
    checkpoints = sorted(int(c) for c in checkpoints)
    if checkpoints and checkpoints[-1] > config.n_symbols:
        raise ConfigError("checkpoint beyond n_symbols")
    records = []
    for policy in policies if policies is not None else [config.rank_policy]:
        cfg = config if policy is config.rank_policy else replace(
            config, rank_policy=policy
        )
        traces = _collect(cfg)
        prev = 0
        for c in checkpoints:
            window = slice(prev, c)
            errors = int(sum(t.errors_per_symbol[window].sum() for t in traces))
            bits = 2 * cfg.dims.n_t * (c - prev) * len(traces)
            mean_ses = float(np.mean([_window_mean(t.ses_trace[window]) for t in traces]))
            mean_rank = float(np.mean([_window_mean(t.rank_trace[window]) for t in traces]))
            rec = _aggregate(cfg, traces, "symbols", c, training_phase=c <= cfg.n_training)
            rec.bits = bits
            rec.errors = errors
            rec.ber = errors / bits if bits else float("nan")
            rec.mean_ses = mean_ses
            rec.mean_rank = mean_rank
            records.append(rec)
            prev = c
    return records


def snr_sweep(config: ExperimentConfig, snr_values) -> list:
    """BER versus SNR; channel/symbol/noise draws are paired across points."""
    records = []
    for snr in snr_values:
        cfg = replace(config, snr_db=float(snr))
        traces = _collect(cfg)
        records.append(_aggregate(cfg, traces, "snr_db", snr))
    return records


def fading_sweep(
    config: ExperimentConfig,
    fdt_values,
    lam_grid=(0.99, 0.995, 0.998, 0.999),
) -> list:
    """BER versus Doppler rate, re-optimizing the forgetting factor per point."""
    records = []
    for fd_t in fdt_values:
        best = None
        for lam in lam_grid:
            cfg = replace(config, fd_t=float(fd_t), lam=float(lam))
            traces = _collect(cfg)
            rec = _aggregate(cfg, traces, "fd_t", fd_t, lambda_used=lam)
            if best is None or rec.ber < best.ber:
                best = rec
        records.append(best)
    return records


def ofdm_antenna_sweep(
    config: ExperimentConfig,
    nt_values,
    n_subcarriers: int = DEFAULT_OFDM_SUBCARRIERS,
    cyclic_prefix: int = DEFAULT_OFDM_CYCLIC_PREFIX,
) -> list:
    """Per-subcarrier OFDM BER versus antenna count (square systems)."""
    records = []
    for v in nt_values:
        v = int(v)
        cfg = replace(
            config,
            dims=MimoDims(n_t=v, n_r=v, l_p=config.dims.l_p, l=config.dims.l_p, b=0),
            mode=Mode.LINEAR,
        )
        traces = [
            run_single_ofdm(cfg, idx, n_subcarriers, cyclic_prefix)
            for idx in range(cfg.n_runs)
        ]
        records.append(_aggregate(cfg, traces, "n_antennas", v))
    return records
