"""Command-line front end.

Subcommands: rank-sweep, ber-symbols, ber-snr, fading, ofdm, complexity,
selftest.  Experiments read an optional JSON config (keys mirroring
``ExperimentConfig.to_dict``), apply flag overrides, write a CSV, and
print a one-line summary per record.  The output directory defaults to
``$RRMIMO_OUT_DIR`` (falling back to the working directory).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback

from . import selftest as _selftest
from .adaptation import RankPolicy
from .analysis import SELECTION_ALGORITHMS, TABLE_ALGORITHMS, count_operations
from .equalizer import Mode
from .harness import (
    ConfigError,
    ExperimentConfig,
    ber_vs_symbols,
    fading_sweep,
    ofdm_antenna_sweep,
    rank_sweep,
    snr_sweep,
    write_csv,
)
from .harness import _parse_rank_policy  # shared flag syntax

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _float_list(text: str):
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str):
    return [int(v) for v in text.split(",") if v.strip()]


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON experiment config file")
    parser.add_argument("--out", help="output CSV path")
    parser.add_argument("--runs", type=int, help="Monte Carlo runs")
    parser.add_argument("--symbols", type=int, help="symbols (or OFDM blocks) per run")
    parser.add_argument("--training", type=int, help="training symbols per run")
    parser.add_argument("--snr-db", type=float, help="operating SNR in dB")
    parser.add_argument("--fd-t", type=float, help="normalized Doppler rate")
    parser.add_argument("--forgetting", type=float, help="forgetting factor")
    parser.add_argument("--master-seed", type=int, help="master RNG seed")
    parser.add_argument("--mode", choices=["dfe", "linear"], help="equalizer structure")
    parser.add_argument(
        "--algorithm", choices=["proposed_rls", "full_rank_rls"], help="estimator"
    )
    parser.add_argument(
        "--rank", help="rank policy, e.g. fixed:4 or auto:3:8", default=None
    )


def _load_config(args, experiment: str) -> ExperimentConfig:
    raw = {}
    if args.config:
        if not os.path.exists(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        with open(args.config, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {args.config} is not valid JSON: {exc}")
    cfg = ExperimentConfig.from_dict(raw)
    updates = {"experiment": experiment}
    if args.runs is not None:
        updates["n_runs"] = args.runs
    if args.symbols is not None:
        updates["n_symbols"] = args.symbols
    if args.training is not None:
        updates["n_training"] = args.training
    if args.snr_db is not None:
        updates["snr_db"] = args.snr_db
    if args.fd_t is not None:
        updates["fd_t"] = args.fd_t
    if args.forgetting is not None:
        updates["lam"] = args.forgetting
    if args.master_seed is not None:
        updates["master_seed"] = args.master_seed
    if args.mode is not None:
        updates["mode"] = Mode(args.mode)
    if args.algorithm is not None:
        updates["algorithm"] = args.algorithm
    if args.rank is not None:
        updates["rank_policy"] = _parse_rank_policy(args.rank)
    from dataclasses import replace

    return replace(cfg, **updates)


def _out_path(args, default_name: str) -> str:
    if args.out:
        return args.out
    return os.path.join(os.environ.get("RRMIMO_OUT_DIR", "."), default_name)


def _emit(records, path: str) -> None:
    write_csv(path, records)
    for rec in records:
        print(
            f"{rec.experiment} {rec.sweep_var}={rec.sweep_value:g} "
            f"alg={rec.algorithm} policy={rec.d_policy} runs={rec.runs} "
            f"bits={rec.bits} errors={rec.errors} ber={rec.ber:.6g}"
        )
    print(f"wrote {len(records)} records to {path}")


def _cmd_rank_sweep(args) -> int:
    cfg = _load_config(args, "rank_sweep")
    d_values = _int_list(args.d_values) if args.d_values else list(range(1, 9))
    _emit(rank_sweep(cfg, d_values), _out_path(args, "rank_sweep.csv"))
    return EXIT_OK


def _cmd_ber_symbols(args) -> int:
    cfg = _load_config(args, "ber_vs_symbols")
    checkpoints = (
        _int_list(args.checkpoints)
        if args.checkpoints
        else list(range(250, cfg.n_symbols + 1, 250))
    )
    policies = None
    if args.policies:
        policies = [_parse_rank_policy(p) for p in args.policies.split(";") if p]
    _emit(ber_vs_symbols(cfg, checkpoints, policies), _out_path(args, "ber_vs_symbols.csv"))
    return EXIT_OK


def _cmd_ber_snr(args) -> int:
    cfg = _load_config(args, "snr_sweep")
    values = _float_list(args.snr_values) if args.snr_values else [6.0, 9.0, 12.0, 15.0]
    _emit(snr_sweep(cfg, values), _out_path(args, "snr_sweep.csv"))
    return EXIT_OK


def _cmd_fading(args) -> int:
    cfg = _load_config(args, "fading_sweep")
    values = _float_list(args.fdt_values) if args.fdt_values else [1e-5, 1e-4, 1e-3]
    grid = _float_list(args.lambda_grid) if args.lambda_grid else (0.99, 0.995, 0.998, 0.999)
    _emit(fading_sweep(cfg, values, grid), _out_path(args, "fading_sweep.csv"))
    return EXIT_OK


def _cmd_ofdm(args) -> int:
    cfg = _load_config(args, "ofdm_antenna_sweep")
    values = _int_list(args.antennas) if args.antennas else [4, 8]
    _emit(
        ofdm_antenna_sweep(cfg, values, args.subcarriers, args.cyclic_prefix),
        _out_path(args, "ofdm_antenna_sweep.csv"),
    )
    return EXIT_OK


def _cmd_complexity(args) -> int:
    m, d = args.m, args.d
    print(f"per-symbol operation counts at m={m}, d={d}:")
    for tag in TABLE_ALGORITHMS:
        rep = count_operations(tag, m, d=None if tag == "full_rank" else d)
        print(f"  {tag:20s} additions={rep.additions:>12d} multiplications={rep.multiplications:>12d}")
    if args.d_min is not None and args.d_max is not None:
        print(f"model-order selection, d in [{args.d_min}, {args.d_max}]:")
        for tag in SELECTION_ALGORITHMS:
            rep = count_operations(tag, m, d_min=args.d_min, d_max=args.d_max)
            print(f"  {tag:20s} additions={rep.additions:>12d} multiplications={rep.multiplications:>12d}")
    return EXIT_OK


def _cmd_selftest(args) -> int:
    return _selftest.run(verbose=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rrmimo",
        description="Reduced-rank adaptive MIMO equalization experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rank-sweep", help="BER versus fixed model order")
    _add_common(p)
    p.add_argument("--d-values", help="comma-separated ranks (default 1..8)")
    p.set_defaults(func=_cmd_rank_sweep)

    p = sub.add_parser("ber-symbols", help="windowed BER versus received symbols")
    _add_common(p)
    p.add_argument("--checkpoints", help="comma-separated symbol counts")
    p.add_argument(
        "--policies", help="semicolon-separated rank policies, e.g. 'auto:3:8;fixed:3;fixed:8'"
    )
    p.set_defaults(func=_cmd_ber_symbols)

    p = sub.add_parser("ber-snr", help="BER versus SNR")
    _add_common(p)
    p.add_argument("--snr-values", help="comma-separated SNR points in dB")
    p.set_defaults(func=_cmd_ber_snr)

    p = sub.add_parser("fading", help="BER versus Doppler rate (forgetting re-optimized)")
    _add_common(p)
    p.add_argument("--fdt-values", help="comma-separated normalized Doppler rates")
    p.add_argument("--lambda-grid", help="comma-separated forgetting factors to try")
    p.set_defaults(func=_cmd_fading)

    p = sub.add_parser("ofdm", help="per-subcarrier OFDM BER versus antenna count")
    _add_common(p)
    p.add_argument("--antennas", help="comma-separated square system sizes")
    p.add_argument("--subcarriers", type=int, default=64)
    p.add_argument("--cyclic-prefix", type=int, default=8)
    p.set_defaults(func=_cmd_ofdm)

    p = sub.add_parser("complexity", help="closed-form operation counts")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--d-min", type=int)
    p.add_argument("--d-max", type=int)
    p.set_defaults(func=_cmd_complexity)

    p = sub.add_parser("selftest", help="run the built-in invariant suite")
    p.set_defaults(func=_cmd_selftest)
    return parser


def cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report and exit nonzero
        print(f"error: {exc}", file=sys.stderr)
        traceback.print_exc()
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
