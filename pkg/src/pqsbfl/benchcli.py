"""Benchmark command line: single runs, suite sweeps, crypto tables.

Configs live in flat INI-style files (``key = value`` under section
headers), are overridable by command-line flags, and name themselves by the
``dataset-crypto-Nc-BC|NoBC`` convention. A suite file holds many entries;
every entry runs with an independent seed derived from the suite seed and
the entry's learning-relevant identity, so adding an entry never perturbs
the others and scheme variants of one setup share a model trajectory.

Outputs are plot-ready CSV plus a full JSON report per run:

* ``<out>/<name>/report.json``  -- complete experiment report
* ``<out>/<name>/rounds.csv``   -- one row per federated round
* ``<out>/comparison.csv``      -- one summary row per suite entry
* ``<out>/scaling.csv``         -- client-count scaling (suites spanning
  several client counts)
* ``<out>/crypto.csv``          -- primitive timings and sizes
  (``--crypto-bench``)

All digests are lowercase hex. Exit status is nonzero iff any requested
config failed validation or execution.
"""

import argparse
import configparser
import csv
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import InsufficientPoints, ParseError, PqsBflError, ValidationError
from .protocol import ExperimentConfig, ExperimentReport, run_experiment
from .sigsuite import SchemeId, keygen, measure_primitives

__all__ = [
    "SuiteSpec",
    "ComparisonTable",
    "parse_config",
    "parse_suite",
    "run_suite",
    "emit_scaling_data",
    "emit_crypto_table",
    "main",
]

ROUNDS_CSV_COLUMNS = (
    "round",
    "accuracy",
    "round_time_s",
    "compute_time_s",
    "simulated_latency_s",
    "mean_sign_ms",
    "mean_verify_ms",
    "mean_tx_time_s",
    "mean_gas_per_update",
    "total_gas",
    "overhead_ratio",
    "verified_count",
    "rejected_count",
    "model_digest",
)

COMPARISON_CSV_COLUMNS = (
    "name",
    "dataset",
    "scheme",
    "n_clients",
    "blockchain",
    "rounds",
    "status",
    "timing_reliable",
    "initial_accuracy",
    "final_accuracy",
    "mean_accuracy",
    "mean_round_time_s",
    "mean_compute_time_s",
    "mean_simulated_latency_s",
    "mean_sign_ms",
    "mean_verify_ms",
    "mean_tx_time_s",
    "mean_gas_per_update",
    "mean_total_gas",
    "mean_overhead_ratio",
    "verified_per_round",
    "rejected_per_round",
    "sig_size_mean_b",
    "public_key_b",
    "private_key_b",
    "gas_per_round",
    "accuracy_gain_per_gas",
)

SCALING_CSV_COLUMNS = (
    "n_clients",
    "mean_round_time_s",
    "mean_compute_time_s",
    "mean_tx_time_s",
    "mean_gas_per_round",
)

CRYPTO_CSV_COLUMNS = (
    "scheme",
    "trials",
    "keygen_ms",
    "sign_ms",
    "verify_ms",
    "sig_size_b",
    "public_key_b",
    "private_key_b",
)

# Nominal signature sizes for the crypto table; ECDSA's DER size varies per
# signature, so its column reports the long-run average.
_NOMINAL_SIG_SIZES = {SchemeId.PQC: 3309, SchemeId.ECDSA: 71, SchemeId.NONE: 32}


@dataclass
class SuiteSpec:
    configs: list
    out_dir: Path
    formats: tuple = ("csv", "json")
    parallel: bool = False  # parallel entries taint wall-clock timing columns


@dataclass
class ComparisonTable:
    """One summary row per configuration, identical column set per row."""

    columns: tuple
    rows: dict  # config name -> {column: value}

    @property
    def failed(self) -> list:
        return [n for n, row in self.rows.items() if row["status"] != "ok"]


def stable_name_hash(text: str) -> int:
    """Stable 64-bit hash of a config identity (not Python's salted hash)."""
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def _parse_bool(raw: str, where: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ParseError(f"{where}: expected on/off, got {raw!r}")


def _parse_int(raw: str, where: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"{where}: expected integer, got {raw!r}") from None


def _parse_float(raw: str, where: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"{where}: expected number, got {raw!r}") from None


_EXPERIMENT_KEYS = {
    "dataset",
    "crypto",
    "clients",
    "rounds",
    "blockchain",
    "seed",
    "alpha",
    "nobc_fixed_delay_s",
    "synth_samples",
    "synth_features",
    "synth_classes",
    "submit_aggregation",
    "parallel_clients",
}
_TRAIN_KEYS = {"local_epochs", "batch_size", "learning_rate"}
_LATENCY_KEYS = {"constant", "uniform"}


def _apply_experiment_key(cfg: ExperimentConfig, key: str, raw: str, where: str):
    if key == "dataset":
        return replace(cfg, dataset=raw.strip())
    if key == "crypto":
        try:
            return replace(cfg, scheme=SchemeId(raw.strip()))
        except ValueError:
            raise ParseError(f"{where}: unknown crypto {raw!r}") from None
    if key == "clients":
        return replace(cfg, n_clients=_parse_int(raw, where))
    if key == "rounds":
        return replace(cfg, rounds=_parse_int(raw, where))
    if key == "blockchain":
        return replace(cfg, blockchain=_parse_bool(raw, where))
    if key == "seed":
        return replace(cfg, master_seed=_parse_int(raw, where))
    if key == "alpha":
        return replace(cfg, alpha=_parse_float(raw, where))
    if key == "nobc_fixed_delay_s":
        return replace(cfg, nobc_fixed_delay_s=_parse_float(raw, where))
    if key == "synth_samples":
        return replace(cfg, synth_samples=_parse_int(raw, where))
    if key == "synth_features":
        return replace(cfg, synth_features=_parse_int(raw, where))
    if key == "synth_classes":
        return replace(cfg, synth_classes=_parse_int(raw, where))
    if key == "submit_aggregation":
        return replace(cfg, submit_aggregation=_parse_bool(raw, where))
    if key == "parallel_clients":
        return replace(cfg, parallel_clients=_parse_bool(raw, where))
    raise ParseError(f"{where}: unknown key {key!r}")


def _apply_section(cfg: ExperimentConfig, section: str, items, where_prefix: str):
    for key, raw in items:
        where = f"{where_prefix}[{section}].{key}"
        if section == "experiment":
            cfg = _apply_experiment_key(cfg, key, raw, where)
        elif section == "train":
            if key not in _TRAIN_KEYS:
                raise ParseError(f"{where}: unknown key {key!r}")
            if key == "learning_rate":
                cfg = replace(cfg, train=replace(cfg.train, learning_rate=_parse_float(raw, where)))
            else:
                cfg = replace(cfg, train=replace(cfg.train, **{key: _parse_int(raw, where)}))
        elif section == "gas":
            try:
                scheme = SchemeId(key.upper())
            except ValueError:
                raise ParseError(f"{where}: unknown scheme {key!r}") from None
            targets = dict(cfg.gas_targets)
            targets[scheme] = _parse_int(raw, where)
            cfg = replace(cfg, gas_targets=targets)
        elif section == "latency":
            if key not in _LATENCY_KEYS:
                raise ParseError(f"{where}: unknown key {key!r}")
            if key == "constant":
                cfg = replace(cfg, latency_s=_parse_float(raw, where), latency_range=None)
            else:
                parts = raw.split(",")
                if len(parts) != 2:
                    raise ParseError(f"{where}: expected low,high")
                cfg = replace(
                    cfg,
                    latency_range=(
                        _parse_float(parts[0], where),
                        _parse_float(parts[1], where),
                    ),
                    latency_s=None,
                )
        else:
            raise ParseError(f"{where_prefix}: unknown section [{section}]")
    return cfg


def _read_ini(path: Path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh, source=str(path))
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from exc
    except configparser.Error as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return parser


def parse_config(path=None, overrides=None) -> ExperimentConfig:
    """Build a validated config from an optional INI file plus flag overrides.

    Flags always win over file values and defaults fill the rest. Raises
    :class:`ParseError` for malformed input (identifying the file, section
    and key) and :class:`ValidationError` listing every violated constraint.
    """
    cfg = ExperimentConfig()
    if path is not None:
        parser = _read_ini(Path(path))
        for section in parser.sections():
            cfg = _apply_section(cfg, section, parser.items(section), f"{path}:")

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        cfg = _apply_experiment_key(cfg, key, str(value), f"--{key}")

    problems = cfg.violations()
    if problems:
        raise ValidationError(problems)
    return cfg


def parse_suite(path, out_dir=None, base_seed=None) -> SuiteSpec:
    """Read a suite file: a ``[suite]`` section plus one section per entry.

    Entry sections use the experiment keys (``crypto = PQC`` etc.) with
    optional dotted sub-config keys (``train.local_epochs``, ``gas.PQC``,
    ``latency.constant``). Every entry's master seed is the suite seed XORed
    with a stable hash of its learning identity (dataset, client count,
    rounds), so scheme variants of one setup share the trajectory.
    """
    parser = _read_ini(Path(path))
    suite_seed = 0
    formats = ("csv", "json")
    parallel = False
    out = Path(out_dir) if out_dir is not None else None

    if parser.has_section("suite"):
        for key, raw in parser.items("suite"):
            where = f"{path}:[suite].{key}"
            if key == "seed":
                suite_seed = _parse_int(raw, where)
            elif key == "out":
                if out is None:
                    out = Path(raw.strip())
            elif key == "formats":
                formats = tuple(f.strip() for f in raw.split(",") if f.strip())
                unknown = set(formats) - {"csv", "json"}
                if unknown:
                    raise ParseError(f"{where}: unknown formats {sorted(unknown)}")
            elif key == "parallel":
                parallel = _parse_bool(raw, where)
            else:
                raise ParseError(f"{where}: unknown key {key!r}")
    if base_seed is not None:
        suite_seed = base_seed
    if out is None:
        out = Path("out")

    configs = []
    names = set()
    for section in parser.sections():
        if section == "suite":
            continue
        cfg = replace(ExperimentConfig(), master_seed=suite_seed)
        plain, dotted = [], []
        for key, raw in parser.items(section):
            (dotted if "." in key else plain).append((key, raw))
        cfg = _apply_section(cfg, "experiment", plain, f"{path}:")
        for key, raw in dotted:
            sub, _, subkey = key.partition(".")
            cfg = _apply_section(cfg, sub, [(subkey, raw)], f"{path}:")

        identity = f"{cfg.dataset_label()}-{cfg.n_clients}c-{cfg.rounds}r"
        cfg = replace(cfg, master_seed=cfg.master_seed ^ stable_name_hash(identity))
        if cfg.name() in names:
            raise ValidationError([f"duplicate configuration name {cfg.name()!r}"])
        names.add(cfg.name())
        configs.append(cfg)

    return SuiteSpec(configs=configs, out_dir=out, formats=formats, parallel=parallel)


def _write_csv(path: Path, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row[c] for c in columns])


def write_report_files(report: ExperimentReport, out_dir: Path, formats=("csv", "json")):
    """Write ``report.json`` and ``rounds.csv`` for one finished run."""
    run_dir = out_dir / report.config.name()
    run_dir.mkdir(parents=True, exist_ok=True)
    if "json" in formats:
        with open(run_dir / "report.json", "w") as fh:
            json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    if "csv" in formats:
        _write_csv(
            run_dir / "rounds.csv",
            ROUNDS_CSV_COLUMNS,
            [m.to_dict() for m in report.rounds],
        )
    return run_dir


def _comparison_row(cfg: ExperimentConfig, report=None, error=None) -> dict:
    row = {c: "" for c in COMPARISON_CSV_COLUMNS}
    row.update(
        name=cfg.name(),
        dataset=cfg.dataset_label(),
        scheme=cfg.scheme.value,
        n_clients=cfg.n_clients,
        blockchain="BC" if cfg.blockchain else "NoBC",
        rounds=cfg.rounds,
        status="ok" if error is None else f"error: {error}",
    )
    if report is None:
        return row
    s = report.summary
    row.update(
        initial_accuracy=report.initial_accuracy,
        final_accuracy=report.final_accuracy,
        mean_accuracy=s["accuracy"],
        mean_round_time_s=s["round_time_s"],
        mean_compute_time_s=s["compute_time_s"],
        mean_simulated_latency_s=s["simulated_latency_s"],
        mean_sign_ms=s["mean_sign_ms"],
        mean_verify_ms=s["mean_verify_ms"],
        mean_tx_time_s=s["mean_tx_time_s"],
        mean_gas_per_update=s["mean_gas_per_update"],
        mean_total_gas=s["total_gas"],
        mean_overhead_ratio=s["overhead_ratio"],
        verified_per_round=s["verified_count"],
        rejected_per_round=s["rejected_count"],
        sig_size_mean_b=report.crypto_sizes["sig_size_mean_b"],
        public_key_b=report.crypto_sizes["public_key_b"],
        private_key_b=report.crypto_sizes["private_key_b"],
        gas_per_round=report.gas_per_round,
        accuracy_gain_per_gas=report.accuracy_gain_per_gas,
    )
    return row


def run_suite(spec: SuiteSpec):
    """Run every suite entry; failures don't stop the rest.

    Entries run sequentially by default so wall-clock timing columns stay
    clean; with ``spec.parallel`` they run concurrently and every row's
    ``timing_reliable`` column is set false (results are still
    deterministic, only the timings are contended).

    Returns ``(ComparisonTable, {name: report})``; writes per-config report
    files, the top-level ``comparison.csv``, and ``scaling.csv`` whenever the
    successful entries span at least two client counts.
    """

    def attempt(cfg):
        try:
            return cfg, run_experiment(cfg), None
        except PqsBflError as exc:
            return cfg, None, exc

    if spec.parallel and len(spec.configs) > 1:
        with ThreadPoolExecutor(max_workers=min(4, len(spec.configs))) as pool:
            outcomes = list(pool.map(attempt, spec.configs))
    else:
        outcomes = [attempt(cfg) for cfg in spec.configs]

    rows = {}
    reports = {}
    for cfg, report, error in outcomes:
        row = _comparison_row(cfg, report, error)
        row["timing_reliable"] = not spec.parallel
        rows[cfg.name()] = row
        if report is not None:
            reports[cfg.name()] = report
            write_report_files(report, spec.out_dir, spec.formats)

    table = ComparisonTable(COMPARISON_CSV_COLUMNS, rows)
    if "csv" in spec.formats:
        _write_csv(spec.out_dir / "comparison.csv", table.columns, list(rows.values()))
        counts = {r.config.n_clients for r in reports.values()}
        if len(counts) >= 2:
            scaling = emit_scaling_data(list(reports.values()))
            _write_csv(spec.out_dir / "scaling.csv", SCALING_CSV_COLUMNS, scaling)
    return table, reports


def emit_scaling_data(reports) -> list:
    """Client-count scaling rows from finished reports, sorted by count.

    Reports sharing a client count are averaged. Raises
    :class:`InsufficientPoints` unless two or more counts are present.
    """
    by_count = {}
    for report in reports:
        by_count.setdefault(report.config.n_clients, []).append(report)
    if len(by_count) < 2:
        raise InsufficientPoints(
            f"need reports for >= 2 client counts, got {sorted(by_count)}"
        )
    rows = []
    for count in sorted(by_count):
        group = by_count[count]
        rows.append(
            {
                "n_clients": count,
                "mean_round_time_s": sum(r.summary["round_time_s"] for r in group) / len(group),
                "mean_compute_time_s": sum(r.summary["compute_time_s"] for r in group) / len(group),
                "mean_tx_time_s": sum(r.summary["mean_tx_time_s"] for r in group) / len(group),
                "mean_gas_per_round": sum(r.summary["total_gas"] for r in group) / len(group),
            }
        )
    return rows


def emit_crypto_table(schemes, trials: int = 100) -> list:
    """Primitive timing/size rows, one per scheme (default 100 trials)."""
    rows = []
    for scheme in schemes:
        timing = measure_primitives(scheme, trials=trials)
        key = keygen(scheme, 0)
        rows.append(
            {
                "scheme": scheme.value,
                "trials": timing.trials,
                "keygen_ms": timing.keygen_ms,
                "sign_ms": timing.sign_ms,
                "verify_ms": timing.verify_ms,
                "sig_size_b": _NOMINAL_SIG_SIZES[scheme],
                "public_key_b": len(key.public_key),
                "private_key_b": len(key.private_key),
            }
        )
    return rows


def _build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pqsbfl",
        description="Signed federated learning benchmark: single runs, "
        "suite sweeps, and crypto primitive tables.",
    )
    parser.add_argument("--config", metavar="PATH", help="INI config file")
    parser.add_argument("--dataset", metavar="{synth|csv:<path>}")
    parser.add_argument("--crypto", choices=[s.value for s in SchemeId])
    parser.add_argument("--clients", type=int, metavar="N")
    parser.add_argument("--rounds", type=int, metavar="N")
    parser.add_argument("--blockchain", choices=["on", "off"])
    parser.add_argument("--seed", type=int, metavar="U64")
    parser.add_argument("--out", metavar="DIR", help="output directory (default: out)")
    parser.add_argument("--suite", metavar="PATH", help="suite INI file")
    parser.add_argument(
        "--crypto-bench",
        action="store_true",
        help="measure keygen/sign/verify instead of running an experiment",
    )
    parser.add_argument("--trials", type=int, default=100, metavar="N")
    return parser


def main(argv=None) -> int:
    args = _build_arg_parser().parse_args(argv)
    out_dir = Path(args.out) if args.out else Path("out")

    try:
        if args.crypto_bench:
            schemes = [SchemeId(args.crypto)] if args.crypto else list(SchemeId)
            rows = emit_crypto_table(schemes, trials=args.trials)
            _write_csv(out_dir / "crypto.csv", CRYPTO_CSV_COLUMNS, rows)
            for row in rows:
                print(
                    f"{row['scheme']:>5}: keygen {row['keygen_ms']:.3f} ms  "
                    f"sign {row['sign_ms']:.3f} ms  verify {row['verify_ms']:.3f} ms  "
                    f"sig {row['sig_size_b']} B"
                )
            return 0

        if args.suite:
            spec = parse_suite(args.suite, out_dir=args.out, base_seed=args.seed)
            table, _ = run_suite(spec)
            for name, row in table.rows.items():
                print(f"{name}: {row['status']}")
            return 1 if table.failed else 0

        overrides = {
            "dataset": args.dataset,
            "crypto": args.crypto,
            "clients": args.clients,
            "rounds": args.rounds,
            "blockchain": args.blockchain,
            "seed": args.seed,
        }
        cfg = parse_config(args.config, overrides)
        report = run_experiment(cfg)
        write_report_files(report, out_dir)
        gas = "n/a" if report.gas_per_round is None else f"{report.gas_per_round:.0f}"
        print(
            f"{cfg.name()}: final accuracy {report.final_accuracy:.4f}, "
            f"mean round time {report.summary['round_time_s']:.3f} s, "
            f"gas/round {gas}"
        )
        return 0
    except PqsBflError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
