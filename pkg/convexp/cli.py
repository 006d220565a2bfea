from __future__ import annotations

import argparse
import csv
from dataclasses import dataclass, field
from enum import Enum
import io
import json
import logging
import math
from pathlib import Path
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

import filelock
import numpy as np

from . import __version__
from .capacity import CapacityOptions, capacity_curve
from .channel import Channel, Distribution, TiltParams, load_channel, to_bits
from .errors import ConvexpError, PreconditionError
from .exponent_dk import DkReport, MirrorOptions, g_dk
from .exponent_oh import ExponentReport, g_ar_sup, g_oh_sup
from .oracle import OracleOptions, brute_force_gn
from .search import SearchOptions
from .simplex import AscentOptions
from .spectrum import (
    InputProcess,
    SpectrumOptions,
    exponent_lower_bound,
    greedy_potential_bound,
    omega_direct,
    tilt_recursion,
)
from .telemetry import Metrics, Telemetry
from .utils import METHODS, format_value, parse_grid, resolve_methods, resolve_threads
from .verify import VerifyOptions, run_checks, verify_channel

CSV_VERSION = 1
CURVE_COLUMNS = [
    "rate_nats", "rate_bits",
    "g_oh", "mu_oh", "rho_oh", "kkt_gap_oh",
    "g_ar", "mu_ar", "rho_ar", "kkt_gap_ar",
    "g_dk", "mu_dk", "lambda_dk", "stationarity_gap_dk",
]


class Command(Enum):
    CAPACITY = "capacity"
    EXPONENT = "exponent"
    CURVE = "curve"
    SPECTRUM = "spectrum"
    ORACLE = "oracle"
    VERIFY = "verify"


class OutputFormat(Enum):
    CSV = "csv"
    JSON = "json"


@dataclass
class RunConfig:
    @dataclass
    class AdvancedOptions:
        threads: int = 1
        metrics_buffer_size: int = 100

        # solvers
        capacity: CapacityOptions = field(default_factory=CapacityOptions)
        ascent: AscentOptions = field(default_factory=AscentOptions)
        mirror: MirrorOptions = field(default_factory=MirrorOptions)
        search: SearchOptions = field(default_factory=SearchOptions)

        # enumeration
        oracle: OracleOptions = field(default_factory=OracleOptions)
        spectrum: SpectrumOptions = field(default_factory=SpectrumOptions)

    command: Command
    channel: Optional[str] = None
    rates: List[float] = field(default_factory=list)
    gammas: List[float] = field(default_factory=list)
    methods: Tuple[str, ...] = METHODS

    # spectrum and oracle
    n: int = 1
    mu: float = 0.0
    lam: float = 1.0
    process: str = "random"

    # output
    output: Optional[str] = None
    output_format: Optional[OutputFormat] = None
    bits: bool = False
    dump_joint: bool = False
    include_metrics: bool = False

    # verify
    seed: int = 0
    scale: float = 1.0

    advanced: AdvancedOptions = field(default_factory=AdvancedOptions)

    def __post_init__(self):
        for name in ("rates", "gammas"):
            grid = getattr(self, name)
            if list(grid) != sorted(grid):
                raise ValueError(f"The {name} grid must be sorted.")
        tolerances = (self.advanced.capacity.tolerance, self.advanced.capacity.gap_tolerance,
                      self.advanced.ascent.kkt_tolerance, self.advanced.mirror.stationarity_tolerance,
                      self.advanced.search.resolution)
        if not all(t > 0 for t in tolerances):
            raise ValueError("Tolerances must be positive.")
        if self.n < 1:
            raise ValueError(f"Blocklength must be positive; got {self.n}.")
        if self.scale <= 0:
            raise ValueError(f"Scale must be positive; got {self.scale}.")

    @property
    def format(self) -> OutputFormat:
        if self.output_format is not None:
            return self.output_format
        return OutputFormat.CSV if self.command == Command.CURVE else OutputFormat.JSON


@dataclass
class RunOutput:
    """What a command produced: flat ``rows`` for CSV and a ``document`` for JSON."""

    kind: str
    columns: List[str]
    rows: List[Dict[str, Any]]
    document: Dict[str, Any]
    exit_status: int = 0


_telemetry: Optional[Telemetry] = None


def _metrics_for(config: RunConfig) -> Metrics:
    global _telemetry
    if _telemetry is None:
        _telemetry = Telemetry(config.advanced.metrics_buffer_size)
    return _telemetry.start(config.command.value)


def _channel(config: RunConfig) -> Channel:
    if config.channel is None:
        raise PreconditionError(f"The {config.command.value} command needs --channel.")
    return load_channel(config.channel)


def _gammas(config: RunConfig, channel: Channel) -> List[float]:
    if config.gammas:
        return config.gammas
    logging.warning(f"No budget specified; using the largest input cost {channel.gamma_max}.")
    return [channel.gamma_max]


def _rates(config: RunConfig) -> List[float]:
    if not config.rates:
        raise PreconditionError(f"The {config.command.value} command needs --rate or --rate-grid.")
    return config.rates


def _with_bits(record: Dict[str, Any], key: str, value: float, bits: bool):
    record[f"{key}_nats"] = value
    if bits:
        record[f"{key}_bits"] = to_bits(value)


def run_capacity(config: RunConfig, metrics: Metrics) -> RunOutput:
    channel = _channel(config)
    gammas = _gammas(config, channel)
    with metrics.timed("solve.capacity"):
        results = capacity_curve(channel, gammas, config.advanced.capacity, config.advanced.threads)
    metrics.inc("solver.calls", len(results))

    rows, records = [], []
    for result in results:
        row = {"gamma": result.gamma, "value_nats": result.value, "value_bits": to_bits(result.value),
               "mu": result.lagrange_mu, "gap": result.duality_gap}
        rows.append(row)
        records.append({**row, "input_distribution": result.optimal_input.weights.tolist(),
                        "iterations": result.iterations})
    document = records[0] if len(records) == 1 else {"records": records}
    return RunOutput("capacity", ["gamma", "value_nats", "value_bits", "mu", "gap"], rows, document)


def _arimoto_fields(report: ExponentReport) -> Dict[str, Any]:
    return {"value": report.value, "mu": report.best_params.mu, "rho": report.rho, "lambda": report.best_params.lam,
            "kkt_gap": report.kkt_gap, "boundary_hit": report.boundary_hit,
            "optimal_input": report.best_input.weights.tolist()}


def _dk_fields(report: DkReport, dump_joint: bool) -> Dict[str, Any]:
    fields = {"value": report.value, "mu": report.mu, "lambda": report.lam,
              "stationarity_gap": report.stationarity_gap, "path": report.path, "boundary_hit": report.boundary_hit}
    if dump_joint:
        fields["joint"] = report.best_joint.weights.tolist()
    return fields


def _solve(method: str, rate: float, gamma: float, channel: Channel, config: RunConfig, metrics: Metrics):
    advanced = config.advanced
    with metrics.timed(f"solve.{method}"):
        if method == "dk":
            report = g_dk(rate, gamma, channel, advanced.search, advanced.mirror)
        elif method == "ar":
            report = g_ar_sup(rate, gamma, channel, advanced.search, advanced.ascent)
        else:
            report = g_oh_sup(rate, gamma, channel, advanced.search, advanced.ascent)
    metrics.inc("solver.calls")
    metrics.inc("grid.points", len(report.grid_trace))
    if report.boundary_hit:
        metrics.inc("boundary.hits")
    return report


def _exponent_row(rate: float, gamma: float, reports: Dict[str, Any]) -> Dict[str, Any]:
    row = {"rate_nats": rate, "rate_bits": to_bits(rate), "gamma": gamma}
    for method, report in reports.items():
        row[f"g_{method}"] = report.value
        row[f"mu_{method}"] = report.mu if method == "dk" else report.best_params.mu
        if method == "dk":
            row["lambda_dk"] = report.lam
            row["stationarity_gap_dk"] = report.stationarity_gap
        else:
            row[f"rho_{method}"] = report.rho
            row[f"kkt_gap_{method}"] = report.kkt_gap
    return row


def _exponent_columns(methods: Sequence[str]) -> List[str]:
    columns = ["rate_nats", "rate_bits", "gamma"]
    for method in methods:
        if method == "dk":
            columns += ["g_dk", "mu_dk", "lambda_dk", "stationarity_gap_dk"]
        else:
            columns += [f"g_{method}", f"mu_{method}", f"rho_{method}", f"kkt_gap_{method}"]
    return columns


def run_exponent(config: RunConfig, metrics: Metrics) -> RunOutput:
    channel = _channel(config)
    rates, gammas = _rates(config), _gammas(config, channel)
    if config.command == Command.CURVE and len(gammas) > 1:
        raise PreconditionError("curve sweeps the rate at a single budget; pass one --gamma.")
    for method in config.methods:
        metrics.append("method", method)

    rows, records = [], []
    for gamma in gammas:
        for rate in rates:
            reports = {m: _solve(m, rate, gamma, channel, config, metrics) for m in config.methods}
            rows.append(_exponent_row(rate, gamma, reports))
            record = {"gamma": gamma}
            _with_bits(record, "rate", rate, config.bits)
            for method, report in reports.items():
                fields = _dk_fields(report, config.dump_joint) if method == "dk" else _arimoto_fields(report)
                if config.bits:
                    fields["value_bits"] = to_bits(fields["value"])
                record[method] = fields
            if len(reports) == 1:
                # a single method reports its fields at the top level
                record.update(record.pop(config.methods[0]))
            records.append(record)

    if config.command == Command.CURVE:
        return RunOutput("curve", CURVE_COLUMNS, rows, {"gamma": gammas[0], "records": records})
    document = records[0] if len(records) == 1 else {"records": records}
    return RunOutput("exponent", _exponent_columns(config.methods), rows, document)


def _input_process(config: RunConfig, channel: Channel) -> InputProcess:
    if config.process == "random":
        return InputProcess.random(np.random.default_rng(config.seed), channel.input_size, config.n)
    if config.process.startswith("iid:"):
        path = config.process[len("iid:"):]
        try:
            weights = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise PreconditionError(f"Cannot read input law {path}: {e}") from e
        return InputProcess.iid(Distribution(np.asarray(weights, dtype=float)), config.n)
    raise PreconditionError(f"Invalid process: {config.process} (must be random or iid:FILE).")


def run_spectrum(config: RunConfig, metrics: Metrics) -> RunOutput:
    channel = _channel(config)
    params = TiltParams(config.mu, config.lam)
    process = _input_process(config, channel)
    options = config.advanced.spectrum

    with metrics.timed("solve.spectrum"):
        trace = greedy_potential_bound(process, channel, params, options, config.advanced.ascent)
        state = tilt_recursion(process, trace.outputs, channel, params, options)
        direct = omega_direct(process, trace.outputs, channel, params, options)
    recursive = float(sum(state.log_phi))
    exactness = abs(recursive - direct) <= 1e-10 * max(1.0, abs(direct)) if math.isfinite(direct) else \
        recursive == direct
    document = {
        "n": config.n,
        "mu": config.mu,
        "lambda": config.lam,
        "phi_trace": state.log_phi,
        "omega_direct": direct,
        "omega_recursive": recursive,
        "cap": trace.cap,
        "bound_checks": {"per_step": trace.checks, "potential_cap": trace.holds, "recursion_exact": exactness},
        "outputs": [law.tolist() for law in trace.outputs.steps],
    }
    if config.rates and config.lam > 0:
        gamma = _gammas(config, channel)[0]
        document["exponent_lower_bound"] = [
            {"rate": rate, "gamma": gamma,
             "value": exponent_lower_bound(rate, gamma, channel, params, config.n, config.advanced.ascent)}
            for rate in config.rates
        ]
    rows = [{"t": t + 1, "log_phi": value, "cap": trace.cap, "holds": holds}
            for t, (value, holds) in enumerate(zip(state.log_phi, trace.checks))]
    status = 0 if trace.holds and exactness else 1
    return RunOutput("spectrum", ["t", "log_phi", "cap", "holds"], rows, document, status)


def run_oracle(config: RunConfig, metrics: Metrics) -> RunOutput:
    channel = _channel(config)
    rate, gamma = _rates(config)[0], _gammas(config, channel)[0]
    with metrics.timed("solve.oracle"):
        result = brute_force_gn(config.n, rate, gamma, channel, config.advanced.oracle)
    metrics.inc("codebooks.searched", result.codebooks_searched)
    document = {
        "n": config.n,
        "rate": rate,
        "gamma": gamma,
        "messages": result.message_count,
        "g_n": result.g_n,
        "pc": result.pc,
        "best_codebook": [list(word) for word in result.best_codebook.words],
        "searched": result.codebooks_searched,
    }
    if config.bits:
        document["g_n_bits"] = to_bits(result.g_n)
    row = {k: document[k] for k in ("n", "rate", "gamma", "messages", "g_n", "pc", "searched")}
    return RunOutput("oracle", list(row), [row], document)


def run_verify(config: RunConfig, metrics: Metrics) -> RunOutput:
    # verify keeps its own reduced grids and tighter ascent tolerance
    options = VerifyOptions(scale=config.scale, seed=config.seed)
    options.search.threads = config.advanced.threads
    options.oracle.threads = config.advanced.threads
    checks = run_checks(options, metrics).checks
    channels = [config.channel] if config.channel else shipped_channels()
    for path in channels:
        checks.append(verify_channel(load_channel(path), Path(path).stem, options, metrics))

    rows = [{"name": c.name, "instances": c.instances, "violations": c.violations, "worst": c.worst}
            for c in checks]
    ok = all(c.ok for c in checks)
    return RunOutput("verify", ["name", "instances", "violations", "worst"], rows,
                     {"ok": ok, "seed": config.seed, "scale": config.scale,
                      "checks": [c.to_record() for c in checks]}, 0 if ok else 1)


def shipped_channels() -> List[str]:
    return sorted(str(p) for p in (Path(__file__).parent / "channels").glob("*.json"))


RUNNERS = {
    Command.CAPACITY: run_capacity,
    Command.EXPONENT: run_exponent,
    Command.CURVE: run_exponent,
    Command.SPECTRUM: run_spectrum,
    Command.ORACLE: run_oracle,
    Command.VERIFY: run_verify,
}


def run(config: RunConfig) -> RunOutput:
    metrics = _metrics_for(config)
    if config.channel:
        metrics.append("channel", Path(config.channel).name)
    try:
        output = RUNNERS[config.command](config, metrics)
    except ConvexpError as e:
        metrics.finish_error(e.code)
        logging.debug(f"{config.command.value} failed: {metrics}")
        raise
    if output.exit_status == 0:
        metrics.finish_ok()
    else:
        metrics.finish_error("violations")
    logging.debug(f"{config.command.value} metrics: {metrics}")
    if config.include_metrics:
        output.document["metrics"] = metrics.record()
    return output


def _finite(value: Any) -> Any:
    """Replace non-finite floats by None, so the JSON stays RFC 8259 compliant."""
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {key: _finite(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(item) for item in value]
    return value


def render(output: RunOutput, output_format: OutputFormat) -> str:
    if output_format == OutputFormat.JSON:
        document = _finite({"kind": output.kind, "version": CSV_VERSION, **output.document})
        return json.dumps(document, indent=2, allow_nan=False) + "\n"
    buffer = io.StringIO()
    buffer.write(f"# convexp-{output.kind} v{CSV_VERSION}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(output.columns)
    for row in output.rows:
        writer.writerow(["" if row.get(c) is None else format_value(row[c]) for c in output.columns])
    return buffer.getvalue()


def write(text: str, path: Optional[str]):
    if path is None:
        sys.stdout.write(text)
        return
    with filelock.FileLock(path + '.lock'):
        with open(path, 'w', encoding='utf-8') as fp:
            fp.write(text)


def _options_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument(
        "--channel", "-c", type=str, help="Channel JSON file with input_alphabet, output_alphabet, W and cost."
    )

    rate_group = parser.add_mutually_exclusive_group()
    rate_group.add_argument("--rate", "-r", type=float, help="Rate in nats per channel use.")
    rate_group.add_argument("--rate-grid", type=str, help="Rates as a,b,c or start:stop:count.")
    gamma_group = parser.add_mutually_exclusive_group()
    gamma_group.add_argument("--gamma", "-g", type=float, help="Cost budget.")
    gamma_group.add_argument("--gamma-grid", type=str, help="Budgets as a,b,c or start:stop:count.")

    parser.add_argument("--method", "-m", type=str, default="all", help="oh, ar, dk, all, or a comma list.")
    parser.add_argument("--n", type=int, default=1, help="Blocklength for spectrum and oracle.")
    parser.add_argument("--mu", type=float, default=0.0, help="Cost multiplier for spectrum.")
    parser.add_argument("--lambda", type=float, default=1.0, help="Tilt exponent for spectrum.", dest="lam")
    parser.add_argument("--process", type=str, default="random", help="Input process: random or iid:FILE.")
    parser.add_argument("--budget", type=int, help="Largest number of codebooks the oracle may enumerate.")

    parser.add_argument("--output", "-o", type=str, help="Write here instead of stdout.")
    parser.add_argument("--format", choices=[f.value for f in OutputFormat], help="Output format.")
    parser.add_argument("--bits", action="store_true", help="Also report rate-like values in bits.")
    parser.add_argument("--dump-joint", action="store_true", help="Include the Dueck-Koerner optimal joint.")
    parser.add_argument("--metrics", action="store_true", help="Include run metrics in JSON output.")
    parser.add_argument("--verbose", "-v", action="store_true", help="Log solver progress.")

    parser.add_argument("--threads", type=int, help="Worker threads (default: $CONVEXP_THREADS or 1).")
    parser.add_argument("--seed", type=int, default=0, help="Seed for verify and random processes.")
    parser.add_argument("--scale", type=float, default=1.0, help="Multiplier on verify instance counts.")

    parser.add_argument("--tolerance", type=float, help="Capacity and mirror-descent stopping tolerance.")
    parser.add_argument("--kkt-tolerance", type=float, help="KKT tolerance of the input-law ascent.")
    parser.add_argument("--max-iterations", type=int, help="Iteration cap of every inner solver.")
    parser.add_argument("--mu-points", type=int, help="mu grid size of the outer sups.")
    parser.add_argument("--rho-points", type=int, help="rho grid size of the Arimoto and spectrum sups.")
    parser.add_argument("--lambda-points", type=int, help="lambda grid size of the Dueck-Koerner sup.")
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser("convexp", description="Strong converse exponents of cost-constrained DMCs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)
    common = _options_parser()
    for command in Command:
        commands.add_parser(command.value, parents=[common])
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    advanced = RunConfig.AdvancedOptions(threads=resolve_threads(args.threads))
    advanced.search.threads = advanced.threads
    advanced.oracle.threads = advanced.threads
    if args.tolerance is not None:
        advanced.capacity.tolerance = args.tolerance
        advanced.mirror.stationarity_tolerance = args.tolerance
    if args.kkt_tolerance is not None:
        advanced.ascent.kkt_tolerance = args.kkt_tolerance
    if args.max_iterations is not None:
        advanced.capacity.max_iterations = args.max_iterations
        advanced.ascent.max_iterations = args.max_iterations
        advanced.mirror.max_iterations = args.max_iterations
    for name in ("mu_points", "rho_points", "lambda_points"):
        if getattr(args, name) is not None:
            setattr(advanced.search, name, getattr(args, name))
    if args.budget is not None:
        advanced.oracle.codebook_budget = args.budget

    rates = [args.rate] if args.rate is not None else parse_grid(args.rate_grid) if args.rate_grid else []
    gammas = [args.gamma] if args.gamma is not None else parse_grid(args.gamma_grid) if args.gamma_grid else []
    return RunConfig(
        command=Command(args.command),
        channel=args.channel,
        rates=rates,
        gammas=gammas,
        methods=resolve_methods(args.method),
        n=args.n,
        mu=args.mu,
        lam=args.lam,
        process=args.process,
        output=args.output,
        output_format=OutputFormat(args.format) if args.format else None,
        bits=args.bits,
        dump_joint=args.dump_joint,
        include_metrics=args.metrics,
        seed=args.seed,
        scale=args.scale,
        advanced=advanced,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        config = config_from_args(args)
    except ValueError as e:
        parser.error(str(e))

    try:
        output = run(config)
    except ConvexpError as e:
        sys.stderr.write(json.dumps(e.record()) + "\n")
        return e.exit_status
    write(render(output, config.format), config.output)
    return output.exit_status


if __name__ == "__main__":
    sys.exit(main())
