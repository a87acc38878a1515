"""Command-line front end: test, simulate, benchmark, embed, inspect-weights."""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src import __version__
from src.core.config import Config
from src.core.errors import DataError, DwTestError, UsageError
from src.core.results import Method, TestResult, format_report
from src.services.baselines import run_baseline
from src.services.benchmark import BenchmarkConfig, Scenario, ScenarioConfig, run_benchmark
from src.services.dataset import (
    ImageTemplate,
    jitter,
    load_csv,
    load_points_csv,
    read_provenance,
    write_csv,
)
from src.services.delaunay import weight_matrix
from src.services.dwtest import DwConfig, run_dw_test, run_dw_z_test
from src.services.manifold import EmbeddedCloud, embed, estimate_intrinsic_dimension

logger = logging.getLogger(__name__)

COMMANDS = ("test", "simulate", "benchmark", "embed", "inspect-weights")
IMAGE_SUFFIXES = {".pgm", ".png", ".csv"}


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting with status 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _status(message: str) -> None:
    print(message, file=sys.stderr)


def _parse_alphas(raw: str) -> Tuple[float, ...]:
    try:
        alphas = tuple(float(a) for a in raw.split(",") if a.strip())
    except ValueError:
        raise UsageError(f"invalid --alpha list: {raw}")
    if not alphas or any(not 0 < a < 1 for a in alphas):
        raise UsageError("--alpha values must lie in (0, 1)")
    return alphas


def _parse_methods(raw: str) -> List[Method]:
    try:
        return [Method(m.strip()) for m in raw.split(",") if m.strip()]
    except ValueError:
        raise UsageError(f"unknown method in '{raw}'; choose from {[m.value for m in Method]}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dwtest", description="Delaunay weighted two-sample test")
    parser.add_argument("--version", action="version", version=f"dwtest {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--input", type=Path, help="input CSV (or template image / pool)")
        p.add_argument("--output", type=Path, help="output file or directory")
        p.add_argument("--d", type=int, help="intrinsic dimension (estimated when absent)")
        p.add_argument("--k", type=int, help="neighbours in the geodesic graph")
        p.add_argument("--eta", type=float, default=Config.DEFAULT_ETA)
        p.add_argument("--seed", type=int, default=Config.DEFAULT_SEED)
        p.add_argument("--jitter", action="store_true", help="perturb inputs by 1e-9 relative")

    test = sub.add_parser("test", help="run a two-sample test on a labeled CSV")
    common(test)
    test.add_argument("--label", help="label column name or index")
    test.add_argument("--method", default="dw", choices=[m.value for m in Method])
    test.add_argument("--B", type=int, default=Config.DEFAULT_PERMUTATIONS)
    test.add_argument("--alpha", default=",".join(f"{a:g}" for a in Config.DEFAULT_ALPHAS))
    test.add_argument("--threads", type=int, default=Config.MAX_THREADS)

    simulate = sub.add_parser("simulate", help="write a synthetic two-sample dataset")
    common(simulate)
    simulate.add_argument("--scenario", required=True, choices=[s.value for s in Scenario])
    simulate.add_argument("--n1", type=int, default=50)
    simulate.add_argument("--n0", type=int, default=50)

    bench = sub.add_parser("benchmark", help="Monte-Carlo rejection rates and p-value ECDFs")
    common(bench)
    bench.add_argument("--scenario", required=True, choices=[s.value for s in Scenario])
    bench.add_argument("--n1", type=int, default=50)
    bench.add_argument("--n0", type=int, default=50)
    bench.add_argument("--method", default="dw,knn,energy,mmd")
    bench.add_argument("--replicates", type=int, default=100)
    bench.add_argument("--B", type=int, default=Config.DEFAULT_PERMUTATIONS)
    bench.add_argument("--alpha", default=",".join(f"{a:g}" for a in Config.DEFAULT_ALPHAS))
    bench.add_argument("--threads", type=int, default=Config.MAX_THREADS)

    emb = sub.add_parser("embed", help="export the low-dimensional representation")
    common(emb)
    emb.add_argument("--label", help="label column to drop before embedding")

    inspect = sub.add_parser("inspect-weights", help="export the Delaunay weight triples")
    common(inspect)
    inspect.add_argument("--label", help="label column to drop before embedding")
    return parser


def _header(command: str, args: argparse.Namespace, extra: Optional[Dict[str, Any]] = None) -> Dict[str, str]:
    """Provenance lines: version, command and every resolved option."""
    header = {"dwtest": __version__, "command": command}
    for key, value in sorted(vars(args).items()):
        if key == "command" or value is None or value is False:
            continue
        header[key] = str(value)
    for key, value in (extra or {}).items():
        header[key] = "NA" if value is None else str(value)
    return header


def _default_output(name: str) -> Path:
    Config.ensure_directories()
    return Config.OUTPUT_DIR / name


def _require(value: Any, flag: str, command: str) -> Any:
    if value is None:
        raise UsageError(f"{command} needs {flag}")
    return value


def _read_points(args: argparse.Namespace) -> Tuple[np.ndarray, Dict[str, str]]:
    path = _require(args.input, "--input", args.command)
    provenance = read_provenance(path) if Path(path).exists() else {}
    drop = [args.label] if args.label is not None else []
    return load_points_csv(path, drop), provenance


def cmd_test(args: argparse.Namespace) -> int:
    path = _require(args.input, "--input", "test")
    label = _require(args.label, "--label", "test")
    alphas = _parse_alphas(args.alpha)
    method = Method(args.method)
    sample = load_csv(path, label)
    _status(f"🧪 {method.value} test on n1={sample.n1}, n0={sample.n0}, D={sample.dim}")

    started = time.perf_counter()
    if method in (Method.DW, Method.DW_Z):
        config = DwConfig(
            d=args.d, k=args.k, eta=args.eta, permutations=args.B,
            seed=args.seed, jitter=args.jitter, threads=args.threads,
        )
        result = (run_dw_test if method is Method.DW else run_dw_z_test)(sample, config)
    else:
        d_estimated = None
        d = args.d
        if d is None:
            d = d_estimated = estimate_intrinsic_dimension(sample.points)
        result = run_baseline(method, sample, d, args.B, args.seed, args.threads)
        result.parameters.update({"d_used": d, "d_estimated": d_estimated})
    wall_time = time.perf_counter() - started

    report = _report_fields(result, args, wall_time, alphas)
    text = format_report(report)
    if args.output is None:
        sys.stdout.write(text)
    else:
        args.output.parent.mkdir(parents=True, exist_ok=True)
        lines = "".join(f"# {k}: {v}\n" for k, v in _header("test", args).items())
        args.output.write_text(lines + text, encoding="utf-8")
        _status(f"✅ Report written to {args.output}")
    return 0


def _report_fields(
    result: TestResult, args: argparse.Namespace, wall_time: float, alphas: Sequence[float]
) -> Dict[str, Any]:
    params = dict(result.parameters)
    report: Dict[str, Any] = {
        "method": result.method.value,
        "statistic": result.statistic,
        "p_value": result.p_value,
        "d_used": params.pop("d_used", args.d),
        "d_estimated": params.pop("d_estimated", None),
        "eta": float(params.pop("eta", args.eta)),
        "B": result.replicates,
        "seed": params.pop("seed", args.seed),
        "wall_time": round(wall_time, 3),
    }
    report.update(params)
    report["rejected_at"] = ",".join(f"{a:g}" for a in alphas if result.p_value <= a) or "none"
    return report


def _scenario_config(args: argparse.Namespace) -> ScenarioConfig:
    scenario = Scenario(args.scenario)
    template = None
    pool = None
    if scenario.image_kind is not None and args.input is not None:
        if args.input.suffix.lower() not in IMAGE_SUFFIXES:
            raise DataError(f"template must be one of {sorted(IMAGE_SUFFIXES)}")
        template = ImageTemplate.from_file(args.input)
    if scenario is Scenario.RESAMPLE_NULL:
        pool = load_points_csv(_require(args.input, "--input", args.command))
    return ScenarioConfig(
        scenario=scenario, n1=args.n1, n0=args.n0, d=args.d, template=template, pool=pool
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _scenario_config(args)
    sample = config.generate(args.seed)
    output = args.output or _default_output(f"{args.scenario}_seed{args.seed}.csv")
    write_csv(sample.to_frame(), output, _header("simulate", args, config.describe()))
    _status(f"✅ {sample.n} x {sample.dim} sample written to {output}")
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    config = BenchmarkConfig(
        scenario=_scenario_config(args),
        methods=tuple(_parse_methods(args.method)),
        replicates=args.replicates,
        seed=args.seed,
        permutations=args.B,
        eta=args.eta,
        alphas=_parse_alphas(args.alpha),
        threads=args.threads,
        jitter=args.jitter,
    )
    _status(
        f"🚀 {config.replicates} replicates of {args.scenario} "
        f"with {', '.join(m.value for m in config.methods)} on {config.threads} worker(s)"
    )
    report = run_benchmark(config)
    output_dir = args.output
    if output_dir is None:
        Config.ensure_directories()
        output_dir = Config.OUTPUT_DIR
    ecdf, table = report.write(output_dir, _header("benchmark", args, config.scenario.describe()))
    for method in config.methods:
        rates = ", ".join(f"α={a:g}: {report.rejection(method, a):.3f}" for a in config.alphas)
        _status(f"   {method.value}: {rates}")
    _status(f"✅ Wrote {ecdf} and {table}")
    return 0


def _embedding(args: argparse.Namespace) -> Tuple[EmbeddedCloud, bool]:
    """Cloud from an exported embedding, or embed the input points."""
    points, provenance = _read_points(args)
    if provenance.get("kind") == "embedding":
        d_est = provenance.get("d_estimated", "NA")
        cloud = EmbeddedCloud(points, d_estimated=None if d_est == "NA" else int(d_est))
        return cloud, True
    if args.jitter:
        points = jitter(points, args.seed, Config.JITTER_RELATIVE)
    return embed(points, d=args.d, k=args.k), False


def cmd_embed(args: argparse.Namespace) -> int:
    cloud, _ = _embedding(args)
    output = args.output or _default_output("embedding.csv")
    extra = {"kind": "embedding", "d_estimated": cloud.d_estimated, "d_used": cloud.d, "k_used": cloud.k}
    write_csv(cloud.to_frame(), output, _header("embed", args, extra))
    _status(f"✅ {cloud.n} points embedded in d={cloud.d}, written to {output}")
    return 0


def cmd_inspect_weights(args: argparse.Namespace) -> int:
    cloud, reused = _embedding(args)
    if reused:
        _status("♻️ Input is an exported embedding; skipping re-embedding")
    weights = weight_matrix(cloud, eta=args.eta)
    output = args.output or _default_output("weights.csv")
    extra = {"kind": "weights", "d_used": cloud.d}
    write_csv(weights.to_frame(), output, _header("inspect-weights", args, extra))
    _status(f"✅ {weights.matrix.nnz} weights for n={weights.n} written to {output}")
    return 0


HANDLERS = {
    "test": cmd_test,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
    "embed": cmd_embed,
    "inspect-weights": cmd_inspect_weights,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the process exit code."""
    logging.basicConfig(
        level=Config.LOG_LEVEL, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError(f"choose a command: {', '.join(COMMANDS)}")
        return HANDLERS[args.command](args)
    except DwTestError as e:
        icon = "⚠️" if e.exit_code == 1 else "❌"
        _status(f"{icon} {type(e).__name__}: {e}")
        return e.exit_code
