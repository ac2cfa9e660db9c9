"""Command-line entry point: graph statistics, community profiles, conductance bounds and cluster scores."""
import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from dotenv import load_dotenv
from pydantic import ValidationError

# Load environment variables before the logger reads them
env_file = Path(".env.local")
if not env_file.exists():
    env_file = Path(".env.prod")
if env_file.exists():
    load_dotenv(env_file)
else:
    load_dotenv()

from config import EnvironmentSettings, RunConfig
from utils.logger import LOGGER
from modules.bounds import bounds_report
from modules.datasets import load_graph
from modules.errors import CommunityError, ConvergenceError, DisconnectedGraphError
from modules.graph import component_count, degree_summary, read_cluster_file
from modules.ncp import bias_report, build_ncp, exact_ncp, generate_candidates, split_disconnected
from modules.reports import ReportService, score_rows
from modules.scoring import ScoreKind, score, score_all

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def cmd_stats(args: argparse.Namespace) -> int:
    graph = load_graph(args.graph, keep_largest_component=args.keep_lcc)
    print(f"n={graph.node_count} m={graph.edge_count} components={component_count(graph)}")
    for key, value in degree_summary(graph).items():
        print(f"{key}={value:g}")
    return EXIT_OK


def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "graph": args.graph,
        "methods": args.methods,
        "samples": args.samples,
        "seed": args.seed,
        "scores": args.scores,
        "out": args.out,
        "exact": args.exact or None,
        "sdp": args.sdp or None,
        "keep_lcc": args.keep_lcc or None,
        "connected_only": args.connected_only or None,
        "bias": False if args.no_bias else None,
        "workers": args.workers,
    }
    config = RunConfig.from_sources(args.config, overrides, args.settings)
    if args.workers is None and "workers" not in config.model_fields_set:
        config.workers = EnvironmentSettings.load().NCP_WORKERS
    return config


def cmd_ncp(args: argparse.Namespace) -> int:
    config = _run_config(args)
    kinds = [ScoreKind.parse(name) for name in config.scores]
    graph = load_graph(config.graph, keep_largest_component=config.keep_lcc)
    LOGGER.info(f"Running {config.methods} on {graph} with seed {config.seed}")

    reports = ReportService(config.out)
    reports.write_config(config)
    candidates = generate_candidates(graph, config, on_dendrogram=lambda tree: reports.write_dendrogram(graph, tree))
    connected = split_disconnected(graph, candidates)
    children = [candidate for candidate in connected if candidate.cluster_id is None]
    for offset, child in enumerate(children):
        child.cluster_id = len(candidates) + offset
    pool = connected if config.connected_only else candidates + children

    reports.write_candidates(graph, pool)
    reports.write_ncp(build_ncp(graph, pool, kind) for kind in kinds)
    if config.exact:
        reports.write_ncp(
            (exact_ncp(graph, kind, config.exact_oracle_limit, config.connected_only) for kind in kinds),
            name="ncp_exact.csv",
        )
    if config.bias:
        reports.write_bias(bias_report(graph, candidates, config.settings, config.seed))

    if config.sdp:
        report = bounds_report(graph, Path(config.graph).stem, True, config.settings.bounds, config.seed)
        reports.write_bounds(report)
        if not report.certified:
            LOGGER.warning("Bounds are flagged: the dual certificate or the eigen-residual check did not pass")
            return EXIT_NUMERICAL
    return EXIT_OK


def cmd_bounds(args: argparse.Namespace) -> int:
    config = RunConfig.from_sources(
        None,
        {"graph": args.graph, "seed": args.seed, "out": args.out, "keep_lcc": args.keep_lcc or None,
         "allow_disconnected": args.allow_disconnected or None},
        args.settings,
    )
    graph = load_graph(config.graph, keep_largest_component=config.keep_lcc)
    if not config.allow_disconnected and component_count(graph) != 1:
        raise DisconnectedGraphError(
            f"graph has {component_count(graph)} components; pass --allow-disconnected or --keep-lcc"
        )

    report = bounds_report(graph, Path(config.graph).stem, args.sdp, config.settings.bounds, config.seed)
    ReportService(config.out).write_bounds(report)
    row = report.to_row()
    print(" ".join(f"{key}={value}" for key, value in row.items()))
    if not report.certified:
        LOGGER.warning("Bounds are flagged: the dual certificate or the eigen-residual check did not pass")
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    graph = load_graph(args.graph, keep_largest_component=args.keep_lcc)
    cluster = read_cluster_file(graph, args.cluster)
    values = score_all(graph, cluster) if args.all else [score(graph, cluster, ScoreKind.parse(args.kind))]
    for row in score_rows(values):
        print(f"{row['kind']} {row['value'] or 'n/a'}")
    if args.out:
        out = Path(args.out)
        ReportService(out.parent).write_scores(values, name=out.name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Network community profiles and conductance bounds")
    sub = parser.add_subparsers(dest="command", required=True)

    stats = sub.add_parser("stats", help="Node, edge, degree and component counts")
    stats.add_argument("graph", help="Edge-list path or a bundled graph name (karate, football, dolphins)")
    stats.add_argument("--keep-lcc", action="store_true", help="Keep only the largest connected component")
    stats.set_defaults(handler=cmd_stats)

    ncp = sub.add_parser("ncp", help="Generate candidates and write community profiles")
    ncp.add_argument("--graph", help="Edge-list path or a bundled graph name")
    ncp.add_argument("--config", help="Run file with key = value lines (flags win)")
    ncp.add_argument("--settings", help="YAML with algorithm defaults (default: config/config.yml)")
    ncp.add_argument("--methods", help="Comma-separated: local-spectral,mqi,global-spectral,dendrogram")
    ncp.add_argument("--samples", type=int, help="Seed sample size and flow trials")
    ncp.add_argument("--seed", type=int, help="Global seed (default: 42)")
    ncp.add_argument("--scores", help="Comma-separated score kinds (default: Conductance)")
    ncp.add_argument("--out", help="Output directory (default: ncp-out)")
    ncp.add_argument("--exact", action="store_true", help="Also write the exact profile (small graphs only)")
    ncp.add_argument("--sdp", action="store_true", help="Also write spectral and SDP bounds")
    ncp.add_argument("--keep-lcc", action="store_true", help="Keep only the largest connected component")
    ncp.add_argument("--connected-only", action="store_true", help="Profile connected sets only")
    ncp.add_argument("--no-bias", action="store_true", help="Skip the internal-conductance report")
    ncp.add_argument("--workers", type=int, help="Worker threads (default: NCP_WORKERS or 1)")
    ncp.set_defaults(handler=cmd_ncp)

    bounds = sub.add_parser("bounds", help="Spectral and SDP lower bounds on conductance")
    bounds.add_argument("graph", help="Edge-list path or a bundled graph name")
    bounds.add_argument("--sdp", action="store_true", help="Also solve the balanced-cut relaxation")
    bounds.add_argument("--allow-disconnected", action="store_true", help="Report bound 0 instead of failing")
    bounds.add_argument("--keep-lcc", action="store_true", help="Keep only the largest connected component")
    bounds.add_argument("--seed", type=int, help="Seed of the starting embedding")
    bounds.add_argument("--out", help="Output directory (default: ncp-out)")
    bounds.add_argument("--settings", help="YAML with algorithm defaults")
    bounds.set_defaults(handler=cmd_bounds)

    scores = sub.add_parser("score", help="Score one cluster file")
    scores.add_argument("graph", help="Edge-list path or a bundled graph name")
    scores.add_argument("cluster", help="File of original node ids")
    scores.add_argument("--all", action="store_true", help="All twelve kinds")
    scores.add_argument("--kind", default="Conductance", help="Score kind when --all is not given")
    scores.add_argument("--keep-lcc", action="store_true", help="Keep only the largest connected component")
    scores.add_argument("--out", help="Also write the scores as CSV to this path")
    scores.set_defaults(handler=cmd_score)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one sub-command and map failures to exit codes."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConvergenceError as e:
        LOGGER.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except (CommunityError, ValidationError, FileNotFoundError) as e:
        LOGGER.error(f"{args.command} failed: {e}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
