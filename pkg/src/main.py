"""
Main entry point: the `derive`, `estimate`, `discover` and `simulate` subcommands.
"""

import argparse
import sys
import time
from typing import Any, Dict, List, Optional

from src.config import RunConfig, load_run_config
from src.exceptions import BNIError, ConfigError
from src.logging_config import configure_logging, get_logger
from src.models.state import PipelineState
from src.orchestrator import AnalysisPipeline, summarize_estimates

logger = get_logger(__name__)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Path to a YAML config file")
    common.add_argument("--debug", action="store_true", help="Enable debug logging")
    common.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    common.add_argument("--dry-run", action="store_true", help="Print the resolved configuration and exit")
    common.add_argument("--output-dir", help="Directory for result files (default: output)")
    common.add_argument("--seed", type=int, help="Root seed; required for simulate and bootstrap runs")
    common.add_argument("--threads", type=int, help="Worker threads (default: 1)")
    common.add_argument("--no-plots", action="store_true", help="Do not write SVG figures")
    return common


def _data_parser() -> argparse.ArgumentParser:
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--network", help="Network CSV: intervention_id,outcome_id,weight")
    data.add_argument("--interventions", help="Intervention unit CSV: id,<covariates>,treatment")
    data.add_argument("--outcomes", help="Outcome unit CSV: id,<covariates>,outcome")
    data.add_argument("--mapping", help="Exposure mapping (default: second_ranked)")
    return data


def _estimation_parser() -> argparse.ArgumentParser:
    estimation = argparse.ArgumentParser(add_help=False)
    estimation.add_argument("--truncate", help="Quantile clip levels 'lower,upper' (both stages unless --truncate-joint)")
    estimation.add_argument("--truncate-joint", help="Quantile clip levels of the joint stage")
    estimation.add_argument("--propensity-formula", help="Intervention propensity model formula")
    estimation.add_argument("--outcome-formula", help="Outcome model formula (must contain Z and G)")
    estimation.add_argument("--methods", help="Comma-separated subset of G,AIPW,SAIPW")
    estimation.add_argument("--estimands", help="Comma-separated subset of direct,spillover")
    estimation.add_argument(
        "--subgroup",
        action="append",
        metavar="NAME=EXPR",
        help="Subgroup predicate over the outcome frame, e.g. poor='PctPoor > 0.12' (repeatable)",
    )
    estimation.add_argument("--bootstrap", type=int, help="Bootstrap replicates (0 disables)")
    estimation.add_argument("--level", type=float, help="Confidence level (default: 0.95)")
    estimation.add_argument(
        "--fixed-bounds", action="store_true", default=None, help="Reuse full-data truncation bounds in every replicate"
    )
    estimation.add_argument("--trim", type=float, help="Two-sided outcome trimming fraction, e.g. 0.01")
    return estimation


def parse_args(argv: Optional[List[str]] = None):
    """Parse command line arguments."""
    common, data, estimation = _common_parser(), _data_parser(), _estimation_parser()
    parser = argparse.ArgumentParser(
        description="Heterogeneous direct and spillover effects under bipartite interference"
    )
    subcommands = parser.add_subparsers(dest="command", required=True)

    subcommands.add_parser(
        "derive",
        parents=[common, data],
        help="Derive key/upwind structure and exposures; writes exposures.csv",
    )
    subcommands.add_parser(
        "estimate",
        parents=[common, data, estimation],
        help="Estimate direct and spillover effects; writes estimates.csv",
    )
    discover = subcommands.add_parser(
        "discover",
        parents=[common, data, estimation],
        help="Search IATEs for effect-modifying subgroups",
    )
    discover.add_argument("--targets", help="Comma-separated IATE targets, e.g. direct:0,spillover:1")
    discover.add_argument("--discovery-method", choices=["G", "AIPW", "SAIPW"], help="Estimator behind the IATEs")
    discover.add_argument("--covariates", help="Comma-separated covariates to binarize (default: all)")

    simulate = subcommands.add_parser(
        "simulate",
        parents=[common],
        help="Monte Carlo study of percent absolute bias",
    )
    simulate.add_argument(
        "--study",
        choices=["single", "misspecification", "sample_size", "variance", "pate"],
        help="Named study (default: misspecification)",
    )
    simulate.add_argument("--values", help="Comma-separated sweep values replacing the study defaults")
    simulate.add_argument("--scenario", choices=["A", "B", "C", "D"], help="Model specification of the base scenario")
    simulate.add_argument("--replications", type=int, help="Monte Carlo replications per scenario")
    simulate.add_argument("--sample-proportion", type=float, help="Share of outcome units sampled")
    simulate.add_argument("--sigma2", type=float, help="Outcome noise variance")
    simulate.add_argument("--xi", type=float, help="Population average effect size")
    simulate.add_argument(
        "--no-subgroup-terms",
        action="store_true",
        help="Leave the planted-subgroup interactions out of the correct outcome model",
    )
    simulate.add_argument("--plants", type=int, help="Synthetic intervention units")
    simulate.add_argument("--outcome-units", type=int, help="Synthetic outcome units")
    simulate.add_argument("--truncate", help="Component truncation levels 'lower,upper'")
    simulate.add_argument("--truncate-joint", help="Joint truncation levels 'lower,upper'")
    simulate.add_argument("--network", help="Network CSV of a loaded population")
    simulate.add_argument("--interventions", help="Intervention CSV of a loaded population")
    simulate.add_argument("--outcomes", help="Outcome CSV of a loaded population")

    return parser.parse_args(argv)


def _subgroups(pairs: Optional[List[str]]) -> Optional[Dict[str, str]]:
    if not pairs:
        return None
    subgroups = {}
    for pair in pairs:
        name, sep, expression = pair.partition("=")
        if not sep or not name.strip():
            raise ConfigError(f"--subgroup expects NAME=EXPR, got {pair!r}")
        subgroups[name.strip()] = expression.strip()
    return subgroups


def build_overrides(args) -> Dict[str, Any]:
    """Dotted config keys set by the flags that were given."""
    get = lambda name: getattr(args, name, None)  # noqa: E731
    overrides: Dict[str, Any] = {
        "output_dir": get("output_dir"),
        "seed": get("seed"),
        "threads": get("threads"),
        "plots": False if get("no_plots") else None,
    }
    if args.command == "simulate":
        prefix = "simulation.scenario."
        overrides.update(
            {
                "simulation.study": get("study"),
                "simulation.values": get("values"),
                prefix + "name": get("scenario"),
                prefix + "misspec": get("scenario"),
                prefix + "replications": get("replications"),
                prefix + "sample_proportion": get("sample_proportion"),
                prefix + "sigma2": get("sigma2"),
                prefix + "xi": get("xi"),
                prefix + "subgroup_terms": False if get("no_subgroup_terms") else None,
                prefix + "network.J": get("plants"),
                prefix + "network.n": get("outcome_units"),
                prefix + "truncation.component": get("truncate"),
                prefix + "truncation.joint": get("truncate_joint"),
                prefix + "network_path": get("network"),
                prefix + "interventions_path": get("interventions"),
                prefix + "outcomes_path": get("outcomes"),
            }
        )
        return overrides

    overrides.update(
        {
            "network": get("network"),
            "interventions": get("interventions"),
            "outcomes": get("outcomes"),
            "estimation.mapping": get("mapping"),
            "estimation.propensity_formula": get("propensity_formula"),
            "estimation.outcome_formula": get("outcome_formula"),
            "estimation.methods": get("methods"),
            "estimation.estimands": get("estimands"),
            "estimation.subgroups": _subgroups(get("subgroup")),
            "estimation.truncation.component": get("truncate"),
            "estimation.truncation.joint": get("truncate_joint") or get("truncate"),
            "estimation.fixed_bounds": get("fixed_bounds"),
            "bootstrap": get("bootstrap"),
            "level": get("level"),
            "trim": get("trim"),
            "discovery.targets": get("targets"),
            "discovery.method": get("discovery_method"),
            "discovery.covariates": get("covariates"),
        }
    )
    return overrides


def print_results(state: PipelineState):
    """Print written files and, for estimation runs, the population-level estimates."""
    for name, value in summarize_estimates(state).items():
        print(f"{name}: {value}")
    for report in state.reports:
        significant = [row.covariate for row in report.rows if row.significant]
        print(f"discovery {report.estimand}/{report.held_level}/{report.method}: {significant or 'none significant'}")
    if state.study is not None:
        print(state.study.summary.to_string(index=False))
    for path in state.outputs:
        print(f"wrote {path}")


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = parse_args(argv)

    configure_logging(debug=args.debug, quiet=args.quiet)

    logger.info("cli_starting", command=args.command)
    start_time = time.time()

    try:
        config: RunConfig = load_run_config(args.config, build_overrides(args))
        if args.dry_run:
            print(config.to_yaml(), end="")
            return 0

        pipeline = AnalysisPipeline(config)
        final_state = pipeline.run(args.command)
        print_results(final_state)

        logger.info(
            "cli_complete",
            command=args.command,
            duration=time.time() - start_time,
            outputs=len(final_state.outputs),
        )
        return 0

    except BNIError as e:
        logger.error("cli_failed", command=args.command, error=str(e), error_type=type(e).__name__, exit_code=e.exit_code)
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code

    except KeyboardInterrupt:
        logger.info("cli_interrupted")
        print("\nOperation interrupted by user", file=sys.stderr)
        return 130

    except Exception as e:
        logger.error("cli_exception", error=str(e), exc_info=True)
        print(f"Unexpected error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
