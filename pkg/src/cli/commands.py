"""
Command-line front end.

    hplab <command> [flags]

Commands: verify, green, profile, scales, flow, rg-exact, mcmc, plateau.
Tables go to stdout (or --out); logs go to stderr.

Exit codes: 0 success, 2 configuration error, 3 numerical-domain error,
4 invariant failure.
"""
import argparse
import logging
from typing import Callable, Dict, List, Optional

from src.cli import experiments
from src.cli.help_messages import COMMAND_INFO
from src.exporters.table_exporter import (
    ResultTable,
    TableExporter,
    export_document,
    write_effective_dump,
    write_sidecar,
)
from src.models.errors import ConfigError, DomainError, InvariantError
from src.utils.config_manager import ConfigManager
from src.utils.log import configure_logging
from src.validators.identity_suite import run_identity_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_INVARIANT = 4

# argparse dest -> RunConfig key, where they differ
RENAMED_FLAGS = {'quad_scheme': 'scheme'}
# dests that steer the CLI itself rather than the run
CLI_ONLY = {'command', 'config', 'verbose', 'quiet', 'log_file', 'inject_q'}

SHORT_HELP = {
    'verify': 'run the identity suite',
    'green': 'finite-volume Green function table',
    'profile': 'universal profiles f_n(s), Σ_{n,2}(s)',
    'scales': 'scale constants (JSON)',
    'flow': 'perturbative coupling flow',
    'rg-exact': 'exact RG two-point function',
    'mcmc': 'Metropolis two-point function',
    'plateau': 'measurements joined with predictions',
}


def site_list(value: str) -> List[int]:
    """'1,0,0,0' -> [1, 0, 0, 0]."""
    try:
        return [int(c) for c in value.split(',') if c.strip() != '']
    except ValueError:
        raise argparse.ArgumentTypeError(f"Site coordinates must be comma-separated integers, got '{value}'")


def _common_flags() -> argparse.ArgumentParser:
    """Flags shared by every command; None means 'not given'."""
    common = argparse.ArgumentParser(add_help=False)

    model = common.add_argument_group('lattice and model')
    model.add_argument('--d', type=int, help='spatial dimension')
    model.add_argument('--L', type=int, help='block side')
    model.add_argument('--N', type=int, help='number of scales')
    model.add_argument('--n', type=int, help='number of field components')
    model.add_argument('--g', type=float, help='quartic coupling')
    model.add_argument('--nu', type=float, help='quadratic coupling (tuned when omitted)')
    model.add_argument('--bc', choices=['free', 'periodic'], help='boundary condition')
    model.add_argument('--mass', type=float, help='covariance mass a')

    scan = common.add_argument_group('scan')
    scan.add_argument('--s', type=float, nargs='+', help='window coordinates (profile: s grid)')
    scan.add_argument('--x', type=site_list, nargs='*',
                      help='sites as comma-separated coordinates; give the flag alone for none')
    scan.add_argument('--n-values', dest='n_values', type=int, nargs='+', help='component counts for profile')
    scan.add_argument('--regime', choices=['nongaussian', 'gaussian'])
    scan.add_argument('--tune-mode', dest='tune_mode', choices=['chi', 'mass'])
    scan.add_argument('--nu-bracket', dest='nu_bracket', type=float, nargs=2, metavar=('LOW', 'HIGH'))
    scan.add_argument('--include-mcmc', dest='include_mcmc', action='store_true', default=None)

    theory = common.add_argument_group('scale inputs')
    theory.add_argument('--g-inf', dest='g_inf', type=float)
    theory.add_argument('--A-d', dest='A_d', type=float)
    theory.add_argument('--c-F', dest='c_F', type=float)
    theory.add_argument('--nu-c', dest='nu_c', type=float)
    theory.add_argument('--a-tilde', dest='a_tilde', type=float, help='flow mass ã')
    theory.add_argument('--j-max', dest='j_max', type=int, help='flow length')
    theory.add_argument('--tol', type=float, help='quadrature / truncation tolerance')
    theory.add_argument('--quad-scheme', dest='quad_scheme', choices=['adaptive', 'fixed-gauss'])

    numerics = common.add_argument_group('sampling')
    numerics.add_argument('--grid-points', dest='grid_points', type=int)
    numerics.add_argument('--samples', type=int)
    numerics.add_argument('--replicas', type=int)
    numerics.add_argument('--sampler', choices=['montecarlo', 'tensorquad'])
    numerics.add_argument('--renorm-policy', dest='renorm_policy', choices=['origin', 'max'])
    numerics.add_argument('--sweeps', type=int)
    numerics.add_argument('--burn-in', dest='burn_in', type=int)
    numerics.add_argument('--chains', type=int)
    numerics.add_argument('--proposal-width', dest='proposal_width', type=float)

    run = common.add_argument_group('run')
    run.add_argument('--seed', type=int)
    run.add_argument('--threads', type=int, help='worker threads (default: $HRG_THREADS or 1)')
    run.add_argument('--out', help='output file (default: stdout)')
    run.add_argument('--format', choices=['csv', 'json', 'xlsx'])
    run.add_argument('--config', help='JSON or YAML run configuration; flags override it')
    run.add_argument('--sidecar', action='store_true', default=None, help='also write <out>.meta.json')
    run.add_argument('--dump-effective', dest='dump_effective', metavar='DIR',
                     help='rg-exact: write Z_∅, Z_o, Z_x, Z_ox per scale')
    run.add_argument('--log-file', dest='log_file')
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true')
    verbosity.add_argument('-q', '--quiet', action='store_true')
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='hplab',
        description='Hierarchical |φ|⁴ plateau laboratory',
    )
    commands = parser.add_subparsers(dest='command', required=True, metavar='command')
    common = _common_flags()
    for name, short in SHORT_HELP.items():
        sub = commands.add_parser(name, parents=[common], help=short, description=COMMAND_INFO[name],
                                  formatter_class=argparse.RawDescriptionHelpFormatter)
        if name == 'verify':
            sub.add_argument('--inject-q', dest='inject_q', type=float,
                             help='replace q in the resolvent check (makes it fail)')
    return parser


def resolve_config(args: argparse.Namespace) -> ConfigManager:
    manager = ConfigManager(args.config)
    overrides = {
        RENAMED_FLAGS.get(dest, dest): value
        for dest, value in vars(args).items()
        if dest not in CLI_ONLY
    }
    manager.apply_overrides(**overrides)
    return manager


def _emit(manager: ConfigManager, name: str, rows: List[dict], columns: List[str], summary: Optional[Dict] = None):
    cfg = manager.config
    metadata = manager.metadata(name)
    if summary is not None:
        metadata['summary'] = summary
    table = ResultTable.from_rows(name, rows, columns, metadata)
    TableExporter(table).export(cfg.out, cfg.format)
    if cfg.sidecar and cfg.out:
        write_sidecar(cfg.out, metadata)


def cmd_verify(manager: ConfigManager, args: argparse.Namespace) -> int:
    results = run_identity_suite(q_value=getattr(args, 'inject_q', None))
    rows = []
    for result in results:
        row = result.to_dict()
        row['errors'] = '; '.join(row['errors'])
        rows.append(row)
    failed = [r.name for r in results if not r.passed]
    _emit(manager, 'verify', rows, ['check', 'passed', 'cases', 'errors'], {'failed': failed})
    if failed:
        logger.error("Identity suite failed: %s", ', '.join(failed))
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_green(manager: ConfigManager, args: argparse.Namespace) -> int:
    rows, summary = experiments.green_rows(manager.config)
    _emit(manager, 'green', rows, experiments.GREEN_COLUMNS, summary)
    return EXIT_OK


def cmd_profile(manager: ConfigManager, args: argparse.Namespace) -> int:
    rows = experiments.profile_table_rows(manager.config)
    _emit(manager, 'profile', rows, experiments.PROFILE_COLUMNS)
    return EXIT_OK


def cmd_scales(manager: ConfigManager, args: argparse.Namespace) -> int:
    document = manager.metadata('scales')
    document['scales'] = experiments.scales_document(manager.config)
    export_document(document, manager.config.out)
    return EXIT_OK


def cmd_flow(manager: ConfigManager, args: argparse.Namespace) -> int:
    rows, summary = experiments.flow_table_rows(manager.config)
    _emit(manager, 'flow', rows, experiments.FLOW_COLUMNS, summary)
    return EXIT_OK


def cmd_rg_exact(manager: ConfigManager, args: argparse.Namespace) -> int:
    cfg = manager.config
    observer = None
    if cfg.dump_effective:
        observer = lambda scale, zs: write_effective_dump(cfg.dump_effective, scale, zs)
    rows, summary = experiments.rg_exact_rows(cfg, observer)
    _emit(manager, 'rg-exact', rows, experiments.RG_EXACT_COLUMNS, summary)
    return EXIT_OK


def cmd_mcmc(manager: ConfigManager, args: argparse.Namespace) -> int:
    rows, summary = experiments.mcmc_rows(manager.config)
    _emit(manager, 'mcmc', rows, experiments.MCMC_COLUMNS, summary)
    return EXIT_OK


def cmd_plateau(manager: ConfigManager, args: argparse.Namespace) -> int:
    rows, summary = experiments.plateau_rows(manager.config)
    _emit(manager, 'plateau', rows, experiments.PLATEAU_COLUMNS, summary)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[ConfigManager, argparse.Namespace], int]] = {
    'verify': cmd_verify,
    'green': cmd_green,
    'profile': cmd_profile,
    'scales': cmd_scales,
    'flow': cmd_flow,
    'rg-exact': cmd_rg_exact,
    'mcmc': cmd_mcmc,
    'plateau': cmd_plateau,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse, run one command and map errors to exit codes."""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet, args.log_file)
    try:
        manager = resolve_config(args)
        return COMMANDS[args.command](manager, args)
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG
    except InvariantError as e:
        logger.error("Invariant failed: %s", e)
        return EXIT_INVARIANT
    except DomainError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_DOMAIN
