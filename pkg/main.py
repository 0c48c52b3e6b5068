"""
gwgames - Games on Galton-Watson Trees - Command Line Entry Point
Dispatches analytic, scanning, simulation, length and audit runs and emits JSON/CSV reports
"""

import argparse
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.analytic import FixedPointAnalyzer, GameId, MapId
from src.audit import InequalityAuditor
from src.config import Config
from src.exceptions import DistributionError, GWGamesError, MonotonicityError, UsageError
from src.lengths import LengthAnalyzer
from src.offspring import Family, OffspringDistribution, parse_distribution, parse_family
from src.output_handler import OutputHandler
from src.scan import TransitionScanner
from src.simulate import MonteCarloSimulator
from src.utils.logger import GamesLogger

EXIT_OK = 0
EXIT_COMPUTATION = 1
EXIT_USAGE = 2

SUBCOMMANDS = ('outcomes', 'roots', 'scan', 'classify', 'simulate', 'lengths', 'audit', 'curve')
# Number of trailing partial sums echoed in length reports
PARTIAL_SUMS_SHOWN = 20


@dataclass
class RunConfig:
    """Fully resolved settings of one CLI run, echoed into every report"""

    subcommand: str
    distribution: Optional[str] = None
    family: Optional[str] = None
    game: Optional[str] = None
    map_id: Optional[str] = None
    t_range: Optional[List[float]] = None
    grid: Optional[List[float]] = None
    tol: Optional[float] = None
    tol_t: Optional[float] = None
    seed: int = 0
    samples: Optional[int] = None
    depth: Optional[int] = None
    n_max: Optional[int] = None
    resolution: Optional[int] = None
    threads: int = 1
    output_format: str = 'json'
    output: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict)
    numerics: Dict[str, Any] = field(default_factory=dict)


def _parse_range(text: str) -> Tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(':'))
    except ValueError:
        raise UsageError(f"malformed range {text!r}; expected a:b") from None
    if not lo < hi:
        raise UsageError(f"range {text!r} must be increasing")
    return lo, hi


def _parse_grid(text: str) -> np.ndarray:
    parts = text.split(':')
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except (ValueError, IndexError):
        raise UsageError(f"malformed grid {text!r}; expected a:b:n") from None
    if len(parts) != 3 or n < 1 or hi < lo:
        raise UsageError(f"malformed grid {text!r}; expected a:b:n with a <= b and n >= 1")
    return np.linspace(lo, hi, n)


class GamesAnalysisRunner:
    """Runs one CLI subcommand and assembles its report"""

    def __init__(self, run_config: RunConfig):
        self.logger = GamesLogger.get_logger('cli')
        self.config = run_config
        tol = run_config.tol
        self.analyzer = FixedPointAnalyzer(tol=tol, grid_resolution=run_config.extra.get('grid_resolution'))
        self.simulator = MonteCarloSimulator(threads=run_config.threads)
        self.scanner = TransitionScanner(self.analyzer, threads=run_config.threads)
        self.lengths = LengthAnalyzer(self.analyzer, self.simulator)
        self.auditor = InequalityAuditor(self.analyzer)
        self.output_handler = OutputHandler()
        self.logger.info(f"GamesAnalysisRunner initialized for '{run_config.subcommand}'")
        self.logger.debug(f"Configuration: {Config.get_config_dict()}")

    # ------------------------------------------------------------------ inputs

    def _distribution(self) -> OffspringDistribution:
        if not self.config.distribution:
            raise UsageError(f"'{self.config.subcommand}' needs a distribution literal")
        try:
            return parse_distribution(self.config.distribution)
        except DistributionError as e:
            raise UsageError(str(e)) from e

    def _family(self) -> Family:
        if not self.config.family:
            raise UsageError(f"'{self.config.subcommand}' needs --family")
        try:
            return parse_family(self.config.family)
        except DistributionError as e:
            raise UsageError(str(e)) from e

    def _game(self) -> GameId:
        return GameId.parse(self.config.game or 'normal')

    def _range(self, family: Family) -> Tuple[float, float]:
        if self.config.t_range:
            return self.config.t_range[0], self.config.t_range[1]
        return family.parameter_range

    def _report(self, **body: Any) -> Dict[str, Any]:
        report: Dict[str, Any] = {'command': self.config.subcommand}
        report.update(body)
        report['config'] = asdict(self.config)
        return report

    # ------------------------------------------------------------------ subcommands

    def run_outcomes(self):
        dist = self._distribution()
        outcomes = self.analyzer.outcomes(dist)
        if self.config.output_format == 'csv':
            return pd.DataFrame([{'distribution': dist.literal(), **outcomes.summary()}])
        return self._report(
            distribution=dist.literal(),
            outcomes=outcomes.summary(),
            raw=outcomes.values(),
            diagnostics=outcomes.diagnostics,
        )

    def run_roots(self):
        dist = self._distribution()
        map_id = MapId(self.config.map_id or 'F2')
        fps = self.analyzer.isolate_fixed_points(dist, map_id)
        if self.config.output_format == 'csv':
            return pd.DataFrame({'x': list(fps.all_fps)})
        return self._report(
            distribution=dist.literal(),
            fixed_points=fps.as_dict(),
            pairing_defect=self.analyzer.pairing_defect(dist, fps)
            if map_id in (MapId.F2, MapId.H2) else None,
        )

    def run_scan(self):
        family = self._family()
        if self.config.grid is not None:
            table = self.scanner.scan_curve(family, self.config.grid)
            if self.config.output_format == 'csv':
                return table
            return self._report(family=family.describe(), curve=table,
                                errors=table.attrs.get('errors', []))
        game = self._game()
        t_lo, t_hi = self._range(family)
        lo, hi = self.scanner.critical_bracket(family, game, t_lo, t_hi, self.config.tol_t)
        return self._report(
            family=family.describe(),
            game=game,
            t_critical=0.5 * (lo + hi),
            bracket=[lo, hi],
            bracket_width=hi - lo,
        )

    def run_classify(self):
        family = self._family()
        game = self._game()
        method = self.config.extra.get('method', 'threshold')
        at = self.config.extra.get('at')
        if at is not None:
            report = self.scanner.classify_transition(family, game, float(at))
        else:
            t_lo, t_hi = self._range(family)
            if method == 'jump':
                report = self.scanner.locate_jump(family, game, t_lo, t_hi, self.config.tol_t)
            else:
                report = self.scanner.scan_transition(family, game, t_lo, t_hi, self.config.tol_t)
        return self._report(transition=report)

    def run_simulate(self):
        dist = self._distribution()
        game = self._game()
        depth = 30 if self.config.depth is None else self.config.depth
        samples = 10000 if self.config.samples is None else self.config.samples
        estimate = self.simulator.monte_carlo(dist, game, depth, samples, self.config.seed)
        oracle = self.analyzer.truncated_outcomes(dist, depth)
        if game == GameId.NORMAL:
            exact = {'N': oracle.n, 'P': oracle.p, 'D': oracle.d}
        elif game == GameId.MISERE:
            exact = {'Nm': oracle.n_mis, 'Pm': oracle.p_mis, 'Dm': oracle.d_mis}
        else:
            exact = {'S1': oracle.s1, 'S2': oracle.s2, 'E1': oracle.e1, 'E2': oracle.e2}
        z_scores = {
            k: (estimate.estimates[k] - v) / estimate.stderr[k] if estimate.stderr[k] > 0 else 0.0
            for k, v in exact.items()
        }
        return self._report(distribution=dist.literal(), estimate=estimate,
                            truncated_exact=exact, z_scores=z_scores)

    def run_lengths(self):
        dist = self._distribution()
        game = self._game()
        report = self.lengths.length_report(
            dist, game,
            n_max=self.config.n_max,
            depth_cutoff=30 if self.config.depth is None else self.config.depth,
            n_samples=self.config.samples or 0,
            seed=self.config.seed,
        )
        body = asdict(report)
        body['partial_sums'] = report.partial_sums[-PARTIAL_SUMS_SHOWN:]
        body['terms'] = report.terms
        return self._report(distribution=dist.literal(), lengths=body)

    def run_audit(self):
        body: Dict[str, Any] = {}
        if not self.config.extra.get('no_suite'):
            cases = self.auditor.counterexample_suite()
            body['suite'] = cases
            body['refutations'] = self.auditor.refute_non_implied(cases)
            body['coefficients'] = [
                {**asdict(check), 'passed': check.passed}
                for check in self.auditor.coefficient_checks()
            ]
        count = self.config.samples or 0
        if count:
            summary = self.auditor.random_audit(
                count, self.config.seed, self.config.extra.get('max_support', 8)
            )
            body['random'] = summary
        return self._report(**body)

    def run_curve(self):
        map_id = MapId(self.config.map_id or 'F2')
        if self.config.family:
            if self.config.grid is None:
                raise UsageError("curve --family needs --grid a:b:n")
            profile = self.scanner.local_minimum_profile(self._family(), map_id, self.config.grid)
            if self.config.output_format == 'csv':
                return profile.table
            return self._report(profile=profile.table, monotone=profile.monotone)
        dist = self._distribution()
        resolution = 1000 if self.config.resolution is None else self.config.resolution
        table = self.analyzer.curve_samples(dist, map_id, resolution)
        if self.config.output_format == 'json':
            return self._report(distribution=dist.literal(), curve=table)
        return table

    def run(self, timing: bool = False) -> Any:
        """Execute the configured subcommand and emit its report"""
        started = time.perf_counter()
        result = getattr(self, f"run_{self.config.subcommand}")()
        elapsed = time.perf_counter() - started
        if isinstance(result, pd.DataFrame):
            self.output_handler.write_csv(result, self.config.output)
            if timing:
                self.logger.info(f"Elapsed {elapsed:.3f} s")
        else:
            if timing:
                result['timing'] = {'elapsed_seconds': elapsed}
            self.output_handler.write_json(result, self.config.output)
        return result


def build_parser() -> Tuple[argparse.ArgumentParser, Dict[str, argparse.ArgumentParser]]:
    """Argument parser with one subparser per subcommand"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='YAML run file whose keys provide option defaults')
    common.add_argument('--seed', type=int, help='Master seed (default: $GWGAMES_SEED)')
    common.add_argument('--threads', type=int, help='Worker processes (default: $GWGAMES_THREADS)')
    common.add_argument('--format', dest='output_format', choices=['json', 'csv'],
                        help='Report format (default: json, csv for curves)')
    common.add_argument('--output', help='Write the report to this file instead of stdout')
    common.add_argument('--timing', action='store_true', help='Add wall-clock timing')
    common.add_argument('--tol', type=float, help='Fixed-point tolerance')
    common.add_argument('--grid-resolution', type=int, help='Root isolation grid cells')

    parser = argparse.ArgumentParser(
        prog='gwgames',
        description='Normal, misère and escape games on Galton-Watson trees',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  gwgames outcomes finite:0.15,0,0.85
  gwgames roots family:exotic1@0.99 --map F2
  gwgames scan --family binary --game normal --range 0.5:1
  gwgames scan --family poisson --grid 0:5:51 --format csv
  gwgames classify --family binary --game escape
  gwgames simulate poisson:4 --game escape --depth 30 --samples 100000 --threads 8
  gwgames lengths family:binary@0.5 --game normal --depth 40 --samples 10000
  gwgames audit --samples 10000 --seed 7
  gwgames curve --dist family:binary@0.89 --map F2 --res 1000

Distribution literals:
  finite:p0,p1,...   sparse:k=w,...   poisson:lam   geometric:alpha
  binomial:n,p       family:<id>@t    (ids: binary poisson geometric binomial-n
                                       exotic1 exotic2 exotic3 interp(P;Q))
        """
    )
    subparsers = parser.add_subparsers(dest='subcommand', metavar='subcommand')
    sub: Dict[str, argparse.ArgumentParser] = {}

    def add(name: str, help_text: str, dist: bool = False) -> argparse.ArgumentParser:
        p = subparsers.add_parser(name, parents=[common], help=help_text)
        if dist:
            p.add_argument('distribution', nargs='?', help='Distribution literal')
            p.add_argument('--dist', dest='dist_option', help='Distribution literal')
        sub[name] = p
        return p

    add('outcomes', 'Ten outcome probabilities', dist=True)

    p = add('roots', 'Fixed points of a composed map', dist=True)
    p.add_argument('--map', dest='map_id', choices=[m.value for m in MapId], default='F2')

    p = add('scan', 'Critical parameter or outcome curve of a family')
    p.add_argument('--family', required=False)
    p.add_argument('--game', default='normal')
    p.add_argument('--range', dest='t_range', help='Parameter interval a:b')
    p.add_argument('--grid', help='Parameter grid a:b:n; emits the ten-outcome table')
    p.add_argument('--tol-t', type=float, help='Bisection bracket width')

    p = add('classify', 'Locate and classify a phase transition')
    p.add_argument('--family')
    p.add_argument('--game', default='normal')
    p.add_argument('--range', dest='t_range', help='Parameter interval a:b')
    p.add_argument('--tol-t', type=float, help='Bisection bracket width')
    p.add_argument('--at', type=float, help='Classify at this parameter without locating')
    p.add_argument('--method', choices=['threshold', 'jump'], default='threshold',
                   help='threshold: order parameter leaves 0; jump: jump between positive regimes')

    p = add('simulate', 'Monte Carlo estimates from truncated trees', dist=True)
    p.add_argument('--game', default='normal')
    p.add_argument('--depth', type=int)
    p.add_argument('--samples', type=int)

    p = add('lengths', 'Expected game length and reduced-tree diagnostics', dist=True)
    p.add_argument('--game', default='normal')
    p.add_argument('--n-max', type=int)
    p.add_argument('--depth', type=int)
    p.add_argument('--samples', type=int, help='Monte Carlo samples for E[T*] (0 skips)')

    p = add('audit', 'Inequality audit and counterexample suite')
    p.add_argument('--samples', type=int, help='Number of random distributions to audit')
    p.add_argument('--max-support', type=int, default=8)
    p.add_argument('--no-suite', action='store_true', help='Skip the counterexample suite')

    p = add('curve', 'Samples of map(x) - x, or the local-minimum profile of a family', dist=True)
    p.add_argument('--map', dest='map_id', choices=[m.value for m in MapId], default='F2')
    p.add_argument('--res', dest='resolution', type=int)
    p.add_argument('--family')
    p.add_argument('--grid', help='Parameter grid a:b:n for the local-minimum profile')

    return parser, sub


def _apply_run_file(parser: argparse.ArgumentParser, sub: Dict[str, argparse.ArgumentParser],
                    argv: Sequence[str]):
    """Use the keys of a --config YAML file as defaults of the chosen subcommand"""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument('--config')
    pre.add_argument('subcommand', nargs='?')
    known, _ = pre.parse_known_args(argv)
    if not known.config or known.subcommand not in sub:
        return
    try:
        data = Config.load_run_file(known.config)
    except (OSError, ValueError) as e:
        raise UsageError(f"cannot read run file {known.config}: {e}") from e
    subparser = sub[known.subcommand]
    dests = {action.dest for action in subparser._actions}
    aliases = {'format': 'output_format', 'range': 't_range', 'map': 'map_id', 'res': 'resolution',
               'dist': 'dist_option'}
    defaults = {}
    for key, value in data.items():
        dest = aliases.get(key, key)
        if dest not in dests or dest in ('config', 'help'):
            raise UsageError(f"unknown key {key!r} in run file {known.config}")
        defaults[dest] = value
    subparser.set_defaults(**defaults)


def _resolve(args: argparse.Namespace) -> RunConfig:
    fmt = args.output_format or ('csv' if args.subcommand == 'curve' else 'json')
    if args.subcommand == 'scan' and args.output_format is None and getattr(args, 'grid', None):
        fmt = 'csv'
    t_range = getattr(args, 't_range', None)
    grid = getattr(args, 'grid', None)
    distribution = getattr(args, 'dist_option', None) or getattr(args, 'distribution', None)
    extra: Dict[str, Any] = {}
    for key in ('at', 'method', 'max_support', 'no_suite', 'grid_resolution'):
        value = getattr(args, key, None)
        if value is not None and value is not False:
            extra[key] = value
    threads = Config.THREADS if args.threads is None else args.threads
    if threads < 1:
        raise UsageError("--threads must be at least 1")
    return RunConfig(
        subcommand=args.subcommand,
        distribution=distribution,
        family=getattr(args, 'family', None),
        game=GameId.parse(args.game).value if getattr(args, 'game', None) else None,
        map_id=getattr(args, 'map_id', None),
        t_range=list(_parse_range(t_range)) if isinstance(t_range, str) else t_range,
        grid=_parse_grid(grid).tolist() if isinstance(grid, str) else grid,
        tol=args.tol,
        tol_t=getattr(args, 'tol_t', None),
        seed=Config.DEFAULT_SEED if args.seed is None else args.seed,
        samples=getattr(args, 'samples', None),
        depth=getattr(args, 'depth', None),
        n_max=getattr(args, 'n_max', None),
        resolution=getattr(args, 'resolution', None),
        threads=threads,
        output_format=fmt,
        output=args.output,
        extra=extra,
        numerics=Config.get_config_dict(),
    )


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the CLI

    Args:
        argv: Arguments without the program name (defaults to sys.argv[1:])

    Returns:
        Exit status: 0 success, 1 computational error, 2 usage error
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    logger = GamesLogger.get_logger('cli')
    parser, sub = build_parser()
    try:
        _apply_run_file(parser, sub, argv)
        args = parser.parse_args(argv)
        if args.subcommand is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        run_config = _resolve(args)
        GamesAnalysisRunner(run_config).run(timing=args.timing)
        return EXIT_OK
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    except UsageError as e:
        print(f"gwgames: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except MonotonicityError as e:
        print(f"gwgames: {e}", file=sys.stderr)
        GamesLogger.log_error('cli.run', e, {'argv': argv, 'subinterval': e.subinterval})
        return EXIT_COMPUTATION
    except GWGamesError as e:
        print(f"gwgames: computation failed: {e}", file=sys.stderr)
        GamesLogger.log_error('cli.run', e, {'argv': argv})
        return EXIT_COMPUTATION
    finally:
        logger.debug(f"Finished gwgames {' '.join(argv)}")


def main():
    """Main entry point"""
    sys.exit(run())


if __name__ == '__main__':
    main()
