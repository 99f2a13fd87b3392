#!/usr/bin/env python3
"""
Signature Execution Pipeline
Estimates expected signatures, solves for the optimal signature trading
speed, backtests it against TWAP and Almgren-Chriss, and reproduces the
reference experiments from data/presets.json.
"""

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

try:
    import numpy as np
    import pandas as pd
except ImportError as e:
    print(f"Missing required package: {e}")
    print("Please install requirements: pip install -r requirements.txt")
    sys.exit(1)

from backtest import BacktestReport, almgren_chriss_trace, run_schedule, run_strategy, twap_strategy
from config import DEFAULT_PRESETS, ExperimentConfig, load_config, preset_config
from errors import ConfigError, InfeasibilityError, SigExecError
from expsig import ExpectedSignature, estimate
from market import PathBatch, load_windows_csv, simulate, split_batch
from optimize import grid_search, select_level, solve
from problem import ProblemSpec, Strategy
from signature import batch_signatures

logger = logging.getLogger('sigexec')

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2

COMMANDS = ('expsig', 'solve', 'backtest', 'reproduce')


def setup_logging(log_dir: str = '.') -> logging.Logger:
    """Set up logging with a detailed file log, console output and an error-only file."""
    Path(log_dir).mkdir(parents=True, exist_ok=True)
    detailed_formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s'
    )
    simple_formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s')

    file_handler = logging.FileHandler(Path(log_dir) / 'sigexec.log')
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(detailed_formatter)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.INFO)
    console_handler.setFormatter(simple_formatter)

    error_handler = logging.FileHandler(Path(log_dir) / 'sigexec_errors.log')
    error_handler.setLevel(logging.ERROR)
    error_handler.setFormatter(detailed_formatter)

    logging.basicConfig(level=logging.DEBUG, handlers=[file_handler, console_handler, error_handler],
                        force=True)
    return logger


class ErrorTracker:
    """Track errors, warnings and run metrics."""

    def __init__(self):
        self.errors = []
        self.warnings = []
        self.metrics = {
            'paths_simulated': 0,
            'windows_loaded': 0,
            'solver_runs': 0,
            'backtests': 0,
        }

    def log_error(self, error_type: str, message: str, context: dict = None):
        self.errors.append({
            'timestamp': datetime.now().isoformat(),
            'type': error_type,
            'message': message,
            'context': context or {},
        })
        logger.error(f"[{error_type}] {message}")

    def log_warning(self, warning_type: str, message: str, context: dict = None):
        self.warnings.append({
            'timestamp': datetime.now().isoformat(),
            'type': warning_type,
            'message': message,
            'context': context or {},
        })
        logger.warning(f"[{warning_type}] {message}")

    def increment_metric(self, metric_name: str, value: int = 1):
        self.metrics[metric_name] = self.metrics.get(metric_name, 0) + value

    def get_summary(self) -> dict:
        return {
            'total_errors': len(self.errors),
            'total_warnings': len(self.warnings),
            'metrics': self.metrics.copy(),
            'error_types': sorted(set(e['type'] for e in self.errors)),
            'warning_types': sorted(set(w['type'] for w in self.warnings)),
        }


def _theta_dispersion(report: BacktestReport) -> float:
    """stdev/mean of θ over time and paths."""
    mean = float(np.mean(report.theta))
    return float(np.std(report.theta) / abs(mean)) if mean != 0 else float('inf')


class SigExecPipeline:
    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.out_dir = Path(config.output_dir)
        self.error_tracker = ErrorTracker()
        self.artifacts: List[Path] = []
        self._batches: Optional[Tuple[PathBatch, PathBatch]] = None
        self._validation: Optional[List[np.ndarray]] = None

    # ---- inputs -------------------------------------------------------

    def _config_echo(self) -> Dict[str, Any]:
        echo = self.config.resolved()
        # where and how fast a run happens does not change its results
        echo.pop('output_dir', None)
        echo.pop('threads', None)
        return echo

    def _load_windows(self) -> Tuple[PathBatch, PathBatch]:
        data = self.config.data
        batch = load_windows_csv(data.windows_csv, data.window_length, normalize=data.normalize,
                                 horizon=data.horizon, steps=data.steps)
        self.error_tracker.increment_metric('windows_loaded', batch.n_paths)
        train, test = split_batch(batch, data.train_fraction)
        logger.info(f"Split {batch.n_paths} windows into {train.n_paths} train / {test.n_paths} test")
        return train, test

    def batches(self) -> Tuple[PathBatch, PathBatch]:
        """Training and test batches; the test batch uses seed + 1 and no antithetic pairs."""
        if self._batches is None:
            if self.config.data is not None:
                self._batches = self._load_windows()
            else:
                cfg = self.config
                train = simulate(cfg.model_params(), cfg.paths.n_train, cfg.seed, cfg.threads)
                test = simulate(cfg.model_params(antithetic=False), cfg.paths.n_test, cfg.seed + 1, cfg.threads)
                self.error_tracker.increment_metric('paths_simulated', train.n_paths + test.n_paths)
                self._batches = (train, test)
        return self._batches

    def validation_signatures(self) -> List[np.ndarray]:
        """Whole-path signatures of a held-out batch (seed + 2) used to pick the control degree."""
        if self._validation is None:
            cfg = self.config
            _, N = cfg.resolved_levels()
            batch = simulate(cfg.model_params(antithetic=False), cfg.paths.n_validation, cfg.seed + 2, cfg.threads)
            self.error_tracker.increment_metric('paths_simulated', batch.n_paths)
            self._validation = batch_signatures(batch.increments(), N)
        return self._validation

    def expected_signature(self, es_file: Optional[str] = None) -> ExpectedSignature:
        _, N = self.config.resolved_levels()
        if es_file:
            try:
                with open(es_file, 'r', encoding='utf-8') as f:
                    es = ExpectedSignature.from_json(json.load(f))
            except json.JSONDecodeError as e:
                raise ConfigError(f"invalid JSON in expected-signature file {es_file}: {e}") from e
            if es.level < N:
                raise ConfigError(f"expected signature in {es_file} has level {es.level}, run needs {N}",
                                  ['levels.N'])
            return es.truncate(N)
        train, _ = self.batches()
        return estimate(train, N, threads=self.config.threads)

    # ---- outputs ------------------------------------------------------

    def _write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        document = dict(payload)
        document['config'] = self._config_echo()
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(document, f, indent=2)
            f.write('\n')
        self.artifacts.append(path)
        logger.debug(f"Wrote {path}")
        return path

    def _write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        frame.to_csv(path, index=False, float_format='%.12g')
        self.artifacts.append(path)
        return path

    def _write_expected_signature(self, es: ExpectedSignature):
        self._write_json('expected_signature.json', es.to_json())
        self._write_frame('level_norms.csv', pd.DataFrame({
            'level': np.arange(es.level + 1),
            'norm': es.level_norms(),
            'max_standard_error': es.level_standard_errors(),
        }))

    # ---- commands -----------------------------------------------------

    def cmd_expsig(self) -> ExpectedSignature:
        es = self.expected_signature()
        self._write_expected_signature(es)
        return es

    def _solve(self, es: ExpectedSignature, spec: ProblemSpec, suffix: str = '') -> Strategy:
        if self.config.levels.select:
            strategy, report, _ = select_level(spec, es, self.validation_signatures(),
                                               z=self.config.levels.selection_z)
            self.error_tracker.increment_metric('solver_runs', spec.level_l + 1)
        else:
            strategy, report = solve(spec, es)
            self.error_tracker.increment_metric('solver_runs')
        if not report.converged:
            self.error_tracker.log_warning('SOLVER_ERROR', f"solver stopped before convergence{suffix}")
        logger.debug(f"Solver wall time {report.wall_time:.3f}s")
        return strategy

    def cmd_solve(self, es_file: Optional[str] = None) -> Strategy:
        es = self.expected_signature(es_file)
        spec = self.config.problem_spec()
        strategy = self._solve(es, spec)
        _, test = self.batches()
        validation = run_strategy(strategy, test, spec, threads=self.config.threads, label='validation')
        self._write_json('strategy.json', strategy.to_json())
        self._write_json('solver_report.json', {
            'solver': strategy.metadata['solver'],
            'validation': {
                'n_paths': validation.n_paths,
                'mean_cost': validation.mean_cost,
                'theta_std_over_mean': _theta_dispersion(validation),
            },
        })
        return strategy

    def _benchmarks(self, report: BacktestReport, test: PathBatch, spec: ProblemSpec,
                    es: Optional[ExpectedSignature] = None):
        bench = self.config.benchmark
        if bench.constant_speed:
            constant, _ = solve(replace(spec, level_l=0), es if es is not None else self.expected_signature())
            self.error_tracker.increment_metric('solver_runs')
            best = run_strategy(constant, test, spec, threads=self.config.threads, label='constant_speed')
            report.attach_benchmark('constant_speed', best)
            self.error_tracker.increment_metric('backtests')
        if bench.twap:
            twap = run_strategy(twap_strategy(spec), test, spec, threads=self.config.threads, label='twap')
            report.attach_benchmark('twap', twap)
            self.error_tracker.increment_metric('backtests')
        if bench.almgren_chriss:
            trace = almgren_chriss_trace(spec, test.times)
            ac = run_schedule(trace.theta, test, spec, label='almgren_chriss')
            report.attach_benchmark('almgren_chriss', ac)
            self.error_tracker.increment_metric('backtests')

    def _backtest(self, strategy: Strategy, spec: ProblemSpec, prefix: str = '',
                  es: Optional[ExpectedSignature] = None) -> BacktestReport:
        _, test = self.batches()
        report = run_strategy(strategy, test, spec, threads=self.config.threads, label='signature')
        self.error_tracker.increment_metric('backtests')
        self._benchmarks(report, test, spec, es)
        self._write_json(f'{prefix}backtest_report.json', report.summary())
        for name, frame in (('traces', report.traces_frame(self.config.max_trace_paths)),
                            ('costs', report.costs_frame()),
                            ('inventory', report.inventory_curve())):
            self._write_frame(f'{prefix}{name}.csv', frame)
        if report.savings:
            self._write_frame(f'{prefix}savings_per_share.csv', pd.DataFrame(
                {'path_id': report.costs_frame()['path_id'],
                 **{f'{name}_bps': values for name, values in report.savings.items()}}))
        return report

    def cmd_backtest(self, strategy_file: Optional[str] = None) -> BacktestReport:
        spec = self.config.problem_spec()
        if strategy_file:
            try:
                with open(strategy_file, 'r', encoding='utf-8') as f:
                    strategy = Strategy.from_json(json.load(f))
            except json.JSONDecodeError as e:
                raise ConfigError(f"invalid JSON in strategy file {strategy_file}: {e}") from e
        else:
            strategy = self._solve(self.expected_signature(), spec)
            self._write_json('strategy.json', strategy.to_json())
        return self._backtest(strategy, spec)

    def cmd_reproduce(self) -> Dict[str, Any]:
        cfg = self.config
        es = self.cmd_expsig()
        base_spec = cfg.problem_spec()

        runs = []
        curves = {}
        for phi in (cfg.phi_sweep or [cfg.problem.phi]):
            spec = cfg.problem_spec(phi=phi)
            prefix = f'phi_{phi:g}_' if cfg.phi_sweep else ''
            strategy = self._solve(es, spec, suffix=f' (phi={phi:g})')
            self._write_json(f'{prefix}strategy.json', strategy.to_json())
            report = self._backtest(strategy, spec, prefix, es)
            half = int(np.argmin(np.abs(report.times - (report.times[0] + 0.5 * spec.T))))
            curves[f'Q_phi_{phi:g}'] = report.inventory.mean(axis=0)
            runs.append({
                'phi': phi,
                'selected_M': strategy.level_l,
                'objective': strategy.metadata['solver']['objective'],
                'mean_cost': report.mean_cost,
                'cost_standard_error': report.cost_standard_error,
                'theta_std_over_mean': _theta_dispersion(report),
                'mean_inventory_at_half': float(np.mean(report.inventory[:, half])),
                'benchmarks': report.benchmarks,
                'savings_per_share': report.summary().get('savings_per_share', {}),
            })
        _, test = self.batches()
        self._write_frame('inventory_curves.csv', pd.DataFrame({'t': test.times, **curves}))

        objective_by_m = []
        for m in range(base_spec.level_l + 1):
            _, report_m = solve(replace(base_spec, level_l=m), es)
            objective_by_m.append({'M': m, 'objective': report_m.objective})

        summary = {
            'preset': cfg.name,
            'description': cfg.description,
            'reference': cfg.reference,
            'assumed': {name: _lookup(cfg, name) for name in cfg.assumed},
            'levels': {'M': base_spec.level_l, 'N': base_spec.level_es, 'select': cfg.levels.select},
            'runs': runs,
            'objective_by_M': objective_by_m,
            'reference_check': self._reference_check(runs[0], objective_by_m, es),
        }
        self._write_json('summary.json', summary)
        return summary

    def _reference_check(self, run: Dict[str, Any], objective_by_m: List[Dict[str, Any]],
                         es: ExpectedSignature) -> Dict[str, Any]:
        """
        Compare backtested costs with the preset's reference values. A miss
        falls back to checking the solver against a brute-force grid search
        over degree <= 1 functionals plus a non-decreasing objective in M.
        """
        cfg = self.config
        tolerance = cfg.reference_tolerance
        measured = {'signature_expected_cost': run['mean_cost']}
        constant = run['benchmarks'].get('constant_speed')
        if constant is not None:
            measured['constant_speed_expected_cost'] = constant['mean_cost']

        targets = {}
        for name, value in cfg.reference.items():
            if name not in measured:
                logger.info(f"Reference {name}: {value} (echoed, not measured by this run)")
                continue
            difference = measured[name] - value
            targets[name] = {'reference': value, 'measured': measured[name], 'difference': difference,
                             'within_band': abs(difference) <= tolerance}
            logger.info(f"Reference {name}: {value} | this run: {measured[name]:.7f} ({difference:+.2e})")
        check: Dict[str, Any] = {
            'tolerance': tolerance,
            'targets': targets,
            'within_band': all(target['within_band'] for target in targets.values()),
        }
        if constant is not None:
            paired = constant['paired']
            se = paired['standard_error']
            check['separation_standard_errors'] = paired['mean_difference'] / se if se > 0 else float('inf')

        if not check['within_band']:
            missed = sorted(name for name, target in targets.items() if not target['within_band'])
            self.error_tracker.log_warning('REFERENCE_MISS', f"outside ±{tolerance:g} of the reference: {missed}")
            check['fallback'] = self._fallback_check(cfg.problem_spec(phi=run['phi']), es, objective_by_m, tolerance)
        check['passed'] = check['within_band'] or check['fallback']['passed']
        return check

    def _fallback_check(self, spec: ProblemSpec, es: ExpectedSignature,
                        objective_by_m: List[Dict[str, Any]], tolerance: float) -> Dict[str, Any]:
        _, grid_objective, grid = grid_search(spec, es)
        _, report = solve(replace(spec, level_l=1), es)
        difference = report.objective - grid_objective
        values = [entry['objective'] for entry in objective_by_m]
        monotone = all(b >= a - 1e-10 * max(1.0, abs(a)) for a, b in zip(values, values[1:]))
        result = {
            'grid_search': grid,
            'solved_degree_one_objective': report.objective,
            'difference': difference,
            'within_tolerance': abs(difference) <= tolerance,
            'monotone_in_M': monotone,
        }
        result['passed'] = result['within_tolerance'] and monotone
        logger.info(f"Fallback check: solver {report.objective:.8f} vs grid {grid_objective:.8f}, "
                    f"monotone in M: {monotone} -> {'passed' if result['passed'] else 'FAILED'}")
        return result

    # ---- driver -------------------------------------------------------

    def run(self, command: str, **kwargs) -> int:
        """Run one command; returns the process exit code."""
        logger.info(f"Starting sigexec {command} ('{self.config.name}', seed={self.config.seed})")
        start_time = time.time()
        status = EXIT_OK
        try:
            getattr(self, f'cmd_{command}')(**kwargs)
        except InfeasibilityError as e:
            self.error_tracker.log_error(e.error_type, str(e), {'command': command})
            status = EXIT_INFEASIBLE
        except SigExecError as e:
            self.error_tracker.log_error(e.error_type, str(e), {'command': command})
            status = EXIT_ERROR
        except OSError as e:
            self.error_tracker.log_error('IO_ERROR', str(e), {'command': command})
            status = EXIT_ERROR
        except Exception as e:
            self.error_tracker.log_error('PIPELINE_CRITICAL_ERROR', f"{command} failed with critical error: {e}",
                                         {'command': command, 'error': repr(e)})
            logger.debug("Traceback of the critical error", exc_info=True)
            status = EXIT_ERROR
        self._log_run_summary(command, time.time() - start_time, status)
        return status

    def _log_run_summary(self, command: str, runtime: float, status: int):
        summary = self.error_tracker.get_summary()
        logger.info("=" * 60)
        logger.info("SIGEXEC RUN SUMMARY")
        logger.info("=" * 60)
        logger.info(f"Command: {command}")
        logger.info(f"Runtime: {runtime:.1f} seconds")
        logger.info(f"Artifacts written: {len(self.artifacts)}")
        for path in self.artifacts:
            logger.info(f"  {path}")
        for name, value in summary['metrics'].items():
            logger.info(f"{name}: {value}")
        logger.info(f"Total errors: {summary['total_errors']}")
        logger.info(f"Total warnings: {summary['total_warnings']}")
        if summary['error_types']:
            logger.info(f"Error types: {', '.join(summary['error_types'])}")
        if summary['warning_types']:
            logger.info(f"Warning types: {', '.join(summary['warning_types'])}")
        if status == EXIT_OK:
            logger.info("STATUS: SUCCESS" + (" WITH WARNINGS" if summary['total_warnings'] else ""))
        elif status == EXIT_INFEASIBLE:
            logger.info("STATUS: FAILED - problem is mathematically infeasible")
        else:
            logger.info("STATUS: FAILED")
        logger.info("=" * 60)


def _lookup(config: ExperimentConfig, dotted: str) -> Any:
    value: Any = config
    for part in dotted.split('.'):
        value = getattr(value, part)
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON run configuration')
    common.add_argument('--seed', type=int, help='master seed (overrides config)')
    common.add_argument('--out', help='output directory (overrides config)')
    common.add_argument('--threads', type=int, help='worker threads (results do not depend on it)')
    common.add_argument('--normalize', action=argparse.BooleanOptionalAction, default=None,
                        help='divide each data window by its first price (default on)')

    parser = argparse.ArgumentParser(prog='sigexec', description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('expsig', parents=[common], help='estimate the expected signature')
    solve_parser = sub.add_parser('solve', parents=[common], help='solve for the optimal strategy')
    solve_parser.add_argument('--expsig', dest='es_file', help='expected-signature JSON from a previous run')
    backtest_parser = sub.add_parser('backtest', parents=[common], help='backtest a strategy')
    backtest_parser.add_argument('--strategy', dest='strategy_file', help='strategy JSON from a previous run')
    reproduce_parser = sub.add_parser('reproduce', parents=[common], help='run a preset end to end')
    reproduce_parser.add_argument('preset', help='preset name from data/presets.json')
    reproduce_parser.add_argument('--presets', default=str(DEFAULT_PRESETS), help='presets file')
    return parser


def _overrides(args: argparse.Namespace, has_data: bool) -> Dict[str, Any]:
    overrides = {'seed': args.seed, 'output_dir': args.out, 'threads': args.threads}
    if has_data:
        overrides['data.normalize'] = args.normalize
    return overrides


def _ensure_window_data(config: ExperimentConfig):
    """Generate the synthetic window CSV a preset points at when it is missing."""
    from create_window_data import generate_windows
    path = Path(config.data.windows_csv)
    if path.exists():
        return
    n_windows = config.paths.n_train + config.paths.n_test
    logger.info(f"Generating {n_windows} synthetic windows into {path}")
    generate_windows(config.model_params(antithetic=False), n_windows, config.seed, path,
                     window_length=config.data.window_length)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == 'reproduce':
            raw_preset = preset_config(args.preset, path=args.presets)
            config = preset_config(args.preset, _overrides(args, raw_preset.data is not None), path=args.presets)
        else:
            if not args.config:
                raise ConfigError(f"{args.command} needs --config", ['config'])
            raw = load_config(args.config)
            config = load_config(args.config, _overrides(args, raw.data is not None))
    except ConfigError as e:
        logging.basicConfig(level=logging.INFO, force=True)
        logger.error(f"[{e.error_type}] {e}")
        return EXIT_ERROR

    setup_logging(config.output_dir)
    if args.command == 'reproduce' and config.data is not None:
        try:
            _ensure_window_data(config)
        except (SigExecError, OSError) as e:
            logger.error(f"[DATA_ERROR] {e}")
            return EXIT_ERROR

    kwargs = {}
    if args.command == 'solve':
        kwargs['es_file'] = args.es_file
    elif args.command == 'backtest':
        kwargs['strategy_file'] = args.strategy_file
    return SigExecPipeline(config).run(args.command, **kwargs)


if __name__ == "__main__":
    sys.exit(main())
