import os
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import fire

from dotenv import load_dotenv
load_dotenv(dotenv_path='./dkf.env')  # DKF_LOG_LEVEL / DKF_OUTPUT_DIR before the project imports read them.

from core.config import default_output_dir, parse_config, resolve_scenario
from core.constants import ALGORITHMS
from core.errors import DkfError, NumericalError, ScenarioParseError, ScenarioValidationError, SimulationError
from core.files import build_output_bundle, write_bundle
from core.log import LOG, configure_logging
from estimation.confilter import StackedForm, build_stacked_system, spectrum_check
from estimation.graph import filter_step_bound, max_step_size
from stats.summarize_runs import summarize_runs
from systems.harness import run_scenario

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2


def _algorithm_list(algorithms: Union[None, str, Sequence[str]]) -> Optional[List[str]]:
    """Fire hands over "ckf,a0" as a tuple and "a1" as a string."""
    if algorithms is None:
        return None
    items = algorithms.split(",") if isinstance(algorithms, str) else list(algorithms)
    names = [str(item).strip().lower() for item in items if str(item).strip()]
    unknown = [name for name in names if name not in ALGORITHMS]
    if unknown:
        raise ScenarioValidationError(f"unknown algorithms {unknown}, expected a subset of {list(ALGORITHMS)}",
                                      field="algorithms")
    return names


def _seed_list(seeds: Union[int, str, Sequence[int]]) -> List[int]:
    if isinstance(seeds, int):
        return list(range(seeds))
    if isinstance(seeds, str):
        return [int(s) for s in seeds.split(",") if s.strip()]
    return [int(s) for s in seeds]


class DkfCLI:
    """
    Distributed Kalman filtering with minimum-time consensus: run scenarios, sweep seeds, inspect spectra.
    """

    def __init__(self, log_level: Optional[str] = None) -> None:
        """
        Constructs a new CLI instance and does initial setup before the subcommand is executed by Fire.

        :param log_level: The log level to use throughout the program, DKF_LOG_LEVEL or WARNING by default.
        """
        super().__init__()
        DkfCLI.__log_level = (log_level or os.getenv("DKF_LOG_LEVEL", "WARNING")).strip().upper()

        configure_logging(DkfCLI.__log_level)

    def run(self, scenario: str, algorithms=None, seed: Optional[int] = None, steps: Optional[int] = None,
            out: Optional[str] = None, sigma_threshold: Optional[float] = None, rho: Optional[float] = None,
            format: str = "csv") -> str:
        """
        Runs one scenario and writes its output bundle.
        Usage: python main.py run --scenario scenario_paper_sec4 --algorithms ckf,a0,a1 --seed 7

        :param scenario: Path to a scenario file or the name of a bundled scenario.
        :param algorithms: Comma separated subset of ckf,a0,a1,a2.
        :param seed: Run seed of the noise streams.
        :param steps: Number of simulation steps.
        :param out: Output directory, <DKF_OUTPUT_DIR>/<scenario>/seed_<seed> by default.
        :param sigma_threshold: Relative rank threshold of the minimum-time detectors.
        :param rho: Fixed acceptance threshold of the robust detectors.
        :param format: csv or json for the trace tables.
        :return: The output directory.
        """
        if format not in ("csv", "json"):
            raise ScenarioValidationError(f"unknown format '{format}', expected csv or json", field="format")
        overrides = {"algorithms": _algorithm_list(algorithms), "run_seed": seed, "steps": steps,
                     "sigma_threshold": sigma_threshold, "rho": rho}
        cfg = parse_config(scenario, overrides)
        out_dir = out or os.path.join(default_output_dir(), cfg.name, f"seed_{cfg.run_seed}")

        result = run_scenario(cfg)
        bundle = build_output_bundle(cfg, result)
        write_bundle(bundle, out_dir, format)

        timing = bundle.summary.timing
        for algorithm, stats in timing.items():
            LOG.info(f"{algorithm}: shortest={stats.shortest} longest={stats.longest} average={stats.average} s")
        if bundle.summary.timing_ratio_a1_a0 is not None:
            LOG.info(f"A1/A0 average time ratio {bundle.summary.timing_ratio_a1_a0:.4f}")
        return str(out_dir)

    def sweep(self, scenario: str, seeds="0,1,2,3,4", algorithms=None, steps: Optional[int] = None,
              out: Optional[str] = None, parallel: bool = False, workers: int = 4, format: str = "csv") -> str:
        """
        Runs a scenario for several seeds, each into <out>/seed_<seed>, and prints the aggregated timing table.
        Usage: python main.py sweep --scenario scenario_paper_sec4 --seeds 0,1,2 --parallel

        :param seeds: Comma separated seeds, or a count meaning 0..count-1.
        :param parallel: Whether to run the seeds in a thread pool.
        :param workers: Number of worker threads in parallel mode.
        """
        seed_list = _seed_list(seeds)
        base_cfg = parse_config(scenario, {"algorithms": _algorithm_list(algorithms), "steps": steps})
        out_root = Path(out or os.path.join(default_output_dir(), base_cfg.name))
        resolved = resolve_scenario(base_cfg)

        def __run_seed(seed: int) -> Path:
            cfg = base_cfg.model_copy(update={"run_seed": seed})
            result = run_scenario(cfg, resolved)
            return write_bundle(build_output_bundle(cfg, result), out_root / f"seed_{seed}", format)

        run_dirs: Dict[int, Path] = {}
        failures: Dict[int, DkfError] = {}
        if parallel:
            with ThreadPoolExecutor(thread_name_prefix="SeedRun", max_workers=workers) as executor:
                future_to_seed = {executor.submit(__run_seed, seed): seed for seed in seed_list}
                for future in as_completed(future_to_seed):
                    seed = future_to_seed[future]
                    try:
                        run_dirs[seed] = future.result()
                        LOG.debug(f"Seed {seed} completed.")
                    except DkfError as exc:
                        failures[seed] = exc
                        LOG.error(f"Seed {seed} generated an exception: {exc.message}")
        else:
            for ind, seed in enumerate(seed_list):
                LOG.info(f"Running seed number {ind + 1} of {len(seed_list)}")
                try:
                    run_dirs[seed] = __run_seed(seed)
                except DkfError as exc:
                    failures[seed] = exc
                    LOG.error(f"Seed {seed} generated an exception: {exc.message}")

        if failures and not run_dirs:
            raise next(iter(failures.values()))
        table = summarize_runs([run_dirs[seed] for seed in sorted(run_dirs)])
        table.to_csv(out_root / "timing_table.csv", float_format="%.17g", lineterminator="\n")
        return table.to_string()

    def spectrum(self, scenario: str, node: int = 0, step_size: Optional[float] = None) -> str:
        """
        Eigenvalue report of the stacked consensus system for each of its three forms.
        Usage: python main.py spectrum --scenario scenario_small_n5

        :param node: Output node of the stacked system.
        :param step_size: Step size to analyse, the scenario's by default.
        """
        cfg = parse_config(scenario)
        graph = resolve_scenario(cfg).graph
        eps = step_size if step_size is not None else cfg.step_size
        lines = [f"scenario={cfg.name} n={graph.n} eps={eps}"]
        if graph.edges:
            lines.append(f"max_step_size={max_step_size(graph):.12g} filter_step_bound={filter_step_bound(graph):.12g}")
        for form in StackedForm:
            report = spectrum_check(build_stacked_system(graph, eps, node, form))
            lines.append(f"{form.value:>10}: unit_eigs={report.unit_eigs} stable={report.stable} "
                         f"spectral_radius={report.spectral_radius:.12g} "
                         f"max_inner_modulus={report.max_inner_modulus:.12g}")
        return "\n".join(lines)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Runs the CLI and maps failures to exit codes: 0 success, 1 invalid scenario or flags, 2 numerical failure.
    Messages go to standard error.
    """
    try:
        fire.Fire(DkfCLI, command=list(argv) if argv is not None else None)
    except (ScenarioParseError, ScenarioValidationError) as e:
        print(f"error: {e.message}", file=sys.stderr)
        return EXIT_INVALID
    except SimulationError as e:
        print(f"error: {e.message}", file=sys.stderr)
        return EXIT_NUMERICAL if e.is_numerical else EXIT_INVALID
    except NumericalError as e:
        print(f"error: {e.message}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DkfError as e:
        print(f"error: {e.message}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as e:
        # fire exits with 2 on usage errors and 0 after --help
        return EXIT_OK if e.code in (0, None) else EXIT_INVALID
    except KeyboardInterrupt:
        LOG.info("Received KeyboardInterrupt.")
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
