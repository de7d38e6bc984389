import logging
from argparse import Namespace
from pathlib import Path
from typing import Callable, Optional

from fedmesh.core.simulation import (run_centralized_server, run_coordinator, run_in_process, run_local_cluster,
                                     run_site_centralized, run_site_gcml)
from fedmesh.datasets import export_dataset, generate_federation, load_layout
from fedmesh.experiment.dropout_study import dropout_robustness_study
from fedmesh.experiment.plan import ExperimentPlan, run_plan
from fedmesh.experiment.report import summarize_directory
from fedmesh.util.config import ConfigurationError, FederationConfig
from fedmesh.util.config.definitions import Algorithm

launch_signature = Callable[[Namespace], None]


def _load_config(args: Namespace) -> FederationConfig:
    return FederationConfig.from_yaml(args.config)


def _output(args: Namespace, config: FederationConfig, child: Optional[str] = None) -> Path:
    if getattr(args, 'out', None):
        return Path(args.out)
    return config.output_directory() / child if child else config.output_directory()


def launch_server(args: Namespace) -> None:
    """
    Aggregation server launch function.
    @param args: Parsed arguments.
    @type args: Namespace
    @return: None
    @rtype: None
    """
    config = _load_config(args)
    logging.info('Starting as aggregation server')
    run_centralized_server(config, _output(args, config))


def launch_coordinator(args: Namespace) -> None:
    config = _load_config(args)
    logging.info('Starting as coordinator')
    run_coordinator(config, _output(args, config))


def launch_site(args: Namespace) -> None:
    """
    Site launch function. The site id is checked against the configuration before any socket is opened.
    @param args: Parsed arguments.
    @type args: Namespace
    @return: None
    @rtype: None
    """
    config = _load_config(args)
    config.site(args.site_id)
    logging.info(f'Starting site {args.site_id}')
    run_site = run_site_gcml if config.algorithm is Algorithm.gcml else run_site_centralized
    run_site(config, args.site_id, args.server, _output(args, config))
    logging.info(f'Stopping site {args.site_id}')


def launch_simulate(args: Namespace) -> None:
    config = _load_config(args)
    output = _output(args, config)
    if args.socket:
        history = run_local_cluster(config, 'process', output)
    else:
        history = run_in_process(config, output)
    logging.info(f'{config.algorithm.value} finished after {config.rounds} rounds: '
                 f'final test loss {history.final_test_loss:.6f}, metrics in {output}')


def launch_experiment(args: Namespace) -> None:
    plan = ExperimentPlan.from_yaml(args.plan)
    for summary in run_plan(plan):
        logging.info(f'{summary.label}: mean test loss {summary.mean_test_loss:.6f} '
                     f'(std {summary.std_test_loss:.6f}) over {len(summary.seeds)} seeds')


def launch_dropout_study(args: Namespace) -> None:
    if args.reps < 1:
        raise ConfigurationError('--reps must be at least 1', 'reps')
    config = _load_config(args)
    output = _output(args, config, 'dropout_study')
    report = dropout_robustness_study(config, repetitions=args.reps, output=output, workers=args.workers)
    for line in report.render().splitlines():
        logging.info(line)


def launch_gen_data(args: Namespace) -> None:
    layout = load_layout(args.layout)
    manifest = export_dataset(generate_federation(layout), args.out)
    logging.info(f'Wrote {layout.site_count} sites to {manifest.parent}')


def launch_report(args: Namespace) -> None:
    directory = Path(args.input)
    if not directory.is_dir():
        raise ConfigurationError(f'{directory}: no such directory', 'in')
    report = summarize_directory(directory)
    print(report.to_string(index=False))
