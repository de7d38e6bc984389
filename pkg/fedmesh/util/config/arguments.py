from argparse import ArgumentParser, ArgumentTypeError
from typing import Tuple


def parse_address(value: str) -> Tuple[str, int]:
    """
    Parse a `host:port` argument.
    @param value: Raw argument.
    @type value: str
    @return: Host and port.
    @rtype: Tuple[str, int]
    """
    host, separator, port = value.rpartition(':')
    if not separator or not host or not port.isdigit() or not 0 < int(port) < 2 ** 16:
        raise ArgumentTypeError(f"expected HOST:PORT, got '{value}'")
    return host, int(port)


def add_default_arguments(*parsers):
    """
    Helper function to add default arguments shared between executions.
    @param parsers: Subparser to add arguments to.
    @type parsers: Any
    @return: None
    @rtype: None
    """
    for parser in parsers:
        parser.add_argument('--config', type=str, required=True, help='Federation configuration file.')
        parser.add_argument('--out', type=str, default=None,
                            help='Output directory, defaults to the output_path of the configuration.')


def _create_server_parsers(subparsers) -> None:
    """
    Helper function to add the aggregation server and coordinator arguments.
    @param subparsers: Subparser to add arguments to.
    @type subparsers: Any
    @return: None
    @rtype: None
    """
    server_parser = subparsers.add_parser('server', help='Run the FedAvg/FedProx aggregation server.')
    coordinator_parser = subparsers.add_parser('coordinator', help='Run the GCML coordination server.')
    add_default_arguments(server_parser, coordinator_parser)


def _create_site_parser(subparsers) -> None:
    """
    Helper function to add site arguments.
    @param subparsers: Subparser to add arguments to.
    @type subparsers: Any
    @return: None
    @rtype: None
    """
    site_parser = subparsers.add_parser('site', help='Run one site.')
    add_default_arguments(site_parser)
    site_parser.add_argument('--id', type=int, required=True, dest='site_id', help='Configured site id.')
    site_parser.add_argument('--server', type=parse_address, default=None,
                             help='HOST:PORT of the server, defaults to the configured server address.')


def _create_simulate_parser(subparsers) -> None:
    simulate_parser = subparsers.add_parser('simulate', help='Run a complete federation on this machine.')
    add_default_arguments(simulate_parser)
    simulate_parser.add_argument('--socket', action='store_true',
                                 help='Run over loopback TCP with one site process per configured site.')


def _create_experiment_parsers(subparsers) -> None:
    """
    Helper function to add experiment, drop-out study and report arguments.
    @param subparsers: Subparser to add arguments to.
    @type subparsers: Any
    @return: None
    @rtype: None
    """
    experiment_parser = subparsers.add_parser('experiment', help='Run an experiment plan.')
    experiment_parser.add_argument('--plan', type=str, required=True)

    study_parser = subparsers.add_parser('dropout-study', help='Compare GCML under five drop-out scenarios.')
    add_default_arguments(study_parser)
    study_parser.add_argument('--reps', type=int, default=10)
    study_parser.add_argument('--workers', type=int, default=1)

    report_parser = subparsers.add_parser('report', help='Summarize the JSONL metric files of a directory.')
    report_parser.add_argument('--in', type=str, required=True, dest='input')


def _create_gen_data_parser(subparsers) -> None:
    gen_data_parser = subparsers.add_parser('gen-data', help='Generate a federation and export it as CSV.')
    gen_data_parser.add_argument('--layout', type=str, required=True)
    gen_data_parser.add_argument('--out', type=str, required=True)


def create_all_subparsers(subparsers: ArgumentParser):
    """
    Helper function to add all subparsers to an argparse object.
    @param subparsers: Subparser to add arguments to.
    @type subparsers: Any
    @return: None
    @rtype: ArgumentParser
    """
    _create_server_parsers(subparsers)
    _create_site_parser(subparsers)
    _create_simulate_parser(subparsers)
    _create_experiment_parsers(subparsers)
    _create_gen_data_parser(subparsers)
