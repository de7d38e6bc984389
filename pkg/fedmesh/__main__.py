import argparse
import logging
import sys
from typing import Dict, List, Optional

from fedmesh.core.comm.protocol import ProtocolError
from fedmesh.core.node import FederationError
from fedmesh.experiment import ExperimentError
from fedmesh.launch import launch_coordinator, launch_dropout_study, launch_experiment, launch_gen_data, \
    launch_report, launch_server, launch_signature, launch_simulate, launch_site
from fedmesh.util.config import ConfigurationError
from fedmesh.util.config.arguments import create_all_subparsers
from fedmesh.util.log import log_level_from_env

__run_op_dict: Dict[str, launch_signature] = {
    'server': launch_server,
    'coordinator': launch_coordinator,
    'site': launch_site,
    'simulate': launch_simulate,
    'experiment': launch_experiment,
    'dropout-study': launch_dropout_study,
    'gen-data': launch_gen_data,
    'report': launch_report,
}

EXIT_OK = 0
EXIT_CONFIGURATION = 1
EXIT_RUNTIME = 2


class _ArgumentParser(argparse.ArgumentParser):
    """
    Usage errors exit with the configuration error code instead of argparse's default 2, which is reserved for
    runtime failures.
    """

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIGURATION, f'{self.prog}: error: {message}\n')


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point of the `fedmesh` executable.
    @param argv: Arguments without the program name, `sys.argv[1:]` when unset.
    @type argv: Optional[List[str]]
    @return: Exit code: 0 on success, 1 on usage or configuration errors, 2 on runtime and network failures.
    @rtype: int
    """
    logging.getLogger().setLevel(log_level_from_env().value)
    parser = _ArgumentParser(prog='fedmesh', description='Federated learning engine and simulator (fedmesh)')
    subparsers = parser.add_subparsers(dest='action', required=True)
    create_all_subparsers(subparsers)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_request:
        return int(exit_request.code or EXIT_OK)

    launch_fn: launch_signature = __run_op_dict[args.action]
    try:
        launch_fn(args)
    except ConfigurationError as error:
        logging.error(f'Configuration error: {error}')
        return EXIT_CONFIGURATION
    except (FederationError, ProtocolError, ExperimentError, OSError) as error:
        logging.error(f'Failed with reason: {error}')
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
