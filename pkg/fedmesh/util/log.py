import logging
import os

from fedmesh.util.config.definitions import LogLevel

LOG_ENV_VARIABLE = 'FEDMESH_LOG'


def log_level_from_env() -> LogLevel:
    """
    Read the log level from `FEDMESH_LOG` (error, info or debug, case-insensitive). Unknown values fall back to INFO.
    @return: Configured log level.
    @rtype: LogLevel
    """
    name = os.environ.get(LOG_ENV_VARIABLE, 'info').strip().upper()
    level = LogLevel.__members__.get(name)
    if level is None:
        logging.getLogger(__name__).warning(f'Unknown {LOG_ENV_VARIABLE} value {name!r}, using INFO')
        level = LogLevel.INFO
    return level


def getLogger(module_name, level: LogLevel = LogLevel.INFO):
    logging.basicConfig(
        level=level.value,
        format='%(asctime)s %(levelname)s %(module)s - %(funcName)s: %(message)s',
    )
    return logging.getLogger(module_name)
