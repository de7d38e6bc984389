"""
Ways to run a federation: in-process (single-threaded, frames handed over in memory), as a local socket cluster with
sites hosted on threads or subprocesses, and the POOLED and INDIVIDUAL baselines that need no messages at all.
"""
import json
import os
import subprocess
import sys
import time
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import yaml

from fedmesh.core.client import SiteClient
from fedmesh.core.comm.transport import Address, FrameServer, InProcessTransport, SocketTransport, Transport
from fedmesh.core.coordinator import Coordinator
from fedmesh.core.federator import Federator
from fedmesh.core.node import FederationError, ServerNode
from fedmesh.core.trainer import LocalTrainer
from fedmesh.datasets.dataset import FederatedDataset
from fedmesh.datasets.synthetic import generate_federation
from fedmesh.nets.util.parameters import ParameterVector, load_checkpoint, save_checkpoint
from fedmesh.nets.util.reproducability import init_reproducibility
from fedmesh.util.config.config import ConfigurationError
from fedmesh.util.config.definitions import Algorithm
from fedmesh.util.config.federation import FederationConfig
from fedmesh.util.data_container import DataContainer, RoundMetrics, TrafficRecord, load_records
from fedmesh.util.log import getLogger
from fedmesh.util.timer import elapsed_timer

logger = getLogger(__name__)

_SERVER_ADDRESS: Address = ('server', 0)
_REGISTRATION_RETRY = 0.2


@dataclass
class FederationHistory:
    """
    Everything a finished run produced: the metric rows of all nodes, the final global model (centralized algorithms
    and POOLED), the final site models and, for GCML, the coordinator traffic log.
    """
    algorithm: Algorithm
    rounds: int
    records: List[RoundMetrics]
    global_params: Optional[ParameterVector] = None
    site_params: Dict[int, ParameterVector] = field(default_factory=dict)
    traffic: List[TrafficRecord] = field(default_factory=list)

    def final_rows(self) -> List[RoundMetrics]:
        """
        Rows describing the outcome of the last round: the global model row for FedAvg, FedProx and POOLED, every site
        row for GCML and INDIVIDUAL, whose outcome is the mean over sites.
        """
        last = [record for record in self.records if record.round == self.rounds]
        if self.algorithm.is_centralized():
            return [record for record in last if record.role == 'SERVER']
        if self.algorithm is Algorithm.pooled:
            return [record for record in last if record.role == 'POOLED']
        return [record for record in last if record.site_id is not None]

    @property
    def final_test_loss(self) -> float:
        return float(np.mean([record.test_loss for record in self.final_rows()]))

    @property
    def final_test_accuracy(self) -> Optional[float]:
        accuracies = [record.test_accuracy for record in self.final_rows()]
        if not accuracies or any(accuracy is None for accuracy in accuracies):
            return None
        return float(np.mean(accuracies))

    def save(self, directory: Union[str, Path], prefix: str) -> Path:
        """
        Write `<prefix>.jsonl`, the global checkpoint (if any) and the coordinator traffic log (if any) to `directory`.
        """
        directory = Path(directory)
        container = DataContainer(prefix, directory, RoundMetrics)
        container.extend(self.records)
        container.save()
        if self.global_params is not None:
            save_checkpoint(directory / 'global.params', self.global_params)
        if self.traffic:
            traffic = DataContainer('coordinator_traffic', directory, TrafficRecord)
            traffic.extend(self.traffic)
            traffic.save()
        return directory / container.file_name


def _ordered(config: FederationConfig, records: List[RoundMetrics]) -> List[RoundMetrics]:
    order = {site_id: index for index, site_id in enumerate(config.site_ids)}
    return sorted(records, key=lambda record: (record.round, -1 if record.site_id is None else order[record.site_id]))


def _central_node(config: FederationConfig, transport: Transport, dataset: FederatedDataset,
                  output_path: Optional[Path] = None) -> ServerNode:
    if config.algorithm.is_centralized():
        return Federator(config, transport, dataset, output_path)
    if config.algorithm is Algorithm.gcml:
        return Coordinator(config, transport, output_path)
    raise ConfigurationError(f'{config.algorithm.value} runs without a server', 'algorithm')


def _traffic_of(server: ServerNode) -> List[TrafficRecord]:
    return list(server.traffic.records) if isinstance(server, Coordinator) else []


def _history(config: FederationConfig, server: ServerNode, sites: List[SiteClient]) -> FederationHistory:
    records = list(server.exp_data.records)
    for site in sites:
        records.extend(site.exp_data.records)
    return FederationHistory(config.algorithm, config.rounds, _ordered(config, records),
                             getattr(server, 'global_params', None),
                             {site.site_id: site.params for site in sites},
                             _traffic_of(server))


def run_pooled(config: FederationConfig, dataset: FederatedDataset) -> FederationHistory:
    """
    POOLED baseline: one model trained on the union of all training splits, as if the data were centralized.
    """
    trainer = LocalTrainer(config.trainer)
    params = trainer.init_params()
    union_train, union_validation = dataset.union_train(), dataset.union_validation()
    records = []
    for round_id in range(1, config.rounds + 1):
        with elapsed_timer() as timer:
            params = trainer.train_rounds(params, union_train, shuffle_key=(0, round_id))
        train = trainer.evaluate(params, union_train)
        validation = trainer.evaluate(params, union_validation)
        test = trainer.evaluate(params, dataset.test)
        records.append(RoundMetrics(round_id, None, 'POOLED', train.loss, validation.loss, test.loss, test.accuracy,
                                    wall_ms=timer()))
    return FederationHistory(config.algorithm, config.rounds, records, global_params=params)


def run_individual(config: FederationConfig, dataset: FederatedDataset) -> FederationHistory:
    """
    INDIVIDUAL baseline: every site trains its own model on its own data and nothing is exchanged.
    """
    trainer = LocalTrainer(config.trainer)
    records, site_params = [], {}
    for index, site_id in enumerate(config.site_ids):
        params = trainer.init_params()
        train_data, validation_data = dataset.train[index], dataset.validation[index]
        for round_id in range(1, config.rounds + 1):
            with elapsed_timer() as timer:
                params = trainer.train_rounds(params, train_data, shuffle_key=(site_id, round_id))
            train = trainer.evaluate(params, train_data)
            validation = trainer.evaluate(params, validation_data)
            test = trainer.evaluate(params, dataset.test)
            records.append(RoundMetrics(round_id, site_id, 'INDIVIDUAL', train.loss, validation.loss, test.loss,
                                        test.accuracy, wall_ms=timer()))
        site_params[site_id] = params
    return FederationHistory(config.algorithm, config.rounds, _ordered(config, records), site_params=site_params)


def run_in_process(config: FederationConfig, output_path: Optional[Union[str, Path]] = None) -> FederationHistory:
    """
    Run a complete federation inside this process and thread. Every message is still encoded to and decoded from its
    wire frame, so the round logic is the one socket deployments execute.
    @param config: Federation configuration.
    @type config: FederationConfig
    @param output_path: Directory for `<experiment_prefix>.jsonl` and checkpoints; nothing is written when unset.
    @type output_path: Optional[Union[str, Path]]
    @return: The run history.
    @rtype: FederationHistory
    """
    init_reproducibility(config.seed)
    dataset = generate_federation(config.resolve_layout())
    if config.algorithm is Algorithm.pooled:
        history = run_pooled(config, dataset)
    elif config.algorithm is Algorithm.individual:
        history = run_individual(config, dataset)
    else:
        transport = InProcessTransport()
        server = _central_node(config, transport, dataset)
        transport.bind(_SERVER_ADDRESS, server.handle_frame)
        sites = []
        for site_id in config.site_ids:
            site = SiteClient(site_id, config, transport, dataset, listen_address=(f'site-{site_id}', 0))
            transport.bind(site.listen_address, site.handle_frame)
            site.register(_SERVER_ADDRESS)
            sites.append(site)
        server.run()
        history = _history(config, server, sites)
    if output_path is not None:
        history.save(output_path, config.experiment_prefix)
    return history


def _register_with_retry(site: SiteClient, server_address: Address, timeout: float) -> None:
    deadline = time.monotonic() + timeout
    while True:
        try:
            site.register(server_address)
            return
        except FederationError:
            if time.monotonic() >= deadline:
                raise
            time.sleep(_REGISTRATION_RETRY)


def _shutdown_deadline(config: FederationConfig) -> float:
    return config.registration_timeout + config.rounds * config.round_timeout


def serve_site(config: FederationConfig, site_id: int, server_address: Optional[Address] = None,
               output_path: Optional[Union[str, Path]] = None) -> SiteClient:
    """
    Host one site over TCP until the server broadcasts SHUTDOWN. The site listens on its configured address (port 0
    picks a free port) and registers with the server under the address it actually bound.
    @param config: Federation configuration.
    @type config: FederationConfig
    @param site_id: Configured id of the site to host.
    @type site_id: int
    @param server_address: Server to register with, the configured server address when unset.
    @type server_address: Optional[Address]
    @param output_path: Directory for `site_<id>.jsonl` and `site_<id>.params`.
    @type output_path: Optional[Union[str, Path]]
    @return: The stopped site.
    @rtype: SiteClient
    """
    config.site(site_id)
    output_path = Path(output_path) if output_path is not None else None
    dataset = generate_federation(config.resolve_layout())
    site = SiteClient(site_id, config, SocketTransport(config.read_timeout), dataset, output_path=output_path,
                      transfer_timeout=config.round_timeout)
    frame_server = FrameServer(config.site(site_id).address(), site.handle_frame, config.read_timeout).start()
    site.listen_address = frame_server.address
    try:
        _register_with_retry(site, server_address or config.server.address(), config.registration_timeout)
        if not site.stopped.wait(_shutdown_deadline(config)):
            raise FederationError(f'site {site_id} received no SHUTDOWN')
    finally:
        frame_server.stop()
        site.exp_data.save()
        if output_path is not None:
            save_checkpoint(output_path / f'site_{site_id}.params', site.params)
    return site


def serve_central(config: FederationConfig, output_path: Optional[Union[str, Path]] = None,
                  frame_server_ready=None) -> ServerNode:
    """
    Host the aggregation server (FedAvg, FedProx) or the coordinator (GCML) over TCP for a full run.
    @param frame_server_ready: Optional callback receiving the bound address once the server listens.
    @type frame_server_ready: Optional[Callable[[Address], None]]
    """
    output_path = Path(output_path) if output_path is not None else None
    dataset = generate_federation(config.resolve_layout())
    node = _central_node(config, SocketTransport(config.read_timeout), dataset, output_path)
    frame_server = FrameServer(config.server.address(), node.handle_frame, config.read_timeout).start()
    logger.info(f'{node.id} listening on {frame_server.address[0]}:{frame_server.address[1]}')
    try:
        if frame_server_ready is not None:
            frame_server_ready(frame_server.address)
        node.run()
    finally:
        frame_server.stop()
    return node


def _require_centralized(config: FederationConfig) -> None:
    if not config.algorithm.is_centralized():
        raise ConfigurationError(f'the aggregation server runs FedAvg or FedProx, got {config.algorithm.value}',
                                 'algorithm')


def _require_gcml(config: FederationConfig) -> None:
    if config.algorithm is not Algorithm.gcml:
        raise ConfigurationError(f'the coordinator runs GCML, got {config.algorithm.value}', 'algorithm')


def run_centralized_server(config: FederationConfig, output_path: Optional[Union[str, Path]] = None) -> Federator:
    _require_centralized(config)
    return serve_central(config, output_path)


def run_coordinator(config: FederationConfig, output_path: Optional[Union[str, Path]] = None) -> Coordinator:
    _require_gcml(config)
    return serve_central(config, output_path)


def run_site_centralized(config: FederationConfig, site_id: int, server_address: Optional[Address] = None,
                         output_path: Optional[Union[str, Path]] = None) -> SiteClient:
    _require_centralized(config)
    return serve_site(config, site_id, server_address, output_path)


def run_site_gcml(config: FederationConfig, site_id: int, server_address: Optional[Address] = None,
                  output_path: Optional[Union[str, Path]] = None) -> SiteClient:
    _require_gcml(config)
    return serve_site(config, site_id, server_address, output_path)


def _write_effective_config(config: FederationConfig, directory: Path) -> Path:
    data = json.loads(config.to_json())  # pylint: disable=no-member
    data['layout'] = json.loads(config.resolve_layout().to_json())  # pylint: disable=no-member
    data.pop('base_path', None)
    data.pop('config_path', None)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / 'effective_config.yaml'
    with open(path, 'w') as file_handle:
        yaml.safe_dump(data, file_handle, sort_keys=False)
    return path


def _spawn_sites(config: FederationConfig, server_address: Address, output_path: Path) -> List[subprocess.Popen]:
    config_path = _write_effective_config(config, output_path)
    environment = dict(os.environ)
    package_root = str(Path(__file__).resolve().parents[2])
    environment['PYTHONPATH'] = os.pathsep.join(filter(None, [package_root, environment.get('PYTHONPATH')]))
    processes = []
    for site_id in config.site_ids:
        command = [sys.executable, '-m', 'fedmesh', 'site', '--config', str(config_path), '--id', str(site_id),
                   '--server', f'{server_address[0]}:{server_address[1]}', '--out', str(output_path)]
        processes.append(subprocess.Popen(command, env=environment))  # pylint: disable=consider-using-with
    return processes


def run_local_cluster(config: FederationConfig, spawn: str = 'thread',
                      output_path: Optional[Union[str, Path]] = None) -> FederationHistory:
    """
    Run a federation over loopback TCP. The server runs in this thread; sites run on threads of this process
    (`spawn='thread'`) or as `fedmesh site` subprocesses (`spawn='process'`). With the same configuration and seed the
    trajectory equals the one of `run_in_process`.
    @return: The run history. In process mode the site rows and models are read back from the output directory.
    @rtype: FederationHistory
    """
    if spawn not in ('thread', 'process'):
        raise ValueError(f"spawn must be 'thread' or 'process', got {spawn!r}")
    if not (config.algorithm.is_centralized() or config.algorithm is Algorithm.gcml):
        return run_in_process(config, output_path)
    init_reproducibility(config.seed)
    output_path = Path(output_path if output_path is not None else config.output_directory())
    if spawn == 'thread':
        return _run_thread_cluster(config, output_path)
    return _run_process_cluster(config, output_path)


def _run_thread_cluster(config: FederationConfig, output_path: Path) -> FederationHistory:
    sites: List[SiteClient] = []

    def start_sites(address: Address):
        pool.map_async(lambda site_id: sites.append(serve_site(config, site_id, address, output_path)),
                       config.site_ids, error_callback=lambda error: logger.error(f'Site failed: {error}'))

    with ThreadPool(len(config.site_ids)) as pool:
        server = serve_central(config, output_path, start_sites)
        pool.close()
        pool.join()
    history = _history(config, server, sorted(sites, key=lambda site: config.site_index(site.site_id)))
    history.save(output_path, config.experiment_prefix)
    return history


def _run_process_cluster(config: FederationConfig, output_path: Path) -> FederationHistory:
    processes: List[subprocess.Popen] = []

    def start_sites(address: Address):
        processes.extend(_spawn_sites(config, address, output_path))

    try:
        server = serve_central(config, output_path, start_sites)
    finally:
        for process in processes:
            try:
                process.wait(timeout=config.read_timeout)
            except subprocess.TimeoutExpired:
                process.kill()
    failed = [site_id for site_id, process in zip(config.site_ids, processes) if process.returncode != 0]
    if failed:
        raise FederationError(f'site processes {failed} exited with an error')
    records = list(server.exp_data.records)
    site_params = {}
    for site_id in config.site_ids:
        records.extend(load_records(output_path / f'site_{site_id}.jsonl'))
        site_params[site_id] = load_checkpoint(output_path / f'site_{site_id}.params')
    traffic = _traffic_of(server)
    return FederationHistory(config.algorithm, config.rounds, _ordered(config, records),
                             getattr(server, 'global_params', None), site_params, traffic)
