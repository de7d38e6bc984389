from pathlib import Path
from typing import List, Optional

from fedmesh.core.comm.protocol import GlobalModel, RoundPlan, SubmitUpdate
from fedmesh.core.comm.transport import Transport
from fedmesh.core.node import FederationError, ServerNode
from fedmesh.core.trainer import LocalTrainer
from fedmesh.datasets.dataset import FederatedDataset
from fedmesh.nets.util.parameters import ParameterVector, save_checkpoint
from fedmesh.strategy.aggregation import SiteUpdate, fedavg_aggregate
from fedmesh.strategy.client_selection import dropout_step
from fedmesh.util.data_container import RoundMetrics
from fedmesh.util.timer import elapsed_timer


class Federator(ServerNode):
    """
    Aggregation server of FedAvg and FedProx. Every round it advances the drop-out walk, sends the global model to the
    active sites, collects their updates and replaces the global model by the case-weighted mean of what arrived.
    """
    global_params: ParameterVector

    def __init__(self, config, transport: Transport, dataset: FederatedDataset, output_path: Optional[Path] = None):
        super().__init__('server', config, transport, output_path)
        self.trainer = LocalTrainer(config.trainer)
        self.global_params = self.trainer.init_params()
        self.test_data = dataset.test
        self.val_data = dataset.union_validation()

    def exec_round(self, round_id: int) -> RoundMetrics:
        with elapsed_timer() as timer:
            self.dropout = dropout_step(self.dropout, self.rng)
            active = self.update_statuses()
            dropped = [site_id for site_id in self.config.site_ids if site_id not in active]
            calls = self.site_calls(active, GlobalModel(round_id, self.global_params)) + \
                self.site_calls(dropped, RoundPlan(round_id, ()))
            exchanges = self.message_many(calls, timeout=self.config.round_timeout)

            updates: List[SiteUpdate] = []
            for site_id, exchange in zip(active, exchanges):
                reply = exchange.reply
                if isinstance(reply, SubmitUpdate) and reply.round == round_id and reply.site_id == site_id:
                    updates.append(SiteUpdate(site_id, reply.case_count, reply.params))
                else:
                    cause = exchange.error or 'no update'
                    self.logger.warning(f'[Round {round_id:>3}] Site {site_id} treated as dropped ({cause})')
            if not updates:
                raise FederationError(f'no update received in round {round_id}')
            self.global_params = fedavg_aggregate(updates)
        return self._record_round(round_id, len(updates), len(dropped), timer())

    def _record_round(self, round_id: int, update_count: int, dropped_count: int, wall_ms: float) -> RoundMetrics:
        test = self.trainer.evaluate(self.global_params, self.test_data)
        validation = self.trainer.evaluate(self.global_params, self.val_data)
        sent, received = self.pop_round_bytes(round_id)
        record = RoundMetrics(round_id, None, 'SERVER', None, validation.loss, test.loss, test.accuracy, sent, received,
                              wall_ms)
        self.exp_data.append(record)
        self.logger.info(f'[Round {round_id:>3}] {update_count} updates, {dropped_count} dropped, '
                         f'test_loss={test.loss:.6f} ({wall_ms:.1f} ms)')
        return record

    def save_data(self) -> None:
        super().save_data()
        if self.output_path is not None:
            save_checkpoint(Path(self.output_path) / 'global.params', self.global_params)
