import threading
from pathlib import Path
from typing import Dict, Optional

from fedmesh.core.comm.protocol import GlobalModel, ModelTransfer, PlanEntry, Register, Role, RoundPlan, Shutdown, \
    StatusUpdate, SubmitUpdate, WireMessage
from fedmesh.core.comm.transport import Address, Transport
from fedmesh.core.node import FederationError, Node
from fedmesh.core.trainer import LocalTrainer
from fedmesh.datasets.dataset import FederatedDataset
from fedmesh.nets.util.parameters import ParameterVector
from fedmesh.strategy.aggregation import gcml_merge
from fedmesh.strategy.optimization import dcml_step
from fedmesh.util.config.definitions import Algorithm, DropoutMode
from fedmesh.util.config.federation import FederationConfig
from fedmesh.util.data_container import DataContainer, RoundMetrics
from fedmesh.util.timer import elapsed_timer


class SiteClient(Node):
    """
    Participating site. A site owns its data partitions and local model, answers GLOBAL_MODEL messages of an
    aggregation server and ROUND_PLAN messages of a coordinator, and exchanges MODEL_TRANSFER messages with its GCML
    peers.
    """
    params: ParameterVector

    def __init__(self, site_id: int, config: FederationConfig, transport: Transport, dataset: FederatedDataset,
                 listen_address: Optional[Address] = None, output_path: Optional[Path] = None,
                 transfer_timeout: float = 0.0):
        super().__init__(f'site_{site_id}', config, transport)
        self.site_id = site_id
        index = config.site_index(site_id)
        self.train_data = dataset.train[index]
        self.val_data = dataset.validation[index]
        self.test_data = dataset.test
        self.trainer = LocalTrainer(config.trainer)
        self.params = self.trainer.init_params()
        self.last_global = self.params
        self.listen_address = listen_address or config.site(site_id).address()
        self.transfer_timeout = transfer_timeout
        self.was_dropped = False
        self.stopped = threading.Event()
        self._transfers: Dict[int, ModelTransfer] = {}
        self._transfer_arrived = threading.Condition()
        self._pending: Optional[RoundMetrics] = None
        self.exp_data = DataContainer(self.id, output_path, RoundMetrics, append_mode=output_path is not None)

    @property
    def case_count(self) -> int:
        return len(self.train_data)

    def register(self, server_address: Address) -> None:
        """
        Announce this site to the aggregation server or coordinator.
        """
        message = Register(self.site_id, self.listen_address[0], self.listen_address[1], self.case_count)
        exchange = self.message(server_address, message, expect_reply=False)
        if not exchange.ok:
            raise FederationError(f'site {self.site_id} could not register at {server_address[0]}:'
                                  f'{server_address[1]}: {exchange.error}')

    def dispatch(self, message: WireMessage) -> Optional[WireMessage]:
        if isinstance(message, GlobalModel):
            return self.centralized_round(message)
        if isinstance(message, RoundPlan):
            entry = message.entry_for(self.site_id)
            if entry is None:
                return self.dropped_round(message.round)
            return self.gcml_round(message, entry)
        if isinstance(message, ModelTransfer):
            self.receive_transfer(message)
        elif isinstance(message, Shutdown):
            self.logger.info(f'[{self.id}] Shutting down: {message.reason}')
            self.stopped.set()
        else:
            self.logger.warning(f'[{self.id}] Ignoring unexpected {message.TYPE.name}')
        return None

    def after_reply(self, message: WireMessage, reply: WireMessage) -> None:
        pending, self._pending = self._pending, None
        if pending is None:
            return
        pending.bytes_sent, pending.bytes_received = self.pop_round_bytes(pending.round)
        self.exp_data.append(pending)

    def _stage_metrics(self, round_id: int, role: str, wall_ms: float) -> None:
        train = self.trainer.evaluate(self.params, self.train_data)
        validation = self.trainer.evaluate(self.params, self.val_data)
        test = self.trainer.evaluate(self.params, self.test_data)
        self._pending = RoundMetrics(round_id, self.site_id, role, train.loss, validation.loss, test.loss,
                                     test.accuracy, wall_ms=wall_ms)
        self.logger.debug(f'[{self.id}] [Round {round_id:>3}] {role} val_loss={validation.loss:.6f}')

    def _proximal_strength(self) -> float:
        return self.config.mu if self.config.algorithm is Algorithm.fedprox else 0.0

    def _local_training(self, round_id: int, w_global: Optional[ParameterVector] = None, mu: float = 0.0) -> None:
        self.params = self.trainer.train_rounds(self.params, self.train_data, mu, w_global,
                                                shuffle_key=(self.site_id, round_id))

    def centralized_round(self, message: GlobalModel) -> SubmitUpdate:
        """
        FedAvg / FedProx participation: adopt the global model (unless rejoining without it), train locally and send
        the update back.
        """
        with elapsed_timer() as timer:
            if not self.was_dropped or self.config.rejoin_with_global:
                self.params = message.params
            self.last_global = message.params
            self._local_training(message.round, message.params, self._proximal_strength())
            self.was_dropped = False
        self._stage_metrics(message.round, 'PARTICIPANT', timer())
        return SubmitUpdate(self.site_id, message.round, self.case_count, self.params)

    def dropped_round(self, round_id: int) -> StatusUpdate:
        """
        A round this site sits out. Disconnected sites keep training on their own data, shut down sites do nothing.
        """
        with elapsed_timer() as timer:
            if self.config.dropout.mode is DropoutMode.disconnect:
                self._local_training(round_id, self.last_global, self._proximal_strength())
            self.was_dropped = True
        self._stage_metrics(round_id, 'DROPPED', timer())
        return StatusUpdate(self.site_id, round_id, False, self._pending.val_loss)

    def receive_transfer(self, message: ModelTransfer) -> None:
        with self._transfer_arrived:
            self._transfers[message.round] = message
            self._transfer_arrived.notify_all()

    def _await_transfer(self, round_id: int, sender_id: int) -> Optional[ModelTransfer]:
        with self._transfer_arrived:
            self._transfer_arrived.wait_for(lambda: round_id in self._transfers, self.transfer_timeout)
            transfer = self._transfers.pop(round_id, None)
            for stale in [key for key in self._transfers if key < round_id]:
                del self._transfers[stale]
        if transfer is not None and transfer.sender_id != sender_id:
            self.logger.warning(f'[{self.id}] Round {round_id} transfer came from site {transfer.sender_id}, '
                                f'expected site {sender_id}')
            return None
        return transfer

    def gcml_round(self, plan: RoundPlan, entry: PlanEntry) -> StatusUpdate:
        """
        One GCML round in the role the coordinator assigned. A sender pushes its model to its peer and trains, a
        receiver learns mutually with the incoming model and merges the pair, an idle site only trains.
        """
        round_id = plan.round
        role = entry.role
        self.was_dropped = False
        with elapsed_timer() as timer:
            if role is Role.SENDER:
                self._send_model(plan, entry)
                self._local_training(round_id)
            elif role is Role.RECEIVER:
                transfer = self._await_transfer(round_id, entry.peer_id)
                if transfer is None:
                    self.logger.warning(f'[{self.id}] No model from site {entry.peer_id} in round {round_id}, '
                                        f'proceeding as idle')
                    role = Role.IDLE
                    self._local_training(round_id)
                else:
                    self._mutual_learning(transfer)
                    if self.config.receiver_local_training:
                        self._local_training(round_id)
            else:
                self._local_training(round_id)
        self._stage_metrics(round_id, role.name, timer())
        return StatusUpdate(self.site_id, round_id, True, self._pending.val_loss)

    def _send_model(self, plan: RoundPlan, entry: PlanEntry) -> None:
        peer = plan.entry_for(entry.peer_id)
        if peer is None:
            self.logger.warning(f'[{self.id}] Round {plan.round} plan lists no entry for peer {entry.peer_id}')
            return
        validation_loss = self.trainer.evaluate(self.params, self.val_data).loss
        transfer = ModelTransfer(plan.round, self.site_id, validation_loss, self.params)
        exchange = self.message(peer.address, transfer, expect_reply=False, peer=peer.site_id)
        if not exchange.ok:
            self.logger.warning(f'[{self.id}] Could not reach receiver {peer.site_id}: {exchange.error}')

    def _mutual_learning(self, transfer: ModelTransfer) -> None:
        w_r, w_s = dcml_step(self.params, transfer.params, self.train_data, self.config.lam,
                             self.trainer.learning_rate, self.trainer, self.config.kl_cap)
        v_r = self.trainer.evaluate(w_r, self.val_data).loss
        v_s = self.trainer.evaluate(w_s, self.val_data).loss
        self.params = gcml_merge(w_r, w_s, v_r, v_s, self.config.merge_mode)
